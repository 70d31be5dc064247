//! Analytic signal, IQ demodulation and Loupas 2-D autocorrelation motion estimation.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView3, Axis, Zip};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::domain::{
    BeamformedSequence, DisplacementSequence, ImagingGrid, IqSequence, RfSequence, SequenceTiming,
};
use crate::error::{Error, Result};

/// Planned FFT pair for computing analytic signals of a fixed column length.
pub struct AnalyticSignal {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl AnalyticSignal {
    pub fn new(len: usize) -> Result<Self> {
        if len < 4 {
            return Err(Error::Shape(format!(
                "analytic signal needs at least 4 samples, got {len}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Zeroes negative frequencies and doubles positive ones; DC and the
    /// Nyquist bin (even lengths) are kept as-is.
    pub fn compute(&self, column: &[f64]) -> Vec<Complex64> {
        assert_eq!(column.len(), self.len, "column length does not match plan");
        let n = self.len;
        let mut buf: Vec<Complex64> = column.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let half = n / 2;
        let positive_end = if n % 2 == 0 { half } else { half + 1 };
        for v in &mut buf[1..positive_end] {
            *v *= 2.0;
        }
        for v in &mut buf[half + 1..] {
            *v = Complex64::new(0.0, 0.0);
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        buf
    }
}

/// Analytic signal of a real column as an `(i, q)` pair.
pub fn analytic_signal(column: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let plan = AnalyticSignal::new(column.len())?;
    let z = plan.compute(column);
    Ok((z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect()))
}

/// Analytic signal along the last axis of `[frame, column, axial]` data,
/// mixed down by `exp(−j 2π f_c n / f_s)`.
pub fn demodulate(
    data: ArrayView3<f64>,
    carrier: f64,
    sampling_frequency: f64,
    grid: ImagingGrid,
    timing: SequenceTiming,
) -> Result<IqSequence> {
    let (frames, cols, len) = data.dim();
    let plan = AnalyticSignal::new(len)?;
    let w = 2.0 * PI * carrier / sampling_frequency;
    let mixer: Vec<Complex64> = (0..len).map(|n| Complex64::from_polar(1.0, -w * n as f64)).collect();
    let mut i = Array3::zeros((frames, cols, len));
    let mut q = Array3::zeros((frames, cols, len));
    Zip::from(i.lanes_mut(Axis(2)))
        .and(q.lanes_mut(Axis(2)))
        .and(data.lanes(Axis(2)))
        .par_for_each(|mut i_col, mut q_col, col| {
            let column: Vec<f64> = col.to_vec();
            let z = plan.compute(&column);
            for (k, (zi, m)) in z.iter().zip(&mixer).enumerate() {
                let b = zi * m;
                i_col[k] = b.re;
                q_col[k] = b.im;
            }
        });
    IqSequence::new(i, q, carrier, sampling_frequency, grid, timing)
}

/// IQ data of beamformed RF, using the axial grid's equivalent sampling rate.
pub fn beamformed_to_iq(bf: &BeamformedSequence) -> Result<IqSequence> {
    demodulate(
        bf.samples().view(),
        bf.probe().center_frequency,
        bf.axial_sampling_frequency(),
        bf.grid().clone(),
        *bf.timing(),
    )
}

/// Grid for per-channel processing: element positions laterally and the
/// nominal round-trip depth `c0 n / (2 f_s)` of each sample axially.
pub fn channel_grid(rf: &RfSequence) -> Result<ImagingGrid> {
    let probe = rf.probe();
    let n = rf.samples().dim().2;
    let dz = probe.speed_of_sound / (2.0 * probe.sampling_frequency);
    ImagingGrid::new(probe.element_positions(), (0..n).map(|k| k as f64 * dz).collect())
}

pub fn rf_to_iq(rf: &RfSequence) -> Result<IqSequence> {
    let probe = rf.probe();
    demodulate(
        rf.samples().view(),
        probe.center_frequency,
        probe.sampling_frequency,
        channel_grid(rf)?,
        *rf.timing(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoupasConfig {
    /// Axial kernel length in samples.
    pub kernel_length: usize,
    /// Frames per ensemble.
    pub ensemble_length: usize,
    pub center_frequency: f64,
    /// Axial sampling frequency of the IQ data.
    pub sampling_frequency: f64,
    pub speed_of_sound: f64,
}

impl LoupasConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_length < 2 {
            return Err(Error::config("loupas.kernel_length", "must be at least 2"));
        }
        if self.ensemble_length < 2 {
            return Err(Error::config("loupas.ensemble_length", "must be at least 2"));
        }
        for (name, v) in [
            ("loupas.center_frequency", self.center_frequency),
            ("loupas.sampling_frequency", self.sampling_frequency),
            ("loupas.speed_of_sound", self.speed_of_sound),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be positive"));
            }
        }
        Ok(())
    }

    /// Settings matching an IQ sequence's own carrier and sampling rate.
    pub fn for_iq(iq: &IqSequence, speed_of_sound: f64, kernel_length: usize) -> Self {
        Self {
            kernel_length,
            ensemble_length: 2,
            center_frequency: iq.carrier,
            sampling_frequency: iq.sampling_frequency,
            speed_of_sound,
        }
    }

    pub fn wavelength(&self) -> f64 {
        self.speed_of_sound / self.center_frequency
    }
}

/// Loupas estimator on baseband IQ data.
///
/// Output frame `k` is the displacement from frame `k` to `k + N − 1`
/// divided into `N − 1` steps (for the default `N = 2`: frame `k` to `k + 1`),
/// so `t − N + 1` frames come out. Each axial output sample uses the
/// `M`-sample window centered on it, clamped to the column.
pub fn loupas_displacement(iq: &IqSequence, cfg: &LoupasConfig) -> Result<DisplacementSequence> {
    cfg.validate()?;
    let (frames, cols, len) = iq.dim();
    let n_ens = cfg.ensemble_length;
    let m = cfg.kernel_length;
    if frames < n_ens {
        return Err(Error::Shape(format!(
            "Loupas needs at least {n_ens} frames, got {frames}"
        )));
    }
    if len < m {
        return Err(Error::Shape(format!(
            "Loupas kernel of {m} samples exceeds column length {len}"
        )));
    }
    let out_frames = frames - n_ens + 1;
    let limit = cfg.wavelength() / 4.0;
    let scale = cfg.speed_of_sound / (4.0 * PI);
    let fast_to_hz = cfg.sampling_frequency / (2.0 * PI);

    let mut d = Array3::zeros((out_frames, cols, len));
    let mut low = Array3::from_elem((out_frames, cols, len), false);
    let (i_all, q_all) = (iq.i(), iq.q());

    d.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(low.axis_iter_mut(Axis(0)).into_par_iter())
        .enumerate()
        .for_each(|(k, (mut d_frame, mut low_frame))| {
            for c in 0..cols {
                let col_i: Vec<_> = (0..n_ens).map(|e| i_all.slice(ndarray::s![k + e, c, ..])).collect();
                let col_q: Vec<_> = (0..n_ens).map(|e| q_all.slice(ndarray::s![k + e, c, ..])).collect();
                for z in 0..len {
                    let start = z.saturating_sub(m / 2).min(len - m);
                    let end = start + m;

                    let (mut slow_num, mut slow_den) = (0.0, 0.0);
                    for e in 0..n_ens - 1 {
                        let (i0, q0, i1, q1) = (&col_i[e], &col_q[e], &col_i[e + 1], &col_q[e + 1]);
                        let (mut num, mut den) = (0.0, 0.0);
                        for s in start..end {
                            num += i0[s] * q1[s] - q0[s] * i1[s];
                            den += i0[s] * i1[s] + q0[s] * q1[s];
                        }
                        slow_num += num;
                        slow_den += den;
                    }

                    let (mut fast_num, mut fast_den) = (0.0, 0.0);
                    for e in 0..n_ens {
                        let (ic, qc) = (&col_i[e], &col_q[e]);
                        let (mut num, mut den) = (0.0, 0.0);
                        for s in start..end - 1 {
                            num += ic[s] * qc[s + 1] - qc[s] * ic[s + 1];
                            den += ic[s] * ic[s + 1] + qc[s] * qc[s + 1];
                        }
                        fast_num += num;
                        fast_den += den;
                    }

                    if slow_num == 0.0 && slow_den == 0.0 {
                        d_frame[[c, z]] = 0.0;
                        low_frame[[c, z]] = true;
                        continue;
                    }
                    let phi_slow = slow_num.atan2(slow_den);
                    let phi_fast = fast_num.atan2(fast_den);
                    let f_inst = cfg.center_frequency + phi_fast * fast_to_hz;
                    if !(f_inst > 0.0) {
                        d_frame[[c, z]] = 0.0;
                        low_frame[[c, z]] = true;
                        continue;
                    }
                    let est = scale * phi_slow / f_inst;
                    if est.abs() > limit {
                        d_frame[[c, z]] = limit.copysign(est);
                        low_frame[[c, z]] = true;
                    } else {
                        d_frame[[c, z]] = est;
                    }
                }
            }
        });

    DisplacementSequence::new(
        d,
        low,
        iq.grid().clone(),
        iq.timing().with_frames(out_frames),
        cfg.wavelength(),
    )
}

/// Loupas directly on per-element channel data, one column per element.
pub fn loupas_on_raw(rf: &RfSequence, kernel_length: usize) -> Result<DisplacementSequence> {
    if rf.samples().dim().0 < 2 {
        return Err(Error::Shape("Loupas needs at least 2 frames".into()));
    }
    let iq = rf_to_iq(rf)?;
    let cfg = LoupasConfig::for_iq(&iq, rf.probe().speed_of_sound, kernel_length);
    loupas_displacement(&iq, &cfg)
}

/// Loupas on beamformed RF.
pub fn loupas_on_beamformed(bf: &BeamformedSequence, kernel_length: usize) -> Result<DisplacementSequence> {
    let iq = beamformed_to_iq(bf)?;
    let cfg = LoupasConfig::for_iq(&iq, bf.probe().speed_of_sound, kernel_length);
    loupas_displacement(&iq, &cfg)
}

/// Per-column envelope `|analytic|` of `[column, axial]` data.
pub fn envelope(data: &Array2<f64>) -> Result<Array2<f64>> {
    let (_, len) = data.dim();
    let plan = AnalyticSignal::new(len)?;
    let mut out = Array2::zeros(data.dim());
    for (mut o, col) in out.outer_iter_mut().zip(data.outer_iter()) {
        let z = plan.compute(&col.to_vec());
        for (dst, v) in o.iter_mut().zip(&z) {
            *dst = v.norm();
        }
    }
    Ok(out)
}
