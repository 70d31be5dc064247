//! Plane-wave delay-and-sum reconstruction and B-mode display.

use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{BeamformedSequence, ImagingGrid, RfSequence};
use crate::error::{Error, Result};
use crate::motion::AnalyticSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Apodization {
    Rectangular,
    Hann,
}

impl Apodization {
    /// Weight for an element at normalized offset `u = (x − x_e) / half_aperture`, `|u| ≤ 1`.
    fn weight(self, u: f64) -> f64 {
        match self {
            Apodization::Rectangular => 1.0,
            Apodization::Hann => 0.5 * (1.0 + (std::f64::consts::PI * u).cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DasConfig {
    pub f_number: f64,
    pub apodization: Apodization,
    pub grid: ImagingGrid,
}

impl DasConfig {
    /// f/1.5 Hann on the given grid.
    pub fn with_grid(grid: ImagingGrid) -> Self {
        Self {
            f_number: 1.5,
            apodization: Apodization::Hann,
            grid,
        }
    }
}

/// One receive tap: element, weight, integer sample index and interpolation fraction.
#[derive(Debug, Clone, Copy)]
struct Tap {
    element: u32,
    index: u32,
    frac: f64,
    weight: f64,
}

/// Delay-and-sum of every frame onto `cfg.grid`.
///
/// Pixel `(x, z)` sums `w_e · rf[e](f_s (z + sqrt(z² + (x − x_e)²)) / c0)` over
/// elements with `|x − x_e| ≤ z / (2 F#)`, linearly interpolating between
/// samples. Taps whose delay falls outside the record contribute nothing.
/// Element order is fixed, so output is reproducible bit for bit.
pub fn das_beamform(rf: &RfSequence, cfg: &DasConfig) -> Result<BeamformedSequence> {
    if !(cfg.f_number > 0.0 && cfg.f_number.is_finite()) {
        return Err(Error::config("das.f_number", "must be positive"));
    }
    let probe = rf.probe();
    let grid = &cfg.grid;
    let half_pitch = probe.pitch / 2.0;
    let (x_lo, x_hi) = (probe.element_x(0) - half_pitch, probe.element_x(probe.element_count - 1) + half_pitch);
    if grid.x()[0] < x_lo || grid.x()[grid.width() - 1] > x_hi {
        return Err(Error::config(
            "das.grid.x",
            format!("grid must lie within the probe span [{x_lo:e}, {x_hi:e}] m"),
        ));
    }
    if grid.z()[0] <= 0.0 {
        return Err(Error::config("das.grid.z", "depths must be positive"));
    }

    let (frames, elements, n_samples) = rf.samples().dim();
    let elem_x = probe.element_positions();
    let to_samples = probe.sampling_frequency / probe.speed_of_sound;

    // delay table shared across frames, pixel order [lateral][axial]
    let taps: Vec<Vec<Tap>> = grid
        .x()
        .iter()
        .flat_map(|&x| grid.z().iter().map(move |&z| (x, z)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(x, z)| {
            let half = z / (2.0 * cfg.f_number);
            let mut row = Vec::new();
            for (e, &xe) in elem_x.iter().enumerate().take(elements) {
                let dx = x - xe;
                if dx.abs() > half {
                    continue;
                }
                let pos = to_samples * (z + z.hypot(dx));
                let index = pos.floor();
                if index < 0.0 || index as usize + 1 >= n_samples {
                    continue;
                }
                row.push(Tap {
                    element: e as u32,
                    index: index as u32,
                    frac: pos - index,
                    weight: cfg.apodization.weight(dx / half),
                });
            }
            row
        })
        .collect();

    let (w, h) = (grid.width(), grid.height());
    let mut out = Array3::zeros((frames, w, h));
    let data = rf.samples();
    for (n, mut frame) in out.axis_iter_mut(Axis(0)).enumerate() {
        let src = data.index_axis(Axis(0), n);
        frame
            .as_slice_mut()
            .expect("standard layout")
            .par_iter_mut()
            .zip(taps.par_iter())
            .for_each(|(px, row)| {
                let mut acc = 0.0;
                for tap in row {
                    let ch = src.index_axis(Axis(0), tap.element as usize);
                    let i = tap.index as usize;
                    let v = ch[i] + tap.frac * (ch[i + 1] - ch[i]);
                    acc += tap.weight * v;
                }
                *px = acc;
            });
    }
    BeamformedSequence::new(out, grid.clone(), *rf.timing(), *probe)
}

/// Log-compressed envelope images in `[0, 1]`, `[frame, lateral, axial]`.
///
/// Each frame is normalized to its own peak (which maps to exactly 1.0) and
/// values more than `dynamic_range_db` below it clamp to 0. An all-zero
/// frame stays zero.
pub fn envelope_bmode(bf: &BeamformedSequence, dynamic_range_db: f64) -> Result<Array3<f64>> {
    if !(dynamic_range_db > 0.0 && dynamic_range_db.is_finite()) {
        return Err(Error::config("bmode.dynamic_range_db", "must be positive"));
    }
    let data = bf.samples();
    let (_, _, h) = data.dim();
    let plan = AnalyticSignal::new(h)?;
    let mut env = Array3::zeros(data.dim());
    for (mut dst, src) in env.lanes_mut(Axis(2)).into_iter().zip(data.lanes(Axis(2))) {
        let z = plan.compute(&src.to_vec());
        for (d, v) in dst.iter_mut().zip(&z) {
            *d = v.norm();
        }
    }
    for mut frame in env.axis_iter_mut(Axis(0)) {
        let peak = frame.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        frame.mapv_inplace(|v| {
            if v == 0.0 {
                return 0.0;
            }
            let db = 20.0 * (v / peak).log10();
            ((db + dynamic_range_db) / dynamic_range_db).clamp(0.0, 1.0)
        });
    }
    Ok(env)
}
