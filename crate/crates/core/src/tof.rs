//! Time-of-flight shear speed estimation.
//!
//! Each lateral column in the region of interest yields one arrival time
//! (the frame where the depth-averaged wave signal peaks). A straight line
//! `t = a + x / c` fitted through `(x, t)` gives the speed.

use serde::{Deserialize, Serialize};

use crate::domain::DisplacementSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToFConfig {
    /// Lateral region of interest `[x_min, x_max]` (m).
    pub lateral_roi: (f64, f64),
    /// Depth region of interest `[z_min, z_max]` (m).
    pub depth_roi: (f64, f64),
    pub min_valid_columns: usize,
    /// Refine peak positions with a 3-point parabola.
    pub subsample_interpolation: bool,
    /// Integrate the depth-averaged signed frame-to-frame displacement over
    /// frames before taking the magnitude. Frame-to-frame (velocity-like) data
    /// of a unipolar pulse is bipolar with two equal lobes; integrating
    /// restores the single displacement peak.
    #[serde(default)]
    pub accumulate: bool,
}

impl ToFConfig {
    /// ROI covering the whole grid of `disp`.
    pub fn covering(disp: &DisplacementSequence) -> Self {
        let g = disp.grid();
        Self {
            lateral_roi: (g.x()[0], g.x()[g.width() - 1]),
            depth_roi: (g.z()[0], g.z()[g.height() - 1]),
            min_valid_columns: 3,
            subsample_interpolation: true,
            accumulate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (x0, x1) = self.lateral_roi;
        let (z0, z1) = self.depth_roi;
        if !(x0.is_finite() && x1.is_finite() && x0 <= x1) {
            return Err(Error::config("tof.lateral_roi", "expected finite [x_min, x_max]"));
        }
        if !(z0.is_finite() && z1.is_finite() && z0 <= z1) {
            return Err(Error::config("tof.depth_roi", "expected finite [z_min, z_max]"));
        }
        if self.min_valid_columns < 3 {
            return Err(Error::config("tof.min_valid_columns", "must be at least 3"));
        }
        Ok(())
    }
}

/// Per-column arrival times; `valid[i]` is false where no clear peak was found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalTimes {
    pub positions: Vec<f64>,
    pub times: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ArrivalTimes {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToFResult {
    /// Estimated shear speed `c_ToF` (m/s).
    pub velocity: f64,
    /// RMS of the final fit residuals (s).
    pub residual_rms: f64,
    /// Positions and arrival times of the columns in the final fit.
    pub positions: Vec<f64>,
    pub arrival_times: Vec<f64>,
    pub columns_used: usize,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Arrival time of a peak in a uniformly sampled signal (in frames).
fn peak_position(signal: &[f64], refine: bool) -> (usize, f64) {
    let (k, _) = signal
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let mut pos = k as f64;
    if refine && k > 0 && k + 1 < signal.len() {
        let (l, c, r) = (signal[k - 1], signal[k], signal[k + 1]);
        let denom = l - 2.0 * c + r;
        if denom < 0.0 {
            pos += 0.5 * (l - r) / denom;
        }
    }
    (k, pos)
}

/// Arrival time per lateral column of the ROI.
///
/// A column is invalid when its peak is zero or below three times its
/// temporal median. Frame `k` is stamped `k / PRF`.
pub fn arrival_times(disp: &DisplacementSequence, cfg: &ToFConfig) -> Result<ArrivalTimes> {
    cfg.validate()?;
    let (frames, _, _) = disp.dim();
    if frames < 3 {
        return Err(Error::Estimation(format!(
            "time-of-flight needs at least 3 frames, got {frames}"
        )));
    }
    let grid = disp.grid();
    let cols: Vec<usize> = (0..grid.width())
        .filter(|&i| (cfg.lateral_roi.0..=cfg.lateral_roi.1).contains(&grid.x()[i]))
        .collect();
    let rows: Vec<usize> = (0..grid.height())
        .filter(|&j| (cfg.depth_roi.0..=cfg.depth_roi.1).contains(&grid.z()[j]))
        .collect();
    if cols.is_empty() {
        return Err(Error::config("tof.lateral_roi", "selects no grid columns"));
    }
    if rows.is_empty() {
        return Err(Error::config("tof.depth_roi", "selects no grid rows"));
    }
    let d = disp.values();
    let prf = disp.timing().frame_rate;
    let inv_rows = 1.0 / rows.len() as f64;

    let mut out = ArrivalTimes {
        positions: Vec::with_capacity(cols.len()),
        times: Vec::with_capacity(cols.len()),
        valid: Vec::with_capacity(cols.len()),
    };
    let mut signal = vec![0.0; frames];
    for &c in &cols {
        if cfg.accumulate {
            let mut total = 0.0;
            for (k, s) in signal.iter_mut().enumerate() {
                total += rows.iter().map(|&j| d[[k, c, j]]).sum::<f64>() * inv_rows;
                *s = total.abs();
            }
        } else {
            for (k, s) in signal.iter_mut().enumerate() {
                *s = rows.iter().map(|&j| d[[k, c, j]].abs()).sum::<f64>() * inv_rows;
            }
        }
        let (k, pos) = peak_position(&signal, cfg.subsample_interpolation);
        let peak = signal[k];
        let valid = peak > 0.0 && peak >= 3.0 * median(&signal);
        out.positions.push(grid.x()[c]);
        out.times.push(pos / prf);
        out.valid.push(valid);
    }
    if out.valid_count() < cfg.min_valid_columns {
        return Err(Error::Estimation(format!(
            "insufficient wavefront: {} valid columns, need {}",
            out.valid_count(),
            cfg.min_valid_columns
        )));
    }
    Ok(out)
}

struct LineFit {
    intercept: f64,
    slope: f64,
}

fn fit_line(x: &[f64], t: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let (mut sxx, mut sxt) = (0.0, 0.0);
    for (&xi, &ti) in x.iter().zip(t) {
        sxx += (xi - mx) * (xi - mx);
        sxt += (xi - mx) * (ti - mt);
    }
    let slope = sxt / sxx;
    LineFit {
        intercept: mt - slope * mx,
        slope,
    }
}

fn residuals(fit: &LineFit, x: &[f64], t: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(t)
        .map(|(&xi, &ti)| ti - (fit.intercept + fit.slope * xi))
        .collect()
}

fn rms(r: &[f64]) -> f64 {
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

/// Least-squares line through the valid arrivals, one trimming pass
/// (drop residuals above twice the RMS), refit, `c = 1 / slope`.
pub fn tof_velocity(arrivals: &ArrivalTimes) -> Result<ToFResult> {
    let (mut x, mut t): (Vec<f64>, Vec<f64>) = arrivals
        .positions
        .iter()
        .zip(&arrivals.times)
        .zip(&arrivals.valid)
        .filter(|(_, &ok)| ok)
        .map(|((&x, &t), _)| (x, t))
        .unzip();
    if x.len() < 3 {
        return Err(Error::Estimation(format!(
            "time-of-flight fit needs at least 3 valid columns, got {}",
            x.len()
        )));
    }
    let mut fit = fit_line(&x, &t);
    let r = residuals(&fit, &x, &t);
    let spread = rms(&r);
    let t_scale = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if spread > 1e-12 * t_scale {
        let keep: Vec<bool> = r.iter().map(|v| v.abs() <= 2.0 * spread).collect();
        if keep.iter().filter(|&&k| k).count() >= 3 && keep.iter().any(|&k| !k) {
            let mut i = 0;
            x.retain(|_| {
                i += 1;
                keep[i - 1]
            });
            let mut i = 0;
            t.retain(|_| {
                i += 1;
                keep[i - 1]
            });
            fit = fit_line(&x, &t);
        }
    }
    if !(fit.slope.is_finite() && fit.slope > 0.0) {
        return Err(Error::Estimation(format!(
            "no propagating wave: arrival slope {:e} s/m",
            fit.slope
        )));
    }
    let residual_rms = rms(&residuals(&fit, &x, &t));
    Ok(ToFResult {
        velocity: 1.0 / fit.slope,
        residual_rms,
        columns_used: x.len(),
        positions: x,
        arrival_times: t,
    })
}

/// `arrival_times` followed by `tof_velocity`.
pub fn estimate_velocity(disp: &DisplacementSequence, cfg: &ToFConfig) -> Result<ToFResult> {
    let arrivals = arrival_times(disp, cfg)?;
    let result = tof_velocity(&arrivals)?;
    if result.columns_used < cfg.min_valid_columns {
        return Err(Error::Estimation(format!(
            "insufficient wavefront: {} columns left after trimming, need {}",
            result.columns_used, cfg.min_valid_columns
        )));
    }
    Ok(result)
}
