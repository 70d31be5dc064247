//! Median filtering and morphological masking of displacement maps.
//!
//! Maps are `[lateral, axial]`; kernel sizes are given as `(k_x, k_z)`.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::DisplacementSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseConfig {
    /// Median kernel `(k_x, k_z)`, both odd.
    pub median_kernel: (usize, usize),
    /// Mask threshold as a fraction of the frame's peak `|d|`.
    pub threshold: f64,
    /// Disc radius of the structuring element (pixels).
    pub radius: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            median_kernel: (3, 3),
            threshold: 0.3,
            radius: 2,
        }
    }
}

impl DenoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let (kx, kz) = self.median_kernel;
        if kx == 0 || kz == 0 || kx % 2 == 0 || kz % 2 == 0 {
            return Err(Error::config("denoise.median_kernel", "sizes must be odd and >= 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("denoise.threshold", "must lie in (0, 1)"));
        }
        if self.radius < 1 {
            return Err(Error::config("denoise.radius", "must be at least 1"));
        }
        Ok(())
    }
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Median over a `k_x × k_z` window with reflect padding.
///
/// Windows always hold an odd count for odd kernels; for an even count the
/// lower-middle order statistic is used.
pub fn median_filter2d(map: ArrayView2<f64>, kernel: (usize, usize)) -> Result<Array2<f64>> {
    let (w, h) = map.dim();
    let (kx, kz) = kernel;
    if w == 0 || h == 0 {
        return Err(Error::Shape("median filter needs a non-empty map".into()));
    }
    if kx == 0 || kz == 0 {
        return Err(Error::config("median_kernel", "sizes must be >= 1"));
    }
    if kx > w || kz > h {
        return Err(Error::config(
            "median_kernel",
            format!("kernel {kx}x{kz} larger than map {w}x{h}"),
        ));
    }
    let (rx, rz) = ((kx / 2) as isize, (kz / 2) as isize);
    let (ox, oz) = (kx as isize - 1 - rx, kz as isize - 1 - rz);
    let mid = (kx * kz - 1) / 2;
    let mut out = Array2::zeros((w, h));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| {
            let mut window = Vec::with_capacity(kx * kz);
            for j in 0..h {
                window.clear();
                for di in -rx..=ox {
                    let ii = reflect(i as isize + di, w);
                    for dj in -rz..=oz {
                        window.push(map[[ii, reflect(j as isize + dj, h)]]);
                    }
                }
                let (_, m, _) = window.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
                row[j] = *m;
            }
        });
    Ok(out)
}

/// Offsets of a digital disc `dx² + dz² ≤ r²`.
fn disc(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut pts = Vec::new();
    for dx in -r..=r {
        for dz in -r..=r {
            if dx * dx + dz * dz <= r * r {
                pts.push((dx, dz));
            }
        }
    }
    pts
}

/// `outside` is the value assumed beyond the map edge.
fn erode(m: &Array2<bool>, se: &[(isize, isize)], outside: bool) -> Array2<bool> {
    let (w, h) = m.dim();
    Array2::from_shape_fn((w, h), |(i, j)| {
        se.iter().all(|&(dx, dz)| {
            let (ii, jj) = (i as isize + dx, j as isize + dz);
            if ii >= 0 && jj >= 0 && (ii as usize) < w && (jj as usize) < h {
                m[[ii as usize, jj as usize]]
            } else {
                outside
            }
        })
    })
}

fn dilate(m: &Array2<bool>, se: &[(isize, isize)]) -> Array2<bool> {
    let (w, h) = m.dim();
    Array2::from_shape_fn((w, h), |(i, j)| {
        se.iter().any(|&(dx, dz)| {
            let (ii, jj) = (i as isize - dx, j as isize - dz);
            ii >= 0 && jj >= 0 && (ii as usize) < w && (jj as usize) < h && m[[ii as usize, jj as usize]]
        })
    })
}

/// Binary opening with a disc. Erosion treats the outside as foreground, so
/// a structure cut by the map edge survives if it would fit beyond it.
pub fn opening(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    let se = disc(radius);
    dilate(&erode(mask, &se, true), &se)
}

/// Binary closing with a disc, computed on a canvas padded by `2r` so that
/// the border behaves as in the unbounded plane.
pub fn closing(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    let se = disc(radius);
    let pad = 2 * radius;
    let (w, h) = mask.dim();
    let mut canvas = Array2::from_elem((w + 2 * pad, h + 2 * pad), false);
    canvas
        .slice_mut(ndarray::s![pad..pad + w, pad..pad + h])
        .assign(mask);
    let closed = erode(&dilate(&canvas, &se), &se, false);
    closed.slice(ndarray::s![pad..pad + w, pad..pad + h]).to_owned()
}

/// Threshold at `θ · max|map|` (strictly above), then open and close with a
/// disc of radius `r`.
pub fn morph_mask(map: ArrayView2<f64>, threshold: f64, radius: usize) -> Result<Array2<bool>> {
    if map.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("morphological mask needs a finite map".into()));
    }
    let peak = map.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let level = threshold * peak;
    let raw = map.mapv(|v| v.abs() > level);
    Ok(closing(&opening(&raw, radius), radius))
}

/// Median filter each frame, then zero everything outside the morphological mask.
pub fn denoise_sequence(disp: &DisplacementSequence, cfg: &DenoiseConfig) -> Result<DisplacementSequence> {
    cfg.validate()?;
    let values = disp.values();
    let mut out = values.clone();
    let frames: Vec<Result<Array2<f64>>> = values
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|frame| {
            let filtered = median_filter2d(frame, cfg.median_kernel)?;
            let mask = morph_mask(filtered.view(), cfg.threshold, cfg.radius)?;
            Ok(ndarray::Zip::from(&filtered)
                .and(&mask)
                .map_collect(|&v, &keep| if keep { v } else { 0.0 }))
        })
        .collect();
    for (mut dst, src) in out.axis_iter_mut(Axis(0)).zip(frames) {
        dst.assign(&src?);
    }
    DisplacementSequence::new(
        out,
        disp.low_confidence().clone(),
        disp.grid().clone(),
        *disp.timing(),
        disp.wavelength(),
    )
}
