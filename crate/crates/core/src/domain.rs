//! Shared physical and geometric types.
//!
//! Everything is SI: meters, seconds, hertz, pascal. Sequence types are
//! validated once at construction and immutable afterwards, so they can be
//! shared read-only across worker threads.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-array transducer description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeGeometry {
    pub element_count: usize,
    /// Center-to-center element spacing (m).
    pub pitch: f64,
    /// Transmit center frequency (Hz).
    pub center_frequency: f64,
    /// RF sampling frequency (Hz).
    pub sampling_frequency: f64,
    /// Assumed uniform speed of sound (m/s).
    pub speed_of_sound: f64,
}

impl Default for ProbeGeometry {
    fn default() -> Self {
        Self {
            element_count: 128,
            pitch: 0.3e-3,
            center_frequency: 5.0e6,
            sampling_frequency: 40.0e6,
            speed_of_sound: 1540.0,
        }
    }
}

impl ProbeGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.element_count < 2 {
            return Err(Error::config("probe.element_count", "must be at least 2"));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::config("probe.pitch", "must be positive"));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(Error::config("probe.speed_of_sound", "must be positive"));
        }
        if !(self.sampling_frequency > 0.0 && self.sampling_frequency.is_finite()) {
            return Err(Error::config("probe.sampling_frequency", "must be positive"));
        }
        if !(self.center_frequency > 0.0 && self.center_frequency < self.sampling_frequency / 2.0) {
            return Err(Error::config(
                "probe.center_frequency",
                format!(
                    "must lie in (0, f_s/2) = (0, {}) Hz",
                    self.sampling_frequency / 2.0
                ),
            ));
        }
        Ok(())
    }

    /// Acoustic wavelength at the center frequency.
    pub fn wavelength(&self) -> f64 {
        self.speed_of_sound / self.center_frequency
    }

    /// Lateral element position in probe coordinates (array centered on x = 0).
    pub fn element_x(&self, element: usize) -> f64 {
        (element as f64 - (self.element_count as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn element_positions(&self) -> Vec<f64> {
        (0..self.element_count).map(|e| self.element_x(e)).collect()
    }

    /// Distance between the outermost element centers.
    pub fn span(&self) -> f64 {
        (self.element_count as f64 - 1.0) * self.pitch
    }
}

/// Rectilinear pixel grid: `x` lateral, `z` axial (depth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagingGrid {
    x: Vec<f64>,
    z: Vec<f64>,
}

impl ImagingGrid {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        check_axis("grid.x", &x)?;
        check_axis("grid.z", &z)?;
        Ok(Self { x, z })
    }

    /// Uniformly spaced grid starting at `(x0, z0)`.
    pub fn uniform(x0: f64, dx: f64, width: usize, z0: f64, dz: f64, height: usize) -> Result<Self> {
        let x = (0..width).map(|i| x0 + dx * i as f64).collect();
        let z = (0..height).map(|i| z0 + dz * i as f64).collect();
        Self::new(x, z)
    }

    /// One column per element, axial spacing λ/8, covering `[z_min, z_max]`.
    pub fn for_probe(probe: &ProbeGeometry, z_min: f64, z_max: f64) -> Result<Self> {
        let dz = probe.wavelength() / 8.0;
        if !(z_max > z_min) {
            return Err(Error::config("grid.z_max", "must exceed z_min"));
        }
        let height = ((z_max - z_min) / dz).floor() as usize + 1;
        Self::new(
            probe.element_positions(),
            (0..height).map(|i| z_min + dz * i as f64).collect(),
        )
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn width(&self) -> usize {
        self.x.len()
    }

    pub fn height(&self) -> usize {
        self.z.len()
    }

    /// Mean axial spacing; exact for uniform grids. Zero for a single row.
    pub fn dz(&self) -> f64 {
        spacing(&self.z)
    }

    pub fn dx(&self) -> f64 {
        spacing(&self.x)
    }
}

fn spacing(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        0.0
    } else {
        (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
    }
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::config(name, "needs at least one coordinate"));
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(name, "coordinates must be finite"));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(name, "coordinates must be strictly increasing"));
    }
    Ok(())
}

/// Slow-time sampling of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceTiming {
    /// Frame (pulse repetition) rate (Hz).
    pub frame_rate: f64,
    pub frame_count: usize,
}

impl Default for SequenceTiming {
    fn default() -> Self {
        Self {
            frame_rate: 6000.0,
            frame_count: 70,
        }
    }
}

impl SequenceTiming {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::config("timing.frame_rate", "must be positive"));
        }
        if self.frame_count < 2 {
            return Err(Error::config("timing.frame_count", "must be at least 2"));
        }
        Ok(())
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        frame as f64 / self.frame_rate
    }

    /// Same rate, different frame count. Used by stages that consume frames.
    pub fn with_frames(&self, frame_count: usize) -> Self {
        Self {
            frame_rate: self.frame_rate,
            frame_count,
        }
    }
}

fn check_finite(data: &Array3<f64>) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Per-element raw RF channel data, indexed `[frame, element, sample]`.
#[derive(Debug, Clone)]
pub struct RfSequence {
    samples: Array3<f64>,
    probe: ProbeGeometry,
    timing: SequenceTiming,
}

impl RfSequence {
    pub fn new(samples: Array3<f64>, probe: ProbeGeometry, timing: SequenceTiming) -> Result<Self> {
        probe.validate()?;
        timing.validate()?;
        let (frames, elements, _) = samples.dim();
        if frames != timing.frame_count {
            return Err(Error::Shape(format!(
                "rf has {frames} frames, timing says {}",
                timing.frame_count
            )));
        }
        if elements != probe.element_count {
            return Err(Error::Shape(format!(
                "rf has {elements} channels, probe has {} elements",
                probe.element_count
            )));
        }
        check_finite(&samples)?;
        Ok(Self {
            samples,
            probe,
            timing,
        })
    }

    pub fn samples(&self) -> &Array3<f64> {
        &self.samples
    }

    pub fn probe(&self) -> &ProbeGeometry {
        &self.probe
    }

    pub fn timing(&self) -> &SequenceTiming {
        &self.timing
    }

    pub fn into_samples(self) -> Array3<f64> {
        self.samples
    }
}

/// Delay-and-sum output (still RF, not envelope), indexed `[frame, lateral, axial]`.
#[derive(Debug, Clone)]
pub struct BeamformedSequence {
    samples: Array3<f64>,
    grid: ImagingGrid,
    timing: SequenceTiming,
    probe: ProbeGeometry,
}

impl BeamformedSequence {
    pub fn new(
        samples: Array3<f64>,
        grid: ImagingGrid,
        timing: SequenceTiming,
        probe: ProbeGeometry,
    ) -> Result<Self> {
        let (frames, w, h) = samples.dim();
        if frames != timing.frame_count || w != grid.width() || h != grid.height() {
            return Err(Error::Shape(format!(
                "beamformed data {:?} does not match grid {}x{} and {} frames",
                samples.dim(),
                grid.width(),
                grid.height(),
                timing.frame_count
            )));
        }
        check_finite(&samples)?;
        Ok(Self {
            samples,
            grid,
            timing,
            probe,
        })
    }

    pub fn samples(&self) -> &Array3<f64> {
        &self.samples
    }

    pub fn grid(&self) -> &ImagingGrid {
        &self.grid
    }

    pub fn timing(&self) -> &SequenceTiming {
        &self.timing
    }

    pub fn probe(&self) -> &ProbeGeometry {
        &self.probe
    }

    /// Equivalent fast-time sampling rate of the axial grid: `c0 / (2 dz)`.
    pub fn axial_sampling_frequency(&self) -> f64 {
        self.probe.speed_of_sound / (2.0 * self.grid.dz())
    }
}

/// Baseband in-phase/quadrature data, indexed `[frame, column, axial]`.
///
/// The carrier has been mixed out, so a stationary echo at exactly the
/// carrier frequency has constant phase along the axial axis.
#[derive(Debug, Clone)]
pub struct IqSequence {
    i: Array3<f64>,
    q: Array3<f64>,
    /// Carrier removed during demodulation (Hz).
    pub carrier: f64,
    /// Axial sampling frequency of the columns (Hz).
    pub sampling_frequency: f64,
    grid: ImagingGrid,
    timing: SequenceTiming,
}

impl IqSequence {
    pub fn new(
        i: Array3<f64>,
        q: Array3<f64>,
        carrier: f64,
        sampling_frequency: f64,
        grid: ImagingGrid,
        timing: SequenceTiming,
    ) -> Result<Self> {
        if i.dim() != q.dim() {
            return Err(Error::Shape(format!(
                "i {:?} and q {:?} differ",
                i.dim(),
                q.dim()
            )));
        }
        let (frames, w, h) = i.dim();
        if frames != timing.frame_count || w != grid.width() || h != grid.height() {
            return Err(Error::Shape(format!(
                "iq data {:?} does not match grid {}x{} and {} frames",
                i.dim(),
                grid.width(),
                grid.height(),
                timing.frame_count
            )));
        }
        check_finite(&i)?;
        check_finite(&q)?;
        Ok(Self {
            i,
            q,
            carrier,
            sampling_frequency,
            grid,
            timing,
        })
    }

    pub fn i(&self) -> &Array3<f64> {
        &self.i
    }

    pub fn q(&self) -> &Array3<f64> {
        &self.q
    }

    pub fn grid(&self) -> &ImagingGrid {
        &self.grid
    }

    pub fn timing(&self) -> &SequenceTiming {
        &self.timing
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.i.dim()
    }
}

/// Axial displacement maps `[frame, lateral, axial]` in meters, positive toward the probe.
///
/// `low_confidence` flags pixels whose estimate came from a degenerate kernel.
#[derive(Debug, Clone)]
pub struct DisplacementSequence {
    d: Array3<f64>,
    low_confidence: Array3<bool>,
    grid: ImagingGrid,
    timing: SequenceTiming,
    wavelength: f64,
}

impl DisplacementSequence {
    pub fn new(
        d: Array3<f64>,
        low_confidence: Array3<bool>,
        grid: ImagingGrid,
        timing: SequenceTiming,
        wavelength: f64,
    ) -> Result<Self> {
        let (frames, w, h) = d.dim();
        if frames != timing.frame_count || w != grid.width() || h != grid.height() {
            return Err(Error::Shape(format!(
                "displacement {:?} does not match grid {}x{} and {} frames",
                d.dim(),
                grid.width(),
                grid.height(),
                timing.frame_count
            )));
        }
        if low_confidence.dim() != d.dim() {
            return Err(Error::Shape("confidence mask shape differs from data".into()));
        }
        check_finite(&d)?;
        let limit = wavelength / 4.0;
        if let Some(v) = d.iter().find(|v| v.abs() > limit) {
            return Err(Error::Domain(format!(
                "displacement {v:e} m exceeds the aliasing limit λ/4 = {limit:e} m"
            )));
        }
        Ok(Self {
            d,
            low_confidence,
            grid,
            timing,
            wavelength,
        })
    }

    /// Builds a sequence with an all-false confidence mask.
    pub fn from_values(
        d: Array3<f64>,
        grid: ImagingGrid,
        timing: SequenceTiming,
        wavelength: f64,
    ) -> Result<Self> {
        let mask = Array3::from_elem(d.dim(), false);
        Self::new(d, mask, grid, timing, wavelength)
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.d
    }

    pub fn low_confidence(&self) -> &Array3<bool> {
        &self.low_confidence
    }

    pub fn grid(&self) -> &ImagingGrid {
        &self.grid
    }

    pub fn timing(&self) -> &SequenceTiming {
        &self.timing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.d.dim()
    }
}

/// A stiffness cohort: one phantom on one acquisition day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticityGroup {
    pub name: String,
    /// Ground-truth shear speed (m/s); only known in simulation.
    pub shear_speed: f64,
    pub day: u32,
}

impl ElasticityGroup {
    pub fn new(name: impl Into<String>, shear_speed: f64, day: u32) -> Result<Self> {
        if !(shear_speed > 0.0 && shear_speed.is_finite()) {
            return Err(Error::Domain(format!(
                "shear speed must be positive, got {shear_speed}"
            )));
        }
        Ok(Self {
            name: name.into(),
            shear_speed,
            day,
        })
    }
}

/// Young's modulus of an incompressible linear-elastic medium, `E = 3 ρ c_s²`.
pub fn velocity_to_youngs_modulus(shear_speed: f64, density: f64) -> Result<f64> {
    if !(shear_speed > 0.0 && shear_speed.is_finite()) {
        return Err(Error::Domain(format!(
            "shear speed must be positive, got {shear_speed}"
        )));
    }
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::Domain(format!("density must be positive, got {density}")));
    }
    Ok(3.0 * density * shear_speed * shear_speed)
}
