//! Wiring of the four pre-processing variants:
//!
//! * (a) raw RF channel data
//! * (b) Loupas directly on raw channels
//! * (c) DAS beamforming, then Loupas
//! * (d) as (c), plus median/morphological denoising

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::beamform::{das_beamform, Apodization, DasConfig};
use crate::denoise::{denoise_sequence, DenoiseConfig};
use crate::domain::{DisplacementSequence, ImagingGrid, ProbeGeometry, RfSequence};
use crate::error::{Error, Result};
use crate::motion::{loupas_on_beamformed, loupas_on_raw};
use crate::tof::{estimate_velocity, ToFConfig, ToFResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VariantId {
    #[serde(rename = "a")]
    RawRf,
    #[serde(rename = "b")]
    RawLoupas,
    #[serde(rename = "c")]
    DasLoupas,
    #[serde(rename = "d")]
    DasLoupasDenoised,
}

impl VariantId {
    pub const ALL: [VariantId; 4] = [
        VariantId::RawRf,
        VariantId::RawLoupas,
        VariantId::DasLoupas,
        VariantId::DasLoupasDenoised,
    ];

    pub fn code(self) -> char {
        match self {
            VariantId::RawRf => 'a',
            VariantId::RawLoupas => 'b',
            VariantId::DasLoupas => 'c',
            VariantId::DasLoupasDenoised => 'd',
        }
    }

    /// Table label, `"(a)"` … `"(d)"`.
    pub fn label(self) -> String {
        format!("({})", self.code())
    }

    pub fn description(self) -> &'static str {
        match self {
            VariantId::RawRf => "raw RF data, no beamforming",
            VariantId::RawLoupas => "Loupas on raw RF data",
            VariantId::DasLoupas => "DAS beamforming + Loupas",
            VariantId::DasLoupasDenoised => "DAS beamforming + Loupas + noise reduction",
        }
    }

    /// Whether the variant needs per-element channel data as input.
    pub fn needs_raw_channels(self) -> bool {
        matches!(self, VariantId::RawRf | VariantId::RawLoupas)
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for VariantId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_matches(|c| c == '(' || c == ')') {
            "a" | "A" => Ok(VariantId::RawRf),
            "b" | "B" => Ok(VariantId::RawLoupas),
            "c" | "C" => Ok(VariantId::DasLoupas),
            "d" | "D" => Ok(VariantId::DasLoupasDenoised),
            other => Err(Error::config("variant", format!("unknown variant `{other}`, expected a|b|c|d"))),
        }
    }
}

/// Beamforming settings; the grid is derived from the probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DasSettings {
    pub f_number: f64,
    pub apodization: Apodization,
    /// Depth range of the reconstruction grid (m).
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for DasSettings {
    fn default() -> Self {
        Self {
            f_number: 1.5,
            apodization: Apodization::Hann,
            z_min: 5e-3,
            z_max: 12e-3,
        }
    }
}

impl DasSettings {
    pub fn config(&self, probe: &ProbeGeometry) -> Result<DasConfig> {
        Ok(DasConfig {
            f_number: self.f_number,
            apodization: self.apodization,
            grid: ImagingGrid::for_probe(probe, self.z_min, self.z_max)?,
        })
    }
}

/// Time-of-flight settings. Unset ROI bounds default to the full grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToFSettings {
    #[serde(default)]
    pub lateral_roi: Option<(f64, f64)>,
    #[serde(default)]
    pub depth_roi: Option<(f64, f64)>,
    pub min_valid_columns: usize,
    pub subsample_interpolation: bool,
    pub accumulate: bool,
}

impl Default for ToFSettings {
    fn default() -> Self {
        Self {
            lateral_roi: None,
            depth_roi: None,
            min_valid_columns: 5,
            subsample_interpolation: true,
            accumulate: true,
        }
    }
}

impl ToFSettings {
    pub fn resolve(&self, disp: &DisplacementSequence) -> ToFConfig {
        let full = ToFConfig::covering(disp);
        ToFConfig {
            lateral_roi: self.lateral_roi.unwrap_or(full.lateral_roi),
            depth_roi: self.depth_roi.unwrap_or(full.depth_roi),
            min_valid_columns: self.min_valid_columns,
            subsample_interpolation: self.subsample_interpolation,
            accumulate: self.accumulate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub das: DasSettings,
    /// Loupas axial kernel length (samples).
    pub loupas_kernel: usize,
    pub denoise: DenoiseConfig,
    pub tof: ToFSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            das: DasSettings::default(),
            loupas_kernel: 16,
            denoise: DenoiseConfig::default(),
            tof: ToFSettings::default(),
        }
    }
}

/// Output of a single variant.
#[derive(Debug, Clone)]
pub enum StageOutput {
    Rf(RfSequence),
    Displacement(DisplacementSequence),
}

/// Displacement variants of one sequence; (a) is the RF input itself.
#[derive(Debug, Clone)]
pub struct ProcessedSequence {
    pub raw_loupas: DisplacementSequence,
    pub das_loupas: DisplacementSequence,
    pub das_loupas_denoised: DisplacementSequence,
}

impl ProcessedSequence {
    pub fn get(&self, variant: VariantId) -> Option<&DisplacementSequence> {
        match variant {
            VariantId::RawRf => None,
            VariantId::RawLoupas => Some(&self.raw_loupas),
            VariantId::DasLoupas => Some(&self.das_loupas),
            VariantId::DasLoupasDenoised => Some(&self.das_loupas_denoised),
        }
    }
}

/// Beamform + Loupas (variant c).
pub fn das_loupas(rf: &RfSequence, cfg: &PipelineConfig) -> Result<DisplacementSequence> {
    let das = cfg.das.config(rf.probe())?;
    let bf = das_beamform(rf, &das)?;
    loupas_on_beamformed(&bf, cfg.loupas_kernel)
}

/// Runs exactly the stages of one variant.
pub fn run_variant(rf: &RfSequence, variant: VariantId, cfg: &PipelineConfig) -> Result<StageOutput> {
    Ok(match variant {
        VariantId::RawRf => StageOutput::Rf(rf.clone()),
        VariantId::RawLoupas => StageOutput::Displacement(loupas_on_raw(rf, cfg.loupas_kernel)?),
        VariantId::DasLoupas => StageOutput::Displacement(das_loupas(rf, cfg)?),
        VariantId::DasLoupasDenoised => {
            let c = das_loupas(rf, cfg)?;
            StageOutput::Displacement(denoise_sequence(&c, &cfg.denoise)?)
        }
    })
}

/// All displacement variants, sharing the beamform + Loupas work between (c) and (d).
pub fn process_all(rf: &RfSequence, cfg: &PipelineConfig) -> Result<ProcessedSequence> {
    let raw_loupas = loupas_on_raw(rf, cfg.loupas_kernel)?;
    let das_loupas = das_loupas(rf, cfg)?;
    let das_loupas_denoised = denoise_sequence(&das_loupas, &cfg.denoise)?;
    Ok(ProcessedSequence {
        raw_loupas,
        das_loupas,
        das_loupas_denoised,
    })
}

/// Time-of-flight on a displacement sequence with the pipeline's settings.
pub fn tof_for(disp: &DisplacementSequence, cfg: &PipelineConfig) -> Result<ToFResult> {
    estimate_velocity(disp, &cfg.tof.resolve(disp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_codes_round_trip() {
        for v in VariantId::ALL {
            assert_eq!(v.code().to_string().parse::<VariantId>().unwrap(), v);
            assert_eq!(v.label().parse::<VariantId>().unwrap(), v);
        }
        assert!("e".parse::<VariantId>().is_err());
        assert_eq!(serde_json::to_string(&VariantId::DasLoupas).unwrap(), "\"c\"");
    }
}
