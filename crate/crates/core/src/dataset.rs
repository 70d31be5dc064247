//! Dataset construction for the four pre-processing variants.
//!
//! Every simulated sequence is processed once. Its first 60 frames are cut
//! into five 12-frame windows; displacement variants keep 11 frames per
//! window (Loupas pairs consecutive frames) and are block-averaged 8×8 in
//! space. Days before the last are shuffled into train/val at sequence
//! granularity, the last day is the test set.
//!
//! Layout on disk:
//!
//! ```text
//! <out>/manifest.json
//! <out>/<variant>/<group>/<day>/<sequence>_<sub>.swt
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array3, ArrayView3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DisplacementSequence, ProbeGeometry, RfSequence, SequenceTiming};
use crate::error::{Error, Result};
use crate::pipeline::{process_all, tof_for, PipelineConfig, ProcessedSequence, VariantId};
use crate::report::{EvalReport, ReportMetadata, VariantRow};
use crate::rf_sim::{make_phantom, noise_std_for_snr, signal_rms, simulate_rf_sequence, PhantomSpec};
use crate::stats::{group_separability, PairedSample};
use crate::tensor::{read_tensor, write_atomic, write_tensor, Tensor};
use crate::tof::ToFResult;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUBSEQUENCE_COUNT: usize = 5;
pub const SUBSEQUENCE_FRAMES: usize = 12;
pub const DOWNSAMPLE_FACTOR: usize = 8;

/// Frame range `[start, end)` of one window.
pub type FrameRange = (usize, usize);

/// The five disjoint 12-frame windows of a `t`-frame sequence.
pub fn split_subsequences(t: usize) -> Result<Vec<FrameRange>> {
    let needed = SUBSEQUENCE_COUNT * SUBSEQUENCE_FRAMES;
    if t < needed {
        return Err(Error::Shape(format!(
            "splitting needs at least {needed} frames, got {t}"
        )));
    }
    Ok((0..SUBSEQUENCE_COUNT)
        .map(|k| (k * SUBSEQUENCE_FRAMES, (k + 1) * SUBSEQUENCE_FRAMES))
        .collect())
}

/// Block-mean pooling of the two trailing axes of `[frame, lateral, axial]`.
/// Ragged edges are dropped.
pub fn downsample_spatial(seq: ArrayView3<f64>, factor: usize) -> Result<Array3<f64>> {
    if factor == 0 {
        return Err(Error::config("downsample.factor", "must be at least 1"));
    }
    let (t, w, h) = seq.dim();
    if w < factor || h < factor {
        return Err(Error::Shape(format!(
            "spatial size {w}×{h} is smaller than the downsampling factor {factor}"
        )));
    }
    let (ow, oh) = (w / factor, h / factor);
    let inv = 1.0 / (factor * factor) as f64;
    Ok(Array3::from_shape_fn((t, ow, oh), |(k, i, j)| {
        seq.slice(s![k, i * factor..(i + 1) * factor, j * factor..(j + 1) * factor])
            .sum()
            * inv
    }))
}

/// One elasticity group of the simulation plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    /// Day-1 shear speed (m/s).
    pub shear_speed: f64,
}

/// Acquisition and phantom settings shared by every simulated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub probe: ProbeGeometry,
    pub timing: SequenceTiming,
    pub scatterer_count: usize,
    /// Phantom depth (m).
    pub depth: f64,
    /// Phantom extent beyond each end of the array (m).
    pub lateral_margin: f64,
    pub amplitude: f64,
    pub pulse_width: f64,
    /// Source position relative to the phantom's left edge (m).
    pub source_x: f64,
    /// Channel SNR; `None` is noiseless.
    pub snr_db: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            probe: ProbeGeometry {
                element_count: 32,
                ..ProbeGeometry::default()
            },
            timing: SequenceTiming {
                frame_rate: 6000.0,
                frame_count: 60,
            },
            scatterer_count: 1000,
            depth: 14e-3,
            lateral_margin: 1.2e-3,
            amplitude: 20e-6,
            pulse_width: 1e-3,
            source_x: -1e-3,
            snr_db: Some(20.0),
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        self.probe.validate()?;
        self.timing.validate()?;
        if self.scatterer_count == 0 {
            return Err(Error::config("sim.scatterer_count", "must be positive"));
        }
        if !(self.lateral_margin >= 0.0 && self.lateral_margin.is_finite()) {
            return Err(Error::config("sim.lateral_margin", "must be non-negative"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::config("sim.snr_db", "must be finite"));
            }
        }
        self.phantom(5.0, 0).validate(&self.probe)
    }

    /// Phantom for one sequence, noise not yet set.
    pub fn phantom(&self, shear_speed: f64, seed: u64) -> PhantomSpec {
        PhantomSpec {
            width: self.probe.span() + 2.0 * self.lateral_margin,
            depth: self.depth,
            scatterer_count: self.scatterer_count,
            shear_speed,
            amplitude: self.amplitude,
            pulse_width: self.pulse_width,
            source_x: self.source_x,
            noise_std: 0.0,
            rng_seed: seed,
            geometric_spreading: false,
        }
    }

    /// Simulates one sequence; noise is scaled to `snr_db` against the clean first frame.
    pub fn simulate(&self, shear_speed: f64, seed: u64) -> Result<(PhantomSpec, RfSequence)> {
        let mut spec = self.phantom(shear_speed, seed);
        spec.validate(&self.probe)?;
        let field = make_phantom(&spec)?;
        if let Some(snr) = self.snr_db {
            spec.noise_std = noise_std_for_snr(signal_rms(&field, &self.probe)?, snr);
        }
        let rf = simulate_rf_sequence(&field, &spec, &self.probe, &self.timing)?;
        Ok((spec, rf))
    }
}

/// Groups × days × repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimPlan {
    pub groups: Vec<GroupSpec>,
    pub days: u32,
    pub repetitions: usize,
    /// Relative speed increase per day after the first.
    pub hardening_per_day: f64,
    /// Relative standard deviation of the per-sequence speed.
    pub speed_jitter: f64,
    /// Share of pre-test sequences assigned to training.
    pub train_fraction: f64,
    pub seed: u64,
    pub sim: SimSettings,
}

impl Default for SimPlan {
    fn default() -> Self {
        Self {
            groups: default_groups(),
            days: 3,
            repetitions: 10,
            hardening_per_day: 0.02,
            speed_jitter: 0.03,
            train_fraction: 0.7,
            seed: 0,
            sim: SimSettings::default(),
        }
    }
}

/// The four gelatin groups with their reference speeds.
pub fn default_groups() -> Vec<GroupSpec> {
    [("7.5%", 3.90), ("10%", 5.00), ("12.5%", 6.44), ("15%", 7.29)]
        .into_iter()
        .map(|(name, c)| GroupSpec {
            name: name.into(),
            shear_speed: c,
        })
        .collect()
}

/// A sequence of the plan, before simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedSequence {
    pub id: String,
    pub group: String,
    pub group_index: usize,
    pub day: u32,
    pub repetition: usize,
    pub seed: u64,
    /// Ground-truth speed after hardening and jitter (m/s).
    pub shear_speed: f64,
}

/// Seed of one sequence, derived from the plan seed and its coordinates.
pub fn sequence_seed(plan_seed: u64, group_index: usize, day: u32, repetition: usize) -> u64 {
    let key = ((group_index as u64) << 48) ^ ((day as u64) << 32) ^ repetition as u64;
    splitmix64(plan_seed ^ splitmix64(key))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Filesystem-safe form of a group name: `"7.5%"` → `"7.5pct"`.
pub fn path_component(name: &str) -> String {
    name.chars()
        .flat_map(|c| match c {
            '%' => "pct".chars().collect::<Vec<_>>(),
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' => vec![c],
            _ => vec!['_'],
        })
        .collect()
}

impl SimPlan {
    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::config("plan.groups", "needs at least one group"));
        }
        let mut names = BTreeSet::new();
        for g in &self.groups {
            if !(g.shear_speed > 0.0 && g.shear_speed.is_finite()) {
                return Err(Error::config(
                    "plan.groups.shear_speed",
                    format!("group `{}` needs a positive speed", g.name),
                ));
            }
            if g.name.is_empty() || !names.insert(path_component(&g.name)) {
                return Err(Error::config(
                    "plan.groups.name",
                    format!("group name `{}` is empty or not unique", g.name),
                ));
            }
        }
        if self.days < 2 {
            return Err(Error::config("plan.days", "needs at least two days (train/val and test)"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("plan.repetitions", "must be positive"));
        }
        if !(self.hardening_per_day > -1.0 && self.hardening_per_day.is_finite()) {
            return Err(Error::config("plan.hardening_per_day", "must exceed -1"));
        }
        if !(self.speed_jitter >= 0.0 && self.speed_jitter < 0.5) {
            return Err(Error::config("plan.speed_jitter", "must lie in [0, 0.5)"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("plan.train_fraction", "must lie in (0, 1)"));
        }
        self.sim.validate()
    }

    pub fn test_day(&self) -> u32 {
        self.days
    }

    /// All sequences in group, day, repetition order.
    pub fn sequences(&self) -> Vec<PlannedSequence> {
        let mut out = Vec::with_capacity(self.groups.len() * self.days as usize * self.repetitions);
        for (gi, g) in self.groups.iter().enumerate() {
            for day in 1..=self.days {
                for rep in 0..self.repetitions {
                    let seed = sequence_seed(self.seed, gi, day, rep);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(u64::MAX);
                    let jitter: f64 = rng.sample(StandardNormal);
                    let jitter = (self.speed_jitter * jitter).clamp(-0.5, 0.5);
                    let speed = g.shear_speed * (1.0 + self.hardening_per_day * (day - 1) as f64) * (1.0 + jitter);
                    out.push(PlannedSequence {
                        id: format!("{}-d{day}-r{rep:04}", path_component(&g.name)),
                        group: g.name.clone(),
                        group_index: gi,
                        day,
                        repetition: rep,
                        seed,
                        shear_speed: speed,
                    });
                }
            }
        }
        out
    }

    /// Split of every planned sequence id.
    pub fn split_assignment(&self) -> BTreeMap<String, Split> {
        let seqs = self.sequences();
        let mut pool: Vec<&str> = seqs
            .iter()
            .filter(|s| s.day != self.test_day())
            .map(|s| s.id.as_str())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ 0x5EED_5B11));
        pool.shuffle(&mut rng);
        let n_train = train_count(pool.len(), self.train_fraction);
        let mut out = BTreeMap::new();
        for (i, id) in pool.iter().enumerate() {
            out.insert(id.to_string(), if i < n_train { Split::Train } else { Split::Val });
        }
        for s in seqs.iter().filter(|s| s.day == self.test_day()) {
            out.insert(s.id.clone(), Split::Test);
        }
        out
    }
}

fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Samples per split.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Per-variant sample counts implied by the plan when nothing is dropped.
pub fn plan_split_counts(plan: &SimPlan) -> SplitCounts {
    let per_day = plan.groups.len() * plan.repetitions;
    let pool = per_day * (plan.days as usize - 1);
    let train = train_count(pool, plan.train_fraction);
    SplitCounts {
        train: train * SUBSEQUENCE_COUNT,
        val: (pool - train) * SUBSEQUENCE_COUNT,
        test: per_day * SUBSEQUENCE_COUNT,
    }
}

/// Build settings: what to simulate and how to process it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub plan: SimPlan,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// `"{variant}_{sequence}_{sub}"`.
    pub id: String,
    /// Path relative to the manifest directory.
    pub file: String,
    pub variant: VariantId,
    pub group: String,
    pub day: u32,
    pub sequence_id: String,
    pub repetition: usize,
    pub subsequence: usize,
    /// Raw frames `[start, end)` of the window.
    pub frames: FrameRange,
    /// Training label: mean `c_ToF` of the (group, day) cohort.
    pub label: Option<f64>,
    /// This sequence's own `c_ToF`, the evaluation reference.
    pub c_tof: Option<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub group: String,
    pub day: u32,
    pub repetition: usize,
    pub seed: u64,
    pub true_shear_speed: f64,
    pub c_tof: f64,
    pub tof_columns: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSequence {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Effective configuration the dataset was built from.
    pub config: serde_json::Value,
    /// Tensor shape per variant code.
    pub variant_shapes: BTreeMap<String, Vec<u64>>,
    pub records: Vec<SampleRecord>,
    pub sequences: Vec<SequenceRecord>,
    pub dropped: Vec<DroppedSequence>,
    /// Samples per split, per variant.
    pub counts: SplitCounts,
}

impl DatasetManifest {
    /// Checks window disjointness, split hygiene and shape bookkeeping.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!("unsupported format version {}", self.format_version)));
        }
        let test_day = self.records.iter().map(|r| r.day).max().unwrap_or(0);
        let mut ids = BTreeSet::new();
        let mut split_of: BTreeMap<&str, Split> = BTreeMap::new();
        let mut windows: BTreeMap<(&str, VariantId), Vec<FrameRange>> = BTreeMap::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate record id {}", r.id)));
            }
            if !self.variant_shapes.contains_key(&r.variant.to_string()) {
                return Err(Error::Manifest(format!("no shape recorded for variant {}", r.variant)));
            }
            match (r.split, r.day == test_day) {
                (Split::Test, false) => {
                    return Err(Error::Manifest(format!("{} is in the test split but from day {}", r.id, r.day)))
                }
                (Split::Train | Split::Val, true) => {
                    return Err(Error::Manifest(format!("{} is from the test day but in {:?}", r.id, r.split)))
                }
                _ => {}
            }
            if let Some(prev) = split_of.insert(&r.sequence_id, r.split) {
                if prev != r.split {
                    return Err(Error::Manifest(format!(
                        "sequence {} appears in both {prev:?} and {:?}",
                        r.sequence_id, r.split
                    )));
                }
            }
            windows.entry((&r.sequence_id, r.variant)).or_default().push(r.frames);
        }
        for ((seq, _), mut w) in windows {
            w.sort_unstable();
            if w.iter().any(|&(a, b)| a >= b) || w.windows(2).any(|p| p[0].1 > p[1].0) {
                return Err(Error::Manifest(format!("overlapping windows in sequence {seq}")));
            }
        }
        Ok(())
    }

    pub fn test_records(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(|r| r.split == Split::Test)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }
}

/// Sets every record's label to the mean `c_ToF` of its (group, day) cohort.
pub fn assign_labels(mut manifest: DatasetManifest) -> Result<DatasetManifest> {
    let mut cohorts: BTreeMap<(String, u32), BTreeMap<String, f64>> = BTreeMap::new();
    for r in &manifest.records {
        let c = r
            .c_tof
            .ok_or_else(|| Error::Manifest(format!("record {} has no c_ToF", r.id)))?;
        cohorts
            .entry((r.group.clone(), r.day))
            .or_default()
            .insert(r.sequence_id.clone(), c);
    }
    let means: BTreeMap<(String, u32), f64> = cohorts
        .into_iter()
        .map(|(k, seqs)| (k, seqs.values().sum::<f64>() / seqs.len() as f64))
        .collect();
    for r in &mut manifest.records {
        r.label = Some(means[&(r.group.clone(), r.day)]);
    }
    Ok(manifest)
}

/// Outcome of simulating and processing one planned sequence.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub planned: PlannedSequence,
    pub rf: RfSequence,
    pub processed: ProcessedSequence,
    pub tof: std::result::Result<ToFResult, String>,
}

/// Simulates one sequence, runs variants (b)–(d) and ToF on (d).
pub fn run_sequence(planned: &PlannedSequence, sim: &SimSettings, cfg: &PipelineConfig) -> Result<SequenceRun> {
    let (_, rf) = sim.simulate(planned.shear_speed, planned.seed)?;
    let processed = process_all(&rf, cfg)?;
    let tof = tof_for(&processed.das_loupas_denoised, cfg).map_err(|e| e.to_string());
    Ok(SequenceRun {
        planned: planned.clone(),
        rf,
        processed,
        tof,
    })
}

/// ToF velocity per planned sequence on variant (d); failures are `Err(reason)`.
pub fn tof_study(plan: &SimPlan, cfg: &PipelineConfig) -> Result<Vec<(PlannedSequence, std::result::Result<f64, String>)>> {
    plan.sim.validate()?;
    plan.sequences()
        .par_iter()
        .map(|p| {
            let run = run_sequence(p, &plan.sim, cfg)?;
            Ok((p.clone(), run.tof.map(|t| t.velocity)))
        })
        .collect()
}

fn window_tensor(data: ArrayView3<f64>) -> Result<Tensor> {
    let (t, w, h) = data.dim();
    Tensor::from_f64(vec![t as u64, w as u64, h as u64], data.iter().copied())
}

fn displacement_windows(disp: &DisplacementSequence, windows: &[FrameRange]) -> Result<Vec<Tensor>> {
    windows
        .iter()
        .map(|&(a, b)| {
            // Loupas output frame k pairs raw frames k and k + 1
            let part = disp.values().slice(s![a..b - 1, .., ..]);
            window_tensor(downsample_spatial(part, DOWNSAMPLE_FACTOR)?.view())
        })
        .collect()
}

fn relative_file(variant: VariantId, p: &PlannedSequence, sub: usize) -> String {
    format!(
        "{variant}/{}/{}/{}_{sub}.swt",
        path_component(&p.group),
        p.day,
        p.id
    )
}

struct BuiltSequence {
    sequence: SequenceRecord,
    records: Vec<SampleRecord>,
    shapes: BTreeMap<String, Vec<u64>>,
}

fn build_sequence(
    planned: &PlannedSequence,
    split: Split,
    cfg: &DatasetConfig,
    out_dir: &Path,
) -> Result<std::result::Result<BuiltSequence, DroppedSequence>> {
    let run = run_sequence(planned, &cfg.plan.sim, &cfg.pipeline)?;
    let tof = match run.tof {
        Ok(t) => t,
        Err(reason) => {
            log::warn!("dropping {}: {reason}", planned.id);
            return Ok(Err(DroppedSequence {
                id: planned.id.clone(),
                reason,
            }));
        }
    };
    let windows = split_subsequences(run.rf.timing().frame_count)?;
    let mut tensors: Vec<(VariantId, Vec<Tensor>)> = Vec::with_capacity(4);
    tensors.push((
        VariantId::RawRf,
        windows
            .iter()
            .map(|&(a, b)| window_tensor(run.rf.samples().slice(s![a..b, .., ..])))
            .collect::<Result<_>>()?,
    ));
    for v in [VariantId::RawLoupas, VariantId::DasLoupas, VariantId::DasLoupasDenoised] {
        let disp = run.processed.get(v).expect("displacement variant");
        tensors.push((v, displacement_windows(disp, &windows)?));
    }

    let mut records = Vec::new();
    let mut shapes = BTreeMap::new();
    for (variant, list) in tensors {
        shapes.insert(variant.to_string(), list[0].dims.clone());
        for (sub, tensor) in list.iter().enumerate() {
            let file = relative_file(variant, planned, sub);
            write_tensor(&out_dir.join(&file), tensor)?;
            records.push(SampleRecord {
                id: format!("{variant}_{}_{sub}", planned.id),
                file,
                variant,
                group: planned.group.clone(),
                day: planned.day,
                sequence_id: planned.id.clone(),
                repetition: planned.repetition,
                subsequence: sub,
                frames: windows[sub],
                label: None,
                c_tof: Some(tof.velocity),
                split,
            });
        }
    }
    Ok(Ok(BuiltSequence {
        sequence: SequenceRecord {
            id: planned.id.clone(),
            group: planned.group.clone(),
            day: planned.day,
            repetition: planned.repetition,
            seed: planned.seed,
            true_shear_speed: planned.shear_speed,
            c_tof: tof.velocity,
            tof_columns: tof.columns_used,
            split,
        },
        records,
        shapes,
    }))
}

/// Simulates, processes and writes the whole plan under `out_dir`.
///
/// Sequences are built in parallel; the output is byte-identical for a given
/// configuration regardless of thread count. The manifest is written last.
pub fn build_dataset(cfg: &DatasetConfig, config_snapshot: serde_json::Value, out_dir: &Path) -> Result<DatasetManifest> {
    cfg.plan.validate()?;
    cfg.pipeline.denoise.validate()?;
    split_subsequences(cfg.plan.sim.timing.frame_count)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let splits = cfg.plan.split_assignment();
    let planned = cfg.plan.sequences();
    let built: Vec<_> = planned
        .par_iter()
        .map(|p| build_sequence(p, splits[&p.id], cfg, out_dir))
        .collect::<Result<_>>()?;

    let mut manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        config: config_snapshot,
        variant_shapes: BTreeMap::new(),
        records: Vec::new(),
        sequences: Vec::new(),
        dropped: Vec::new(),
        counts: SplitCounts::default(),
    };
    for b in built {
        match b {
            Ok(seq) => {
                for (variant, shape) in seq.shapes {
                    let known = manifest.variant_shapes.entry(variant.clone()).or_insert(shape.clone());
                    if *known != shape {
                        return Err(Error::Shape(format!(
                            "variant {variant} has shapes {known:?} and {shape:?}"
                        )));
                    }
                }
                manifest.records.extend(seq.records);
                manifest.sequences.push(seq.sequence);
            }
            Err(d) => manifest.dropped.push(d),
        }
    }
    if manifest.sequences.is_empty() {
        return Err(Error::Estimation("every sequence failed time-of-flight".into()));
    }
    for r in manifest.records.iter().filter(|r| r.variant == VariantId::DasLoupasDenoised) {
        match r.split {
            Split::Train => manifest.counts.train += 1,
            Split::Val => manifest.counts.val += 1,
            Split::Test => manifest.counts.test += 1,
        }
    }
    let manifest = assign_labels(manifest)?;
    manifest.validate()?;
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Reads a sample and checks its shape against the manifest.
pub fn load_sample(manifest: &DatasetManifest, root: &Path, record: &SampleRecord) -> Result<Tensor> {
    let path: PathBuf = root.join(&record.file);
    let t = read_tensor(&path)?;
    let expected = manifest
        .variant_shapes
        .get(&record.variant.to_string())
        .ok_or_else(|| Error::Manifest(format!("no shape recorded for variant {}", record.variant)))?;
    if &t.dims != expected {
        return Err(Error::Format {
            path,
            reason: format!("shape {:?}, manifest says {expected:?}", t.dims),
        });
    }
    Ok(t)
}

/// Baseline predictor: every test sample of a group gets the mean `c_ToF`
/// of that group's training sequences.
pub fn stub_predictions(manifest: &DatasetManifest, variant: VariantId) -> Result<Vec<(String, f64)>> {
    let mut per_group: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in manifest.sequences.iter().filter(|s| s.split == Split::Train) {
        per_group.entry(&s.group).or_default().push(s.c_tof);
    }
    manifest
        .test_records()
        .filter(|r| r.variant == variant)
        .map(|r| {
            let v = per_group
                .get(r.group.as_str())
                .ok_or_else(|| Error::Manifest(format!("group {} has no training sequences", r.group)))?;
            Ok((r.id.clone(), v.iter().sum::<f64>() / v.len() as f64))
        })
        .collect()
}

/// Joins predictions to the test split by id and builds the accuracy table.
///
/// The expected ids are the test records of every variant that appears in
/// `predictions`; any missing or unknown id is an [`Error::IdMismatch`].
pub fn evaluate(manifest: &DatasetManifest, predictions: &[(String, f64)], metadata: ReportMetadata) -> Result<EvalReport> {
    let test: BTreeMap<&str, &SampleRecord> = manifest.test_records().map(|r| (r.id.as_str(), r)).collect();
    let mut given: BTreeMap<&str, f64> = BTreeMap::new();
    let mut unexpected = Vec::new();
    for (id, v) in predictions {
        if !v.is_finite() {
            return Err(Error::Domain(format!("prediction for {id} is not finite")));
        }
        if test.contains_key(id.as_str()) {
            if given.insert(id, *v).is_some() {
                return Err(Error::Manifest(format!("duplicate prediction for {id}")));
            }
        } else {
            unexpected.push(id.clone());
        }
    }
    let variants: BTreeSet<VariantId> = given.keys().map(|id| test[id].variant).collect();
    let missing: Vec<String> = test
        .values()
        .filter(|r| variants.contains(&r.variant) && !given.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() || given.is_empty() {
        return Err(Error::IdMismatch { missing, unexpected });
    }

    let group_order: Vec<String> = {
        let mut seen = Vec::new();
        for s in &manifest.sequences {
            if !seen.contains(&s.group) {
                seen.push(s.group.clone());
            }
        }
        seen
    };
    let mut rows = Vec::new();
    let mut separability = Vec::new();
    for variant in variants {
        let recs: Vec<&SampleRecord> = test.values().copied().filter(|r| r.variant == variant).collect();
        let mut pred = Vec::with_capacity(recs.len());
        let mut refs = Vec::with_capacity(recs.len());
        let mut groups = Vec::with_capacity(recs.len());
        for r in &recs {
            pred.push(given[r.id.as_str()]);
            refs.push(r.c_tof.ok_or_else(|| Error::Manifest(format!("record {} has no c_ToF", r.id)))?);
            groups.push(group_order.iter().position(|g| *g == r.group).unwrap_or(usize::MAX));
        }
        let sample = PairedSample::new(pred, refs)?;
        rows.push(VariantRow::build(variant.label(), &sample, &groups)?);

        // groups are paired by (repetition, subsequence)
        let mut by_group: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); group_order.len()];
        for r in &recs {
            if let Some(g) = group_order.iter().position(|g| *g == r.group) {
                by_group[g].insert((r.repetition, r.subsequence), given[r.id.as_str()]);
            }
        }
        by_group.retain(|m| !m.is_empty());
        if by_group.len() >= 2 {
            let common: BTreeSet<(usize, usize)> = by_group
                .iter()
                .map(|m| m.keys().copied().collect::<BTreeSet<_>>())
                .reduce(|a, b| a.intersection(&b).copied().collect())
                .unwrap_or_default();
            if !common.is_empty() {
                let values: Vec<Vec<f64>> = by_group.iter().map(|m| common.iter().map(|k| m[k]).collect()).collect();
                separability.push((variant.label(), group_separability(&values, metadata.alpha)?));
            }
        }
    }
    Ok(EvalReport {
        rows,
        separability,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn windows_of_seventy_frames() {
        let w = split_subsequences(70).unwrap();
        assert_eq!(w, vec![(0, 12), (12, 24), (24, 36), (36, 48), (48, 60)]);
        assert_eq!(split_subsequences(60).unwrap(), w);
        assert!(split_subsequences(59).is_err());
    }

    #[test]
    fn downsample_fixtures() {
        let c = Array3::from_elem((2, 20, 17), 1.5);
        let d = downsample_spatial(c.view(), 8).unwrap();
        assert_eq!(d.dim(), (2, 2, 2));
        assert!(d.iter().all(|&v| v == 1.5));

        let checker = Array3::from_shape_fn((1, 16, 16), |(_, i, j)| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        assert!(downsample_spatial(checker.view(), 8).unwrap().iter().all(|&v| v == 0.0));

        assert!(downsample_spatial(Array3::zeros((1, 7, 16)).view(), 8).is_err());
    }

    #[test]
    fn split_arithmetic() {
        let full = SimPlan {
            repetitions: 240,
            ..SimPlan::default()
        };
        assert_eq!(
            plan_split_counts(&full),
            SplitCounts {
                train: 6720,
                val: 2880,
                test: 4800
            }
        );
        assert_eq!(
            plan_split_counts(&SimPlan::default()),
            SplitCounts {
                train: 280,
                val: 120,
                test: 200
            }
        );
    }

    #[test]
    fn split_assignment_matches_counts() {
        let plan = SimPlan {
            repetitions: 240,
            ..SimPlan::default()
        };
        let splits = plan.split_assignment();
        let count = |s: Split| splits.values().filter(|&&v| v == s).count() * SUBSEQUENCE_COUNT;
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (6720, 2880, 4800));
        for seq in plan.sequences() {
            assert_eq!(splits[&seq.id] == Split::Test, seq.day == 3);
        }
        assert_eq!(splits, plan.split_assignment());
    }

    #[test]
    fn planned_speeds_and_ids() {
        let plan = SimPlan {
            speed_jitter: 0.0,
            ..SimPlan::default()
        };
        let seqs = plan.sequences();
        assert_eq!(seqs.len(), 120);
        let ids: BTreeSet<_> = seqs.iter().map(|s| &s.id).collect();
        assert_eq!(ids.len(), 120);
        let d3 = seqs.iter().find(|s| s.group == "10%" && s.day == 3).unwrap();
        assert!((d3.shear_speed - 5.0 * 1.04).abs() < 1e-12);
        assert_eq!(d3.id, "10pct-d3-r0000");
    }

    fn record(id: &str, group: &str, day: u32, seq: &str, c: Option<f64>, split: Split) -> SampleRecord {
        SampleRecord {
            id: id.into(),
            file: format!("{id}.swt"),
            variant: VariantId::DasLoupasDenoised,
            group: group.into(),
            day,
            sequence_id: seq.into(),
            repetition: 0,
            subsequence: 0,
            frames: (0, 12),
            label: None,
            c_tof: c,
            split,
        }
    }

    fn manifest(records: Vec<SampleRecord>) -> DatasetManifest {
        DatasetManifest {
            format_version: MANIFEST_VERSION,
            config: serde_json::Value::Null,
            variant_shapes: [("d".to_string(), vec![11, 4, 4])].into(),
            records,
            sequences: Vec::new(),
            dropped: Vec::new(),
            counts: SplitCounts::default(),
        }
    }

    #[test]
    fn cohort_labels() {
        let m = manifest(vec![
            record("a", "g", 1, "s1", Some(4.9), Split::Train),
            record("b", "g", 1, "s2", Some(5.1), Split::Val),
            record("c", "h", 1, "s3", Some(6.0), Split::Train),
            record("t1", "g", 3, "s4", Some(5.0), Split::Test),
            record("t2", "g", 3, "s5", Some(5.4), Split::Test),
        ]);
        let m = assign_labels(m).unwrap();
        assert!((m.records[0].label.unwrap() - 5.0).abs() < 1e-12);
        assert!((m.records[1].label.unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(m.records[2].label, Some(6.0));
        let t = &m.records[4];
        assert!((t.label.unwrap() - 5.2).abs() < 1e-12);
        assert_ne!(t.label, t.c_tof);

        let missing = manifest(vec![record("a", "g", 1, "s1", None, Split::Train)]);
        assert!(assign_labels(missing).is_err());
    }

    #[test]
    fn manifest_hygiene() {
        let ok = manifest(vec![
            record("a", "g", 1, "s1", Some(5.0), Split::Train),
            record("t", "g", 3, "s2", Some(5.0), Split::Test),
        ]);
        ok.validate().unwrap();

        let leaked = manifest(vec![
            record("a", "g", 1, "s1", Some(5.0), Split::Train),
            record("b", "g", 1, "s1", Some(5.0), Split::Val),
            record("t", "g", 3, "s2", Some(5.0), Split::Test),
        ]);
        assert!(leaked.validate().is_err());

        let early_test = manifest(vec![
            record("a", "g", 1, "s1", Some(5.0), Split::Test),
            record("t", "g", 3, "s2", Some(5.0), Split::Test),
        ]);
        assert!(early_test.validate().is_err());

        let mut overlap = manifest(vec![
            record("a", "g", 1, "s1", Some(5.0), Split::Train),
            record("b", "g", 1, "s1", Some(5.0), Split::Train),
            record("t", "g", 3, "s2", Some(5.0), Split::Test),
        ]);
        overlap.records[1].frames = (6, 18);
        assert!(overlap.validate().is_err());
    }

    #[test]
    fn evaluate_joins_by_id() {
        let mut recs = Vec::new();
        for (g, c) in [("g1", 4.0), ("g2", 6.0)] {
            for rep in 0..6 {
                let mut r = record(&format!("d_{g}_{rep}"), g, 3, &format!("{g}-{rep}"), Some(c + 0.1 * rep as f64), Split::Test);
                r.repetition = rep;
                recs.push(r);
            }
        }
        let m = manifest(recs);
        let exact: Vec<(String, f64)> = m.records.iter().map(|r| (r.id.clone(), r.c_tof.unwrap())).collect();
        let rep = evaluate(&m, &exact, ReportMetadata::default()).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert_eq!((rep.rows[0].mae, rep.rows[0].r_squared), (0.0, Some(1.0)));
        assert_eq!(rep.rows[0].outlier_percent, 0.0);

        let mut shuffled = exact.clone();
        shuffled.reverse();
        assert_eq!(evaluate(&m, &shuffled, ReportMetadata::default()).unwrap(), rep);

        match evaluate(&m, &exact[1..], ReportMetadata::default()) {
            Err(Error::IdMismatch { missing, .. }) => assert_eq!(missing, vec![exact[0].0.clone()]),
            other => panic!("expected id mismatch, got {other:?}"),
        }
        let mut extra = exact.clone();
        extra.push(("d_nope".into(), 1.0));
        assert!(matches!(evaluate(&m, &extra, ReportMetadata::default()), Err(Error::IdMismatch { .. })));
    }

    #[test]
    fn path_components() {
        assert_eq!(path_component("7.5%"), "7.5pct");
        assert_eq!(path_component("a b/c"), "a_b_c");
    }
}
