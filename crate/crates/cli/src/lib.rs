//! `swe` subcommands.
//!
//! Every command writes into `--out` and embeds the effective configuration
//! (flags, seed and merged config file) in the manifest it produces.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use swe_core::dataset::{
    build_dataset, evaluate, path_component, sequence_seed, stub_predictions, DatasetConfig, DatasetManifest,
    SimPlan, SimSettings, MANIFEST_FILE,
};
use swe_core::domain::{DisplacementSequence, ImagingGrid, ProbeGeometry, RfSequence, SequenceTiming};
use swe_core::pipeline::{run_variant, tof_for, PipelineConfig, StageOutput, VariantId};
use swe_core::report::{GroupReport, ReportMetadata};
use swe_core::tensor::{read_tensor, write_atomic, write_tensor, Tensor};
use swe_core::Error;

pub const RUN_MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "swe", version, about = "Shear-wave elastography workbench")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "swe-out")]
    pub out: PathBuf,
    /// TOML file overriding `[sim]` and `[pipeline]` defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate RF sequences of one phantom.
    Simulate(SimulateArgs),
    /// Run the stages of one pre-processing variant on simulated RF data.
    Pipeline(PipelineArgs),
    /// Time-of-flight speed per sequence, plus a per-group table.
    Tof(TofArgs),
    /// Simulate and write a complete (a)–(d) dataset.
    Dataset(DatasetArgs),
    /// Score a predictions CSV against a dataset's test split.
    Eval(EvalArgs),
    /// Write baseline predictions (per-group training ToF means).
    StubPredict(StubArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value = "custom")]
    pub group: String,
    /// Shear wave speed (m/s).
    #[arg(long, allow_negative_numbers = true)]
    pub cs: f64,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub day: u32,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    /// Directory written by `simulate`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub variant: VariantId,
}

#[derive(Debug, Args, Serialize)]
pub struct TofArgs {
    /// Directory written by `simulate` (variant d is computed) or `pipeline`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Lateral ROI `min,max` in metres.
    #[arg(long, value_parser = parse_range)]
    pub roi_x: Option<(f64, f64)>,
    /// Depth ROI `min,max` in metres.
    #[arg(long, value_parser = parse_range)]
    pub roi_z: Option<(f64, f64)>,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    /// TOML simulation plan; defaults to the desk-scale plan.
    #[arg(long)]
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// CSV with columns `id,predicted` (m/s).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StubArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "d")]
    pub variant: VariantId,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `min,max`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err("expected finite min <= max".into());
    }
    Ok((a, b))
}

/// Settings that a `--config` file may override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub sim: SimSettings,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl CliError {
    /// 2 for configuration problems and id mismatches, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_config() => 2,
            CliError::Core(Error::IdMismatch { .. } | Error::Manifest(_)) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

pub fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// One sequence file in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunItem {
    pub id: String,
    pub file: String,
    pub group: String,
    pub day: u32,
    pub shear_speed: f64,
    pub seed: u64,
    pub dims: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Rf,
    Displacement,
}

/// Manifest written by `simulate` and `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub kind: RunKind,
    pub variant: Option<VariantId>,
    pub config: serde_json::Value,
    pub probe: ProbeGeometry,
    pub timing: SequenceTiming,
    /// Displacement grid; absent for RF.
    pub grid: Option<ImagingGrid>,
    pub wavelength: f64,
    pub items: Vec<RunItem>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(Error::from)?;
        if m.format_version != RUN_MANIFEST_VERSION {
            return Err(Error::Manifest(format!("unsupported run manifest version {}", m.format_version)).into());
        }
        Ok(m)
    }

    fn write(&self, dir: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(Error::from)?;
        text.push('\n');
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())?;
        Ok(())
    }
}

fn to_array(t: &Tensor) -> CliResult<Array3<f64>> {
    if t.dims.len() != 3 {
        return Err(Error::Shape(format!("expected a rank-3 tensor, got dims {:?}", t.dims)).into());
    }
    let shape = (t.dims[0] as usize, t.dims[1] as usize, t.dims[2] as usize);
    Ok(Array3::from_shape_vec(shape, t.data.iter().map(|&v| v as f64).collect())
        .map_err(|e| Error::Shape(e.to_string()))?)
}

fn to_tensor(a: &Array3<f64>) -> CliResult<Tensor> {
    let (x, y, z) = a.dim();
    Ok(Tensor::from_f64(vec![x as u64, y as u64, z as u64], a.iter().copied())?)
}

fn load_rf(m: &RunManifest, dir: &Path, item: &RunItem) -> CliResult<RfSequence> {
    let t = read_tensor(&dir.join(&item.file))?;
    Ok(RfSequence::new(to_array(&t)?, m.probe, m.timing)?)
}

fn load_displacement(m: &RunManifest, dir: &Path, item: &RunItem) -> CliResult<DisplacementSequence> {
    let grid = m
        .grid
        .clone()
        .ok_or_else(|| Error::Manifest("displacement manifest without grid".into()))?;
    let limit = m.wavelength / 4.0;
    // f32 storage can round a clamped value just past the limit
    let d = to_array(&read_tensor(&dir.join(&item.file))?)?.mapv(|v| v.clamp(-limit, limit));
    Ok(DisplacementSequence::from_values(d, grid, m.timing, m.wavelength)?)
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("`threads` must be at least 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let file_cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    let snapshot = |args: serde_json::Value| {
        serde_json::json!({
            "command": args,
            "seed": seed,
            "sim": &file_cfg.sim,
            "pipeline": &file_cfg.pipeline,
        })
    };
    match &cli.command {
        Command::Simulate(a) => {
            cmd_simulate(a, seed, &file_cfg, snapshot(serde_json::json!({"simulate": a})), &cli.out).map(|_| ())
        }
        Command::Pipeline(a) => {
            cmd_pipeline(a, &file_cfg.pipeline, snapshot(serde_json::json!({"pipeline": a})), &cli.out).map(|_| ())
        }
        Command::Tof(a) => cmd_tof(a, &file_cfg.pipeline, &cli.out).map(|text| print!("{text}")),
        Command::Dataset(a) => {
            let mut plan = match &a.plan {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                    toml::from_str::<SimPlan>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                }
                None => SimPlan {
                    sim: file_cfg.sim.clone(),
                    ..SimPlan::default()
                },
            };
            if let Some(s) = cli.seed {
                plan.seed = s;
            }
            let cfg = DatasetConfig {
                plan,
                pipeline: file_cfg.pipeline,
            };
            let snap = serde_json::json!({"command": {"dataset": a}, "dataset": &cfg});
            let m = build_dataset(&cfg, snap, &cli.out)?;
            println!(
                "{} sequences, {} dropped; train {} / val {} / test {} samples per variant",
                m.sequences.len(),
                m.dropped.len(),
                m.counts.train,
                m.counts.val,
                m.counts.test
            );
            Ok(())
        }
        Command::Eval(a) => cmd_eval(a, &cli.out).map(|text| print!("{text}")),
        Command::StubPredict(a) => cmd_stub_predict(a, &cli.out).map(|_| ()),
    }
}

/// Writes `<out>/rf/<id>.swt` per repetition and `<out>/manifest.json`.
pub fn cmd_simulate(
    args: &SimulateArgs,
    seed: u64,
    cfg: &FileConfig,
    snapshot: serde_json::Value,
    out: &Path,
) -> CliResult<RunManifest> {
    if !(args.cs > 0.0 && args.cs.is_finite()) {
        return Err(Error::config("cs", format!("shear speed must be positive, got {}", args.cs)).into());
    }
    if args.reps == 0 {
        return Err(Error::config("reps", "must be at least 1").into());
    }
    if args.group.is_empty() {
        return Err(Error::config("group", "must not be empty").into());
    }
    cfg.sim.validate()?;
    let group = path_component(&args.group);
    let items: Vec<RunItem> = (0..args.reps)
        .into_par_iter()
        .map(|rep| -> CliResult<RunItem> {
            let s = sequence_seed(seed, 0, args.day, rep);
            let (_, rf) = cfg.sim.simulate(args.cs, s)?;
            let id = format!("{group}-d{}-r{rep:04}", args.day);
            let file = format!("rf/{id}.swt");
            let t = to_tensor(rf.samples())?;
            write_tensor(&out.join(&file), &t)?;
            Ok(RunItem {
                id,
                file,
                group: args.group.clone(),
                day: args.day,
                shear_speed: args.cs,
                seed: s,
                dims: t.dims,
            })
        })
        .collect::<CliResult<_>>()?;
    let m = RunManifest {
        format_version: RUN_MANIFEST_VERSION,
        kind: RunKind::Rf,
        variant: None,
        config: snapshot,
        probe: cfg.sim.probe,
        timing: cfg.sim.timing,
        grid: None,
        wavelength: cfg.sim.probe.wavelength(),
        items,
    };
    m.write(out)?;
    Ok(m)
}

/// Runs one variant over every sequence of a `simulate` directory.
pub fn cmd_pipeline(
    args: &PipelineArgs,
    cfg: &PipelineConfig,
    snapshot: serde_json::Value,
    out: &Path,
) -> CliResult<RunManifest> {
    let input = RunManifest::read(&args.input)?;
    if input.kind != RunKind::Rf {
        let what = input.variant.map_or("displacement".to_string(), |v| format!("variant {} output", v.label()));
        let reason = if args.variant.needs_raw_channels() {
            format!(
                "variant {} needs raw per-element channel data, but the input holds {what}",
                args.variant.label()
            )
        } else {
            format!("variant {} starts from RF data, but the input holds {what}", args.variant.label())
        };
        return Err(Error::config("in", reason).into());
    }
    let results: Vec<(RunItem, StageOutput)> = input
        .items
        .par_iter()
        .map(|item| -> CliResult<_> {
            let rf = load_rf(&input, &args.input, item)?;
            Ok((item.clone(), run_variant(&rf, args.variant, cfg)?))
        })
        .collect::<CliResult<_>>()?;

    let mut items = Vec::with_capacity(results.len());
    let mut grid = None;
    let mut timing = input.timing;
    for (item, output) in results {
        let file = format!("{}/{}.swt", args.variant, item.id);
        let t = match &output {
            StageOutput::Rf(rf) => to_tensor(rf.samples())?,
            StageOutput::Displacement(d) => {
                grid = Some(d.grid().clone());
                timing = *d.timing();
                to_tensor(d.values())?
            }
        };
        write_tensor(&out.join(&file), &t)?;
        items.push(RunItem { file, dims: t.dims, ..item });
    }
    let m = RunManifest {
        format_version: RUN_MANIFEST_VERSION,
        kind: if args.variant == VariantId::RawRf { RunKind::Rf } else { RunKind::Displacement },
        variant: Some(args.variant),
        config: snapshot,
        probe: input.probe,
        timing,
        grid,
        wavelength: input.wavelength,
        items,
    };
    m.write(out)?;
    Ok(m)
}

/// Writes `<out>/tof.csv` and, with enough sequences, the per-group table.
/// Returns the text summary.
pub fn cmd_tof(args: &TofArgs, cfg: &PipelineConfig, out: &Path) -> CliResult<String> {
    let input = RunManifest::read(&args.input)?;
    let mut cfg = *cfg;
    if args.roi_x.is_some() {
        cfg.tof.lateral_roi = args.roi_x;
    }
    if args.roi_z.is_some() {
        cfg.tof.depth_roi = args.roi_z;
    }
    let rows: Vec<(RunItem, Result<(f64, usize, f64), String>)> = input
        .items
        .par_iter()
        .map(|item| -> CliResult<_> {
            let disp = match input.kind {
                RunKind::Rf => {
                    let rf = load_rf(&input, &args.input, item)?;
                    match run_variant(&rf, VariantId::DasLoupasDenoised, &cfg)? {
                        StageOutput::Displacement(d) => d,
                        StageOutput::Rf(_) => unreachable!("variant d yields displacement"),
                    }
                }
                RunKind::Displacement => load_displacement(&input, &args.input, item)?,
            };
            let r = match tof_for(&disp, &cfg) {
                Ok(t) => Ok((t.velocity, t.columns_used, t.residual_rms)),
                Err(e) if e.is_config() => return Err(e.into()),
                Err(e) => Err(e.to_string()),
            };
            Ok((item.clone(), r))
        })
        .collect::<CliResult<_>>()?;

    let mut csv = String::from("id,group,true_shear_speed,c_tof,columns_used,residual_rms_s,error\n");
    let mut text = String::new();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (item, r) in &rows {
        match r {
            Ok((c, cols, res)) => {
                csv.push_str(&format!("{},{},{},{c:.6},{cols},{res:e},\n", item.id, item.group, item.shear_speed));
                text.push_str(&format!("{}: c_ToF = {c:.3} m/s ({cols} columns)\n", item.id));
                groups.entry(item.group.clone()).or_default().push(*c);
            }
            Err(e) => {
                csv.push_str(&format!("{},{},{},,,,\"{}\"\n", item.id, item.group, item.shear_speed, e.replace('"', "'")));
                text.push_str(&format!("{}: failed: {e}\n", item.id));
            }
        }
    }
    write_atomic(&out.join("tof.csv"), csv.as_bytes())?;
    let groups: Vec<(String, Vec<f64>)> = groups.into_iter().filter(|(_, v)| v.len() >= 4).collect();
    if !groups.is_empty() {
        let report = GroupReport::build(&groups, ReportMetadata::default())?;
        write_atomic(&out.join("tof_groups.csv"), report.to_csv().as_bytes())?;
        let table = report.to_text();
        write_atomic(&out.join("tof_groups.txt"), table.as_bytes())?;
        text.push('\n');
        text.push_str(&table);
    }
    Ok(text)
}

/// Reads `id,predicted` rows. A first row whose value does not parse is a header.
pub fn read_predictions(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        if rec.len() < 2 {
            return Err(CliError::Config(format!("{}:{}: expected `id,predicted`", path.display(), line + 1)));
        }
        match rec[1].parse::<f64>() {
            Ok(v) => out.push((rec[0].to_string(), v)),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(CliError::Config(format!(
                    "{}:{}: bad prediction `{}`: {e}",
                    path.display(),
                    line + 1,
                    &rec[1]
                )))
            }
        }
    }
    Ok(out)
}

/// Writes `<out>/eval.csv` and `<out>/eval.txt`; returns the text table.
pub fn cmd_eval(args: &EvalArgs, out: &Path) -> CliResult<String> {
    let manifest = DatasetManifest::read(&args.manifest)?;
    let preds = read_predictions(&args.pred)?;
    let report = evaluate(&manifest, &preds, ReportMetadata::default())?;
    let text = report.to_text();
    write_atomic(&out.join("eval.csv"), report.to_csv().as_bytes())?;
    write_atomic(&out.join("eval.txt"), text.as_bytes())?;
    Ok(text)
}

/// Writes `<out>/predictions.csv`.
pub fn cmd_stub_predict(args: &StubArgs, out: &Path) -> CliResult<PathBuf> {
    let manifest = DatasetManifest::read(&args.manifest)?;
    let preds = stub_predictions(&manifest, args.variant)?;
    let mut csv = String::from("id,predicted\n");
    for (id, v) in preds {
        csv.push_str(&format!("{id},{v}\n"));
    }
    let path = out.join("predictions.csv");
    write_atomic(&path, csv.as_bytes())?;
    Ok(path)
}
