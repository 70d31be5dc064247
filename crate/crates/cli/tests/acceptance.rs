//! Acceptance criteria P1–P7, one PASS/FAIL line each.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{stack, Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swe_cli::{cmd_eval, cmd_stub_predict, EvalArgs, StubArgs};
use swe_core::beamform::{das_beamform, envelope_bmode, DasConfig};
use swe_core::dataset::{
    build_dataset, default_groups, plan_split_counts, tof_study, DatasetConfig, DatasetManifest, GroupSpec, SimPlan,
    SimSettings, Split, MANIFEST_FILE,
};
use swe_core::denoise::median_filter2d;
use swe_core::domain::{ImagingGrid, ProbeGeometry, RfSequence, SequenceTiming};
use swe_core::motion::{demodulate, loupas_displacement, loupas_on_raw, LoupasConfig};
use swe_core::pipeline::{PipelineConfig, VariantId};
use swe_core::rf_sim::{record_length, simulate_static_frame, ScattererField};
use swe_core::stats::{group_separability, iqr_outliers, r_squared, wilcoxon_signed_rank, PairedSample};
use swe_core::tensor::{Tensor, read_tensor, write_tensor};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- P1, P2

const SPEEDS: [f64; 4] = [3.90, 5.00, 6.44, 7.29];

struct Study {
    per_group: Vec<BTreeMap<usize, f64>>,
    failures: usize,
    elapsed: Duration,
}

fn run_study() -> Result<Study, String> {
    let plan = SimPlan {
        groups: default_groups(),
        days: 1,
        repetitions: 20,
        hardening_per_day: 0.0,
        speed_jitter: 0.0,
        seed: 2024,
        sim: SimSettings {
            timing: SequenceTiming {
                frame_rate: 6000.0,
                frame_count: 40,
            },
            ..SimSettings::default()
        },
        ..SimPlan::default()
    };
    let start = Instant::now();
    let results = tof_study(&plan, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let mut per_group = vec![BTreeMap::new(); SPEEDS.len()];
    let mut failures = 0;
    for (seq, r) in results {
        match r {
            Ok(c) => {
                per_group[seq.group_index].insert(seq.repetition, c);
            }
            Err(_) => failures += 1,
        }
    }
    Ok(Study {
        per_group,
        failures,
        elapsed,
    })
}

fn p1(study: &Study) -> Check {
    let mut detail = Vec::new();
    let mut ok = true;
    for (g, truth) in SPEEDS.iter().enumerate() {
        let v: Vec<f64> = study.per_group[g].values().copied().collect();
        let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
        let err = (mean - truth).abs() / truth;
        ok &= v.len() >= 18 && err < 0.05;
        detail.push(format!("{truth:.2}→{mean:.3} ({:.1}%, n={})", 100.0 * err, v.len()));
    }
    ok &= study.elapsed < Duration::from_secs(300);
    let line = format!(
        "{}; {} ToF failures; {:.0} s",
        detail.join(", "),
        study.failures,
        study.elapsed.as_secs_f64()
    );
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn p2(study: &Study) -> Check {
    let common: Vec<usize> = study.per_group[0]
        .keys()
        .copied()
        .filter(|k| study.per_group.iter().all(|g| g.contains_key(k)))
        .collect();
    let groups: Vec<Vec<f64>> = study.per_group.iter().map(|g| common.iter().map(|k| g[k]).collect()).collect();
    let sep = group_separability(&groups, 0.05).map_err(|e| e.to_string())?;
    let worst = sep.pairs.iter().map(|p| p.p_value).fold(0.0, f64::max);
    let line = format!("{} pairs, {} paired repetitions, max p = {worst:.2e}", sep.pairs.len(), common.len());
    if sep.pairs.len() == 6 && sep.all_significant() {
        Ok(line)
    } else {
        Err(line)
    }
}

// ---------------------------------------------------------------- P3

const FC: f64 = 5e6;
const C0: f64 = 1540.0;

fn tone_pair(d: f64, fs: f64, cols: usize, len: usize) -> Array3<f64> {
    Array3::from_shape_fn((2, cols, len), |(f, c, s)| {
        let t = s as f64 / fs + if f == 1 { 2.0 * d / C0 } else { 0.0 };
        (2.0 * std::f64::consts::PI * FC * t + 0.7 * c as f64).cos()
    })
}

fn loupas_on(data: &Array3<f64>, fs: f64, kernel: usize) -> Result<Array3<f64>, String> {
    let (frames, cols, len) = data.dim();
    let grid = ImagingGrid::uniform(0.0, 1e-3, cols, 1e-3, C0 / (2.0 * fs), len).map_err(|e| e.to_string())?;
    let timing = SequenceTiming {
        frame_rate: 6000.0,
        frame_count: frames,
    };
    let iq = demodulate(data.view(), FC, fs, grid, timing).map_err(|e| e.to_string())?;
    let cfg = LoupasConfig {
        kernel_length: kernel,
        ensemble_length: 2,
        center_frequency: FC,
        sampling_frequency: fs,
        speed_of_sound: C0,
    };
    Ok(loupas_displacement(&iq, &cfg).map_err(|e| e.to_string())?.values().clone())
}

fn p3() -> Check {
    let lambda = C0 / FC;
    let mut worst: f64 = 0.0;
    for fs in [20e6, 40e6] {
        for frac in [0.002, 0.05, 0.2, 0.45, 0.7, 0.9, 1.0] {
            let d = frac * lambda / 8.0;
            let est = loupas_on(&tone_pair(d, fs, 3, 256), fs, 16)?;
            for v in est.iter() {
                worst = worst.max((v - d).abs() / d);
            }
        }
    }
    ensure(worst < 0.02, format!("tone shifts: worst relative error {:.3}%", 100.0 * worst))?;

    // speckle RF from the simulator for the exact symmetries
    let p = ProbeGeometry {
        element_count: 16,
        ..ProbeGeometry::default()
    };
    let (w, depth) = (6e-3, 12e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 300;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..w)).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(2e-3..depth)).collect();
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let moved: Vec<f64> = z.iter().map(|z| z - 7e-6).collect();
    let len = record_length(&p, w, depth);
    let frame = |zs: Vec<f64>| {
        simulate_static_frame(&ScattererField::new(x.clone(), zs, a.clone(), w, depth).unwrap(), &p, len).unwrap()
    };
    let (f0, f1) = (frame(z), frame(moved));
    let timing = SequenceTiming {
        frame_rate: 6000.0,
        frame_count: 2,
    };
    let seq = |a: &Array2<f64>, b: &Array2<f64>, scale: f64| {
        RfSequence::new(stack![Axis(0), a.view(), b.view()] * scale, p, timing).unwrap()
    };
    let fwd = loupas_on_raw(&seq(&f0, &f1, 1.0), 16).map_err(|e| e.to_string())?;
    let rev = loupas_on_raw(&seq(&f1, &f0, 1.0), 16).map_err(|e| e.to_string())?;
    let antisym = fwd.values().iter().zip(rev.values()).all(|(a, b)| *a == -*b);
    ensure(antisym, "time reversal does not negate the estimate exactly")?;
    for scale in [0.25, 8.0, 1024.0] {
        let s = loupas_on_raw(&seq(&f0, &f1, scale), 16).map_err(|e| e.to_string())?;
        ensure(s.values() == fwd.values(), format!("scaling by {scale} changed the estimate"))?;
    }
    Ok(format!(
        "tone shifts up to λ/8: worst relative error {:.1e}; reversal antisymmetric and ×{{0.25, 8, 1024}} invariant bit for bit",
        worst
    ))
}

// ---------------------------------------------------------------- P4

fn p4() -> Check {
    let p = ProbeGeometry {
        element_count: 32,
        ..ProbeGeometry::default()
    };
    let (w, depth) = (12e-3, 14e-3);
    let grid = ImagingGrid::for_probe(&p, 5e-3, 12e-3).map_err(|e| e.to_string())?;
    let cfg = DasConfig::with_grid(grid.clone());
    let timing = SequenceTiming {
        frame_rate: 6000.0,
        frame_count: 2,
    };
    let len = record_length(&p, w, depth);
    let rf_of = |field: &ScattererField| {
        let f = simulate_static_frame(field, &p, len).unwrap();
        RfSequence::new(stack![Axis(0), f.view(), f.view()], p, timing).unwrap()
    };
    let mut worst = (0.0f64, 0.0f64);
    for (element, z) in [(3usize, 5.6e-3), (12, 7.77e-3), (20, 9.1e-3), (28, 11.3e-3)] {
        let xp = p.element_x(element) + 0.07e-3;
        let field = ScattererField::new(vec![xp + w / 2.0], vec![z], vec![1.0], w, depth).unwrap();
        let bf = das_beamform(&rf_of(&field), &cfg).map_err(|e| e.to_string())?;
        let img = envelope_bmode(&bf, 60.0).map_err(|e| e.to_string())?;
        let frame = img.index_axis(Axis(0), 0);
        let (i, j) = frame
            .indexed_iter()
            .fold(((0, 0), f64::MIN), |b, (ij, &v)| if v > b.1 { (ij, v) } else { b })
            .0;
        worst.0 = worst.0.max((grid.x()[i] - xp).abs() / p.pitch);
        worst.1 = worst.1.max((grid.z()[j] - z).abs() / grid.dz());
    }
    ensure(
        worst.0 <= 1.0 && worst.1 <= 1.0,
        format!("localization off by {:.2} pitch, {:.2} samples", worst.0, worst.1),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut random_field = || {
        let n = 60;
        ScattererField::new(
            (0..n).map(|_| rng.random_range(0.0..w)).collect(),
            (0..n).map(|_| rng.random_range(4e-3..13e-3)).collect(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            w,
            depth,
        )
        .unwrap()
    };
    let (ra, rb) = (rf_of(&random_field()), rf_of(&random_field()));
    let das = |rf: &RfSequence| das_beamform(rf, &cfg).unwrap().samples().clone();
    let with = |data: Array3<f64>| RfSequence::new(data, p, timing).unwrap();
    let joint = das(&with(ra.samples() + rb.samples()));
    let (a, b) = (das(&ra), das(&rb));
    let mag = das(&with(ra.samples().mapv(f64::abs))) + das(&with(rb.samples().mapv(f64::abs)));
    let taps = p.element_count as f64 + 2.0;
    let mut worst_ulps: f64 = 0.0;
    for (((j, x), y), m) in joint.iter().zip(&a).zip(&b).zip(&mag) {
        let ulp = f64::EPSILON * m;
        if ulp > 0.0 {
            worst_ulps = worst_ulps.max((j - (x + y)).abs() / ulp);
        }
    }
    // every accumulation step (interpolate, weight, add) rounds at most a few times
    ensure(worst_ulps <= 4.0 * taps, format!("superposition error {worst_ulps:.1} ulp of the tap magnitude"))?;
    let scaled = das(&with(ra.samples() * 4.0));
    ensure(scaled.iter().zip(&a).all(|(s, x)| *s == 4.0 * x), "×4 scaling is not bit exact")?;
    Ok(format!(
        "peak within {:.2} pitch / {:.2} axial samples; superposition within {worst_ulps:.1} ulp (bound {:.0}); ×4 exact",
        worst.0,
        worst.1,
        4.0 * taps
    ))
}

// ---------------------------------------------------------------- P5

fn average_ranks(abs: &[f64]) -> Vec<f64> {
    let n = abs.len();
    (0..n)
        .map(|i| {
            let below = abs.iter().filter(|&&v| v < abs[i]).count() as f64;
            let equal = abs.iter().filter(|&&v| v == abs[i]).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total: f64 = ranks.iter().sum();
    let w = w_plus.min(total - w_plus);
    let n = d.len();
    let mut at_most = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if s <= w {
            at_most += 1;
        }
    }
    (2.0 * at_most as f64 / (1u64 << n) as f64).min(1.0)
}

fn naive_median(map: &Array2<f64>, kx: usize, kz: usize) -> Array2<f64> {
    let (w, h) = map.dim();
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - i - 1;
            } else {
                return i as usize;
            }
        }
    };
    Array2::from_shape_fn((w, h), |(i, j)| {
        let mut win = Vec::new();
        for dx in -(kx as isize / 2)..=(kx as isize / 2) {
            for dz in -(kz as isize / 2)..=(kz as isize / 2) {
                win.push(map[[reflect(i as isize + dx, w), reflect(j as isize + dz, h)]]);
            }
        }
        win.sort_by(f64::total_cmp);
        win[(win.len() - 1) / 2]
    })
}

fn p5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(1..=12);
        // coarse values produce ties and zero differences
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 * 0.5).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64 * 0.5).collect();
        if a == b {
            continue;
        }
        let got = wilcoxon_signed_rank(&a, &b, 0.05).map_err(|e| e.to_string());
        let got = match got {
            Ok(r) => r.p_value,
            Err(_) if a.iter().zip(&b).all(|(x, y)| x == y) => continue,
            Err(e) => return Err(e),
        };
        let want = enumerated_p(&a, &b);
        ensure(got == want, format!("Wilcoxon n={n}: p {got} vs enumeration {want} for {a:?} / {b:?}"))?;
        checked += 1;
    }

    for k in 0..100 {
        let map = Array2::from_shape_simple_fn((16, 16), || rng.random_range(-1.0..1.0));
        let kernel = [(3, 3), (5, 3), (1, 7), (5, 5)][k % 4];
        let got = median_filter2d(map.view(), kernel).map_err(|e| e.to_string())?;
        ensure(got == naive_median(&map, kernel.0, kernel.1), format!("median filter differs on map {k}, kernel {kernel:?}"))?;
    }

    let r2 = |p: &[f64], r: &[f64]| r_squared(&PairedSample::new(p.to_vec(), r.to_vec()).unwrap()).unwrap();
    let refs = [0.0, 0.0, 4.0, 4.0];
    ensure(r2(&[0.0, 1.0, 4.0, 4.0], &refs) == 0.9375, "R² fixture 15/16")?;
    ensure(r2(&refs, &refs) == 1.0, "R² perfect fixture")?;
    ensure(r2(&[2.0; 4], &refs) == 0.0, "R² mean-predictor fixture")?;

    let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 100.0];
    let o = iqr_outliers(&values).map_err(|e| e.to_string())?;
    ensure(
        o.q1 == 3.25 && o.q3 == 7.75 && o.median == 5.5 && o.indices == vec![9] && o.percentage == 10.0,
        format!("IQR fixture: {o:?}"),
    )?;
    Ok("200 Wilcoxon fixtures equal 2ⁿ enumeration; 100 median maps equal naive sort; R² and IQR fixtures exact".into())
}

// ---------------------------------------------------------------- P6, P7

fn tiny_dataset() -> DatasetConfig {
    DatasetConfig {
        plan: SimPlan {
            groups: vec![
                GroupSpec {
                    name: "7.5%".into(),
                    shear_speed: 3.9,
                },
                GroupSpec {
                    name: "15%".into(),
                    shear_speed: 7.29,
                },
            ],
            days: 2,
            repetitions: 4,
            seed: 77,
            sim: SimSettings {
                scatterer_count: 500,
                ..SimSettings::default()
            },
            ..SimPlan::default()
        },
        ..DatasetConfig::default()
    }
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn p6(first: &Path, second: &Path) -> Check {
    let cfg = tiny_dataset();
    let snapshot = serde_json::to_value(&cfg).unwrap();
    build_dataset(&cfg, snapshot.clone(), first).map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    pool.install(|| build_dataset(&cfg, snapshot, second)).map_err(|e| e.to_string())?;
    let (a, b) = (tree(first), tree(second));
    ensure(!a.is_empty() && a == b, "dataset directories differ between identical builds")?;

    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 0..50 {
        let n = rng.random_range(0..200);
        let data: Vec<f32> = (0..n).map(|_| f32::from_bits(rng.random())).collect();
        let t = Tensor::new(vec![n as u64], data).unwrap();
        let path = dir.path().join(format!("{k}.swt"));
        write_tensor(&path, &t).map_err(|e| e.to_string())?;
        let back = read_tensor(&path).map_err(|e| e.to_string())?;
        ensure(
            back.dims == t.dims && back.data.iter().zip(&t.data).all(|(x, y)| x.to_bits() == y.to_bits()),
            "tensor round trip is not bit exact",
        )?;
    }

    let full = SimPlan {
        repetitions: 240,
        ..SimPlan::default()
    };
    let counts = plan_split_counts(&full);
    let splits = full.split_assignment();
    let per = |s: Split| splits.values().filter(|&&v| v == s).count() * 5;
    let hygiene = full.sequences().iter().all(|s| (splits[&s.id] == Split::Test) == (s.day == 3));
    ensure(
        (counts.train, counts.val, counts.test) == (6720, 2880, 4800)
            && (per(Split::Train), per(Split::Val), per(Split::Test)) == (6720, 2880, 4800)
            && hygiene,
        format!("full-scale split {counts:?}"),
    )?;
    let m = DatasetManifest::read(&first.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    Ok(format!(
        "{} files byte-identical across builds; 50 tensors bit exact; full-scale split 6720/2880/4800, {} desk records validated",
        a.len(),
        m.records.len()
    ))
}

fn p7(dataset: &Path) -> Check {
    let manifest_path = dataset.join(MANIFEST_FILE);
    let out = tempfile::tempdir().unwrap();
    let stub = StubArgs {
        manifest: manifest_path.clone(),
        variant: VariantId::DasLoupasDenoised,
    };
    let pred = cmd_stub_predict(&stub, out.path()).map_err(|e| e.to_string())?;
    let text = cmd_eval(
        &EvalArgs {
            pred: pred.clone(),
            manifest: manifest_path.clone(),
        },
        out.path(),
    )
    .map_err(|e| e.to_string())?;
    let csv = fs::read_to_string(out.path().join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    ensure(
        lines.next() == Some("variant,mae_m_s,std_m_s,r_squared,outlier_percent,count"),
        "eval.csv header",
    )?;
    let row: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    ensure(row.len() == 6 && row[0] == "(d)", format!("eval.csv row {row:?}"))?;
    ensure(
        text.contains("MAE ± std") && text.contains("R²") && text.contains("Outliers [%]") && text.contains(" m/s"),
        "text report columns",
    )?;

    let m = DatasetManifest::read(&manifest_path).map_err(|e| e.to_string())?;
    let mut exact = String::from("id,predicted\n");
    for r in m.test_records() {
        exact.push_str(&format!("{},{}\n", r.id, r.c_tof.unwrap()));
    }
    let exact_path = out.path().join("exact.csv");
    fs::write(&exact_path, exact).unwrap();
    let exact_out = out.path().join("exact");
    cmd_eval(
        &EvalArgs {
            pred: exact_path,
            manifest: manifest_path.clone(),
        },
        &exact_out,
    )
    .map_err(|e| e.to_string())?;
    let rows: Vec<String> = fs::read_to_string(exact_out.join("eval.csv")).unwrap().lines().skip(1).map(String::from).collect();
    ensure(rows.len() == 4, format!("expected four variant rows, got {}", rows.len()))?;
    for row in &rows {
        let f: Vec<&str> = row.split(',').collect();
        ensure(
            f[1] == "0.000000" && f[3] == "1.000000" && f[4] == "0.0000",
            format!("perfect predictions gave {row}"),
        )?;
    }

    // the shipped binary reports missing ids with exit code 2
    let partial = out.path().join("partial.csv");
    let full = fs::read_to_string(&pred).unwrap();
    let dropped_id = full.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    fs::write(&partial, full.lines().filter(|l| !l.starts_with(&dropped_id)).collect::<Vec<_>>().join("\n")).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_swe"))
        .args(["--out"])
        .arg(out.path().join("bin"))
        .arg("eval")
        .arg("--pred")
        .arg(&partial)
        .arg("--manifest")
        .arg(&manifest_path)
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&status.stderr);
    ensure(
        status.status.code() == Some(2) && stderr.contains(&dropped_id),
        format!("id mismatch exit {:?}: {stderr}", status.status.code()),
    )?;
    let first = text.lines().nth(1).unwrap_or("").trim().to_string();
    Ok(format!("stub report `{first}`; identity predictions MAE 0, R² 1, no outliers for a–d; mismatch exits 2"))
}

// ---------------------------------------------------------------- main

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

fn main() {
    let mut results: Vec<(&str, &str, Check)> = Vec::new();
    let study = guarded(run_study);
    match &study {
        Ok(s) => {
            results.push(("P1", "end-to-end ToF recovery", guarded(|| p1(s))));
            results.push(("P2", "group separability", guarded(|| p2(s))));
        }
        Err(e) => {
            results.push(("P1", "end-to-end ToF recovery", Err(e.clone())));
            results.push(("P2", "group separability", Err(e.clone())));
        }
    }
    results.push(("P3", "Loupas accuracy and symmetries", guarded(p3)));
    results.push(("P4", "beamforming point spread and linearity", guarded(p4)));
    results.push(("P5", "statistics oracles", guarded(p5)));
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let p6r = guarded(|| p6(first.path(), second.path()));
    let built = p6r.is_ok() || first.path().join(MANIFEST_FILE).exists();
    results.push(("P6", "determinism and format", p6r));
    results.push((
        "P7",
        "evaluation report",
        if built {
            guarded(|| p7(first.path()))
        } else {
            Err("no dataset to evaluate".into())
        },
    ));

    let mut failed = 0;
    for (id, name, r) in &results {
        match r {
            Ok(detail) => println!("{id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
