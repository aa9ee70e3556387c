//! Acceptance suite: one PASS/FAIL line per criterion. Runs every
//! criterion even after a failure and exits non-zero if any failed.

use std::process::{Command, ExitCode};
use std::time::Instant;

use chunk_cascade::cascade::{run_cascade, run_single_level, EngineOptions, FnClassifier, VecSource};
use chunk_cascade::rng;
use chunk_cascade::simulate::{exhaustive_small_world, run_trials};
use chunk_cascade::stats::{
    linspace, multi_level_metrics, occupancy_exponents, sweep, two_level_metrics, CascadeModel, DetectorProfile,
    SweepParameter,
};
use chunk_cascade::synth::{generate_scene, run_bench, threshold_chunk_classifier, BenchConfig, SynthSceneConfig};
use chunk_cascade::{ChunkClassifier, PyramidSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn model(dim: usize, p: f64, tpr: &[f64], fpr: &[f64]) -> CascadeModel {
    let profiles = tpr
        .iter()
        .zip(fpr)
        .map(|(&tpr, &fpr)| DetectorProfile { tpr, fpr })
        .collect();
    CascadeModel::new(dim, p, profiles).unwrap()
}

fn baseline() -> CascadeModel {
    model(3, 0.1, &[0.85, 0.8], &[0.05, 0.1])
}

/// Closed form against exhaustive enumeration over a pinned grid,
/// 1e-12 relative, under 10 s.
fn closed_form_vs_oracle() -> Outcome {
    const TOL: f64 = 1e-12;
    let start = Instant::now();
    let rates = [0.0, 0.1, 0.8, 0.85, 1.0];
    let (mut configs, mut worst, mut mismatches) = (0usize, 0.0f64, Vec::new());
    for dim in 1..=3 {
        let spec = PyramidSpec::single_root(dim, 2).unwrap();
        for p in [0.0, 0.05, 0.1, 0.5, 1.0] {
            for &b0 in &rates {
                for &b1 in &rates {
                    for &a0 in &rates {
                        for &a1 in &rates {
                            let m = model(dim, p, &[b0, b1], &[a0, a1]);
                            let closed = two_level_metrics(&m).unwrap();
                            let exact = exhaustive_small_world(&m, &spec).unwrap();
                            configs += 1;
                            let mut pairs = vec![
                                ("tpr", exact.tpr.map(|e| (closed.tpr, e))),
                                ("fpr", exact.fpr.map(|e| (closed.fpr, e))),
                            ];
                            if closed.precision.is_some() != exact.precision.is_some() {
                                mismatches.push(format!("precision definedness at {m:?}"));
                            }
                            pairs.push(("precision", closed.precision.zip(exact.precision)));
                            for (k, (&c, &e)) in closed
                                .expected_calls_per_l0_chunk
                                .iter()
                                .zip(&exact.expected_calls_per_l0_chunk)
                                .enumerate()
                            {
                                let err = rel_err(c, e);
                                worst = worst.max(err);
                                if err > TOL {
                                    mismatches.push(format!("calls[{k}] at {m:?}: {c} vs {e}"));
                                }
                            }
                            for (name, pair) in pairs {
                                if let Some((c, e)) = pair {
                                    let err = rel_err(c, e);
                                    worst = worst.max(err);
                                    if err > TOL {
                                        mismatches.push(format!("{name} at {m:?}: {c} vs {e}"));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = mismatches.is_empty() && secs < 10.0;
    let mut detail = format!(
        "{configs} configs, max rel err {worst:.2e} (tol 1e-12), {secs:.2} s (limit 10 s)"
    );
    if let Some(first) = mismatches.first() {
        detail.push_str(&format!("; {} mismatches, first: {first}", mismatches.len()));
    }
    outcome(pass, detail)
}

/// 10^6 Monte Carlo trials at the baseline within 4 SE of the hand-derived
/// values, under 60 s.
fn monte_carlo_agreement() -> Outcome {
    let start = Instant::now();
    let spec = PyramidSpec::single_root(3, 2).unwrap();
    let report = run_trials(&baseline(), &spec, 1_000_000, 20_231_117).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let checks = [
        ("tpr", report.tpr.unwrap(), 0.68),
        ("fpr", report.fpr.unwrap(), 0.023_259_608_5),
        ("E[K]/n", report.calls_per_l0_chunk[0], 0.498_672_953),
    ];
    let mut pass = secs < 60.0;
    let mut parts = Vec::new();
    for (name, est, target) in checks {
        let z = (est.mean - target) / est.std_error;
        pass &= est.within(target, 4.0);
        parts.push(format!("{name} {:.6} vs {target} (z={z:+.2})", est.mean));
    }
    outcome(pass, format!("{}; {secs:.1} s (limit 60 s)", parts.join(", ")))
}

/// Occupancy exponents: 7 and 8 for d = 3, and the literal formula at three
/// parameter points.
fn exponents_by_dimension() -> Outcome {
    let mut pass = occupancy_exponents(3) == (7, 8)
        && occupancy_exponents(1) == (1, 2)
        && occupancy_exponents(2) == (3, 4);
    let mut worst = 0.0f64;
    for (p, b0, b1, a0, a1) in [
        (0.1, 0.85, 0.8, 0.05, 0.1),
        (0.3, 0.9, 0.95, 0.2, 0.05),
        (0.01, 0.5, 0.6, 0.4, 0.3),
    ] {
        let m = two_level_metrics(&model(3, p, &[b0, b1], &[a0, a1])).unwrap();
        let q: f64 = 1.0 - p;
        let fpr = q.powi(7) * a1 * a0 + (1.0 - q.powi(7)) * b1 * a0;
        let calls = b1 + q.powi(8) * (a1 - b1);
        worst = worst.max(rel_err(m.tpr, b1 * b0));
        worst = worst.max(rel_err(m.fpr, fpr));
        worst = worst.max(rel_err(m.expected_calls_per_l0_chunk[0], calls));
    }
    // Same arithmetic in a different association order: a few ulps.
    pass &= worst <= 1e-14;
    outcome(
        pass,
        format!(
            "exponents d=1 {:?}, d=2 {:?}, d=3 {:?}; literal formula max rel err {worst:.2e}",
            occupancy_exponents(1),
            occupancy_exponents(2),
            occupancy_exponents(3)
        ),
    )
}

/// Two-level recursion identical to the closed form bit for bit; three
/// levels against the exhaustive oracle within 1e-3 absolute.
fn recursion() -> Outcome {
    let mut bitwise = 0usize;
    let mut total = 0usize;
    let mut r = rng::stream(99, 0);
    for dim in 1..=4 {
        for _ in 0..250 {
            let u = |r: &mut rng::StreamRng| rng::uniform(r);
            let m = model(dim, u(&mut r), &[u(&mut r), u(&mut r)], &[u(&mut r), u(&mut r)]);
            let a = multi_level_metrics(&m).unwrap();
            let b = two_level_metrics(&m).unwrap();
            total += 1;
            let same = a.tpr.to_bits() == b.tpr.to_bits()
                && a.fpr.to_bits() == b.fpr.to_bits()
                && a.precision.map(f64::to_bits) == b.precision.map(f64::to_bits)
                && a.expected_calls_per_l0_chunk.iter().map(|x| x.to_bits()).eq(b
                    .expected_calls_per_l0_chunk
                    .iter()
                    .map(|x| x.to_bits()));
            bitwise += same as usize;
        }
    }
    let m = model(1, 0.2, &[0.9, 0.9, 0.9], &[0.1, 0.1, 0.1]);
    let spec = PyramidSpec::new(1, 3, vec![4]).unwrap();
    let closed = multi_level_metrics(&m).unwrap();
    let exact = exhaustive_small_world(&m, &spec).unwrap();
    let mut worst = (closed.tpr - exact.tpr.unwrap())
        .abs()
        .max((closed.fpr - exact.fpr.unwrap()).abs())
        .max((closed.precision.unwrap() - exact.precision.unwrap()).abs());
    for (c, e) in closed.expected_calls_per_l0_chunk.iter().zip(&exact.expected_calls_per_l0_chunk) {
        worst = worst.max((c - e).abs());
    }
    outcome(
        bitwise == total && worst <= 1e-3,
        format!("2-level bitwise equal {bitwise}/{total}; 3-level d=1 4-chunk max abs err {worst:.2e} (tol 1e-3)"),
    )
}

/// Calls at level k equal 2^d times positives at level k + 1 on every
/// cascade run; single-level runs report `0:n`.
fn call_accounting() -> Outcome {
    let opts = EngineOptions::default();
    let (mut runs, mut bad) = (0usize, Vec::new());
    let mut r = rng::stream(5, 0);
    for dim in 1..=3 {
        for levels in 2..=4 {
            for trial in 0..20u64 {
                let per_axis = (1usize << (levels - 1)) * (1 + (trial as usize % 2));
                let spec = PyramidSpec::new(dim, levels, vec![per_axis; dim]).unwrap();
                let density = rng::uniform(&mut r);
                let payload: Vec<Vec<bool>> = (0..levels)
                    .map(|k| {
                        (0..spec.chunk_count(k).unwrap())
                            .map(|_| rng::uniform(&mut r) < density)
                            .collect()
                    })
                    .collect();
                let src = VecSource::new(&spec, payload).unwrap();
                let cls: Vec<_> = (0..levels).map(|k| FnClassifier::new(k, |b: &bool| *b)).collect();
                let refs: Vec<&dyn ChunkClassifier<bool>> =
                    cls.iter().map(|c| c as &dyn ChunkClassifier<bool>).collect();
                let rep = run_cascade(&refs, &src, &spec, &opts).unwrap();
                let single = run_single_level(refs[0], &src, &spec, &opts).unwrap();
                runs += 1;
                for k in 0..levels - 1 {
                    if rep.calls_per_level[k] != (1u64 << dim) * rep.positives_per_level[k + 1] {
                        bad.push(format!("d={dim} L={levels} level {k}: {}", rep.call_string()));
                    }
                }
                let expected = std::iter::repeat_n("0".to_string(), levels - 1)
                    .chain(std::iter::once(spec.n_l0().to_string()))
                    .collect::<Vec<_>>()
                    .join(":");
                if single.call_string() != expected {
                    bad.push(format!("single-level {} != {expected}", single.call_string()));
                }
            }
        }
    }
    for seed in 0..10 {
        let report = run_bench(&small_bench(seed)).unwrap();
        runs += 1;
        let c = &report.cascade;
        if c.calls_per_level[0] != 8 * c.positives_per_level[1] {
            bad.push(format!("bench seed {seed}: {}", c.calls));
        }
        if report.single_level.calls != format!("0:{}", report.n_l0_chunks) {
            bad.push(format!("bench seed {seed} single: {}", report.single_level.calls));
        }
    }
    let detail = match bad.first() {
        None => format!("{runs} runs, all exact"),
        Some(b) => format!("{runs} runs, {} violations, first: {b}", bad.len()),
    };
    outcome(bad.is_empty(), detail)
}

fn small_bench(seed: u64) -> BenchConfig {
    let mut cfg = BenchConfig::sparse_3d(seed);
    cfg.scene.spec = PyramidSpec::new(3, 2, vec![8, 8, 8]).unwrap();
    cfg
}

/// Cascade positives are a subset of single-level positives on 100 scenes
/// with the same level-0 classifier.
fn subset_property() -> Outcome {
    let opts = EngineOptions::default();
    let mut violations = 0usize;
    let mut cascade_pos = 0usize;
    let mut single_pos = 0usize;
    for seed in 0..100u64 {
        let dim = 2 + (seed % 2) as usize;
        let cfg = SynthSceneConfig {
            spec: PyramidSpec::new(dim, 2, vec![8; dim]).unwrap(),
            pixels_per_chunk_axis: 8,
            object_prevalence: [0.02, 0.05, 0.2, 0.5][(seed % 4) as usize],
            object_radius_px: 2.5,
            foreground_intensity: 1.0,
            background_intensity: 0.0,
            noise_std: 0.3,
            seed,
        };
        let scene = generate_scene(&cfg).unwrap();
        let src = scene.source();
        let l0 = threshold_chunk_classifier(0.5, 4);
        let l1 = threshold_chunk_classifier(0.5, 2).at_level(1);
        let single = run_single_level(&l0, &src, &cfg.spec, &opts).unwrap();
        let cascade = run_cascade(&[&l0, &l1], &src, &cfg.spec, &opts).unwrap();
        for (&c, &s) in cascade.predictions.iter().zip(&single.predictions) {
            violations += (c && !s) as usize;
            cascade_pos += c as usize;
            single_pos += s as usize;
        }
    }
    outcome(
        violations == 0,
        format!("100 scenes, {cascade_pos} cascade vs {single_pos} single-level positives, {violations} violations"),
    )
}

/// Sparse 3-D benchmark with calibrated detectors: measured beta1 >= 0.9,
/// alpha1 <= 0.1, cascade level-0 calls <= 30% of single-level, chunk
/// recall within 0.05, under 5 minutes.
fn synthetic_benchmark() -> Outcome {
    let start = Instant::now();
    let report = run_bench(&BenchConfig::sparse_3d(0)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let l1 = report.levels[1].calibration;
    let (beta1, alpha1) = (l1.tpr.unwrap_or(f64::NAN), l1.fpr.unwrap_or(f64::NAN));
    let fraction = report.l0_call_fraction();
    let predicted = report.predicted_calls_per_level[0] / report.n_l0_chunks as f64;
    let recall_gap =
        report.single_level.chunk_recall.unwrap_or(f64::NAN) - report.cascade.chunk_recall.unwrap_or(f64::NAN);
    let pass = beta1 >= 0.9 && alpha1 <= 0.1 && fraction <= 0.30 && recall_gap.abs() <= 0.05 && secs < 300.0;
    outcome(
        pass,
        format!(
            "beta1={beta1:.3} (>= 0.9), alpha1={alpha1:.3} (<= 0.1), L0 call fraction {fraction:.3} (<= 0.30; \
             closed-form prediction {predicted:.3}), recall gap {recall_gap:.3} (<= 0.05), calls {} vs {}, {secs:.1} s",
            report.cascade.calls, report.single_level.calls
        ),
    )
}

/// Over the default 50-point prevalence sweep, E[K]/n is non-decreasing
/// and cascade FPR never exceeds alpha0.
fn sweep_monotonicity() -> Outcome {
    let m = baseline();
    let rows = sweep(&m, SweepParameter::Prevalence, &linspace(0.0, 1.0, 50)).unwrap();
    let alpha0 = m.profiles[0].fpr;
    let monotone = rows
        .windows(2)
        .all(|w| w[1].cascade.expected_calls_per_l0_chunk[0] >= w[0].cascade.expected_calls_per_l0_chunk[0]);
    let bounded = rows.iter().all(|r| r.cascade.fpr <= alpha0);
    let max_fpr = rows.iter().map(|r| r.cascade.fpr).fold(0.0, f64::max);
    outcome(
        monotone && bounded,
        format!(
            "{} points, E[K]/n non-decreasing: {monotone}, max cascade FPR {max_fpr:.6} <= alpha0 {alpha0}: {bounded}",
            rows.len()
        ),
    )
}

fn cli_output(args: &[&str]) -> (Vec<u8>, i32) {
    let out = Command::new(env!("CARGO_BIN_EXE_chunk-cascade"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.stdout, out.status.code().unwrap_or(-1))
}

/// `simulate` and `bench` with fixed seeds give identical bytes across
/// repeated runs and across sequential and parallel execution.
fn determinism() -> Outcome {
    let mut problems = Vec::new();
    let cases: [(&str, Vec<&str>); 2] = [
        ("simulate", vec!["simulate", "--seed", "42", "--trials", "200000"]),
        ("bench", vec!["bench", "--seed", "42", "--no-timing"]),
    ];
    for (name, base) in cases {
        let mut outputs = Vec::new();
        for threads in [None, None, Some("1"), Some("4")] {
            let mut args = base.clone();
            if let Some(t) = threads {
                args.extend(["--threads", t]);
            }
            let (bytes, code) = cli_output(&args);
            if code != 0 {
                problems.push(format!("{name} {args:?} exited {code}"));
            }
            outputs.push(bytes);
        }
        if outputs[0].is_empty() || outputs.iter().any(|o| o != &outputs[0]) {
            problems.push(format!("{name}: outputs differ"));
        }
    }
    let detail = if problems.is_empty() {
        "simulate and bench byte-identical over 2 repeats, --threads 1 and --threads 4".to_string()
    } else {
        problems.join("; ")
    };
    outcome(problems.is_empty(), detail)
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("closed form matches exact oracle", closed_form_vs_oracle),
        ("Monte Carlo agreement at baseline", monte_carlo_agreement),
        ("occupancy exponents", exponents_by_dimension),
        ("multi-level recursion", recursion),
        ("engine call accounting", call_accounting),
        ("cascade positives subset of single-level", subset_property),
        ("end-to-end synthetic benchmark", synthetic_benchmark),
        ("p-sweep monotonicity and FPR bound", sweep_monotonicity),
        ("determinism of simulate and bench", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        failed += (!o.pass) as usize;
        println!(
            "criterion {}: {} - {name}: {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
