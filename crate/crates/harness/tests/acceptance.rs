//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p safe-oco-harness --test acceptance`. Criteria can be
//! selected by number, e.g. `cargo test -p safe-oco-harness --test acceptance -- 3 8`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use safe_oco::commands::GlobalOptions;
use safe_oco::config::parse_config;
use safe_oco::experiment::{run_experiment, run_seeds, ExperimentSpec, SeedResult};
use safe_oco::lbmp::DATA_DIR_VAR;
use safe_oco::lemmas::{plan_exploration, study_exploration, study_nesting};
use safe_oco::output::OutputDir;
use safe_oco_core::estimation::{build_conservative_set, RlsEstimate};
use safe_oco_core::geometry::AmbientSet;
use safe_oco_core::linalg::Matrix;
use safe_oco_core::projection::{Projector, DEFAULT_EPS_OPT};
use safe_oco_core::rng::{stream, Stream};
use safe_oco_core::verification::grid_project_oracle;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Verdict;

fn spec(text: &str, overrides: &[&str]) -> ExperimentSpec {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let cfg = parse_config(text, &overrides).expect("acceptance config parses");
    let data_dir = std::env::var_os(DATA_DIR_VAR).map(PathBuf::from);
    ExperimentSpec::from_config(&cfg, data_dir.as_deref()).expect("acceptance config is valid")
}

/// The box setup: |x_i| ≤ 3 inside [−4, 4]², noise covariance 1e-3·I, λ = 0.5.
fn box_spec(kind: &str, seeds: u64, horizon: u64, extra: &[&str]) -> ExperimentSpec {
    let text = format!(
        "seed = 1\nn_seeds = {seeds}\nscenario.kind = \"{kind}\"\n\
         run.horizon = {horizon}\nrun.delta = 0.001\nrun.lambda = 0.5\n"
    );
    spec(&text, extra)
}

fn runs(spec: &ExperimentSpec) -> Vec<SeedResult> {
    run_seeds(spec, 0).expect("sweep runs")
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn c1_exploration_safety() -> Verdict {
    let spec = box_spec("f1", 100, 100_000, &[]);
    let mut actions = 0;
    let mut bad_seeds = 0;
    let mut bad_actions = 0;
    for seed in spec.seeds() {
        let st = study_exploration(&spec, seed).expect("exploration study");
        actions += st.log.len();
        bad_actions += st.exploration_violations;
        bad_seeds += (st.exploration_violations > 0) as u32;
    }
    Verdict::new(
        bad_actions == 0,
        format!(
            "{bad_actions} unsafe of {actions} exploration actions, {bad_seeds}/100 seeds affected"
        ),
    )
}

fn c2_full_run_safety() -> Verdict {
    let spec = box_spec("f1", 50, 100_000, &["run.force_theory_t0=true"]);
    let results = runs(&spec);
    let clean = results
        .iter()
        .filter(|r| r.trace.summary.violations == 0 && r.trace.summary.aborted.is_none())
        .count();
    let forced = results
        .iter()
        .filter(|r| r.trace.summary.tuning.t0_forced)
        .count();
    let t0s: Vec<u64> = results.iter().map(|r| r.trace.summary.tuning.t0).collect();
    let (lo, hi) = (t0s.iter().min().unwrap(), t0s.iter().max().unwrap());
    Verdict::new(
        clean >= 49,
        format!("{clean}/50 runs violation-free, T0 in [{lo}, {hi}], T0 forced in {forced} runs"),
    )
}

fn c3_nesting() -> Verdict {
    let spec = box_spec("f1", 100, 100_000, &[]);
    let (mut covered, mut dirty, mut escaping_seeds) = (0, 0, 0);
    for seed in spec.seeds() {
        let st = study_exploration(&spec, seed).expect("exploration study");
        let n = study_nesting(&st, 100_000).expect("nesting study");
        if st.coverage {
            covered += 1;
            dirty += !n.conservative.is_clean() as u32;
        }
        escaping_seeds += (n.naive_escapes > 0) as u32;
    }
    Verdict::new(
        dirty == 0 && escaping_seeds >= 1,
        format!(
            "coverage held in {covered}/100 seeds, {dirty} of them with nesting violations; \
             naive polytope escapes in {escaping_seeds}/100 seeds"
        ),
    )
}

fn c4_coverage() -> Verdict {
    let spec = box_spec("f1", 1000, 100_000, &["run.delta=0.05"]);
    let covered = spec
        .seeds()
        .filter(|&s| {
            study_exploration(&spec, s)
                .expect("exploration study")
                .coverage
        })
        .count();
    let freq = covered as f64 / 1000.0;
    Verdict::new(
        freq >= 0.95,
        format!("coverage frequency {freq:.3} over 1000 explorations (need >= 0.95)"),
    )
}

fn c5_eigenvalue_bound() -> Verdict {
    // T0 sits exactly at the threshold, where the bound is least slack.
    let base = box_spec("f1", 1000, 1_000_000, &["run.delta=0.05"]);
    let mut holds = 0;
    let (mut t0_min, mut t0_max) = (u64::MAX, 0);
    let mut worst: f64 = f64::INFINITY;
    for seed in base.seeds() {
        let plan = plan_exploration(&base, seed).expect("exploration plan");
        let mut s = base.clone();
        s.run.t0 = Some(plan.tuning.conditions.t0_min_chernoff);
        let st = study_exploration(&s, seed).expect("exploration study");
        assert!(st.tuning.eigenvalue_bound_applies);
        t0_min = t0_min.min(st.tuning.t0);
        t0_max = t0_max.max(st.tuning.t0);
        worst = worst.min(st.eigmin.lambda_min / st.eigmin.bound);
        holds += st.eigmin.holds as u32;
    }
    let freq = holds as f64 / 1000.0;
    Verdict::new(
        freq >= 0.95,
        format!(
            "bound held in {freq:.3} of 1000 explorations (need >= 0.95) with T0 at the \
             threshold, T0 in [{t0_min}, {t0_max}], smallest lambda_min/bound {worst:.3}"
        ),
    )
}

fn c6_ogd_bound() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for kind in ["f1", "f2"] {
        let spec = box_spec(kind, 20, 10_000, &["run.safe_set=\"known\""]);
        for r in runs(&spec) {
            let s = &r.trace.summary;
            worst = worst.max(s.optimize_regret / s.ogd_bound);
            if s.optimize_regret.is_nan() || s.optimize_regret > s.ogd_bound || s.aborted.is_some()
            {
                failures.push(format!("{kind}/seed {}", r.seed));
            }
        }
    }
    Verdict::new(
        failures.is_empty(),
        format!(
            "largest regret/bound ratio {worst:.4} over 40 runs; over the bound: {:?}",
            failures
        ),
    )
}

/// Criterion 7(a) and 7(b) numbers for one sweep:
/// (mean R/t at T over mean R/t at 2·T0, spread of mean R/t^{2/3} over t ≥ 3T/4).
fn regret_shape(results: &[SeedResult], horizon: u64) -> (f64, f64) {
    let at = |r: &SeedResult, t: u64| {
        r.trace
            .checkpoints
            .iter()
            .find(|c| c.t == t)
            .unwrap_or_else(|| panic!("seed {} has no checkpoint at t = {t}", r.seed))
            .clone()
    };
    let early = mean(
        results
            .iter()
            .map(|r| at(r, 2 * r.trace.summary.tuning.t0).regret_over_t()),
    );
    let late = mean(results.iter().map(|r| at(r, horizon).regret_over_t()));
    let schedule: Vec<u64> = results[0]
        .trace
        .checkpoints
        .iter()
        .map(|c| c.t)
        .filter(|&t| 4 * t >= 3 * horizon)
        .collect();
    let curve: Vec<f64> = schedule
        .iter()
        .map(|&t| mean(results.iter().map(|r| at(r, t).regret_over_t23())))
        .collect();
    let hi = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = curve.iter().cloned().fold(f64::INFINITY, f64::min);
    (late / early, (hi - lo) / mean(curve.iter().cloned()))
}

fn c7_regret_shape() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in ["f1", "f2"] {
        let spec = box_spec(kind, 6, 100_000, &[]);
        let results = runs(&spec);
        let violations: u64 = results.iter().map(|r| r.trace.summary.violations).sum();
        let (ratio, spread) = regret_shape(&results, 100_000);
        pass &= ratio < 0.2 && spread < 0.25 && violations == 0;
        parts.push(format!(
            "{kind}: (a) ratio {ratio:.3} (need < 0.2), (b) spread {spread:.3} (need < 0.25)"
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

/// A random planar conservative set: 3 to 5 rows in random directions, a
/// random Gram matrix with eigenvalues in [5, 500], radius in [0.2, 3] and
/// offsets in [1, 3] so the origin is always inside.
fn random_soc_instance(rng: &mut impl Rng) -> safe_oco_core::estimation::ConservativeSafeSet {
    let m = rng.random_range(3..=5);
    let rows: Vec<[f64; 2]> = (0..m)
        .map(|k| {
            let angle = std::f64::consts::TAU * (k as f64 + rng.random_range(-0.3..0.3)) / m as f64;
            let scale = rng.random_range(0.5..1.0);
            [scale * angle.cos(), scale * angle.sin()]
        })
        .collect();
    let b: Vec<f64> = (0..m).map(|_| rng.random_range(1.0..3.0)).collect();
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (c, s) = (theta.cos(), theta.sin());
    let (e1, e2) = (rng.random_range(5.0..500.0), rng.random_range(5.0..500.0));
    let gram = Matrix::from_rows(&[
        [c * c * e1 + s * s * e2, c * s * (e1 - e2)],
        [c * s * (e1 - e2), s * s * e1 + c * c * e2],
    ])
    .unwrap();
    let a = Matrix::from_rows(&rows).unwrap();
    let est = RlsEstimate::from_parts(a, gram, 0.5).unwrap();
    let beta = rng.random_range(0.2..3.0);
    build_conservative_set(est, beta, &b, AmbientSet::symmetric(2, 4.0).unwrap()).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn c8_projection() -> Verdict {
    let mut rng = stream(8, Stream::Verification);
    let (mut worst_oracle, mut worst_resolution, mut oracle_fail) = (0.0f64, 0.0f64, 0);
    let (mut worst_expansion, mut worst_idem, mut pair_fail) = (0.0f64, 0.0f64, 0);
    for k in 0..200 {
        let set = random_soc_instance(&mut rng);
        let proj = Projector::new(&set, DEFAULT_EPS_OPT).expect("nonempty set");
        let z = [rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0)];
        let ipm = proj.project(&z, None).expect("projection").point;
        let grid = grid_project_oracle(
            |x| set.contains(x).unwrap(),
            &z,
            [-4.0, -4.0],
            [4.0, 4.0],
            100,
            3600,
        )
        .expect("oracle finds a feasible point");
        let err = dist(&ipm, &grid.point);
        worst_oracle = worst_oracle.max(err);
        worst_resolution = worst_resolution.max(grid.resolution);
        if err.is_nan() || err > 1e-4 + grid.resolution {
            oracle_fail += 1;
            eprintln!(
                "instance {k}: z = {z:?}, ipm {ipm:?}, oracle {:?}, error {err:e}",
                grid.point
            );
        }

        for _ in 0..5 {
            let z1 = [rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0)];
            let z2 = [rng.random_range(-7.0..7.0), rng.random_range(-7.0..7.0)];
            let p1 = proj.project(&z1, None).expect("projection").point;
            let p2 = proj.project(&z2, None).expect("projection").point;
            let excess = dist(&p1, &p2) - dist(&z1, &z2);
            let idem = dist(&proj.project(&p1, None).expect("projection").point, &p1);
            worst_expansion = worst_expansion.max(excess);
            worst_idem = worst_idem.max(idem);
            if excess > 1e-6 || idem > 1e-6 {
                pair_fail += 1;
            }
        }
    }
    Verdict::new(
        oracle_fail == 0 && pair_fail == 0,
        format!(
            "oracle: {oracle_fail}/200 beyond 1e-4 + resolution (worst {worst_oracle:.2e}, \
             resolution <= {worst_resolution:.1e}); pairs: {pair_fail}/1000 failing \
             (worst expansion {worst_expansion:.1e}, worst idempotence gap {worst_idem:.1e})"
        ),
    )
}

fn c9_datacenter() -> Verdict {
    let spec = spec(
        "seed = 1\nn_seeds = 6\nscenario.kind = \"datacenter\"\nscenario.lambda_dc = 5.772\nrun.horizon = 10000\n",
        &[],
    );
    let results = runs(&spec);
    let dirty_checkpoints: usize = results
        .iter()
        .map(|r| {
            r.trace
                .checkpoints
                .iter()
                .filter(|c| c.violations > 0)
                .count()
        })
        .sum();
    let aborted = results
        .iter()
        .filter(|r| r.trace.summary.aborted.is_some())
        .count();
    let (ratio, _) = regret_shape(&results, 10_000);
    let prices = if spec.synthetic_prices() {
        "synthetic"
    } else {
        "file"
    };
    Verdict::new(
        dirty_checkpoints == 0 && aborted == 0 && ratio < 0.2,
        format!(
            "{prices} prices: {dirty_checkpoints} checkpoints with violations, {aborted} aborted; \
             R(T)/T over R(2T0)/(2T0) = {ratio:.3} (need < 0.2)"
        ),
    )
}

fn csv_bodies(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .filter(|p| p.file_name().is_some_and(|n| n != "timing.csv"))
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let body: String = text
                .lines()
                .filter(|l| !l.starts_with("# generated"))
                .map(|l| format!("{l}\n"))
                .collect();
            (p.file_name().unwrap().to_string_lossy().into_owned(), body)
        })
        .collect();
    files.sort();
    files
}

fn c10_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for (i, threads) in [(0, 1), (1, 0)] {
        let mut spec = box_spec("f2", 4, 10_000, &[]);
        spec.output_dir = tmp.path().join(format!("run{i}"));
        let opts = GlobalOptions::default();
        let out = OutputDir::create(&spec.output_dir, opts.force).unwrap();
        run_experiment(&spec, &out, threads, false).unwrap();
        bodies.push(csv_bodies(&spec.output_dir));
    }
    let differing: Vec<&str> = bodies[0]
        .iter()
        .zip(&bodies[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    Verdict::new(
        bodies[0].len() == bodies[1].len() && differing.is_empty() && !bodies[0].is_empty(),
        format!(
            "{} CSV files compared across two runs, differing: {differing:?}",
            bodies[0].len()
        ),
    )
}

const CRITERIA: [(u32, &str, Check, Duration); 10] = [
    (
        1,
        "exploration safety",
        c1_exploration_safety,
        Duration::from_secs(60),
    ),
    (
        2,
        "full-run safety",
        c2_full_run_safety,
        Duration::from_secs(600),
    ),
    (3, "set nesting", c3_nesting, Duration::from_secs(120)),
    (
        4,
        "confidence coverage",
        c4_coverage,
        Duration::from_secs(300),
    ),
    (
        5,
        "eigenvalue bound",
        c5_eigenvalue_bound,
        Duration::from_secs(300),
    ),
    (6, "OGD regret bound", c6_ogd_bound, Duration::from_secs(60)),
    (7, "regret shape", c7_regret_shape, Duration::from_secs(900)),
    (
        8,
        "projection correctness",
        c8_projection,
        Duration::from_secs(120),
    ),
    (
        9,
        "data-center scenario",
        c9_datacenter,
        Duration::from_secs(120),
    ),
    (10, "determinism", c10_determinism, Duration::MAX),
];

fn main() -> ExitCode {
    // Criterion numbers on the command line select a subset; libtest flags are ignored.
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, check, budget) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = v.pass && in_time;
        failed += !pass as u32;
        let timing = if budget == Duration::MAX {
            format!("{:.1}s", elapsed.as_secs_f64())
        } else {
            format!("{:.1}s of {}s", elapsed.as_secs_f64(), budget.as_secs())
        };
        println!(
            "{} criterion {id:>2} ({name}): {} [{timing}{}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
