//! Subcommand bodies shared by the binary and the integration tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::{load_config, parse_config, ConfigFile};
use crate::experiment::{run_experiment, write_plots, ExperimentOutcome, ExperimentSpec};
use crate::lbmp::DATA_DIR_VAR;
use crate::lemmas::{check_records, study_all, study_exploration, study_nesting};
use crate::output::{read_trace, write_checks, OutputDir, TracePoint};
use crate::HarnessError;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct GlobalOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
    pub svg: bool,
    /// 0 lets the pool pick.
    pub threads: usize,
}

/// Loads the config (or defaults) and applies `--set` overrides and global flags.
pub fn resolve_spec(
    config: Option<&Path>,
    overrides: &[String],
    opts: &GlobalOptions,
) -> Result<ExperimentSpec, HarnessError> {
    let mut cfg: ConfigFile = match config {
        Some(p) => load_config(p, overrides)?,
        None => parse_config("", overrides)?,
    };
    if let Some(seed) = opts.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &opts.out {
        cfg.output_dir = Some(out.clone());
    }
    let data_dir = std::env::var_os(DATA_DIR_VAR).map(PathBuf::from);
    ExperimentSpec::from_config(&cfg, data_dir.as_deref())
}

pub fn cmd_run(
    spec: &ExperimentSpec,
    opts: &GlobalOptions,
) -> Result<ExperimentOutcome, HarnessError> {
    let out = OutputDir::create(&spec.output_dir, opts.force)?;
    let outcome = run_experiment(spec, &out, opts.threads, opts.svg)?;
    for r in &outcome.results {
        let s = &r.trace.summary;
        if let Some(msg) = &s.aborted {
            log::error!("seed {} aborted: {msg}", r.seed);
        }
        if s.violations > 0 {
            log::error!(
                "seed {} violated the true constraints {} times (first at t = {})",
                r.seed,
                s.violations,
                s.first_violation.unwrap_or(0)
            );
        }
    }
    Ok(outcome)
}

/// Report of a `verify` invocation.
#[derive(Debug)]
pub struct VerifyOutcome {
    pub records: Vec<crate::output::CheckRecord>,
    pub report: String,
    /// Exploration safety and coverage-conditioned nesting all held.
    pub safe: bool,
    pub file: PathBuf,
}

pub fn cmd_verify(
    spec: &ExperimentSpec,
    samples: u64,
    opts: &GlobalOptions,
) -> Result<VerifyOutcome, HarnessError> {
    let out = OutputDir::create(&spec.output_dir, opts.force)?;
    let studies = study_all(spec, opts.threads)?;
    let mut records = Vec::new();
    let mut covered = BTreeMap::new();
    for st in &studies {
        let nesting = if samples > 0 {
            Some(study_nesting(st, samples)?)
        } else {
            None
        };
        covered.insert(st.seed, st.coverage);
        records.extend(check_records(st, nesting.as_ref()));
    }

    // name -> (holds, total, holds | coverage, total | coverage)
    let mut tally: BTreeMap<&str, [u64; 4]> = BTreeMap::new();
    for r in &records {
        let e = tally.entry(r.check_name.as_str()).or_default();
        e[0] += r.holds as u64;
        e[1] += 1;
        if covered[&r.seed] {
            e[2] += r.holds as u64;
            e[3] += 1;
        }
    }
    let mut report = format!(
        "{} seeds, delta = {}, {} nesting samples per seed\n",
        studies.len(),
        spec.run.delta,
        samples
    );
    for (name, [h, n, hc, nc]) in &tally {
        report.push_str(&format!(
            "{name:<32} holds {h}/{n}  (given coverage: {hc}/{nc})\n"
        ));
    }
    let safe = records.iter().all(|r| {
        let conditional = r.check_name.starts_with("nesting_");
        !(r.check_name == "exploration_safety" || (conditional && covered[&r.seed])) || r.holds
    });
    let file = write_checks(&out, "verification.csv", &records, &spec.meta())?;
    Ok(VerifyOutcome {
        records,
        report,
        safe,
        file,
    })
}

pub fn cmd_plot(input: &Path, opts: &GlobalOptions) -> Result<Vec<PathBuf>, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|source| HarnessError::Io {
            path: input.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_seed") && n.ends_with(".csv"))
        })
        .collect();
    // Numeric seed order keeps the output independent of directory listing order.
    paths.sort_by_key(|p| {
        p.file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.trim_start_matches("trace_seed").parse::<u64>().ok())
    });
    if paths.is_empty() {
        return Err(HarnessError::Aggregate(format!(
            "no trace_seed*.csv files in {}",
            input.display()
        )));
    }
    let traces: Vec<Vec<TracePoint>> = paths
        .iter()
        .map(|p| read_trace(p))
        .collect::<Result<_, _>>()?;
    let out = OutputDir::create(opts.out.as_deref().unwrap_or(input), opts.force)?;
    let meta = vec![format!("aggregated from {} traces", traces.len())];
    write_plots(&out, &traces, &meta, opts.svg)
}

/// Estimate diagnostics of one seed, printed and written to `estimate.csv`.
pub fn cmd_inspect(
    spec: &ExperimentSpec,
    seed: u64,
    samples: u64,
    opts: &GlobalOptions,
) -> Result<(String, PathBuf), HarnessError> {
    let st = study_exploration(spec, seed)?;
    let p = st.env.polytope();
    let est = &st.estimate;
    let mut text = String::new();
    let c = &st.tuning.conditions;
    text.push_str(&format!(
        "seed {seed}: baseline {:?}, safety gap {}\n",
        st.env.baseline().action(),
        st.env.baseline().safety_gap()
    ));
    text.push_str(&format!(
        "gamma {} sigma_zeta^2 {} T0 {} (eigenvalue condition {} / shrunk-set condition {}; horizon_ok {})\n",
        st.explore.gamma,
        st.explore.sigma_zeta_sq,
        st.tuning.t0,
        c.t0_min_chernoff,
        c.t0_min_theorem,
        st.tuning.horizon_ok
    ));
    text.push_str(&format!(
        "beta {} lambda_min(V) {} (bound {}) tau_in {} coverage {} (max row error {})\n",
        st.beta,
        st.eigmin.lambda_min,
        st.eigmin.bound,
        st.tau_in(),
        st.coverage,
        st.coverage_stat
    ));
    for i in 0..p.num_constraints() {
        text.push_str(&format!(
            "row {i}: estimate {:?} true {:?} b {}\n",
            est.a_hat().row(i),
            p.matrix().row(i),
            p.offsets()[i]
        ));
    }
    if samples > 0 {
        let n = study_nesting(&st, samples)?;
        text.push_str(&format!(
            "nesting over {samples} samples: shrunk {} conservative {} true {}; violations {} / {}; naive escapes {}\n",
            n.conservative.in_shrunk,
            n.conservative.in_conservative,
            n.conservative.in_true,
            n.conservative.violations_shrunk_not_conservative,
            n.conservative.violations_conservative_not_true,
            n.naive_escapes
        ));
    }

    let out = OutputDir::create(&spec.output_dir, opts.force)?;
    let mut meta = spec.meta();
    meta.push(format!("seed={seed}"));
    let mut f = out.open("estimate.csv", &meta)?;
    f.line("quantity,row,col,value")?;
    let d = p.dim();
    for i in 0..p.num_constraints() {
        for j in 0..d {
            f.row([
                "a_hat".into(),
                i.to_string(),
                j.to_string(),
                est.a_hat()[(i, j)].to_string(),
            ])?;
            f.row([
                "a_true".into(),
                i.to_string(),
                j.to_string(),
                p.matrix()[(i, j)].to_string(),
            ])?;
        }
    }
    for i in 0..d {
        for j in 0..d {
            f.row([
                "gram".into(),
                i.to_string(),
                j.to_string(),
                est.gram()[(i, j)].to_string(),
            ])?;
        }
    }
    for (name, v) in [
        ("beta", st.beta),
        ("lambda_min", st.eigmin.lambda_min),
        ("eigmin_bound", st.eigmin.bound),
        ("tau_in", st.tau_in()),
        ("gamma", st.explore.gamma),
        ("t0", st.tuning.t0 as f64),
        ("coverage", st.coverage as u8 as f64),
    ] {
        f.row([
            name.to_string(),
            String::new(),
            String::new(),
            v.to_string(),
        ])?;
    }
    let path = f.finish()?;
    Ok((text, path))
}
