//! Seeded experiment sweeps: resolve a config into a spec, build each seed's
//! world, run in parallel and write the artifacts from one collector.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use safe_oco_core::algorithm::{run, RegretTrace, RunConfig, SafeSetMode};
use safe_oco_core::environment::{
    make_datacenter, make_f1, make_f2, make_f3, seeded_baseline, Environment, PriceTable, Scenario,
    ScenarioKind,
};
use safe_oco_core::geometry::{AmbientSet, TruePolytope};
use safe_oco_core::projection::DEFAULT_EPS_OPT;
use safe_oco_core::rng::{stream, Stream};

use crate::config::{ConfigError, ConfigFile};
use crate::lbmp::{load_lbmp_csv, resolve_price_path};
use crate::output::{aggregate, write_band, write_trace, OutputDir, TracePoint};
use crate::HarnessError;

pub const DEFAULT_HORIZON: u64 = 100_000;
pub const DEFAULT_LAMBDA_DC: f64 = 5.772;

/// Algorithm settings shared by every seed; unset bounds come from the instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTemplate {
    pub horizon: u64,
    pub t0: Option<u64>,
    pub eta: Option<f64>,
    pub delta: f64,
    pub lambda: f64,
    pub norm_bound: Option<f64>,
    pub gradient_bound: Option<f64>,
    pub row_norm_bound: Option<f64>,
    pub noise: Option<f64>,
    pub eps_opt: f64,
    pub checkpoints: Option<Vec<u64>>,
    pub force_theory_t0: bool,
    pub safe_set: SafeSetMode,
    pub export_exploration: bool,
}

#[derive(Debug, Clone)]
pub enum PriceSource {
    Synthetic,
    File(PathBuf, Arc<PriceTable>),
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub c_lower: f64,
    pub c_upper: f64,
    pub lambda_dc: f64,
    pub prices: PriceSource,
}

#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    pub polytope: TruePolytope,
    pub ambient: AmbientSet,
    /// Fixed baseline; drawn per seed when absent.
    pub baseline: Option<Vec<f64>>,
    pub baseline_min_gap: f64,
    pub noise_std: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub master_seed: u64,
    pub n_seeds: usize,
    pub output_dir: PathBuf,
    pub run: RunTemplate,
    pub scenario: ScenarioSpec,
    pub environment: EnvironmentSpec,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(ConfigError::Invalid(msg.into()))
}

fn box_defaults() -> (TruePolytope, AmbientSet) {
    (
        TruePolytope::centered_box(2, 3.0).expect("valid box"),
        AmbientSet::symmetric(2, 4.0).expect("valid box"),
    )
}

/// Per-zone caps of 30 and a total budget of 100 over `[0, 30]^5`.
fn datacenter_defaults() -> (TruePolytope, AmbientSet, Vec<f64>) {
    let d = 5;
    let mut rows: Vec<[f64; 5]> = (0..d)
        .map(|k| {
            let mut r = [0.0; 5];
            r[k] = 1.0;
            r
        })
        .collect();
    rows.push([1.0; 5]);
    let mut b = vec![30.0; d];
    b.push(100.0);
    (
        TruePolytope::from_rows(&rows, &b).expect("valid rows"),
        AmbientSet::new(vec![0.0; d], vec![30.0; d]).expect("valid box"),
        vec![5.0; d],
    )
}

impl ExperimentSpec {
    /// Fills defaults; `data_dir` is the price-file directory, if any.
    pub fn from_config(cfg: &ConfigFile, data_dir: Option<&Path>) -> Result<Self, HarnessError> {
        let kind_name = cfg.scenario.kind.as_deref().unwrap_or("f1");
        let kind = ScenarioKind::parse(kind_name)
            .ok_or_else(|| invalid(format!("unknown scenario kind `{kind_name}`")))?;

        let env = &cfg.environment;
        let (default_p, default_amb, default_baseline) = match kind {
            ScenarioKind::DataCenter => {
                let (p, a, x) = datacenter_defaults();
                (p, a, Some(x))
            }
            _ => {
                let (p, a) = box_defaults();
                (p, a, None)
            }
        };
        let polytope = match (&env.constraint_matrix, &env.constraint_offsets) {
            (Some(m), Some(b)) => TruePolytope::from_rows(m, b)?,
            (None, None) => default_p,
            _ => {
                return Err(invalid(
                    "constraint_matrix and constraint_offsets must be given together",
                ))
            }
        };
        let ambient = match (&env.box_lower, &env.box_upper) {
            (Some(l), Some(u)) => AmbientSet::new(l.clone(), u.clone())?,
            (None, None) => default_amb,
            _ => return Err(invalid("box_lower and box_upper must be given together")),
        };
        if ambient.dim() != polytope.dim() {
            return Err(invalid(format!(
                "box has dimension {} but constraints have {}",
                ambient.dim(),
                polytope.dim()
            )));
        }
        let baseline = env.baseline.clone().or(if env.constraint_matrix.is_none() {
            default_baseline
        } else {
            None
        });
        let noise_std = env.noise_std.unwrap_or(1e-3f64.sqrt());
        let environment = EnvironmentSpec {
            polytope,
            ambient,
            baseline,
            baseline_min_gap: env.baseline_min_gap.unwrap_or(1.5),
            noise_std,
        };

        let sc = &cfg.scenario;
        let prices = if kind == ScenarioKind::DataCenter {
            match resolve_price_path(sc.prices_path.as_deref(), data_dir) {
                Some(path) => {
                    let table = load_lbmp_csv(&path)?;
                    PriceSource::File(path, Arc::new(table))
                }
                None => PriceSource::Synthetic,
            }
        } else {
            PriceSource::Synthetic
        };
        let scenario = ScenarioSpec {
            kind,
            c_lower: sc.c_lower.unwrap_or(0.5),
            c_upper: sc.c_upper.unwrap_or(2.0),
            lambda_dc: sc.lambda_dc.unwrap_or(DEFAULT_LAMBDA_DC),
            prices,
        };

        let r = &cfg.run;
        let safe_set = match r.safe_set.as_deref().unwrap_or("estimated") {
            "estimated" => SafeSetMode::Estimated,
            "known" => SafeSetMode::Known,
            other => {
                return Err(invalid(format!(
                    "run.safe_set must be estimated or known, got `{other}`"
                )))
            }
        };
        let run = RunTemplate {
            horizon: r.horizon.unwrap_or(match kind {
                ScenarioKind::DataCenter => 10_000,
                _ => DEFAULT_HORIZON,
            }),
            t0: r.t0,
            eta: r.eta,
            delta: r.delta.unwrap_or(1e-3),
            lambda: r.lambda.unwrap_or(0.5),
            norm_bound: r.norm_bound,
            gradient_bound: r.gradient_bound,
            row_norm_bound: r.row_norm_bound,
            noise: r.noise,
            eps_opt: r.eps_opt.unwrap_or(DEFAULT_EPS_OPT),
            checkpoints: r.checkpoints.clone(),
            force_theory_t0: r.force_theory_t0.unwrap_or(false),
            safe_set,
            export_exploration: r.export_exploration.unwrap_or(true),
        };
        let n_seeds = cfg.n_seeds.unwrap_or(1);
        if n_seeds == 0 {
            return Err(invalid("n_seeds must be at least 1"));
        }
        Ok(Self {
            name: cfg
                .name
                .clone()
                .unwrap_or_else(|| format!("{}_experiment", kind.name())),
            master_seed: cfg.seed.unwrap_or(0),
            n_seeds,
            output_dir: cfg
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("out")),
            run,
            scenario,
            environment,
        })
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(|i| self.master_seed.wrapping_add(i))
    }

    pub fn synthetic_prices(&self) -> bool {
        self.scenario.kind == ScenarioKind::DataCenter
            && matches!(self.scenario.prices, PriceSource::Synthetic)
    }

    /// Comment lines describing the experiment, identical across reruns.
    pub fn meta(&self) -> Vec<String> {
        let prices = match &self.scenario.prices {
            PriceSource::File(p, _) => p.display().to_string(),
            PriceSource::Synthetic => "synthetic".into(),
        };
        let mut m = vec![format!(
            "experiment={} scenario={} horizon={} n_seeds={} master_seed={}",
            self.name,
            self.scenario.kind.name(),
            self.run.horizon,
            self.n_seeds,
            self.master_seed
        )];
        match self.scenario.kind {
            ScenarioKind::Linear | ScenarioKind::Tracking => m.push(format!(
                "c_lower={} c_upper={}",
                self.scenario.c_lower, self.scenario.c_upper
            )),
            ScenarioKind::DataCenter => m.push(format!(
                "lambda_dc={} prices={} synthetic={}",
                self.scenario.lambda_dc,
                prices,
                self.synthetic_prices()
            )),
            ScenarioKind::Resource => {}
        }
        m.push(format!(
            "safe_set={} checkpoints={}",
            match self.run.safe_set {
                SafeSetMode::Estimated => "estimated",
                SafeSetMode::Known => "known",
            },
            if self.run.checkpoints.is_some() {
                "configured"
            } else {
                "log-spaced+linear"
            }
        ));
        m
    }

    /// The seed's environment, with its baseline drawn if none is fixed.
    pub fn environment_for(&self, seed: u64) -> Result<Environment, HarnessError> {
        let e = &self.environment;
        let baseline = match &e.baseline {
            Some(x) => x.clone(),
            None => seeded_baseline(&e.polytope, &e.ambient, e.baseline_min_gap, seed)?,
        };
        Ok(Environment::new(
            e.polytope.clone(),
            e.ambient.clone(),
            baseline,
            e.noise_std,
            seed,
        )?)
    }

    /// Run settings for one seed; unset bounds are derived from the instance.
    pub fn run_config_for(&self, seed: u64, gradient_bound: f64) -> RunConfig {
        let e = &self.environment;
        let r = &self.run;
        RunConfig {
            horizon: r.horizon,
            t0_override: r.t0,
            eta_override: r.eta,
            delta: r.delta,
            lambda: r.lambda,
            norm_bound: r.norm_bound.unwrap_or_else(|| e.ambient.norm_bound()),
            gradient_bound: r.gradient_bound.unwrap_or(gradient_bound),
            row_norm_bound: r
                .row_norm_bound
                .unwrap_or_else(|| e.polytope.row_norm_bound()),
            noise: r.noise.unwrap_or(e.noise_std),
            rng_seed: seed,
            checkpoints: r.checkpoints.clone().unwrap_or_default(),
            eps_opt: r.eps_opt,
            force_theory_t0: r.force_theory_t0,
            safe_set: r.safe_set,
            keep_exploration: false,
        }
    }

    /// The seed's cost sequence.
    pub fn scenario_for(&self, seed: u64) -> Result<Scenario, HarnessError> {
        let e = &self.environment;
        let horizon = usize::try_from(self.run.horizon)
            .map_err(|_| invalid("horizon does not fit in memory"))?;
        let d = e.ambient.dim();
        let mut rng = stream(seed, Stream::Scenario);
        let s = &self.scenario;
        Ok(match s.kind {
            ScenarioKind::Linear => make_f1(&mut rng, s.c_lower, s.c_upper, d, horizon)?,
            ScenarioKind::Tracking => {
                make_f2(&mut rng, s.c_lower, s.c_upper, d, horizon, &e.ambient)?
            }
            ScenarioKind::Resource => make_f3(&mut rng, d, horizon)?,
            ScenarioKind::DataCenter => match &s.prices {
                PriceSource::File(_, table) => {
                    make_datacenter(table, s.lambda_dc, horizon, &e.ambient)?
                }
                PriceSource::Synthetic => {
                    let table = PriceTable::synthetic(&mut rng, horizon);
                    make_datacenter(&table, s.lambda_dc, horizon, &e.ambient)?
                }
            },
        })
    }

    /// Builds the environment, cost sequence and run settings of one seed.
    pub fn instantiate(&self, seed: u64) -> Result<Instance, HarnessError> {
        let env = self.environment_for(seed)?;
        let scenario = self.scenario_for(seed)?;
        let config = self.run_config_for(seed, scenario.gradient_bound());
        Ok(Instance {
            seed,
            env,
            scenario,
            config,
        })
    }
}

/// Everything one seeded run needs.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub env: Environment,
    pub scenario: Scenario,
    pub config: RunConfig,
}

impl Instance {
    pub fn run(mut self) -> Result<SeedResult, HarnessError> {
        let start = Instant::now();
        let mut trace = run(&self.config, &mut self.env, &self.scenario)?;
        trace.summary.wallclock_secs = Some(start.elapsed().as_secs_f64());
        Ok(SeedResult {
            seed: self.seed,
            baseline: self.env.baseline().action().to_vec(),
            trace,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub baseline: Vec<f64>,
    pub trace: RegretTrace,
}

/// Results of a sweep plus the files written.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub results: Vec<SeedResult>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn total_violations(&self) -> u64 {
        self.results
            .iter()
            .map(|r| r.trace.summary.violations)
            .sum()
    }

    pub fn all_completed(&self) -> bool {
        self.results
            .iter()
            .all(|r| r.trace.summary.aborted.is_none())
    }

    /// Exit status 0 only for complete, violation-free sweeps.
    pub fn success(&self) -> bool {
        self.all_completed() && self.total_violations() == 0
    }

    pub fn summary_line(&self) -> String {
        let finals: Vec<f64> = self
            .results
            .iter()
            .map(|r| r.trace.summary.final_regret)
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len().max(1) as f64;
        let min = finals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unmet = self
            .results
            .iter()
            .filter(|r| r.trace.summary.theory_condition_unmet)
            .count();
        let aborted = self
            .results
            .iter()
            .filter(|r| r.trace.summary.aborted.is_some())
            .count();
        format!(
            "runs={} final_regret mean={mean:.6} min={min:.6} max={max:.6} violations={} theory_condition_unmet={unmet} aborted={aborted}",
            self.results.len(),
            self.total_violations()
        )
    }
}

/// Runs every seed on a pool of `threads` workers (0 = rayon default).
pub fn run_seeds(spec: &ExperimentSpec, threads: usize) -> Result<Vec<SeedResult>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let seeds: Vec<u64> = spec.seeds().collect();
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut inst = spec.instantiate(seed)?;
                inst.config.keep_exploration =
                    spec.run.export_exploration && seed == spec.master_seed;
                inst.run()
            })
            .collect()
    })
}

/// Runs a sweep and writes traces, aggregates, the summary and (optionally) charts.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out: &OutputDir,
    threads: usize,
    svg: bool,
) -> Result<ExperimentOutcome, HarnessError> {
    let results = run_seeds(spec, threads)?;
    let meta = spec.meta();
    let mut files = Vec::new();
    for r in &results {
        let s = &r.trace.summary;
        let mut m = meta.clone();
        m.push(format!(
            "seed={} t0={} eta={} theory_condition_unmet={} synthetic_prices={}",
            r.seed, s.tuning.t0, s.tuning.eta, s.theory_condition_unmet, s.synthetic_prices
        ));
        files.push(write_trace(out, r.seed, &r.trace, &m)?);
    }
    let points: Vec<Vec<TracePoint>> = results
        .iter()
        .map(|r| r.trace.checkpoints.iter().map(TracePoint::from).collect())
        .collect();
    files.extend(write_plots(out, &points, &meta, svg)?);
    files.push(write_summary(out, &results, &meta)?);
    files.push(write_timing(out, &results)?);
    if let Some(r) = results.iter().find(|r| r.trace.exploration.is_some()) {
        files.push(write_exploration(out, spec, r, &meta)?);
    }
    Ok(ExperimentOutcome { results, files })
}

/// Writes the two aggregate CSVs and, if asked, their charts.
pub fn write_plots(
    out: &OutputDir,
    traces: &[Vec<TracePoint>],
    meta: &[String],
    svg: bool,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut files = Vec::new();
    let over_t = aggregate(traces, |p| p.regret_over_t)?;
    let over_t23 = aggregate(traces, |p| p.regret_over_t23)?;
    files.push(write_band(out, "plot_rt_over_t.csv", &over_t, meta)?);
    files.push(write_band(out, "plot_rt_over_t23.csv", &over_t23, meta)?);
    if svg {
        files.push(out.write_text(
            "plot_rt_over_t.svg",
            &crate::svg::band_chart("R(t)/t", "R(t)/t", &over_t),
        )?);
        files.push(out.write_text(
            "plot_rt_over_t23.svg",
            &crate::svg::band_chart("R(t)/t^(2/3)", "R(t)/t^(2/3)", &over_t23),
        )?);
    }
    Ok(files)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_summary(
    out: &OutputDir,
    results: &[SeedResult],
    meta: &[String],
) -> Result<PathBuf, HarnessError> {
    let mut f = out.open("summary.csv", meta)?;
    f.line(
        "seed,final_regret,final_regret_fixed,violations,t0,eta,horizon_ok,shrunk_set_condition,\
         eigenvalue_condition,t0_forced,gamma,beta,tau_in,optimize_regret,ogd_bound,\
         synthetic_prices,aborted",
    )?;
    for r in results {
        let s = &r.trace.summary;
        let est = r.trace.estimate.as_ref();
        f.row([
            r.seed.to_string(),
            s.final_regret.to_string(),
            s.final_regret_fixed.to_string(),
            s.violations.to_string(),
            s.tuning.t0.to_string(),
            s.tuning.eta.to_string(),
            s.tuning.horizon_ok.to_string(),
            s.tuning.shrunk_contains_baseline.to_string(),
            s.tuning.eigenvalue_bound_applies.to_string(),
            s.tuning.t0_forced.to_string(),
            s.gamma.to_string(),
            fmt_opt(est.map(|e| e.beta)),
            fmt_opt(est.map(|e| e.tau_in)),
            s.optimize_regret.to_string(),
            s.ogd_bound.to_string(),
            s.synthetic_prices.to_string(),
            s.aborted
                .clone()
                .unwrap_or_default()
                .replace([',', '\n'], ";"),
        ])?;
    }
    f.finish()
}

fn write_timing(out: &OutputDir, results: &[SeedResult]) -> Result<PathBuf, HarnessError> {
    let mut f = out.open("timing.csv", &[])?;
    f.line("seed,wallclock_secs")?;
    for r in results {
        f.row([r.seed.to_string(), fmt_opt(r.trace.summary.wallclock_secs)])?;
    }
    f.finish()
}

/// Exploration actions of one seed with the baseline and polytope vertices.
fn write_exploration(
    out: &OutputDir,
    spec: &ExperimentSpec,
    r: &SeedResult,
    meta: &[String],
) -> Result<PathBuf, HarnessError> {
    let log = r.trace.exploration.as_ref().expect("checked by caller");
    let d = log.dim();
    let mut m = meta.to_vec();
    m.push(format!("seed={}", r.seed));
    let mut f = out.open("explore_actions.csv", &m)?;
    let cols: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    f.line(&format!("kind,{}", cols.join(",")))?;
    fn row(kind: &str, x: &[f64]) -> Vec<String> {
        std::iter::once(kind.to_string())
            .chain(x.iter().map(|v| v.to_string()))
            .collect()
    }
    for (x, _) in log.iter() {
        f.row(row("action", x))?;
    }
    f.row(row("baseline", &r.baseline))?;
    if d <= 3 {
        for v in spec
            .environment
            .polytope
            .vertices(&spec.environment.ambient)?
        {
            f.row(row("vertex", &v))?;
        }
    }
    f.finish()
}
