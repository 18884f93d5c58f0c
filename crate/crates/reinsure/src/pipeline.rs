//! The work behind each subcommand, producing in-memory tables.
//!
//! Nothing here touches the filesystem; [`crate::cli`] writes the tables and
//! the manifest. Parallel sections use the ambient rayon pool and collect in
//! index order, so results do not depend on the number of workers.

use std::time::Instant;

use rayon::prelude::*;
use reinsure_core::model::{Horizon, ValidatedModel, ValidationReport};
use reinsure_core::montecarlo::{
    estimate_reward, simulate_path, Control, PathBatch, SimulationError, SimulationResult,
};
use reinsure_core::odes::{solve, GSolution, SolveError};
use reinsure_core::strategy::{
    check_admissibility, equilibrium_strategy, regime_classification, value_function,
    AdmissibilityReport, StrategyPath, ValueError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{parse_number, Config, ConfigError, Param};
use crate::output::{num, Table};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid configuration: {0}")]
    Invalid(#[from] ValidationReport),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Value(#[from] ValueError),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// `1` for input and IO problems, `2` for numerical breakdown.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Solve(_) | RunError::Simulation(_) => 2,
            _ => 1,
        }
    }
}

/// Exit code when the admissibility conditions fail.
pub const EXIT_INADMISSIBLE: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub label: String,
    pub terminal: f64,
    pub steps: usize,
    pub step: f64,
}

impl GridRecord {
    fn of(label: impl Into<String>, h: &Horizon) -> Self {
        Self {
            label: label.into(),
            terminal: h.terminal,
            steps: h.steps,
            step: h.step(),
        }
    }
}

/// Everything a subcommand produced.
#[derive(Debug, Default)]
pub struct Run {
    pub tables: Vec<Table>,
    pub timings: Vec<Timing>,
    pub grids: Vec<GridRecord>,
    /// Human-readable lines for standard output.
    pub summary: Vec<String>,
    /// Set when the admissibility conditions fail; outputs are still valid.
    pub inadmissible: Option<String>,
}

impl Run {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            stage: stage.to_owned(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    fn absorb(&mut self, other: Run, dir: &str) {
        self.tables
            .extend(other.tables.into_iter().map(|t| t.nested(dir)));
        self.timings
            .extend(other.timings.into_iter().map(|t| Timing {
                stage: format!("{dir}/{}", t.stage),
                seconds: t.seconds,
            }));
        self.grids
            .extend(other.grids.into_iter().map(|g| GridRecord {
                label: format!("{dir}/{}", g.label),
                ..g
            }));
        self.summary.extend(other.summary);
    }
}

pub fn g_table(sol: &GSolution) -> Table {
    let mut t = Table::new("g.csv", &["t", "atom_index", "gamma", "g1", "g2", "g3"]);
    for (m, &time) in sol.times.iter().enumerate() {
        for atom in 0..sol.atoms() {
            t.push(vec![
                num(time),
                atom.to_string(),
                num(sol.gammas[atom]),
                num(sol.g1[atom][m]),
                num(sol.g2[atom][m]),
                num(sol.g3[atom][m]),
            ]);
        }
    }
    t
}

pub fn strategy_table(path: &StrategyPath) -> Table {
    let mut t = Table::new("strategy.csv", &["t", "q_hat", "pi_hat", "regime"]);
    for m in 0..path.len() {
        t.push(vec![
            num(path.times[m]),
            num(path.q_hat[m]),
            num(path.pi_hat[m]),
            path.regime[m].as_str().to_owned(),
        ]);
    }
    t
}

pub fn regime_table(model: &ValidatedModel) -> Table {
    let report = regime_classification(model);
    let mut t = Table::new(
        "regime.csv",
        &[
            "kernel_ratio",
            "reinsurance_throughout",
            "crossover_time_to_maturity",
        ],
    );
    t.push(vec![
        num(report.ratio),
        report.reinsurance_throughout.to_string(),
        report
            .crossover_time_to_maturity
            .map(num)
            .unwrap_or_default(),
    ]);
    t
}

pub fn admissibility_tables(report: &AdmissibilityReport, sol: &GSolution) -> [Table; 2] {
    let mut detail = Table::new(
        "admissibility.csv",
        &["t", "atom_index", "lhs", "rhs", "margin"],
    );
    for (m, &time) in report.times.iter().enumerate() {
        for atom in 0..report.lhs.len() {
            detail.push(vec![
                num(time),
                atom.to_string(),
                num(report.lhs[atom][m]),
                num(report.rhs),
                num(report.margin(atom, m)),
            ]);
        }
    }
    let mut summary = Table::new(
        "admissibility_summary.csv",
        &[
            "atom_index",
            "gamma",
            "max_lhs",
            "rhs",
            "inequality_holds",
            "max_g2",
            "g2_nonpositive",
        ],
    );
    for atom in 0..report.lhs.len() {
        let max_lhs = report.lhs[atom]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let max_g2 = sol.g2[atom]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        summary.push(vec![
            atom.to_string(),
            num(sol.gammas[atom]),
            num(max_lhs),
            num(report.rhs),
            (max_lhs <= report.rhs).to_string(),
            num(max_g2),
            report.g2_nonpositive[atom].to_string(),
        ]);
    }
    [detail, summary]
}

/// A point `(t, x, v)` at which to evaluate the value function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub t: f64,
    pub x: f64,
    pub v: f64,
}

impl std::str::FromStr for Query {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s.split(',').map(parse_number).collect::<Result<_, _>>()?;
        match parts[..] {
            [t, x, v] => Ok(Query { t, x, v }),
            _ => Err(format!("expected `t,x,v`, found `{s}`")),
        }
    }
}

pub fn solve_run(config: &Config, query: Option<Query>) -> Result<Run, RunError> {
    let mut run = Run::default();
    let model = config.model()?;
    run.grids.push(GridRecord::of("solve", model.horizon()));
    let sol = run.time("solve", || solve(&model))?;
    let path = equilibrium_strategy(&model, &sol);
    let tables = run.time("export", || {
        [g_table(&sol), strategy_table(&path), regime_table(&model)]
    });
    run.tables.extend(tables);
    run.summary.push(format!(
        "q_hat(0) = {}, pi_hat(0) = {}",
        num(path.q_hat[0]),
        num(path.pi_hat[0])
    ));
    if let Some(q) = query {
        let surface = value_function(&model, &sol)?;
        let utility = surface.utility(q.t, q.x, q.v)?;
        let mut t = Table::new(
            "query.csv",
            &["t", "x", "v", "atom_index", "gamma", "y", "utility"],
        );
        for (atom, &gamma) in sol.gammas.iter().enumerate() {
            let y = surface.expectation(q.t, q.x, q.v, atom)?;
            t.push(vec![
                num(q.t),
                num(q.x),
                num(q.v),
                atom.to_string(),
                num(gamma),
                num(y),
                num(utility),
            ]);
            run.summary.push(format!(
                "Y[{atom}](t={}, x={}, v={}) = {}",
                q.t,
                q.x,
                q.v,
                num(y)
            ));
        }
        run.summary.push(format!("U = {}", num(utility)));
        run.tables.push(t);
    }
    Ok(run)
}

pub fn check_run(config: &Config) -> Result<Run, RunError> {
    let mut run = Run::default();
    let model = config.model()?;
    run.grids.push(GridRecord::of("check", model.horizon()));
    let sol = run.time("solve", || solve(&model))?;
    let report = run.time("check", || check_admissibility(&model, &sol));
    run.tables.extend(admissibility_tables(&report, &sol));
    run.summary.push(format!(
        "max lhs = {}, rhs = {}, g2 <= 0 per atom: {:?}",
        num(report.max_lhs),
        num(report.rhs),
        report.g2_nonpositive
    ));
    if !report.passed {
        let mut reasons = Vec::new();
        if let Some((atom, m)) = report.first_violation {
            reasons.push(format!(
                "inequality fails for atom {atom} at t = {} (lhs {} > rhs {})",
                report.times[m],
                num(report.lhs[atom][m]),
                num(report.rhs)
            ));
        }
        for (atom, ok) in report.g2_nonpositive.iter().enumerate() {
            if !ok {
                let max = sol.g2[atom]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                reasons.push(format!("g2 of atom {atom} reaches {} > 0", num(max)));
            }
        }
        run.inadmissible = Some(reasons.join("; "));
    }
    Ok(run)
}

/// Strategy driving a simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyChoice {
    Equilibrium,
    Zero,
    Constant { q: f64, pi: f64 },
}

impl std::str::FromStr for StrategyChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equilibrium" => Ok(StrategyChoice::Equilibrium),
            "zero" => Ok(StrategyChoice::Zero),
            _ => {
                let body = s.strip_prefix("const:").ok_or_else(|| {
                    format!("unknown strategy `{s}`; expected equilibrium, zero or const:q,pi")
                })?;
                let parts: Vec<f64> = body
                    .split(',')
                    .map(parse_number)
                    .collect::<Result<_, _>>()?;
                match parts[..] {
                    [q, pi] => Ok(StrategyChoice::Constant { q, pi }),
                    _ => Err(format!("expected `const:q,pi`, found `{s}`")),
                }
            }
        }
    }
}

/// Parallel counterpart of `simulate_paths`; identical output for any pool size.
pub fn simulate_paths_parallel(
    model: &ValidatedModel,
    control: &Control<'_>,
    paths: usize,
    seed: u64,
    record: &[usize],
) -> Result<PathBatch, SimulationError> {
    let outcomes = (0..paths)
        .into_par_iter()
        .map(|p| simulate_path(model, control, seed, p, record))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PathBatch::from_outcomes(model, seed, record, outcomes))
}

pub fn simulation_table(result: &SimulationResult) -> Table {
    let mut t = Table::new(
        "simulate.csv",
        &[
            "atom_index",
            "gamma",
            "utility_mean",
            "utility_se",
            "cert_equiv",
            "reward_J",
        ],
    );
    for (i, a) in result.atoms.iter().enumerate() {
        t.push(vec![
            i.to_string(),
            num(a.gamma),
            num(a.utility_mean),
            num(a.utility_se),
            num(a.certainty_equivalent),
            num(result.reward),
        ]);
    }
    t
}

pub fn simulate_run(
    config: &Config,
    paths: usize,
    strategy: StrategyChoice,
) -> Result<Run, RunError> {
    if paths == 0 {
        return Err(RunError::Usage("--paths must be at least 1".into()));
    }
    let mut run = Run::default();
    let model = config.model()?;
    run.grids.push(GridRecord::of("simulate", model.horizon()));
    let path;
    let control = match strategy {
        StrategyChoice::Equilibrium => {
            let sol = run.time("solve", || solve(&model))?;
            path = equilibrium_strategy(&model, &sol);
            Control::Equilibrium(&path)
        }
        StrategyChoice::Zero => Control::zero(),
        StrategyChoice::Constant { q, pi } => Control::Constant { q, pi },
    };
    let batch = run.time("simulate", || {
        simulate_paths_parallel(&model, &control, paths, config.seed, &[])
    })?;
    let result = estimate_reward(model.aversion(), &batch)?;
    run.summary.push(format!(
        "J = {} over {} paths (seed {})",
        num(result.reward),
        result.paths,
        result.seed
    ));
    run.tables.push(simulation_table(&result));
    Ok(run)
}

/// Quantity reported by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    QHat,
    PiHat,
    /// `π̂(t; p_k) − π̂(t; p_{k−1})` for consecutive sweep values.
    PiDiff,
}

impl Observable {
    pub fn as_str(self) -> &'static str {
        match self {
            Observable::QHat => "q_hat",
            Observable::PiHat => "pi_hat",
            Observable::PiDiff => "pi_diff",
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "q_hat" => Ok(Observable::QHat),
            "pi_hat" => Ok(Observable::PiHat),
            "pi_diff" => Ok(Observable::PiDiff),
            _ => Err(format!(
                "unknown observable `{s}`; expected q_hat, pi_hat or pi_diff"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: Param,
    pub values: Vec<f64>,
    pub observable: Observable,
    /// Write every `every`-th grid point (the last point is always written).
    pub every: usize,
}

/// Grid indices `0, k, 2k, …` plus `M`.
pub fn sample_indices(steps: usize, every: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..=steps).step_by(every.max(1)).collect();
    if out.last() != Some(&steps) {
        out.push(steps);
    }
    out
}

/// Strategy curves for every sweep value, in value order.
pub fn sweep_curves(config: &Config, spec: &SweepSpec) -> Result<Vec<StrategyPath>, RunError> {
    spec.values
        .par_iter()
        .map(|&v| {
            let model = config.with(spec.param, v).model().map_err(|e| {
                RunError::Usage(format!("{} = {v} gives an invalid model: {e}", spec.param))
            })?;
            let sol = solve(&model)?;
            Ok(equilibrium_strategy(&model, &sol))
        })
        .collect()
}

pub fn sweep_run(config: &Config, spec: &SweepSpec) -> Result<Run, RunError> {
    if spec.values.is_empty() {
        return Err(RunError::Usage(
            "--values must list at least one value".into(),
        ));
    }
    if spec.observable == Observable::PiDiff && spec.values.len() < 2 {
        return Err(RunError::Usage("pi_diff needs at least two values".into()));
    }
    let mut run = Run::default();
    run.grids.push(GridRecord::of("sweep", &config.horizon()));
    let curves = run.time("solve", || sweep_curves(config, spec))?;
    let indices = sample_indices(config.steps, spec.every);
    let mut t = Table::new(
        "sweep.csv",
        &["parameter", "value", "baseline", "t", "observable", "y"],
    );
    let name = spec.param.key().to_owned();
    let obs = spec.observable.as_str().to_owned();
    match spec.observable {
        Observable::QHat | Observable::PiHat => {
            for (value, curve) in spec.values.iter().zip(&curves) {
                let ys = if spec.observable == Observable::QHat {
                    &curve.q_hat
                } else {
                    &curve.pi_hat
                };
                for &m in &indices {
                    t.push(vec![
                        name.clone(),
                        num(*value),
                        String::new(),
                        num(curve.times[m]),
                        obs.clone(),
                        num(ys[m]),
                    ]);
                }
            }
        }
        Observable::PiDiff => {
            for k in 1..curves.len() {
                for &m in &indices {
                    t.push(vec![
                        name.clone(),
                        num(spec.values[k]),
                        num(spec.values[k - 1]),
                        num(curves[k].times[m]),
                        obs.clone(),
                        num(curves[k].pi_hat[m] - curves[k - 1].pi_hat[m]),
                    ]);
                }
            }
        }
    }
    run.summary.push(format!(
        "{} rows for {} over {} values",
        t.rows.len(),
        name,
        spec.values.len()
    ));
    run.tables.push(t);
    Ok(run)
}

pub(crate) fn merge(parts: Vec<(String, Run)>) -> Run {
    let mut run = Run::default();
    for (dir, part) in parts {
        if let Some(reason) = &part.inadmissible {
            let msg = format!("{dir}: {reason}");
            run.inadmissible = Some(match run.inadmissible.take() {
                Some(prev) => format!("{prev}; {msg}"),
                None => msg,
            });
        }
        run.absorb(part, &dir);
    }
    run
}
