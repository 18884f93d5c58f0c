//! Monte Carlo simulation of the controlled wealth and Heston variance.
//!
//! Per grid step `l`:
//!
//! * variance: full-truncation Euler, `V⁺ = max(V, 0)` inside drift and
//!   diffusion, so the effective variance is never negative;
//! * wealth: the linear `rX` part is integrated exactly over the step and the
//!   remaining coefficients are frozen at the left point, i.e.
//!   `X' = e^{rl}X + φ(r,l)·(aη + aη₂q + ξV⁺π) + ψ(r,l)·(bqZ₀ + π√V⁺·Z₁)`
//!   with `φ = (e^{rl}−1)/r` and `ψ² = (e^{2rl}−1)/(2r)`. With `q = π = 0`
//!   this reproduces `x0·e^{rT} + aη(e^{rT}−1)/r` to rounding.
//!
//! Three standard normals are drawn every step whatever the control, from a
//! ChaCha8 stream keyed by `(seed, path index)`. Two runs that share a seed
//! therefore see the same shocks (common random numbers), and a batch is
//! bit-identical however its paths are distributed over workers.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::math::{self, CompensatedSum};
use crate::model::{AversionDistribution, ValidatedModel};
use crate::strategy::StrategyPath;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("non-finite state on path {path} at step {step}")]
    NonFinite { path: usize, step: usize },
    #[error("utility estimate for atom {atom} is {mean}, expected < 0")]
    NonNegativeUtility { atom: usize, mean: f64 },
    #[error("empty path batch")]
    EmptyBatch,
    #[error("strategy has {got} grid points, model grid has {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error("record steps must be strictly increasing and at most M")]
    InvalidRecordSteps,
    #[error("batches were not generated with the same seed and path count")]
    UnpairedBatches,
}

/// Reinsurance/investment control applied on the simulation grid.
#[derive(Debug, Clone, Copy)]
pub enum Control<'a> {
    Equilibrium(&'a StrategyPath),
    Constant {
        q: f64,
        pi: f64,
    },
    /// Constant `(q, π)` for the first `window_steps` steps, then `base`.
    Perturbed {
        base: &'a StrategyPath,
        window_steps: usize,
        q: f64,
        pi: f64,
    },
}

impl<'a> Control<'a> {
    pub fn zero() -> Self {
        Control::Constant { q: 0.0, pi: 0.0 }
    }

    /// Deviation to constant `(q, π)` on `[0, window)` of a grid with step `step`.
    pub fn perturbed(base: &'a StrategyPath, perturbation: &Perturbation, step: f64) -> Self {
        let window_steps = libm::ceil(perturbation.window / step - 1e-9).max(0.0) as usize;
        Control::Perturbed {
            base,
            window_steps,
            q: perturbation.q,
            pi: perturbation.pi,
        }
    }

    #[inline]
    pub fn at(&self, m: usize) -> (f64, f64) {
        match *self {
            Control::Equilibrium(path) => (path.q_hat[m], path.pi_hat[m]),
            Control::Constant { q, pi } => (q, pi),
            Control::Perturbed {
                base,
                window_steps,
                q,
                pi,
            } => {
                if m < window_steps {
                    (q, pi)
                } else {
                    (base.q_hat[m], base.pi_hat[m])
                }
            }
        }
    }

    fn check_grid(&self, steps: usize) -> Result<(), SimulationError> {
        let path = match *self {
            Control::Equilibrium(p) | Control::Perturbed { base: p, .. } => p,
            Control::Constant { .. } => return Ok(()),
        };
        if path.len() != steps + 1 {
            return Err(SimulationError::GridMismatch {
                expected: steps + 1,
                got: path.len(),
            });
        }
        Ok(())
    }
}

/// Independent, reproducible generator for one path.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Result of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub terminal_wealth: f64,
    /// Smallest effective (truncated) variance seen along the path.
    pub min_variance: f64,
    /// `(X, V⁺)` at each requested record step.
    pub recorded: Vec<(f64, f64)>,
}

fn check_record_steps(record: &[usize], steps: usize) -> Result<(), SimulationError> {
    let sorted = record.windows(2).all(|w| w[0] < w[1]);
    if !sorted || record.last().is_some_and(|&m| m > steps) {
        return Err(SimulationError::InvalidRecordSteps);
    }
    Ok(())
}

/// Simulates path number `path` of the batch keyed by `seed`.
pub fn simulate_path(
    model: &ValidatedModel,
    control: &Control<'_>,
    seed: u64,
    path: usize,
    record: &[usize],
) -> Result<PathOutcome, SimulationError> {
    let steps = model.horizon().steps;
    control.check_grid(steps)?;
    check_record_steps(record, steps)?;

    let hp = model.heston();
    let d = model.diffusion();
    let eta2 = model.insurance().eta2;
    let l = model.horizon().step();
    let decay = math::exp(hp.r * l);
    let drift_weight = math::growth_integral(hp.r, l);
    let noise_weight = math::sqrt(math::growth_integral(2.0 * hp.r, l));
    let sqrt_l = math::sqrt(l);
    let rho_bar = math::sqrt((1.0 - hp.rho * hp.rho).max(0.0));
    let base_drift = d.a * d.eta;

    let mut rng = path_rng(seed, path);
    let mut x = model.horizon().x0;
    let mut v = hp.v0;
    let mut min_variance = v;
    let mut recorded = Vec::with_capacity(record.len());
    let mut next = 0;
    if record.first() == Some(&0) {
        recorded.push((x, v));
        next = 1;
    }

    for m in 0..steps {
        let (q, pi) = control.at(m);
        let vp = v.max(0.0);
        let sv = math::sqrt(vp);
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);

        let drift = base_drift + d.a * eta2 * q + hp.xi * vp * pi;
        x = decay * x + drift_weight * drift + noise_weight * (d.b * q * z0 + pi * sv * z1);
        v += hp.kappa * (hp.theta - vp) * l + hp.sigma * sv * sqrt_l * (hp.rho * z1 + rho_bar * z2);

        if !(x.is_finite() && v.is_finite()) {
            return Err(SimulationError::NonFinite { path, step: m + 1 });
        }
        let effective = v.max(0.0);
        min_variance = min_variance.min(effective);
        if record.get(next) == Some(&(m + 1)) {
            recorded.push((x, effective));
            next += 1;
        }
    }

    Ok(PathOutcome {
        terminal_wealth: x,
        min_variance,
        recorded,
    })
}

/// A simulated batch in path order. Full paths are not stored; only the
/// terminal wealth and the states at the requested record steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub seed: u64,
    pub steps: usize,
    pub step: f64,
    pub record_steps: Vec<usize>,
    pub terminal_wealth: Vec<f64>,
    pub min_variance: f64,
    /// `wealth_at[k][path]` at `record_steps[k]`.
    pub wealth_at: Vec<Vec<f64>>,
    /// `variance_at[k][path]` at `record_steps[k]`, after truncation.
    pub variance_at: Vec<Vec<f64>>,
}

impl PathBatch {
    /// Assembles outcomes listed in path order.
    pub fn from_outcomes(
        model: &ValidatedModel,
        seed: u64,
        record_steps: &[usize],
        outcomes: Vec<PathOutcome>,
    ) -> Self {
        let n = outcomes.len();
        let mut wealth_at = vec![Vec::with_capacity(n); record_steps.len()];
        let mut variance_at = vec![Vec::with_capacity(n); record_steps.len()];
        let mut terminal_wealth = Vec::with_capacity(n);
        let mut min_variance = f64::INFINITY;
        for outcome in outcomes {
            terminal_wealth.push(outcome.terminal_wealth);
            min_variance = min_variance.min(outcome.min_variance);
            for (k, (x, v)) in outcome.recorded.into_iter().enumerate() {
                wealth_at[k].push(x);
                variance_at[k].push(v);
            }
        }
        Self {
            seed,
            steps: model.horizon().steps,
            step: model.horizon().step(),
            record_steps: record_steps.to_vec(),
            terminal_wealth,
            min_variance,
            wealth_at,
            variance_at,
        }
    }

    pub fn paths(&self) -> usize {
        self.terminal_wealth.len()
    }
}

/// Sequential batch simulation; see the `reinsure` crate for a parallel
/// driver producing identical batches.
pub fn simulate_paths(
    model: &ValidatedModel,
    control: &Control<'_>,
    paths: usize,
    seed: u64,
    record: &[usize],
) -> Result<PathBatch, SimulationError> {
    let outcomes = (0..paths)
        .map(|p| simulate_path(model, control, seed, p, record))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PathBatch::from_outcomes(model, seed, record, outcomes))
}

/// Sample mean and standard error, reduced in index order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub mean: f64,
    pub standard_error: f64,
}

impl SampleMoments {
    /// Shifting by the first sample makes identical samples give their common
    /// value back exactly with zero error.
    pub fn of(samples: &[f64]) -> Option<Self> {
        let (&first, _) = samples.split_first()?;
        let n = samples.len() as f64;
        let shifted: CompensatedSum = samples.iter().map(|&s| s - first).collect();
        let mean = first + shifted.value() / n;
        let standard_error = if samples.len() < 2 {
            f64::NAN
        } else {
            let ss: CompensatedSum = samples.iter().map(|&s| (s - mean) * (s - mean)).collect();
            math::sqrt(ss.value() / (n - 1.0) / n)
        };
        Some(Self {
            mean,
            standard_error,
        })
    }
}

/// `φ^γ(x) = −(1/γ)·e^{−γx}`
#[inline]
pub fn utility(gamma: f64, wealth: f64) -> f64 {
    -math::exp(-gamma * wealth) / gamma
}

/// `(φ^γ)⁻¹(y) = −(1/γ)·ln(−γy)`
#[inline]
pub fn inverse_utility(gamma: f64, y: f64) -> f64 {
    -math::ln(-gamma * y) / gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomEstimate {
    pub gamma: f64,
    pub prob: f64,
    pub utility_mean: f64,
    pub utility_se: f64,
    pub certainty_equivalent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub atoms: Vec<AtomEstimate>,
    /// `J = Σᵢ pᵢ·(φ^{γᵢ})⁻¹(E[φ^{γᵢ}(X(T))])`
    pub reward: f64,
    pub paths: usize,
    pub seed: u64,
}

fn utilities(gamma: f64, batch: &PathBatch) -> Vec<f64> {
    batch
        .terminal_wealth
        .iter()
        .map(|&x| utility(gamma, x))
        .collect()
}

pub fn estimate_reward(
    dist: &AversionDistribution,
    batch: &PathBatch,
) -> Result<SimulationResult, SimulationError> {
    if batch.paths() == 0 {
        return Err(SimulationError::EmptyBatch);
    }
    let mut atoms = Vec::with_capacity(dist.len());
    let mut reward = CompensatedSum::new();
    for (index, atom) in dist.atoms().iter().enumerate() {
        let moments =
            SampleMoments::of(&utilities(atom.gamma, batch)).ok_or(SimulationError::EmptyBatch)?;
        if moments.mean.is_nan() || moments.mean >= 0.0 {
            return Err(SimulationError::NonNegativeUtility {
                atom: index,
                mean: moments.mean,
            });
        }
        let certainty_equivalent = inverse_utility(atom.gamma, moments.mean);
        reward.add(atom.prob * certainty_equivalent);
        atoms.push(AtomEstimate {
            gamma: atom.gamma,
            prob: atom.prob,
            utility_mean: moments.mean,
            utility_se: moments.standard_error,
            certainty_equivalent,
        });
    }
    Ok(SimulationResult {
        atoms,
        reward: reward.value(),
        paths: batch.paths(),
        seed: batch.seed,
    })
}

/// Constant deviation `(q, π)` applied on `[0, window)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub window: f64,
    pub q: f64,
    pub pi: f64,
}

/// `(J^û − J^{u_h}) / h` with a delta-method standard error from paired paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotCheck {
    pub perturbation: Perturbation,
    pub reward_equilibrium: f64,
    pub reward_perturbed: f64,
    pub scaled_difference: f64,
    pub standard_error: f64,
    /// Difference below `−3·SE`.
    pub violation: bool,
}

/// Compares two batches simulated from the same shocks.
pub fn compare_rewards(
    dist: &AversionDistribution,
    equilibrium: &PathBatch,
    perturbed: &PathBatch,
    perturbation: Perturbation,
) -> Result<SpotCheck, SimulationError> {
    if equilibrium.seed != perturbed.seed || equilibrium.paths() != perturbed.paths() {
        return Err(SimulationError::UnpairedBatches);
    }
    let base = estimate_reward(dist, equilibrium)?;
    let other = estimate_reward(dist, perturbed)?;
    let n = equilibrium.paths();

    // Linearisation of J around the sample means: each path contributes
    // Σᵢ pᵢ·(−1/γᵢ)·(uᵢ/ȳᵢ − u'ᵢ/ȳ'ᵢ).
    let mut influence = vec![0.0; n];
    for (a, b) in base.atoms.iter().zip(&other.atoms) {
        let w = -a.prob / a.gamma;
        for (k, slot) in influence.iter_mut().enumerate() {
            let ua = utility(a.gamma, equilibrium.terminal_wealth[k]);
            let ub = utility(b.gamma, perturbed.terminal_wealth[k]);
            *slot += w * (ua / a.utility_mean - ub / b.utility_mean);
        }
    }
    let se = SampleMoments::of(&influence)
        .map(|m| m.standard_error)
        .unwrap_or(f64::NAN);
    let h = perturbation.window;
    let scaled_difference = (base.reward - other.reward) / h;
    let standard_error = se / h;
    Ok(SpotCheck {
        perturbation,
        reward_equilibrium: base.reward,
        reward_perturbed: other.reward,
        scaled_difference,
        standard_error,
        violation: scaled_difference < -3.0 * standard_error,
    })
}

/// Sequential spot check of several perturbations against `strategy`.
pub fn equilibrium_spot_check(
    model: &ValidatedModel,
    strategy: &StrategyPath,
    perturbations: &[Perturbation],
    paths: usize,
    seed: u64,
) -> Result<Vec<SpotCheck>, SimulationError> {
    let base = simulate_paths(model, &Control::Equilibrium(strategy), paths, seed, &[])?;
    perturbations
        .iter()
        .map(|p| {
            let control = Control::perturbed(strategy, p, model.horizon().step());
            let batch = simulate_paths(model, &control, paths, seed, &[])?;
            compare_rewards(model.aversion(), &base, &batch, *p)
        })
        .collect()
}
