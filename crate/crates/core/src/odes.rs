//! Exponents of the value-function ansatz
//! `Y^γ(t, x, v) = −(1/γ)·exp(g1(t)·x + g2(t)·v + g3(t))`.
//!
//! * `g1` is the closed form `−γ·e^{r(T−t)}`.
//! * The `g2` functions of all atoms form a coupled Riccati-type system
//!   (they interact through `π̂`). It is rewritten forward in time-to-maturity
//!   `s = T − t` and integrated with one predictor and one corrector step per
//!   grid interval (modified Euler / Heun), all atoms advancing against the
//!   same previous-step vector.
//! * `g3` is a quadrature of known quantities, done with the trapezoid rule
//!   on the same grid.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::model::{HestonParams, ValidatedModel};

/// `|g2|` above this aborts the integration.
pub const BLOW_UP_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SolveError {
    #[error("g2 for atom {atom} blew up at forward step {step} (|g2| = {value:e} > 1e8)")]
    BlowUp {
        atom: usize,
        step: usize,
        value: f64,
    },
    #[error("non-finite value for atom {atom} at forward step {step}")]
    NonFinite { atom: usize, step: usize },
    #[error("g3 requested before g2 was solved")]
    MissingG2,
}

/// Constants of the single-aversion Riccati equation
/// `dg2/dτ = k1/2 − k2·g2 + (k3/2)·g2²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiConstants {
    /// `−ξ²`
    pub k1: f64,
    /// `κ + ρσξ`
    pub k2: f64,
    /// `σ²(1 − ρ²)`
    pub k3: f64,
    /// `√(k2² − k1·k3)`
    pub k4: f64,
}

impl RiccatiConstants {
    pub fn new(h: &HestonParams) -> Self {
        let k1 = -h.xi * h.xi;
        let k2 = h.kappa + h.rho * h.sigma * h.xi;
        let k3 = h.sigma * h.sigma * (1.0 - h.rho * h.rho);
        let k4 = math::sqrt(k2 * k2 - k1 * k3);
        Self { k1, k2, k3, k4 }
    }
}

/// `g1(t) = −γ·e^{r(T−t)}`.
pub fn g1_closed(t: f64, gamma: f64, r: f64, terminal: f64) -> f64 {
    -gamma * math::exp(r * (terminal - t))
}

/// Closed-form `g2` for a one-point aversion distribution. It does not depend
/// on `γ`.
///
/// When `k3 = 0` (`ρ = ±1`) the equation is linear and the limit
/// `(k1/(2k2))·(1 − e^{−k2(T−t)})` is used instead.
pub fn g2_closed_single(t: f64, terminal: f64, c: &RiccatiConstants) -> f64 {
    let tau = terminal - t;
    if c.k3 == 0.0 {
        if c.k2 == 0.0 {
            return 0.5 * c.k1 * tau;
        }
        return 0.5 * c.k1 / c.k2 * -math::expm1(-c.k2 * tau);
    }
    let grow = math::expm1(c.k4 * tau);
    c.k1 * grow / (2.0 * c.k4 + (c.k2 + c.k4) * grow)
}

/// Grid values of `g1`, `g2`, `g3` for every atom.
///
/// Indexing is `g*[atom][m]` with `m = 0..=M` in ascending calendar time.
#[derive(Debug, Clone, PartialEq)]
pub struct GSolution {
    pub times: Vec<f64>,
    pub step: f64,
    pub gammas: Vec<f64>,
    pub probs: Vec<f64>,
    pub g1: Vec<Vec<f64>>,
    pub g2: Vec<Vec<f64>>,
    /// Empty per atom until [`solve_g3`] has run.
    pub g3: Vec<Vec<f64>>,
    pub nonpositive_g2: Vec<bool>,
}

impl GSolution {
    pub fn atoms(&self) -> usize {
        self.gammas.len()
    }

    /// Number of grid intervals `M`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn has_g3(&self) -> bool {
        self.g3.iter().all(|g| g.len() == self.times.len())
    }

    /// `Σᵢ g2ᵢ(t_m)·pᵢ`
    pub fn mean_g2(&self, m: usize) -> f64 {
        self.g2.iter().zip(&self.probs).map(|(g, p)| g[m] * p).sum()
    }

    pub fn is_finite(&self) -> bool {
        [&self.g1, &self.g2, &self.g3]
            .iter()
            .all(|block| block.iter().flatten().all(|v| v.is_finite()))
    }
}

/// Right-hand side of the forward system for every atom at time-to-maturity
/// `s`, written exactly as the per-atom map `Fᵢ(s, g1ᵢ(T−s), h)`.
struct ForwardField<'a> {
    model: &'a ValidatedModel,
    gammas: Vec<f64>,
    probs: Vec<f64>,
}

impl ForwardField<'_> {
    fn eval(&self, s: f64, h: &[f64], out: &mut [f64]) {
        let hp = self.model.heston();
        let mean = self.model.aversion().mean();
        let weighted: f64 = h.iter().zip(&self.probs).map(|(v, p)| v * p).sum();
        let pi = (hp.xi + hp.rho * hp.sigma * weighted) / mean * math::exp(-hp.r * s);
        let growth = math::exp(hp.r * s);
        for ((out, &hi), &gamma) in out.iter_mut().zip(h).zip(&self.gammas) {
            let g1 = -gamma * growth;
            *out = hp.xi * pi * g1 + 0.5 * pi * pi * g1 * g1 - hp.kappa * hi
                + 0.5 * hp.sigma * hp.sigma * hi * hi
                + hp.rho * pi * hp.sigma * g1 * hi;
        }
    }
}

fn check_state(h: &[f64], step: usize) -> Result<(), SolveError> {
    for (atom, &v) in h.iter().enumerate() {
        if !v.is_finite() {
            return Err(SolveError::NonFinite { atom, step });
        }
        if v.abs() > BLOW_UP_THRESHOLD {
            return Err(SolveError::BlowUp {
                atom,
                step,
                value: v,
            });
        }
    }
    Ok(())
}

/// Solves `g1` (closed form) and the coupled `g2` system on the model grid.
/// The returned solution has no `g3` yet.
pub fn solve_g2_coupled(model: &ValidatedModel) -> Result<GSolution, SolveError> {
    let horizon = model.horizon();
    let steps = horizon.steps;
    let terminal = horizon.terminal;
    let l = horizon.step();
    let r = model.heston().r;
    let gammas: Vec<f64> = model.aversion().gammas().collect();
    let probs: Vec<f64> = model.aversion().probs().collect();
    let n = gammas.len();
    let times = horizon.times();

    let field = ForwardField {
        model,
        gammas: gammas.clone(),
        probs: probs.clone(),
    };

    // forward[i][k] = h2ᵢ(s_k) = g2ᵢ(T − s_k)
    let mut forward = vec![vec![0.0; steps + 1]; n];
    let mut h = vec![0.0; n];
    let mut f_now = vec![0.0; n];
    let mut f_next = vec![0.0; n];
    let mut predicted = vec![0.0; n];

    for k in 0..steps {
        // Forward times mirror the calendar grid: s_k = T − t_{M−k}.
        let s_now = terminal - times[steps - k];
        let s_next = terminal - times[steps - k - 1];
        field.eval(s_now, &h, &mut f_now);
        for i in 0..n {
            predicted[i] = h[i] + l * f_now[i];
        }
        field.eval(s_next, &predicted, &mut f_next);
        for i in 0..n {
            h[i] += 0.5 * l * (f_now[i] + f_next[i]);
        }
        check_state(&h, k + 1)?;
        for i in 0..n {
            forward[i][k + 1] = h[i];
        }
    }

    let g2: Vec<Vec<f64>> = forward
        .into_iter()
        .map(|mut col| {
            col.reverse();
            col
        })
        .collect();
    let g1: Vec<Vec<f64>> = gammas
        .iter()
        .map(|&gamma| {
            times
                .iter()
                .map(|&t| g1_closed(t, gamma, r, terminal))
                .collect()
        })
        .collect();
    let nonpositive_g2 = g2.iter().map(|g| g.iter().all(|&v| v <= 0.0)).collect();

    Ok(GSolution {
        times,
        step: l,
        gammas,
        probs,
        g1,
        g2,
        g3: vec![Vec::new(); n],
        nonpositive_g2,
    })
}

/// Integrand of `g3ᵢ(t) = ∫ₜᵀ [...] ds` at grid point `m`.
fn g3_integrand(model: &ValidatedModel, sol: &GSolution, atom: usize, m: usize) -> f64 {
    let d = model.diffusion();
    let eta2 = model.insurance().eta2;
    let hp = model.heston();
    let t = sol.times[m];
    let q = model.retention_kernel() * math::exp(-hp.r * (model.horizon().terminal - t));
    let g1 = sol.g1[atom][m];
    (d.a * d.eta + d.a * eta2 * q) * g1
        + 0.5 * d.b * d.b * q * q * g1 * g1
        + hp.kappa * hp.theta * sol.g2[atom][m]
}

/// Fills `g3` by backward composite-trapezoid accumulation from `g3(T) = 0`.
pub fn solve_g3(model: &ValidatedModel, mut sol: GSolution) -> Result<GSolution, SolveError> {
    let len = sol.times.len();
    if sol.g2.iter().any(|g| g.len() != len) {
        return Err(SolveError::MissingG2);
    }
    let steps = len - 1;
    for atom in 0..sol.atoms() {
        let mut g3 = vec![0.0; len];
        let mut upper = g3_integrand(model, &sol, atom, steps);
        for m in (0..steps).rev() {
            let lower = g3_integrand(model, &sol, atom, m);
            let width = sol.times[m + 1] - sol.times[m];
            g3[m] = g3[m + 1] + 0.5 * width * (lower + upper);
            if !g3[m].is_finite() {
                return Err(SolveError::NonFinite {
                    atom,
                    step: steps - m,
                });
            }
            upper = lower;
        }
        sol.g3[atom] = g3;
    }
    Ok(sol)
}

/// Full solve: `g1`, coupled `g2`, then `g3`.
pub fn solve(model: &ValidatedModel) -> Result<GSolution, SolveError> {
    solve_g3(model, solve_g2_coupled(model)?)
}

/// Largest absolute mismatch, per atom, between a centred difference of the
/// grid `g2` and the right-hand side of its backward equation, taken over
/// interior grid points.
pub fn residual_check(model: &ValidatedModel, sol: &GSolution) -> Vec<f64> {
    let hp = model.heston();
    let mean = model.aversion().mean();
    let terminal = model.horizon().terminal;
    let len = sol.times.len();
    let mut worst = vec![0.0f64; sol.atoms()];
    for m in 1..len.saturating_sub(1) {
        let t = sol.times[m];
        let dt = sol.times[m + 1] - sol.times[m - 1];
        let pi =
            (hp.xi + hp.rho * hp.sigma * sol.mean_g2(m)) / mean * math::exp(-hp.r * (terminal - t));
        for (atom, w) in worst.iter_mut().enumerate() {
            let g1 = sol.g1[atom][m];
            let g2 = sol.g2[atom][m];
            let lhs = -(sol.g2[atom][m + 1] - sol.g2[atom][m - 1]) / dt;
            let rhs = hp.xi * pi * g1 + 0.5 * pi * pi * g1 * g1 - hp.kappa * g2
                + 0.5 * hp.sigma * hp.sigma * g2 * g2
                + hp.rho * pi * hp.sigma * g1 * g2;
            *w = w.max((lhs - rhs).abs());
        }
    }
    worst
}
