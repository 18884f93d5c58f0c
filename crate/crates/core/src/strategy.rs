//! Equilibrium strategies built from a [`GSolution`], the admissibility
//! check on the undiscounted kernels, the value function and the
//! reinsurance/new-business regime analysis.

use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::math;
use crate::model::{kernel, InsuranceParams, ValidatedModel};
use crate::odes::GSolution;

/// Exponents above this are reported instead of overflowing to infinity.
pub const MAX_EXPONENT: f64 = 700.0;

/// Relative step used by the finite-difference sensitivities.
pub const SENSITIVITY_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `q̂ < 1`: part of each claim is ceded.
    Reinsurance,
    /// `q̂ > 1`: the insurer takes on extra business.
    NewBusiness,
    /// `q̂ = 1`
    Boundary,
}

impl Regime {
    pub fn of(q: f64) -> Self {
        if q < 1.0 {
            Regime::Reinsurance
        } else if q > 1.0 {
            Regime::NewBusiness
        } else {
            Regime::Boundary
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Reinsurance => "reinsurance",
            Regime::NewBusiness => "new_business",
            Regime::Boundary => "boundary",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `q̂(t) = aη₂/(b²E[γ])·e^{−r(T−t)}`. Depends on time and parameters only.
pub fn q_hat(model: &ValidatedModel, t: f64) -> f64 {
    model.retention_kernel() * discount(model, t)
}

/// `π̄ = (ξ + ρσ·Σ g2ᵢpᵢ) / E[γ]`, the undiscounted investment kernel.
pub fn pi_bar(model: &ValidatedModel, mean_g2: f64) -> f64 {
    let h = model.heston();
    (h.xi + h.rho * h.sigma * mean_g2) / model.aversion().mean()
}

/// `π̂(t) = π̄(t)·e^{−r(T−t)}`.
pub fn pi_hat(model: &ValidatedModel, t: f64, mean_g2: f64) -> f64 {
    pi_bar(model, mean_g2) * discount(model, t)
}

fn discount(model: &ValidatedModel, t: f64) -> f64 {
    math::exp(-model.heston().r * (model.horizon().terminal - t))
}

/// Equilibrium `(q̂, π̂)` on the solution grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyPath {
    pub times: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub pi_hat: Vec<f64>,
    pub regime: Vec<Regime>,
}

impl StrategyPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn equilibrium_strategy(model: &ValidatedModel, sol: &GSolution) -> StrategyPath {
    let q: Vec<f64> = sol.times.iter().map(|&t| q_hat(model, t)).collect();
    let pi = sol
        .times
        .iter()
        .enumerate()
        .map(|(m, &t)| pi_hat(model, t, sol.mean_g2(m)))
        .collect();
    let regime = q.iter().map(|&v| Regime::of(v)).collect();
    StrategyPath {
        times: sol.times.clone(),
        q_hat: q,
        pi_hat: pi,
        regime,
    }
}

/// Grid-wise evaluation of `−8γᵢξπ̄ + 32γᵢ²π̄² ≤ κ²/(2σ²)` together with the
/// sign of every `g2ᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub times: Vec<f64>,
    pub pi_bar: Vec<f64>,
    /// `lhs[atom][m]`
    pub lhs: Vec<Vec<f64>>,
    pub rhs: f64,
    pub g2_nonpositive: Vec<bool>,
    pub passed: bool,
    /// First `(atom, m)` where the inequality fails, scanning time then atom.
    pub first_violation: Option<(usize, usize)>,
    pub max_lhs: f64,
}

impl AdmissibilityReport {
    /// `rhs − lhs[atom][m]`; negative means the inequality fails there.
    pub fn margin(&self, atom: usize, m: usize) -> f64 {
        self.rhs - self.lhs[atom][m]
    }

    pub fn inequality_holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

pub fn check_admissibility(model: &ValidatedModel, sol: &GSolution) -> AdmissibilityReport {
    let h = model.heston();
    let rhs = h.kappa * h.kappa / (2.0 * h.sigma * h.sigma);
    let pi_bar: Vec<f64> = (0..sol.times.len())
        .map(|m| pi_bar(model, sol.mean_g2(m)))
        .collect();
    let lhs: Vec<Vec<f64>> = sol
        .gammas
        .iter()
        .map(|&gamma| {
            pi_bar
                .iter()
                .map(|&p| -8.0 * gamma * h.xi * p + 32.0 * gamma * gamma * p * p)
                .collect()
        })
        .collect();
    let first_violation = (0..sol.times.len())
        .flat_map(|m| (0..sol.atoms()).map(move |i| (i, m)))
        .find(|&(i, m)| lhs[i][m].is_nan() || lhs[i][m] > rhs);
    let max_lhs = lhs
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let g2_nonpositive: Vec<bool> = sol.g2.iter().map(|g| g.iter().all(|&v| v <= 0.0)).collect();
    let passed = first_violation.is_none() && g2_nonpositive.iter().all(|&ok| ok);
    AdmissibilityReport {
        times: sol.times.clone(),
        pi_bar,
        lhs,
        rhs,
        g2_nonpositive,
        passed,
        first_violation,
        max_lhs,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ValueError {
    #[error("exponent {exponent} exceeds {MAX_EXPONENT}; Y is out of range")]
    OutOfRange { exponent: f64 },
    #[error("time {t} lies outside [0, T]")]
    TimeOutOfRange { t: f64 },
    #[error("atom index {0} out of range")]
    NoSuchAtom(usize),
    #[error("solution has no g3; run the full solve first")]
    MissingG3,
}

/// Evaluators of `U(t,x,v)` and `Y^{γᵢ}(t,x,v)` over a solved grid.
/// Off-grid times interpolate the `g` values linearly.
#[derive(Debug, Clone, Copy)]
pub struct ValueSurface<'a> {
    sol: &'a GSolution,
}

pub fn value_function<'a>(
    _model: &ValidatedModel,
    sol: &'a GSolution,
) -> Result<ValueSurface<'a>, ValueError> {
    if !sol.has_g3() {
        return Err(ValueError::MissingG3);
    }
    Ok(ValueSurface { sol })
}

impl ValueSurface<'_> {
    /// `(g1, g2, g3)` of `atom` at time `t`.
    pub fn exponents(&self, t: f64, atom: usize) -> Result<(f64, f64, f64), ValueError> {
        let sol = self.sol;
        if atom >= sol.atoms() {
            return Err(ValueError::NoSuchAtom(atom));
        }
        let times = &sol.times;
        let last = times.len() - 1;
        if !(t >= times[0] && t <= times[last]) {
            return Err(ValueError::TimeOutOfRange { t });
        }
        let upper = times.partition_point(|&s| s < t).min(last);
        if times[upper] == t || upper == 0 {
            return Ok((
                sol.g1[atom][upper],
                sol.g2[atom][upper],
                sol.g3[atom][upper],
            ));
        }
        let lower = upper - 1;
        let w = (t - times[lower]) / (times[upper] - times[lower]);
        let lerp = |g: &[f64]| g[lower] + w * (g[upper] - g[lower]);
        Ok((
            lerp(&sol.g1[atom]),
            lerp(&sol.g2[atom]),
            lerp(&sol.g3[atom]),
        ))
    }

    /// `U(t,x,v) = −Σᵢ (1/γᵢ)[g1ᵢx + g2ᵢv + g3ᵢ]pᵢ`
    pub fn utility(&self, t: f64, x: f64, v: f64) -> Result<f64, ValueError> {
        let mut total = 0.0;
        for (atom, (&gamma, &p)) in self.sol.gammas.iter().zip(&self.sol.probs).enumerate() {
            let (g1, g2, g3) = self.exponents(t, atom)?;
            total -= (g1 * x + g2 * v + g3) / gamma * p;
        }
        Ok(total)
    }

    /// `Y^{γᵢ}(t,x,v) = −(1/γᵢ)·exp(g1ᵢx + g2ᵢv + g3ᵢ)`
    pub fn expectation(&self, t: f64, x: f64, v: f64, atom: usize) -> Result<f64, ValueError> {
        let (g1, g2, g3) = self.exponents(t, atom)?;
        let exponent = g1 * x + g2 * v + g3;
        if exponent.is_nan() || exponent > MAX_EXPONENT {
            return Err(ValueError::OutOfRange { exponent });
        }
        Ok(-math::exp(exponent) / self.sol.gammas[atom])
    }
}

/// Where the equilibrium retention sits relative to full retention.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    /// `aη₂/(b²E[γ])`, the value of `q̂` at maturity.
    pub ratio: f64,
    /// Time-to-maturity below which `q̂ > 1`: `(1/r)·ln(ratio)` when
    /// `ratio ≥ 1` and `r > 0`.
    pub crossover_time_to_maturity: Option<f64>,
    /// True when `q̂ < 1` on the whole grid.
    pub reinsurance_throughout: bool,
    pub times: Vec<f64>,
    pub labels: Vec<Regime>,
}

pub fn regime_classification(model: &ValidatedModel) -> RegimeReport {
    let ratio = model.retention_kernel();
    let r = model.heston().r;
    let crossover_time_to_maturity = if ratio >= 1.0 && r > 0.0 {
        Some(math::ln(ratio) / r)
    } else {
        None
    };
    let times = model.horizon().times();
    let labels: Vec<Regime> = times.iter().map(|&t| Regime::of(q_hat(model, t))).collect();
    let reinsurance_throughout = labels.iter().all(|&l| l == Regime::Reinsurance);
    RegimeReport {
        ratio,
        crossover_time_to_maturity,
        reinsurance_throughout,
        times,
        labels,
    }
}

/// Central finite differences of `q̂(t)` with respect to the five parameters
/// that can move it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityReport {
    pub t: f64,
    pub d_r: f64,
    pub d_eta2: f64,
    pub d_lambda1: f64,
    pub d_mu1: f64,
    pub d_mu2: f64,
}

impl SensitivityReport {
    /// Signs in the order `(r, η₂, λ₁, μ₁, μ₂)`.
    pub fn signs(&self) -> [i8; 5] {
        let sign = |v: f64| {
            if v > 0.0 {
                1
            } else if v < 0.0 {
                -1
            } else {
                0
            }
        };
        [
            sign(self.d_r),
            sign(self.d_eta2),
            sign(self.d_lambda1),
            sign(self.d_mu1),
            sign(self.d_mu2),
        ]
    }

    /// `(−, +, 0, +, −)` before maturity; at maturity the rate has no effect.
    pub fn expected_signs(&self, terminal: f64) -> [i8; 5] {
        let r_sign = if self.t < terminal { -1 } else { 0 };
        [r_sign, 1, 0, 1, -1]
    }

    pub fn matches_expected(&self, terminal: f64) -> bool {
        self.signs() == self.expected_signs(terminal)
    }
}

fn q_hat_raw(ins: &InsuranceParams, r: f64, mean: f64, terminal: f64, t: f64) -> f64 {
    kernel(ins, mean) * math::exp(-r * (terminal - t))
}

fn central<F: Fn(f64) -> f64>(base: f64, f: F) -> f64 {
    let h = SENSITIVITY_STEP * base.abs().max(f64::MIN_POSITIVE);
    (f(base + h) - f(base - h)) / (2.0 * h)
}

pub fn sensitivity_signs(model: &ValidatedModel, t: f64) -> SensitivityReport {
    let ins = *model.insurance();
    let r = model.heston().r;
    let mean = model.aversion().mean();
    let terminal = model.horizon().terminal;
    let q = |ins: &InsuranceParams, r: f64| q_hat_raw(ins, r, mean, terminal, t);
    SensitivityReport {
        t,
        d_r: central(r, |x| q(&ins, x)),
        d_eta2: central(ins.eta2, |x| q(&InsuranceParams { eta2: x, ..ins }, r)),
        d_lambda1: central(ins.lambda1, |x| {
            q(&InsuranceParams { lambda1: x, ..ins }, r)
        }),
        d_mu1: central(ins.mu1, |x| q(&InsuranceParams { mu1: x, ..ins }, r)),
        d_mu2: central(ins.mu2, |x| q(&InsuranceParams { mu2: x, ..ins }, r)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atom, AversionCase, HestonParams, Horizon, InsuranceParams};
    use crate::odes::solve;

    #[test]
    fn q_hat_case_one_values() {
        let model = ValidatedModel::table1(AversionCase::I, 10.0);
        assert!((q_hat(&model, 10.0) - 1.0 / 9.0).abs() <= 1e-12 / 9.0);
        let at0 = (1.0 / 9.0) * (-0.5f64).exp();
        assert!((q_hat(&model, 0.0) - at0).abs() <= 1e-12 * at0);
        assert!((q_hat(&model, 0.0) - 0.067_392_3).abs() < 1e-7);
    }

    #[test]
    fn zero_correlation_decouples_investment() {
        let heston = HestonParams {
            rho: 0.0,
            ..HestonParams::table1()
        };
        let model = ValidatedModel::table1(AversionCase::I, 5.0)
            .with_heston(heston)
            .unwrap();
        let sol = solve(&model).unwrap();
        let path = equilibrium_strategy(&model, &sol);
        for (&t, &pi) in path.times.iter().zip(&path.pi_hat) {
            let expect = heston.xi / 2.25 * (-heston.r * (5.0 - t)).exp();
            assert!((pi - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn retention_ignores_claim_intensity() {
        let model = ValidatedModel::table1(AversionCase::II, 10.0);
        let scaled = model
            .with_insurance(InsuranceParams {
                lambda1: 3.7,
                ..*model.insurance()
            })
            .unwrap();
        for t in [0.0, 2.5, 10.0] {
            assert_eq!(q_hat(&model, t), q_hat(&scaled, t));
        }
    }

    #[test]
    fn zero_premium_admissible() {
        let heston = HestonParams {
            xi: 0.0,
            rho: 0.0,
            ..HestonParams::table1()
        };
        let model = ValidatedModel::table1(AversionCase::I, 2.0)
            .with_heston(heston)
            .unwrap();
        let sol = solve(&model).unwrap();
        let report = check_admissibility(&model, &sol);
        assert!(report.lhs.iter().flatten().all(|&v| v == 0.0));
        assert!(report.passed);
    }

    #[test]
    fn small_kappa_fails_admissibility() {
        // Feller needs κ > σ²/(2θ) ≈ 1.39; rhs = 8κ² shrinks towards 15.4.
        let heston = HestonParams {
            kappa: 1.4,
            ..HestonParams::table1()
        };
        let model = ValidatedModel::table1(AversionCase::I, 10.0)
            .with_heston(heston)
            .unwrap();
        let sol = solve(&model).unwrap();
        let report = check_admissibility(&model, &sol);
        assert!(!report.passed);
        let (atom, m) = report.first_violation.expect("violation recorded");
        assert!(report.margin(atom, m) < 0.0);
        assert_eq!(sol.gammas[atom], 4.0);
    }

    #[test]
    fn terminal_value_is_wealth() {
        let model = ValidatedModel::table1(AversionCase::II, 1.0);
        let sol = solve(&model).unwrap();
        let surface = value_function(&model, &sol).unwrap();
        for (x, v) in [(1.0, 0.02), (-3.0, 0.5), (12.5, 0.0)] {
            let u = surface.utility(1.0, x, v).unwrap();
            assert!((u - x).abs() <= 1e-12 * x.abs().max(1.0));
            for (i, &g) in sol.gammas.iter().enumerate() {
                let y = surface.expectation(1.0, x, v, i).unwrap();
                assert!((y + (-g * x).exp() / g).abs() <= 1e-15 * y.abs());
            }
        }
    }

    #[test]
    fn value_function_affine_in_wealth() {
        let model = ValidatedModel::table1(AversionCase::I, 1.0);
        let sol = solve(&model).unwrap();
        let surface = value_function(&model, &sol).unwrap();
        let t = 0.3;
        let delta = 0.75;
        let diff =
            surface.utility(t, 1.0 + delta, 0.02).unwrap() - surface.utility(t, 1.0, 0.02).unwrap();
        let slope: f64 = (0..2)
            .map(|i| {
                let (g1, _, _) = surface.exponents(t, i).unwrap();
                -g1 / sol.gammas[i] * sol.probs[i]
            })
            .sum();
        assert!((diff - slope * delta).abs() < 1e-12);
    }

    #[test]
    fn exponent_overflow_is_signalled() {
        let model = ValidatedModel::table1(AversionCase::I, 1.0);
        let sol = solve(&model).unwrap();
        let surface = value_function(&model, &sol).unwrap();
        assert!(matches!(
            surface.expectation(0.0, -1e4, 0.0, 1),
            Err(ValueError::OutOfRange { .. })
        ));
        assert!(matches!(
            surface.utility(1.5, 0.0, 0.0),
            Err(ValueError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn off_grid_time_interpolates() {
        let model = ValidatedModel::table1(AversionCase::I, 1.0);
        let sol = solve(&model).unwrap();
        let surface = value_function(&model, &sol).unwrap();
        let (a, ..) = surface.exponents(sol.times[10], 0).unwrap();
        let (b, ..) = surface.exponents(sol.times[11], 0).unwrap();
        let mid = 0.5 * (sol.times[10] + sol.times[11]);
        let (c, ..) = surface.exponents(mid, 0).unwrap();
        assert!((c - 0.5 * (a + b)).abs() < 1e-14);
    }

    #[test]
    fn regime_case_one_reinsurance_throughout() {
        let report = regime_classification(&ValidatedModel::table1(AversionCase::I, 10.0));
        assert!((report.ratio - 1.0 / 9.0).abs() < 1e-15);
        assert!(report.reinsurance_throughout);
        assert_eq!(report.crossover_time_to_maturity, None);
    }

    fn with_ratio(ratio: f64, r: f64, terminal: f64) -> ValidatedModel {
        // aη₂/(b²E[γ]) = η₂μ₁/(μ₂γ) with a single atom
        let ins = InsuranceParams {
            eta1: 0.0,
            eta2: 1.0,
            lambda1: 1.0,
            mu1: 1.0,
            mu2: 1.0,
        };
        let heston = HestonParams {
            r,
            ..HestonParams::table1()
        };
        crate::model::validate_config(
            ins,
            heston,
            &[Atom::new(1.0 / ratio, 1.0)],
            Horizon::new(terminal, 400, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn regime_boundary_at_maturity_only() {
        let report = regime_classification(&with_ratio(1.0, 0.05, 10.0));
        assert_eq!(*report.labels.last().unwrap(), Regime::Boundary);
        assert!(report.labels[..report.labels.len() - 1]
            .iter()
            .all(|&l| l == Regime::Reinsurance));
        assert_eq!(report.crossover_time_to_maturity, Some(0.0));
    }

    #[test]
    fn regime_crossover_time() {
        let report = regime_classification(&with_ratio(core::f64::consts::E, 0.05, 40.0));
        let tau = report.crossover_time_to_maturity.unwrap();
        assert!((tau - 20.0).abs() < 1e-12);
        // t = 30 is 10 years from maturity: new business; t = 10 is 30 years out.
        assert_eq!(report.labels[300], Regime::NewBusiness);
        assert_eq!(report.labels[100], Regime::Reinsurance);
    }

    #[test]
    fn regime_zero_rate_is_constant() {
        let report = regime_classification(&with_ratio(2.0, 0.0, 5.0));
        assert_eq!(report.crossover_time_to_maturity, None);
        assert!(report.labels.iter().all(|&l| l == Regime::NewBusiness));
    }

    #[test]
    fn sensitivity_signs_before_and_at_maturity() {
        let model = ValidatedModel::table1(AversionCase::I, 10.0);
        let early = sensitivity_signs(&model, 0.0);
        assert_eq!(early.signs(), [-1, 1, 0, 1, -1]);
        assert!(early.matches_expected(10.0));
        let late = sensitivity_signs(&model, 10.0);
        assert_eq!(late.d_r, 0.0);
        assert!(late.matches_expected(10.0));
    }

    #[test]
    fn sensitivity_matches_closed_form_partials() {
        let model = ValidatedModel::table1(AversionCase::II, 10.0);
        let t = 4.0;
        let s = sensitivity_signs(&model, t);
        let q = q_hat(&model, t);
        let ins = model.insurance();
        assert!((s.d_r - (-(10.0 - t) * q)).abs() < 1e-7);
        assert!((s.d_eta2 - q / ins.eta2).abs() < 1e-7);
        assert!((s.d_mu1 - q / ins.mu1).abs() < 1e-7);
        assert!((s.d_mu2 + q / ins.mu2).abs() < 1e-7);
    }
}
