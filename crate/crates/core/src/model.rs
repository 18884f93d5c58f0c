//! Validated inputs: the insurance market, the Heston financial market, the
//! risk-aversion distribution and the time grid.
//!
//! Every constructor collects *all* violated invariants into a
//! [`ValidationReport`] instead of stopping at the first one.

use alloc::vec::Vec;
use core::fmt;

use crate::math;

/// Absolute tolerance on `Σ pᵢ = 1`. Probabilities are never renormalised.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Grid step used when a horizon is built from a step size rather than a count.
pub const DEFAULT_STEP: f64 = 1e-3;

/// A single violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotFinite {
        field: &'static str,
    },
    NotPositive {
        field: &'static str,
        value: f64,
    },
    Negative {
        field: &'static str,
        value: f64,
    },
    /// `eta2 < eta1` would let the insurer arbitrage the reinsurer.
    LoadingOrder {
        eta1: f64,
        eta2: f64,
    },
    /// `mu2 < mu1²` is impossible for a positive claim size.
    MomentOrder {
        mu1: f64,
        mu2: f64,
    },
    CorrelationRange {
        rho: f64,
    },
    Feller {
        kappa: f64,
        theta: f64,
        sigma: f64,
    },
    EmptyDistribution,
    LengthMismatch {
        gammas: usize,
        probs: usize,
    },
    AtomAversion {
        index: usize,
        gamma: f64,
    },
    AtomProbability {
        index: usize,
        prob: f64,
    },
    ProbabilitySum {
        sum: f64,
    },
    ZeroSteps,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotFinite { field } => write!(f, "{field} must be finite"),
            Violation::NotPositive { field, value } => {
                write!(f, "{field} must be > 0 (got {value})")
            }
            Violation::Negative { field, value } => {
                write!(f, "{field} must be >= 0 (got {value})")
            }
            Violation::LoadingOrder { eta1, eta2 } => {
                write!(f, "eta2 must be >= eta1 (got eta1={eta1}, eta2={eta2})")
            }
            Violation::MomentOrder { mu1, mu2 } => {
                write!(f, "mu2 must be >= mu1^2 (got mu1={mu1}, mu2={mu2})")
            }
            Violation::CorrelationRange { rho } => {
                write!(f, "rho must lie in [-1, 1] (got {rho})")
            }
            Violation::Feller {
                kappa,
                theta,
                sigma,
            } => write!(
                f,
                "Feller condition violated: 2*kappa*theta = {} <= sigma^2 = {}",
                2.0 * kappa * theta,
                sigma * sigma
            ),
            Violation::EmptyDistribution => write!(f, "risk-aversion distribution has no atoms"),
            Violation::LengthMismatch { gammas, probs } => {
                write!(f, "gammas and probs differ in length ({gammas} vs {probs})")
            }
            Violation::AtomAversion { index, gamma } => {
                write!(f, "gamma[{index}] must be > 0 (got {gamma})")
            }
            Violation::AtomProbability { index, prob } => {
                write!(f, "probs[{index}] must be > 0 (got {prob})")
            }
            Violation::ProbabilitySum { sum } => {
                write!(f, "probabilities sum to {sum}, expected 1 within 1e-12")
            }
            Violation::ZeroSteps => write!(f, "number of grid steps M must be >= 1"),
        }
    }
}

/// Every invariant violated by a candidate configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn into_result(self) -> Result<(), ValidationReport> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(self)
        }
    }

    pub fn contains(&self, pred: impl Fn(&Violation) -> bool) -> bool {
        self.violations.iter().any(pred)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationReport {}

fn require_positive(out: &mut Vec<Violation>, field: &'static str, value: f64) {
    if !value.is_finite() {
        out.push(Violation::NotFinite { field });
    } else if value <= 0.0 {
        out.push(Violation::NotPositive { field, value });
    }
}

fn require_nonnegative(out: &mut Vec<Violation>, field: &'static str, value: f64) {
    if !value.is_finite() {
        out.push(Violation::NotFinite { field });
    } else if value < 0.0 {
        out.push(Violation::Negative { field, value });
    }
}

/// Insurance-market inputs of the diffusion-approximated surplus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsuranceParams {
    /// Insurer's safety loading.
    pub eta1: f64,
    /// Reinsurer's safety loading.
    pub eta2: f64,
    /// Claim arrival intensity.
    pub lambda1: f64,
    /// First moment of the claim size.
    pub mu1: f64,
    /// Second moment of the claim size.
    pub mu2: f64,
}

impl InsuranceParams {
    pub fn table1() -> Self {
        Self {
            eta1: 0.3,
            eta2: 0.5,
            lambda1: 1.0,
            mu1: 0.1,
            mu2: 0.2,
        }
    }

    fn collect(&self, out: &mut Vec<Violation>) {
        require_nonnegative(out, "eta1", self.eta1);
        require_nonnegative(out, "eta2", self.eta2);
        require_positive(out, "lambda1", self.lambda1);
        require_positive(out, "mu1", self.mu1);
        require_positive(out, "mu2", self.mu2);
        if self.eta2 < self.eta1 {
            out.push(Violation::LoadingOrder {
                eta1: self.eta1,
                eta2: self.eta2,
            });
        }
        if self.mu2 < self.mu1 * self.mu1 {
            out.push(Violation::MomentOrder {
                mu1: self.mu1,
                mu2: self.mu2,
            });
        }
    }

    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut report = ValidationReport::default();
        self.collect(&mut report.violations);
        report.into_result()
    }
}

/// Drift/noise coefficients of the surplus diffusion `dR = a(η + η₂q)dt + bq dW₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionCoefficients {
    /// `λ₁μ₁`
    pub a: f64,
    /// `√(λ₁μ₂)`
    pub b: f64,
    /// `η₁ − η₂ ≤ 0`
    pub eta: f64,
}

/// Collapses the compound-Poisson surplus to its diffusion coefficients.
pub fn derive_diffusion(ins: &InsuranceParams) -> Result<DiffusionCoefficients, ValidationReport> {
    ins.validate()?;
    Ok(DiffusionCoefficients {
        a: ins.lambda1 * ins.mu1,
        b: math::sqrt(ins.lambda1 * ins.mu2),
        eta: ins.eta1 - ins.eta2,
    })
}

/// Risk-free rate plus Heston dynamics of the risky asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HestonParams {
    pub r: f64,
    /// Volatility risk premium: the asset drift is `r + ξV`.
    pub xi: f64,
    pub kappa: f64,
    /// Long-run level of the variance process.
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub v0: f64,
}

impl HestonParams {
    /// Table 1 market; the initial variance is set to its long-run level.
    pub fn table1() -> Self {
        Self {
            r: 0.05,
            xi: 7.0 / 15.0,
            kappa: 5.0,
            theta: 0.15 * 0.15,
            sigma: 0.25,
            rho: -0.5,
            v0: 0.15 * 0.15,
        }
    }

    fn collect(&self, out: &mut Vec<Violation>) {
        // r = 0 and xi = 0 are admitted: both have well-defined limits downstream.
        require_nonnegative(out, "r", self.r);
        require_nonnegative(out, "xi", self.xi);
        require_positive(out, "kappa", self.kappa);
        require_positive(out, "theta", self.theta);
        require_positive(out, "sigma", self.sigma);
        require_positive(out, "v0", self.v0);
        if !self.rho.is_finite() {
            out.push(Violation::NotFinite { field: "rho" });
        } else if !(-1.0..=1.0).contains(&self.rho) {
            out.push(Violation::CorrelationRange { rho: self.rho });
        }
        if self.kappa.is_finite()
            && self.theta.is_finite()
            && self.sigma.is_finite()
            && 2.0 * self.kappa * self.theta <= self.sigma * self.sigma
        {
            out.push(Violation::Feller {
                kappa: self.kappa,
                theta: self.theta,
                sigma: self.sigma,
            });
        }
    }

    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut report = ValidationReport::default();
        self.collect(&mut report.violations);
        report.into_result()
    }
}

/// One outcome of the risk-aversion distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub gamma: f64,
    pub prob: f64,
}

impl Atom {
    pub const fn new(gamma: f64, prob: f64) -> Self {
        Self { gamma, prob }
    }
}

/// The two risk-aversion scenarios used throughout the numerical study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AversionCase {
    /// γ = (0.5, 4), p = (0.5, 0.5), E[γ] = 2.25.
    I,
    /// γ = (0.5, 4), p = (0.8, 0.2), E[γ] = 1.2.
    II,
}

impl AversionCase {
    pub fn atoms(self) -> [Atom; 2] {
        match self {
            AversionCase::I => [Atom::new(0.5, 0.5), Atom::new(4.0, 0.5)],
            AversionCase::II => [Atom::new(0.5, 0.8), Atom::new(4.0, 0.2)],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AversionCase::I => "caseI",
            AversionCase::II => "caseII",
        }
    }
}

/// An n-point risk-aversion distribution. Atoms keep their input order;
/// duplicated `γ` values stay separate atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct AversionDistribution {
    atoms: Vec<Atom>,
    mean: f64,
}

impl AversionDistribution {
    pub fn new(atoms: &[Atom]) -> Result<Self, ValidationReport> {
        let mut report = ValidationReport::default();
        Self::collect(atoms, &mut report.violations);
        report.into_result()?;
        Ok(Self::build(atoms))
    }

    pub fn from_parts(gammas: &[f64], probs: &[f64]) -> Result<Self, ValidationReport> {
        if gammas.len() != probs.len() {
            return Err(ValidationReport {
                violations: alloc::vec![Violation::LengthMismatch {
                    gammas: gammas.len(),
                    probs: probs.len(),
                }],
            });
        }
        let atoms: Vec<Atom> = gammas
            .iter()
            .zip(probs)
            .map(|(&g, &p)| Atom::new(g, p))
            .collect();
        Self::new(&atoms)
    }

    pub fn single(gamma: f64) -> Result<Self, ValidationReport> {
        Self::new(&[Atom::new(gamma, 1.0)])
    }

    fn build(atoms: &[Atom]) -> Self {
        let mean = atoms.iter().map(|a| a.gamma * a.prob).sum();
        Self {
            atoms: atoms.to_vec(),
            mean,
        }
    }

    fn collect(atoms: &[Atom], out: &mut Vec<Violation>) {
        if atoms.is_empty() {
            out.push(Violation::EmptyDistribution);
            return;
        }
        for (index, atom) in atoms.iter().enumerate() {
            if !(atom.gamma.is_finite() && atom.gamma > 0.0) {
                out.push(Violation::AtomAversion {
                    index,
                    gamma: atom.gamma,
                });
            }
            if !(atom.prob.is_finite() && atom.prob > 0.0) {
                out.push(Violation::AtomProbability {
                    index,
                    prob: atom.prob,
                });
            }
        }
        let sum: f64 = atoms.iter().map(|a| a.prob).sum();
        if sum.is_nan() || (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            out.push(Violation::ProbabilitySum { sum });
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `E[γ] = Σ γᵢpᵢ`
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn gammas(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.gamma)
    }

    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.prob)
    }
}

impl From<AversionCase> for AversionDistribution {
    fn from(case: AversionCase) -> Self {
        Self::build(&case.atoms())
    }
}

/// Terminal time, uniform grid and initial wealth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    pub terminal: f64,
    pub steps: usize,
    pub x0: f64,
}

impl Horizon {
    pub fn new(terminal: f64, steps: usize, x0: f64) -> Self {
        Self {
            terminal,
            steps,
            x0,
        }
    }

    /// Horizon with `M = round(T / step)` (at least one step).
    pub fn with_step(terminal: f64, step: f64, x0: f64) -> Self {
        let steps = libm::round(terminal / step).max(1.0) as usize;
        Self::new(terminal, steps, x0)
    }

    pub fn step(&self) -> f64 {
        self.terminal / self.steps as f64
    }

    /// `t_m = m·l`, with the last point pinned to `T`.
    pub fn time(&self, m: usize) -> f64 {
        if m >= self.steps {
            self.terminal
        } else {
            m as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|m| self.time(m)).collect()
    }

    fn collect(&self, out: &mut Vec<Violation>) {
        require_positive(out, "T", self.terminal);
        if self.steps == 0 {
            out.push(Violation::ZeroSteps);
        }
        if !self.x0.is_finite() {
            out.push(Violation::NotFinite { field: "x0" });
        }
    }
}

/// Immutable bundle of validated inputs shared by every downstream module.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    insurance: InsuranceParams,
    diffusion: DiffusionCoefficients,
    heston: HestonParams,
    aversion: AversionDistribution,
    horizon: Horizon,
}

/// Checks every invariant of every input and reports all violations together.
pub fn validate_config(
    insurance: InsuranceParams,
    heston: HestonParams,
    atoms: &[Atom],
    horizon: Horizon,
) -> Result<ValidatedModel, ValidationReport> {
    let mut report = ValidationReport::default();
    insurance.collect(&mut report.violations);
    heston.collect(&mut report.violations);
    AversionDistribution::collect(atoms, &mut report.violations);
    horizon.collect(&mut report.violations);
    report.into_result()?;
    let diffusion = derive_diffusion(&insurance)?;
    Ok(ValidatedModel {
        insurance,
        diffusion,
        heston,
        aversion: AversionDistribution::build(atoms),
        horizon,
    })
}

impl ValidatedModel {
    /// Table 1 parameters with one of the two aversion cases, `x0 = 1` and
    /// grid step `1e-3`.
    pub fn table1(case: AversionCase, terminal: f64) -> Self {
        validate_config(
            InsuranceParams::table1(),
            HestonParams::table1(),
            &case.atoms(),
            Horizon::with_step(terminal, DEFAULT_STEP, 1.0),
        )
        .expect("table 1 parameters are valid")
    }

    pub fn insurance(&self) -> &InsuranceParams {
        &self.insurance
    }

    pub fn diffusion(&self) -> &DiffusionCoefficients {
        &self.diffusion
    }

    pub fn heston(&self) -> &HestonParams {
        &self.heston
    }

    pub fn aversion(&self) -> &AversionDistribution {
        &self.aversion
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    /// Same model on a different grid.
    pub fn with_horizon(&self, horizon: Horizon) -> Result<Self, ValidationReport> {
        validate_config(self.insurance, self.heston, self.aversion.atoms(), horizon)
    }

    /// Same model with a different aversion distribution.
    pub fn with_atoms(&self, atoms: &[Atom]) -> Result<Self, ValidationReport> {
        validate_config(self.insurance, self.heston, atoms, self.horizon)
    }

    pub fn with_heston(&self, heston: HestonParams) -> Result<Self, ValidationReport> {
        validate_config(self.insurance, heston, self.aversion.atoms(), self.horizon)
    }

    pub fn with_insurance(&self, insurance: InsuranceParams) -> Result<Self, ValidationReport> {
        validate_config(insurance, self.heston, self.aversion.atoms(), self.horizon)
    }

    /// `aη₂ / (b² E[γ])`, the undiscounted equilibrium retention.
    ///
    /// `a / b² = μ₁ / μ₂` exactly, so `λ₁` is cancelled before evaluating.
    pub fn retention_kernel(&self) -> f64 {
        kernel(&self.insurance, self.aversion.mean())
    }
}

pub(crate) fn kernel(ins: &InsuranceParams, mean_aversion: f64) -> f64 {
    ins.eta2 * ins.mu1 / (ins.mu2 * mean_aversion)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_horizon() -> Horizon {
        Horizon::new(10.0, 10_000, 1.0)
    }

    #[test]
    fn diffusion_table1() {
        let d = derive_diffusion(&InsuranceParams::table1()).unwrap();
        assert_eq!(d.a, 0.1);
        assert_eq!(d.b, 0.2f64.sqrt());
        assert!((d.eta + 0.2).abs() < 1e-15);
    }

    #[test]
    fn diffusion_identity_scale() {
        let ins = InsuranceParams {
            eta1: 0.0,
            eta2: 0.0,
            lambda1: 1.0,
            mu1: 1.0,
            mu2: 1.0,
        };
        let d = derive_diffusion(&ins).unwrap();
        assert_eq!((d.a, d.b, d.eta), (1.0, 1.0, 0.0));
    }

    #[test]
    fn diffusion_scaled_intensity() {
        let ins = InsuranceParams {
            lambda1: 4.0,
            ..InsuranceParams::table1()
        };
        let d = derive_diffusion(&ins).unwrap();
        assert_eq!(d.a, 0.4);
        assert_eq!(d.b, 0.8f64.sqrt());
    }

    #[test]
    fn diffusion_rejects_loading_order() {
        let ins = InsuranceParams {
            eta1: 0.6,
            ..InsuranceParams::table1()
        };
        let err = derive_diffusion(&ins).unwrap_err();
        assert!(err.contains(|v| matches!(v, Violation::LoadingOrder { .. })));
    }

    #[test]
    fn diffusion_rejects_moment_order() {
        let ins = InsuranceParams {
            mu1: 1.0,
            mu2: 0.5,
            ..InsuranceParams::table1()
        };
        let err = derive_diffusion(&ins).unwrap_err();
        assert!(err.contains(|v| matches!(v, Violation::MomentOrder { .. })));
    }

    #[test]
    fn table1_case_one_accepted() {
        let m = validate_config(
            InsuranceParams::table1(),
            HestonParams::table1(),
            &AversionCase::I.atoms(),
            table1_horizon(),
        )
        .unwrap();
        assert_eq!(m.aversion().mean(), 2.25);
        assert_eq!(m.horizon().step(), 1e-3);
    }

    #[test]
    fn feller_violation_rejected() {
        let heston = HestonParams {
            sigma: 1.0,
            kappa: 0.1,
            theta: 0.01,
            ..HestonParams::table1()
        };
        let err = validate_config(
            InsuranceParams::table1(),
            heston,
            &AversionCase::I.atoms(),
            table1_horizon(),
        )
        .unwrap_err();
        assert!(err.contains(|v| matches!(v, Violation::Feller { .. })));
    }

    #[test]
    fn probability_sum_rejected() {
        let err = validate_config(
            InsuranceParams::table1(),
            HestonParams::table1(),
            &[Atom::new(0.5, 0.6), Atom::new(4.0, 0.5)],
            table1_horizon(),
        )
        .unwrap_err();
        match err.violations.as_slice() {
            [Violation::ProbabilitySum { sum }] => assert!((sum - 1.1).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_violations_are_reported() {
        let ins = InsuranceParams {
            eta1: 0.6,
            lambda1: -1.0,
            ..InsuranceParams::table1()
        };
        let heston = HestonParams {
            rho: 2.0,
            ..HestonParams::table1()
        };
        let err = validate_config(
            ins,
            heston,
            &[Atom::new(-1.0, 1.0)],
            Horizon::new(10.0, 0, 1.0),
        )
        .unwrap_err();
        assert!(err.violations.len() >= 5, "{err}");
    }

    #[test]
    fn duplicate_atoms_kept_distinct() {
        let d = AversionDistribution::new(&[Atom::new(2.0, 0.5), Atom::new(2.0, 0.5)]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.mean(), 2.0);
    }

    #[test]
    fn grid_pins_terminal_point() {
        let h = Horizon::new(1.0, 3, 0.0);
        let t = h.times();
        assert_eq!(t.len(), 4);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[3], 1.0);
    }

    #[test]
    fn length_mismatch_reported() {
        let err = AversionDistribution::from_parts(&[1.0, 2.0], &[1.0]).unwrap_err();
        assert!(err.contains(|v| matches!(v, Violation::LengthMismatch { .. })));
    }
}
