//! Flat `key = value` run configuration.
//!
//! ```text
//! # Table 1, second aversion case
//! xi     = 7/15
//! gammas = 0.5, 4
//! probs  = 0.8, 0.2
//! T      = 100
//! ```
//!
//! Every key is optional; omitted keys take the Table 1 value, the first
//! aversion case, `T = 10`, `x0 = 1` and `seed = 0`. `v0` defaults to `theta`
//! and `M` to `round(T / 1e-3)`. Numbers accept `p/q` rational literals.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use reinsure_core::model::{
    validate_config, Atom, AversionCase, AversionDistribution, HestonParams, Horizon,
    InsuranceParams, ValidatedModel, ValidationReport, DEFAULT_STEP,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] ValidationReport),
}

fn syntax(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Syntax {
        line,
        message: message.into(),
    }
}

/// Scalar model parameters that can be overridden by name (sweeps, figures).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Param {
    Eta1,
    Eta2,
    Lambda1,
    Mu1,
    Mu2,
    R,
    Xi,
    Kappa,
    Theta,
    Sigma,
    Rho,
    V0,
    X0,
}

impl Param {
    pub const ALL: [Param; 13] = [
        Param::Eta1,
        Param::Eta2,
        Param::Lambda1,
        Param::Mu1,
        Param::Mu2,
        Param::R,
        Param::Xi,
        Param::Kappa,
        Param::Theta,
        Param::Sigma,
        Param::Rho,
        Param::V0,
        Param::X0,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Param::Eta1 => "eta1",
            Param::Eta2 => "eta2",
            Param::Lambda1 => "lambda1",
            Param::Mu1 => "mu1",
            Param::Mu2 => "mu2",
            Param::R => "r",
            Param::Xi => "xi",
            Param::Kappa => "kappa",
            Param::Theta => "theta",
            Param::Sigma => "sigma",
            Param::Rho => "rho",
            Param::V0 => "v0",
            Param::X0 => "x0",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown parameter `{0}`; expected one of eta1 eta2 lambda1 mu1 mu2 r xi kappa theta sigma rho v0 x0")]
pub struct UnknownParam(pub String);

impl FromStr for Param {
    type Err = UnknownParam;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Param::ALL
            .into_iter()
            .find(|p| p.key() == s)
            .ok_or_else(|| UnknownParam(s.to_owned()))
    }
}

/// Parsed, fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub insurance: InsuranceParams,
    pub heston: HestonParams,
    pub gammas: Vec<f64>,
    pub probs: Vec<f64>,
    pub terminal: f64,
    pub steps: usize,
    pub x0: f64,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self::table1(AversionCase::I, 10.0)
    }
}

/// Parses a decimal or `p/q` rational literal.
pub fn parse_number(text: &str) -> Result<f64, String> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| format!("bad numerator in `{text}`"))?;
            let q: f64 = q
                .trim()
                .parse()
                .map_err(|_| format!("bad denominator in `{text}`"))?;
            if q == 0.0 {
                return Err(format!("zero denominator in `{text}`"));
            }
            p / q
        }
        None => text
            .parse()
            .map_err(|_| format!("`{text}` is not a number"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("`{text}` is not finite"))
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',').map(parse_number).collect()
}

fn steps_for(terminal: f64) -> usize {
    (terminal / DEFAULT_STEP).round().max(1.0) as usize
}

impl Config {
    /// Table 1 market with one of the two aversion cases on the default grid.
    pub fn table1(case: AversionCase, terminal: f64) -> Self {
        let atoms = case.atoms();
        Self {
            insurance: InsuranceParams::table1(),
            heston: HestonParams::table1(),
            gammas: atoms.iter().map(|a| a.gamma).collect(),
            probs: atoms.iter().map(|a| a.prob).collect(),
            terminal,
            steps: steps_for(terminal),
            x0: 1.0,
            seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn horizon(&self) -> Horizon {
        Horizon::new(self.terminal, self.steps, self.x0)
    }

    pub fn atoms(&self) -> Vec<Atom> {
        self.gammas
            .iter()
            .zip(&self.probs)
            .map(|(&g, &p)| Atom::new(g, p))
            .collect()
    }

    /// Validates every invariant. Lists of different lengths are rejected
    /// before anything else is checked.
    pub fn model(&self) -> Result<ValidatedModel, ValidationReport> {
        if self.gammas.len() != self.probs.len() {
            AversionDistribution::from_parts(&self.gammas, &self.probs)?;
        }
        validate_config(self.insurance, self.heston, &self.atoms(), self.horizon())
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Eta1 => self.insurance.eta1,
            Param::Eta2 => self.insurance.eta2,
            Param::Lambda1 => self.insurance.lambda1,
            Param::Mu1 => self.insurance.mu1,
            Param::Mu2 => self.insurance.mu2,
            Param::R => self.heston.r,
            Param::Xi => self.heston.xi,
            Param::Kappa => self.heston.kappa,
            Param::Theta => self.heston.theta,
            Param::Sigma => self.heston.sigma,
            Param::Rho => self.heston.rho,
            Param::V0 => self.heston.v0,
            Param::X0 => self.x0,
        }
    }

    pub fn set(&mut self, p: Param, value: f64) {
        let slot = match p {
            Param::Eta1 => &mut self.insurance.eta1,
            Param::Eta2 => &mut self.insurance.eta2,
            Param::Lambda1 => &mut self.insurance.lambda1,
            Param::Mu1 => &mut self.insurance.mu1,
            Param::Mu2 => &mut self.insurance.mu2,
            Param::R => &mut self.heston.r,
            Param::Xi => &mut self.heston.xi,
            Param::Kappa => &mut self.heston.kappa,
            Param::Theta => &mut self.heston.theta,
            Param::Sigma => &mut self.heston.sigma,
            Param::Rho => &mut self.heston.rho,
            Param::V0 => &mut self.heston.v0,
            Param::X0 => &mut self.x0,
        };
        *slot = value;
    }

    pub fn with(&self, p: Param, value: f64) -> Self {
        let mut out = self.clone();
        out.set(p, value);
        out
    }

    /// Same configuration on a new horizon with the default step.
    pub fn with_terminal(&self, terminal: f64) -> Self {
        Self {
            terminal,
            steps: steps_for(terminal),
            ..self.clone()
        }
    }

    /// Canonical text form. Every key is written, floats with 17 significant
    /// digits, so parsing the result reproduces `self` exactly.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in Param::ALL {
            if p == Param::X0 {
                continue;
            }
            let _ = writeln!(out, "{} = {:.16e}", p.key(), self.get(p));
        }
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let _ = writeln!(out, "gammas = {}", list(&self.gammas));
        let _ = writeln!(out, "probs = {}", list(&self.probs));
        let _ = writeln!(out, "T = {:.16e}", self.terminal);
        let _ = writeln!(out, "M = {}", self.steps);
        let _ = writeln!(out, "x0 = {:.16e}", self.x0);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }
}

impl FromStr for Config {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = Config::default();
        let mut seen: Vec<String> = Vec::new();
        let mut v0 = None;
        let mut steps = None;
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                syntax(line, format!("expected `key = value`, found `{content}`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(syntax(line, format!("missing value for `{key}`")));
            }
            if seen.iter().any(|k| k == key) {
                return Err(syntax(line, format!("duplicate key `{key}`")));
            }
            match key {
                "gammas" => cfg.gammas = parse_list(value).map_err(|m| syntax(line, m))?,
                "probs" => cfg.probs = parse_list(value).map_err(|m| syntax(line, m))?,
                "T" => cfg.terminal = parse_number(value).map_err(|m| syntax(line, m))?,
                "M" => {
                    let m: usize = value.parse().map_err(|_| {
                        syntax(
                            line,
                            format!("M must be a non-negative integer, found `{value}`"),
                        )
                    })?;
                    steps = Some(m);
                }
                "seed" => {
                    cfg.seed = value.parse().map_err(|_| {
                        syntax(
                            line,
                            format!("seed must be a 64-bit unsigned integer, found `{value}`"),
                        )
                    })?;
                }
                other => {
                    let p: Param = other.parse().map_err(|_| {
                        syntax(
                            line,
                            format!(
                                "unknown key `{other}`; expected one of eta1 eta2 lambda1 mu1 mu2 r xi kappa theta sigma rho v0 T M x0 gammas probs seed"
                            ),
                        )
                    })?;
                    let x = parse_number(value).map_err(|m| syntax(line, m))?;
                    if p == Param::V0 {
                        v0 = Some(x);
                    }
                    cfg.set(p, x);
                }
            }
            seen.push(key.to_owned());
        }
        cfg.heston.v0 = v0.unwrap_or(cfg.heston.theta);
        cfg.steps = steps.unwrap_or_else(|| steps_for(cfg.terminal));
        Ok(cfg)
    }
}
