//! Hard-coded figure definitions: Table 1 market, one swept parameter, one
//! observable, for each horizon and aversion case.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use reinsure_core::model::AversionCase;

use crate::config::{Config, Param};
use crate::pipeline::{merge, sweep_run, Observable, Run, RunError, SweepSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure {
    pub name: &'static str,
    pub param: Param,
    pub values: &'static [f64],
    pub observable: Observable,
    /// Correlation override; `None` keeps the Table 1 value.
    pub rho: Option<f64>,
}

const XI: f64 = 7.0 / 15.0;

pub const FIGURES: [Figure; 12] = [
    Figure {
        name: "fig1",
        param: Param::R,
        values: &[0.03, 0.05, 0.07],
        observable: Observable::PiHat,
        rho: None,
    },
    Figure {
        name: "fig2",
        param: Param::Xi,
        values: &[0.3, XI, 0.6],
        observable: Observable::PiHat,
        rho: None,
    },
    Figure {
        name: "fig31",
        param: Param::Kappa,
        values: &[3.0, 5.0, 7.0],
        observable: Observable::PiDiff,
        rho: Some(-0.5),
    },
    Figure {
        name: "fig32",
        param: Param::Kappa,
        values: &[3.0, 5.0, 7.0],
        observable: Observable::PiDiff,
        rho: Some(0.5),
    },
    Figure {
        name: "fig41",
        param: Param::Sigma,
        values: &[0.2, 0.25, 0.3],
        observable: Observable::PiDiff,
        rho: Some(-0.5),
    },
    Figure {
        name: "fig42",
        param: Param::Sigma,
        values: &[0.2, 0.25, 0.3],
        observable: Observable::PiDiff,
        rho: Some(0.5),
    },
    Figure {
        name: "fig51",
        param: Param::Rho,
        values: &[-0.5, 0.0, 0.5],
        observable: Observable::PiDiff,
        rho: None,
    },
    Figure {
        name: "fig7",
        param: Param::R,
        values: &[0.03, 0.05, 0.07],
        observable: Observable::QHat,
        rho: None,
    },
    Figure {
        name: "fig8",
        param: Param::Eta2,
        values: &[0.4, 0.5, 0.6],
        observable: Observable::QHat,
        rho: None,
    },
    Figure {
        name: "fig9",
        param: Param::Lambda1,
        values: &[0.5, 1.0, 2.0],
        observable: Observable::QHat,
        rho: None,
    },
    Figure {
        name: "fig10",
        param: Param::Mu1,
        values: &[0.08, 0.1, 0.12],
        observable: Observable::QHat,
        rho: None,
    },
    Figure {
        name: "fig11",
        param: Param::Mu2,
        values: &[0.15, 0.2, 0.25],
        observable: Observable::QHat,
        rho: None,
    },
];

pub const HORIZONS: [u32; 2] = [10, 100];
pub const CASES: [AversionCase; 2] = [AversionCase::I, AversionCase::II];

/// Rows written per curve, independent of the grid size.
const ROWS_PER_CURVE: usize = 1_000;

/// One `figure/T…/case…` bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureId {
    pub figure: Figure,
    pub horizon: u32,
    pub case: AversionCase,
}

impl FigureId {
    pub fn all() -> Vec<FigureId> {
        let mut out = Vec::new();
        for figure in FIGURES {
            for horizon in HORIZONS {
                for case in CASES {
                    out.push(FigureId {
                        figure,
                        horizon,
                        case,
                    });
                }
            }
        }
        out
    }

    /// Directory name used for the bundle, e.g. `fig1_T10_caseI`.
    pub fn dir(&self) -> String {
        format!(
            "{}_T{}_{}",
            self.figure.name,
            self.horizon,
            self.case.label()
        )
    }

    pub fn config(&self, step: f64) -> Config {
        let terminal = f64::from(self.horizon);
        let mut cfg = Config::table1(self.case, terminal);
        cfg.steps = (terminal / step).round().max(1.0) as usize;
        if let Some(rho) = self.figure.rho {
            cfg.heston.rho = rho;
        }
        cfg
    }

    pub fn spec(&self, steps: usize) -> SweepSpec {
        SweepSpec {
            param: self.figure.param,
            values: self.figure.values.to_vec(),
            observable: self.figure.observable,
            every: (steps / ROWS_PER_CURVE).max(1),
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/T{}/{}",
            self.figure.name,
            self.horizon,
            self.case.label()
        )
    }
}

pub fn valid_ids() -> String {
    let names: Vec<&str> = FIGURES.iter().map(|f| f.name).collect();
    format!(
        "all, or <figure>/<horizon>/<case> with figure in {{{}}}, horizon in {{T10, T100}}, case in {{caseI, caseII}}",
        names.join(", ")
    )
}

impl FromStr for FigureId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || format!("unknown figure id `{s}`; valid ids: {}", valid_ids());
        let parts: Vec<&str> = s.split('/').collect();
        let [name, horizon, case] = parts[..] else {
            return Err(unknown());
        };
        let figure = FIGURES
            .into_iter()
            .find(|f| f.name == name)
            .ok_or_else(unknown)?;
        let horizon = match horizon {
            "T10" => 10,
            "T100" => 100,
            _ => return Err(unknown()),
        };
        let case = CASES
            .into_iter()
            .find(|c| c.label() == case)
            .ok_or_else(unknown)?;
        Ok(FigureId {
            figure,
            horizon,
            case,
        })
    }
}

/// Resolves `all` or a single id.
pub fn resolve(id: &str) -> Result<Vec<FigureId>, RunError> {
    if id == "all" {
        Ok(FigureId::all())
    } else {
        id.parse().map(|f| vec![f]).map_err(RunError::Usage)
    }
}

pub fn reproduce_run(ids: &[FigureId], step: f64) -> Result<Run, RunError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(RunError::Usage(format!(
            "--step must be positive, found {step}"
        )));
    }
    let parts = ids
        .par_iter()
        .map(|id| {
            let cfg = id.config(step);
            let run = sweep_run(&cfg, &id.spec(cfg.steps))?;
            Ok((id.dir(), run))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(merge(parts))
}
