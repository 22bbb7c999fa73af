//! Dose-response mean families and their parameter gradients.
//!
//! Four families are supported: linear, quadratic, Michaelis-Menten and Emax.
//! Parameter order follows the conventional formulas (intercept first where
//! present):
//!
//! - linear:            t0 + t1*d                      params (t0, t1)
//! - quadratic:         t0 + t1*d + t2*d^2             params (t0, t1, t2)
//! - michaelis-menten:  t1*d / (t2 + d)                params (t1, t2)
//! - emax:              t0 + t1*d / (t2 + d)           params (t0, t1, t2)

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Linear,
    Quadratic,
    MichaelisMenten,
    Emax,
}

impl ModelFamily {
    pub fn param_count(self) -> usize {
        match self {
            ModelFamily::Linear => 2,
            ModelFamily::Quadratic => 3,
            ModelFamily::MichaelisMenten => 2,
            ModelFamily::Emax => 3,
        }
    }

    /// Canonical lowercase name used in files and error messages.
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Quadratic => "quadratic",
            ModelFamily::MichaelisMenten => "michaelis-menten",
            ModelFamily::Emax => "emax",
        }
    }

    pub fn parse(name: &str) -> Option<ModelFamily> {
        match name {
            "linear" => Some(ModelFamily::Linear),
            "quadratic" => Some(ModelFamily::Quadratic),
            "michaelis-menten" => Some(ModelFamily::MichaelisMenten),
            "emax" => Some(ModelFamily::Emax),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A mean family together with its (local) parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub params: Vec<f64>,
}

impl ModelSpec {
    pub fn new(family: ModelFamily, params: Vec<f64>) -> Result<ModelSpec> {
        let spec = ModelSpec { family, params };
        spec.validate()?;
        Ok(spec)
    }

    /// Check parameter-vector length and positivity of the half-maximal
    /// parameter. Error paths are relative to this model ("params[i]"); the
    /// caller prefixes "efficacy."/"toxicity." as appropriate.
    pub fn validate(&self) -> Result<()> {
        let expect = self.family.param_count();
        if self.params.len() != expect {
            return Err(DesignError::Invalid {
                path: "params".into(),
                message: format!(
                    "{} model takes {} parameters, got {}",
                    self.family,
                    expect,
                    self.params.len()
                ),
            });
        }
        for (i, &p) in self.params.iter().enumerate() {
            if !p.is_finite() {
                return Err(DesignError::Invalid {
                    path: format!("params[{i}]"),
                    message: "parameter must be finite".into(),
                });
            }
        }
        if let Some((idx, value)) = self.half_max_indexed() {
            if value <= 0.0 {
                return Err(DesignError::Invalid {
                    path: format!("params[{idx}]"),
                    message: format!(
                        "half-maximal parameter of the {} model must be > 0 (got {value})",
                        self.family
                    ),
                });
            }
        }
        Ok(())
    }

    /// Half-maximal parameter (the denominator shift) for saturating families.
    pub fn half_max(&self) -> Option<f64> {
        self.half_max_indexed().map(|(_, v)| v)
    }

    fn half_max_indexed(&self) -> Option<(usize, f64)> {
        match self.family {
            ModelFamily::MichaelisMenten => Some((1, self.params[1])),
            ModelFamily::Emax => Some((2, self.params[2])),
            _ => None,
        }
    }

    /// Mean response at dose `d`.
    pub fn mean(&self, d: f64) -> f64 {
        let t = &self.params;
        match self.family {
            ModelFamily::Linear => t[0] + t[1] * d,
            ModelFamily::Quadratic => t[0] + t[1] * d + t[2] * d * d,
            ModelFamily::MichaelisMenten => t[0] * d / (t[1] + d),
            ModelFamily::Emax => t[0] + t[1] * d / (t[2] + d),
        }
    }

    /// Gradient of the mean with respect to the parameters, evaluated at `d`.
    pub fn gradient(&self, d: f64) -> DVector<f64> {
        let t = &self.params;
        match self.family {
            ModelFamily::Linear => DVector::from_vec(vec![1.0, d]),
            ModelFamily::Quadratic => DVector::from_vec(vec![1.0, d, d * d]),
            ModelFamily::MichaelisMenten => {
                let s = t[1] + d;
                DVector::from_vec(vec![d / s, -t[0] * d / (s * s)])
            }
            ModelFamily::Emax => {
                let s = t[2] + d;
                DVector::from_vec(vec![1.0, d / s, -t[1] * d / (s * s)])
            }
        }
    }
}
