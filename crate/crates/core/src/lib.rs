//! Locally phi_p-optimal experimental designs for dose-finding trials with
//! correlated bivariate efficacy-toxicity outcomes.
//!
//! The crate computes three things about approximate designs (finitely many
//! dose levels with weights) under a bivariate normal regression model with
//! a shared patient-level covariance:
//!
//! * closed-form minimally supported D-optimal designs and support-size
//!   bounds ([`design_theory`]),
//! * numerically optimal designs for the whole phi_p family (D, A, E, ...)
//!   by particle swarm optimization ([`pso`]), certified by an equivalence
//!   theorem ([`equivalence`]),
//! * the extension of an optimal design to trials with an active control
//!   arm, via a closed-form allocation split ([`activecontrol`]).
//!
//! [`cli`] wires the same operations to a command-line binary operating on
//! JSON problem files.

pub mod activecontrol;
pub mod cli;
pub mod criteria;
pub mod design_theory;
pub mod equivalence;
pub mod error;
pub mod infomat;
pub mod models;
pub mod numeric;
pub mod pso;

pub use activecontrol::{extend, optimal_control_weight_numeric, rho_p, ActiveControlDesign, ControlSpec};
pub use criteria::{c_matrix, efficiency, efficiency_lower_bound, phi_p, CriterionSpec};
pub use design_theory::{minimal_d_design, minimal_support_size, support_bound, SupportBound};
pub use equivalence::{sensitivity, sensitivity_curve, verify, VerificationReport};
pub use error::{DesignError, Result};
pub use infomat::{design_info, pointwise_info, BivariateModel, CovarianceSpec, Design, DoseRange};
pub use models::{ModelFamily, ModelSpec};
pub use pso::{optimize, DesignProblem, Diagnostics, PsoConfig};
