//! Support-size bounds and closed-form minimally supported D-optimal designs.
//!
//! For each pair of mean families there is an a-priori cap on how many
//! support points an optimal design needs, together with a guarantee about
//! boundary doses; for the equal-parameter-count pairs the minimally
//! supported D-optimal design is available in closed form (uniform weights,
//! support independent of the covariance).

use crate::error::{DesignError, Result};
use crate::infomat::{BivariateModel, Design, DoseRange};
use crate::models::ModelFamily;

/// Which endpoints of the dose range are guaranteed to appear in the support
/// of an improving design once its index reaches the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Both L and R belong to the support.
    LeftAndRight,
    /// Only R is guaranteed (Michaelis-Menten for both outcomes).
    RightOnly,
}

impl Boundary {
    pub fn includes_left(self) -> bool {
        matches!(self, Boundary::LeftAndRight)
    }

    pub fn includes_right(self) -> bool {
        true
    }
}

/// A-priori structure of some optimal design: at most `max_points` support
/// points, and, for designs whose index reaches `index_threshold`, the
/// guaranteed boundary doses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportBound {
    pub max_points: usize,
    pub index_threshold: f64,
    pub boundary: Boundary,
}

/// Canonical support-bound lookup; pairs not listed explicitly are obtained
/// by interchanging the roles of the two outcomes.
pub fn support_bound(eff: ModelFamily, tox: ModelFamily) -> SupportBound {
    use ModelFamily::*;
    let (max_points, boundary) = match (eff, tox) {
        (Linear, Linear) => (2, Boundary::LeftAndRight),
        (Linear, Quadratic) | (Quadratic, Linear) => (3, Boundary::LeftAndRight),
        (Linear, MichaelisMenten) | (MichaelisMenten, Linear) => (4, Boundary::LeftAndRight),
        (Linear, Emax) | (Emax, Linear) => (4, Boundary::LeftAndRight),
        (Quadratic, Quadratic) => (3, Boundary::LeftAndRight),
        (Quadratic, MichaelisMenten) | (MichaelisMenten, Quadratic) => {
            (5, Boundary::LeftAndRight)
        }
        (Quadratic, Emax) | (Emax, Quadratic) => (5, Boundary::LeftAndRight),
        (MichaelisMenten, MichaelisMenten) => (5, Boundary::RightOnly),
        (MichaelisMenten, Emax) | (Emax, MichaelisMenten) => (5, Boundary::LeftAndRight),
        (Emax, Emax) => (5, Boundary::LeftAndRight),
    };
    SupportBound {
        max_points,
        index_threshold: (max_points - 1) as f64,
        boundary,
    }
}

/// Fewest support points consistent with a nonsingular information matrix:
/// the larger of the two per-outcome needs (Linear 2, Quadratic 3,
/// Michaelis-Menten 2, Emax 3).
pub fn minimal_support_size(eff: ModelFamily, tox: ModelFamily) -> usize {
    fn need(f: ModelFamily) -> usize {
        match f {
            ModelFamily::Linear | ModelFamily::MichaelisMenten => 2,
            ModelFamily::Quadratic | ModelFamily::Emax => 3,
        }
    }
    need(eff).max(need(tox))
}

/// Rejects model pairs whose half-max parameters coincide where the design
/// theory requires them to differ.
fn check_distinct_half_max(bm: &BivariateModel) -> Result<()> {
    let (te, tt) = match (bm.efficacy.half_max(), bm.toxicity.half_max()) {
        (Some(te), Some(tt)) => (te, tt),
        _ => return Ok(()),
    };
    let tol = 1e-12 * te.abs().max(tt.abs()).max(1.0);
    if (te - tt).abs() <= tol {
        return Err(DesignError::EqualHalfMax { value: te });
    }
    Ok(())
}

/// The minimally supported D-optimal design in closed form, where one
/// exists: equal weights on two or three points whose interior locations
/// depend only on the dose range and the half-max parameters.
///
/// Pairs without a published closed form return [`DesignError::NoClosedForm`]
/// directing the caller to the numeric optimizer with `k =`
/// [`minimal_support_size`].
pub fn minimal_d_design(bm: &BivariateModel, range: &DoseRange) -> Result<Design> {
    use ModelFamily::*;
    bm.validate()?;
    range.validate()?;
    let (l, r) = (range.l, range.r);
    let eff = bm.efficacy.family;
    let tox = bm.toxicity.family;

    // pairs sharing a half-max parameter must have distinct values
    if matches!(
        (eff, tox),
        (MichaelisMenten, MichaelisMenten)
            | (Emax, Emax)
            | (MichaelisMenten, Emax)
            | (Emax, MichaelisMenten)
    ) {
        check_distinct_half_max(bm)?;
    }

    let no_closed_form = || DesignError::NoClosedForm {
        efficacy: eff.name().to_string(),
        toxicity: tox.name().to_string(),
        minimal_k: minimal_support_size(eff, tox),
    };
    // dispatch below only unwraps half-max values for families that have one
    let half_max = |spec: &crate::models::ModelSpec| {
        spec.half_max().expect("family has a half-max parameter")
    };

    let points = match (eff, tox) {
        // (1a) both linear: the endpoints
        (Linear, Linear) => vec![l, r],
        // (1b)/(3a) linear with Michaelis-Menten: two points, the lower one
        // clamped to L when the unconstrained root falls outside
        (Linear, MichaelisMenten) => vec![mm_lower_point(l, r, half_max(&bm.toxicity)), r],
        (MichaelisMenten, Linear) => vec![mm_lower_point(l, r, half_max(&bm.efficacy)), r],
        // (2a) both quadratic: endpoints plus midpoint
        (Quadratic, Quadratic) => vec![l, 0.5 * (l + r), r],
        // (2b)/(4a) quadratic with Emax: shifted geometric mean in the middle
        (Quadratic, Emax) => vec![l, shifted_geometric_mean(l, r, half_max(&bm.toxicity)), r],
        (Emax, Quadratic) => vec![l, shifted_geometric_mean(l, r, half_max(&bm.efficacy)), r],
        // (3b) both Michaelis-Menten
        (MichaelisMenten, MichaelisMenten) => {
            vec![mm_mm_lower_point(l, r, half_max(&bm.efficacy), half_max(&bm.toxicity)), r]
        }
        // (4b) both Emax
        (Emax, Emax) => {
            vec![l, emax_emax_middle_point(l, r, half_max(&bm.efficacy), half_max(&bm.toxicity)), r]
        }
        // no closed form is published for the remaining pairs
        (Linear, Quadratic)
        | (Quadratic, Linear)
        | (Linear, Emax)
        | (Emax, Linear)
        | (Quadratic, MichaelisMenten)
        | (MichaelisMenten, Quadratic)
        | (MichaelisMenten, Emax)
        | (Emax, MichaelisMenten) => return Err(no_closed_form()),
    };

    Design::uniform(points, range)
}

/// Lower support point for the linear / Michaelis-Menten pair, clamped to L.
fn mm_lower_point(l: f64, r: f64, theta2: f64) -> f64 {
    let s = (r * r + 10.0 * r * theta2 + 9.0 * theta2 * theta2).sqrt();
    (0.5 * (s - r - 3.0 * theta2)).max(l)
}

/// Lower support point for the Michaelis-Menten / Michaelis-Menten pair,
/// clamped to L.
fn mm_mm_lower_point(l: f64, r: f64, te: f64, tt: f64) -> f64 {
    let q = r + te + tt;
    let s = (r * te * tt * q + (te * tt) * (te * tt)).sqrt();
    ((s - te * tt) / q).max(l)
}

/// Middle point sqrt((L+t)(R+t)) - t of the quadratic / Emax pairs.
fn shifted_geometric_mean(l: f64, r: f64, t: f64) -> f64 {
    ((l + t) * (r + t)).sqrt() - t
}

/// Middle point of the Emax / Emax pair.
fn emax_emax_middle_point(l: f64, r: f64, te: f64, tt: f64) -> f64 {
    let s = ((l + te) * (l + tt) * (r + te) * (r + tt)).sqrt();
    (s + l * r - te * tt) / (l + r + te + tt)
}
