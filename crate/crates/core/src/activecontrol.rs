//! Extending an optimal drug-only design to a trial with an active control.
//!
//! The control arm contributes an independent bivariate sample at one fixed
//! dose, with unstructured mean — its Fisher information is Σ₂⁻¹ — so the
//! joint information matrix is block-diagonal: (1−w)·M₁(ξ) ⊕ w·I₂. The
//! φ_p-optimal split between the drug doses and the control is governed by
//! the ratio ρ_p = (drug mass)/(control mass): drug weights are scaled by
//! ρ_p/(1+ρ_p) and the control receives 1/(1+ρ_p).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::infomat::{design_info, loewner_geq, BivariateModel, CovarianceSpec, Design};
use crate::numeric::{golden_section_max, sym_eigen, REL_EIG_CUTOFF};

/// The active-control arm: covariance of its bivariate response and the
/// (fixed, informational) dose at which the control drug is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub cov: CovarianceSpec,
    pub dose: f64,
}

/// A drug-dose design extended by a control arm: the drug design keeps its
/// normalized weights; globally they are scaled by (1 − control_weight).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveControlDesign {
    pub drug_design: Design,
    pub control_weight: f64,
    pub control_dose: f64,
}

impl ActiveControlDesign {
    pub fn new(drug_design: Design, control_weight: f64, control_dose: f64) -> Result<Self> {
        if !(control_weight.is_finite() && control_weight > 0.0 && control_weight < 1.0) {
            return Err(DesignError::Invalid {
                path: "control_weight".into(),
                message: format!("control weight must lie in (0, 1) (got {control_weight})"),
            });
        }
        Ok(ActiveControlDesign {
            drug_design,
            control_weight,
            control_dose,
        })
    }

    /// Drug weights on the global scale: (1 − control_weight) · w_i.
    pub fn scaled_drug_weights(&self) -> Vec<f64> {
        self.drug_design
            .weights()
            .iter()
            .map(|w| w * (1.0 - self.control_weight))
            .collect()
    }
}

/// Fisher information of the control arm. The control mean is unstructured
/// (the parameter is the mean itself), so the information is Σ₂⁻¹.
pub fn control_info(ctrl: &ControlSpec) -> Result<DMatrix<f64>> {
    ctrl.cov.validate().map_err(|e| e.nest("control"))?;
    let inv = ctrl.cov.inverse();
    Ok(DMatrix::from_row_slice(
        2,
        2,
        &[inv[(0, 0)], inv[(0, 1)], inv[(1, 0)], inv[(1, 1)]],
    ))
}

/// Joint information matrix of the extended design:
/// blockdiag((1−w)·M₁(ξ), w·I₂), of size (s₁+2) x (s₁+2).
pub fn block_info(
    ac: &ActiveControlDesign,
    bm: &BivariateModel,
    ctrl: &ControlSpec,
) -> Result<DMatrix<f64>> {
    let s1 = bm.s_dim();
    let m1 = design_info(&ac.drug_design, bm);
    let i2 = control_info(ctrl)?;
    let w = ac.control_weight;
    let mut block = DMatrix::zeros(s1 + 2, s1 + 2);
    block.view_mut((0, 0), (s1, s1)).copy_from(&(m1 * (1.0 - w)));
    block.view_mut((s1, s1), (2, 2)).copy_from(&(i2 * w));
    Ok(block)
}

/// Positive eigenvalues of a design's information matrix, erroring when the
/// matrix is singular.
fn nonsingular_eigs(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (vals, _) = sym_eigen(m);
    let n = m.nrows();
    let vmax = vals[n - 1];
    let cutoff = REL_EIG_CUTOFF * vmax.max(0.0);
    let rank = vals.iter().filter(|&&v| v > cutoff).count();
    if vmax <= 0.0 || rank < n {
        return Err(DesignError::SingularDesign { rank, required: n });
    }
    Ok(vals.as_slice().to_vec())
}

/// The optimal drug-to-control mass ratio ρ_p for extending the
/// φ_p-optimal drug design ξ*:
/// p = 0 → s₁/2; p = −∞ → λ_min(I₂)/λ_min(M₁(ξ*));
/// finite p ≠ 0 → (tr I₂^p / tr M₁(ξ*)^p)^{1/(p−1)}, the first-order
/// condition of the block criterion in the control weight.
pub fn rho_p(xi_star: &Design, bm: &BivariateModel, ctrl: &ControlSpec, p: f64) -> Result<f64> {
    if p.is_nan() || p >= 1.0 {
        return Err(DesignError::Invalid {
            path: "criterion.p".into(),
            message: format!("p must lie in [-inf, 1) (got {p})"),
        });
    }
    let m1 = design_info(xi_star, bm);
    let m_eigs = nonsingular_eigs(&m1)?;
    let i2 = control_info(ctrl)?;
    let i_eigs = nonsingular_eigs(&i2)?;
    if p == 0.0 {
        Ok(bm.s_dim() as f64 / 2.0)
    } else if p == f64::NEG_INFINITY {
        Ok(i_eigs[0] / m_eigs[0])
    } else {
        let tr_m: f64 = m_eigs.iter().map(|v| v.powf(p)).sum();
        let tr_i: f64 = i_eigs.iter().map(|v| v.powf(p)).sum();
        Ok((tr_i / tr_m).powf(1.0 / (p - 1.0)))
    }
}

/// Extends the φ_p-optimal drug design by the control arm with the optimal
/// split: control weight 1/(1+ρ_p), drug weights scaled by ρ_p/(1+ρ_p).
pub fn extend(
    xi_star: &Design,
    bm: &BivariateModel,
    ctrl: &ControlSpec,
    p: f64,
) -> Result<ActiveControlDesign> {
    let rho = rho_p(xi_star, bm, ctrl, p)?;
    ActiveControlDesign::new(xi_star.clone(), 1.0 / (1.0 + rho), ctrl.dose)
}

/// Independent oracle for the control split: maximizes φ_p of the block
/// matrix over the control weight by golden section on (0, 1), exploiting
/// that the block eigenvalues are (1−w)·λ(M₁) together with w·λ(I₂).
pub fn optimal_control_weight_numeric(
    xi_star: &Design,
    bm: &BivariateModel,
    ctrl: &ControlSpec,
    p: f64,
) -> Result<f64> {
    if p.is_nan() || p >= 1.0 {
        return Err(DesignError::Invalid {
            path: "criterion.p".into(),
            message: format!("p must lie in [-inf, 1) (got {p})"),
        });
    }
    let m_eigs = nonsingular_eigs(&design_info(xi_star, bm))?;
    let i_eigs = nonsingular_eigs(&control_info(ctrl)?)?;
    let dim = (m_eigs.len() + i_eigs.len()) as f64;
    let value = |w: f64| -> f64 {
        if p == 0.0 {
            let log_det = m_eigs.iter().map(|v| (v * (1.0 - w)).ln()).sum::<f64>()
                + i_eigs.iter().map(|v| (v * w).ln()).sum::<f64>();
            (log_det / dim).exp()
        } else if p == f64::NEG_INFINITY {
            (m_eigs[0] * (1.0 - w)).min(i_eigs[0] * w)
        } else {
            let tr = m_eigs.iter().map(|v| (v * (1.0 - w)).powf(p)).sum::<f64>()
                + i_eigs.iter().map(|v| (v * w).powf(p)).sum::<f64>();
            (tr / dim).powf(1.0 / p)
        }
    };
    let (w, _) = golden_section_max(value, 1e-9, 1.0 - 1e-9, 1e-8, 300);
    Ok(w)
}

/// Falsification utility for admissibility transfer: extends both designs
/// with the same control weight and reports `false` only when the second
/// design's block matrix strictly dominates the first's in the Loewner
/// order (domination by a genuinely different matrix).
pub fn admissible_transfer_check(
    xi: &Design,
    eta: &Design,
    bm: &BivariateModel,
    ctrl: &ControlSpec,
    w: f64,
    tol: f64,
) -> Result<bool> {
    let bx = block_info(&ActiveControlDesign::new(xi.clone(), w, ctrl.dose)?, bm, ctrl)?;
    let be = block_info(&ActiveControlDesign::new(eta.clone(), w, ctrl.dose)?, bm, ctrl)?;
    let diff_norm = (&be - &bx).norm();
    if diff_norm <= tol * bx.norm().max(1.0) {
        return Ok(true); // same matrix — no strict domination possible
    }
    Ok(!loewner_geq(&be, &bx, tol)?)
}
