//! Optimality verification through sensitivity functions.
//!
//! A design is locally φ_p-optimal if and only if its sensitivity function
//! is non-positive over the whole dose range: for finite p,
//! `ψ(d) = tr(I_1(d) G K C_K^{p+1} K^T G^T) - tr(C_K^p)`, and for p = -inf
//! `ψ(d) = tr(I_1(d) G K C_K E C_K K^T G^T) - λ_min(C_K)` for some PSD
//! matrix E with trace 1 supported on the λ_min eigenspace. Equality holds
//! at the support points of the optimal design.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::criteria::{
    ck_context, sensitivity_numerator_matrix, trace_c_power, CriterionSpec,
};
use crate::error::Result;
use crate::infomat::{design_info, trace_pointwise_product, BivariateModel, Design, DoseRange};
use crate::numeric::{golden_section_max, sym_eigen};

/// Relative eigen-gap below which λ_min(C_K) is treated as multiple and the
/// matrix E is searched over the eigenspace simplex.
const EIGEN_GAP_REL: f64 = 1e-8;

/// Outcome of checking a design against the equivalence theorem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Largest sensitivity value found over the dose range.
    pub max_sensitivity: f64,
    /// Dose at which the maximum is attained.
    pub argmax_dose: f64,
    /// Whether max_sensitivity <= tolerance.
    pub optimal: bool,
    /// Absolute tolerance used for the decision (the relative input scaled
    /// by the criterion magnitude).
    pub tolerance: f64,
    /// Lower bound on the φ_p-efficiency (finite p only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficiency_lower_bound: Option<f64>,
    /// Sampled (dose, sensitivity) pairs, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<(f64, f64)>>,
}

/// Precomputed pieces of the sensitivity function for one (design, model,
/// criterion) triple: ψ(d) = tr(I_1(d) A) - threshold.
pub(crate) struct SensEvaluator {
    a: DMatrix<f64>,
    threshold: f64,
    /// Magnitude for converting relative tolerances to absolute ones.
    scale: f64,
}

impl SensEvaluator {
    /// Builds the evaluator. `range_hint` is only consulted in the rare
    /// multiple-λ_min case, where the matrix E is chosen to minimize the
    /// maximal sensitivity over a coarse dose grid; without a hint the
    /// support hull of the design is used.
    pub(crate) fn new(
        xi: &Design,
        bm: &BivariateModel,
        crit: &CriterionSpec,
        range_hint: Option<&DoseRange>,
    ) -> Result<SensEvaluator> {
        let m_mat = design_info(xi, bm);
        let ctx = ck_context(&m_mat, crit.k())?;
        if !crit.is_e_criterion() {
            let a = sensitivity_numerator_matrix(&ctx, crit.p())?;
            let threshold = trace_c_power(&ctx.c, crit.p());
            return Ok(SensEvaluator {
                a,
                threshold,
                scale: threshold.abs().max(f64::MIN_POSITIVE),
            });
        }

        // p = -inf: E is supported on the eigenspace of lambda_min(C_K)
        let (vals, vecs) = sym_eigen(&ctx.c);
        let lambda_min = vals[0];
        let lambda_max = vals[vals.len() - 1];
        let gap_tol = EIGEN_GAP_REL * lambda_max;
        let multiplicity = vals.iter().take_while(|&&v| v - lambda_min <= gap_tol).count();

        // u_i = G K C v_i, so that A(alpha) = sum_i alpha_i u_i u_i^T
        let us: Vec<DMatrix<f64>> = (0..multiplicity)
            .map(|i| {
                let v = vecs.column(i).into_owned();
                &ctx.gk * (&ctx.c * DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
            })
            .collect();

        let a = if multiplicity == 1 {
            &us[0] * us[0].transpose()
        } else {
            // sensitivity is linear in alpha: psi_alpha(d) =
            // sum_i alpha_i u_i^T I_1(d) u_i - lambda_min. Pick the simplex
            // point minimizing the coarse-grid maximum.
            let hull = range_hint.copied().unwrap_or_else(|| {
                let pts = xi.points();
                DoseRange {
                    l: pts[0],
                    r: pts[pts.len() - 1].max(pts[0] + f64::EPSILON),
                }
            });
            let grid = hull.grid(201);
            let per_dose: Vec<Vec<f64>> = grid
                .iter()
                .map(|&d| {
                    us.iter()
                        .map(|u| {
                            let uut = u * u.transpose();
                            trace_pointwise_product(bm, d, &uut)
                        })
                        .collect()
                })
                .collect();
            let mut best_alpha = vec![1.0 / multiplicity as f64; multiplicity];
            let mut best_max = f64::INFINITY;
            for alpha in simplex_grid(multiplicity, 20) {
                let worst = per_dose
                    .iter()
                    .map(|t| t.iter().zip(&alpha).map(|(ti, ai)| ti * ai).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max);
                if worst < best_max {
                    best_max = worst;
                    best_alpha = alpha;
                }
            }
            let mut a = DMatrix::zeros(us[0].nrows(), us[0].nrows());
            for (u, &ai) in us.iter().zip(best_alpha.iter()) {
                a += u * u.transpose() * ai;
            }
            a
        };

        Ok(SensEvaluator {
            a,
            threshold: lambda_min,
            scale: lambda_min.abs().max(f64::MIN_POSITIVE),
        })
    }

    pub(crate) fn eval(&self, bm: &BivariateModel, d: f64) -> f64 {
        trace_pointwise_product(bm, d, &self.a) - self.threshold
    }

    pub(crate) fn threshold(&self) -> f64 {
        self.threshold
    }

    pub(crate) fn scale(&self) -> f64 {
        self.scale
    }
}

/// All simplex points with coordinates in multiples of 1/steps.
fn simplex_grid(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(dim: usize, remaining: usize, steps: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if dim == 1 {
            prefix.push(remaining);
            out.push(prefix.iter().map(|&c| c as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for c in 0..=remaining {
            prefix.push(c);
            rec(dim - 1, remaining - c, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// The sensitivity function ψ(d) of the design at a single dose.
pub fn sensitivity(xi: &Design, bm: &BivariateModel, crit: &CriterionSpec, d: f64) -> Result<f64> {
    let ev = SensEvaluator::new(xi, bm, crit, None)?;
    Ok(ev.eval(bm, d))
}

/// Checks a design for local φ_p-optimality: scans the sensitivity over
/// `grid_n` equally spaced doses, refines around the discrete argmax, and
/// reports the decision at relative tolerance `tol`.
pub fn verify(
    xi: &Design,
    bm: &BivariateModel,
    crit: &CriterionSpec,
    range: &DoseRange,
    grid_n: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let ev = SensEvaluator::new(xi, bm, crit, Some(range))?;
    let grid = range.grid(grid_n.max(3));
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0;
    for (i, &d) in grid.iter().enumerate() {
        let s = ev.eval(bm, d);
        if s > best {
            best = s;
            best_i = i;
        }
    }
    let mut argmax = grid[best_i];
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(grid.len() - 1)];
    if hi > lo {
        let (x, fx) = golden_section_max(|d| ev.eval(bm, d), lo, hi, 1e-10 * range.span(), 200);
        if fx > best {
            best = fx;
            argmax = x;
        }
    }

    let tolerance = tol * ev.scale();
    let efficiency_lower_bound = if crit.is_e_criterion() {
        None
    } else {
        // tr(C^p) / max_d tr(I_1(d) A), with the max re-expressed through
        // the sensitivity maximum found above
        Some(ev.threshold() / (best + ev.threshold()))
    };
    Ok(VerificationReport {
        max_sensitivity: best,
        argmax_dose: argmax,
        optimal: best <= tolerance,
        tolerance,
        efficiency_lower_bound,
        curve: None,
    })
}

/// Samples the sensitivity function on `grid_n` equally spaced doses
/// (no refinement); the export backend for curve files.
pub fn sensitivity_curve(
    xi: &Design,
    bm: &BivariateModel,
    crit: &CriterionSpec,
    range: &DoseRange,
    grid_n: usize,
) -> Result<Vec<(f64, f64)>> {
    let ev = SensEvaluator::new(xi, bm, crit, Some(range))?;
    Ok(range
        .grid(grid_n.max(2))
        .into_iter()
        .map(|d| (d, ev.eval(bm, d)))
        .collect())
}
