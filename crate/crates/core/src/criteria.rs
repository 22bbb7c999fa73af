//! Kiefer's φ_p criterion family, the C_K information mapping, relative
//! efficiency, and the grid-based efficiency lower bound.
//!
//! For a design ξ with information matrix M and a full-column-rank K
//! (s1 x m), the criterion acts on `C_K = (K^T M^- K)^{-1}`:
//! finite p != 0 gives ((1/m) tr(C_K^p))^{1/p}, p = 0 the determinant root
//! (det C_K)^{1/m}, and p = -inf the smallest eigenvalue. Larger is better.

use nalgebra::DMatrix;

use crate::error::{DesignError, Result};
use crate::infomat::{design_info, trace_pointwise_product, BivariateModel, Design, DoseRange};
use crate::numeric::{golden_section_max, pseudo_inverse_sym, sym_eigen, sym_matrix_power};

/// Which φ_p criterion to optimize, and for which linear system K^T θ.
///
/// `p` must lie in [-inf, 1); `K`, when given, must be s1 x m with full
/// column rank (`None` means the full parameter vector, K = identity).
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionSpec {
    p: f64,
    k: Option<DMatrix<f64>>,
}

impl CriterionSpec {
    pub fn new(p: f64, k: Option<DMatrix<f64>>) -> Result<CriterionSpec> {
        if p.is_nan() || p >= 1.0 {
            return Err(DesignError::Invalid {
                path: "criterion.p".into(),
                message: format!("p must lie in [-inf, 1) (got {p})"),
            });
        }
        if let Some(k) = &k {
            if k.ncols() == 0 || k.nrows() == 0 {
                return Err(DesignError::Invalid {
                    path: "criterion.K".into(),
                    message: "K must be non-empty".into(),
                });
            }
            if k.ncols() > k.nrows() {
                return Err(DesignError::Invalid {
                    path: "criterion.K".into(),
                    message: format!(
                        "K must be tall (s1 x m with m <= s1), got {}x{}",
                        k.nrows(),
                        k.ncols()
                    ),
                });
            }
            let svd = k.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let rank = svd
                .singular_values
                .iter()
                .filter(|&&s| s > 1e-12 * smax)
                .count();
            if rank < k.ncols() {
                return Err(DesignError::Invalid {
                    path: "criterion.K".into(),
                    message: format!("K must have full column rank {} (rank {rank})", k.ncols()),
                });
            }
        }
        Ok(CriterionSpec { p, k })
    }

    /// D-optimality: p = 0, full parameter vector.
    pub fn d_optimal() -> CriterionSpec {
        CriterionSpec { p: 0.0, k: None }
    }

    /// E-optimality: p = -inf, full parameter vector.
    pub fn e_optimal() -> CriterionSpec {
        CriterionSpec {
            p: f64::NEG_INFINITY,
            k: None,
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn k(&self) -> Option<&DMatrix<f64>> {
        self.k.as_ref()
    }

    pub fn is_e_criterion(&self) -> bool {
        self.p == f64::NEG_INFINITY
    }

    /// Dimension m of the linear system (s1 when K is the identity).
    pub fn system_dim(&self, s1: usize) -> usize {
        self.k.as_ref().map_or(s1, |k| k.ncols())
    }
}

/// Everything downstream consumers need about C_K at a given information
/// matrix: the matrix itself, the propagator M^- K, and the dimension.
#[derive(Debug, Clone)]
pub(crate) struct CkContext {
    /// C_K = (K^T M^- K)^{-1}, m x m, positive definite.
    pub(crate) c: DMatrix<f64>,
    /// M^- K (s1 x m); the generalized inverse times K, as appears in the
    /// sensitivity function.
    pub(crate) gk: DMatrix<f64>,
    pub(crate) m_dim: usize,
}

/// Relative Frobenius tolerance for the estimability test
/// ||(I - M M^-) K|| <= tol * ||K||.
const ESTIMABILITY_TOL: f64 = 1e-8;

/// Builds the C_K context for an information matrix, enforcing estimability
/// (Range(K) within Range(M)).
pub(crate) fn ck_context(m_mat: &DMatrix<f64>, k: Option<&DMatrix<f64>>) -> Result<CkContext> {
    let s1 = m_mat.nrows();
    let (g, rank) = pseudo_inverse_sym(m_mat);
    match k {
        None => {
            if rank < s1 {
                return Err(DesignError::SingularDesign { rank, required: s1 });
            }
            // K = I: C = (M^{-1})^{-1} = M itself; reuse the exact input
            Ok(CkContext {
                c: m_mat.clone(),
                gk: g,
                m_dim: s1,
            })
        }
        Some(k) => {
            if k.nrows() != s1 {
                return Err(DesignError::DimensionMismatch(format!(
                    "K has {} rows but the model has {} parameters",
                    k.nrows(),
                    s1
                )));
            }
            let residual = k - m_mat * (&g * k);
            if residual.norm() > ESTIMABILITY_TOL * k.norm() {
                let mut aug = DMatrix::zeros(s1, s1 + k.ncols());
                aug.view_mut((0, 0), (s1, s1)).copy_from(m_mat);
                aug.view_mut((0, s1), (s1, k.ncols())).copy_from(k);
                let svd = aug.svd(false, false);
                let smax = svd.singular_values.max();
                let required = svd
                    .singular_values
                    .iter()
                    .filter(|&&s| s > 1e-12 * smax)
                    .count();
                return Err(DesignError::SingularDesign { rank, required });
            }
            let ktgk = k.transpose() * (&g * k);
            let (vals, vecs) = sym_eigen(&ktgk);
            if vals[0] <= 0.0 {
                return Err(DesignError::Numeric(format!(
                    "K^T M^- K is not positive definite (lambda_min = {})",
                    vals[0]
                )));
            }
            let inv_d = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v));
            let c = &vecs * inv_d * vecs.transpose();
            Ok(CkContext {
                c,
                gk: g * k,
                m_dim: k.ncols(),
            })
        }
    }
}

/// C_K(ξ) = (K^T M^-(ξ) K)^{-1}. Errors when K is not estimable under ξ.
pub fn c_matrix(xi: &Design, bm: &BivariateModel, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m_mat = design_info(xi, bm);
    Ok(ck_context(&m_mat, Some(k))?.c)
}

/// The φ_p value computed from the eigenvalues of C_K.
fn phi_from_eigs(vals: &[f64], p: f64, m_dim: usize) -> f64 {
    if p == f64::NEG_INFINITY {
        vals[0]
    } else if p == 0.0 {
        (vals.iter().map(|v| v.ln()).sum::<f64>() / m_dim as f64).exp()
    } else {
        (vals.iter().map(|v| v.powf(p)).sum::<f64>() / m_dim as f64).powf(1.0 / p)
    }
}

/// tr(C^p) from an already-built C (p finite; p = 0 gives the dimension).
pub(crate) fn trace_c_power(c: &DMatrix<f64>, p: f64) -> f64 {
    if p == 0.0 {
        return c.nrows() as f64;
    }
    let (vals, _) = sym_eigen(c);
    vals.iter().map(|v| v.powf(p)).sum()
}

/// φ_p evaluated directly on an information matrix (used by the optimizer
/// and the active-control block criterion). Singular inputs score 0.
pub fn phi_p_of_info(m_mat: &DMatrix<f64>, crit: &CriterionSpec) -> f64 {
    match crit.k() {
        None => {
            let s1 = m_mat.nrows();
            let (vals, _) = sym_eigen(m_mat);
            let vmax = vals[s1 - 1];
            if !(vmax.is_finite() && vmax > 0.0) {
                return 0.0;
            }
            let cutoff = crate::numeric::REL_EIG_CUTOFF * vmax;
            if vals.iter().filter(|&&v| v > cutoff).count() < s1 {
                return 0.0;
            }
            phi_from_eigs(vals.as_slice(), crit.p(), s1)
        }
        Some(_) => match ck_context(m_mat, crit.k()) {
            Ok(ctx) => {
                let (vals, _) = sym_eigen(&ctx.c);
                phi_from_eigs(vals.as_slice(), crit.p(), ctx.m_dim)
            }
            Err(_) => 0.0,
        },
    }
}

/// φ_p(ξ). Returns 0 for designs singular with respect to K — the
/// criterion's natural zero, so optimizers can rank infeasible particles.
pub fn phi_p(xi: &Design, bm: &BivariateModel, crit: &CriterionSpec) -> f64 {
    phi_p_of_info(&design_info(xi, bm), crit)
}

/// φ_p-efficiency of `xi` relative to a (claimed optimal) reference design.
pub fn efficiency(
    xi: &Design,
    reference: &Design,
    bm: &BivariateModel,
    crit: &CriterionSpec,
) -> Result<f64> {
    let m_ref = design_info(reference, bm);
    ck_context(&m_ref, crit.k())?; // a singular reference is an error
    let denom = phi_p_of_info(&m_ref, crit);
    Ok(phi_p(xi, bm, crit) / denom)
}

/// Lower bound on the φ_p-efficiency of `xi` from the equivalence theorem:
/// tr(C_K^p) / max_d tr(I_1(d) G K C_K^{p+1} K^T G^T), the max taken over
/// `grid_n` equally spaced doses plus golden-section refinement around the
/// discrete argmax. Finite p only.
pub fn efficiency_lower_bound(
    xi: &Design,
    bm: &BivariateModel,
    crit: &CriterionSpec,
    range: &DoseRange,
    grid_n: usize,
) -> Result<f64> {
    if crit.is_e_criterion() {
        return Err(DesignError::Invalid {
            path: "criterion.p".into(),
            message: "the efficiency lower bound requires finite p".into(),
        });
    }
    let m_mat = design_info(xi, bm);
    let ctx = ck_context(&m_mat, crit.k())?;
    let a = sensitivity_numerator_matrix(&ctx, crit.p())?;
    let tr_cp = trace_c_power(&ctx.c, crit.p());
    let max_val = max_trace_over_range(bm, &a, range, grid_n);
    Ok(tr_cp / max_val)
}

/// A = G K C_K^{p+1} K^T G^T, the fixed matrix inside the finite-p
/// sensitivity numerator tr(I_1(d) A).
pub(crate) fn sensitivity_numerator_matrix(ctx: &CkContext, p: f64) -> Result<DMatrix<f64>> {
    let c_pow = sym_matrix_power(&ctx.c, p + 1.0)?;
    Ok(&ctx.gk * c_pow * ctx.gk.transpose())
}

/// max_d tr(I_1(d) A) over the dose range: grid scan plus golden-section
/// refinement within the two cells adjacent to the discrete argmax.
pub(crate) fn max_trace_over_range(
    bm: &BivariateModel,
    a: &DMatrix<f64>,
    range: &DoseRange,
    grid_n: usize,
) -> f64 {
    let grid = range.grid(grid_n.max(3));
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0;
    for (i, &d) in grid.iter().enumerate() {
        let t = trace_pointwise_product(bm, d, a);
        if t > best {
            best = t;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { grid[0] } else { grid[best_i - 1] };
    let hi = if best_i + 1 == grid.len() {
        grid[best_i]
    } else {
        grid[best_i + 1]
    };
    if hi > lo {
        let (_, refined) = golden_section_max(
            |d| trace_pointwise_product(bm, d, a),
            lo,
            hi,
            1e-10 * range.span(),
            200,
        );
        best = best.max(refined);
    }
    best
}
