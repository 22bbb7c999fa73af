//! Fisher information assembly for the bivariate efficacy-toxicity model.
//!
//! One observation at dose d is a correlated pair (Y_e, Y_t) with means given
//! by the two dose-response models and a shared 2x2 covariance. Its
//! information contribution for the stacked parameter vector is
//! `J(d)^T Sigma^{-1} J(d)` where J(d) is the 2 x s1 block matrix of mean
//! gradients; a design's information matrix is the weighted sum over its
//! support.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::models::ModelSpec;
use crate::numeric::sym_eigen;

/// Covariance of the bivariate response: standard deviations and correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub sigma_e: f64,
    pub sigma_t: f64,
    pub rho: f64,
}

impl CovarianceSpec {
    pub fn new(sigma_e: f64, sigma_t: f64, rho: f64) -> Result<CovarianceSpec> {
        let cov = CovarianceSpec { sigma_e, sigma_t, rho };
        cov.validate()?;
        Ok(cov)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_e.is_finite() && self.sigma_e > 0.0) {
            return Err(DesignError::Invalid {
                path: "sigma_e".into(),
                message: format!("standard deviation must be > 0 (got {})", self.sigma_e),
            });
        }
        if !(self.sigma_t.is_finite() && self.sigma_t > 0.0) {
            return Err(DesignError::Invalid {
                path: "sigma_t".into(),
                message: format!("standard deviation must be > 0 (got {})", self.sigma_t),
            });
        }
        if !(self.rho.is_finite() && self.rho.abs() < 1.0) {
            return Err(DesignError::Invalid {
                path: "rho".into(),
                message: format!("correlation must lie in (-1, 1) (got {})", self.rho),
            });
        }
        Ok(())
    }

    /// The 2x2 covariance matrix.
    pub fn matrix(&self) -> Matrix2<f64> {
        let c = self.rho * self.sigma_e * self.sigma_t;
        Matrix2::new(self.sigma_e * self.sigma_e, c, c, self.sigma_t * self.sigma_t)
    }

    /// Closed-form inverse of the 2x2 covariance matrix.
    pub fn inverse(&self) -> Matrix2<f64> {
        let det = self.sigma_e * self.sigma_e * self.sigma_t * self.sigma_t
            * (1.0 - self.rho * self.rho);
        let c = self.rho * self.sigma_e * self.sigma_t;
        Matrix2::new(
            self.sigma_t * self.sigma_t / det,
            -c / det,
            -c / det,
            self.sigma_e * self.sigma_e / det,
        )
    }

    /// Lower-triangular factor S with S * S^T = Sigma^{-1} (used by the
    /// factorized information assembly).
    pub fn inv_cholesky_factor(&self) -> Result<Matrix2<f64>> {
        let inv = self.inverse();
        nalgebra::Cholesky::new(inv)
            .map(|c| c.l())
            .ok_or_else(|| DesignError::Numeric("covariance inverse is not positive definite".into()))
    }
}

/// The full bivariate observation model: two mean families plus covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateModel {
    pub efficacy: ModelSpec,
    pub toxicity: ModelSpec,
    pub cov: CovarianceSpec,
}

impl BivariateModel {
    pub fn new(efficacy: ModelSpec, toxicity: ModelSpec, cov: CovarianceSpec) -> Result<BivariateModel> {
        let bm = BivariateModel { efficacy, toxicity, cov };
        bm.validate()?;
        Ok(bm)
    }

    pub fn validate(&self) -> Result<()> {
        self.efficacy.validate().map_err(|e| e.nest("efficacy"))?;
        self.toxicity.validate().map_err(|e| e.nest("toxicity"))?;
        self.cov.validate().map_err(|e| e.nest("covariance"))?;
        debug_assert!((4..=6).contains(&self.s_dim()));
        Ok(())
    }

    /// Total parameter dimension s1 of the stacked (efficacy, toxicity) model.
    pub fn s_dim(&self) -> usize {
        self.efficacy.family.param_count() + self.toxicity.family.param_count()
    }
}

/// Dose interval [L, R].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseRange {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl DoseRange {
    pub fn new(l: f64, r: f64) -> Result<DoseRange> {
        let range = DoseRange { l, r };
        range.validate()?;
        Ok(range)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.l.is_finite() || self.l < 0.0 {
            return Err(DesignError::Invalid {
                path: "L".into(),
                message: format!("left endpoint must be finite and >= 0 (got {})", self.l),
            });
        }
        if !self.r.is_finite() || self.r <= self.l {
            return Err(DesignError::Invalid {
                path: "R".into(),
                message: format!("right endpoint must exceed L = {} (got {})", self.l, self.r),
            });
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.r - self.l
    }

    /// Absolute tolerance for endpoint membership tests.
    pub fn boundary_tol(&self) -> f64 {
        1e-12 * self.l.abs().max(self.r.abs()).max(1.0)
    }

    pub fn contains(&self, d: f64) -> bool {
        let tol = self.boundary_tol();
        d >= self.l - tol && d <= self.r + tol
    }

    /// `n` equally spaced doses covering the range (n >= 2).
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n)
            .map(|i| self.l + self.span() * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// An approximate design: support points with positive weights summing to 1.
///
/// Construction sorts the support, merges near-duplicate doses (absolute
/// tolerance 1e-9 times the range span, weights summed) and validates the
/// weight invariants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Design {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Design {
    pub fn new(points: Vec<f64>, weights: Vec<f64>, range: &DoseRange) -> Result<Design> {
        if points.len() != weights.len() {
            return Err(DesignError::DimensionMismatch(format!(
                "{} support points vs {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(DesignError::Invalid {
                path: "points".into(),
                message: "design must have at least one support point".into(),
            });
        }
        let tol = range.boundary_tol();
        for (i, &d) in points.iter().enumerate() {
            if !d.is_finite() || d < range.l - tol || d > range.r + tol {
                return Err(DesignError::Invalid {
                    path: format!("points[{i}]"),
                    message: format!("dose {d} outside the range [{}, {}]", range.l, range.r),
                });
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(DesignError::Invalid {
                    path: format!("weights[{i}]"),
                    message: format!("weight must be > 0 (got {w})"),
                });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DesignError::Invalid {
                path: "weights".into(),
                message: format!("weights must sum to 1 within 1e-12 (got {sum})"),
            });
        }

        let mut pairs: Vec<(f64, f64)> = points
            .iter()
            .map(|&d| d.clamp(range.l, range.r))
            .zip(weights.iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        // merge support points closer than 1e-9 * span; merged dose is the
        // weight-weighted average so the result does not depend on input order
        let merge_tol = 1e-9 * range.span();
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (d, w) in pairs {
            match merged.last_mut() {
                Some((dm, wm)) if d - *dm <= merge_tol => {
                    let total = *wm + w;
                    *dm = (*dm * *wm + d * w) / total;
                    *wm = total;
                }
                _ => merged.push((d, w)),
            }
        }

        let norm: f64 = merged.iter().map(|&(_, w)| w).sum();
        let (points, weights) = merged
            .into_iter()
            .map(|(d, w)| (d, w / norm))
            .unzip();
        Ok(Design { points, weights })
    }

    /// Equal-weight design on the given support.
    pub fn uniform(points: Vec<f64>, range: &DoseRange) -> Result<Design> {
        let k = points.len();
        Design::new(points, vec![1.0 / k as f64; k], range)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// The 2 x s1 stacked-gradient matrix J(d): first row the efficacy gradient
/// (zero-padded on the toxicity block), second row vice versa.
pub fn stacked_gradient(bm: &BivariateModel, d: f64) -> DMatrix<f64> {
    let fe = bm.efficacy.gradient(d);
    let ft = bm.toxicity.gradient(d);
    let se = fe.len();
    let s1 = se + ft.len();
    let mut j = DMatrix::zeros(2, s1);
    for (i, &v) in fe.iter().enumerate() {
        j[(0, i)] = v;
    }
    for (i, &v) in ft.iter().enumerate() {
        j[(1, se + i)] = v;
    }
    j
}

/// Pointwise Fisher information `I_1(d) = J(d)^T Sigma^{-1} J(d)`;
/// symmetric PSD of rank <= 2.
pub fn pointwise_info(bm: &BivariateModel, d: f64) -> DMatrix<f64> {
    let j = stacked_gradient(bm, d);
    let si = bm.cov.inverse();
    let si_d = DMatrix::from_row_slice(2, 2, &[si[(0, 0)], si[(0, 1)], si[(1, 0)], si[(1, 1)]]);
    j.transpose() * si_d * j
}

/// Design information matrix `M_1(xi) = sum_i w_i I_1(d_i)`.
pub fn design_info(xi: &Design, bm: &BivariateModel) -> DMatrix<f64> {
    let s1 = bm.s_dim();
    let mut m = DMatrix::zeros(s1, s1);
    for (d, w) in xi.iter() {
        m += pointwise_info(bm, d) * w;
    }
    m
}

/// `tr(I_1(d) A)` for a fixed symmetric matrix A, evaluated without forming
/// I_1(d): tr(J^T S J A) = tr(S (J A J^T)) with S = Sigma^{-1} (2x2).
pub fn trace_pointwise_product(bm: &BivariateModel, d: f64, a: &DMatrix<f64>) -> f64 {
    let j = stacked_gradient(bm, d);
    let s = bm.cov.inverse();
    let jajt = &j * a * j.transpose(); // 2x2
    s[(0, 0)] * jajt[(0, 0)]
        + s[(0, 1)] * jajt[(1, 0)]
        + s[(1, 0)] * jajt[(0, 1)]
        + s[(1, 1)] * jajt[(1, 1)]
}

/// Independent second assembly of the design information matrix through the
/// triangular factorization Sigma^{-1} = S S^T:
/// `M_1 = G^T Diag(w_1, w_1, ..., w_k, w_k) G` with G the 2k x s1 stack of
/// the blocks S^T J(d_i). Exists to cross-validate `design_info`.
pub fn design_info_factorized(xi: &Design, bm: &BivariateModel) -> Result<DMatrix<f64>> {
    let s1 = bm.s_dim();
    let k = xi.len();
    let st = bm.cov.inv_cholesky_factor()?.transpose();
    let mut g = DMatrix::zeros(2 * k, s1);
    let mut diag = DMatrix::zeros(2 * k, 2 * k);
    for (i, (d, w)) in xi.iter().enumerate() {
        let block = DMatrix::from_row_slice(2, 2, &[st[(0, 0)], st[(0, 1)], st[(1, 0)], st[(1, 1)]])
            * stacked_gradient(bm, d);
        for r in 0..2 {
            for c in 0..s1 {
                g[(2 * i + r, c)] = block[(r, c)];
            }
        }
        diag[(2 * i, 2 * i)] = w;
        diag[(2 * i + 1, 2 * i + 1)] = w;
    }
    Ok(g.transpose() * diag * g)
}

/// Loewner comparison: `A >= B` iff the smallest eigenvalue of A - B is
/// >= -tol. Uses a symmetric eigenvalue solve so callers get a signed margin
/// semantics rather than a factorization failure.
pub fn loewner_geq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(DesignError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let diff = a - b;
    let (vals, _) = sym_eigen(&diff);
    Ok(vals[0] >= -tol)
}

/// Index of a design on [L, R]: interior support points count 1, boundary
/// points count 1/2.
pub fn design_index(xi: &Design, range: &DoseRange) -> Result<f64> {
    let tol = range.boundary_tol();
    let mut index = 0.0;
    for &d in xi.points() {
        if !range.contains(d) {
            return Err(DesignError::Invalid {
                path: "points".into(),
                message: format!("dose {d} outside the range [{}, {}]", range.l, range.r),
            });
        }
        if (d - range.l).abs() <= tol || (d - range.r).abs() <= tol {
            index += 0.5;
        } else {
            index += 1.0;
        }
    }
    Ok(index)
}
