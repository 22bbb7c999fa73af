//! Small dense numerical helpers shared across the crate: symmetric
//! eigendecomposition with sorted output, spectral pseudo-inverse and matrix
//! powers, golden-section search and Euclidean simplex projection.
//!
//! All matrices here are tiny (dimension <= 8), so everything favors
//! determinism and clarity over asymptotic cleverness.

use nalgebra::{DMatrix, DVector};

use crate::error::{DesignError, Result};

/// Relative eigenvalue cutoff used when deciding rank / invertibility.
pub const REL_EIG_CUTOFF: f64 = 1e-12;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// ascending order and eigenvector columns reordered to match.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    // symmetrize defensively; callers assemble matrices that are symmetric up
    // to rounding and nalgebra's solver assumes exact symmetry
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).0[0]
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals[vals.len() - 1]
}

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix via its spectral
/// decomposition. Eigenvalues below `REL_EIG_CUTOFF * lambda_max` are treated
/// as zero. Returns the pseudo-inverse together with the numerical rank.
pub fn pseudo_inverse_sym(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    let (vals, vecs) = sym_eigen(m);
    let cutoff = REL_EIG_CUTOFF * vals[n - 1].abs().max(f64::MIN_POSITIVE);
    let mut rank = 0;
    let mut inv_vals = DVector::zeros(n);
    for i in 0..n {
        if vals[i] > cutoff {
            inv_vals[i] = 1.0 / vals[i];
            rank += 1;
        }
    }
    let pinv = &vecs * DMatrix::from_diagonal(&inv_vals) * vecs.transpose();
    (pinv, rank)
}

/// Real power of a symmetric positive definite matrix via eigendecomposition.
/// Errors if an eigenvalue is not strictly positive (relative to the largest).
pub fn sym_matrix_power(m: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let (vals, vecs) = sym_eigen(m);
    let cutoff = REL_EIG_CUTOFF * vals[n - 1].abs().max(f64::MIN_POSITIVE);
    let mut pow_vals = DVector::zeros(n);
    for i in 0..n {
        if vals[i] <= cutoff {
            return Err(DesignError::Numeric(format!(
                "matrix power {p} of a non-positive-definite matrix (eigenvalue {})",
                vals[i]
            )));
        }
        pow_vals[i] = vals[i].powf(p);
    }
    Ok(&vecs * DMatrix::from_diagonal(&pow_vals) * vecs.transpose())
}

/// Golden-section maximization of a unimodal function on [a, b].
/// Returns (argmax, max). Deterministic; `tol_x` is the bracket width at
/// which the search stops.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol_x: f64,
    max_iter: usize,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iter {
        if hi - lo <= tol_x {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    // return the best of the three evaluated candidates
    if f1 >= f2 && f1 >= fm {
        (x1, f1)
    } else if f2 >= f1 && f2 >= fm {
        (x2, f2)
    } else {
        (mid, fm)
    }
}

/// Euclidean projection of `v` onto the probability simplex
/// { w : w_i >= 0, sum w_i = 1 } (sort-based algorithm).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut found = false;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (i as f64 + 1.0);
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            found = true;
            break;
        }
    }
    if !found {
        // all entries active
        theta = (v.iter().sum::<f64>() - 1.0) / n as f64;
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
