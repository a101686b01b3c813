//! Desynchronized and vertex families built from a single base matrix, their
//! analytic quasi-controllability bounds, and a stable family sequence whose
//! overshoot grows without bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, min_gain};
use crate::model::{Matrix, MatrixFamily, NormSpec, Tolerances};

/// Eigenvalues within this distance of the excluded value count as equal to it.
pub const EIGEN_TOL: f64 = 1e-9;
/// Eigenvalues closer than this (but outside [`EIGEN_TOL`]) are too close to call.
pub const NEAR_EIGEN_TOL: f64 = 1e-7;

fn require_square(a: &Matrix) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Validation(format!(
            "base matrix must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

fn labelled(members: Vec<Matrix>, prefix: &str) -> Result<MatrixFamily> {
    let labels = (1..=members.len()).map(|i| Some(format!("{prefix}{i}"))).collect();
    MatrixFamily::with_labels(members, labels)
}

/// `{A_1, ..., A_N}` where `A_i` is the identity with row `i` taken from `a`.
pub fn desync_family(a: &Matrix) -> Result<MatrixFamily> {
    let dim = require_square(a)?;
    let members = (0..dim)
        .map(|i| {
            let mut m = Matrix::identity(dim, dim);
            m.set_row(i, &a.row(i));
            m
        })
        .collect();
    labelled(members, "A")
}

/// `{D_1 a, ..., D_N a}` where `D_i` negates coordinate `i`.
pub fn vertex_family(a: &Matrix) -> Result<MatrixFamily> {
    let dim = require_square(a)?;
    let members = (0..dim)
        .map(|i| {
            let mut m = a.clone();
            m.row_mut(i).neg_mut();
            m
        })
        .collect();
    labelled(members, "V")
}

/// Whether the off-diagonal sparsity graph of `a` is strongly connected.
pub fn irreducible(a: &Matrix) -> bool {
    let dim = a.nrows();
    let reach_all = |forward: bool| {
        let mut seen = vec![false; dim];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..dim {
                let edge = if forward { a[(i, j)] } else { a[(j, i)] };
                if i != j && edge != 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    dim > 0 && reach_all(true) && reach_all(false)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub alpha: f64,
    pub beta: f64,
    /// `alpha * beta^(N-1)` when applicable, zero otherwise.
    pub bound: f64,
    pub applicable: bool,
    pub reasons: Vec<String>,
}

fn smallest_off_diagonal(a: &Matrix) -> Option<f64> {
    let dim = a.nrows();
    (0..dim)
        .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| a[(i, j)].abs())
        .filter(|&x| x != 0.0)
        .min_by(f64::total_cmp)
}

/// Pushes a reason when `a` has an eigenvalue at (or suspiciously near) `excluded`.
fn eigen_condition(a: &Matrix, excluded: f64, reasons: &mut Vec<String>) -> Result<()> {
    let gap = eigenvalues(a)?
        .iter()
        .map(|z| (z - excluded).norm())
        .fold(f64::INFINITY, f64::min);
    if gap <= EIGEN_TOL {
        reasons.push(format!("{excluded} is an eigenvalue"));
    } else if gap <= NEAR_EIGEN_TOL {
        reasons.push(format!(
            "near-degenerate: an eigenvalue lies within {gap:e} of {excluded}"
        ));
    }
    Ok(())
}

fn bound_report(
    a: &Matrix,
    n: NormSpec,
    gain_of: Matrix,
    alpha_scale: f64,
    beta_scale: f64,
    excluded: f64,
) -> Result<BoundReport> {
    if n != NormSpec::L1 {
        return Err(Error::NormUnsupported(n));
    }
    let dim = require_square(a)?;
    let mut reasons = Vec::new();
    eigen_condition(a, excluded, &mut reasons)?;
    if !irreducible(a) {
        reasons.push("A reducible".into());
    }
    let alpha = alpha_scale * min_gain(&gain_of, n, Tolerances::default().rank_tol)?;
    let smallest = smallest_off_diagonal(a);
    let applicable = reasons.is_empty();
    if applicable && dim > 1 {
        assert!(smallest.is_some(), "an irreducible matrix has an off-diagonal entry");
    }
    let beta = beta_scale * smallest.unwrap_or(0.0);
    let bound = if applicable {
        alpha * beta.powi(dim as i32 - 1)
    } else {
        0.0
    };
    Ok(BoundReport {
        alpha,
        beta,
        bound,
        applicable,
        reasons,
    })
}

/// Lower bound on `qcm_N` of the desynchronized family of `a`.
///
/// `alpha = min_gain(A - I) / 2N`, `beta` is half the smallest nonzero
/// off-diagonal magnitude. Valid when 1 is not an eigenvalue and `a` is
/// irreducible.
pub fn desync_qcm_bound(a: &Matrix, n: NormSpec) -> Result<BoundReport> {
    let dim = require_square(a)?;
    let shifted = a - Matrix::identity(dim, dim);
    bound_report(a, n, shifted, 0.5 / dim as f64, 0.5, 1.0)
}

/// Lower bound on `qcm_N` of the vertex family of `a`.
///
/// `alpha = min_gain(A) / N`, `beta` is the smallest nonzero off-diagonal
/// magnitude. Valid when `a` is nonsingular and irreducible.
pub fn vertex_qcm_bound(a: &Matrix, n: NormSpec) -> Result<BoundReport> {
    let dim = require_square(a)?;
    bound_report(a, n, a.clone(), 1.0 / dim as f64, 1.0, 0.0)
}

/// `{[[1 - eps, delta], [0, 1 - eps]]}`: exponentially stable, never
/// quasi-controllable, with overshoot growing like `delta / eps`.
pub fn counterexample_family(eps: f64, delta: f64) -> Result<MatrixFamily> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Validation(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !delta.is_finite() {
        return Err(Error::Validation("delta must be finite".into()));
    }
    let d = 1.0 - eps;
    MatrixFamily::from_rows(&[&[&[d, delta], &[0.0, d]]])
}
