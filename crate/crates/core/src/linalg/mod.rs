//! Dense linear algebra and linear programming kernels.

mod lp;

pub use lp::{solve_lp, LpConstraint, LpOutcome, LpProblem, LpStatus};

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::model::{induced_matrix_norm, Matrix, NormSpec, Vector};

const MAX_ITER: usize = 10_000;

fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Singular values in decreasing order.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Numerical rank: singular values at or below `rel_tol * sigma_max` count as zero.
pub fn rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let Some(&top) = s.first() else { return Ok(0) };
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * top).count())
}

/// Orthonormal basis of the column span of `m`, with the same relative cutoff as [`rank`].
pub fn column_basis(m: &Matrix, rel_tol: f64) -> Result<Vec<Vector>> {
    if m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let svd = m
        .clone()
        .try_svd(true, false, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.iter().fold(0.0, |a: f64, &x| a.max(x));
    if top == 0.0 {
        return Ok(Vec::new());
    }
    let mut cols: Vec<(f64, Vector)> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * top)
        .map(|(i, &s)| (s, u.column(i).into_owned()))
        .collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(cols.into_iter().map(|(_, v)| v).collect())
}

/// Orthonormal basis of the null space `{v : m v = 0}`, treating singular
/// values at or below `abs_tol` as zero.
pub fn null_space(m: &Matrix, abs_tol: f64) -> Result<Vec<Vector>> {
    let n = m.ncols();
    // Pad to at least square so that V is complete.
    let padded = if m.nrows() < n {
        let mut p = Matrix::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded
        .try_svd(false, true, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("SVD did not converge".into()))?;
    let v_t = svd.v_t.expect("requested V^T");
    Ok(svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= abs_tol)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect())
}

/// Orthonormal basis of the orthogonal complement of `v`.
pub fn orthogonal_complement(v: &Vector) -> Result<Vec<Vector>> {
    let row = Matrix::from_row_slice(1, v.len(), v.as_slice());
    null_space(&row, 1e-12 * v.norm().max(f64::MIN_POSITIVE))
}

/// All eigenvalues, via a real Schur decomposition.
pub fn eigenvalues(m: &Matrix) -> Result<Vec<Complex<f64>>> {
    if m.nrows() == 1 {
        return Ok(vec![Complex::new(m[(0, 0)], 0.0)]);
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("Schur iteration did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// `min_{|x|=1} |Mx|`, which is `1 / |M^-1|` for nonsingular `M` and zero
/// when the smallest singular value is at or below `rank_tol * max |m_ij|`.
pub fn min_gain(m: &Matrix, n: NormSpec, rank_tol: f64) -> Result<f64> {
    let scale = max_abs(m);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let s = singular_values(m)?;
    if s.last().copied().unwrap_or(0.0) <= rank_tol * scale {
        return Ok(0.0);
    }
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::NumericalFailure("inverse of a full-rank matrix failed".into()))?;
    Ok(1.0 / induced_matrix_norm(&inv, n))
}

/// Real eigenvalues of `m` (clustered) with an orthonormal basis of each eigenspace.
pub fn real_eigenspaces(m: &Matrix, rank_tol: f64) -> Result<Vec<(f64, Vec<Vector>)>> {
    let n = m.nrows();
    let scale = max_abs(m).max(1.0);
    let cluster_tol = 1e-7 * scale;
    let mut reals: Vec<f64> = eigenvalues(m)?
        .into_iter()
        .filter(|z| z.im.abs() <= cluster_tol)
        .map(|z| z.re)
        .collect();
    reals.sort_by(|a, b| a.total_cmp(b));
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for x in reals {
        match clusters.last_mut() {
            Some(c) if (x - c[c.len() - 1]).abs() <= cluster_tol => c.push(x),
            _ => clusters.push(vec![x]),
        }
    }
    let mut out = Vec::new();
    for c in clusters {
        let lambda = c.iter().sum::<f64>() / c.len() as f64;
        let shifted = m - Matrix::identity(n, n) * lambda;
        let basis = null_space(&shifted, eig_null_tol(rank_tol, scale))?;
        if !basis.is_empty() {
            out.push((lambda, basis));
        }
    }
    Ok(out)
}

fn eig_null_tol(rank_tol: f64, scale: f64) -> f64 {
    rank_tol.max(1e-12) * scale
}

/// Distance from `v` to `span(basis)` for an orthonormal basis.
pub fn residual_from_span(v: &Vector, basis: &[Vector]) -> f64 {
    let mut r = v.clone();
    for b in basis {
        r -= b * b.dot(v);
    }
    r.norm()
}

/// True when every member maps every basis vector back into `span(basis)`
/// within `rank_tol` relative to the member's magnitude.
pub fn is_common_invariant(members: &[Matrix], basis: &[Vector], rank_tol: f64) -> bool {
    members.iter().all(|a| {
        let scale = max_abs(a).max(f64::MIN_POSITIVE) * (a.nrows() as f64).sqrt();
        basis
            .iter()
            .all(|b| residual_from_span(&(a * b), basis) <= rank_tol.max(1e-12) * scale)
    })
}

/// A unit vector that is an eigenvector of every member, if one exists.
///
/// Candidates are intersections of real eigenspaces, one eigenvalue per
/// member, explored in member order; every hit is re-checked for invariance.
pub fn common_eigenvector(members: &[Matrix], rank_tol: f64) -> Result<Option<Vector>> {
    let Some(first) = members.first() else {
        return Ok(None);
    };
    let n = first.nrows();
    let start: Vec<Vector> = (0..n).map(|j| Vector::from_fn(n, |i, _| f64::from(i == j))).collect();
    search_common(members, 0, start, rank_tol)
}

fn search_common(
    members: &[Matrix],
    i: usize,
    basis: Vec<Vector>,
    rank_tol: f64,
) -> Result<Option<Vector>> {
    if i == members.len() {
        let v = basis[0].clone();
        let line = [v.clone()];
        return Ok(is_common_invariant(members, &line, rank_tol).then_some(v));
    }
    let a = &members[i];
    let n = a.nrows();
    let d = basis.len();
    let b = Matrix::from_columns(&basis);
    let scale = max_abs(a).max(1.0);
    // Restrict A_i to the current subspace: the eigenvalues of A_i that can carry
    // a common eigenvector are those of the compressed operator B^T A_i B.
    let compressed = b.transpose() * a * &b;
    for (lambda, _) in real_eigenspaces(&compressed, rank_tol)? {
        let shifted = (a - Matrix::identity(n, n) * lambda) * &b;
        let coeffs = null_space(&shifted, eig_null_tol(rank_tol, scale) * (d as f64).sqrt())?;
        if coeffs.is_empty() {
            continue;
        }
        let sub: Vec<Vector> = coeffs.iter().map(|c| &b * c).collect();
        let sub = column_basis(&Matrix::from_columns(&sub), 1e-9)?;
        if sub.is_empty() {
            continue;
        }
        if let Some(v) = search_common(members, i + 1, sub, rank_tol)? {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
        Matrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn min_gain_examples() {
        let tol = 1e-9;
        assert_eq!(min_gain(&Matrix::identity(2, 2), NormSpec::L1, tol).unwrap(), 1.0);
        assert_eq!(min_gain(&m2(1.0, 0.0, 0.0, 0.0), NormSpec::L1, tol).unwrap(), 0.0);
        // Explicit inverse of [[-1, .5], [.5, -1]] is (1/0.75)[[-1, -.5], [-.5, -1]],
        // column sums 2, so the minimum gain is 1/2.
        let m = m2(-1.0, 0.5, 0.5, -1.0);
        let inv = m2(-1.0, -0.5, -0.5, -1.0) / 0.75;
        assert!((induced_matrix_norm(&inv, NormSpec::L1) - 2.0).abs() < 1e-15);
        assert!((min_gain(&m, NormSpec::L1, tol).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&Matrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(spectral_radius(&m2(0.0, 1.0, 0.0, 0.0)).unwrap(), 0.0);
        assert!((spectral_radius(&m2(0.0, 2.0, 2.0, 0.0)).unwrap() - 2.0).abs() < 1e-14);
        let rot = m2(0.0, -1.1, 1.1, 0.0);
        assert!((spectral_radius(&rot).unwrap() - 1.1).abs() < 1e-14);
    }

    #[test]
    fn null_space_of_shear() {
        let ns = null_space(&m2(0.0, 1.0, 0.0, 0.0), 1e-12).unwrap();
        assert_eq!(ns.len(), 1);
        assert!((ns[0][0].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn common_eigenvectors() {
        let shear = m2(1.0, 1.0, 0.0, 1.0);
        let v = common_eigenvector(&[shear], 1e-9).unwrap().unwrap();
        assert!(v[1].abs() < 1e-12);
        let rot = m2(0.0, -1.0, 1.0, 0.0);
        assert!(common_eigenvector(&[rot], 1e-9).unwrap().is_none());
        // Identity shares every eigenvector with a diagonal matrix.
        let d = m2(2.0, 0.0, 0.0, 3.0);
        let v = common_eigenvector(&[Matrix::identity(2, 2), d.clone()], 1e-9)
            .unwrap()
            .unwrap();
        assert!(is_common_invariant(&[d], &[v], 1e-9));
        // Two diagonalizable matrices with different eigenbases.
        let a = m2(1.0, 0.0, 0.0, 2.0);
        let b = m2(1.0, 1.0, 1.0, 1.0);
        assert!(common_eigenvector(&[a, b], 1e-9).unwrap().is_none());
    }

    #[test]
    fn rank_and_basis() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert_eq!(rank(&m, 1e-9).unwrap(), 1);
        assert_eq!(column_basis(&m, 1e-9).unwrap().len(), 1);
        assert_eq!(rank(&Matrix::zeros(2, 3), 1e-9).unwrap(), 0);
        let c = orthogonal_complement(&Vector::from_vec(vec![1.0, 1.0, 0.0])).unwrap();
        assert_eq!(c.len(), 2);
    }

    fn well_conditioned() -> impl Strategy<Value = Matrix> {
        (2usize..=4).prop_flat_map(|n| {
            proptest::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
                // Diagonal dominance keeps the condition number moderate.
                Matrix::from_row_slice(n, n, &v) + Matrix::identity(n, n) * (n as f64 + 1.0)
            })
        })
    }

    proptest! {
        #[test]
        fn min_gain_times_inverse_norm_is_one(m in well_conditioned(), linf in any::<bool>()) {
            let n = if linf { NormSpec::Linf } else { NormSpec::L1 };
            let g = min_gain(&m, n, 1e-9).unwrap();
            let inv = m.clone().try_inverse().unwrap();
            prop_assert!((g * induced_matrix_norm(&inv, n) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn min_gain_is_homogeneous(m in well_conditioned(), lambda in -3.0f64..3.0) {
            prop_assume!(lambda.abs() > 1e-3);
            let g = min_gain(&m, NormSpec::L1, 1e-9).unwrap();
            let gl = min_gain(&(&m * lambda), NormSpec::L1, 1e-9).unwrap();
            prop_assert!((gl - lambda.abs() * g).abs() <= 1e-12 * (1.0 + gl));
        }

        #[test]
        fn spectral_radius_of_powers(
            v in proptest::collection::vec(-1.0f64..1.0, 9),
            k in 1u32..=4,
        ) {
            let m = Matrix::from_row_slice(3, 3, &v);
            let r = spectral_radius(&m).unwrap();
            let mut p = Matrix::identity(3, 3);
            for _ in 0..k { p = &p * &m; }
            let rk = spectral_radius(&p).unwrap();
            prop_assert!((rk - r.powi(k as i32)).abs() <= 1e-8 * (1.0 + rk));
        }
    }
}
