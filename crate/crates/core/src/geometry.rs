//! Symmetric polytopes `absco(W) = co(W ∪ -W)`: span, inscribed-ball radius,
//! point distance and Hausdorff distance, all in a polyhedral norm.

use crate::error::{Error, Result};
use crate::linalg::{rank, solve_lp, LpProblem, LpStatus};
use crate::model::{Matrix, NormSpec, Tolerances, Vector};

/// Largest dimension for which the sign-pattern enumeration is attempted.
pub const SIGN_ENUMERATION_CAP: usize = 10;

/// The absolute convex hull of a finite generator set.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPolytope {
    dimension: usize,
    generators: Vec<Vector>,
}

impl SymPolytope {
    pub fn new(dimension: usize, generators: Vec<Vector>) -> Result<Self> {
        if let Some(g) = generators.iter().find(|g| g.len() != dimension) {
            return Err(Error::Validation(format!(
                "generator of length {} in a polytope of dimension {dimension}",
                g.len()
            )));
        }
        Ok(SymPolytope {
            dimension,
            generators,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn generators(&self) -> &[Vector] {
        &self.generators
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        SymPolytope {
            dimension: self.dimension,
            generators: self.generators.iter().map(|g| g * lambda).collect(),
        }
    }

    fn nonzero_generators(&self) -> impl Iterator<Item = &Vector> {
        self.generators.iter().filter(|g| g.iter().any(|&x| x != 0.0))
    }
}

/// Dimension of the linear span of `points`.
pub fn span_dim(points: &[Vector], rank_tol: f64) -> Result<usize> {
    if points.is_empty() {
        return Ok(0);
    }
    rank(&Matrix::from_columns(points), rank_tol)
}

/// Radius of the largest `n`-ball centred at the origin inside `absco(W)`.
///
/// Computed through the polar body `{c : |<c, w>| <= 1}`: the radius is
/// `1 / max ||c||_*` with `||.||_*` the dual norm. Zero when `W` does not span.
pub fn inscribed_radius(p: &SymPolytope, n: NormSpec, tol: &Tolerances) -> Result<f64> {
    let dim = p.dimension;
    if n == NormSpec::Linf && dim > SIGN_ENUMERATION_CAP {
        return Err(Error::DimensionCap {
            what: "inscribed radius in the max norm",
            dimension: dim,
            cap: SIGN_ENUMERATION_CAP,
        });
    }
    if span_dim(&p.generators, tol.rank_tol)? < dim {
        return Ok(0.0);
    }
    let mut lp = LpProblem::maximize(vec![0.0; dim]);
    for g in p.nonzero_generators() {
        lp.constrain(g.as_slice().to_vec(), -1.0, 1.0);
    }
    // The polar body is symmetric, so maximizing c_j (resp. <sigma, c>) also
    // covers -c_j (resp. -sigma); only half of the objectives are needed.
    let objectives: Vec<Vec<f64>> = match n.dual() {
        NormSpec::Linf => (0..dim)
            .map(|j| (0..dim).map(|i| f64::from(i == j)).collect())
            .collect(),
        NormSpec::L1 => (0..1usize << (dim - 1))
            .map(|mask| {
                (0..dim)
                    .map(|i| {
                        if i > 0 && mask & (1 << (i - 1)) != 0 {
                            -1.0
                        } else {
                            1.0
                        }
                    })
                    .collect()
            })
            .collect(),
    };
    let mut best: f64 = 0.0;
    for obj in objectives {
        lp.objective = obj;
        let out = solve_lp(&lp, tol.lp_tol)?;
        match out.status {
            LpStatus::Optimal => best = best.max(out.value),
            LpStatus::Unbounded => return Ok(0.0),
            LpStatus::Infeasible => {
                return Err(Error::NumericalFailure(
                    "polar body reported infeasible although it contains the origin".into(),
                ))
            }
        }
    }
    if best <= 0.0 {
        return Err(Error::NumericalFailure("polar body has no extent".into()));
    }
    Ok(1.0 / best)
}

/// `min ||x - y||` over `y ∈ absco(W)`.
pub fn point_distance(x: &Vector, p: &SymPolytope, n: NormSpec, lp_tol: f64) -> Result<f64> {
    if x.len() != p.dimension {
        return Err(Error::Validation("point and polytope dimensions differ".into()));
    }
    let gens: Vec<&Vector> = p.nonzero_generators().collect();
    if gens.is_empty() {
        return Ok(n.of(x.as_slice()));
    }
    let k = gens.len();
    let dim = p.dimension;
    let nt = match n {
        NormSpec::L1 => dim,
        NormSpec::Linf => 1,
    };
    // Variables: [lambda_1..k, u_1..k, t_1..nt]; y = sum lambda_i w_i, |lambda_i| <= u_i.
    let nv = 2 * k + nt;
    let mut obj = vec![0.0; nv];
    for o in obj.iter_mut().skip(2 * k) {
        *o = -1.0;
    }
    let mut lp = LpProblem::maximize(obj);
    for i in 0..k {
        let mut r = vec![0.0; nv];
        r[k + i] = 1.0;
        r[i] = -1.0;
        lp.constrain(r.clone(), 0.0, f64::INFINITY);
        r[i] = 1.0;
        lp.constrain(r, 0.0, f64::INFINITY);
    }
    let mut total = vec![0.0; nv];
    for t in total.iter_mut().skip(k).take(k) {
        *t = 1.0;
    }
    lp.constrain(total, f64::NEG_INFINITY, 1.0);
    for j in 0..dim {
        let tcol = 2 * k + if nt == 1 { 0 } else { j };
        // t >= x_j - y_j and t >= y_j - x_j.
        let mut r = vec![0.0; nv];
        r[tcol] = 1.0;
        for (i, g) in gens.iter().enumerate() {
            r[i] = g[j];
        }
        lp.constrain(r.clone(), x[j], f64::INFINITY);
        for (i, g) in gens.iter().enumerate() {
            r[i] = -g[j];
        }
        lp.constrain(r, -x[j], f64::INFINITY);
    }
    let out = solve_lp(&lp, lp_tol)?;
    match out.status {
        LpStatus::Optimal => Ok((-out.value).max(0.0)),
        s => Err(Error::NumericalFailure(format!(
            "distance program ended with status {s:?}"
        ))),
    }
}

/// Largest distance from an extreme point of `absco(P)` to `absco(Q)`.
pub fn directed_hausdorff(
    p: &SymPolytope,
    q: &SymPolytope,
    n: NormSpec,
    lp_tol: f64,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for g in &p.generators {
        best = best.max(point_distance(g, q, n, lp_tol)?);
    }
    Ok(best)
}

/// Hausdorff distance between `absco(P)` and `absco(Q)`.
///
/// Distance to a convex set is convex, so each directed distance is attained
/// at an extreme point; by symmetry only the generators need checking.
pub fn hausdorff(p: &SymPolytope, q: &SymPolytope, n: NormSpec, lp_tol: f64) -> Result<f64> {
    if p.dimension != q.dimension {
        return Err(Error::Validation("polytope dimensions differ".into()));
    }
    Ok(directed_hausdorff(p, q, n, lp_tol)?.max(directed_hausdorff(q, p, n, lp_tol)?))
}
