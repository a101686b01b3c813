//! Distances between index-paired families and perturbation experiments on
//! the quasi-controllability measure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{qcm, qcm_point, QcmEstimate};
use crate::model::{induced_matrix_norm, Matrix, MatrixFamily, NormSpec, SystemSpec, Tolerances, Vector};
use crate::reachability::{qc_check_with, reach_points, QcStatus, DEFAULT_PRODUCT_CAP};
use crate::serde_util;

/// Seed for the non-coordinate probe points; fixed so reports are reproducible.
pub const PROBE_SEED: u64 = 0x0dd_5eed;

/// `max ||P_w(f) - P_w(g)||` over words of length `1..=s`, members paired by index.
///
/// Every point reachable from a unit `x` under `g` lies within this distance
/// of the point reached along the same word under `f`, so it bounds the
/// reach-set distance of the two families.
pub fn family_distance_bound(f: &MatrixFamily, g: &MatrixFamily, s: usize, n: NormSpec) -> Result<f64> {
    if f.dimension() != g.dimension() || f.len() != g.len() {
        return Err(Error::Validation(
            "families must have the same dimension and member count".into(),
        ));
    }
    let dim = f.dimension();
    let mut level = vec![(Matrix::identity(dim, dim), Matrix::identity(dim, dim))];
    let mut total = 0usize;
    let mut best: f64 = 0.0;
    for _ in 0..s {
        total += level.len() * f.len();
        if total > DEFAULT_PRODUCT_CAP {
            return Err(Error::BudgetExceeded {
                what: "paired products",
                cap: DEFAULT_PRODUCT_CAP,
            });
        }
        let next: Vec<(Matrix, Matrix)> = level
            .iter()
            .flat_map(|(pf, pg)| {
                f.members()
                    .iter()
                    .zip(g.members())
                    .map(move |(a, b)| (a * pf, b * pg))
            })
            .collect();
        for (pf, pg) in &next {
            best = best.max(induced_matrix_norm(&(pf - pg), n));
        }
        level = next;
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCheck {
    #[serde(serialize_with = "serde_util::vector")]
    pub x: Vector,
    pub base: f64,
    pub perturbed: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbReport {
    pub base_qcm: QcmEstimate,
    pub perturbed_qcm: QcmEstimate,
    pub rho_s_bound: f64,
    pub lipschitz_ok: bool,
    pub per_point_checks: Vec<PointCheck>,
    /// Present when `certified_lower(f) > rho_s_bound`: whether the perturbed
    /// family was again found quasi-controllable.
    pub qc_preserved: Option<bool>,
}

/// Unit probe points: the coordinate vectors, then seeded random directions.
pub fn probe_points(dim: usize, n: NormSpec, count: usize) -> Vec<Vector> {
    probe_points_seeded(dim, n, count, PROBE_SEED)
}

pub fn probe_points_seeded(dim: usize, n: NormSpec, count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vector> = (0..dim.min(count))
        .map(|j| Vector::from_fn(dim, |i, _| f64::from(i == j)))
        .collect();
    while out.len() < count {
        let v = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let norm = n.of(v.as_slice());
        if norm > 1e-3 {
            out.push(v / norm);
        }
    }
    out
}

/// Compares the measure of `f` with that of `f + deltas` pointwise and on the grid.
pub fn qcm_perturbation_check(
    f: &MatrixFamily,
    deltas: &[Matrix],
    spec: &SystemSpec,
    probe_count: usize,
) -> Result<PerturbReport> {
    qcm_perturbation_check_seeded(f, deltas, spec, probe_count, PROBE_SEED)
}

/// As [`qcm_perturbation_check`] with the random probes drawn from `seed`.
pub fn qcm_perturbation_check_seeded(
    f: &MatrixFamily,
    deltas: &[Matrix],
    spec: &SystemSpec,
    probe_count: usize,
    seed: u64,
) -> Result<PerturbReport> {
    let g = f.perturbed(deltas)?;
    let s = spec.horizon_s;
    let n = spec.norm;
    let tol = &spec.tolerances;
    let rho_s_bound = family_distance_bound(f, &g, s, n)?;
    let base_qcm = qcm(f, s, n, spec.sphere_mesh, tol)?;
    let perturbed_qcm = qcm(&g, s, n, spec.sphere_mesh, tol)?;

    let per_point_checks = probe_points_seeded(f.dimension(), n, probe_count, seed)
        .into_par_iter()
        .map(|x| {
            let base = qcm_point(f, &x, s, n, tol)?;
            let perturbed = qcm_point(&g, &x, s, n, tol)?;
            Ok(PointCheck {
                delta: (base - perturbed).abs(),
                x,
                base,
                perturbed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lipschitz_ok = per_point_checks
        .iter()
        .all(|c| c.delta <= rho_s_bound + 1e-9);

    let qc_preserved = if base_qcm.certified_lower > rho_s_bound {
        let g_spec = SystemSpec {
            family: g.clone(),
            ..spec.clone()
        };
        let v = qc_check_with(&g, &g_spec, Some(&perturbed_qcm))?;
        Some(v.status == QcStatus::QuasiControllable)
    } else {
        None
    };
    Ok(PerturbReport {
        base_qcm,
        perturbed_qcm,
        rho_s_bound,
        lipschitz_ok,
        per_point_checks,
        qc_preserved,
    })
}

/// Diagnostic: `max_{t <= s}` Hausdorff distance between the raw reach sets of
/// `f` and `g` from `x` at step `t`.
pub fn reach_hausdorff(
    f: &MatrixFamily,
    g: &MatrixFamily,
    x: &Vector,
    s: usize,
    n: NormSpec,
    tol: &Tolerances,
) -> Result<f64> {
    let a = reach_points(f, x, s, n, tol.dedup_tol)?;
    let b = reach_points(g, x, s, n, tol.dedup_tol)?;
    let directed = |p: &[crate::reachability::ReachPoint], q: &[crate::reachability::ReachPoint]| {
        p.iter()
            .map(|u| {
                q.iter()
                    .map(|v| n.dist(u.point.as_slice(), v.point.as_slice()))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(a.steps
        .iter()
        .zip(&b.steps)
        .map(|(p, q)| directed(p, q).max(directed(q, p)))
        .fold(0.0, f64::max))
}
