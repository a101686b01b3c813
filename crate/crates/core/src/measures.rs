//! The quasi-controllability measure `qcm_s`, the overshooting measure and the
//! a-priori transient bound `ovm <= 1 / qcm`.

use rayon::prelude::*;
use serde::Serialize;

use crate::classify::{classify, Verdict, VerdictStatus};
use crate::error::{Error, Result};
use crate::geometry::{inscribed_radius, SymPolytope};
use crate::model::{Matrix, MatrixFamily, NormSpec, SystemSpec, Tolerances, Vector};
use crate::reachability::{reach_points, ProductLevels, Word, DEFAULT_PRODUCT_CAP};
use crate::serde_util;

/// Largest sphere grid `qcm` will evaluate.
pub const GRID_CAP: usize = 2_000_000;
/// Products enumerated without pruning before the overshoot search starts pruning.
const OVM_EXACT_BUDGET: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcmEstimate {
    pub s: usize,
    /// `max(0, empirical_inf - lipschitz_m * covering_radius)`; a lower bound on `qcm_s`.
    pub certified_lower: f64,
    /// Minimum over the grid; an upper bound on `qcm_s`.
    pub empirical_inf: f64,
    #[serde(serialize_with = "serde_util::vector")]
    pub argmin_point: Vector,
    pub mesh: f64,
    /// Largest induced norm over products of length `0..=s`.
    pub lipschitz_m: f64,
    pub covering_radius: f64,
    /// Grid points evaluated (one per antipodal pair).
    pub grid_points: usize,
}

/// Inner supremum of the measure at a fixed unit vector: the inscribed radius of
/// the absolute convex hull of everything reachable from `x` within `s` steps.
pub fn qcm_point(
    f: &MatrixFamily,
    x: &Vector,
    s: usize,
    n: NormSpec,
    tol: &Tolerances,
) -> Result<f64> {
    check_horizon(f, s)?;
    if (n.of(x.as_slice()) - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "probe point has {n} norm {}, expected 1",
            n.of(x.as_slice())
        )));
    }
    let reach = reach_points(f, x, s, n, tol.dedup_tol)?;
    let poly = SymPolytope::new(f.dimension(), reach.points().cloned().collect())?;
    inscribed_radius(&poly, n, tol)
}

fn check_horizon(f: &MatrixFamily, s: usize) -> Result<()> {
    if s + 1 < f.dimension() {
        return Err(Error::Validation(format!(
            "s = {s} is below N - 1 = {}",
            f.dimension() - 1
        )));
    }
    Ok(())
}

/// Distinct products of length `0..=s`, identity first.
fn products_up_to(f: &MatrixFamily, s: usize, n: NormSpec, dedup_tol: f64) -> Result<Vec<(Matrix, f64)>> {
    let mut levels = ProductLevels::new(f, n, dedup_tol, DEFAULT_PRODUCT_CAP);
    let mut out: Vec<(Matrix, f64)> = levels
        .current()
        .iter()
        .map(|p| (p.matrix.clone(), p.norm))
        .collect();
    for _ in 0..s {
        levels.advance()?;
        out.extend(levels.current().iter().map(|p| (p.matrix.clone(), p.norm)));
    }
    Ok(out)
}

fn radius_from_products(
    products: &[(Matrix, f64)],
    x: &Vector,
    n: NormSpec,
    tol: &Tolerances,
) -> Result<f64> {
    let gens = products.iter().map(|(p, _)| p * x).collect();
    inscribed_radius(&SymPolytope::new(x.len(), gens)?, n, tol)
}

/// Number of integer points `j` with `|j| = m` in the given norm.
fn sphere_grid_size(dim: usize, n: NormSpec, m: usize) -> f64 {
    match n {
        NormSpec::L1 => {
            // sum_k 2^k C(dim, k) C(m - 1, k - 1)
            let mut total = 0.0;
            for k in 1..=dim.min(m) {
                total += 2f64.powi(k as i32) * binomial(dim, k) * binomial(m - 1, k - 1);
            }
            total
        }
        NormSpec::Linf => {
            let m = m as f64;
            (2.0 * m + 1.0).powi(dim as i32) - (2.0 * m - 1.0).powi(dim as i32)
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Points `j / m` on the unit sphere of `n` with integer `j`, one from each
/// antipodal pair (first nonzero coordinate positive), in lexicographic order.
pub fn sphere_grid(dim: usize, n: NormSpec, m: usize) -> Result<Vec<Vector>> {
    if m == 0 || dim == 0 {
        return Err(Error::Validation("grid needs m >= 1 and dimension >= 1".into()));
    }
    if sphere_grid_size(dim, n, m) / 2.0 > GRID_CAP as f64 {
        return Err(Error::BudgetExceeded {
            what: "sphere grid points",
            cap: GRID_CAP,
        });
    }
    let mut out = Vec::new();
    let mut j = vec![0i64; dim];
    grid_rec(&mut j, 0, n, m as i64, false, &mut out);
    Ok(out
        .into_iter()
        .map(|j| Vector::from_iterator(dim, j.iter().map(|&x| x as f64 / m as f64)))
        .collect())
}

fn grid_rec(
    j: &mut Vec<i64>,
    pos: usize,
    n: NormSpec,
    m: i64,
    seen_nonzero: bool,
    out: &mut Vec<Vec<i64>>,
) {
    let dim = j.len();
    if pos == dim {
        out.push(j.clone());
        return;
    }
    let last = pos == dim - 1;
    let candidates: Vec<i64> = match n {
        NormSpec::L1 => {
            let left = m - j[..pos].iter().map(|x| x.abs()).sum::<i64>();
            match (last, left) {
                (true, 0) => vec![0],
                (true, _) => vec![-left, left],
                (false, _) => (-left..=left).collect(),
            }
        }
        NormSpec::Linf => {
            let touched = j[..pos].iter().any(|x| x.abs() == m);
            if last && !touched {
                vec![-m, m]
            } else {
                (-m..=m).collect()
            }
        }
    };
    for v in candidates {
        if !seen_nonzero && v < 0 {
            continue;
        }
        if last && !seen_nonzero && v == 0 {
            continue;
        }
        j[pos] = v;
        grid_rec(j, pos + 1, n, m, seen_nonzero || v != 0, out);
    }
    j[pos] = 0;
}

/// Largest distance from a point of the unit sphere to the nearest grid point.
///
/// Max norm: rounding the free coordinates moves each by at most `1/(2m)`.
/// L1: write `m y = floor + frac` with `R = sum frac` an integer in `0..N`;
/// rounding up the `R` largest fractions costs `2 (R - top_R) <= 2R(N-R)/N`,
/// so the radius is `2 floor(N/2) ceil(N/2) / (N m)`, attained when all
/// fractions equal `R/N`.
pub fn covering_radius(dim: usize, n: NormSpec, m: usize) -> f64 {
    let m = m as f64;
    match n {
        NormSpec::Linf => 0.5 / m,
        NormSpec::L1 => {
            let lo = (dim / 2) as f64;
            let hi = dim.div_ceil(2) as f64;
            2.0 * lo * hi / (dim as f64 * m)
        }
    }
}

/// Bracketed estimate of `qcm_s` on the deterministic sphere grid of pitch `mesh`.
///
/// `x -> rho(x)` is `M_s`-Lipschitz (each generator `P x` moves by at most
/// `|P| |x - y|`, and the inscribed radius is 1-Lipschitz in Hausdorff
/// distance), which turns the grid minimum into a certified lower bound.
pub fn qcm(
    f: &MatrixFamily,
    s: usize,
    n: NormSpec,
    mesh: f64,
    tol: &Tolerances,
) -> Result<QcmEstimate> {
    check_horizon(f, s)?;
    let m = crate::model::validate_mesh(mesh)?;
    let dim = f.dimension();
    let grid = sphere_grid(dim, n, m)?;
    let products = products_up_to(f, s, n, tol.dedup_tol)?;
    let lipschitz_m = products.iter().map(|(_, nm)| *nm).fold(1.0, f64::max);

    let radii: Vec<f64> = grid
        .par_iter()
        .map(|x| radius_from_products(&products, x, n, tol))
        .collect::<Result<_>>()?;
    let (arg, empirical_inf) = radii
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, r)| if r < best.1 { (i, r) } else { best });
    let covering = covering_radius(dim, n, m);
    Ok(QcmEstimate {
        s,
        certified_lower: (empirical_inf - lipschitz_m * covering).max(0.0),
        empirical_inf,
        argmin_point: grid[arg].clone(),
        mesh,
        lipschitz_m,
        covering_radius: covering,
        grid_points: grid.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvmProfileRow {
    pub t: usize,
    /// Largest induced norm among the explored products of length `t`.
    pub max_norm: f64,
    pub word: Word,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvmEstimate {
    pub horizon: usize,
    /// Largest induced norm over all products of length `0..=horizon`.
    pub lower_bound: f64,
    pub witness_word: Word,
    pub witness_time: usize,
    /// `1 / certified qcm lower bound`, filled in once stability is certified.
    pub certified_upper: Option<f64>,
    /// Deepest level that had to be explored; later levels were bounded out.
    pub explored_depth: usize,
    pub explored_products: usize,
    pub profile: Vec<OvmProfileRow>,
}

/// Overshoot over the horizon: `max |P|` over products of length `0..=horizon`.
///
/// Levels are enumerated exactly while they stay small; after that a product
/// `P` of length `t` is dropped when `|P| * S(horizon - t)` cannot beat the
/// best norm so far, where `S(r)` bounds every product of length `<= r` by
/// submultiplicativity from the exactly known short-length maxima. The search
/// stops as soon as no length left can beat the best norm.
pub fn ovm_empirical(f: &MatrixFamily, horizon: usize, n: NormSpec) -> Result<OvmEstimate> {
    ovm_empirical_with(f, horizon, n, Tolerances::default().dedup_tol)
}

pub fn ovm_empirical_with(
    f: &MatrixFamily,
    horizon: usize,
    n: NormSpec,
    dedup_tol: f64,
) -> Result<OvmEstimate> {
    let mut levels = ProductLevels::new(f, n, dedup_tol, DEFAULT_PRODUCT_CAP);
    let mut best = 1.0;
    let mut witness: (Word, usize) = (Vec::new(), 0);
    let mut profile = vec![OvmProfileRow {
        t: 0,
        max_norm: 1.0,
        word: Vec::new(),
    }];
    // Exact per-length maxima, index = length.
    let mut exact = vec![1.0];

    let mut record = |levels: &ProductLevels, best: &mut f64, witness: &mut (Word, usize)| -> f64 {
        let t = levels.depth();
        let mut level_max = 0.0;
        let mut level_word: &[usize] = &[];
        for p in levels.current() {
            if p.norm > level_max {
                level_max = p.norm;
                level_word = &p.word;
            }
        }
        if level_max > *best {
            *best = level_max;
            *witness = (level_word.to_vec(), t);
        }
        profile.push(OvmProfileRow {
            t,
            max_norm: level_max,
            word: level_word.to_vec(),
        });
        level_max
    };

    while levels.depth() < horizon
        && levels.total() + levels.next_level_bound() <= OVM_EXACT_BUDGET
        && !levels.current().is_empty()
    {
        levels.advance()?;
        exact.push(record(&levels, &mut best, &mut witness));
    }

    if levels.depth() < horizon && !levels.current().is_empty() {
        let length_bound = length_bounds(&exact, horizon);
        // tail[t] = max over lengths t..=horizon; prefix_max[r] = max over 0..=r.
        let mut tail = length_bound.clone();
        for t in (0..horizon).rev() {
            tail[t] = tail[t].max(tail[t + 1]);
        }
        let mut prefix_max = length_bound.clone();
        for r in 1..=horizon {
            prefix_max[r] = prefix_max[r].max(prefix_max[r - 1]);
        }
        while levels.depth() < horizon && !levels.current().is_empty() {
            let t = levels.depth();
            if tail[t + 1] <= best {
                break;
            }
            let remaining = horizon - t;
            let cut = best;
            levels.advance_filtered(|p| p.norm * prefix_max[remaining] > cut)?;
            record(&levels, &mut best, &mut witness);
        }
    }

    Ok(OvmEstimate {
        horizon,
        lower_bound: best,
        witness_word: witness.0,
        witness_time: witness.1,
        certified_upper: None,
        explored_depth: levels.depth(),
        explored_products: levels.total(),
        profile,
    })
}

/// Upper bounds on the largest product norm of each length `0..=horizon`,
/// exact where `exact` is known and submultiplicative beyond.
fn length_bounds(exact: &[f64], horizon: usize) -> Vec<f64> {
    let known = exact.len() - 1;
    let mut u = vec![0.0; horizon + 1];
    for l in 0..=horizon {
        if l <= known {
            u[l] = exact[l];
        } else {
            u[l] = (1..=known)
                .map(|d| exact[d] * u[l - d])
                .fold(f64::INFINITY, f64::min);
        }
    }
    u
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientBound {
    pub qcm: QcmEstimate,
    pub qcm_lower: f64,
    /// `1 / qcm_lower`, a certified upper bound on the overshooting measure.
    pub bound: f64,
    pub stability_certificate: Verdict,
}

/// Certified overshoot bound `ovm <= 1 / qcm_s` for a family whose stability is certified.
pub fn transient_bound(f: &MatrixFamily, spec: &SystemSpec) -> Result<TransientBound> {
    let verdict = classify(f, spec)?;
    transient_bound_with(f, spec, verdict)
}

/// As [`transient_bound`] with a verdict already computed for `f`.
pub fn transient_bound_with(
    f: &MatrixFamily,
    spec: &SystemSpec,
    verdict: Verdict,
) -> Result<TransientBound> {
    match verdict.status {
        VerdictStatus::ExponentiallyStable | VerdictStatus::MarginalBounded => {}
        other => {
            return Err(Error::NotApplicable(format!(
                "stability is not certified (classification: {})",
                other.name()
            )))
        }
    }
    let estimate = qcm(f, spec.horizon_s, spec.norm, spec.sphere_mesh, &spec.tolerances)?;
    if estimate.certified_lower <= 0.0 {
        return Err(Error::DegenerateMeasure);
    }
    Ok(TransientBound {
        qcm_lower: estimate.certified_lower,
        bound: 1.0 / estimate.certified_lower,
        qcm: estimate,
        stability_certificate: verdict,
    })
}
