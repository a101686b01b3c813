//! Reachable sets `X(x, t, 0)` of the difference inclusion, products of the
//! family, and the quasi-controllability decision.
//!
//! A word `(i_1, ..., i_t)` stands for the product `A_{i_t} ... A_{i_1}`:
//! the first index is applied first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dedup::DedupIndex;
use crate::error::{Error, Result};
use crate::geometry::span_dim;
use crate::linalg::{column_basis, common_eigenvector, is_common_invariant, orthogonal_complement};
use crate::linalg::real_eigenspaces;
use crate::measures;
use crate::model::{induced_matrix_norm, Matrix, MatrixFamily, NormSpec, SystemSpec, Vector};
use crate::serde_util;

pub type Word = Vec<usize>;

/// Default cap on stored reach points.
pub const DEFAULT_POINT_CAP: usize = 1_000_000;
/// Default cap on stored products.
pub const DEFAULT_PRODUCT_CAP: usize = 1_000_000;

/// Seed of the random probes used by [`qc_check`]; fixed so verdicts are reproducible.
const PROBE_SEED: u64 = 0x5eed_0f9c;
const RANDOM_PROBES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachPoint {
    #[serde(serialize_with = "serde_util::vector")]
    pub point: Vector,
    pub word: Word,
}

/// Distinct points reachable from `base_point` in `t = 0..=s` steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachSet {
    #[serde(serialize_with = "serde_util::vector")]
    pub base_point: Vector,
    pub steps: Vec<Vec<ReachPoint>>,
    pub dedup_tol: f64,
}

impl ReachSet {
    pub fn points(&self) -> impl Iterator<Item = &Vector> {
        self.steps.iter().flatten().map(|p| &p.point)
    }

    pub fn point_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }
}

pub fn reach_points(
    f: &MatrixFamily,
    x: &Vector,
    s: usize,
    n: NormSpec,
    dedup_tol: f64,
) -> Result<ReachSet> {
    reach_points_capped(f, x, s, n, dedup_tol, DEFAULT_POINT_CAP)
}

/// Like [`reach_points`] with an explicit cap on the total number of stored points.
pub fn reach_points_capped(
    f: &MatrixFamily,
    x: &Vector,
    s: usize,
    n: NormSpec,
    dedup_tol: f64,
    cap: usize,
) -> Result<ReachSet> {
    if x.len() != f.dimension() {
        return Err(Error::Validation(format!(
            "start point has length {}, family dimension is {}",
            x.len(),
            f.dimension()
        )));
    }
    let mut steps = vec![vec![ReachPoint {
        point: x.clone(),
        word: Vec::new(),
    }]];
    let mut total = 1;
    for _ in 0..s {
        let prev = steps.last().expect("step 0 exists");
        let mut index = DedupIndex::new(f.dimension(), n, dedup_tol);
        let mut next = Vec::new();
        for p in prev {
            for (i, a) in f.members().iter().enumerate() {
                let y = a * &p.point;
                if index.insert(y.as_slice()).1 {
                    total += 1;
                    if total > cap {
                        return Err(Error::BudgetExceeded {
                            what: "reach points",
                            cap,
                        });
                    }
                    let mut word = p.word.clone();
                    word.push(i);
                    next.push(ReachPoint { point: y, word });
                }
            }
        }
        steps.push(next);
    }
    Ok(ReachSet {
        base_point: x.clone(),
        steps,
        dedup_tol,
    })
}

/// Dimension of `span{X(x, t, 0) : 0 <= t <= s}`.
pub fn orbit_span_dim(
    f: &MatrixFamily,
    x: &Vector,
    s: usize,
    n: NormSpec,
    dedup_tol: f64,
    rank_tol: f64,
) -> Result<usize> {
    let reach = reach_points(f, x, s, n, dedup_tol)?;
    let pts: Vec<Vector> = reach.points().cloned().collect();
    span_dim(&pts, rank_tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductEntry {
    #[serde(serialize_with = "serde_matrix")]
    pub matrix: Matrix,
    pub word: Word,
    pub norm: f64,
}

fn serde_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize as _;
    serde_util::matrix_rows(m).serialize(s)
}

impl ProductEntry {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }
}

/// Product of the family along `word`, first index applied first.
pub fn word_product(f: &MatrixFamily, word: &[usize]) -> Matrix {
    let n = f.dimension();
    word.iter()
        .fold(Matrix::identity(n, n), |acc, &i| &f.members()[i] * acc)
}

/// Level-by-level product enumeration in canonical word order, deduplicated
/// within each level by entrywise distance.
pub struct ProductLevels<'a> {
    family: &'a MatrixFamily,
    norm: NormSpec,
    dedup_tol: f64,
    cap: usize,
    level: Vec<ProductEntry>,
    depth: usize,
    total: usize,
}

impl<'a> ProductLevels<'a> {
    pub fn new(family: &'a MatrixFamily, norm: NormSpec, dedup_tol: f64, cap: usize) -> Self {
        let n = family.dimension();
        ProductLevels {
            family,
            norm,
            dedup_tol,
            cap,
            level: vec![ProductEntry {
                matrix: Matrix::identity(n, n),
                word: Vec::new(),
                norm: 1.0,
            }],
            depth: 0,
            total: 0,
        }
    }

    /// Products of the current length (length 0 is the identity).
    pub fn current(&self) -> &[ProductEntry] {
        &self.level
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of products of positive length generated so far.
    pub fn total(&self) -> usize {
        self.total
    }

    /// Size the next level could reach before deduplication.
    pub fn next_level_bound(&self) -> usize {
        self.level.len().saturating_mul(self.family.len())
    }

    /// Extends every product of the current level accepted by `keep`.
    pub fn advance_filtered(&mut self, keep: impl Fn(&ProductEntry) -> bool) -> Result<()> {
        let n = self.family.dimension();
        let mut index = DedupIndex::new(n * n, NormSpec::Linf, self.dedup_tol);
        let mut next = Vec::new();
        for p in self.level.iter().filter(|p| keep(p)) {
            for (i, a) in self.family.members().iter().enumerate() {
                let m = a * &p.matrix;
                if index.insert(m.as_slice()).1 {
                    self.total += 1;
                    if self.total > self.cap {
                        return Err(Error::BudgetExceeded {
                            what: "matrix products",
                            cap: self.cap,
                        });
                    }
                    let mut word = p.word.clone();
                    word.push(i);
                    let norm = induced_matrix_norm(&m, self.norm);
                    next.push(ProductEntry { matrix: m, word, norm });
                }
            }
        }
        self.level = next;
        self.depth += 1;
        Ok(())
    }

    pub fn advance(&mut self) -> Result<()> {
        self.advance_filtered(|_| true)
    }
}

/// All distinct products of length `1..=depth`, grouped by length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductSet {
    pub depth: usize,
    pub products: Vec<ProductEntry>,
}

impl ProductSet {
    pub fn of_length(&self, t: usize) -> impl Iterator<Item = &ProductEntry> {
        self.products.iter().filter(move |p| p.len() == t)
    }

    /// Largest recorded induced norm, at least 1 (the empty product).
    pub fn max_norm(&self) -> f64 {
        self.products.iter().map(|p| p.norm).fold(1.0, f64::max)
    }
}

/// Enumerates products up to `depth`.
///
/// With `prune_bound = Some(b)` the caller declares a norm-monotone use: a
/// product is kept but not extended once `|P| * c^r < b`, where `r` is the
/// remaining depth and `c = max(1, max member norm)`, so no descendant of it
/// can reach norm `b`.
pub fn enumerate_products(
    f: &MatrixFamily,
    depth: usize,
    prune_bound: Option<f64>,
    n: NormSpec,
    dedup_tol: f64,
) -> Result<ProductSet> {
    if depth == 0 {
        return Err(Error::Validation("product depth must be at least 1".into()));
    }
    let growth = f.max_member_norm(n).max(1.0);
    let mut levels = ProductLevels::new(f, n, dedup_tol, DEFAULT_PRODUCT_CAP);
    let mut products = Vec::new();
    for t in 0..depth {
        let remaining = (depth - t) as i32;
        match prune_bound {
            Some(b) => levels.advance_filtered(|p| p.norm * growth.powi(remaining) >= b)?,
            None => levels.advance()?,
        }
        products.extend_from_slice(levels.current());
    }
    Ok(ProductSet { depth, products })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QcStatus {
    QuasiControllable,
    NotQuasiControllable,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QcCertificate {
    /// A nonzero proper subspace invariant under every member.
    InvariantSubspace {
        source: WitnessSource,
        #[serde(serialize_with = "serde_util::vectors")]
        basis: Vec<Vector>,
    },
    /// A positive certified lower bound on `qcm_s`.
    MeasureLowerBound {
        s: usize,
        certified_lower: f64,
        empirical_inf: f64,
    },
    /// For `N <= 3` every proper subspace has dimension 1 or `N - 1`, and
    /// both were searched exactly.
    ExhaustiveSearch { dimension: usize },
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "via", rename_all = "snake_case")]
pub enum WitnessSource {
    CommonEigenvector,
    CommonInvariantHyperplane {
        #[serde(serialize_with = "serde_util::vector")]
        normal: Vector,
    },
    DeficientOrbit {
        #[serde(serialize_with = "serde_util::vector")]
        probe: Vector,
        span_dim: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcVerdict {
    pub status: QcStatus,
    pub certificate: QcCertificate,
}

impl QcVerdict {
    pub fn witness_basis(&self) -> Option<&[Vector]> {
        match &self.certificate {
            QcCertificate::InvariantSubspace { basis, .. } => Some(basis),
            _ => None,
        }
    }

    fn invariant(source: WitnessSource, basis: Vec<Vector>) -> Self {
        QcVerdict {
            status: QcStatus::NotQuasiControllable,
            certificate: QcCertificate::InvariantSubspace { source, basis },
        }
    }
}

/// Decides quasi-controllability in three stages: exact search for common
/// invariant lines and hyperplanes, orbit-span probes, and the certified
/// measure lower bound.
pub fn qc_check(f: &MatrixFamily, spec: &SystemSpec) -> Result<QcVerdict> {
    qc_check_with(f, spec, None)
}

/// As [`qc_check`], reusing an already computed measure estimate for `f`.
pub fn qc_check_with(
    f: &MatrixFamily,
    spec: &SystemSpec,
    known: Option<&measures::QcmEstimate>,
) -> Result<QcVerdict> {
    let dim = f.dimension();
    let tol = &spec.tolerances;
    if dim == 1 {
        // R^1 has no nonzero proper subspace.
        return Ok(QcVerdict {
            status: QcStatus::QuasiControllable,
            certificate: QcCertificate::ExhaustiveSearch { dimension: 1 },
        });
    }

    if let Some(v) = common_eigenvector(f.members(), tol.rank_tol)? {
        return Ok(QcVerdict::invariant(WitnessSource::CommonEigenvector, vec![v]));
    }
    let transposed: Vec<Matrix> = f.members().iter().map(|a| a.transpose()).collect();
    if let Some(normal) = common_eigenvector(&transposed, tol.rank_tol)? {
        let basis = orthogonal_complement(&normal)?;
        if is_common_invariant(f.members(), &basis, tol.rank_tol) {
            return Ok(QcVerdict::invariant(
                WitnessSource::CommonInvariantHyperplane { normal },
                basis,
            ));
        }
    }

    let s = spec.horizon_s.max(dim - 1);
    for probe in probes(f, tol.rank_tol)? {
        let reach = reach_points(f, &probe, s, spec.norm, tol.dedup_tol)?;
        let pts: Vec<Vector> = reach.points().cloned().collect();
        let d = span_dim(&pts, tol.rank_tol)?;
        if d < dim {
            let basis = column_basis(&Matrix::from_columns(&pts), tol.rank_tol)?;
            if !basis.is_empty() && is_common_invariant(f.members(), &basis, tol.rank_tol) {
                return Ok(QcVerdict::invariant(
                    WitnessSource::DeficientOrbit { probe, span_dim: d },
                    basis,
                ));
            }
        }
    }

    let estimate = match known {
        Some(e) => Ok(e.clone()),
        None => measures::qcm(f, s, spec.norm, spec.sphere_mesh, tol),
    };
    match estimate {
        Ok(e) if e.certified_lower > 0.0 => Ok(QcVerdict {
            status: QcStatus::QuasiControllable,
            certificate: QcCertificate::MeasureLowerBound {
                s: e.s,
                certified_lower: e.certified_lower,
                empirical_inf: e.empirical_inf,
            },
        }),
        Ok(_) | Err(Error::BudgetExceeded { .. }) if dim <= 3 => Ok(QcVerdict {
            status: QcStatus::QuasiControllable,
            certificate: QcCertificate::ExhaustiveSearch { dimension: dim },
        }),
        Ok(e) => Ok(QcVerdict {
            status: QcStatus::Unknown,
            certificate: QcCertificate::Inconclusive {
                reason: format!(
                    "no invariant line or hyperplane found, but the certified qcm_{} lower bound is 0 \
                     (grid minimum {})",
                    e.s, e.empirical_inf
                ),
            },
        }),
        Err(Error::BudgetExceeded { what, cap }) => Ok(QcVerdict {
            status: QcStatus::Unknown,
            certificate: QcCertificate::Inconclusive {
                reason: format!(
                    "no invariant line or hyperplane found; measure grid exceeded its budget ({what}, cap {cap})"
                ),
            },
        }),
        Err(e) => Err(e),
    }
}

/// Coordinate vectors, real eigenvectors of each member, then seeded random unit vectors.
fn probes(f: &MatrixFamily, rank_tol: f64) -> Result<Vec<Vector>> {
    let n = f.dimension();
    let mut out: Vec<Vector> = (0..n)
        .map(|j| Vector::from_fn(n, |i, _| f64::from(i == j)))
        .collect();
    for a in f.members() {
        for (_, basis) in real_eigenspaces(a, rank_tol)? {
            out.extend(basis);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for _ in 0..RANDOM_PROBES {
        let v = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 0.0 {
            out.push(v / norm);
        }
    }
    Ok(out)
}
