//! Stability classification: exponentially stable, absolutely exponentially
//! unstable, or bounded with a finite product semigroup. Families that fit
//! none of the certificate forms at the explored depth are reported as
//! inconclusive together with the tightest bounds found.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dedup::DedupIndex;
use crate::error::{Error, Result};
use crate::linalg::spectral_radius;
use crate::model::{Matrix, MatrixFamily, NormSpec, SystemSpec, Tolerances, Vector};
use crate::reachability::{
    qc_check, reach_points, word_product, ProductLevels, QcStatus, Word, DEFAULT_PRODUCT_CAP,
};
use crate::serde_util;

/// Spectral radii must exceed `1 + GROWTH_MARGIN` to count as growth.
pub const GROWTH_MARGIN: f64 = 1e-9;
/// Past the requested depth, enumeration continues while fewer products than this have been built.
pub const EXTENSION_BUDGET: usize = 20_000;
/// Hard ceiling on the product length explored by [`classify`].
pub const MAX_DEPTH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    ExponentiallyStable,
    AbsolutelyExponentiallyUnstable,
    MarginalBounded,
    Inconclusive,
}

impl VerdictStatus {
    pub fn name(self) -> &'static str {
        match self {
            VerdictStatus::ExponentiallyStable => "exponentially_stable",
            VerdictStatus::AbsolutelyExponentiallyUnstable => "absolutely_exponentially_unstable",
            VerdictStatus::MarginalBounded => "marginal_bounded",
            VerdictStatus::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StabilityCertificate {
    /// Every product of length `depth` has induced norm at most `max_norm < 1`.
    NormContraction { depth: usize, max_norm: f64 },
    /// The product along `word` has spectral radius above one.
    SpectralGrowth {
        word: Word,
        spectral_radius: f64,
        quasi_controllable: bool,
    },
    /// The products of the family form a finite semigroup closed under
    /// left multiplication by every member.
    FiniteSemigroup {
        size: usize,
        mu: f64,
        #[serde(serialize_with = "serde_util::matrices")]
        elements: Vec<Matrix>,
    },
    Diagnostics {
        jsr_lower: f64,
        jsr_upper: f64,
        depth_reached: usize,
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub certificate: StabilityCertificate,
    /// Bound `mu` with `|x(t)| <= mu |x(0)|` along every trajectory.
    pub mu: Option<f64>,
    /// Decay (stable, negative of the log rate) or growth (unstable) exponent per step.
    pub epsilon: Option<f64>,
    pub gamma: Option<f64>,
}

impl Verdict {
    /// Re-checks the stored certificate against `f` from scratch.
    pub fn reverify(&self, f: &MatrixFamily, n: NormSpec, dedup_tol: f64) -> Result<bool> {
        match &self.certificate {
            StabilityCertificate::NormContraction { depth, max_norm } => {
                let mut levels = ProductLevels::new(f, n, 0.0, DEFAULT_PRODUCT_CAP);
                for _ in 0..*depth {
                    levels.advance()?;
                }
                let m = levels.current().iter().map(|p| p.norm).fold(0.0, f64::max);
                Ok(m < 1.0 && m <= *max_norm * (1.0 + 1e-12))
            }
            StabilityCertificate::SpectralGrowth {
                word,
                spectral_radius: r,
                ..
            } => {
                let again = spectral_radius(&word_product(f, word))?;
                Ok(again > 1.0 + GROWTH_MARGIN && (again - r).abs() <= 1e-9 * r)
            }
            StabilityCertificate::FiniteSemigroup { mu, elements, .. } => {
                let dim = f.dimension();
                let mut index = DedupIndex::new(dim * dim, NormSpec::Linf, dedup_tol);
                for e in elements {
                    index.insert(e.as_slice());
                }
                let closed = f.members().iter().all(|a| {
                    index.find(a.as_slice()).is_some()
                        && elements
                            .iter()
                            .all(|e| index.find((a * e).as_slice()).is_some())
                });
                let bounded = elements
                    .iter()
                    .all(|e| crate::model::induced_matrix_norm(e, n) <= *mu);
                Ok(closed && bounded && *mu >= 1.0)
            }
            StabilityCertificate::Diagnostics { .. } => Ok(true),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JsrBounds {
    pub depth: usize,
    /// `max rho(P)^(1/|P|)` over enumerated products.
    pub lower: f64,
    pub lower_word: Word,
    /// `min_t (max_{|P| = t} |P|)^(1/t)`.
    pub upper: f64,
    pub upper_length: usize,
}

/// Joint spectral radius bracket from products of length `1..=depth`.
pub fn jsr_bounds(f: &MatrixFamily, depth: usize, n: NormSpec) -> Result<JsrBounds> {
    if depth == 0 {
        return Err(Error::Validation("depth must be at least 1".into()));
    }
    let mut levels = ProductLevels::new(f, n, Tolerances::default().dedup_tol, DEFAULT_PRODUCT_CAP);
    let mut b = JsrBounds {
        depth,
        lower: 0.0,
        lower_word: Vec::new(),
        upper: f64::INFINITY,
        upper_length: 0,
    };
    for _ in 0..depth {
        levels.advance()?;
        absorb_level(&levels, &mut b)?;
    }
    Ok(b)
}

/// Folds one level into the bracket; returns the level's largest norm.
fn absorb_level(levels: &ProductLevels, b: &mut JsrBounds) -> Result<f64> {
    let t = levels.depth();
    let inv = 1.0 / t as f64;
    let mut level_max: f64 = 0.0;
    for p in levels.current() {
        level_max = level_max.max(p.norm);
        let r = spectral_radius(&p.matrix)?.powf(inv);
        if r > b.lower {
            b.lower = r;
            b.lower_word = p.word.clone();
        }
    }
    let rate = level_max.powf(inv);
    if rate < b.upper {
        b.upper = rate;
        b.upper_length = t;
    }
    Ok(level_max)
}

/// Classifies the family, extending the product depth past
/// `spec.product_depth` while the enumeration stays cheap.
pub fn classify(f: &MatrixFamily, spec: &SystemSpec) -> Result<Verdict> {
    let n = spec.norm;
    let dedup_tol = spec.tolerances.dedup_tol;
    let dim = f.dimension();
    let mut levels = ProductLevels::new(f, n, dedup_tol, DEFAULT_PRODUCT_CAP);
    let mut seen = DedupIndex::new(dim * dim, NormSpec::Linf, dedup_tol);
    let mut elements: Vec<Matrix> = Vec::new();
    let mut b = JsrBounds {
        depth: 0,
        lower: 0.0,
        lower_word: Vec::new(),
        upper: f64::INFINITY,
        upper_length: 0,
    };
    // Largest norm over lengths 0..t (identity included).
    let mut shorter_max: f64 = 1.0;
    let mut growth: Option<(Word, f64)> = None;

    loop {
        let t = levels.depth();
        if t >= spec.product_depth
            && (levels.total() + levels.next_level_bound() > EXTENSION_BUDGET || t >= MAX_DEPTH)
        {
            break;
        }
        levels.advance()?;
        let t = levels.depth();
        b.depth = t;
        let level_max = absorb_level(&levels, &mut b)?;

        if level_max < 1.0 {
            return Ok(Verdict {
                status: VerdictStatus::ExponentiallyStable,
                certificate: StabilityCertificate::NormContraction {
                    depth: t,
                    max_norm: level_max,
                },
                mu: Some(shorter_max),
                epsilon: Some(-b.upper.ln()),
                gamma: None,
            });
        }

        if growth.is_none() {
            for p in levels.current() {
                let r = spectral_radius(&p.matrix)?;
                if r > 1.0 + GROWTH_MARGIN {
                    growth = Some((p.word.clone(), r));
                    break;
                }
            }
        }
        if let Some((word, r)) = growth.take() {
            let qc = qc_check(f, spec)?.status == QcStatus::QuasiControllable;
            let epsilon = r.ln() / word.len() as f64;
            if qc {
                return Ok(Verdict {
                    status: VerdictStatus::AbsolutelyExponentiallyUnstable,
                    certificate: StabilityCertificate::SpectralGrowth {
                        word,
                        spectral_radius: r,
                        quasi_controllable: true,
                    },
                    mu: None,
                    epsilon: Some(epsilon),
                    gamma: None,
                });
            }
            return Ok(Verdict {
                status: VerdictStatus::Inconclusive,
                certificate: StabilityCertificate::Diagnostics {
                    jsr_lower: b.lower,
                    jsr_upper: b.upper,
                    depth_reached: t,
                    note: format!(
                        "unstable: the product along {word:?} has spectral radius {r}, but the \
                         family is not certified quasi-controllable, so absolute exponential \
                         instability is not implied"
                    ),
                },
                mu: None,
                epsilon: Some(epsilon),
                gamma: None,
            });
        }

        let closed = levels
            .current()
            .iter()
            .all(|p| seen.find(p.matrix.as_slice()).is_some());
        if closed {
            let mu = elements
                .iter()
                .map(|e| crate::model::induced_matrix_norm(e, n))
                .fold(1.0, f64::max);
            return Ok(Verdict {
                status: VerdictStatus::MarginalBounded,
                certificate: StabilityCertificate::FiniteSemigroup {
                    size: elements.len(),
                    mu,
                    elements,
                },
                mu: Some(mu),
                epsilon: None,
                gamma: None,
            });
        }
        for p in levels.current() {
            if seen.insert(p.matrix.as_slice()).1 {
                elements.push(p.matrix.clone());
            }
        }
        shorter_max = shorter_max.max(level_max);
    }

    Ok(Verdict {
        status: VerdictStatus::Inconclusive,
        certificate: StabilityCertificate::Diagnostics {
            jsr_lower: b.lower,
            jsr_upper: b.upper,
            depth_reached: b.depth,
            note: "no norm contraction, spectral growth or finite semigroup found within the \
                   explored depth"
                .into(),
        },
        mu: None,
        epsilon: None,
        gamma: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstabilityProfile {
    /// Least-squares slope of `ln min_u g_u(t)` over the last half of the horizon.
    pub epsilon_estimate: f64,
    /// `min_u max{|x| : x ∈ X(u, t, 0)}` for `t = 0..=horizon`.
    pub min_growth: Vec<f64>,
    pub fit_start: usize,
}

/// Empirical exponential growth rate of the worst-case-over-switching,
/// best-case-over-start-point trajectory norm.
pub fn instability_profile(
    f: &MatrixFamily,
    horizon: usize,
    sample_count: usize,
    n: NormSpec,
    seed: u64,
) -> Result<InstabilityProfile> {
    if horizon < 10 {
        return Err(Error::Validation("instability profile needs a horizon of at least 10".into()));
    }
    if sample_count == 0 {
        return Err(Error::Validation("sample_count must be positive".into()));
    }
    let dim = f.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_growth = vec![f64::INFINITY; horizon + 1];
    let dedup_tol = Tolerances::default().dedup_tol;
    for _ in 0..sample_count {
        let u = loop {
            let v = Vector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            let norm = n.of(v.as_slice());
            if norm > 1e-3 {
                break v / norm;
            }
        };
        let reach = reach_points(f, &u, horizon, n, dedup_tol)?;
        for (t, step) in reach.steps.iter().enumerate() {
            let g = step
                .iter()
                .map(|p| n.of(p.point.as_slice()))
                .fold(0.0, f64::max);
            min_growth[t] = min_growth[t].min(g);
        }
    }
    let fit_start = horizon / 2;
    let window = &min_growth[fit_start..];
    let epsilon_estimate = if window.iter().any(|&g| g <= 0.0) {
        f64::NEG_INFINITY
    } else {
        let pts: Vec<(f64, f64)> = window
            .iter()
            .enumerate()
            .map(|(i, g)| ((fit_start + i) as f64, g.ln()))
            .collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    };
    Ok(InstabilityProfile {
        epsilon_estimate,
        min_growth,
        fit_start,
    })
}
