//! Core data types: polyhedral norms, matrix families and validated system
//! specifications, plus the JSON family file format.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Polyhedral vector norm in which balls, measures and operator norms are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormSpec {
    /// `|x_1| + ... + |x_N|`
    #[default]
    L1,
    /// `max_i |x_i|`
    Linf,
}

impl NormSpec {
    pub fn dual(self) -> NormSpec {
        match self {
            NormSpec::L1 => NormSpec::Linf,
            NormSpec::Linf => NormSpec::L1,
        }
    }

    /// Norm of a coordinate slice.
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            NormSpec::L1 => v.iter().map(|x| x.abs()).sum(),
            NormSpec::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Distance between two coordinate slices of equal length.
    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            NormSpec::L1 => diffs.sum(),
            NormSpec::Linf => diffs.fold(0.0, f64::max),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NormSpec::L1 => "l1",
            NormSpec::Linf => "linf",
        }
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn vector_norm(v: &Vector, n: NormSpec) -> f64 {
    n.of(v.as_slice())
}

pub fn dual_norm(n: NormSpec) -> NormSpec {
    n.dual()
}

/// Operator norm `max_{|x|=1} |Mx|`: maximum absolute column sum for L1,
/// maximum absolute row sum for Linf.
pub fn induced_matrix_norm(m: &Matrix, n: NormSpec) -> f64 {
    match n {
        NormSpec::L1 => m
            .column_iter()
            .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormSpec::Linf => m
            .row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
    }
}

/// A finite family of real `N x N` matrices generating the inclusion
/// `x(t+1) ∈ {A_1 x, ..., A_k x}`. Member order is canonical.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    dimension: usize,
    members: Vec<Matrix>,
    labels: Vec<Option<String>>,
}

impl MatrixFamily {
    pub fn new(members: Vec<Matrix>) -> Result<Self> {
        let labels = vec![None; members.len()];
        Self::with_labels(members, labels)
    }

    pub fn with_labels(members: Vec<Matrix>, labels: Vec<Option<String>>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Validation("matrix family has no members".into()))?;
        let dimension = first.nrows();
        if dimension == 0 {
            return Err(Error::Validation("dimension must be positive".into()));
        }
        if labels.len() != members.len() {
            return Err(Error::Validation("label count differs from member count".into()));
        }
        for (i, m) in members.iter().enumerate() {
            if m.nrows() != dimension || m.ncols() != dimension {
                return Err(Error::Validation(format!(
                    "member {i} is {}x{}, expected {dimension}x{dimension}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("member {i} has a non-finite entry")));
            }
        }
        Ok(MatrixFamily {
            dimension,
            members,
            labels,
        })
    }

    /// Builds a family from row-major nested slices; convenient in tests and fixtures.
    pub fn from_rows(members: &[&[&[f64]]]) -> Result<Self> {
        let mats = members
            .iter()
            .enumerate()
            .map(|(i, rows)| matrix_from_rows(rows.iter().map(|r| r.to_vec()).collect(), i))
            .collect::<Result<Vec<_>>>()?;
        Self::new(mats)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn members(&self) -> &[Matrix] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.get(i).and_then(|l| l.as_deref())
    }

    pub fn labels(&self) -> &[Option<String>] {
        &self.labels
    }

    /// The family `{λ A_i}`.
    pub fn scaled(&self, lambda: f64) -> MatrixFamily {
        MatrixFamily {
            dimension: self.dimension,
            members: self.members.iter().map(|m| m * lambda).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Index-paired sum `{A_i + D_i}`.
    pub fn perturbed(&self, deltas: &[Matrix]) -> Result<MatrixFamily> {
        if deltas.len() != self.members.len() {
            return Err(Error::Validation(format!(
                "{} perturbation matrices for a family of {} members",
                deltas.len(),
                self.members.len()
            )));
        }
        let members = self
            .members
            .iter()
            .zip(deltas)
            .map(|(a, d)| {
                if d.shape() != a.shape() {
                    Err(Error::Validation("perturbation shape mismatch".into()))
                } else {
                    Ok(a + d)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        MatrixFamily::with_labels(members, self.labels.clone())
    }

    /// Largest induced norm among the members.
    pub fn max_member_norm(&self, n: NormSpec) -> f64 {
        self.members
            .iter()
            .map(|m| induced_matrix_norm(m, n))
            .fold(0.0, f64::max)
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, index: usize) -> Result<Matrix> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Validation(format!("member {index} has no rows")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Validation(format!("member {index} has ragged rows")));
    }
    if ncols != nrows {
        return Err(Error::Validation(format!(
            "member {index} is {nrows}x{ncols}, not square"
        )));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rank_tol: f64,
    pub dedup_tol: f64,
    pub lp_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_tol: 1e-9,
            dedup_tol: 1e-12,
            lp_tol: 1e-10,
        }
    }
}

/// A validated analysis request: family, norm and analysis parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub family: MatrixFamily,
    pub norm: NormSpec,
    /// The `s` of `qcm_s`; at least `N - 1`.
    pub horizon_s: usize,
    pub product_depth: usize,
    /// Grid pitch `1/m` of the sphere grid.
    pub sphere_mesh: f64,
    pub tolerances: Tolerances,
}

impl SystemSpec {
    /// Spec with every parameter at its default: `s = N`, depth `3N`, mesh `1/32`.
    pub fn new(family: MatrixFamily) -> Self {
        let n = family.dimension();
        SystemSpec {
            family,
            norm: NormSpec::L1,
            horizon_s: n,
            product_depth: 3 * n,
            sphere_mesh: 1.0 / 32.0,
            tolerances: Tolerances::default(),
        }
    }

    pub fn with_norm(mut self, norm: NormSpec) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_horizon(mut self, s: usize) -> Self {
        self.horizon_s = s;
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.product_depth = depth;
        self
    }

    pub fn with_mesh(mut self, mesh: f64) -> Self {
        self.sphere_mesh = mesh;
        self
    }

    /// Number of grid subdivisions `m` with `mesh = 1/m`.
    pub fn grid_resolution(&self) -> usize {
        (1.0 / self.sphere_mesh).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.family.dimension();
        if self.horizon_s + 1 < n {
            return Err(Error::Validation(format!(
                "s = {} is below N - 1 = {}",
                self.horizon_s,
                n - 1
            )));
        }
        if self.product_depth == 0 {
            return Err(Error::Validation("product depth must be at least 1".into()));
        }
        validate_mesh(self.sphere_mesh)?;
        let t = &self.tolerances;
        for (name, v) in [
            ("rank_tol", t.rank_tol),
            ("dedup_tol", t.dedup_tol),
            ("lp_tol", t.lp_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be strictly positive")));
            }
        }
        Ok(())
    }
}

/// The mesh must be the reciprocal of a positive integer.
pub fn validate_mesh(mesh: f64) -> Result<usize> {
    if !(mesh.is_finite() && mesh > 0.0 && mesh <= 1.0) {
        return Err(Error::Validation(format!("mesh {mesh} must lie in (0, 1]")));
    }
    let m = (1.0 / mesh).round();
    if (1.0 / mesh - m).abs() > 1e-9 * m {
        return Err(Error::Validation(format!(
            "mesh {mesh} is not the reciprocal of a positive integer"
        )));
    }
    Ok(m as usize)
}

/// On-disk family file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyDocument {
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormSpec>,
    pub matrices: Vec<MatrixEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<f64>,
}

impl FamilyDocument {
    pub fn from_family(family: &MatrixFamily, norm: NormSpec) -> Self {
        let matrices = family
            .members()
            .iter()
            .enumerate()
            .map(|(i, m)| MatrixEntry {
                name: family.label(i).map(str::to_owned),
                rows: m
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
            })
            .collect();
        FamilyDocument {
            dimension: family.dimension(),
            norm: Some(norm),
            matrices,
            analysis: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("family documents always serialize")
    }

    pub fn into_spec(self) -> Result<SystemSpec> {
        if self.dimension == 0 {
            return Err(Error::Validation("dimension must be positive".into()));
        }
        if self.matrices.is_empty() {
            return Err(Error::Validation("\"matrices\" is empty".into()));
        }
        let mut members = Vec::with_capacity(self.matrices.len());
        let mut labels = Vec::with_capacity(self.matrices.len());
        for (i, entry) in self.matrices.into_iter().enumerate() {
            let m = matrix_from_rows(entry.rows, i)?;
            if m.nrows() != self.dimension {
                return Err(Error::Validation(format!(
                    "member {i} is {0}x{0} but dimension is {1}",
                    m.nrows(),
                    self.dimension
                )));
            }
            members.push(m);
            labels.push(entry.name);
        }
        let family = MatrixFamily::with_labels(members, labels)?;
        let mut spec = SystemSpec::new(family).with_norm(self.norm.unwrap_or_default());
        if let Some(a) = self.analysis {
            if let Some(s) = a.s {
                spec.horizon_s = s;
            }
            if let Some(d) = a.depth {
                spec.product_depth = d;
            }
            if let Some(m) = a.mesh {
                spec.sphere_mesh = m;
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses a family file and fills in defaults.
pub fn parse_and_validate(document: &str) -> Result<SystemSpec> {
    let doc: FamilyDocument =
        serde_json::from_str(document).map_err(|e| Error::Syntax(e.to_string()))?;
    doc.into_spec()
}
