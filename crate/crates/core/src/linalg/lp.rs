//! Dense simplex for small linear programs with free variables and interval
//! constraints.
//!
//! The solver keeps a condensed (Tucker) tableau: one row per basic slack,
//! one column per nonbasic variable. Structural variables are free; they are
//! pivoted in as needed and never leave the basis afterwards. The entering
//! variable follows Bland's rule. The leaving row comes from a Harris ratio
//! test, which favours large pivots; past a fifth of the iteration cap the
//! leaving choice switches to Bland's rule too, so cycling cannot persist.
//! The tableau is rebuilt from the original data every few pivots. Pivot
//! choices are deterministic, so identical inputs take identical paths.

use serde::Serialize;

use crate::error::{Error, Result};

/// `lower <= <row, c> <= upper`; either bound may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LpConstraint {
    pub row: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Maximize `<objective, c>` over free `c` subject to interval constraints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub constraints: Vec<LpConstraint>,
}

impl LpProblem {
    pub fn maximize(objective: Vec<f64>) -> Self {
        LpProblem {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn constrain(&mut self, row: Vec<f64>, lower: f64, upper: f64) -> &mut Self {
        self.constraints.push(LpConstraint { row, lower, upper });
        self
    }

    pub fn dimension(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        for (i, c) in self.constraints.iter().enumerate() {
            if c.row.len() != n {
                return Err(Error::Validation(format!(
                    "constraint {i} has {} coefficients, objective has {n}",
                    c.row.len()
                )));
            }
            if c.lower.is_nan() || c.upper.is_nan() || c.lower > c.upper {
                return Err(Error::Validation(format!(
                    "constraint {i} has bounds [{}, {}]",
                    c.lower, c.upper
                )));
            }
        }
        if self.objective.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("objective has a non-finite entry".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Optimal value; `NaN` unless `status` is `Optimal`.
    pub value: f64,
    /// Maximizer; empty unless `status` is `Optimal`.
    pub point: Vec<f64>,
}

impl LpOutcome {
    fn without_point(status: LpStatus) -> Self {
        LpOutcome {
            status,
            value: f64::NAN,
            point: Vec::new(),
        }
    }
}

const PIVOT_TOL: f64 = 1e-11;

struct Tableau {
    /// Number of free structural variables; they carry indices `0..n_free`.
    n_free: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    /// Objective rows: `z = const + sum_j coef_j * nonbasic_j`.
    objectives: Vec<(f64, Vec<f64>)>,
    iterations: usize,
    cap: usize,
    /// Slack rows as built from the problem, for reinversion.
    base_rows: Vec<Vec<f64>>,
    base_rhs: Vec<f64>,
    /// Objectives over the structural variables (plus the artificial, while present).
    base_objectives: Vec<Vec<f64>>,
    /// Index of the phase-one artificial variable while it takes part.
    artificial: Option<usize>,
    /// Cleared when a redundant row is dropped; the tableau can then no longer be rebuilt.
    rebuildable: bool,
    since_rebuild: usize,
}

/// Pivots between tableau rebuilds from the original data.
const REBUILD_EVERY: usize = 16;

enum Step {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn is_free(&self, var: usize) -> bool {
        var < self.n_free
    }

    /// Recomputes every row and objective for the current basis directly from
    /// the original data, discarding accumulated rounding. Returns false when
    /// the basis matrix cannot be inverted.
    fn rebuild(&mut self) -> bool {
        self.since_rebuild = 0;
        if !self.rebuildable {
            return false;
        }
        let n = self.n_free;
        let ny = n + usize::from(self.artificial.is_some());
        if self.nonbasic.len() != ny {
            return false;
        }
        let full_row = |k: usize| -> Vec<f64> {
            let mut r = self.base_rows[k].clone();
            if self.artificial.is_some() {
                r.push(1.0);
            }
            r
        };
        // Nonbasic values v satisfy G y + h = v for the structural vector y.
        let mut g = nalgebra::DMatrix::<f64>::zeros(ny, ny);
        let mut h = nalgebra::DVector::<f64>::zeros(ny);
        for (k, &var) in self.nonbasic.iter().enumerate() {
            if var < n {
                g[(k, var)] = 1.0;
            } else if Some(var) == self.artificial {
                g[(k, n)] = 1.0;
            } else {
                for (j, x) in full_row(var - n).into_iter().enumerate() {
                    g[(k, j)] = x;
                }
                h[k] = self.base_rhs[var - n];
            }
        }
        let Some(ginv) = g.try_inverse() else {
            return false;
        };
        let ginv_h = &ginv * &h;
        // Linear form `a . y + b` rewritten over the nonbasic variables.
        let express = |a: &[f64], b: f64| -> (f64, Vec<f64>) {
            let av = nalgebra::DVector::from_column_slice(a);
            let coefs = ginv.tr_mul(&av);
            (b - av.dot(&ginv_h), coefs.as_slice().to_vec())
        };
        for r in 0..self.basic.len() {
            let var = self.basic[r];
            let (c, coefs) = if var < n || Some(var) == self.artificial {
                let mut e = vec![0.0; ny];
                e[if var < n { var } else { n }] = 1.0;
                express(&e, 0.0)
            } else {
                express(&full_row(var - n), self.base_rhs[var - n])
            };
            self.rhs[r] = c;
            self.rows[r] = coefs;
        }
        for (o, obj) in self.base_objectives.iter().enumerate() {
            self.objectives[o] = express(obj, 0.0);
        }
        true
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let ncols = self.nonbasic.len();
        let piv = self.rows[r][c];
        {
            let row = &mut self.rows[r];
            for (k, v) in row.iter_mut().enumerate() {
                *v = if k == c { 1.0 / piv } else { -*v / piv };
            }
            self.rhs[r] = -self.rhs[r] / piv;
        }
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        let update = |coefs: &mut [f64], constant: &mut f64| {
            let f = coefs[c];
            if f == 0.0 {
                return;
            }
            for k in 0..ncols {
                if k == c {
                    coefs[k] = f * pivot_row[k];
                } else {
                    coefs[k] += f * pivot_row[k];
                }
            }
            *constant += f * pivot_rhs;
        };
        for i in 0..self.rows.len() {
            if i != r {
                let (row, rhs) = (&mut self.rows[i], &mut self.rhs[i]);
                update(row, rhs);
            }
        }
        for (constant, coefs) in self.objectives.iter_mut() {
            update(coefs, constant);
        }
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[c]);
    }

    /// Runs Bland-rule simplex iterations on objective row `obj`.
    fn optimize(&mut self, obj: usize, tol: f64) -> Result<Step> {
        loop {
            // Entering variable: smallest index with an improving reduced cost.
            let mut entering: Option<(usize, f64)> = None;
            for (c, &var) in self.nonbasic.iter().enumerate() {
                let d = self.objectives[obj].1[c];
                let dir = if self.is_free(var) {
                    if d > tol {
                        1.0
                    } else if d < -tol {
                        -1.0
                    } else {
                        continue;
                    }
                } else if d > tol {
                    1.0
                } else {
                    continue;
                };
                if entering.is_none_or(|(ec, _)| var < self.nonbasic[ec]) {
                    entering = Some((c, dir));
                }
            }
            let Some((c, dir)) = entering else {
                if self.since_rebuild > 0 && self.rebuild() {
                    continue;
                }
                return Ok(Step::Optimal);
            };

            let candidates: Vec<(usize, f64)> = (0..self.rows.len())
                .filter(|&r| !self.is_free(self.basic[r]))
                .map(|r| (r, self.rows[r][c] * dir))
                .filter(|&(_, rate)| rate < -PIVOT_TOL)
                .collect();
            let leaving = if self.iterations < self.cap / 5 {
                // Harris two-pass test: allow slacks to dip by `tol`, then
                // take the largest pivot among rows blocking within that bound.
                let bound = candidates
                    .iter()
                    .map(|&(r, rate)| (self.rhs[r].max(0.0) + tol) / -rate)
                    .fold(f64::INFINITY, f64::min);
                candidates
                    .iter()
                    .filter(|&&(r, rate)| self.rhs[r].max(0.0) / -rate <= bound)
                    .fold(None, |best: Option<(usize, f64)>, &(r, rate)| match best {
                        Some((_, b)) if -rate <= b => best,
                        _ => Some((r, -rate)),
                    })
            } else {
                // Bland: minimum ratio, ties to the smallest variable index.
                let mut best: Option<(usize, f64)> = None;
                for &(r, rate) in &candidates {
                    let ratio = self.rhs[r].max(0.0) / -rate;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                            if (tie && self.basic[r] < self.basic[br]) || (!tie && ratio < bratio) {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
                best
            };
            let Some((r, _)) = leaving else {
                return Ok(Step::Unbounded);
            };

            self.iterations += 1;
            if self.iterations > self.cap {
                return Err(Error::NumericalFailure(format!(
                    "simplex exceeded its iteration cap of {}",
                    self.cap
                )));
            }
            self.pivot(r, c);
            self.since_rebuild += 1;
            if self.since_rebuild >= REBUILD_EVERY {
                self.rebuild();
            }
        }
    }

    fn drop_column(&mut self, c: usize) {
        for row in self.rows.iter_mut() {
            row.remove(c);
        }
        for (_, coefs) in self.objectives.iter_mut() {
            coefs.remove(c);
        }
        self.nonbasic.remove(c);
    }

    fn drop_row(&mut self, r: usize) {
        self.rebuildable = false;
        self.rows.remove(r);
        self.rhs.remove(r);
        self.basic.remove(r);
    }
}

/// Solves `p` to feasibility/optimality tolerance `lp_tol`.
///
/// Fails with `NumericalFailure` when more than `50 * (constraints + dimension)`
/// pivots are needed or the final point violates a constraint.
pub fn solve_lp(p: &LpProblem, lp_tol: f64) -> Result<LpOutcome> {
    p.validate()?;
    let n = p.dimension();

    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    // (constraint, bound) each slack row belongs to.
    let mut origin = Vec::new();
    let mut scale: f64 = 1.0;
    for (i, c) in p.constraints.iter().enumerate() {
        if c.upper.is_finite() {
            rows.push(c.row.iter().map(|a| -a).collect::<Vec<_>>());
            rhs.push(c.upper);
            origin.push((i, c.upper));
            scale = scale.max(c.upper.abs());
        }
        if c.lower.is_finite() {
            rows.push(c.row.clone());
            rhs.push(-c.lower);
            origin.push((i, c.lower));
            scale = scale.max(c.lower.abs());
        }
    }
    let m = rows.len();
    let feas_tol = lp_tol * scale;

    let mut t = Tableau {
        n_free: n,
        base_rows: rows.clone(),
        base_rhs: rhs.clone(),
        rows,
        rhs,
        basic: (n..n + m).collect(),
        nonbasic: (0..n).collect(),
        objectives: vec![(0.0, p.objective.clone())],
        iterations: 0,
        cap: 50 * (p.constraints.len() + n).max(1),
        base_objectives: vec![p.objective.clone()],
        artificial: None,
        rebuildable: true,
        since_rebuild: 0,
    };

    // Phase 1: a single artificial variable absorbs every negative slack.
    let most_negative = (0..m)
        .filter(|&r| t.rhs[r] < -feas_tol)
        .min_by(|&a, &b| t.rhs[a].total_cmp(&t.rhs[b]).then(a.cmp(&b)));
    if let Some(r0) = most_negative {
        let artificial = n + m;
        for row in t.rows.iter_mut() {
            row.push(1.0);
        }
        t.objectives[0].1.push(0.0);
        let mut w = vec![0.0; t.nonbasic.len() + 1];
        *w.last_mut().unwrap() = -1.0;
        t.objectives.push((0.0, w));
        t.nonbasic.push(artificial);
        t.artificial = Some(artificial);
        t.base_objectives[0].push(0.0);
        let mut w = vec![0.0; n + 1];
        w[n] = -1.0;
        t.base_objectives.push(w);
        let ca = t.nonbasic.len() - 1;
        t.pivot(r0, ca);

        match t.optimize(1, lp_tol)? {
            Step::Optimal => {}
            // -a is bounded above by zero.
            Step::Unbounded => {
                return Err(Error::NumericalFailure("phase one reported unbounded".into()))
            }
        }
        if t.objectives[1].0 < -feas_tol {
            return Ok(LpOutcome::without_point(LpStatus::Infeasible));
        }
        if let Some(r) = t.basic.iter().position(|&v| v == artificial) {
            let best = (0..t.nonbasic.len())
                .filter(|&c| t.nonbasic[c] != artificial)
                .max_by(|&a, &b| t.rows[r][a].abs().total_cmp(&t.rows[r][b].abs()));
            match best {
                Some(c) if t.rows[r][c].abs() > PIVOT_TOL => t.pivot(r, c),
                _ => t.drop_row(r),
            }
        }
        if let Some(c) = t.nonbasic.iter().position(|&v| v == artificial) {
            t.drop_column(c);
        }
        t.objectives.truncate(1);
        t.artificial = None;
        t.base_objectives.truncate(1);
        t.base_objectives[0].pop();
    }

    match t.optimize(0, lp_tol)? {
        Step::Unbounded => return Ok(LpOutcome::without_point(LpStatus::Unbounded)),
        Step::Optimal => {}
    }

    let mut point = vec![0.0; n];
    for (r, &var) in t.basic.iter().enumerate() {
        if var < n {
            point[var] = t.rhs[r];
        }
    }
    // Pivoting accumulates rounding; re-solve the final basis from the
    // original data and keep whichever point fits the constraints better.
    if let Some(refined) = resolve_vertex(p, &t.nonbasic, &origin) {
        if worst_violation(p, &refined).0 <= worst_violation(p, &point).0 {
            point = refined;
        }
    }
    let (excess, i) = worst_violation(p, &point);
    if excess > lp_tol {
        let c = &p.constraints[i];
        let v: f64 = c.row.iter().zip(&point).map(|(a, x)| a * x).sum();
        return Err(Error::NumericalFailure(format!(
            "constraint {i} violated at the returned point ({v} not in [{}, {}])",
            c.lower, c.upper
        )));
    }
    let value = p.objective.iter().zip(&point).map(|(a, x)| a * x).sum();
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        value,
        point,
    })
}

/// Solves for the vertex where every nonbasic slack is tight and every
/// nonbasic structural variable is zero.
fn resolve_vertex(p: &LpProblem, nonbasic: &[usize], origin: &[(usize, f64)]) -> Option<Vec<f64>> {
    let n = p.dimension();
    if nonbasic.len() != n || n == 0 {
        return None;
    }
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    for (k, &var) in nonbasic.iter().enumerate() {
        if var < n {
            a[(k, var)] = 1.0;
        } else {
            let (i, bound) = *origin.get(var - n)?;
            for (j, &x) in p.constraints[i].row.iter().enumerate() {
                a[(k, j)] = x;
            }
            b[k] = bound;
        }
    }
    let x = a.lu().solve(&b)?;
    x.iter().all(|v| v.is_finite()).then(|| x.as_slice().to_vec())
}

/// Largest scaled constraint violation at `point` and the constraint attaining it.
fn worst_violation(p: &LpProblem, point: &[f64]) -> (f64, usize) {
    let mut worst = (0.0, 0);
    for (i, c) in p.constraints.iter().enumerate() {
        let v: f64 = c.row.iter().zip(point).map(|(a, x)| a * x).sum();
        let mag: f64 = c.row.iter().zip(point).map(|(a, x)| (a * x).abs()).sum();
        let scale = 1.0 + mag + c.lower.abs().min(c.upper.abs());
        let excess = (c.lower - v).max(v - c.upper) / scale;
        if excess > worst.0 {
            worst = (excess, i);
        }
    }
    worst
}
