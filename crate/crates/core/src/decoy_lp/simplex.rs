//! Two-phase simplex over the unit box `x ∈ [0, 1]ⁿ` with two-sided row
//! constraints `l ≤ a·x ≤ u`.
//!
//! Each row gets a range variable `r = a·x` bounded by `[l, u]`, so all
//! bounds are handled implicitly and the basis has one column per row. The
//! basis is tiny, so it is factorized afresh with partial pivoting at every
//! iteration instead of being updated; rows mixing coefficients of order 1
//! and 1e-13 (Poisson weights at small intensities) would otherwise
//! accumulate enough round-off to lose feasibility.
//!
//! Entering and leaving variables follow Bland's rule, so the method cannot
//! cycle on degenerate vertices.

use crate::error::{Error, Result};

/// Direction entries below this fraction of the largest one are ignored in
/// the ratio test.
const PIVOT_REL_TOL: f64 = 1e-11;
/// Reduced costs within this of zero are treated as optimal.
const COST_TOL: f64 = 1e-12;
/// Phase-one residual above which the program is declared infeasible.
const FEAS_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `lower ≤ coefs·x ≤ upper`. Either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// A linear program whose variables all lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, sense: Sense) -> Self {
        Self { objective, sense, constraints: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_constraint(&mut self, coefs: Vec<f64>, lower: f64, upper: f64) -> Result<()> {
        let c = Constraint { coefs, lower, upper };
        self.check_constraint(&c)?;
        self.constraints.push(c);
        Ok(())
    }

    fn check_constraint(&self, c: &Constraint) -> Result<()> {
        if c.coefs.len() != self.n_vars() {
            return Err(Error::InfeasibleConstruction(format!(
                "constraint has {} coefficients, program has {} variables",
                c.coefs.len(),
                self.n_vars()
            )));
        }
        if c.coefs.iter().any(|v| !v.is_finite()) || c.lower.is_nan() || c.upper.is_nan() {
            return Err(Error::InfeasibleConstruction("non-finite constraint data".into()));
        }
        if c.lower > c.upper {
            return Err(Error::InfeasibleConstruction(format!(
                "lower side {} exceeds upper side {}",
                c.lower, c.upper
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InfeasibleConstruction("non-finite objective".into()));
        }
        self.constraints.iter().try_for_each(|c| self.check_constraint(c))
    }

    /// Largest violation of the box or any row by `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let boxv = x.iter().map(|&v| (-v).max(v - 1.0).max(0.0)).fold(0.0, f64::max);
        self.constraints.iter().fold(boxv, |acc, c| {
            let ax: f64 = c.coefs.iter().zip(x).map(|(a, v)| a * v).sum();
            acc.max(c.lower - ax).max(ax - c.upper)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

/// Solves `m x = rhs` (or `mᵀ x = rhs`) by Gaussian elimination with partial pivoting.
fn dense_solve(m: &[Vec<f64>], rhs: &[f64], transpose: bool) -> Result<Vec<f64>> {
    let k = rhs.len();
    let mut a: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| if transpose { m[j][i] } else { m[i][j] }).collect()).collect();
    let mut b = rhs.to_vec();
    for col in 0..k {
        let p = (col..k).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).expect("non-empty pivot range");
        if a[p][col].abs() < 1e-300 {
            return Err(Error::Numerical("singular basis".into()));
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..k {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..k {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

/// Standard-form problem `Σ_j col_j v_j = 0` with `lb ≤ v ≤ ub`.
struct Bounded {
    cols: Vec<Vec<f64>>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    value: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
}

impl Bounded {
    fn basis_matrix(&self) -> Vec<Vec<f64>> {
        let m = self.basis.len();
        // Row-major: entry [row][position in basis].
        (0..m).map(|r| self.basis.iter().map(|&j| self.cols[j][r]).collect()).collect()
    }

    /// Recomputes basic values from the nonbasic ones.
    fn refresh(&mut self, b: &[Vec<f64>]) -> Result<()> {
        let m = self.basis.len();
        let mut rhs = vec![0.0; m];
        for (j, col) in self.cols.iter().enumerate() {
            if !self.is_basic[j] && self.value[j] != 0.0 {
                for r in 0..m {
                    rhs[r] -= col[r] * self.value[j];
                }
            }
        }
        let xb = dense_solve(b, &rhs, false)?;
        for (&j, v) in self.basis.iter().zip(xb) {
            self.value[j] = v;
        }
        Ok(())
    }

    /// Minimizes `cost·v`; variables at or beyond `col_limit` never enter.
    fn optimize(&mut self, cost: &[f64], col_limit: usize) -> Result<()> {
        let m = self.basis.len();
        for _ in 0..MAX_ITERATIONS {
            let b = self.basis_matrix();
            self.refresh(&b)?;
            let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
            let y = dense_solve(&b, &cb, true)?;

            let mut entering = None;
            for j in 0..col_limit {
                if self.is_basic[j] || self.lb[j] == self.ub[j] {
                    continue;
                }
                let d = cost[j] - (0..m).map(|r| y[r] * self.cols[j][r]).sum::<f64>();
                if self.value[j] == self.lb[j] && d < -COST_TOL {
                    entering = Some((j, 1.0));
                    break;
                }
                if self.value[j] == self.ub[j] && d > COST_TOL {
                    entering = Some((j, -1.0));
                    break;
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(());
            };

            let w = dense_solve(&b, &self.cols[j], false)?;
            let wmax = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let ptol = PIVOT_REL_TOL * wmax.max(1.0);
            // Basic variable i moves at rate -dir·w_i per unit step.
            let mut best: Option<(usize, f64, f64)> = None;
            for (i, &wi) in w.iter().enumerate() {
                let rate = -dir * wi;
                let bj = self.basis[i];
                let v = self.value[bj];
                let (t, bound) = if rate < -ptol && self.lb[bj].is_finite() {
                    (((v - self.lb[bj]) / -rate).max(0.0), self.lb[bj])
                } else if rate > ptol && self.ub[bj].is_finite() {
                    (((self.ub[bj] - v) / rate).max(0.0), self.ub[bj])
                } else {
                    continue;
                };
                best = match best {
                    Some((bi, bt, _)) if t > bt || (t == bt && self.basis[i] > self.basis[bi]) => best,
                    _ => Some((i, t, bound)),
                };
            }
            let flip = self.ub[j] - self.lb[j];
            match best {
                Some((i, t, bound)) if t < flip => {
                    self.value[j] += dir * t;
                    let leaving = self.basis[i];
                    self.value[leaving] = bound;
                    self.is_basic[leaving] = false;
                    self.is_basic[j] = true;
                    self.basis[i] = j;
                }
                _ if flip.is_finite() => {
                    self.value[j] = if dir > 0.0 { self.ub[j] } else { self.lb[j] };
                }
                _ => return Err(Error::Unbounded),
            }
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }
}

/// Solves `lp` to optimality. The returned solution is clamped to the box
/// and its objective value is recomputed from it.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    let n = lp.n_vars();

    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for c in &lp.constraints {
        let scale = c.coefs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            if c.lower > FEAS_TOL || c.upper < -FEAS_TOL {
                return Err(Error::Infeasible);
            }
            continue;
        }
        if c.lower == f64::NEG_INFINITY && c.upper == f64::INFINITY {
            continue;
        }
        rows.push((c.coefs.iter().map(|v| v / scale).collect(), c.lower / scale, c.upper / scale));
    }
    let m = rows.len();
    if m == 0 {
        let x: Vec<f64> = lp
            .objective
            .iter()
            .map(|&c| match lp.sense {
                Sense::Minimize => {
                    if c < 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Sense::Maximize => {
                    if c > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        return Ok(LpSolution { value, x });
    }

    // Columns: x (n), range variables r_i (m), artificials (m).
    let total = n + 2 * m;
    let mut cols = vec![vec![0.0; m]; total];
    let mut lb = vec![0.0; total];
    let mut ub = vec![1.0; total];
    let mut value = vec![0.0; total];
    for (i, (coefs, lo, hi)) in rows.iter().enumerate() {
        for j in 0..n {
            cols[j][i] = coefs[j];
        }
        let r = n + i;
        cols[r][i] = -1.0;
        lb[r] = *lo;
        ub[r] = *hi;
        value[r] = if lo.is_finite() { *lo } else { *hi };
        let a = n + m + i;
        // With x = 0 the row reads −r + σ·art = 0.
        let sigma = if value[r] < 0.0 { -1.0 } else { 1.0 };
        cols[a][i] = sigma;
        lb[a] = 0.0;
        ub[a] = f64::INFINITY;
        value[a] = value[r].abs();
    }
    let mut is_basic = vec![false; total];
    let basis: Vec<usize> = (n + m..total).collect();
    for &j in &basis {
        is_basic[j] = true;
    }
    let mut p = Bounded { cols, lb, ub, value, basis, is_basic };

    let mut cost1 = vec![0.0; total];
    cost1[n + m..].iter_mut().for_each(|c| *c = 1.0);
    p.optimize(&cost1, n + m)?;
    let residual: f64 = (n + m..total).map(|j| p.value[j]).sum();
    if residual > FEAS_TOL {
        return Err(Error::Infeasible);
    }
    for j in n + m..total {
        p.ub[j] = 0.0;
        if !p.is_basic[j] {
            p.value[j] = 0.0;
        }
    }

    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost2 = vec![0.0; total];
    for (c, &o) in cost2.iter_mut().zip(&lp.objective) {
        *c = sign * o;
    }
    p.optimize(&cost2, n + m)?;
    let b = p.basis_matrix();
    p.refresh(&b)?;

    let x: Vec<f64> = p.value[..n].iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { value, x })
}
