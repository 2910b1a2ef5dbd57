//! Dense bounded-variable revised simplex.
//!
//! Every row gets a slack so rows read `a x + s = b`, with the slack's bounds
//! encoding the sense. Phase 1 starts from an artificial basis and minimizes
//! the artificial sum; phase 2 fixes artificials at zero and minimizes the
//! real objective. The basis inverse is kept explicitly, updated by
//! elementary row operations and refactorized periodically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Degenerate pivots in a row before switching to Bland's rule.
pub const STALL_LIMIT: usize = 100;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coefficients: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `min c x` subject to constraint rows and `lower <= x <= upper`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its index.
    pub fn add_variable(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coefficients: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint {
            coefficients,
            sense,
            rhs,
        });
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Contract("bound vectors must match the objective length".into()));
        }
        for j in 0..n {
            if !self.objective[j].is_finite() {
                return Err(Error::Contract(format!("objective coefficient {j} is not finite")));
            }
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::Contract(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(Error::Contract(format!("row {i} has a non-finite right-hand side")));
            }
            if c.coefficients.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(Error::Contract(format!("row {i} has a bad coefficient")));
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_infeasibility(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coefficients.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_infeasibility: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
    /// Nonbasic free variable, held at zero.
    Zero,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Simplex {
    m: usize,
    /// Sparse columns: structurals, then slacks, then artificials.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Row-major `m x m` basis inverse.
    binv: Vec<f64>,
    iterations: usize,
    limit: usize,
}

impl Simplex {
    fn column_times_binv(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for &(r, a) in &self.cols[j] {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.binv[i * m + r] * a;
            }
        }
        out
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &bj) in self.basis.iter().enumerate() {
            let c = cost[bj];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &v) in y.iter_mut().zip(row) {
                    *yk += c * v;
                }
            }
        }
        y
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination and recomputes
    /// basic values from the nonbasic ones.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (p, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                a[r * m + p] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let pivot = (c..m)
                .max_by(|&p, &q| a[p * m + c].abs().total_cmp(&a[q * m + c].abs()))
                .unwrap_or(c);
            if a[pivot * m + c].abs() < 1e-13 {
                return Err(Error::Numerical("simplex basis became singular".into()));
            }
            if pivot != c {
                for k in 0..m {
                    a.swap(c * m + k, pivot * m + k);
                    inv.swap(c * m + k, pivot * m + k);
                }
            }
            let d = 1.0 / a[c * m + c];
            for k in 0..m {
                a[c * m + k] *= d;
                inv[c * m + k] *= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        let mut rhs = self.b.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                for &(r, v) in col {
                    rhs[r] -= v * self.x[j];
                }
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x[self.basis[i]] = row.iter().zip(&rhs).map(|(p, q)| p * q).sum();
        }
        Ok(())
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let d = 1.0 / alpha[r];
        for k in 0..m {
            self.binv[r * m + k] *= d;
        }
        for (i, &f) in alpha.iter().enumerate().take(m) {
            if i != r && f != 0.0 {
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
    }

    fn run(&mut self, cost: &[f64]) -> Result<Outcome> {
        let n_total = self.cols.len();
        let mut stalled = 0;
        let mut bland = false;
        let mut since_refactor = 0;
        loop {
            if self.iterations >= self.limit {
                return Ok(Outcome::IterationLimit);
            }
            if since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                since_refactor = 0;
            }
            let y = self.duals(cost);

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for (j, &cj) in cost.iter().enumerate().take(n_total) {
                let st = self.state[j];
                if matches!(st, State::Basic(_)) || self.upper[j] - self.lower[j] <= 0.0 {
                    continue;
                }
                let d = cj - self.cols[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>();
                let dir = match st {
                    State::Lower if d < -OPTIMALITY_TOL => 1.0,
                    State::Upper if d > OPTIMALITY_TOL => -1.0,
                    State::Zero if d.abs() > OPTIMALITY_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else {
                return Ok(Outcome::Optimal);
            };

            // Ratio test. Basic variable i moves at rate -dir * alpha[i].
            let alpha = self.column_times_binv(q);
            let mut step = self.upper[q] - self.lower[q];
            let mut leaving: Option<usize> = None;
            for (i, &a) in alpha.iter().enumerate() {
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let bj = self.basis[i];
                let rate = -dir * a;
                let room = if rate < 0.0 {
                    (self.x[bj] - self.lower[bj]) / -rate
                } else {
                    (self.upper[bj] - self.x[bj]) / rate
                };
                if !room.is_finite() {
                    continue;
                }
                let room = room.max(0.0);
                let better = match leaving {
                    None => room < step,
                    Some(l) => {
                        if room < step - 1e-12 {
                            true
                        } else if room <= step + 1e-12 {
                            if bland {
                                bj < self.basis[l]
                            } else {
                                a.abs() > alpha[l].abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = room;
                    leaving = Some(i);
                }
            }
            if !step.is_finite() {
                return Ok(Outcome::Unbounded);
            }

            self.iterations += 1;
            since_refactor += 1;
            if step <= FEASIBILITY_TOL {
                stalled += 1;
                if stalled >= STALL_LIMIT {
                    bland = true;
                }
            } else {
                stalled = 0;
            }

            self.x[q] += dir * step;
            for (i, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    self.x[self.basis[i]] -= dir * step * a;
                }
            }
            match leaving {
                None => {
                    // Bound flip.
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Some(r) => {
                    let out = self.basis[r];
                    let rate = -dir * alpha[r];
                    if rate < 0.0 {
                        self.x[out] = self.lower[out];
                        self.state[out] = State::Lower;
                    } else {
                        self.x[out] = self.upper[out];
                        self.state[out] = State::Upper;
                    }
                    self.pivot(r, &alpha);
                    self.basis[r] = q;
                    self.state[q] = State::Basic(r);
                }
            }
        }
    }
}

fn nonbasic_start(l: f64, u: f64) -> (State, f64) {
    if l.is_finite() {
        (State::Lower, l)
    } else if u.is_finite() {
        (State::Upper, u)
    } else {
        (State::Zero, 0.0)
    }
}

/// Solves `p` with the default iteration limit `50 (rows + cols)`.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    let limit = 50 * (p.constraints.len() + p.n_vars()).max(1);
    solve_lp_with_limit(p, limit)
}

pub fn solve_lp_with_limit(p: &LpProblem, limit: usize) -> Result<LpSolution> {
    p.check()?;
    let n = p.n_vars();
    let m = p.constraints.len();

    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, c) in p.constraints.iter().enumerate() {
        for &(j, a) in &c.coefficients {
            if a != 0.0 {
                match cols[j].iter_mut().find(|(r, _)| *r == i) {
                    Some(e) => e.1 += a,
                    None => cols[j].push((i, a)),
                }
            }
        }
    }
    let mut lower = p.lower.clone();
    let mut upper = p.upper.clone();
    for (i, c) in p.constraints.iter().enumerate() {
        cols.push(vec![(i, 1.0)]);
        let (l, u) = match c.sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        lower.push(l);
        upper.push(u);
    }
    let mut x = vec![0.0; n + m];
    let mut state = Vec::with_capacity(n + 2 * m);
    for j in 0..n + m {
        let (s, v) = nonbasic_start(lower[j], upper[j]);
        state.push(s);
        x[j] = v;
    }
    let b: Vec<f64> = p.constraints.iter().map(|c| c.rhs).collect();
    let mut residual = b.clone();
    for (j, col) in cols.iter().enumerate() {
        for &(r, a) in col {
            residual[r] -= a * x[j];
        }
    }
    let mut binv = vec![0.0; m * m];
    let mut basis = Vec::with_capacity(m);
    for (i, &res) in residual.iter().enumerate() {
        let sign = if res < 0.0 { -1.0 } else { 1.0 };
        cols.push(vec![(i, sign)]);
        lower.push(0.0);
        upper.push(f64::INFINITY);
        x.push(res.abs());
        state.push(State::Basic(i));
        basis.push(n + m + i);
        binv[i * m + i] = sign;
    }

    let mut sx = Simplex {
        m,
        cols,
        lower,
        upper,
        b,
        x,
        state,
        basis,
        binv,
        iterations: 0,
        limit,
    };

    let artificial = |j: usize| j >= n + m;
    let phase1_cost: Vec<f64> = (0..n + 2 * m).map(|j| if artificial(j) { 1.0 } else { 0.0 }).collect();
    let finish = |sx: &Simplex, status: LpStatus| {
        let xs = sx.x[..n].to_vec();
        LpSolution {
            status,
            objective: p.objective_value(&xs),
            max_infeasibility: p.max_infeasibility(&xs),
            x: xs,
            iterations: sx.iterations,
        }
    };

    match sx.run(&phase1_cost)? {
        Outcome::IterationLimit => return Ok(finish(&sx, LpStatus::IterationLimit)),
        Outcome::Unbounded => {
            return Err(Error::Numerical("phase 1 reported an unbounded ray".into()))
        }
        Outcome::Optimal => {}
    }
    sx.refactor()?;
    let infeasibility: f64 = (n + m..n + 2 * m).map(|j| sx.x[j]).sum();
    let scale = 1.0 + p.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
    if infeasibility > FEASIBILITY_TOL * scale * (m.max(1) as f64) {
        return Ok(finish(&sx, LpStatus::Infeasible));
    }

    // Fix artificials at zero and pivot basic ones out where possible.
    for j in n + m..n + 2 * m {
        sx.upper[j] = 0.0;
        if !matches!(sx.state[j], State::Basic(_)) {
            sx.x[j] = 0.0;
            sx.state[j] = State::Lower;
        }
    }
    for r in 0..m {
        let bj = sx.basis[r];
        if !artificial(bj) {
            continue;
        }
        let row = &sx.binv[r * m..(r + 1) * m];
        let candidate = (0..n + m).find(|&j| {
            !matches!(sx.state[j], State::Basic(_))
                && sx.cols[j].iter().map(|&(i, a)| row[i] * a).sum::<f64>().abs() > 1e-7
        });
        if let Some(q) = candidate {
            let alpha = sx.column_times_binv(q);
            sx.pivot(r, &alpha);
            sx.basis[r] = q;
            sx.state[q] = State::Basic(r);
            sx.state[bj] = State::Lower;
            sx.x[bj] = 0.0;
        }
    }
    sx.refactor()?;

    let mut phase2_cost = p.objective.clone();
    phase2_cost.resize(n + 2 * m, 0.0);
    let outcome = sx.run(&phase2_cost)?;
    sx.refactor()?;
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::IterationLimit => LpStatus::IterationLimit,
    };
    Ok(finish(&sx, status))
}
