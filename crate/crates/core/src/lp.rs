//! Equality-form linear programming and the occupation-measure LP.
//!
//! The solver is a dense-tableau two-phase primal simplex using Bland's rule,
//! which terminates on degenerate problems. Problems are
//! `maximize c·x  s.t.  A x = b,  x ≥ 0`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dp::{MultiplierVector, RandomizedPolicy};
use crate::error::{Error, Result};
use crate::index::IndexTable;
use crate::model::SubProcessSpec;

/// Probability mass at or below which a state counts as unvisited.
pub const ZERO_MASS: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        let lp = LinearProgram { objective, rows, rhs };
        lp.check()?;
        Ok(lp)
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    fn check(&self) -> Result<()> {
        if self.rows.len() != self.rhs.len() {
            return Err(Error::Dimension(format!(
                "{} constraint rows but {} right-hand sides",
                self.rows.len(),
                self.rhs.len()
            )));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != self.objective.len()) {
            return Err(Error::Dimension(format!(
                "row {i} has {} coefficients, expected {}",
                self.rows[i].len(),
                self.objective.len()
            )));
        }
        let all = self
            .objective
            .iter()
            .chain(self.rhs.iter())
            .chain(self.rows.iter().flatten());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("linear program has non-finite data".into()));
        }
        Ok(())
    }

    /// JSON dump of the problem data for failure triage.
    pub fn to_debug_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lp serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// One multiplier per constraint row, signed so that `b·y` equals the optimum.
    pub dual: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, lp: &LinearProgram, pivots: usize) -> Self {
        LpSolution {
            status,
            primal: vec![0.0; lp.num_vars()],
            dual: vec![0.0; lp.num_rows()],
            objective: f64::NAN,
            pivots,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// `b·y`
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        lp.rhs.iter().zip(&self.dual).map(|(b, y)| b * y).sum()
    }

    /// `‖Ax − b‖∞`
    pub fn primal_residual(&self, lp: &LinearProgram) -> f64 {
        lp.rows
            .iter()
            .zip(&lp.rhs)
            .map(|(row, b)| (row.iter().zip(&self.primal).map(|(a, x)| a * x).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }

    /// `max_j |x_j · (c_j − A_jᵀ y)|`
    pub fn complementary_slackness(&self, lp: &LinearProgram) -> f64 {
        (0..lp.num_vars())
            .map(|j| {
                let aty: f64 = lp.rows.iter().zip(&self.dual).map(|(row, y)| row[j] * y).sum();
                (self.primal[j] * (lp.objective[j] - aty)).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexOptions {
    /// Phase-one residual above which the problem is declared infeasible.
    pub feasibility_tol: f64,
    /// Smallest magnitude accepted as a pivot element.
    pub pivot_tol: f64,
    /// Reduced cost above which a column may enter.
    pub optimality_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-8,
            pivot_tol: 1e-10,
            optimality_tol: 1e-10,
        }
    }
}

struct Tableau {
    rows: usize,
    width: usize,
    /// `rows` constraint rows followed by one reduced-cost row; last column is the rhs.
    cells: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.width + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.cells[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(r, c);
        for v in &mut self.cells[r * w..(r + 1) * w] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.cells[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let factor = self.cells[i * w + c];
            if factor == 0.0 {
                continue;
            }
            for (v, p) in self.cells[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            self.cells[i * w + c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Loads `d_j = c_j − c_Bᵀ B⁻¹ A_j` into the reduced-cost row.
    fn price(&mut self, costs: &[f64]) {
        let w = self.width;
        let z = self.rows * w;
        for j in 0..w - 1 {
            let mut d = costs[j];
            for i in 0..self.rows {
                d -= costs[self.basis[i]] * self.at(i, j);
            }
            self.cells[z + j] = d;
        }
    }

    /// Bland's rule iterations over columns `0..eligible`. Returns false if unbounded.
    fn optimize(&mut self, eligible: usize, opts: &SimplexOptions) -> bool {
        let z = self.rows;
        loop {
            let Some(c) = (0..eligible).find(|&j| self.at(z, j) > opts.optimality_tol) else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a <= opts.pivot_tol {
                    continue;
                }
                let ratio = self.rhs(i) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - 1e-12 || (ratio <= best + 1e-12 && self.basis[i] < self.basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

/// Two-phase primal simplex. Deterministic for identical input.
pub fn simplex_solve(lp: &LinearProgram) -> LpSolution {
    simplex_solve_with(lp, &SimplexOptions::default())
}

pub fn simplex_solve_with(lp: &LinearProgram, opts: &SimplexOptions) -> LpSolution {
    let m = lp.num_rows();
    let n = lp.num_vars();
    let width = n + m + 1;
    let mut cells = vec![0.0; (m + 1) * width];
    let mut signs = vec![1.0; m];
    for i in 0..m {
        let sign = if lp.rhs[i] < 0.0 { -1.0 } else { 1.0 };
        signs[i] = sign;
        let row = &mut cells[i * width..(i + 1) * width];
        for (dst, &a) in row[..n].iter_mut().zip(&lp.rows[i]) {
            *dst = sign * a;
        }
        row[n + i] = 1.0;
        row[width - 1] = sign * lp.rhs[i];
    }
    let mut tab = Tableau {
        rows: m,
        width,
        cells,
        basis: (n..n + m).collect(),
        pivots: 0,
    };

    // Phase one: maximize minus the sum of artificials.
    let mut costs = vec![0.0; width];
    for c in &mut costs[n..n + m] {
        *c = -1.0;
    }
    tab.price(&costs);
    tab.optimize(n + m, opts);
    let infeasibility: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.rhs(i)).sum();
    if infeasibility > opts.feasibility_tol {
        return LpSolution::non_optimal(LpStatus::Infeasible, lp, tab.pivots);
    }
    // Drive zero-level artificials out; rows without an original pivot are redundant.
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.at(i, j).abs() > opts.pivot_tol) {
                tab.pivot(i, j);
            }
        }
    }

    // Phase two over the original columns only.
    let mut costs = vec![0.0; width];
    costs[..n].copy_from_slice(&lp.objective);
    tab.price(&costs);
    if !tab.optimize(n, opts) {
        return LpSolution::non_optimal(LpStatus::Unbounded, lp, tab.pivots);
    }

    let mut primal = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            primal[tab.basis[i]] = tab.rhs(i);
        }
    }
    // Artificial columns hold B⁻¹, so y' = c_Bᵀ B⁻¹; undo the row sign flips.
    let dual = (0..m)
        .map(|k| {
            let y: f64 = (0..m).map(|i| costs[tab.basis[i]] * tab.at(i, n + k)).sum();
            signs[k] * y
        })
        .collect();
    let objective = lp.objective.iter().zip(&primal).map(|(c, x)| c * x).sum();
    LpSolution {
        status: LpStatus::Optimal,
        primal,
        dual,
        objective,
        pivots: tab.pivots,
    }
}

/// `ρ(s, a, t)`: probability of occupying `s` and playing `a` at period `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationMeasure {
    /// `rho[t][s] = [ρ(s,0,t), ρ(s,1,t)]`
    rho: Vec<Vec<[f64; 2]>>,
}

impl OccupationMeasure {
    pub fn new(rho: Vec<Vec<[f64; 2]>>) -> Self {
        OccupationMeasure { rho }
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, t: usize) -> f64 {
        self.rho[t][s][a]
    }

    pub fn horizon(&self) -> usize {
        self.rho.len()
    }

    pub fn num_states(&self) -> usize {
        self.rho.first().map_or(0, Vec::len)
    }

    /// `Σ_{s,a} ρ(s,a,t)`
    pub fn period_mass(&self, t: usize) -> f64 {
        self.rho[t].iter().map(|r| r[0] + r[1]).sum()
    }

    /// `Σ_s ρ(s,1,t)`
    pub fn period_activation(&self, t: usize) -> f64 {
        self.rho[t].iter().map(|r| r[1]).sum()
    }

    fn from_primal(spec: &SubProcessSpec, primal: &[f64]) -> Self {
        let n = spec.num_states;
        let rho = (0..spec.horizon)
            .map(|t| {
                (0..n)
                    .map(|s| [primal[var(n, s, 0, t)], primal[var(n, s, 1, t)]])
                    .collect()
            })
            .collect();
        OccupationMeasure { rho }
    }
}

#[inline]
fn var(num_states: usize, s: usize, a: usize, t: usize) -> usize {
    (t * num_states + s) * 2 + a
}

fn check_alpha(spec: &SubProcessSpec, alpha: &[f64]) -> Result<()> {
    if alpha.len() != spec.horizon {
        return Err(Error::Dimension(format!(
            "{} budget fractions for horizon {}",
            alpha.len(),
            spec.horizon
        )));
    }
    if let Some(a) = alpha.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidArgument(format!("budget fraction {a} outside (0,1)")));
    }
    Ok(())
}

/// Occupation-measure LP with rewards `r_t(s,a) − λ_t·1{a=1}`.
///
/// Row layout: `T` budget rows, then `|S|` initial-distribution rows, then
/// `|S|·(T−1)` flow-balance rows ordered by period.
pub fn build_occupation_lp(spec: &SubProcessSpec, lambda: &MultiplierVector, alpha: &[f64]) -> Result<LinearProgram> {
    check_alpha(spec, alpha)?;
    if lambda.len() != spec.horizon {
        return Err(Error::Dimension(format!(
            "multiplier vector has {} entries, horizon is {}",
            lambda.len(),
            spec.horizon
        )));
    }
    let n = spec.num_states;
    let horizon = spec.horizon;
    let num_vars = 2 * n * horizon;
    let mut objective = vec![0.0; num_vars];
    for t in 0..horizon {
        for s in 0..n {
            objective[var(n, s, 0, t)] = spec.reward(t, s, 0);
            objective[var(n, s, 1, t)] = spec.reward(t, s, 1) - lambda.0[t];
        }
    }
    let mut rows = Vec::with_capacity(horizon + n * horizon);
    let mut rhs = Vec::with_capacity(horizon + n * horizon);
    for (t, &a) in alpha.iter().enumerate() {
        let mut row = vec![0.0; num_vars];
        for s in 0..n {
            row[var(n, s, 1, t)] = 1.0;
        }
        rows.push(row);
        rhs.push(a);
    }
    for s in 0..n {
        let mut row = vec![0.0; num_vars];
        row[var(n, s, 0, 0)] = 1.0;
        row[var(n, s, 1, 0)] = 1.0;
        rows.push(row);
        rhs.push(if s == spec.initial_state { 1.0 } else { 0.0 });
    }
    for t in 1..horizon {
        for s in 0..n {
            let mut row = vec![0.0; num_vars];
            row[var(n, s, 0, t)] = 1.0;
            row[var(n, s, 1, t)] = 1.0;
            for s_prev in 0..n {
                for a in 0..2 {
                    row[var(n, s_prev, a, t - 1)] -= spec.kernel(a)[s_prev][s];
                }
            }
            rows.push(row);
            rhs.push(0.0);
        }
    }
    LinearProgram::new(objective, rows, rhs)
}

/// Solves the occupation LP at `lambda` and returns the optimal measure.
pub fn solve_occupation(
    spec: &SubProcessSpec,
    lambda: &MultiplierVector,
    alpha: &[f64],
) -> Result<(OccupationMeasure, LpSolution)> {
    solve_occupation_with(spec, lambda, alpha, &SimplexOptions::default())
}

pub fn solve_occupation_with(
    spec: &SubProcessSpec,
    lambda: &MultiplierVector,
    alpha: &[f64],
    opts: &SimplexOptions,
) -> Result<(OccupationMeasure, LpSolution)> {
    let lp = build_occupation_lp(spec, lambda, alpha)?;
    let solution = simplex_solve_with(&lp, opts);
    if !solution.is_optimal() {
        return Err(Error::Lp(solution.status));
    }
    Ok((OccupationMeasure::from_primal(spec, &solution.primal), solution))
}

/// Optimal pull prices from the budget-row duals of the unpriced occupation LP.
/// With this sign convention `LP optimum = Q(λ*) + Σ_t α_t λ*_t`.
pub fn multipliers_from_lp(spec: &SubProcessSpec, alpha: &[f64]) -> Result<(MultiplierVector, LpSolution)> {
    multipliers_from_lp_with(spec, alpha, &SimplexOptions::default())
}

pub fn multipliers_from_lp_with(
    spec: &SubProcessSpec,
    alpha: &[f64],
    opts: &SimplexOptions,
) -> Result<(MultiplierVector, LpSolution)> {
    let lp = build_occupation_lp(spec, &MultiplierVector::zeros(spec.horizon), alpha)?;
    let solution = simplex_solve_with(&lp, opts);
    if !solution.is_optimal() {
        return Err(Error::Lp(solution.status));
    }
    let lambda = MultiplierVector(solution.dual[..spec.horizon].to_vec());
    Ok((lambda, solution))
}

/// Conditional action probabilities `ρ(s,a,t) / Σ_a ρ(s,a,t)`; unvisited states
/// play active iff `β_t(s) ≥ λ*_t`.
pub fn extract_policy(
    rho: &OccupationMeasure,
    indices: &IndexTable,
    lambda_star: &MultiplierVector,
) -> RandomizedPolicy {
    let active = (0..rho.horizon())
        .map(|t| {
            (0..rho.num_states())
                .map(|s| {
                    let passive = rho.get(s, 0, t).max(0.0);
                    let active = rho.get(s, 1, t).max(0.0);
                    let mass = passive + active;
                    if mass > ZERO_MASS {
                        (active / mass).clamp(0.0, 1.0)
                    } else if indices.beta(s, t) >= lambda_star.0[t] {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    RandomizedPolicy::from_activation(active).expect("probabilities are clamped")
}
