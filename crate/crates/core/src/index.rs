//! State/period indices: the highest price for period `t` at which pulling in
//! state `s` stays optimal, with every other period priced at `λ*`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dp::{backward_induction_unchecked, prefers_active, MultiplierVector};
use crate::error::{Error, Result};
use crate::model::SubProcessSpec;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const MAX_BISECTION_STEPS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    /// `beta[t][s]`
    beta: Vec<Vec<f64>>,
    pub lambda_star: MultiplierVector,
    /// Indices are searched on `[-U, U]`.
    pub search_bound: f64,
}

impl IndexTable {
    pub fn from_rows(beta: Vec<Vec<f64>>, lambda_star: MultiplierVector, search_bound: f64) -> Self {
        IndexTable {
            beta,
            lambda_star,
            search_bound,
        }
    }

    #[inline]
    pub fn beta(&self, s: usize, t: usize) -> f64 {
        self.beta[t][s]
    }

    pub fn period(&self, t: usize) -> &[f64] {
        &self.beta[t]
    }

    pub fn horizon(&self) -> usize {
        self.beta.len()
    }

    pub fn num_states(&self) -> usize {
        self.beta.first().map_or(0, Vec::len)
    }

    /// `state,t,beta` rows; `t` is 0-based, values in 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,t,beta\n");
        for (t, row) in self.beta.iter().enumerate() {
            for (s, b) in row.iter().enumerate() {
                writeln!(out, "{s},{t},{b:.16e}").expect("string write");
            }
        }
        out
    }

    /// Parses the output of [`IndexTable::to_csv`]. Lines starting with `#` are skipped.
    pub fn from_csv(text: &str, lambda_star: MultiplierVector, search_bound: f64) -> Result<Self> {
        let mut entries = Vec::new();
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "state,t,beta" => {}
            other => return Err(Error::InvalidArgument(format!("unexpected index header {other:?}"))),
        }
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            let parse_err = || Error::InvalidArgument(format!("malformed index row {line:?}"));
            if fields.len() != 3 {
                return Err(parse_err());
            }
            let s: usize = fields[0].trim().parse().map_err(|_| parse_err())?;
            let t: usize = fields[1].trim().parse().map_err(|_| parse_err())?;
            let b: f64 = fields[2].trim().parse().map_err(|_| parse_err())?;
            entries.push((s, t, b));
        }
        let horizon = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
        let n = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        if entries.len() != horizon * n {
            return Err(Error::InvalidArgument(format!(
                "index table has {} rows, expected {}x{}",
                entries.len(),
                n,
                horizon
            )));
        }
        let mut beta = vec![vec![f64::NAN; n]; horizon];
        for (s, t, b) in entries {
            beta[t][s] = b;
        }
        Ok(IndexTable {
            beta,
            lambda_star,
            search_bound,
        })
    }
}

/// Whether the tie-to-active optimal policy at `λ*[β, t]` pulls in `s` at `t`.
pub fn active_at(spec: &SubProcessSpec, lambda_star: &MultiplierVector, s: usize, t: usize, beta: f64) -> bool {
    let lambda = lambda_star.with_entry(t, beta);
    let values = backward_induction_unchecked(spec, &lambda);
    prefers_active(spec, &lambda, &values, s, t)
}

/// `U = T · max r`.
pub fn search_bound(spec: &SubProcessSpec) -> f64 {
    spec.horizon_reward_bound()
}

/// Bisection for the largest `β ∈ [-U, U]` with [`active_at`] true, to within `tol`.
/// Returns `-U` if the state is never pulled in range and `U` if always pulled.
pub fn compute_index(
    spec: &SubProcessSpec,
    lambda_star: &MultiplierVector,
    s: usize,
    t: usize,
    tol: f64,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bisection tolerance {tol} must be positive"
        )));
    }
    if lambda_star.len() != spec.horizon {
        return Err(Error::Dimension(format!(
            "multiplier vector has {} entries, horizon is {}",
            lambda_star.len(),
            spec.horizon
        )));
    }
    let bound = search_bound(spec);
    if active_at(spec, lambda_star, s, t, bound) {
        return Ok(bound);
    }
    if !active_at(spec, lambda_star, s, t, -bound) {
        return Ok(-bound);
    }
    // invariant: active at lo, passive at hi
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if active_at(spec, lambda_star, s, t, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn index_table(spec: &SubProcessSpec, lambda_star: &MultiplierVector, tol: f64) -> Result<IndexTable> {
    let beta = (0..spec.horizon)
        .map(|t| {
            (0..spec.num_states)
                .map(|s| compute_index(spec, lambda_star, s, t, tol))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IndexTable {
        beta,
        lambda_star: lambda_star.clone(),
        search_bound: search_bound(spec),
    })
}
