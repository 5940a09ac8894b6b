//! The index policy over arm counts, with occupation-weighted tie-breaking and
//! the integer rounding step that turns fractional allocations into counts.

use serde::{Deserialize, Serialize};

use crate::dp::{MultiplierVector, RandomizedPolicy};
use crate::error::{Error, Result};
use crate::index::{index_table, IndexTable};
use crate::lp::{
    extract_policy, multipliers_from_lp_with, solve_occupation_with, OccupationMeasure, SimplexOptions, ZERO_MASS,
};
use crate::model::SubProcessSpec;
use crate::relax::{minimize_multipliers_subgradient, BoundMethod, SubgradientOptions};

/// Index values closer than this are treated as equal when forming the tied set.
pub const INDEX_TIE_TOLERANCE: f64 = 1e-9;

/// Integer allocation of `total` units proportional to `frac`, capped by `avail`.
///
/// Floors `total·frac_i` (capped at `avail_i`), then hands out the remainder one
/// unit at a time cycling `i = 0, 1, ..., n-1, 0, ...`, skipping exhausted entries.
pub fn rounding(total: usize, frac: &[f64], avail: &[usize]) -> Result<Vec<usize>> {
    if frac.len() != avail.len() {
        return Err(Error::Dimension(format!(
            "{} fractions but {} availability entries",
            frac.len(),
            avail.len()
        )));
    }
    let capacity: usize = avail.iter().sum();
    if total > capacity {
        return Err(Error::InvalidArgument(format!(
            "cannot allocate {total} units with only {capacity} available"
        )));
    }
    if let Some(f) = frac.iter().find(|f| !(**f >= 0.0) || !f.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "fraction {f} is not a nonnegative number"
        )));
    }
    let mut b: Vec<usize> = frac
        .iter()
        .zip(avail)
        .map(|(&f, &cap)| cap.min((total as f64 * f).floor() as usize))
        .collect();
    let n = b.len();
    let mut assigned: usize = b.iter().sum();
    let mut j = 0;
    while assigned < total {
        if avail[j] > b[j] {
            b[j] += 1;
            assigned += 1;
        }
        j = (j + 1) % n;
    }
    Ok(b)
}

/// `N_t(s)`: number of arms in each state at period `t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemCounts {
    pub counts: Vec<usize>,
    pub period: usize,
}

impl SystemCounts {
    /// All `num_arms` arms in `initial_state` at period 0.
    pub fn initial(num_states: usize, initial_state: usize, num_arms: usize) -> Self {
        let mut counts = vec![0; num_states];
        counts[initial_state] = num_arms;
        SystemCounts { counts, period: 0 }
    }

    pub fn num_arms(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// `M_t(s)`: number of arms in each state set active.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationPlan {
    pub active: Vec<usize>,
}

impl ActivationPlan {
    pub fn total(&self) -> usize {
        self.active.iter().sum()
    }
}

/// One period of the index policy.
///
/// `β̄` is the `m`-th largest index over the arms. States strictly above it are
/// fully activated, states below it untouched, and the remaining budget is split
/// over the tied states in proportion to `ρ(s,1,t)`, or to their arm counts when
/// the tied states carry no activation mass. Tied states are fed to
/// [`rounding`] in ascending state order.
pub fn select_activations(
    counts: &SystemCounts,
    indices: &IndexTable,
    rho: &OccupationMeasure,
    budget: usize,
) -> ActivationPlan {
    let t = counts.period;
    let beta = indices.period(t);
    let n = counts.counts.len();
    assert!(
        budget >= 1 && budget <= counts.num_arms(),
        "budget {budget} outside 1..={}",
        counts.num_arms()
    );

    let mut occupied: Vec<usize> = (0..n).filter(|&s| counts.counts[s] > 0).collect();
    occupied.sort_by(|&x, &y| beta[y].total_cmp(&beta[x]).then(x.cmp(&y)));
    let mut seen = 0;
    let mut threshold = f64::NAN;
    for &s in &occupied {
        seen += counts.counts[s];
        if seen >= budget {
            threshold = beta[s];
            break;
        }
    }

    let mut active = vec![0; n];
    let mut tied = Vec::new();
    let mut remaining = budget;
    for s in 0..n {
        if counts.counts[s] == 0 {
            continue;
        }
        if beta[s] > threshold + INDEX_TIE_TOLERANCE {
            active[s] = counts.counts[s];
            remaining -= counts.counts[s];
        } else if beta[s] >= threshold - INDEX_TIE_TOLERANCE {
            tied.push(s);
        }
    }
    assert!(!tied.is_empty(), "no state attains the threshold index");

    let weights: Vec<f64> = tied.iter().map(|&s| rho.get(s, 1, t).max(0.0)).collect();
    let mass: f64 = weights.iter().sum();
    let frac: Vec<f64> = if mass > ZERO_MASS {
        weights.iter().map(|w| w / mass).collect()
    } else {
        let arms: usize = tied.iter().map(|&s| counts.counts[s]).sum();
        tied.iter().map(|&s| counts.counts[s] as f64 / arms as f64).collect()
    };
    let avail: Vec<usize> = tied.iter().map(|&s| counts.counts[s]).collect();
    let split = rounding(remaining, &frac, &avail).expect("tied states can absorb the remaining budget");
    for (&s, b) in tied.iter().zip(split) {
        active[s] = b;
    }
    ActivationPlan { active }
}

/// Everything the index policy needs, all independent of the number of arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexPolicyArtifacts {
    pub alpha: Vec<f64>,
    pub lambda_star: MultiplierVector,
    pub method: BoundMethod,
    pub iterations: usize,
    pub indices: IndexTable,
    pub occupation: OccupationMeasure,
    /// The randomized single-arm policy built from the occupation measure.
    pub policy: RandomizedPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputeOptions {
    pub method: BoundMethod,
    pub bisection_tol: f64,
    pub simplex: SimplexOptions,
    pub subgradient: SubgradientOptions,
}

impl PrecomputeOptions {
    pub fn for_spec(spec: &SubProcessSpec) -> Self {
        PrecomputeOptions {
            method: BoundMethod::LpDual,
            bisection_tol: crate::index::DEFAULT_TOLERANCE,
            simplex: SimplexOptions::default(),
            subgradient: SubgradientOptions::for_spec(spec),
        }
    }
}

/// Multipliers, then indices, then the occupation measure and its policy.
pub fn precompute(spec: &SubProcessSpec, alpha: &[f64], opts: &PrecomputeOptions) -> Result<IndexPolicyArtifacts> {
    let (lambda_star, iterations) = match opts.method {
        BoundMethod::LpDual => {
            let (lambda, solution) = multipliers_from_lp_with(spec, alpha, &opts.simplex)?;
            (lambda, solution.pivots)
        }
        BoundMethod::Subgradient => {
            let run = minimize_multipliers_subgradient(spec, alpha, &opts.subgradient)?;
            (run.lambda, run.iterations)
        }
    };
    let indices = index_table(spec, &lambda_star, opts.bisection_tol)?;
    let (occupation, _) = solve_occupation_with(spec, &lambda_star, alpha, &opts.simplex)?;
    let policy = extract_policy(&occupation, &indices, &lambda_star);
    Ok(IndexPolicyArtifacts {
        alpha: alpha.to_vec(),
        lambda_star,
        method: opts.method,
        iterations,
        indices,
        occupation,
        policy,
    })
}
