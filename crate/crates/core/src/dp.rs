//! Single-arm dynamic programming under per-period pull prices.
//!
//! `Q(λ)` is the optimal value of one arm whose active action at period `t`
//! costs `λ_t`. It is solved by backward induction; occupancy of an arbitrary
//! Markov policy is propagated forward exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SubProcessSpec;

/// Absolute band on the active-minus-passive lookahead difference inside which
/// the two actions count as tied. Ties resolve to the active action.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Per-period pull prices `λ_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiplierVector(pub Vec<f64>);

impl MultiplierVector {
    pub fn zeros(horizon: usize) -> Self {
        MultiplierVector(vec![0.0; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// The same vector with entry `t` replaced by `value`.
    pub fn with_entry(&self, t: usize, value: f64) -> Self {
        let mut v = self.0.clone();
        v[t] = value;
        MultiplierVector(v)
    }

    fn check(&self, spec: &SubProcessSpec) -> Result<()> {
        if self.0.len() != spec.horizon {
            return Err(Error::Dimension(format!(
                "multiplier vector has {} entries, horizon is {}",
                self.0.len(),
                spec.horizon
            )));
        }
        if let Some(x) = self.0.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("multiplier {x} is not finite")));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for MultiplierVector {
    fn from(v: Vec<f64>) -> Self {
        MultiplierVector(v)
    }
}

/// `V^λ(s, t)` for `t` in `0..=T`; the row at `T` is the zero terminal value.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    #[inline]
    pub fn value(&self, s: usize, t: usize) -> f64 {
        self.values[t][s]
    }

    pub fn period(&self, t: usize) -> &[f64] {
        &self.values[t]
    }
}

/// Markov randomized policy, `p(s, a, t)`. Deterministic policies take values in {0, 1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizedPolicy {
    /// `probs[t][s] = [P(a=0), P(a=1)]`
    probs: Vec<Vec<[f64; 2]>>,
}

impl RandomizedPolicy {
    /// Builds a policy from activation probabilities `active[t][s]`.
    pub fn from_activation(active: Vec<Vec<f64>>) -> Result<Self> {
        for (t, row) in active.iter().enumerate() {
            for (s, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidArgument(format!(
                        "activation probability {p} at state {s}, period {t} outside [0,1]"
                    )));
                }
            }
        }
        let probs = active
            .into_iter()
            .map(|row| row.into_iter().map(|p| [1.0 - p, p]).collect())
            .collect();
        Ok(RandomizedPolicy { probs })
    }

    /// The policy that plays `action` everywhere.
    pub fn constant(spec: &SubProcessSpec, action: usize) -> Self {
        let p = if action == 1 { 1.0 } else { 0.0 };
        RandomizedPolicy {
            probs: vec![vec![[1.0 - p, p]; spec.num_states]; spec.horizon],
        }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, t: usize) -> f64 {
        self.probs[t][s][a]
    }

    #[inline]
    pub fn prob_active(&self, s: usize, t: usize) -> f64 {
        self.probs[t][s][1]
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn num_states(&self) -> usize {
        self.probs.first().map_or(0, Vec::len)
    }

    fn check(&self, spec: &SubProcessSpec) -> Result<()> {
        if self.probs.len() != spec.horizon || self.probs.iter().any(|r| r.len() != spec.num_states) {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, spec is {} periods x {} states",
                self.probs.len(),
                self.num_states(),
                spec.horizon,
                spec.num_states
            )));
        }
        Ok(())
    }
}

/// `P_t(s)`: probability the arm occupies `s` at period `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMarginals {
    probs: Vec<Vec<f64>>,
}

impl StateMarginals {
    #[inline]
    pub fn prob(&self, s: usize, t: usize) -> f64 {
        self.probs[t][s]
    }

    pub fn period(&self, t: usize) -> &[f64] {
        &self.probs[t]
    }
}

#[inline]
fn expected_next(row: &[f64], next: &[f64]) -> f64 {
    row.iter().zip(next).map(|(p, v)| p * v).sum()
}

/// One-step lookahead `r_t(s,a) − a·λ_t + Σ P^a(s,s') V(s', t+1)`.
#[inline]
pub fn lookahead(
    spec: &SubProcessSpec,
    lambda: &MultiplierVector,
    values: &ValueTable,
    s: usize,
    a: usize,
    t: usize,
) -> f64 {
    let price = if a == 1 { lambda.0[t] } else { 0.0 };
    spec.reward(t, s, a) - price + expected_next(&spec.kernel(a)[s], values.period(t + 1))
}

pub fn backward_induction(spec: &SubProcessSpec, lambda: &MultiplierVector) -> Result<ValueTable> {
    lambda.check(spec)?;
    Ok(backward_induction_unchecked(spec, lambda))
}

pub(crate) fn backward_induction_unchecked(spec: &SubProcessSpec, lambda: &MultiplierVector) -> ValueTable {
    let n = spec.num_states;
    let horizon = spec.horizon;
    let mut values = vec![vec![0.0; n]; horizon + 1];
    for t in (0..horizon).rev() {
        let (head, tail) = values.split_at_mut(t + 1);
        let next = &tail[0];
        for (s, v) in head[t].iter_mut().enumerate() {
            let passive = spec.reward(t, s, 0) + expected_next(&spec.kernel_passive[s], next);
            let active = spec.reward(t, s, 1) - lambda.0[t] + expected_next(&spec.kernel_active[s], next);
            *v = passive.max(active);
        }
    }
    ValueTable { values }
}

/// Whether the active action is chosen at `(s, t)`: active lookahead at least
/// passive lookahead, within [`TIE_TOLERANCE`].
#[inline]
pub fn prefers_active(
    spec: &SubProcessSpec,
    lambda: &MultiplierVector,
    values: &ValueTable,
    s: usize,
    t: usize,
) -> bool {
    let active = lookahead(spec, lambda, values, s, 1, t);
    let passive = lookahead(spec, lambda, values, s, 0, t);
    active >= passive - TIE_TOLERANCE
}

/// The tie-to-active member of the optimal deterministic policy set.
pub fn greedy_policy(spec: &SubProcessSpec, lambda: &MultiplierVector, values: &ValueTable) -> RandomizedPolicy {
    let probs = (0..spec.horizon)
        .map(|t| {
            (0..spec.num_states)
                .map(|s| {
                    if prefers_active(spec, lambda, values, s, t) {
                        [0.0, 1.0]
                    } else {
                        [1.0, 0.0]
                    }
                })
                .collect()
        })
        .collect();
    RandomizedPolicy { probs }
}

/// `Q(λ) = V^λ(s₁, 0)`.
pub fn q_value(spec: &SubProcessSpec, lambda: &MultiplierVector) -> Result<f64> {
    Ok(backward_induction(spec, lambda)?.value(spec.initial_state, 0))
}

/// Forward Chapman–Kolmogorov propagation from the initial state.
pub fn state_marginals(spec: &SubProcessSpec, policy: &RandomizedPolicy) -> Result<StateMarginals> {
    policy.check(spec)?;
    let n = spec.num_states;
    let mut probs = Vec::with_capacity(spec.horizon);
    let mut current = vec![0.0; n];
    current[spec.initial_state] = 1.0;
    for t in 0..spec.horizon {
        let mut next = vec![0.0; n];
        for (s, &mass) in current.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for a in 0..2 {
                let w = mass * policy.prob(s, a, t);
                if w == 0.0 {
                    continue;
                }
                for (s2, &p) in spec.kernel(a)[s].iter().enumerate() {
                    next[s2] += w * p;
                }
            }
        }
        probs.push(std::mem::replace(&mut current, next));
    }
    Ok(StateMarginals { probs })
}

/// `E[A_t]` under `policy`, for every period.
pub fn activation_profile(spec: &SubProcessSpec, policy: &RandomizedPolicy) -> Result<Vec<f64>> {
    let marginals = state_marginals(spec, policy)?;
    Ok((0..spec.horizon)
        .map(|t| {
            (0..spec.num_states)
                .map(|s| marginals.prob(s, t) * policy.prob_active(s, t))
                .sum()
        })
        .collect())
}

/// Expected total of `r_t(s,a) − a·λ_t` from the initial state under `policy`.
pub fn evaluate_policy(spec: &SubProcessSpec, policy: &RandomizedPolicy, lambda: &MultiplierVector) -> Result<f64> {
    lambda.check(spec)?;
    let marginals = state_marginals(spec, policy)?;
    let mut total = 0.0;
    for t in 0..spec.horizon {
        for s in 0..spec.num_states {
            let mass = marginals.prob(s, t);
            if mass == 0.0 {
                continue;
            }
            for a in 0..2 {
                let price = if a == 1 { lambda.0[t] } else { 0.0 };
                total += mass * policy.prob(s, a, t) * (spec.reward(t, s, a) - price);
            }
        }
    }
    Ok(total)
}
