//! Single-arm problem data, budgets, and the two Beta-Bernoulli instance builders.
//!
//! Periods are 0-based throughout the crate: period `t` ranges over `0..horizon`.
//! Actions are `0` (passive) and `1` (active).

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance for transition kernels.
pub const KERNEL_ROW_TOLERANCE: f64 = 1e-12;

/// One arm's finite-state, finite-horizon MDP.
///
/// `reward[t][s][a]`, `kernel_active[s][s']`, `kernel_passive[s][s']`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubProcessSpec {
    pub num_states: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub reward: Vec<Vec<[f64; 2]>>,
    pub kernel_active: Vec<Vec<f64>>,
    pub kernel_passive: Vec<Vec<f64>>,
}

/// A single invariant violation found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl SubProcessSpec {
    /// Builds a spec and rejects it if any invariant is violated.
    pub fn new(
        initial_state: usize,
        reward: Vec<Vec<[f64; 2]>>,
        kernel_active: Vec<Vec<f64>>,
        kernel_passive: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let spec = SubProcessSpec {
            num_states: kernel_active.len(),
            horizon: reward.len(),
            initial_state,
            reward,
            kernel_active,
            kernel_passive,
        };
        spec.ensure_valid()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SubProcessSpec = serde_json::from_str(text)?;
        spec.ensure_valid()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let violations = validate(self);
        if violations.is_empty() {
            Ok(())
        } else {
            let joined: Vec<String> = violations.iter().map(ToString::to_string).collect();
            Err(Error::InvalidSpec(joined.join("; ")))
        }
    }

    #[inline]
    pub fn reward(&self, t: usize, s: usize, a: usize) -> f64 {
        self.reward[t][s][a]
    }

    #[inline]
    pub fn kernel(&self, a: usize) -> &[Vec<f64>] {
        if a == 1 {
            &self.kernel_active
        } else {
            &self.kernel_passive
        }
    }

    /// Largest one-period reward, `r̄ = max r_t(s,a)`.
    pub fn max_reward(&self) -> f64 {
        self.reward
            .iter()
            .flatten()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max)
    }

    /// `T · r̄`, the bound used for multiplier projection and index search.
    pub fn horizon_reward_bound(&self) -> f64 {
        self.horizon as f64 * self.max_reward()
    }
}

/// Returns every invariant violation of `spec`; empty iff the spec is well-formed.
pub fn validate(spec: &SubProcessSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |location: String, message: String| out.push(Violation { location, message });
    let n = spec.num_states;

    if n == 0 {
        push("num_states".into(), "must be at least 1".into());
    }
    if spec.horizon == 0 {
        push("horizon".into(), "must be at least 1".into());
    }
    if spec.initial_state >= n {
        push(
            "initial_state".into(),
            format!("{} out of range for {} states", spec.initial_state, n),
        );
    }
    if spec.reward.len() != spec.horizon {
        push(
            "reward".into(),
            format!("has {} periods, horizon is {}", spec.reward.len(), spec.horizon),
        );
    }
    for (t, per_period) in spec.reward.iter().enumerate() {
        if per_period.len() != n {
            push(
                format!("reward[{t}]"),
                format!("has {} states, expected {}", per_period.len(), n),
            );
        }
        for (s, pair) in per_period.iter().enumerate() {
            for (a, &r) in pair.iter().enumerate() {
                if !r.is_finite() {
                    push(format!("reward[{t}][{s}][{a}]"), format!("not finite ({r})"));
                } else if r < 0.0 {
                    push(format!("reward[{t}][{s}][{a}]"), format!("negative ({r})"));
                }
            }
        }
    }
    for (name, kernel) in [
        ("kernel_passive", &spec.kernel_passive),
        ("kernel_active", &spec.kernel_active),
    ] {
        if kernel.len() != n {
            push(name.into(), format!("has {} rows, expected {}", kernel.len(), n));
        }
        for (s, row) in kernel.iter().enumerate() {
            if row.len() != n {
                push(
                    format!("{name}[{s}]"),
                    format!("has {} columns, expected {}", row.len(), n),
                );
                continue;
            }
            for (s2, &p) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    push(format!("{name}[{s}][{s2}]"), format!("probability {p} outside [0,1]"));
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > KERNEL_ROW_TOLERANCE {
                push(format!("{name}[{s}]"), format!("row sums to {sum}, expected 1"));
            }
        }
    }
    out
}

/// Per-period activation budgets `m_t` for `K` arms, with `0 < m_t < K`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetProfile {
    num_arms: usize,
    budgets: Vec<usize>,
}

impl BudgetProfile {
    pub fn new(num_arms: usize, budgets: Vec<usize>) -> Result<Self> {
        if num_arms == 0 {
            return Err(Error::InvalidArgument("number of arms must be at least 1".into()));
        }
        if budgets.is_empty() {
            return Err(Error::InvalidArgument("budget profile is empty".into()));
        }
        if let Some((t, &m)) = budgets.iter().enumerate().find(|(_, &m)| m == 0 || m >= num_arms) {
            return Err(Error::InvalidArgument(format!(
                "budget m[{t}] = {m} must satisfy 0 < m < K = {num_arms}"
            )));
        }
        Ok(BudgetProfile { num_arms, budgets })
    }

    /// `m_t = ⌊α_t K⌋` for each period. A 1e-9 guard absorbs representation
    /// error in fractions such as 1/3.
    pub fn from_fractions(num_arms: usize, fractions: &[f64]) -> Result<Self> {
        let budgets = fractions
            .iter()
            .map(|&f| {
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::InvalidArgument(format!("fraction {f} outside (0,1)")));
                }
                Ok((f * num_arms as f64 + 1e-9).floor() as usize)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(num_arms, budgets)
    }

    /// Constant budget `m` over `horizon` periods.
    pub fn constant(num_arms: usize, m: usize, horizon: usize) -> Result<Self> {
        Self::new(num_arms, vec![m; horizon])
    }

    pub fn num_arms(&self) -> usize {
        self.num_arms
    }

    pub fn budgets(&self) -> &[usize] {
        &self.budgets
    }

    pub fn horizon(&self) -> usize {
        self.budgets.len()
    }

    /// `α_t = m_t / K`.
    pub fn alpha(&self) -> Vec<f64> {
        self.budgets.iter().map(|&m| m as f64 / self.num_arms as f64).collect()
    }
}

/// Beta posterior parameters `(a, b)` labelling each state of a built instance.
pub type BetaState = (u32, u32);

/// Reachable posterior lattice `{(a,b): a ≥ a₀, b ≥ b₀, a + b ≤ a₀ + b₀ + depth}`,
/// ordered by number of observations, then by successes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BetaLattice {
    prior: BetaState,
    max_depth: u32,
    states: Vec<BetaState>,
    lookup: HashMap<BetaState, usize>,
}

impl BetaLattice {
    fn new(prior: BetaState, max_depth: u32) -> Self {
        let mut states = Vec::new();
        for depth in 0..=max_depth {
            for successes in 0..=depth {
                states.push((prior.0 + successes, prior.1 + depth - successes));
            }
        }
        let lookup = states.iter().enumerate().map(|(i, &st)| (st, i)).collect();
        BetaLattice {
            prior,
            max_depth,
            states,
            lookup,
        }
    }

    pub fn states(&self) -> &[BetaState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: BetaState) -> Option<usize> {
        self.lookup.get(&state).copied()
    }

    /// Posterior mean `a / (a + b)` of state `s`.
    pub fn mean(&self, s: usize) -> f64 {
        let (a, b) = self.states[s];
        a as f64 / (a + b) as f64
    }

    /// Successor states after a success and a failure, when both lie inside the lattice.
    pub fn outcome_successors(&self, s: usize) -> Option<(usize, usize)> {
        let (a, b) = self.states[s];
        if a + b - self.prior.0 - self.prior.1 >= self.max_depth {
            return None;
        }
        Some((self.lookup[&(a + 1, b)], self.lookup[&(a, b + 1)]))
    }

    /// Active kernel: posterior update; states on the outermost layer are absorbing
    /// because their transitions happen after the last decision.
    fn active_kernel(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|s| {
                let mut row = vec![0.0; n];
                match self.outcome_successors(s) {
                    Some((up, down)) => {
                        let (a, b) = self.states[s];
                        row[up] = a as f64 / (a + b) as f64;
                        row[down] = b as f64 / (a + b) as f64;
                    }
                    None => row[s] = 1.0,
                }
                row
            })
            .collect()
    }

    fn identity_kernel(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|s| {
                let mut row = vec![0.0; n];
                row[s] = 1.0;
                row
            })
            .collect()
    }
}

/// A built Beta-Bernoulli instance: the single-arm spec plus the meaning of each state.
#[derive(Clone, Debug)]
pub struct BetaBernoulliInstance {
    pub spec: SubProcessSpec,
    pub lattice: BetaLattice,
    pub prior: BetaState,
}

fn check_prior(prior: BetaState) -> Result<()> {
    if prior.0 < 1 || prior.1 < 1 {
        return Err(Error::InvalidArgument(format!(
            "prior ({}, {}) must have positive integer parameters",
            prior.0, prior.1
        )));
    }
    Ok(())
}

/// Finite-horizon Bernoulli bandit with a Beta prior. Pulling `(a, b)` pays the
/// posterior mean in expectation and moves to `(a+1, b)` or `(a, b+1)`; resting
/// leaves the posterior unchanged.
pub fn build_bernoulli_mab(horizon: usize, prior: BetaState) -> Result<BetaBernoulliInstance> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    check_prior(prior)?;
    let lattice = BetaLattice::new(prior, horizon as u32 - 1);
    let per_period: Vec<[f64; 2]> = (0..lattice.len()).map(|s| [0.0, lattice.mean(s)]).collect();
    let spec = SubProcessSpec::new(
        0,
        vec![per_period; horizon],
        lattice.active_kernel(),
        lattice.identity_kernel(),
    )?;
    Ok(BetaBernoulliInstance { spec, lattice, prior })
}

/// Subset selection as a restless bandit: `measure_horizon` measurement periods
/// with zero reward, then one selection period whose active reward is the
/// posterior mean of each selected design.
#[derive(Clone, Debug)]
pub struct SubsetSelection {
    pub instance: BetaBernoulliInstance,
    pub measure_horizon: usize,
    pub select_fraction: f64,
    pub measure_fraction: f64,
}

impl SubsetSelection {
    /// `α_t`: the measurement fraction for `t < T`, the selection fraction at `T`.
    pub fn fractions(&self) -> Vec<f64> {
        let mut f = vec![self.measure_fraction; self.measure_horizon];
        f.push(self.select_fraction);
        f
    }

    /// Budgets `⌊measure_fraction·K⌋` then `⌊select_fraction·K⌋`.
    pub fn budget(&self, num_arms: usize) -> Result<BudgetProfile> {
        BudgetProfile::from_fractions(num_arms, &self.fractions())
    }
}

pub fn build_subset_selection(
    measure_horizon: usize,
    select_fraction: f64,
    measure_fraction: f64,
    prior: BetaState,
) -> Result<SubsetSelection> {
    if measure_horizon < 1 {
        return Err(Error::InvalidArgument("measurement horizon must be at least 1".into()));
    }
    for (name, f) in [("select", select_fraction), ("measure", measure_fraction)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidArgument(format!("{name} fraction {f} outside (0,1)")));
        }
    }
    check_prior(prior)?;
    let lattice = BetaLattice::new(prior, measure_horizon as u32);
    let n = lattice.len();
    let mut reward = vec![vec![[0.0, 0.0]; n]; measure_horizon];
    reward.push((0..n).map(|s| [0.0, lattice.mean(s)]).collect());
    let spec = SubProcessSpec::new(0, reward, lattice.active_kernel(), lattice.identity_kernel())?;
    Ok(SubsetSelection {
        instance: BetaBernoulliInstance { spec, lattice, prior },
        measure_horizon,
        select_fraction,
        measure_fraction,
    })
}

/// Random spec with uniform rewards in `[0, 1)` and normalized uniform kernel rows.
pub fn random_spec<R: Rng + ?Sized>(rng: &mut R, num_states: usize, horizon: usize) -> SubProcessSpec {
    let mut kernel = || -> Vec<Vec<f64>> {
        (0..num_states)
            .map(|_| {
                let raw: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 1e-3).collect();
                let sum: f64 = raw.iter().sum();
                let mut row: Vec<f64> = raw.iter().map(|x| x / sum).collect();
                // push the last entry so the row sums to 1 up to one rounding
                let head: f64 = row[..num_states - 1].iter().sum();
                row[num_states - 1] = 1.0 - head;
                row
            })
            .collect()
    };
    let kernel_active = kernel();
    let kernel_passive = kernel();
    let reward = (0..horizon)
        .map(|_| {
            (0..num_states)
                .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
                .collect()
        })
        .collect();
    SubProcessSpec {
        num_states,
        horizon,
        initial_state: rng.random_range(0..num_states),
        reward,
        kernel_active,
        kernel_passive,
    }
}
