//! Monte Carlo evaluation of the K-arm system, baseline policies, exact
//! oracles for small instances, and occupancy diagnostics.

mod baselines;
mod index_policy;
mod occupancy;
pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::BudgetProfile;

pub use baselines::{pretrain_ucb_width, simulate_ocba_m, simulate_ucb, BaselineProblem, UCB_DEFAULT_GRID};
pub use index_policy::{simulate_index_policy, IndexPolicySimulator, RewardModel};
pub use occupancy::{occupancy_convergence_report, OccupancyRow};

/// Normal quantile for a two-sided 95% interval.
pub const Z_95: f64 = 1.96;

/// Replication streams at or above this offset are reserved for training runs.
pub const TRAINING_STREAM_OFFSET: u64 = 1 << 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Index,
    Ucb,
    OcbaM,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Index => "index",
            PolicyKind::Ucb => "ucb",
            PolicyKind::OcbaM => "ocba_m",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub policy: PolicyKind,
    pub num_arms: usize,
    pub budgets: Vec<usize>,
    pub replications: usize,
    /// Total reward of each replication, in replication order.
    pub totals: Vec<f64>,
    pub mean_per_arm: f64,
    /// Half-width of the 95% interval for the per-arm mean.
    pub ci_half_width: f64,
    pub seed: u64,
}

impl SimResult {
    pub fn from_totals(policy: PolicyKind, budget: &BudgetProfile, totals: Vec<f64>, seed: u64) -> Self {
        Self::new(policy, budget.num_arms(), budget.budgets().to_vec(), totals, seed)
    }

    pub fn new(policy: PolicyKind, num_arms: usize, budgets: Vec<usize>, totals: Vec<f64>, seed: u64) -> Self {
        let k = num_arms as f64;
        let (mean, std) = mean_and_sample_std(&totals);
        let reps = totals.len();
        SimResult {
            policy,
            num_arms,
            budgets,
            replications: reps,
            totals,
            mean_per_arm: mean / k,
            ci_half_width: Z_95 * std / k / (reps as f64).sqrt(),
            seed,
        }
    }

    pub fn ci_low(&self) -> f64 {
        self.mean_per_arm - self.ci_half_width
    }

    pub fn ci_high(&self) -> f64 {
        self.mean_per_arm + self.ci_half_width
    }
}

/// Mean and the `n − 1` standard deviation; the deviation is infinite for one sample.
pub fn mean_and_sample_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Generator for replication `stream` under master `seed`.
pub fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `reps` replications in parallel; replication `r` uses stream `offset + r`.
pub(crate) fn replicate<F>(reps: usize, seed: u64, offset: u64, run: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|r| run(&mut replication_rng(seed, offset + r as u64)))
        .collect()
}

/// `Binomial(n, p)` with `p` clamped into `[0, 1]`.
pub(crate) fn binomial<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> usize {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p).expect("valid binomial").sample(rng) as usize
}

/// Adds a `Multinomial(n, row)` draw into `out` via successive conditional binomials.
pub(crate) fn add_multinomial<R: Rng + ?Sized>(rng: &mut R, n: usize, row: &[f64], out: &mut [usize]) {
    let mut left = n;
    let mut mass = 1.0;
    let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (j, &p) in row.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j == last {
            out[j] += left;
            break;
        }
        if p <= 0.0 {
            continue;
        }
        let x = binomial(rng, left, p / mass);
        out[j] += x;
        left -= x;
        mass -= p;
    }
}
