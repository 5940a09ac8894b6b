//! UCB and OCBA-m, simulated arm by arm with latent success rates drawn from the prior.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::{replicate, PolicyKind, SimResult, TRAINING_STREAM_OFFSET};
use crate::error::{Error, Result};
use crate::model::BetaState;

/// Widths `0, 0.25, ..., 5`.
pub const UCB_DEFAULT_GRID: [f64; 21] = [
    0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0, 3.25, 3.5, 3.75, 4.0, 4.25, 4.5, 4.75, 5.0,
];

/// Problem family a baseline runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineProblem {
    /// Every pull pays its Bernoulli outcome.
    BernoulliMab { prior: BetaState },
    /// All periods but the last measure; the last selects `m` designs and pays
    /// the sum of their posterior means.
    SubsetSelection { prior: BetaState },
}

impl BaselineProblem {
    fn prior(&self) -> BetaState {
        match *self {
            BaselineProblem::BernoulliMab { prior } | BaselineProblem::SubsetSelection { prior } => prior,
        }
    }
}

/// Observation counts for one replication.
struct Arms {
    theta: Vec<f64>,
    pulls: Vec<u32>,
    wins: Vec<u32>,
    prior: BetaState,
}

impl Arms {
    fn draw<R: Rng + ?Sized>(rng: &mut R, k: usize, prior: BetaState) -> Self {
        let dist = Beta::new(prior.0 as f64, prior.1 as f64).expect("positive prior");
        Arms {
            theta: (0..k).map(|_| dist.sample(rng)).collect(),
            pulls: vec![0; k],
            wins: vec![0; k],
            prior,
        }
    }

    fn pull<R: Rng + ?Sized>(&mut self, rng: &mut R, i: usize) -> bool {
        let win = rng.random::<f64>() < self.theta[i];
        self.pulls[i] += 1;
        self.wins[i] += win as u32;
        win
    }

    fn posterior_mean(&self, i: usize) -> f64 {
        (self.prior.0 + self.wins[i]) as f64 / (self.prior.0 + self.prior.1 + self.pulls[i]) as f64
    }

    /// `μ + width·δ` from the observed pulls alone; unpulled arms score `+∞`.
    fn ucb_score(&self, i: usize, width: f64) -> f64 {
        if self.pulls[i] == 0 {
            return f64::INFINITY;
        }
        let mu = self.wins[i] as f64 / self.pulls[i] as f64;
        // population deviation of 0/1 data
        mu + width * (mu * (1.0 - mu)).sqrt()
    }
}

/// Arms sorted by decreasing score, ties to the lower index.
fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].partial_cmp(&scores[a]) {
        Some(Ordering::Equal) | None => a.cmp(&b),
        Some(o) => o,
    });
    order
}

fn select_top_posterior(arms: &Arms, m: usize) -> f64 {
    let means: Vec<f64> = (0..arms.pulls.len()).map(|i| arms.posterior_mean(i)).collect();
    rank_desc(&means)[..m].iter().map(|&i| means[i]).sum()
}

fn check_budgets(num_arms: usize, budgets: &[usize], reps: usize) -> Result<()> {
    if num_arms == 0 || budgets.is_empty() || reps == 0 {
        return Err(Error::InvalidArgument("need arms, periods and replications".into()));
    }
    if let Some(&m) = budgets.iter().find(|&&m| m > num_arms) {
        return Err(Error::InvalidArgument(format!("budget {m} exceeds {num_arms} arms")));
    }
    Ok(())
}

fn run_ucb<R: Rng + ?Sized>(
    rng: &mut R,
    problem: BaselineProblem,
    num_arms: usize,
    budgets: &[usize],
    width: f64,
) -> f64 {
    let mut arms = Arms::draw(rng, num_arms, problem.prior());
    let last = budgets.len() - 1;
    let mut total = 0.0;
    for (t, &m) in budgets.iter().enumerate() {
        if t == last {
            if let BaselineProblem::SubsetSelection { .. } = problem {
                return total + select_top_posterior(&arms, m);
            }
        }
        let scores: Vec<f64> = (0..num_arms).map(|i| arms.ucb_score(i, width)).collect();
        for &i in &rank_desc(&scores)[..m] {
            if arms.pull(rng, i) {
                if let BaselineProblem::BernoulliMab { .. } = problem {
                    total += 1.0;
                }
            }
        }
    }
    total
}

/// UCB with confidence width `width`. Budgets may equal the number of arms.
pub fn simulate_ucb(
    problem: BaselineProblem,
    num_arms: usize,
    budgets: &[usize],
    width: f64,
    reps: usize,
    seed: u64,
) -> Result<SimResult> {
    check_budgets(num_arms, budgets, reps)?;
    if !(width >= 0.0) || !width.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "UCB width {width} must be a nonnegative number"
        )));
    }
    let totals = replicate(reps, seed, 0, |rng| run_ucb(rng, problem, num_arms, budgets, width));
    Ok(SimResult::new(
        PolicyKind::Ucb,
        num_arms,
        budgets.to_vec(),
        totals,
        seed,
    ))
}

/// Grid width with the best mean total on training streams disjoint from
/// [`simulate_ucb`]'s. The first maximum wins.
pub fn pretrain_ucb_width(
    problem: BaselineProblem,
    num_arms: usize,
    budgets: &[usize],
    grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<f64> {
    check_budgets(num_arms, budgets, reps)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("UCB width grid is empty".into()));
    }
    if let Some(w) = grid.iter().find(|&&w| !(0.0..=5.0).contains(&w)) {
        return Err(Error::InvalidArgument(format!("UCB width {w} outside [0, 5]")));
    }
    let mut best = (grid[0], f64::NEG_INFINITY);
    for &w in grid {
        let totals = replicate(reps, seed, TRAINING_STREAM_OFFSET, |rng| {
            run_ucb(rng, problem, num_arms, budgets, w)
        });
        let mean = totals.iter().sum::<f64>() / reps as f64;
        if mean > best.1 {
            best = (w, mean);
        }
    }
    Ok(best.0)
}

/// Designs to measure this period under the ranked OCBA-m allocation.
///
/// Posterior means `μ_i` and variances `μ_i(1 − μ_i)` come from the Beta
/// posterior, whose pseudo-counts play the role of the warm-start samples. The
/// boundary `c` sits between the `m`-th and `(m+1)`-th best means weighted by
/// their standard errors, and the desired allocation is proportional to
/// `(σ_i / (μ_i − c))²` for a total of all samples so far plus `m̄`. Designs are
/// ranked by desired minus current samples; a design exactly at `c` ranks first.
fn ocba_measure(arms: &Arms, select: usize, measure: usize) -> Vec<usize> {
    let k = arms.pulls.len();
    let n: Vec<f64> = (0..k)
        .map(|i| (arms.prior.0 + arms.prior.1 + arms.pulls[i]) as f64)
        .collect();
    let mu: Vec<f64> = (0..k).map(|i| arms.posterior_mean(i)).collect();
    let sigma: Vec<f64> = mu.iter().map(|m| (m * (1.0 - m)).sqrt()).collect();
    let order = rank_desc(&mu);
    let (a, b) = (order[select - 1], order[select]);
    let (se_a, se_b) = (sigma[a] / n[a].sqrt(), sigma[b] / n[b].sqrt());
    let c = if se_a + se_b > 0.0 {
        (se_b * mu[a] + se_a * mu[b]) / (se_a + se_b)
    } else {
        0.5 * (mu[a] + mu[b])
    };
    let w: Vec<f64> = (0..k)
        .map(|i| {
            let gap = mu[i] - c;
            if gap == 0.0 {
                f64::INFINITY
            } else {
                (sigma[i] / gap).powi(2)
            }
        })
        .collect();
    let finite: f64 = w.iter().filter(|x| x.is_finite()).sum();
    let total = n.iter().sum::<f64>() + measure as f64;
    let deficit: Vec<f64> = (0..k)
        .map(|i| {
            if !w[i].is_finite() {
                f64::INFINITY
            } else if finite > 0.0 {
                total * w[i] / finite - n[i]
            } else {
                -n[i]
            }
        })
        .collect();
    rank_desc(&deficit)[..measure].to_vec()
}

fn run_ocba<R: Rng + ?Sized>(rng: &mut R, prior: BetaState, num_arms: usize, budgets: &[usize]) -> f64 {
    let mut arms = Arms::draw(rng, num_arms, prior);
    let (last, measures) = budgets.split_last().expect("nonempty budgets");
    for &measure in measures {
        for i in ocba_measure(&arms, *last, measure) {
            arms.pull(rng, i);
        }
    }
    select_top_posterior(&arms, *last)
}

/// OCBA-m on subset selection: `budgets` holds the measurement counts followed by
/// the number of designs selected at the end.
pub fn simulate_ocba_m(
    prior: BetaState,
    num_arms: usize,
    budgets: &[usize],
    reps: usize,
    seed: u64,
) -> Result<SimResult> {
    check_budgets(num_arms, budgets, reps)?;
    if budgets.len() < 2 {
        return Err(Error::InvalidArgument(
            "OCBA-m needs a measurement period and a selection period".into(),
        ));
    }
    let select = budgets[budgets.len() - 1];
    if select == 0 || select >= num_arms {
        return Err(Error::InvalidArgument(format!(
            "OCBA-m selects {select} of {num_arms} designs; need 0 < m < K"
        )));
    }
    let totals = replicate(reps, seed, 0, |rng| run_ocba(rng, prior, num_arms, budgets));
    Ok(SimResult::new(
        PolicyKind::OcbaM,
        num_arms,
        budgets.to_vec(),
        totals,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::replication_rng;

    const FLAT: BetaState = (1, 1);

    #[test]
    fn zero_width_ties_activate_in_index_order() {
        let mut arms = Arms {
            theta: vec![0.5; 5],
            pulls: vec![1; 5],
            wins: vec![1; 5],
            prior: FLAT,
        };
        let scores: Vec<f64> = (0..5).map(|i| arms.ucb_score(i, 0.0)).collect();
        assert_eq!(rank_desc(&scores)[..3], [0, 1, 2]);
        arms.pulls[3] = 0;
        let scores: Vec<f64> = (0..5).map(|i| arms.ucb_score(i, 0.0)).collect();
        assert_eq!(rank_desc(&scores)[..2], [3, 0]);
    }

    #[test]
    fn one_pull_has_zero_deviation() {
        let arms = Arms {
            theta: vec![0.5],
            pulls: vec![1],
            wins: vec![0],
            prior: FLAT,
        };
        assert_eq!(arms.ucb_score(0, 5.0), 0.0);
    }

    #[test]
    fn pulling_every_arm_earns_the_prior_mean() {
        let horizon = 3;
        let r = simulate_ucb(
            BaselineProblem::BernoulliMab { prior: FLAT },
            8,
            &[8; 3],
            1.0,
            20_000,
            5,
        )
        .unwrap();
        // per period, each pull succeeds with prior-predictive probability 1/2
        let per_period = r.mean_per_arm / horizon as f64;
        assert!(
            (per_period - 0.5).abs() < r.ci_half_width / horizon as f64 * 1.5 + 1e-12,
            "{per_period}"
        );
        assert!((r.mean_per_arm - 1.5).abs() <= r.ci_half_width * 1.5);
    }

    #[test]
    fn single_point_grid() {
        let w = pretrain_ucb_width(
            BaselineProblem::BernoulliMab { prior: FLAT },
            6,
            &[2; 4],
            &[1.25],
            10,
            3,
        )
        .unwrap();
        assert_eq!(w, 1.25);
    }

    #[test]
    fn pretraining_is_reproducible() {
        let problem = BaselineProblem::BernoulliMab { prior: FLAT };
        let a = pretrain_ucb_width(problem, 12, &[4; 6], &UCB_DEFAULT_GRID, 200, 9).unwrap();
        let b = pretrain_ucb_width(problem, 12, &[4; 6], &UCB_DEFAULT_GRID, 200, 9).unwrap();
        assert_eq!(a, b);
        assert!(UCB_DEFAULT_GRID.contains(&a));
    }

    #[test]
    fn pretraining_rejects_bad_grids() {
        let problem = BaselineProblem::BernoulliMab { prior: FLAT };
        assert!(pretrain_ucb_width(problem, 6, &[2; 4], &[], 10, 3).is_err());
        assert!(pretrain_ucb_width(problem, 6, &[2; 4], &[6.0], 10, 3).is_err());
    }

    #[test]
    fn ocba_ties_fall_to_lowest_index() {
        let arms = Arms {
            theta: vec![0.5; 2],
            pulls: vec![1; 2],
            wins: vec![1; 2],
            prior: FLAT,
        };
        assert_eq!(ocba_measure(&arms, 1, 1), vec![0]);
        assert_eq!(select_top_posterior(&arms, 1), arms.posterior_mean(0));
        let r = simulate_ocba_m(FLAT, 2, &[1, 1], 10, 1).unwrap();
        assert_eq!(r.replications, 10);
    }

    #[test]
    fn ocba_prefers_uncertain_boundary_designs() {
        // design 0 is clearly best, 1 and 2 straddle the boundary, 3 clearly worst
        let arms = Arms {
            theta: vec![0.5; 4],
            pulls: vec![20, 2, 2, 20],
            wins: vec![19, 1, 1, 1],
            prior: FLAT,
        };
        let mut pick = ocba_measure(&arms, 2, 2);
        pick.sort();
        assert_eq!(pick, vec![1, 2]);
    }

    #[test]
    fn ucb_subset_selection_pays_posterior_means() {
        let mut rng = replication_rng(2, 0);
        let total = run_ucb(
            &mut rng,
            BaselineProblem::SubsetSelection { prior: FLAT },
            4,
            &[2, 1],
            0.0,
        );
        // one measurement period, then the best posterior mean of four designs
        assert!([0.5, 2.0 / 3.0].contains(&total), "{total}");
    }

    #[test]
    fn results_are_deterministic() {
        let a = simulate_ocba_m(FLAT, 10, &[5, 5, 5, 5, 3], 100, 4).unwrap();
        let b = simulate_ocba_m(FLAT, 10, &[5, 5, 5, 5, 3], 100, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_arms, 10);
        assert_eq!(a.budgets, vec![5, 5, 5, 5, 3]);
    }
}
