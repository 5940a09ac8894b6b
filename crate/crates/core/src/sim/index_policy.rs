use rand::Rng;

use super::{add_multinomial, binomial, replicate, PolicyKind, SimResult};
use crate::error::{Error, Result};
use crate::model::{BetaLattice, BudgetProfile, SubProcessSpec};
use crate::policy::{select_activations, ActivationPlan, IndexPolicyArtifacts, SystemCounts};

/// How a period's reward is realized.
#[derive(Clone, Copy, Debug)]
pub enum RewardModel<'a> {
    /// Expected reward `Σ_s M(s)·r(s,1) + (N(s) − M(s))·r(s,0)`; transitions drawn from the kernels.
    Expected,
    /// Each pull is a Bernoulli trial with the posterior-mean success rate of its
    /// lattice state. The reward is the number of successes and the outcomes
    /// drive the posterior update.
    BernoulliOutcomes(&'a BetaLattice),
}

/// The index policy run forward over arm counts.
pub struct IndexPolicySimulator<'a> {
    pub spec: &'a SubProcessSpec,
    pub budget: &'a BudgetProfile,
    pub artifacts: &'a IndexPolicyArtifacts,
    pub rewards: RewardModel<'a>,
}

impl<'a> IndexPolicySimulator<'a> {
    pub fn new(
        spec: &'a SubProcessSpec,
        budget: &'a BudgetProfile,
        artifacts: &'a IndexPolicyArtifacts,
        rewards: RewardModel<'a>,
    ) -> Result<Self> {
        let horizon = spec.horizon;
        if budget.horizon() != horizon
            || artifacts.indices.horizon() != horizon
            || artifacts.occupation.horizon() != horizon
        {
            return Err(Error::Dimension(format!(
                "horizons disagree: spec {horizon}, budget {}, indices {}, occupation {}",
                budget.horizon(),
                artifacts.indices.horizon(),
                artifacts.occupation.horizon()
            )));
        }
        if artifacts.indices.num_states() != spec.num_states || artifacts.occupation.num_states() != spec.num_states {
            return Err(Error::Dimension("artifact state count differs from the spec".into()));
        }
        if let RewardModel::BernoulliOutcomes(lattice) = rewards {
            if lattice.len() != spec.num_states {
                return Err(Error::Dimension(format!(
                    "lattice has {} states, spec has {}",
                    lattice.len(),
                    spec.num_states
                )));
            }
        }
        Ok(IndexPolicySimulator {
            spec,
            budget,
            artifacts,
            rewards,
        })
    }

    /// One replication. `observe` sees the counts and plan of every period before the transition.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R, mut observe: impl FnMut(&SystemCounts, &ActivationPlan)) -> f64 {
        let spec = self.spec;
        let n = spec.num_states;
        let mut counts = SystemCounts::initial(n, spec.initial_state, self.budget.num_arms());
        let mut total = 0.0;
        for t in 0..spec.horizon {
            counts.period = t;
            let plan = select_activations(
                &counts,
                &self.artifacts.indices,
                &self.artifacts.occupation,
                self.budget.budgets()[t],
            );
            observe(&counts, &plan);
            let mut next = vec![0; n];
            for s in 0..n {
                let active = plan.active[s];
                let passive = counts.counts[s] - active;
                match self.rewards {
                    RewardModel::Expected => {
                        total += active as f64 * spec.reward(t, s, 1) + passive as f64 * spec.reward(t, s, 0);
                        add_multinomial(rng, active, &spec.kernel_active[s], &mut next);
                    }
                    RewardModel::BernoulliOutcomes(lattice) => {
                        total += passive as f64 * spec.reward(t, s, 0);
                        let wins = binomial(rng, active, lattice.mean(s));
                        total += wins as f64;
                        match lattice.outcome_successors(s) {
                            Some((up, down)) => {
                                next[up] += wins;
                                next[down] += active - wins;
                            }
                            None => next[s] += active,
                        }
                    }
                }
                add_multinomial(rng, passive, &spec.kernel_passive[s], &mut next);
            }
            counts.counts = next;
        }
        total
    }
}

/// `reps` independent replications of the index policy.
pub fn simulate_index_policy(
    spec: &SubProcessSpec,
    budget: &BudgetProfile,
    artifacts: &IndexPolicyArtifacts,
    rewards: RewardModel<'_>,
    reps: usize,
    seed: u64,
) -> Result<SimResult> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let sim = IndexPolicySimulator::new(spec, budget, artifacts, rewards)?;
    let totals = replicate(reps, seed, 0, |rng| sim.run(rng, |_, _| {}));
    Ok(SimResult::from_totals(PolicyKind::Index, budget, totals, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_bernoulli_mab, random_spec};
    use crate::policy::{precompute, PrecomputeOptions};
    use crate::sim::replication_rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_spec_has_no_variance() {
        let spec = SubProcessSpec::new(
            1,
            vec![vec![[0.1, 0.9], [0.3, 0.5], [0.2, 0.4]]; 3],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let budget = BudgetProfile::constant(10, 4, 3).unwrap();
        let artifacts = precompute(&spec, &budget.alpha(), &PrecomputeOptions::for_spec(&spec)).unwrap();
        let result = simulate_index_policy(&spec, &budget, &artifacts, RewardModel::Expected, 50, 7).unwrap();
        // every arm sits in state 1: 4 pulls at 0.5 and 6 rests at 0.3 per period
        let exact = 3.0 * (4.0 * 0.5 + 6.0 * 0.3);
        assert!(result.totals.iter().all(|&x| (x - exact).abs() < 1e-12));
        assert!(result.ci_half_width < 1e-12);
    }

    #[test]
    fn budget_is_met_every_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let spec = random_spec(&mut rng, 4, 5);
        let budget = BudgetProfile::new(37, vec![5, 12, 30, 1, 18]).unwrap();
        let artifacts = precompute(&spec, &budget.alpha(), &PrecomputeOptions::for_spec(&spec)).unwrap();
        let sim = IndexPolicySimulator::new(&spec, &budget, &artifacts, RewardModel::Expected).unwrap();
        for r in 0..200 {
            sim.run(&mut replication_rng(1, r), |counts, plan| {
                assert_eq!(counts.num_arms(), 37);
                assert_eq!(plan.total(), budget.budgets()[counts.period]);
                assert!(plan.active.iter().zip(&counts.counts).all(|(m, n)| m <= n));
            });
        }
    }

    #[test]
    fn bernoulli_outcomes_match_expected_rewards_in_mean() {
        let mab = build_bernoulli_mab(4, (1, 1)).unwrap();
        let budget = BudgetProfile::from_fractions(30, &[1.0 / 3.0; 4]).unwrap();
        let artifacts = precompute(&mab.spec, &budget.alpha(), &PrecomputeOptions::for_spec(&mab.spec)).unwrap();
        let a = simulate_index_policy(&mab.spec, &budget, &artifacts, RewardModel::Expected, 4000, 3).unwrap();
        let b = simulate_index_policy(
            &mab.spec,
            &budget,
            &artifacts,
            RewardModel::BernoulliOutcomes(&mab.lattice),
            4000,
            4,
        )
        .unwrap();
        let se = (a.ci_half_width.powi(2) + b.ci_half_width.powi(2)).sqrt();
        assert!(
            (a.mean_per_arm - b.mean_per_arm).abs() < 2.0 * se,
            "{} vs {}",
            a.mean_per_arm,
            b.mean_per_arm
        );
    }

    #[test]
    fn replications_are_reproducible() {
        let mab = build_bernoulli_mab(3, (1, 1)).unwrap();
        let budget = BudgetProfile::from_fractions(12, &[1.0 / 3.0; 3]).unwrap();
        let artifacts = precompute(&mab.spec, &budget.alpha(), &PrecomputeOptions::for_spec(&mab.spec)).unwrap();
        let model = RewardModel::BernoulliOutcomes(&mab.lattice);
        let a = simulate_index_policy(&mab.spec, &budget, &artifacts, model, 300, 11).unwrap();
        let b = simulate_index_policy(&mab.spec, &budget, &artifacts, model, 300, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_index_policy(&mab.spec, &budget, &artifacts, model, 200, 11).unwrap();
        assert_eq!(&a.totals[..200], &c.totals[..]);
    }
}
