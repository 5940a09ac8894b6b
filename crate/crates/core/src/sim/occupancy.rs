use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{replication_rng, IndexPolicySimulator, RewardModel};
use crate::dp::state_marginals;
use crate::error::{Error, Result};
use crate::model::{BudgetProfile, SubProcessSpec};
use crate::policy::IndexPolicyArtifacts;

/// Mean over replications of the worst per-(state, period) deviation of the
/// empirical occupancy from the single-arm marginals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub num_arms: usize,
    pub replications: usize,
    /// `mean_r max_{s,t} |N_t(s)/K − P_t(s)|`
    pub state_deviation: f64,
    /// `mean_r max_{s,t} |M_t(s)/K − P_t(s)·π(s,1,t)|`
    pub activation_deviation: f64,
}

pub fn occupancy_convergence_report(
    spec: &SubProcessSpec,
    alpha: &[f64],
    k_list: &[usize],
    artifacts: &IndexPolicyArtifacts,
    rewards: RewardModel<'_>,
    reps: usize,
    seed: u64,
) -> Result<Vec<OccupancyRow>> {
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    let marginals = state_marginals(spec, &artifacts.policy)?;
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let budget = BudgetProfile::from_fractions(k, alpha)?;
        let sim = IndexPolicySimulator::new(spec, &budget, artifacts, rewards)?;
        let kf = k as f64;
        let per_rep: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut worst = (0.0f64, 0.0f64);
                sim.run(&mut replication_rng(seed, r as u64), |counts, plan| {
                    let t = counts.period;
                    for s in 0..spec.num_states {
                        let p = marginals.prob(s, t);
                        let on = p * artifacts.policy.prob_active(s, t);
                        worst.0 = worst.0.max((counts.counts[s] as f64 / kf - p).abs());
                        worst.1 = worst.1.max((plan.active[s] as f64 / kf - on).abs());
                    }
                });
                worst
            })
            .collect();
        let n = reps as f64;
        rows.push(OccupancyRow {
            num_arms: k,
            replications: reps,
            state_deviation: per_rep.iter().map(|d| d.0).sum::<f64>() / n,
            activation_deviation: per_rep.iter().map(|d| d.1).sum::<f64>() / n,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_bernoulli_mab;
    use crate::policy::{precompute, PrecomputeOptions};

    #[test]
    fn first_period_is_exact() {
        let mab = build_bernoulli_mab(1, (1, 1)).unwrap();
        let alpha = [1.0 / 3.0];
        let artifacts = precompute(&mab.spec, &alpha, &PrecomputeOptions::for_spec(&mab.spec)).unwrap();
        // K = 12 gives m = 4 and α·K = 4 exactly
        let rows =
            occupancy_convergence_report(&mab.spec, &alpha, &[12], &artifacts, RewardModel::Expected, 5, 1).unwrap();
        assert!(rows[0].state_deviation < 1e-12);
        assert!(rows[0].activation_deviation < 1e-9);
        // K = 10 gives m = 3, off the fluid value by 1/30
        let rows =
            occupancy_convergence_report(&mab.spec, &alpha, &[10], &artifacts, RewardModel::Expected, 5, 1).unwrap();
        assert!((rows[0].activation_deviation - (1.0 / 3.0 - 0.3)).abs() < 1e-9);
    }

    #[test]
    fn deviation_shrinks_with_scale() {
        let mab = build_bernoulli_mab(4, (1, 1)).unwrap();
        let alpha = [1.0 / 3.0; 4];
        let artifacts = precompute(&mab.spec, &alpha, &PrecomputeOptions::for_spec(&mab.spec)).unwrap();
        let rows = occupancy_convergence_report(
            &mab.spec,
            &alpha,
            &[12, 120, 1200],
            &artifacts,
            RewardModel::BernoulliOutcomes(&mab.lattice),
            200,
            3,
        )
        .unwrap();
        assert!(
            rows.windows(2).all(|w| w[1].state_deviation < w[0].state_deviation),
            "{rows:?}"
        );
    }
}
