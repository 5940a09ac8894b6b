//! The Lagrangian bound `P(λ) = K·Q(λ) + Σ_t m_t λ_t`, its subgradient, and
//! two ways to find the minimizing prices.

use serde::{Deserialize, Serialize};

use crate::dp::{activation_profile, backward_induction, greedy_policy, q_value, MultiplierVector};
use crate::error::{Error, Result};
use crate::lp::multipliers_from_lp;
use crate::model::{BudgetProfile, SubProcessSpec};

/// Slack allowed between `bound_value` and `K·q_value + Σ m_t λ_t`.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Subgradient,
    LpDual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lambda_star: MultiplierVector,
    pub bound_value: f64,
    pub q_value: f64,
    pub method: BoundMethod,
    pub iterations: usize,
    pub num_arms: usize,
    pub budgets: Vec<usize>,
}

impl BoundReport {
    pub fn new(
        spec: &SubProcessSpec,
        lambda_star: MultiplierVector,
        budget: &BudgetProfile,
        method: BoundMethod,
        iterations: usize,
    ) -> Result<Self> {
        check_budget(spec, budget)?;
        let q = q_value(spec, &lambda_star)?;
        let bound_value = lagrangian_value(spec, &lambda_star, budget)?;
        let report = BoundReport {
            lambda_star,
            bound_value,
            q_value: q,
            method,
            iterations,
            num_arms: budget.num_arms(),
            budgets: budget.budgets().to_vec(),
        };
        assert!(
            report.identity_gap() <= IDENTITY_TOLERANCE * (1.0 + report.bound_value.abs()),
            "bound decomposition violated by {}",
            report.identity_gap()
        );
        Ok(report)
    }

    /// `|bound_value − (K·q_value + Σ m_t λ*_t)|`
    pub fn identity_gap(&self) -> f64 {
        let priced: f64 = self
            .budgets
            .iter()
            .zip(self.lambda_star.as_slice())
            .map(|(&m, l)| m as f64 * l)
            .sum();
        (self.bound_value - (self.num_arms as f64 * self.q_value + priced)).abs()
    }

    pub fn bound_per_arm(&self) -> f64 {
        self.bound_value / self.num_arms as f64
    }
}

fn check_budget(spec: &SubProcessSpec, budget: &BudgetProfile) -> Result<()> {
    if budget.horizon() != spec.horizon {
        return Err(Error::Dimension(format!(
            "budget covers {} periods, horizon is {}",
            budget.horizon(),
            spec.horizon
        )));
    }
    Ok(())
}

/// `Q(λ) + Σ_t α_t λ_t`, the bound per arm.
pub fn lagrangian_per_arm(spec: &SubProcessSpec, lambda: &MultiplierVector, alpha: &[f64]) -> Result<f64> {
    let q = q_value(spec, lambda)?;
    Ok(q + alpha.iter().zip(lambda.as_slice()).map(|(a, l)| a * l).sum::<f64>())
}

/// `α_t − E[A_t]` under the tie-to-active greedy policy.
pub fn subgradient_per_arm(spec: &SubProcessSpec, lambda: &MultiplierVector, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != spec.horizon {
        return Err(Error::Dimension(format!(
            "{} budget fractions for horizon {}",
            alpha.len(),
            spec.horizon
        )));
    }
    let values = backward_induction(spec, lambda)?;
    let policy = greedy_policy(spec, lambda, &values);
    let pulls = activation_profile(spec, &policy)?;
    Ok(alpha.iter().zip(pulls).map(|(a, e)| a - e).collect())
}

pub fn lagrangian_value(spec: &SubProcessSpec, lambda: &MultiplierVector, budget: &BudgetProfile) -> Result<f64> {
    check_budget(spec, budget)?;
    let q = q_value(spec, lambda)?;
    let priced: f64 = budget
        .budgets()
        .iter()
        .zip(lambda.as_slice())
        .map(|(&m, l)| m as f64 * l)
        .sum();
    Ok(budget.num_arms() as f64 * q + priced)
}

/// `(m_t − K·E[A_t])_t` under the tie-to-active greedy policy.
pub fn subgradient(spec: &SubProcessSpec, lambda: &MultiplierVector, budget: &BudgetProfile) -> Result<Vec<f64>> {
    check_budget(spec, budget)?;
    let values = backward_induction(spec, lambda)?;
    let policy = greedy_policy(spec, lambda, &values);
    let pulls = activation_profile(spec, &policy)?;
    let k = budget.num_arms() as f64;
    Ok(budget
        .budgets()
        .iter()
        .zip(pulls)
        .map(|(&m, e)| m as f64 - k * e)
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Step `scale / √k` along the unit-norm subgradient.
    InverseSqrt { scale: f64 },
}

impl StepRule {
    fn length(&self, k: usize) -> f64 {
        match *self {
            StepRule::InverseSqrt { scale } => scale / (k as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgradientOptions {
    pub steps: usize,
    pub step_rule: StepRule,
    /// Stop once the best value has improved by less than `min_improvement`
    /// over this many consecutive iterations.
    pub patience: usize,
    pub min_improvement: f64,
}

impl SubgradientOptions {
    pub fn for_spec(spec: &SubProcessSpec) -> Self {
        SubgradientOptions {
            steps: 2000,
            step_rule: StepRule::InverseSqrt {
                scale: spec.horizon_reward_bound() / 10.0,
            },
            patience: 200,
            min_improvement: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubgradientRun {
    /// Iterate with the smallest bound seen.
    pub lambda: MultiplierVector,
    /// Per-arm bound at `lambda`.
    pub value: f64,
    pub iterations: usize,
    /// Best per-arm bound after each iteration.
    pub best_trace: Vec<f64>,
}

/// Projected subgradient descent on the per-arm bound over `[0, T·r̄]^T`, from `λ = 0`.
pub fn minimize_multipliers_subgradient(
    spec: &SubProcessSpec,
    alpha: &[f64],
    opts: &SubgradientOptions,
) -> Result<SubgradientRun> {
    if opts.steps == 0 {
        return Err(Error::InvalidArgument(
            "subgradient descent needs at least one step".into(),
        ));
    }
    let upper = spec.horizon_reward_bound();
    let mut lambda = MultiplierVector::zeros(spec.horizon);
    let mut best = (lambda.clone(), lagrangian_per_arm(spec, &lambda, alpha)?);
    let mut trace = Vec::with_capacity(opts.steps);
    let mut anchor = best.1;
    let mut since_anchor = 0;
    let mut iterations = 0;
    for k in 1..=opts.steps {
        iterations = k;
        let g = subgradient_per_arm(spec, &lambda, alpha)?;
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            trace.push(best.1);
            break;
        }
        let step = opts.step_rule.length(k) / norm;
        for (l, gi) in lambda.0.iter_mut().zip(&g) {
            *l = (*l - step * gi).clamp(0.0, upper);
        }
        let value = lagrangian_per_arm(spec, &lambda, alpha)?;
        if value < best.1 {
            best = (lambda.clone(), value);
        }
        trace.push(best.1);
        if anchor - best.1 >= opts.min_improvement {
            anchor = best.1;
            since_anchor = 0;
        } else {
            since_anchor += 1;
            if since_anchor >= opts.patience {
                break;
            }
        }
    }
    Ok(SubgradientRun {
        lambda: best.0,
        value: best.1,
        iterations,
        best_trace: trace,
    })
}

pub fn minimize_bound_subgradient(
    spec: &SubProcessSpec,
    budget: &BudgetProfile,
    opts: &SubgradientOptions,
) -> Result<BoundReport> {
    check_budget(spec, budget)?;
    let run = minimize_multipliers_subgradient(spec, &budget.alpha(), opts)?;
    BoundReport::new(spec, run.lambda, budget, BoundMethod::Subgradient, run.iterations)
}

/// Bound at the budget-row duals of the occupation LP.
pub fn bound_from_lp(spec: &SubProcessSpec, budget: &BudgetProfile) -> Result<BoundReport> {
    check_budget(spec, budget)?;
    let (lambda, solution) = multipliers_from_lp(spec, &budget.alpha())?;
    BoundReport::new(spec, lambda, budget, BoundMethod::LpDual, solution.pivots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_spec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_state() -> SubProcessSpec {
        SubProcessSpec::new(0, vec![vec![[0.0, 1.0]]], vec![vec![1.0]], vec![vec![1.0]]).unwrap()
    }

    /// `min_λ P(λ)` over a uniform grid on `[lo, hi]` for a one-period problem.
    fn grid_minimum(spec: &SubProcessSpec, budget: &BudgetProfile, lo: f64, hi: f64, points: usize) -> (f64, f64) {
        (0..=points)
            .map(|i| lo + (hi - lo) * i as f64 / points as f64)
            .map(|l| (l, lagrangian_value(spec, &MultiplierVector(vec![l]), budget).unwrap()))
            .fold((f64::NAN, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }

    #[test]
    fn single_state_value_and_subgradient() {
        let budget = BudgetProfile::new(10, vec![3]).unwrap();
        let lambda = MultiplierVector(vec![0.4]);
        assert!((lagrangian_value(&one_state(), &lambda, &budget).unwrap() - 7.2).abs() < 1e-12);
        assert_eq!(subgradient(&one_state(), &lambda, &budget).unwrap(), vec![-7.0]);
        let zero = lagrangian_value(&one_state(), &MultiplierVector::zeros(1), &budget).unwrap();
        assert!((zero - 10.0 * q_value(&one_state(), &MultiplierVector::zeros(1)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn prohibitive_price_gives_budget_subgradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = random_spec(&mut rng, 3, 3);
        let budget = BudgetProfile::new(7, vec![2, 3, 1]).unwrap();
        let lambda = MultiplierVector(vec![spec.horizon_reward_bound() + 1.0; 3]);
        assert_eq!(subgradient(&spec, &lambda, &budget).unwrap(), vec![2.0, 3.0, 1.0]);
    }

    #[test]
    fn single_state_minimum_matches_grid() {
        let budget = BudgetProfile::new(10, vec![3]).unwrap();
        let (grid_lambda, grid_value) = grid_minimum(&one_state(), &budget, 0.0, 1.0, 10_000);
        assert!((grid_lambda - 1.0).abs() <= 1e-4);
        assert!((grid_value - 3.0).abs() <= 1e-3);

        let opts = SubgradientOptions::for_spec(&one_state());
        let report = minimize_bound_subgradient(&one_state(), &budget, &opts).unwrap();
        assert_eq!(report.method, BoundMethod::Subgradient);
        assert!(
            (report.lambda_star.0[0] - grid_lambda).abs() <= 1e-3,
            "{:?}",
            report.lambda_star
        );
        assert!((report.bound_value - grid_value).abs() <= 1e-2);

        let lp = bound_from_lp(&one_state(), &budget).unwrap();
        assert!((lp.lambda_star.0[0] - 1.0).abs() <= 1e-9);
        assert!((lp.bound_value - 3.0).abs() <= 1e-9);
    }

    #[test]
    fn indifferent_arms_need_no_price() {
        let spec = SubProcessSpec::new(
            0,
            vec![vec![[0.4, 0.4], [0.7, 0.7]]; 3],
            vec![vec![0.2, 0.8], vec![0.6, 0.4]],
            vec![vec![0.2, 0.8], vec![0.6, 0.4]],
        )
        .unwrap();
        let budget = BudgetProfile::new(5, vec![1, 2, 3]).unwrap();
        let report = minimize_bound_subgradient(&spec, &budget, &SubgradientOptions::for_spec(&spec)).unwrap();
        assert!(
            report.lambda_star.0.iter().all(|&l| l == 0.0),
            "{:?}",
            report.lambda_star
        );
    }

    #[test]
    fn bound_is_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..30 {
            let spec = random_spec(&mut rng, 3, 3);
            let budget = BudgetProfile::new(4, vec![1, 2, 1]).unwrap();
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..3.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..3.0)).collect();
            let pa = lagrangian_value(&spec, &MultiplierVector(a.clone()), &budget).unwrap();
            let pb = lagrangian_value(&spec, &MultiplierVector(b.clone()), &budget).unwrap();
            for theta in [0.25, 0.5, 0.75] {
                let mix = MultiplierVector(a.iter().zip(&b).map(|(x, y)| theta * x + (1.0 - theta) * y).collect());
                let pm = lagrangian_value(&spec, &mix, &budget).unwrap();
                assert!(pm <= theta * pa + (1.0 - theta) * pb + 1e-9);
            }
        }
    }

    #[test]
    fn subgradient_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..30 {
            let spec = random_spec(&mut rng, 3, 3);
            let budget = BudgetProfile::new(6, vec![2, 1, 3]).unwrap();
            let l: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..3.0)).collect();
            let lp: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..3.0)).collect();
            let p = lagrangian_value(&spec, &MultiplierVector(l.clone()), &budget).unwrap();
            let p2 = lagrangian_value(&spec, &MultiplierVector(lp.clone()), &budget).unwrap();
            let g = subgradient(&spec, &MultiplierVector(l.clone()), &budget).unwrap();
            let lin: f64 = g.iter().zip(lp.iter().zip(&l)).map(|(gi, (a, b))| gi * (a - b)).sum();
            assert!(p2 >= p + lin - 1e-9);
        }
    }

    #[test]
    fn best_so_far_is_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let spec = random_spec(&mut rng, 4, 4);
        let run =
            minimize_multipliers_subgradient(&spec, &[0.25, 0.5, 0.5, 0.25], &SubgradientOptions::for_spec(&spec))
                .unwrap();
        assert!(!run.best_trace.is_empty());
        assert!(run.best_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*run.best_trace.last().unwrap(), run.value);
    }

    #[test]
    fn subgradient_and_lp_routes_agree_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut compared = 0;
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 3, 3);
            let budget = BudgetProfile::new(10, vec![3, 5, 2]).unwrap();
            let lp = bound_from_lp(&spec, &budget).unwrap();
            let mut opts = SubgradientOptions::for_spec(&spec);
            opts.steps = 20_000;
            opts.patience = 2_000;
            let sg = minimize_bound_subgradient(&spec, &budget, &opts).unwrap();
            assert!(sg.bound_value >= lp.bound_value - 1e-9);
            // a negative LP price lies outside the projection box
            if lp.lambda_star.0.iter().all(|&l| l >= 0.0) {
                compared += 1;
                assert!(
                    sg.bound_value - lp.bound_value <= 1e-3 * lp.bound_value.abs().max(1.0),
                    "lp {} subgradient {}",
                    lp.bound_value,
                    sg.bound_value
                );
            }
        }
        assert!(compared >= 5, "only {compared} instances had nonnegative prices");
    }

    #[test]
    fn zero_steps_rejected() {
        let mut opts = SubgradientOptions::for_spec(&one_state());
        opts.steps = 0;
        assert!(minimize_multipliers_subgradient(&one_state(), &[0.3], &opts).is_err());
    }

    #[test]
    fn report_round_trips_through_json() {
        let budget = BudgetProfile::new(10, vec![3]).unwrap();
        let report = bound_from_lp(&one_state(), &budget).unwrap();
        let text = serde_json::to_string(&report).unwrap();
        assert!(text.contains("\"lp_dual\""));
        let back: BoundReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}
