use rmab::model::{build_bernoulli_mab, build_subset_selection, BudgetProfile};
use rmab::policy::{precompute, PrecomputeOptions};
use rmab::relax::bound_from_lp;
use rmab::sim::{
    pretrain_ucb_width, simulate_index_policy, simulate_ocba_m, simulate_ucb, BaselineProblem, RewardModel,
    UCB_DEFAULT_GRID,
};

const THIRD: f64 = 1.0 / 3.0;

#[test]
fn mab_index_policy_reaches_bound_at_scale() {
    let mab = build_bernoulli_mab(6, (1, 1)).unwrap();
    let spec = &mab.spec;
    let budget = BudgetProfile::from_fractions(1200, &[THIRD; 6]).unwrap();
    let art = precompute(spec, &[THIRD; 6], &PrecomputeOptions::for_spec(spec)).unwrap();
    let bound = bound_from_lp(spec, &budget).unwrap().bound_per_arm();
    let sim = simulate_index_policy(
        spec,
        &budget,
        &art,
        RewardModel::BernoulliOutcomes(&mab.lattice),
        5000,
        61,
    )
    .unwrap();
    assert!(
        (sim.mean_per_arm - bound).abs() <= sim.ci_half_width,
        "{} ± {} vs bound {bound}",
        sim.mean_per_arm,
        sim.ci_half_width
    );
    assert!(bound - sim.mean_per_arm < 0.01 * bound);
}

#[test]
fn mab_ucb_falls_below_index_policy() {
    let mab = build_bernoulli_mab(6, (1, 1)).unwrap();
    let spec = &mab.spec;
    let budget = BudgetProfile::from_fractions(120, &[THIRD; 6]).unwrap();
    let art = precompute(spec, &[THIRD; 6], &PrecomputeOptions::for_spec(spec)).unwrap();
    let index = simulate_index_policy(
        spec,
        &budget,
        &art,
        RewardModel::BernoulliOutcomes(&mab.lattice),
        5000,
        67,
    )
    .unwrap();
    let problem = BaselineProblem::BernoulliMab { prior: (1, 1) };
    let width = pretrain_ucb_width(problem, 120, budget.budgets(), &UCB_DEFAULT_GRID, 500, 67).unwrap();
    let ucb = simulate_ucb(problem, 120, budget.budgets(), width, 5000, 67).unwrap();
    assert!(
        ucb.ci_high() < index.ci_low(),
        "ucb {} ± {} vs index {} ± {}",
        ucb.mean_per_arm,
        ucb.ci_half_width,
        index.mean_per_arm,
        index.ci_half_width
    );
}

#[test]
fn subset_selection_index_policy_beats_ocba_m_at_scale() {
    let ss = build_subset_selection(4, 0.3, 0.5, (1, 1)).unwrap();
    let spec = &ss.instance.spec;
    let alpha = ss.fractions();
    let budget = ss.budget(100).unwrap();
    let art = precompute(spec, &alpha, &PrecomputeOptions::for_spec(spec)).unwrap();
    let index = simulate_index_policy(spec, &budget, &art, RewardModel::Expected, 5000, 71).unwrap();
    let ocba = simulate_ocba_m((1, 1), 100, budget.budgets(), 5000, 71).unwrap();
    assert!(
        ocba.ci_high() < index.ci_low(),
        "ocba {} ± {} vs index {} ± {}",
        ocba.mean_per_arm,
        ocba.ci_half_width,
        index.mean_per_arm,
        index.ci_half_width
    );
}
