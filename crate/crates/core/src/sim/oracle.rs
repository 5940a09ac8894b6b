//! Exact dynamic programs over the joint K-arm system, feasible only for small
//! instances. They check the decomposition, the bound and the policy value.

use std::collections::HashMap;

use crate::dp::MultiplierVector;
use crate::error::{Error, Result};
use crate::model::{BudgetProfile, SubProcessSpec};
use crate::policy::{select_activations, IndexPolicyArtifacts, SystemCounts};

/// Largest count-state space the count-level oracles accept.
pub const MAX_COUNT_STATES: usize = 1_000_000;
/// Largest `|S|^K` the product-space oracle accepts.
pub const MAX_JOINT_STATES: usize = 4096;

/// Number of ways to place `k` arms in `n` states.
pub fn count_state_space(num_states: usize, num_arms: usize) -> f64 {
    // C(k + n − 1, n − 1)
    (1..num_states).fold(1.0, |acc, i| acc * (num_arms + i) as f64 / i as f64)
}

fn check_sizes(spec: &SubProcessSpec, num_arms: usize, budgets: &[usize]) -> Result<()> {
    if budgets.len() != spec.horizon {
        return Err(Error::Dimension(format!(
            "{} budgets for horizon {}",
            budgets.len(),
            spec.horizon
        )));
    }
    if let Some(&m) = budgets.iter().find(|&&m| m > num_arms) {
        return Err(Error::InvalidArgument(format!("budget {m} exceeds {num_arms} arms")));
    }
    let size = count_state_space(spec.num_states, num_arms);
    if size > MAX_COUNT_STATES as f64 {
        return Err(Error::TooLarge(format!(
            "{size} count states for {num_arms} arms over {} states exceeds {MAX_COUNT_STATES}",
            spec.num_states
        )));
    }
    Ok(())
}

/// Law of the arrival counts when `c` arms leave `s` under action `a`.
type Spread = Vec<(Vec<usize>, f64)>;

struct CountChain<'a> {
    spec: &'a SubProcessSpec,
    spreads: HashMap<(usize, usize, usize), Spread>,
}

impl<'a> CountChain<'a> {
    fn new(spec: &'a SubProcessSpec) -> Self {
        CountChain {
            spec,
            spreads: HashMap::new(),
        }
    }

    fn spread(&mut self, s: usize, a: usize, c: usize) -> &Spread {
        let row = &self.spec.kernel(a)[s];
        self.spreads.entry((s, a, c)).or_insert_with(|| {
            let mut out = Vec::new();
            let mut parts = vec![0; row.len()];
            multinomial_terms(row, c, 0, &mut parts, 1.0, &mut out);
            out
        })
    }

    /// Distribution of next-period counts given counts and activations.
    fn step(&mut self, counts: &[usize], active: &[usize]) -> Vec<(Vec<usize>, f64)> {
        let n = counts.len();
        let mut dist: HashMap<Vec<usize>, f64> = HashMap::from([(vec![0; n], 1.0)]);
        for s in 0..n {
            for (a, c) in [(1, active[s]), (0, counts[s] - active[s])] {
                if c == 0 {
                    continue;
                }
                let spread = self.spread(s, a, c).clone();
                let mut next = HashMap::with_capacity(dist.len() * spread.len());
                for (base, p) in &dist {
                    for (add, q) in &spread {
                        let key: Vec<usize> = base.iter().zip(add).map(|(x, y)| x + y).collect();
                        *next.entry(key).or_insert(0.0) += p * q;
                    }
                }
                dist = next;
            }
        }
        let mut out: Vec<_> = dist.into_iter().collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    fn expected_reward(&self, t: usize, counts: &[usize], active: &[usize]) -> f64 {
        (0..counts.len())
            .map(|s| {
                active[s] as f64 * self.spec.reward(t, s, 1)
                    + (counts[s] - active[s]) as f64 * self.spec.reward(t, s, 0)
            })
            .sum()
    }
}

/// Every way to send `c` arms along `row`, with its multinomial probability.
fn multinomial_terms(row: &[f64], left: usize, j: usize, parts: &mut Vec<usize>, prob: f64, out: &mut Spread) {
    if j == row.len() - 1 {
        parts[j] = left;
        let p = prob * row[j].powi(left as i32);
        if p > 0.0 {
            // multiply in the multinomial coefficient
            let total: usize = parts.iter().sum();
            let mut coef = 1.0;
            let mut placed = 0;
            for &x in parts.iter() {
                for i in 1..=x {
                    placed += 1;
                    coef *= placed as f64 / i as f64;
                }
            }
            debug_assert_eq!(placed, total);
            out.push((parts.clone(), coef * p));
        }
        parts[j] = 0;
        return;
    }
    for x in 0..=left {
        parts[j] = x;
        let p = prob * row[j].powi(x as i32);
        if p == 0.0 && x > 0 {
            break;
        }
        multinomial_terms(row, left - x, j + 1, parts, p, out);
    }
    parts[j] = 0;
}

/// All activation vectors with `Σ M = m` and `M ≤ counts`.
fn activation_plans(counts: &[usize], m: usize) -> Vec<Vec<usize>> {
    fn go(counts: &[usize], s: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if s == counts.len() {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let rest: usize = counts[s + 1..].iter().sum();
        let lo = left.saturating_sub(rest);
        for x in lo..=counts[s].min(left) {
            cur[s] = x;
            go(counts, s + 1, left - x, cur, out);
        }
        cur[s] = 0;
    }
    let mut out = Vec::new();
    go(counts, 0, m, &mut vec![0; counts.len()], &mut out);
    out
}

/// Optimal expected total reward of the joint problem with exactly `m_t` pulls
/// per period, by backward induction over arm counts.
pub fn brute_force_constrained_optimum(spec: &SubProcessSpec, num_arms: usize, budgets: &[usize]) -> Result<f64> {
    check_sizes(spec, num_arms, budgets)?;
    let mut chain = CountChain::new(spec);
    let mut memo: Vec<HashMap<Vec<usize>, f64>> = vec![HashMap::new(); spec.horizon];
    let start = SystemCounts::initial(spec.num_states, spec.initial_state, num_arms).counts;
    Ok(optimum(&mut chain, &mut memo, budgets, 0, start))
}

fn optimum(
    chain: &mut CountChain<'_>,
    memo: &mut [HashMap<Vec<usize>, f64>],
    budgets: &[usize],
    t: usize,
    counts: Vec<usize>,
) -> f64 {
    if t == budgets.len() {
        return 0.0;
    }
    if let Some(&v) = memo[t].get(&counts) {
        return v;
    }
    let mut best = f64::NEG_INFINITY;
    for plan in activation_plans(&counts, budgets[t]) {
        let mut v = chain.expected_reward(t, &counts, &plan);
        for (next, p) in chain.step(&counts, &plan) {
            v += p * optimum(chain, memo, budgets, t + 1, next);
        }
        best = best.max(v);
    }
    memo[t].insert(counts, best);
    best
}

/// Exact expected total reward of the index policy, over the count chain.
pub fn evaluate_index_policy_exact(
    spec: &SubProcessSpec,
    budget: &BudgetProfile,
    artifacts: &IndexPolicyArtifacts,
) -> Result<f64> {
    check_sizes(spec, budget.num_arms(), budget.budgets())?;
    let mut chain = CountChain::new(spec);
    let mut memo: Vec<HashMap<Vec<usize>, f64>> = vec![HashMap::new(); spec.horizon];
    let start = SystemCounts::initial(spec.num_states, spec.initial_state, budget.num_arms());
    Ok(index_value(&mut chain, &mut memo, budget, artifacts, start))
}

fn index_value(
    chain: &mut CountChain<'_>,
    memo: &mut [HashMap<Vec<usize>, f64>],
    budget: &BudgetProfile,
    artifacts: &IndexPolicyArtifacts,
    counts: SystemCounts,
) -> f64 {
    let t = counts.period;
    if t == budget.horizon() {
        return 0.0;
    }
    if let Some(&v) = memo[t].get(&counts.counts) {
        return v;
    }
    let plan = select_activations(&counts, &artifacts.indices, &artifacts.occupation, budget.budgets()[t]);
    let mut v = chain.expected_reward(t, &counts.counts, &plan.active);
    for (next, p) in chain.step(&counts.counts, &plan.active) {
        v += p * index_value(
            chain,
            memo,
            budget,
            artifacts,
            SystemCounts {
                counts: next,
                period: t + 1,
            },
        );
    }
    memo[t].insert(counts.counts, v);
    v
}

/// Value of the unconstrained joint problem in which every pull costs `λ_t` and
/// the budget `m_t` is credited back, by backward induction over `|S|^K` joint
/// states and `2^K` joint actions.
pub fn joint_lagrangian_value(spec: &SubProcessSpec, lambda: &MultiplierVector, budget: &BudgetProfile) -> Result<f64> {
    let k = budget.num_arms();
    let n = spec.num_states;
    if budget.horizon() != spec.horizon || lambda.len() != spec.horizon {
        return Err(Error::Dimension(
            "budget, multipliers and spec disagree on the horizon".into(),
        ));
    }
    let joint = n
        .checked_pow(k as u32)
        .filter(|&j| j <= MAX_JOINT_STATES)
        .ok_or_else(|| Error::TooLarge(format!("{n}^{k} joint states exceeds {MAX_JOINT_STATES}")))?;
    let decode = |mut x: usize| -> Vec<usize> {
        (0..k)
            .map(|_| {
                let s = x % n;
                x /= n;
                s
            })
            .collect()
    };
    let states: Vec<Vec<usize>> = (0..joint).map(decode).collect();
    let mut next_value = vec![0.0; joint];
    for t in (0..spec.horizon).rev() {
        let mut value = vec![f64::NEG_INFINITY; joint];
        for (x, arms) in states.iter().enumerate() {
            for action in 0..(1usize << k) {
                let acts: Vec<usize> = (0..k).map(|i| (action >> i) & 1).collect();
                let pulls = acts.iter().sum::<usize>() as f64;
                let mut v: f64 = arms.iter().zip(&acts).map(|(&s, &a)| spec.reward(t, s, a)).sum();
                v -= lambda.0[t] * (pulls - budget.budgets()[t] as f64);
                for (y, next) in states.iter().enumerate() {
                    let p: f64 = (0..k).map(|i| spec.kernel(acts[i])[arms[i]][next[i]]).product();
                    v += p * next_value[y];
                }
                value[x] = value[x].max(v);
            }
        }
        next_value = value;
    }
    let start: usize = (0..k).map(|i| spec.initial_state * n.pow(i as u32)).sum();
    Ok(next_value[start])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{evaluate_policy, RandomizedPolicy};
    use crate::model::random_spec;
    use crate::relax::lagrangian_value;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_space_size() {
        assert_eq!(count_state_space(3, 3), 10.0);
        assert_eq!(count_state_space(1, 7), 1.0);
        assert_eq!(count_state_space(21, 1200), {
            let mut c = 1.0;
            for i in 1..21 {
                c = c * (1200 + i) as f64 / i as f64;
            }
            c
        });
    }

    #[test]
    fn spreads_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_spec(&mut rng, 3, 1);
        let mut chain = CountChain::new(&spec);
        for c in 0..6 {
            let total: f64 = chain.spread(1, 0, c).iter().map(|x| x.1).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let step = chain.step(&[2, 1, 3], &[1, 0, 2]);
        assert!((step.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(step.iter().all(|(c, _)| c.iter().sum::<usize>() == 6));
    }

    #[test]
    fn plans_enumerated() {
        let plans = activation_plans(&[2, 0, 1], 2);
        assert_eq!(plans, vec![vec![1, 0, 1], vec![2, 0, 0]]);
        assert!(activation_plans(&[1, 1], 3).is_empty());
    }

    #[test]
    fn single_arm_must_pull_when_budget_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = random_spec(&mut rng, 3, 3);
        let always = RandomizedPolicy::constant(&spec, 1);
        let zero = MultiplierVector::zeros(3);
        let pull = evaluate_policy(&spec, &always, &zero).unwrap();
        assert!((brute_force_constrained_optimum(&spec, 1, &[1, 1, 1]).unwrap() - pull).abs() < 1e-12);
        let rest = evaluate_policy(&spec, &RandomizedPolicy::constant(&spec, 0), &zero).unwrap();
        assert!((brute_force_constrained_optimum(&spec, 1, &[0, 0, 0]).unwrap() - rest).abs() < 1e-12);
    }

    /// Product-space DP with joint actions restricted to exactly `m_t` pulls.
    fn product_constrained_optimum(spec: &SubProcessSpec, k: usize, budgets: &[usize]) -> f64 {
        let n = spec.num_states;
        let joint = n.pow(k as u32);
        let states: Vec<Vec<usize>> = (0..joint)
            .map(|x| (0..k).map(|i| (x / n.pow(i as u32)) % n).collect())
            .collect();
        let mut next_value = vec![0.0; joint];
        for t in (0..spec.horizon).rev() {
            let mut value = vec![f64::NEG_INFINITY; joint];
            for (x, arms) in states.iter().enumerate() {
                for action in 0..(1usize << k) {
                    if action.count_ones() as usize != budgets[t] {
                        continue;
                    }
                    let acts: Vec<usize> = (0..k).map(|i| (action >> i) & 1).collect();
                    let mut v: f64 = arms.iter().zip(&acts).map(|(&s, &a)| spec.reward(t, s, a)).sum();
                    for (y, next) in states.iter().enumerate() {
                        let p: f64 = (0..k).map(|i| spec.kernel(acts[i])[arms[i]][next[i]]).product();
                        v += p * next_value[y];
                    }
                    value[x] = value[x].max(v);
                }
            }
            next_value = value;
        }
        next_value[(0..k).map(|i| spec.initial_state * n.pow(i as u32)).sum::<usize>()]
    }

    #[test]
    fn count_dp_matches_product_dp() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (n, horizon) = (2 + rng.random_range(0..2), 2 + rng.random_range(0..2));
            let spec = random_spec(&mut rng, n, horizon);
            let k = 2 + rng.random_range(0..2);
            let budgets: Vec<usize> = (0..spec.horizon).map(|_| rng.random_range(1..k)).collect();
            let a = brute_force_constrained_optimum(&spec, k, &budgets).unwrap();
            let b = product_constrained_optimum(&spec, k, &budgets);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn joint_lagrangian_decomposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let spec = random_spec(&mut rng, 3, 2);
            let budget = BudgetProfile::new(2, vec![1, 1]).unwrap();
            let lambda = MultiplierVector(vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
            let joint = joint_lagrangian_value(&spec, &lambda, &budget).unwrap();
            let split = lagrangian_value(&spec, &lambda, &budget).unwrap();
            assert!((joint - split).abs() < 1e-9);
        }
    }

    #[test]
    fn oversized_instances_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let spec = random_spec(&mut rng, 21, 2);
        assert!(matches!(
            brute_force_constrained_optimum(&spec, 1200, &[400, 400]),
            Err(Error::TooLarge(_))
        ));
        let budget = BudgetProfile::new(5, vec![1, 1]).unwrap();
        assert!(matches!(
            joint_lagrangian_value(&spec, &MultiplierVector::zeros(2), &budget),
            Err(Error::TooLarge(_))
        ));
    }
}
