//! Oracle and property checks over the whole pipeline, runnable from the binary.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmab::dp::{activation_profile, q_value, MultiplierVector};
use rmab::index::{active_at, search_bound, DEFAULT_TOLERANCE};
use rmab::lp::{build_occupation_lp, simplex_solve, solve_occupation};
use rmab::model::{build_bernoulli_mab, random_spec, validate, BudgetProfile, SubProcessSpec};
use rmab::policy::{precompute, rounding, PrecomputeOptions};
use rmab::relax::{bound_from_lp, lagrangian_value};
use rmab::sim::oracle::{brute_force_constrained_optimum, evaluate_index_policy_exact, joint_lagrangian_value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Level {
    Quick,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Adds 0.1 to one active-kernel row of every decomposition instance.
    KernelRow,
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {} ({:.2}s): {}", c.name, c.seconds, c.detail)?;
        }
        Ok(())
    }
}

type Check = fn(Level, Option<Fault>) -> Result<String, String>;

pub fn run(level: Level, fault: Option<Fault>) -> VerifyReport {
    let mut checks: Vec<(&'static str, Check)> = vec![
        ("lagrangian_decomposition", check_decomposition),
        ("lagrangian_upper_bound", check_upper_bound),
        ("rounding_properties", check_rounding),
        ("lp_duality", check_lp_duality),
        ("index_grid", check_index_grid),
    ];
    if level == Level::Full {
        checks.push(("index_policy_sandwich", check_sandwich));
    }
    let checks = checks
        .into_iter()
        .map(|(name, check)| {
            let start = Instant::now();
            let result = check(level, fault);
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match result {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckOutcome {
                name,
                passed,
                detail,
                seconds,
            }
        })
        .collect();
    VerifyReport { checks }
}

fn random_lambda<R: Rng>(rng: &mut R, horizon: usize) -> MultiplierVector {
    MultiplierVector((0..horizon).map(|_| rng.random_range(0.0..2.0)).collect())
}

fn inject(spec: &mut SubProcessSpec, fault: Option<Fault>) {
    if let Some(Fault::KernelRow) = fault {
        let last = spec.num_states - 1;
        spec.kernel_active[last][0] += 0.1;
    }
}

fn check_decomposition(_: Level, fault: Option<Fault>) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=3);
        let mut spec = random_spec(&mut rng, n, horizon);
        inject(&mut spec, fault);
        let violations = validate(&spec);
        if let Some(v) = violations.first() {
            return Err(format!("instance {i}: {v}"));
        }
        let budget = BudgetProfile::constant(2, 1, horizon).map_err(|e| e.to_string())?;
        for j in 0..5 {
            let lambda = random_lambda(&mut rng, horizon);
            let joint = joint_lagrangian_value(&spec, &lambda, &budget).map_err(|e| e.to_string())?;
            let split = lagrangian_value(&spec, &lambda, &budget).map_err(|e| e.to_string())?;
            let gap = (joint - split).abs();
            if gap > 1e-9 {
                return Err(format!(
                    "instance {i} multiplier {j}: joint {joint} vs per-arm sum {split}"
                ));
            }
            worst = worst.max(gap);
        }
    }
    Ok(format!("100 instances x 5 multipliers, K=2, max gap {worst:.1e}"))
}

fn check_upper_bound(_: Level, _: Option<Fault>) -> Result<String, String> {
    let instances = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let budget = BudgetProfile::constant(3, 1, 3).map_err(|e| e.to_string())?;
    let mut slack = f64::INFINITY;
    for i in 0..instances {
        let spec = random_spec(&mut rng, 3, 3);
        let optimum = brute_force_constrained_optimum(&spec, 3, budget.budgets()).map_err(|e| e.to_string())?;
        for j in 0..20 {
            let lambda = random_lambda(&mut rng, 3);
            let p = lagrangian_value(&spec, &lambda, &budget).map_err(|e| e.to_string())?;
            if p < optimum - 1e-9 {
                return Err(format!(
                    "instance {i} multiplier {j}: bound {p} below optimum {optimum}"
                ));
            }
        }
        let best = bound_from_lp(&spec, &budget).map_err(|e| e.to_string())?.bound_value;
        if best < optimum - 1e-9 {
            return Err(format!("instance {i}: minimized bound {best} below optimum {optimum}"));
        }
        slack = slack.min(best - optimum);
    }
    Ok(format!(
        "{instances} instances x 20 multipliers, K=3 m=1 T=3, min slack at optimal prices {slack:.3e}"
    ))
}

fn check_rounding(_: Level, _: Option<Fault>) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    for i in 0..1000 {
        let len = rng.random_range(1..=6);
        let total = rng.random_range(0..=60usize);
        let weights: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..1.0)).collect();
        let sum: f64 = weights.iter().sum();
        let frac: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        let avail: Vec<usize> = frac
            .iter()
            .map(|f| (total as f64 * f).ceil() as usize + rng.random_range(0..3))
            .collect();
        let b = rounding(total, &frac, &avail).map_err(|e| format!("case {i}: {e}"))?;
        let ok = b.iter().sum::<usize>() == total
            && b.iter().zip(&avail).all(|(x, a)| x <= a)
            && b.iter()
                .zip(&frac)
                .all(|(&x, f)| (x as f64 - total as f64 * f).abs() < 1.0);
        if !ok {
            return Err(format!(
                "case {i}: total={total} frac={frac:?} avail={avail:?} -> {b:?}"
            ));
        }
    }
    Ok("1000 random cases".into())
}

fn check_lp_duality(_: Level, _: Option<Fault>) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    for i in 0..20 {
        let horizon = rng.random_range(1..=4);
        let n = rng.random_range(1..=4);
        let spec = random_spec(&mut rng, n, horizon);
        let lambda = random_lambda(&mut rng, horizon);
        let alpha: Vec<f64> = (0..horizon).map(|_| rng.random_range(0.05..0.95)).collect();
        let lp = build_occupation_lp(&spec, &lambda, &alpha).map_err(|e| e.to_string())?;
        let sol = simplex_solve(&lp);
        if !sol.is_optimal() {
            return Err(format!("random LP {i}: status {:?}", sol.status));
        }
        let gap = (sol.objective - sol.dual_objective(&lp)).abs();
        let residual = sol.primal_residual(&lp);
        let cs = sol.complementary_slackness(&lp);
        if gap > 1e-7 || residual > 1e-8 || cs > 1e-7 {
            return Err(format!(
                "random LP {i}: duality gap {gap:.1e}, residual {residual:.1e}, slackness {cs:.1e}"
            ));
        }
    }

    let third = 1.0 / 3.0;
    let alpha = [third; 6];
    let mab = build_bernoulli_mab(6, (1, 1)).map_err(|e| e.to_string())?;
    let spec = &mab.spec;
    let art = precompute(spec, &alpha, &PrecomputeOptions::for_spec(spec)).map_err(|e| e.to_string())?;
    let (_, sol) = solve_occupation(spec, &art.lambda_star, &alpha).map_err(|e| e.to_string())?;
    let q = q_value(spec, &art.lambda_star).map_err(|e| e.to_string())?;
    if (sol.objective - q).abs() > 1e-6 {
        return Err(format!("MAB LP objective {} vs Q(lambda*) {q}", sol.objective));
    }
    let profile = activation_profile(spec, &art.policy).map_err(|e| e.to_string())?;
    if let Some((t, e)) = profile.iter().enumerate().find(|(_, e)| (*e - third).abs() > 1e-8) {
        return Err(format!("MAB extracted policy activates {e} at t={t}, budget {third}"));
    }
    let tol = 2.0 * DEFAULT_TOLERANCE;
    for t in 0..spec.horizon {
        for s in 0..spec.num_states {
            let beta = art.indices.beta(s, t);
            let pi = art.policy.prob_active(s, t);
            let price = art.lambda_star.0[t];
            if (beta > price + tol && (pi - 1.0).abs() > 1e-8) || (beta < price - tol && pi.abs() > 1e-8) {
                return Err(format!("MAB s={s} t={t}: index {beta}, price {price}, activation {pi}"));
            }
        }
    }
    Ok("20 random occupation LPs; MAB objective, activation profile and index relations".into())
}

fn check_index_grid(level: Level, _: Option<Fault>) -> Result<String, String> {
    let points = if level == Level::Full { 10_000 } else { 1_000 };
    let mab = build_bernoulli_mab(6, (1, 1)).map_err(|e| e.to_string())?;
    let spec = &mab.spec;
    let art = precompute(spec, &[1.0 / 3.0; 6], &PrecomputeOptions::for_spec(spec)).map_err(|e| e.to_string())?;
    let u = search_bound(spec);
    let grid: Vec<f64> = (0..=points).map(|i| -u + 2.0 * u * i as f64 / points as f64).collect();
    for t in 0..spec.horizon {
        for s in 0..spec.num_states {
            let beta = art.indices.beta(s, t);
            let first_passive = grid.iter().position(|&b| !active_at(spec, &art.lambda_star, s, t, b));
            let ok = match first_passive {
                None => beta == u,
                Some(0) => beta == -u,
                Some(i) => beta >= grid[i - 1] - 1e-4 && beta <= grid[i] + 1e-4,
            };
            if !ok {
                return Err(format!(
                    "s={s} t={t}: index {beta} outside grid bracket {first_passive:?}"
                ));
            }
        }
    }
    let last = spec.horizon - 1;
    for s in 0..spec.num_states {
        let closed = spec.reward(last, s, 1) - spec.reward(last, s, 0);
        if (art.indices.beta(s, last) - closed).abs() > 1e-4 {
            return Err(format!(
                "s={s}: final index {} vs closed form {closed}",
                art.indices.beta(s, last)
            ));
        }
    }
    Ok(format!("MAB indices bracketed on a {points}-point grid"))
}

fn check_sandwich(_: Level, _: Option<Fault>) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1011);
    let budget = BudgetProfile::constant(3, 1, 3).map_err(|e| e.to_string())?;
    for i in 0..30 {
        let spec = random_spec(&mut rng, 3, 3);
        let art = precompute(&spec, &budget.alpha(), &PrecomputeOptions::for_spec(&spec)).map_err(|e| e.to_string())?;
        let index = evaluate_index_policy_exact(&spec, &budget, &art).map_err(|e| e.to_string())?;
        let optimum = brute_force_constrained_optimum(&spec, 3, budget.budgets()).map_err(|e| e.to_string())?;
        let bound = bound_from_lp(&spec, &budget).map_err(|e| e.to_string())?.bound_value;
        if !(index <= optimum + 1e-9 && optimum <= bound + 1e-9) {
            return Err(format!("instance {i}: index {index}, optimum {optimum}, bound {bound}"));
        }
    }
    Ok("30 instances, K=3: index policy <= optimum <= bound".into())
}
