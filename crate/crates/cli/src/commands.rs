use std::fmt::Write as _;
use std::path::Path;

use rmab::policy::{precompute, IndexPolicyArtifacts};
use rmab::relax::BoundReport;
use rmab::sim::{pretrain_ucb_width, simulate_index_policy, simulate_ocba_m, simulate_ucb, PolicyKind, SimResult};

use crate::bundle::{read_bundle, write_bundle, write_text, LambdaFile, OccupationFile};
use crate::config::{Experiment, Family};
use crate::error::{CliError, CliResult};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const UCB_WIDTHS_FILE: &str = "ucb_widths.csv";

/// Computes `λ*`, the indices and the occupation measure, and writes the bundle.
pub fn solve(exp: &Experiment, out: &Path) -> CliResult<IndexPolicyArtifacts> {
    let solver = |e: rmab::Error| CliError::Solver(e.to_string());
    let artifacts = precompute(&exp.spec, &exp.alpha, &exp.precompute_options()).map_err(solver)?;
    let reports = exp
        .config
        .k_list
        .iter()
        .map(|&k| {
            BoundReport::new(
                &exp.spec,
                artifacts.lambda_star.clone(),
                &exp.budget(k),
                artifacts.method,
                artifacts.iterations,
            )
        })
        .collect::<rmab::Result<Vec<_>>>()
        .map_err(solver)?;
    let lambda = LambdaFile {
        config_hash: exp.hash.clone(),
        seed: exp.config.seed,
        method: artifacts.method,
        iterations: artifacts.iterations,
        alpha: artifacts.alpha.clone(),
        lambda_star: artifacts.lambda_star.clone(),
        search_bound: artifacts.indices.search_bound,
        reports,
    };
    let occupation = OccupationFile {
        config_hash: exp.hash.clone(),
        seed: exp.config.seed,
        occupation: artifacts.occupation.clone(),
        policy: artifacts.policy.clone(),
    };
    write_bundle(out, &lambda, &artifacts.indices, &occupation)?;
    Ok(artifacts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub result: SimResult,
    pub bound_per_arm: f64,
    /// Pretrained width, UCB rows only.
    pub ucb_width: Option<f64>,
}

/// Runs every configured policy at every `K` against a solved bundle.
pub fn simulate(exp: &Experiment, bundle_dir: &Path, out: &Path) -> CliResult<Vec<SummaryRow>> {
    let bundle = read_bundle(bundle_dir)?;
    bundle.check_provenance(&exp.hash, exp.config.seed)?;
    let cfg = &exp.config;
    let failed = |e: rmab::Error| CliError::Solver(e.to_string());
    let mut rows = Vec::new();
    for &policy in &cfg.policies {
        for &k in &cfg.k_list {
            let budget = exp.budget(k);
            let bound = bundle.report_for(k).ok_or_else(|| CliError::Bundle {
                path: bundle_dir.display().to_string(),
                message: format!("no bound for K = {k}"),
            })?;
            let mut ucb_width = None;
            let result = match policy {
                PolicyKind::Index => simulate_index_policy(
                    &exp.spec,
                    &budget,
                    &bundle.artifacts,
                    exp.reward_model(),
                    cfg.replications,
                    cfg.seed,
                )
                .map_err(|e| CliError::Bundle {
                    path: bundle_dir.display().to_string(),
                    message: e.to_string(),
                })?,
                PolicyKind::Ucb => {
                    let problem = exp.baseline_problem().expect("validated at load");
                    let width = pretrain_ucb_width(
                        problem,
                        k,
                        budget.budgets(),
                        &cfg.ucb.grid,
                        cfg.ucb.training_replications,
                        cfg.seed,
                    )
                    .map_err(failed)?;
                    ucb_width = Some(width);
                    simulate_ucb(problem, k, budget.budgets(), width, cfg.replications, cfg.seed).map_err(failed)?
                }
                PolicyKind::OcbaM => {
                    let Family::SubsetSelection { prior } = exp.family else {
                        unreachable!("validated at load")
                    };
                    simulate_ocba_m(prior, k, budget.budgets(), cfg.replications, cfg.seed).map_err(failed)?
                }
            };
            rows.push(SummaryRow {
                result,
                bound_per_arm: bound.bound_per_arm(),
                ucb_width,
            });
        }
    }
    write_outputs(exp, out, &rows)?;
    Ok(rows)
}

fn write_outputs(exp: &Experiment, out: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let head = format!("# {}\n", exp.provenance());

    let mut summary = head.clone();
    summary.push_str("policy,K,reps,mean_per_arm,ci_half,bound_per_arm,seed\n");
    for row in rows {
        let r = &row.result;
        writeln!(
            summary,
            "{},{},{},{:.16e},{:.16e},{:.16e},{}",
            r.policy.name(),
            r.num_arms,
            r.replications,
            r.mean_per_arm,
            r.ci_half_width,
            row.bound_per_arm,
            r.seed
        )
        .expect("string write");
    }
    write_text(&out.join(SUMMARY_FILE), &summary)?;

    let widths: Vec<_> = rows
        .iter()
        .filter_map(|r| r.ucb_width.map(|w| (r.result.num_arms, w)))
        .collect();
    if !widths.is_empty() {
        let mut text = head.clone();
        text.push_str("K,width\n");
        for (k, w) in widths {
            writeln!(text, "{k},{w}").expect("string write");
        }
        write_text(&out.join(UCB_WIDTHS_FILE), &text)?;
    }

    if exp.config.per_replication {
        let mut text = head;
        text.push_str("policy,K,replication,total\n");
        for row in rows {
            for (i, total) in row.result.totals.iter().enumerate() {
                writeln!(
                    text,
                    "{},{},{},{:.16e}",
                    row.result.policy.name(),
                    row.result.num_arms,
                    i,
                    total
                )
                .expect("string write");
            }
        }
        write_text(&out.join(REPLICATIONS_FILE), &text)?;
    }
    Ok(())
}
