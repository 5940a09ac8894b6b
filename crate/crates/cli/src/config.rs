//! Experiment configuration: a single JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use rmab::dp::MultiplierVector;
use rmab::lp::SimplexOptions;
use rmab::model::{build_bernoulli_mab, build_subset_selection, BetaLattice, BetaState, BudgetProfile, SubProcessSpec};
use rmab::policy::PrecomputeOptions;
use rmab::relax::{BoundMethod, StepRule, SubgradientOptions};
use rmab::sim::{BaselineProblem, PolicyKind, RewardModel, UCB_DEFAULT_GRID};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

fn flat_prior() -> BetaState {
    (1, 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    BernoulliMab {
        horizon: usize,
        /// Pull fraction `m/K`, the same every period.
        fraction: f64,
        #[serde(default = "flat_prior")]
        prior: BetaState,
    },
    SubsetSelection {
        measure_horizon: usize,
        select_fraction: f64,
        measure_fraction: f64,
        #[serde(default = "flat_prior")]
        prior: BetaState,
    },
    CustomSpecPath {
        /// Relative paths resolve against the config file's directory.
        spec_path: PathBuf,
        fractions: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub bisection: f64,
    pub lp_feasibility: f64,
    pub lp_pivot: f64,
    pub lp_optimality: f64,
    pub subgradient_steps: usize,
    /// `c` in the `c/√k` schedule; `T·r̄/10` when absent.
    pub subgradient_step_scale: Option<f64>,
    pub subgradient_patience: usize,
    pub subgradient_min_improvement: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let lp = SimplexOptions::default();
        Tolerances {
            bisection: rmab::index::DEFAULT_TOLERANCE,
            lp_feasibility: lp.feasibility_tol,
            lp_pivot: lp.pivot_tol,
            lp_optimality: lp.optimality_tol,
            subgradient_steps: 2000,
            subgradient_step_scale: None,
            subgradient_patience: 200,
            subgradient_min_improvement: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UcbConfig {
    pub grid: Vec<f64>,
    pub training_replications: usize,
}

impl Default for UcbConfig {
    fn default() -> Self {
        UcbConfig {
            grid: UCB_DEFAULT_GRID.to_vec(),
            training_replications: 500,
        }
    }
}

fn default_lambda_method() -> BoundMethod {
    BoundMethod::LpDual
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub k_list: Vec<usize>,
    pub replications: usize,
    pub policies: Vec<PolicyKind>,
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_lambda_method")]
    pub lambda_method: BoundMethod,
    #[serde(default)]
    pub ucb: UcbConfig,
    /// Also write one row per replication.
    #[serde(default)]
    pub per_replication: bool,
}

/// How an instance was built, which decides the reward model and baselines.
#[derive(Clone, Debug)]
pub enum Family {
    BernoulliMab { lattice: BetaLattice, prior: BetaState },
    SubsetSelection { prior: BetaState },
    Custom,
}

/// A validated config with its instance built.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: SubProcessSpec,
    pub alpha: Vec<f64>,
    pub family: Family,
    /// SHA-256 over the canonical config and, for custom problems, the spec.
    pub hash: String,
}

impl Experiment {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn from_json(text: &str, base_dir: &Path) -> CliResult<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Self::new(config, base_dir)
    }

    pub fn new(config: ExperimentConfig, base_dir: &Path) -> CliResult<Self> {
        let bad = |m: String| CliError::Config(m);
        let (spec, alpha, family) = match &config.problem {
            ProblemConfig::BernoulliMab {
                horizon,
                fraction,
                prior,
            } => {
                let mab = build_bernoulli_mab(*horizon, *prior).map_err(|e| bad(e.to_string()))?;
                let alpha = vec![*fraction; *horizon];
                let family = Family::BernoulliMab {
                    lattice: mab.lattice,
                    prior: *prior,
                };
                (mab.spec, alpha, family)
            }
            ProblemConfig::SubsetSelection {
                measure_horizon,
                select_fraction,
                measure_fraction,
                prior,
            } => {
                let ss = build_subset_selection(*measure_horizon, *select_fraction, *measure_fraction, *prior)
                    .map_err(|e| bad(e.to_string()))?;
                let alpha = ss.fractions();
                (ss.instance.spec, alpha, Family::SubsetSelection { prior: *prior })
            }
            ProblemConfig::CustomSpecPath { spec_path, fractions } => {
                let path = base_dir.join(spec_path);
                let text = std::fs::read_to_string(&path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
                let spec = SubProcessSpec::from_json(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
                if fractions.len() != spec.horizon {
                    return Err(bad(format!(
                        "{} fractions for a spec with horizon {}",
                        fractions.len(),
                        spec.horizon
                    )));
                }
                (spec, fractions.clone(), Family::Custom)
            }
        };
        if config.k_list.is_empty() {
            return Err(bad("k_list is empty".into()));
        }
        if config.replications == 0 {
            return Err(bad("replications must be at least 1".into()));
        }
        if config.policies.is_empty() {
            return Err(bad("no policies requested".into()));
        }
        if let Some(f) = alpha.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(bad(format!("fraction {f} outside (0,1)")));
        }
        for &k in &config.k_list {
            BudgetProfile::from_fractions(k, &alpha).map_err(|e| bad(format!("K = {k}: {e}")))?;
        }
        for policy in &config.policies {
            let ok = match (policy, &family) {
                (PolicyKind::Index, _) => true,
                (PolicyKind::Ucb, Family::Custom) => false,
                (PolicyKind::Ucb, _) => true,
                (PolicyKind::OcbaM, Family::SubsetSelection { .. }) => true,
                (PolicyKind::OcbaM, _) => false,
            };
            if !ok {
                return Err(bad(format!("policy {} is not defined for this problem", policy.name())));
            }
        }
        if config.policies.contains(&PolicyKind::Ucb) {
            if config.ucb.grid.is_empty() || config.ucb.grid.iter().any(|w| !(0.0..=5.0).contains(w)) {
                return Err(bad("ucb.grid must be nonempty within [0, 5]".into()));
            }
            if config.ucb.training_replications == 0 {
                return Err(bad("ucb.training_replications must be at least 1".into()));
            }
        }
        let tol = &config.tolerances;
        let positive = [
            ("bisection", tol.bisection),
            ("lp_feasibility", tol.lp_feasibility),
            ("lp_pivot", tol.lp_pivot),
            ("lp_optimality", tol.lp_optimality),
            ("subgradient_min_improvement", tol.subgradient_min_improvement),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(bad(format!("tolerance {name} = {v} must be positive")));
        }
        if tol.subgradient_steps == 0 || tol.subgradient_step_scale.is_some_and(|c| !(c > 0.0)) {
            return Err(bad("subgradient steps and step scale must be positive".into()));
        }

        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_string(&config).expect("config serializes"));
        if let Family::Custom = family {
            hasher.update(spec.to_json());
        }
        let hash = hex::encode(hasher.finalize());
        Ok(Experiment {
            config,
            spec,
            alpha,
            family,
            hash,
        })
    }

    pub fn budget(&self, k: usize) -> BudgetProfile {
        BudgetProfile::from_fractions(k, &self.alpha).expect("validated at load")
    }

    pub fn precompute_options(&self) -> PrecomputeOptions {
        let tol = &self.config.tolerances;
        let mut subgradient = SubgradientOptions::for_spec(&self.spec);
        subgradient.steps = tol.subgradient_steps;
        subgradient.patience = tol.subgradient_patience;
        subgradient.min_improvement = tol.subgradient_min_improvement;
        if let Some(scale) = tol.subgradient_step_scale {
            subgradient.step_rule = StepRule::InverseSqrt { scale };
        }
        PrecomputeOptions {
            method: self.config.lambda_method,
            bisection_tol: tol.bisection,
            simplex: SimplexOptions {
                feasibility_tol: tol.lp_feasibility,
                pivot_tol: tol.lp_pivot,
                optimality_tol: tol.lp_optimality,
            },
            subgradient,
        }
    }

    pub fn reward_model(&self) -> RewardModel<'_> {
        match &self.family {
            Family::BernoulliMab { lattice, .. } => RewardModel::BernoulliOutcomes(lattice),
            _ => RewardModel::Expected,
        }
    }

    pub fn baseline_problem(&self) -> Option<BaselineProblem> {
        match self.family {
            Family::BernoulliMab { prior, .. } => Some(BaselineProblem::BernoulliMab { prior }),
            Family::SubsetSelection { prior } => Some(BaselineProblem::SubsetSelection { prior }),
            Family::Custom => None,
        }
    }

    /// Header comment carried by every output file.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.config.seed)
    }

    pub fn zero_multipliers(&self) -> MultiplierVector {
        MultiplierVector::zeros(self.spec.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAB: &str = r#"{
        "problem": {"kind": "bernoulli_mab", "horizon": 6, "fraction": 0.3333333333333333},
        "k_list": [12, 120],
        "replications": 10,
        "policies": ["index", "ucb"],
        "seed": 3
    }"#;

    #[test]
    fn parses_with_defaults() {
        let e = Experiment::from_json(MAB, Path::new(".")).unwrap();
        assert_eq!(e.spec.num_states, 21);
        assert_eq!(e.config.lambda_method, BoundMethod::LpDual);
        assert_eq!(e.config.tolerances.bisection, 1e-6);
        assert_eq!(e.budget(120).budgets(), &[40; 6]);
        assert_eq!(e.hash.len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = MAB.replace("\"seed\": 3", "\"seed\": 3, \"tolerance\": {}");
        assert!(matches!(
            Experiment::from_json(&typo, Path::new(".")),
            Err(CliError::Config(_))
        ));
        let nested = MAB.replace("\"fraction\"", "\"fractoin\"");
        assert!(matches!(
            Experiment::from_json(&nested, Path::new(".")),
            Err(CliError::Config(_))
        ));
        let tol = MAB.replace("\"seed\": 3", "\"seed\": 3, \"tolerances\": {\"bisect\": 1e-6}");
        assert!(matches!(
            Experiment::from_json(&tol, Path::new(".")),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn invariants_enforced() {
        for (from, to) in [
            ("[12, 120]", "[]"),
            ("\"replications\": 10", "\"replications\": 0"),
            ("0.3333333333333333", "1.5"),
            ("[12, 120]", "[2]"),
            ("[\"index\", \"ucb\"]", "[\"ocba_m\"]"),
        ] {
            let text = MAB.replace(from, to);
            assert!(
                matches!(Experiment::from_json(&text, Path::new(".")), Err(CliError::Config(_))),
                "{to}"
            );
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = Experiment::from_json(MAB, Path::new(".")).unwrap();
        let b = Experiment::from_json(&MAB.replace("\"seed\": 3", "\"seed\": 4"), Path::new(".")).unwrap();
        let c = Experiment::from_json(&MAB.replace("\n", " "), Path::new(".")).unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash, c.hash);
    }
}
