//! Solver output directory: `lambda.json`, `indices.csv`, `occupation.json`.

use std::path::Path;

use rmab::dp::{MultiplierVector, RandomizedPolicy};
use rmab::index::IndexTable;
use rmab::lp::OccupationMeasure;
use rmab::policy::IndexPolicyArtifacts;
use rmab::relax::{BoundMethod, BoundReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const LAMBDA_FILE: &str = "lambda.json";
pub const INDICES_FILE: &str = "indices.csv";
pub const OCCUPATION_FILE: &str = "occupation.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaFile {
    pub config_hash: String,
    pub seed: u64,
    pub method: BoundMethod,
    pub iterations: usize,
    pub alpha: Vec<f64>,
    pub lambda_star: MultiplierVector,
    pub search_bound: f64,
    /// One bound per requested `K`.
    pub reports: Vec<BoundReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationFile {
    pub config_hash: String,
    pub seed: u64,
    pub occupation: OccupationMeasure,
    /// Activation probabilities extracted from the occupation measure.
    pub policy: RandomizedPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub lambda: LambdaFile,
    pub indices_hash: String,
    pub indices_seed: u64,
    pub occupation: OccupationFile,
    pub artifacts: IndexPolicyArtifacts,
}

impl Bundle {
    pub fn report_for(&self, num_arms: usize) -> Option<&BoundReport> {
        self.lambda.reports.iter().find(|r| r.num_arms == num_arms)
    }

    /// Fails unless every file carries `hash` and `seed`.
    pub fn check_provenance(&self, hash: &str, seed: u64) -> CliResult<()> {
        let found = [
            (LAMBDA_FILE, self.lambda.config_hash.as_str(), self.lambda.seed),
            (INDICES_FILE, self.indices_hash.as_str(), self.indices_seed),
            (
                OCCUPATION_FILE,
                self.occupation.config_hash.as_str(),
                self.occupation.seed,
            ),
        ];
        for (file, h, s) in found {
            if h != hash || s != seed {
                return Err(CliError::HashMismatch(format!(
                    "{file} has config_hash={h} seed={s}, config has config_hash={hash} seed={seed}"
                )));
            }
        }
        Ok(())
    }
}

pub fn write_bundle(
    dir: &Path,
    lambda: &LambdaFile,
    indices: &IndexTable,
    occupation: &OccupationFile,
) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_json(&dir.join(LAMBDA_FILE), lambda)?;
    let csv = format!(
        "# config_hash={} seed={}\n{}",
        lambda.config_hash,
        lambda.seed,
        indices.to_csv()
    );
    write_text(&dir.join(INDICES_FILE), &csv)?;
    write_json(&dir.join(OCCUPATION_FILE), occupation)
}

pub fn read_bundle(dir: &Path) -> CliResult<Bundle> {
    let lambda: LambdaFile = read_json(&dir.join(LAMBDA_FILE))?;
    let occupation: OccupationFile = read_json(&dir.join(OCCUPATION_FILE))?;
    let path = dir.join(INDICES_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let malformed = |message: String| CliError::Bundle {
        path: path.display().to_string(),
        message,
    };
    let (indices_hash, indices_seed) = text
        .lines()
        .next()
        .and_then(parse_provenance)
        .ok_or_else(|| malformed("missing `# config_hash=... seed=...` line".into()))?;
    let indices = IndexTable::from_csv(&text, lambda.lambda_star.clone(), lambda.search_bound)
        .map_err(|e| malformed(e.to_string()))?;
    let artifacts = IndexPolicyArtifacts {
        alpha: lambda.alpha.clone(),
        lambda_star: lambda.lambda_star.clone(),
        method: lambda.method,
        iterations: lambda.iterations,
        indices,
        occupation: occupation.occupation.clone(),
        policy: occupation.policy.clone(),
    };
    Ok(Bundle {
        lambda,
        indices_hash,
        indices_seed,
        occupation,
        artifacts,
    })
}

/// Parses `# config_hash=<hex> seed=<u64>`.
pub fn parse_provenance(line: &str) -> Option<(String, u64)> {
    let rest = line.strip_prefix('#')?.trim();
    let mut hash = None;
    let mut seed = None;
    for field in rest.split_whitespace() {
        if let Some(h) = field.strip_prefix("config_hash=") {
            hash = Some(h.to_string());
        } else if let Some(s) = field.strip_prefix("seed=") {
            seed = s.parse().ok();
        }
    }
    Some((hash?, seed?))
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("bundle serializes");
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Bundle {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
