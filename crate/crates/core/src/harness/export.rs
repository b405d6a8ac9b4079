//! Result files: one regret CSV per policy, `lower_bound.csv`, and
//! `summary.json`. All outputs are pure functions of the results, so equal
//! configs give byte-identical files; wall-clock time is not recorded.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{sanitize_label, Abort, ExperimentConfig, ExperimentResult, HarnessError};
use crate::bound::{reference_curve, BoundReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub label: String,
    pub file: String,
    pub seeds: Vec<u64>,
    pub final_mean_regret: f64,
    pub final_decile_10: f64,
    pub final_decile_90: f64,
    pub aborted: Vec<Abort>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler_acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampler_fallbacks: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub checkpoints: Vec<u64>,
    pub policies: Vec<PolicySummary>,
    pub lower_bound_coefficient: f64,
    pub bounds: Vec<BoundReport>,
}

impl Summary {
    pub fn new(result: &ExperimentResult) -> Self {
        let policies = result
            .curves
            .iter()
            .map(|c| PolicySummary {
                label: c.label.clone(),
                file: format!("{}.csv", sanitize_label(&c.label)),
                seeds: c.seeds.clone(),
                final_mean_regret: c.final_mean(),
                final_decile_10: c.decile_10.last().copied().unwrap_or(f64::NAN),
                final_decile_90: c.decile_90.last().copied().unwrap_or(f64::NAN),
                aborted: c.aborted.clone(),
                sampler_acceptance_rate: c.sampler.as_ref().map(|s| s.acceptance_rate()),
                sampler_fallbacks: c.sampler.as_ref().map(|s| s.fallbacks),
            })
            .collect();
        Summary {
            config: result.config.clone(),
            checkpoints: result.checkpoints.clone(),
            policies,
            lower_bound_coefficient: result.lower_bound_coefficient(),
            bounds: result.bounds.clone(),
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let mut file = fs::File::create(path).map_err(io_error(path))?;
    file.write_all(contents).map_err(io_error(path))
}

/// Writes all result files into `dir`, creating it if needed, and returns
/// their paths.
pub fn export(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::new();
    for curve in &result.curves {
        let mut text = String::from("t,mean_regret,decile_10,decile_90\n");
        for (i, t) in curve.checkpoints.iter().enumerate() {
            text.push_str(&format!("{t},{},{},{}\n", curve.mean[i], curve.decile_10[i], curve.decile_90[i]));
        }
        let path = dir.join(format!("{}.csv", sanitize_label(&curve.label)));
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }

    let mut text = String::from("t,lower_bound\n");
    for (t, bound) in reference_curve(result.lower_bound_coefficient(), &result.checkpoints) {
        text.push_str(&format!("{t},{bound}\n"));
    }
    let path = dir.join("lower_bound.csv");
    write_file(&path, text.as_bytes())?;
    written.push(path);

    let mut json = serde_json::to_string_pretty(&Summary::new(result)).expect("summaries serialize");
    json.push('\n');
    let path = dir.join("summary.json");
    write_file(&path, json.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Experiment, LabeledPolicy};
    use crate::model::PbmModel;
    use crate::policies::{PolicyConfig, PolicyKind};

    fn small_result() -> ExperimentResult {
        let config = ExperimentConfig {
            horizon: 300,
            replications: 3,
            base_seed: 5,
            checkpoints: 10,
            output_dir: PathBuf::from("out"),
            model: Some(PbmModel::new(vec![0.45, 0.35, 0.25, 0.15, 0.05], vec![0.9, 0.6, 0.3]).unwrap()),
            model_pool: None,
            policies: vec![LabeledPolicy::new("PBM TS", PolicyConfig::new(PolicyKind::PbmTs))],
        };
        Experiment::new(config, Path::new(".")).unwrap().run(Some(1)).unwrap()
    }

    #[test]
    fn files_and_headers() {
        let dir = tempfile::tempdir().unwrap();
        let result = small_result();
        let files = export(&result, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let curve = fs::read_to_string(dir.path().join("PBM_TS.csv")).unwrap();
        assert!(curve.starts_with("t,mean_regret,decile_10,decile_90\n"));
        assert_eq!(curve.lines().count(), result.checkpoints.len() + 1);
        let bound = fs::read_to_string(dir.path().join("lower_bound.csv")).unwrap();
        assert!(bound.starts_with("t,lower_bound\n1,0\n"));
        let summary: Summary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary, Summary::new(&result));
        assert_eq!(summary.policies[0].seeds.len(), 3);
    }

    #[test]
    fn unwritable_directory_errors() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        assert!(matches!(export(&small_result(), &blocker.join("sub")), Err(HarnessError::Io { .. })));
    }
}
