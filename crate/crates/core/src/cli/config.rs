use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::backbone::ModelConfig;
use crate::eval::SyntheticTaskSpec;
use crate::flow::TrainConfig;
use crate::lrc::DurationHeuristic;
use crate::pipeline::{FinetuneConfig, PretrainConfig};
use crate::sampler::GuidanceConfig;
use crate::Error;

/// Every setting a command reads. Loaded from TOML, then patched by `--set`.
///
/// The `seed` fields inside `[train]` and `[guidance]` are overwritten by
/// seeds derived from the root `seed`; see [`derive_seed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Directory that receives every artifact of a command.
    pub run_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub guidance: GuidanceConfig,
    pub task: TaskConfig,
    pub pipeline: PipelineConfig,
    pub durations: DurationHeuristic,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            run_dir: PathBuf::from("runs/default"),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            guidance: GuidanceConfig::default(),
            task: TaskConfig::default(),
            pipeline: PipelineConfig::default(),
            durations: DurationHeuristic::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    #[serde(flatten)]
    pub config: TrainConfig,
    /// Number of synthetic songs drawn for training.
    pub dataset_size: usize,
    /// Progress line on stderr every this many steps (0: silent).
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { config: TrainConfig::default(), dataset_size: 512, log_every: 100 }
    }
}

/// Knobs of the synthetic task; the vocabularies come from [`SyntheticTaskSpec::standard`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub frames: usize,
    pub sigma: f64,
    pub min_segment: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        let s = SyntheticTaskSpec::standard(0);
        Self { frames: s.frames, sigma: s.sigma, min_segment: s.min_segment }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub max_edit_distance: f64,
    /// Score gap a preference pair must exceed. No default; required by `dpo-pairs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dpo_min_diff: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pretrain: PretrainConfig::default(),
            finetune: FinetuneConfig::default(),
            max_edit_distance: 0.3,
            dpo_min_diff: None,
        }
    }
}

/// Seed of one stochastic component: the first eight bytes (little endian) of
/// `SHA-256(root as 8 LE bytes ‖ label)`.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value`. The value is read as TOML, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key {key:?}")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override {key:?}: {part} is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// `[train]` flattens another struct, which serde cannot check for unknown keys.
fn check_train_keys(table: &toml::Table) -> Result<(), CliError> {
    let Some(train) = table.get("train").and_then(toml::Value::as_table) else {
        return Ok(());
    };
    let known = toml::Table::try_from(TrainSection::default()).expect("train section serializes");
    match train.keys().find(|k| !known.contains_key(*k) && k.as_str() != "p_drop_lyrics") {
        Some(k) => Err(CliError::Usage(format!("config: unknown key train.{k}"))),
        None => Ok(()),
    }
}

impl RunConfig {
    /// Defaults, then the file, then each override in order.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        check_train_keys(&table)?;
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.config.validate()?;
        self.guidance.validate()?;
        self.task_spec()?;
        if self.model.dims.d_audio != SyntheticTaskSpec::standard(0).d_audio {
            return Err(CliError::Usage("model.d_audio must match the synthetic task's 8 channels".into()));
        }
        Ok(())
    }

    pub fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    /// The synthetic task; its global offsets are drawn from the `task` seed.
    pub fn task_spec(&self) -> Result<SyntheticTaskSpec, CliError> {
        let spec = SyntheticTaskSpec {
            frames: self.task.frames,
            sigma: self.task.sigma,
            min_segment: self.task.min_segment,
            ..SyntheticTaskSpec::standard(self.seed_for("task"))
        };
        spec.validate()?;
        if spec.min_segment == 0 || spec.min_segment > spec.frames {
            return Err(CliError::Usage("task.min_segment must lie in 1..=task.frames".into()));
        }
        Ok(spec)
    }

    /// Training settings with the derived seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed_for("train"), ..self.train.config.clone() }
    }

    /// Guidance settings with the derived sampling seed.
    pub fn guidance_config(&self) -> GuidanceConfig {
        GuidanceConfig { seed: self.seed_for("sample"), ..self.guidance }
    }
}
