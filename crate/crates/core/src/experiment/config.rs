//! Experiment description, validation, and hashing.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::TrainError;
use crate::model::{LrSchedule, TrainConfig};
use crate::pde::datagen::{Family, FamilyParams, Subdomain};
use crate::pott::PottConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pott,
    Finetune,
    SrcTgt,
}

impl Method {
    pub fn id(&self) -> &'static str {
        match self {
            Method::Pott => "pott",
            Method::Finetune => "finetune",
            Method::SrcTgt => "srctgt",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Method, String> {
        match s {
            "pott" => Ok(Method::Pott),
            "finetune" => Ok(Method::Finetune),
            "srctgt" => Ok(Method::SrcTgt),
            other => Err(format!(
                "unknown method {:?}, expected pott, finetune, or srctgt",
                other
            )),
        }
    }
}

/// Partial training settings layered over a stage's base configuration.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub backbone_divisor: Option<f64>,
    pub constant_rate: Option<bool>,
}

impl TrainOverrides {
    pub fn apply(&self, base: TrainConfig) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            batch: self.batch.unwrap_or(base.batch),
            lr: self.lr.unwrap_or(base.lr),
            schedule: match self.constant_rate {
                Some(true) => LrSchedule::Constant,
                Some(false) => LrSchedule::Cosine,
                None => base.schedule,
            },
            backbone_divisor: self.backbone_divisor.unwrap_or(base.backbone_divisor),
            seed: base.seed,
        }
    }
}

pub fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

/// First eight bytes of the SHA-256 digest as lowercase hex.
pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(16);
    for b in &digest[..8] {
        hex.push_str(&format!("{:02x}", b));
    }
    hex
}

/// Knobs for a standalone transfer stage over pre-generated data, as read
/// from the command line driver's `--config` file. Everything defaults.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub pott: PottConfig,
    pub transfer: TrainOverrides,
    pub seed: u64,
}

/// One transfer experiment: adapt an operator pretrained on the source
/// subdomain to a scarce target subdomain, by one method, over several
/// seeds. Target splits are always n_target train, 10 validation, 100 test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub equation: Family,
    pub source: Subdomain,
    pub target: Subdomain,
    pub n_target: usize,
    pub method: Method,
    #[serde(default)]
    pub pott: PottConfig,
    #[serde(default)]
    pub pretrain: TrainOverrides,
    #[serde(default)]
    pub transfer: TrainOverrides,
    /// Repetitions; the canonical protocol runs three.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Source training-set size; None means the full preset size.
    #[serde(default)]
    pub n_source: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_custom: Option<FamilyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_custom: Option<FamilyParams>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.n_target != 50 && self.n_target != 100 {
            return Err(TrainError::Config(format!(
                "n_target must be 50 or 100, got {}",
                self.n_target
            )));
        }
        if self.source == self.target {
            return Err(TrainError::Config(
                "source and target subdomains must differ".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(TrainError::Config("need at least one seed".into()));
        }
        if let Some(n) = self.n_source {
            if n == 0 {
                return Err(TrainError::Config("source split cannot be empty".into()));
            }
        }
        self.pott.validate()
    }

    /// Short content hash of the canonical JSON form, stamped into every
    /// record so runs can be traced back to their exact configuration.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        content_hash(canon.as_bytes())
    }

    pub fn task_id(&self) -> String {
        format!(
            "{} {}->{}",
            self.equation.id(),
            self.source.id(),
            self.target.id()
        )
    }
}

/// One completed run. Records are append-only: the runner refuses to
/// overwrite an existing record file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub task: String,
    pub method: Method,
    pub n_target: usize,
    pub seed: u64,
    pub rmse: f64,
    pub pretrain_val: Vec<f64>,
    pub transfer_loss: Vec<f64>,
    pub transfer_val: Vec<f64>,
    /// Dual objective per outer iteration; empty for non-transport methods.
    pub dual_objective: Vec<f64>,
    pub wall_seconds: f64,
}

impl ResultRecord {
    pub fn check(&self) -> Result<(), TrainError> {
        if !(self.rmse >= 0.0) {
            return Err(TrainError::Config(format!(
                "record carries negative error {}",
                self.rmse
            )));
        }
        Ok(())
    }
}
