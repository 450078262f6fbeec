//! End-to-end orchestration: manifests, splits and folds, ensemble
//! training, annotation, evaluation, sweeps, the downstream harness and a
//! synthetic data generator.

pub mod corpus;
pub mod downstream;
pub mod manifest;
pub mod output;
pub mod run;
pub mod split;
pub mod store;
pub mod synth;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleConfig;
use crate::error::{Result, SafeError};
use crate::pen::{AugmentationSpec, TrainConfig};

pub use corpus::{Corpus, CorpusImage, CorpusPatch};
pub use downstream::{run_downstream, DownstreamConfig, DownstreamResult, Protocol};
pub use output::{full_run, load_ensemble, save_ensemble, FullRun};
pub use manifest::{load_manifest, DatasetManifest, ManifestEntry};
pub use run::{
    embed_patches, held_out_queries, run_annotate, run_evaluate, run_sweep, run_train, AnnotationOutput,
    AnnotationRecord, Evaluation, QuerySet, SweepRow, TrainedEnsemble, TrainedModel,
};
pub use split::{make_folds, stratified_split, FoldPlan, Split};
pub use store::EmbeddingStore;
pub use synth::{gen_synthetic, SynthSpec, SynthSummary};

/// Everything a run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub patch_size: usize,
    pub test_fraction: f64,
    pub n_folds: usize,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub augmentation: AugmentationSpec,
    pub ensemble: EnsembleConfig,
    /// Random directions for the sliced Wasserstein distance.
    pub wd_projections: usize,
    pub downstream: DownstreamConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            patch_size: crate::patch_grid::DEFAULT_PATCH_SIZE,
            test_fraction: 0.2,
            n_folds: 4,
            split_seed: 0,
            train: TrainConfig::default(),
            augmentation: AugmentationSpec::geometric(0),
            ensemble: EnsembleConfig::default(),
            wd_projections: 128,
            downstream: DownstreamConfig::default(),
            output_dir: PathBuf::from("safe-out"),
        }
    }
}

impl RunConfig {
    /// Sets every seed in the configuration.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split_seed = seed;
        self.train.seed = seed;
        self.augmentation.seed = seed;
        self.downstream.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(SafeError::InvalidArgument("patch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(SafeError::InvalidArgument(format!(
                "test fraction must lie in [0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.n_folds < 2 || self.ensemble.models > self.n_folds {
            return Err(SafeError::InvalidArgument(format!(
                "{} models cannot be drawn from {} folds",
                self.ensemble.models, self.n_folds
            )));
        }
        if self.wd_projections == 0 {
            return Err(SafeError::InvalidArgument("need at least one WD projection".into()));
        }
        self.train.validate()?;
        self.augmentation.validate()?;
        self.ensemble.validate()?;
        self.downstream.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| SafeError::Parse {
            path: "<config>".into(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
