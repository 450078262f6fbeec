//! Downstream patch classifier trained with and without refined labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, CorpusPatch};
use super::run::embed_patches;
use super::split::Split;
use crate::error::{Result, SafeError};
use crate::labels::{Annotation, Class};
use crate::metrics::{auprc, core_metrics, extended_confusion, MetricReport};
use crate::pen::{classify, train_pen, AugmentationSpec, LabeledPatch, Objective, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Unlabeled patches are taken as Healthy.
    WithoutSafe,
    /// Unlabeled patches take their inferred label; Undecided ones are dropped.
    WithSafe,
}

impl std::str::FromStr for Protocol {
    type Err = SafeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "without_safe" => Ok(Protocol::WithoutSafe),
            "with_safe" => Ok(Protocol::WithSafe),
            _ => Err(SafeError::InvalidArgument(format!(
                "protocol must be without_safe or with_safe, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DownstreamConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub channels: Vec<usize>,
    pub d: usize,
    pub l1_coeff: f64,
    pub l2_coeff: f64,
    pub seed: u64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        DownstreamConfig {
            epochs: 8,
            learning_rate: 1e-3,
            batch_size: 64,
            channels: vec![8, 16, 32],
            d: 64,
            l1_coeff: 1e-4,
            l2_coeff: 1e-4,
            seed: 0,
        }
    }
}

impl DownstreamConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            l1_coeff: self.l1_coeff,
            l2_coeff: self.l2_coeff,
            d: self.d,
            d_prime: 1,
            seed: self.seed,
            channels: self.channels.clone(),
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()
    }
}

/// Training patches and labels of the training images under `protocol`.
pub fn training_set<'a>(
    corpus: &'a Corpus,
    split: &Split,
    annotations: &BTreeMap<String, Annotation>,
    protocol: Protocol,
) -> Vec<(&'a CorpusPatch, Class)> {
    corpus
        .images
        .iter()
        .filter(|i| !split.is_test(&i.id))
        .flat_map(|i| &i.patches)
        .filter_map(|p| match p.record.prelim_label.class() {
            Some(c) => Some((p, c)),
            None => match protocol {
                Protocol::WithoutSafe => Some((p, Class::Healthy)),
                Protocol::WithSafe => annotations
                    .get(&p.patch_id())
                    .and_then(|a| a.class())
                    .map(|c| (p, c)),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub protocol: Protocol,
    pub train_healthy: usize,
    pub train_unhealthy: usize,
    pub report: MetricReport,
}

/// Trains the compact classifier under `protocol` and scores it on the
/// labeled patches of the test images.
pub fn run_downstream(
    config: &DownstreamConfig,
    corpus: &Corpus,
    split: &Split,
    annotations: &BTreeMap<String, Annotation>,
    protocol: Protocol,
) -> Result<DownstreamResult> {
    let train = training_set(corpus, split, annotations, protocol);
    let samples: Vec<LabeledPatch> = train
        .iter()
        .map(|(p, c)| LabeledPatch {
            pixels: &p.record.pixels,
            label: *c,
        })
        .collect();
    let trained = train_pen(
        &samples,
        corpus.patch_size,
        &config.train_config(),
        &AugmentationSpec::none(),
        Objective::ClassifierOnly,
    )?;
    let held: Vec<&CorpusPatch> = corpus.labeled(split, true).collect();
    if held.is_empty() {
        return Err(SafeError::Validation("the test split has no labeled patches".into()));
    }
    let records: Vec<_> = held.iter().map(|p| &p.record).collect();
    let z = embed_patches(&trained.params, &records)?;
    let scores = z
        .iter()
        .map(|z| classify(&trained.params, z))
        .collect::<Result<Vec<f64>>>()?;
    let actual: Vec<Class> = held.iter().map(|p| p.reference().expect("labeled")).collect();
    let predicted: Vec<Annotation> = scores
        .iter()
        .map(|&s| if s >= 0.5 { Annotation::Unhealthy } else { Annotation::Healthy })
        .collect();
    let mut report = core_metrics(&extended_confusion(&actual, &predicted)?);
    let positive: Vec<bool> = actual.iter().map(|&c| c == Class::Unhealthy).collect();
    report.auprc = auprc(&scores, &positive)?;
    let n_u = train.iter().filter(|(_, c)| *c == Class::Unhealthy).count();
    Ok(DownstreamResult {
        protocol,
        train_healthy: train.len() - n_u,
        train_unhealthy: n_u,
        report,
    })
}
