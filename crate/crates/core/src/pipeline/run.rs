//! Training, annotation, evaluation and sweeps over a [`Corpus`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, CorpusPatch};
use super::split::{make_folds, FoldPlan, Split};
use super::store::EmbeddingStore;
use super::RunConfig;
use crate::ensemble::{annotate_all, confidence_score, EmbeddingSpace, EnsembleConfig, Query};
use crate::error::{Result, SafeError};
use crate::labels::{Annotation, Class, PrelimLabel};
use crate::metrics::{auprc, core_metrics, db_index, extended_confusion, sliced_wasserstein, EmbeddingQualityReport, MetricReport};
use crate::numerics::Matrix;
use crate::patch_grid::PatchRecord;
use crate::pen::{encode, to_input, train_pen, EpochStats, LabeledPatch, Objective, PenParams};

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Encoder embeddings `z` of the given patches.
pub fn embed_patches(params: &PenParams, patches: &[&PatchRecord]) -> Result<Vec<Vec<f64>>> {
    let side = params.architecture().input_size;
    let out = par_map(patches, |p| encode(params, &to_input(&p.pixels, side)));
    out.into_iter().collect()
}

/// Rounds every parameter to `f32`, the checkpoint precision, so a model
/// reloaded from disk behaves exactly like the one in memory.
fn quantize(mut params: PenParams) -> PenParams {
    for v in params.values_mut() {
        *v = *v as f32 as f64;
    }
    params
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: PenParams,
    pub store: EmbeddingStore,
    pub space: EmbeddingSpace,
    pub trace: Vec<EpochStats>,
}

#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    pub plan: FoldPlan,
    pub models: Vec<TrainedModel>,
}

impl TrainedEnsemble {
    pub fn params(&self) -> Vec<PenParams> {
        self.models.iter().map(|m| m.params.clone()).collect()
    }

    pub fn spaces(&self) -> Vec<EmbeddingSpace> {
        self.models.iter().map(|m| m.space.clone()).collect()
    }
}

fn model_seed(seed: u64, m: usize) -> u64 {
    seed.wrapping_add((m as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains one network per fold combination on the labeled patches of the
/// training images and builds each model's embedding store from its own
/// training patches.
pub fn run_train(config: &RunConfig, corpus: &Corpus, split: &Split) -> Result<TrainedEnsemble> {
    config.validate()?;
    let pool: Vec<&CorpusPatch> = corpus.labeled(split, false).collect();
    let labels: Vec<Class> = pool
        .iter()
        .map(|p| p.record.prelim_label.class().expect("labeled"))
        .collect();
    let plan = make_folds(&labels, config.n_folds, config.ensemble.models, config.split_seed)?;
    let model_ids: Vec<usize> = (0..config.ensemble.models).collect();
    let models = par_map(&model_ids, |&m| -> Result<TrainedModel> {
        let idx = plan.training_indices(m);
        let samples: Vec<LabeledPatch> = idx
            .iter()
            .map(|&i| LabeledPatch {
                pixels: &pool[i].record.pixels,
                label: labels[i],
            })
            .collect();
        let mut train = config.train.clone();
        train.seed = model_seed(config.train.seed, m);
        let mut aug = config.augmentation.clone();
        aug.seed = model_seed(aug.seed, m);
        let trained = train_pen(&samples, corpus.patch_size, &train, &aug, Objective::Combined)?;
        let params = quantize(trained.params);
        let records: Vec<&PatchRecord> = idx.iter().map(|&i| &pool[i].record).collect();
        let z = embed_patches(&params, &records)?;
        let rows = idx
            .iter()
            .zip(z)
            .map(|(&i, v)| (pool[i].patch_id(), labels[i], v))
            .collect();
        let store = EmbeddingStore::new(m as u32, train.d, rows)?;
        let space = store.to_space()?;
        Ok(TrainedModel {
            params,
            store,
            space,
            trace: trained.trace,
        })
    });
    Ok(TrainedEnsemble {
        plan,
        models: models.into_iter().collect::<Result<_>>()?,
    })
}

fn check_models(params: &[PenParams], spaces: &[EmbeddingSpace]) -> Result<()> {
    if params.len() != spaces.len() {
        return Err(SafeError::InvalidArgument(format!(
            "{} checkpoints but {} embedding stores",
            params.len(),
            spaces.len()
        )));
    }
    for (p, s) in params.iter().zip(spaces) {
        if p.architecture().embed_dim != s.dim() {
            return Err(SafeError::ArchitectureMismatch(format!(
                "model {} embeds into {} dimensions but its store holds {}-dimensional vectors",
                s.model_id,
                p.architecture().embed_dim,
                s.dim()
            )));
        }
    }
    Ok(())
}

/// Each patch's embedding under every model, as ensemble queries.
fn queries_for(params: &[PenParams], patches: &[&CorpusPatch]) -> Result<Vec<Query>> {
    let records: Vec<&PatchRecord> = patches.iter().map(|p| &p.record).collect();
    let per_model = params
        .iter()
        .map(|p| embed_patches(p, &records))
        .collect::<Result<Vec<_>>>()?;
    Ok(patches
        .iter()
        .enumerate()
        .map(|(i, p)| Query {
            patch_id: p.patch_id(),
            embeddings: per_model.iter().map(|m| m[i].clone()).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub grid_row: usize,
    pub grid_col: usize,
    pub prelim_label: PrelimLabel,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inferred_label: Option<Annotation>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub provisional: Vec<Annotation>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub confidence: Option<f64>,
}

impl AnnotationRecord {
    pub fn patch_id(&self) -> String {
        crate::patch_grid::patch_id(&self.image_id, self.grid_row, self.grid_col)
    }
}

/// One record per retained patch; only previously unlabeled patches carry
/// an inferred label.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationOutput {
    pub records: Vec<AnnotationRecord>,
}

impl AnnotationOutput {
    /// Inferred labels keyed by patch id.
    pub fn inferred(&self) -> BTreeMap<String, Annotation> {
        self.records
            .iter()
            .filter_map(|r| r.inferred_label.map(|l| (r.patch_id(), l)))
            .collect()
    }

    /// Counts of inferred Healthy, Unhealthy and Undecided labels.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for l in self.records.iter().filter_map(|r| r.inferred_label) {
            c[match l {
                Annotation::Healthy => 0,
                Annotation::Unhealthy => 1,
                Annotation::Undecided => 2,
            }] += 1;
        }
        c
    }

    /// Decided share of the unlabeled patches; `None` when there are none.
    pub fn d_rate(&self) -> Option<f64> {
        let [h, u, x] = self.counts();
        let n = h + u + x;
        (n > 0).then(|| (h + u) as f64 / n as f64)
    }
}

/// Annotates every unlabeled patch in the corpus.
pub fn run_annotate(
    ensemble: &EnsembleConfig,
    params: &[PenParams],
    spaces: &[EmbeddingSpace],
    corpus: &Corpus,
) -> Result<AnnotationOutput> {
    check_models(params, spaces)?;
    let unlabeled: Vec<&CorpusPatch> = corpus.unlabeled().collect();
    let queries = queries_for(params, &unlabeled)?;
    let inferred = annotate_all(&queries, spaces, ensemble)?;
    let records = corpus
        .patches()
        .map(|p| {
            let r = &p.record;
            let mut rec = AnnotationRecord {
                image_id: r.image_id.clone(),
                grid_row: r.grid_row,
                grid_col: r.grid_col,
                prelim_label: r.prelim_label,
                inferred_label: None,
                provisional: Vec::new(),
                confidence: None,
            };
            if let Some(label) = inferred.get(&p.patch_id()) {
                rec.inferred_label = Some(label.value);
                rec.provisional = label.provisional_labels();
                rec.confidence = Some(confidence_score(label, ensemble.k));
            }
            rec
        })
        .collect();
    Ok(AnnotationOutput { records })
}

/// Held-out labeled patches with their reference classes and embeddings.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub queries: Vec<Query>,
    pub actual: Vec<Class>,
}

impl QuerySet {
    /// Restricts every query to the embeddings of the given models.
    pub fn select_models(&self, models: &[usize]) -> QuerySet {
        QuerySet {
            queries: self
                .queries
                .iter()
                .map(|q| Query {
                    patch_id: q.patch_id.clone(),
                    embeddings: models.iter().map(|&m| q.embeddings[m].clone()).collect(),
                })
                .collect(),
            actual: self.actual.clone(),
        }
    }
}

/// Embeds the labeled patches of the test images. The reference class is the
/// truth mask when available, otherwise the preliminary label.
pub fn held_out_queries(params: &[PenParams], corpus: &Corpus, split: &Split) -> Result<QuerySet> {
    let held: Vec<&CorpusPatch> = corpus.labeled(split, true).collect();
    if held.is_empty() {
        return Err(SafeError::Validation("the test split has no labeled patches".into()));
    }
    let actual = held.iter().map(|p| p.reference().expect("labeled")).collect();
    Ok(QuerySet {
        queries: queries_for(params, &held)?,
        actual,
    })
}

/// Scores the ensemble's labels for the held-out queries.
pub fn evaluate_queries(queries: &QuerySet, spaces: &[EmbeddingSpace], ensemble: &EnsembleConfig) -> Result<MetricReport> {
    let inferred = annotate_all(&queries.queries, spaces, ensemble)?;
    let mut predicted = Vec::with_capacity(queries.queries.len());
    let mut scores = Vec::with_capacity(queries.queries.len());
    for q in &queries.queries {
        let l = &inferred[&q.patch_id];
        predicted.push(l.value);
        scores.push(confidence_score(l, ensemble.k));
    }
    let cm = extended_confusion(&queries.actual, &predicted)?;
    let mut report = core_metrics(&cm);
    let positive: Vec<bool> = queries.actual.iter().map(|&c| c == Class::Unhealthy).collect();
    report.auprc = auprc(&scores, &positive)?;
    Ok(report)
}

/// Davies-Bouldin index of each labeled space and per-class sliced
/// Wasserstein distance between each space and the held-out embeddings,
/// averaged over models.
pub fn embedding_quality(
    queries: &QuerySet,
    spaces: &[EmbeddingSpace],
    projections: usize,
    seed: u64,
) -> Result<EmbeddingQualityReport> {
    let mut db_sum = 0.0;
    let mut degenerate = false;
    let mut wd: BTreeMap<Class, f64> = BTreeMap::new();
    for (m, space) in spaces.iter().enumerate() {
        let labels: Vec<usize> = space.labels().iter().map(|c| c.index()).collect();
        let db = db_index(space.embeddings(), &labels)?;
        db_sum += db.value;
        degenerate |= db.degenerate;
        for class in Class::ALL {
            let seen = rows_where(space.embeddings(), |i| space.labels()[i] == class)?;
            let unseen = Matrix::from_rows(
                &queries
                    .queries
                    .iter()
                    .zip(&queries.actual)
                    .filter(|(_, &c)| c == class)
                    .map(|(q, _)| q.embeddings[m].clone())
                    .collect::<Vec<_>>(),
            )?;
            if seen.rows() == 0 || unseen.rows() == 0 {
                continue;
            }
            *wd.entry(class).or_default() += sliced_wasserstein(&seen, &unseen, projections, seed)?;
        }
    }
    let n = spaces.len().max(1) as f64;
    for v in wd.values_mut() {
        *v /= n;
    }
    Ok(EmbeddingQualityReport {
        db_index: db_sum / n,
        db_degenerate: degenerate,
        wd_per_class: wd,
    })
}

fn rows_where(m: &Matrix, keep: impl Fn(usize) -> bool) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = (0..m.rows()).filter(|&i| keep(i)).map(|i| m.row(i).to_vec()).collect();
    Matrix::from_rows(&rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricReport,
    pub quality: EmbeddingQualityReport,
}

pub fn run_evaluate(
    config: &RunConfig,
    params: &[PenParams],
    spaces: &[EmbeddingSpace],
    corpus: &Corpus,
    split: &Split,
) -> Result<Evaluation> {
    check_models(params, spaces)?;
    let queries = held_out_queries(params, corpus, split)?;
    Ok(Evaluation {
        report: evaluate_queries(&queries, spaces, &config.ensemble)?,
        quality: embedding_quality(&queries, spaces, config.wd_projections, config.split_seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub tau: f64,
    pub report: MetricReport,
}

/// Evaluates every `(K, τ)` pair (K-major order) on precomputed queries.
pub fn run_sweep(
    queries: &QuerySet,
    spaces: &[EmbeddingSpace],
    base: &EnsembleConfig,
    ks: &[usize],
    taus: &[f64],
) -> Result<Vec<SweepRow>> {
    if ks.is_empty() || taus.is_empty() {
        return Err(SafeError::InvalidArgument("sweep grids must be non-empty".into()));
    }
    let mut rows = Vec::with_capacity(ks.len() * taus.len());
    for &k in ks {
        for &tau in taus {
            let cfg = EnsembleConfig { k, tau, ..*base };
            rows.push(SweepRow {
                k,
                tau,
                report: evaluate_queries(queries, spaces, &cfg)?,
            });
        }
    }
    Ok(rows)
}
