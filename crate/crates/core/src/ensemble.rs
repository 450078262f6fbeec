//! Feature-space ensemble annotation.
//!
//! Each embedding model labels a query by its `K` nearest labeled neighbors
//! under cosine distance, committing to a class only when that class holds
//! strictly more than `K·τ` of the neighbors. The per-model provisional
//! labels are then combined by a strict majority vote; when no class wins,
//! the patch is left `Undecided`.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SafeError};
use crate::labels::{Annotation, Class};
use crate::numerics::{l2_norm, pairwise_distances, Matrix};

/// Labeled embeddings produced by one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    pub model_id: usize,
    embeddings: Matrix,
    labels: Vec<Class>,
    patch_ids: Vec<String>,
}

impl EmbeddingSpace {
    pub fn new(
        model_id: usize,
        embeddings: Matrix,
        labels: Vec<Class>,
        patch_ids: Vec<String>,
    ) -> Result<Self> {
        if embeddings.rows() != labels.len() || labels.len() != patch_ids.len() {
            return Err(SafeError::InvalidArgument(format!(
                "embedding space {model_id}: {} rows, {} labels, {} ids",
                embeddings.rows(),
                labels.len(),
                patch_ids.len()
            )));
        }
        if let Some(i) = embeddings.iter_rows().position(|r| l2_norm(r) == 0.0) {
            return Err(SafeError::Validation(format!(
                "embedding space {model_id}: row for {} has zero norm",
                patch_ids[i]
            )));
        }
        Ok(EmbeddingSpace {
            model_id,
            embeddings,
            labels,
            patch_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn labels(&self) -> &[Class] {
        &self.labels
    }

    pub fn patch_ids(&self) -> &[String] {
        &self.patch_ids
    }
}

/// How provisional labels are combined across models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TieBreak {
    /// A class must hold strictly more than half of all models' votes;
    /// `Undecided` votes count toward neither class.
    #[default]
    #[serde(rename = "strict-majority-v1")]
    StrictMajorityV1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub k: usize,
    pub tau: f64,
    pub models: usize,
    pub tie_break: TieBreak,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            k: 25,
            tau: 0.75,
            models: 3,
            tie_break: TieBreak::StrictMajorityV1,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(SafeError::InvalidArgument("K must be at least 1".into()));
        }
        if !(0.5..=1.0).contains(&self.tau) {
            return Err(SafeError::InvalidArgument(format!(
                "tau must lie in [0.5, 1], got {}",
                self.tau
            )));
        }
        if self.models == 0 {
            return Err(SafeError::InvalidArgument("ensemble needs at least one model".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<'a> {
    pub index: usize,
    pub patch_id: &'a str,
    pub distance: f64,
    pub label: Class,
}

/// The `k` labeled embeddings closest to `query`, nearest first. Equal
/// distances are ordered by ascending patch id.
pub fn top_k_neighbors<'a>(
    query: &[f64],
    space: &'a EmbeddingSpace,
    k: usize,
) -> Result<Vec<Neighbor<'a>>> {
    if k > space.len() {
        return Err(SafeError::InvalidArgument(format!(
            "K = {k} exceeds the {} labeled embeddings of model {}",
            space.len(),
            space.model_id
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let distances = pairwise_distances(query, &space.embeddings)?;
    let cmp = |&a: &usize, &b: &usize| -> Ordering {
        distances[a]
            .total_cmp(&distances[b])
            .then_with(|| space.patch_ids[a].cmp(&space.patch_ids[b]))
            .then_with(|| a.cmp(&b))
    };
    let mut order: Vec<usize> = (0..space.len()).collect();
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    Ok(order
        .into_iter()
        .map(|i| Neighbor {
            index: i,
            patch_id: &space.patch_ids[i],
            distance: distances[i],
            label: space.labels[i],
        })
        .collect())
}

/// `K·τ`, deliberately left unrounded.
pub fn critical_value(k: usize, tau: f64) -> f64 {
    k as f64 * tau
}

/// One model's label from its neighbor classes.
pub fn provisional_label(neighbors: &[Class], critical: f64) -> Annotation {
    let (n_h, n_u) = count_classes(neighbors);
    provisional_from_counts(n_h, n_u, critical)
}

fn count_classes(labels: &[Class]) -> (usize, usize) {
    let n_u = labels.iter().filter(|&&c| c == Class::Unhealthy).count();
    (labels.len() - n_u, n_u)
}

fn provisional_from_counts(n_healthy: usize, n_unhealthy: usize, critical: f64) -> Annotation {
    if n_healthy as f64 > critical {
        Annotation::Healthy
    } else if n_unhealthy as f64 > critical {
        Annotation::Unhealthy
    } else {
        Annotation::Undecided
    }
}

/// Strict-majority vote over provisional labels.
pub fn majority_vote(provisional: &[Annotation]) -> Annotation {
    let half = provisional.len() as f64 / 2.0;
    let count = |a: Annotation| provisional.iter().filter(|&&p| p == a).count() as f64;
    if count(Annotation::Healthy) > half {
        Annotation::Healthy
    } else if count(Annotation::Unhealthy) > half {
        Annotation::Unhealthy
    } else {
        Annotation::Undecided
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVote {
    pub label: Annotation,
    pub n_healthy: usize,
    pub n_unhealthy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferredLabel {
    pub value: Annotation,
    pub provisional: Vec<ModelVote>,
}

impl InferredLabel {
    pub fn provisional_labels(&self) -> Vec<Annotation> {
        self.provisional.iter().map(|v| v.label).collect()
    }

    /// Number of models voting Healthy, Unhealthy, and Undecided.
    pub fn vote_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for v in &self.provisional {
            counts[match v.label {
                Annotation::Healthy => 0,
                Annotation::Unhealthy => 1,
                Annotation::Undecided => 2,
            }] += 1;
        }
        counts
    }
}

fn check_spaces(spaces: &[EmbeddingSpace], config: &EnsembleConfig) -> Result<()> {
    config.validate()?;
    if spaces.len() != config.models {
        return Err(SafeError::InvalidArgument(format!(
            "ensemble configured for {} models but {} embedding spaces were given",
            config.models,
            spaces.len()
        )));
    }
    Ok(())
}

fn annotate_unchecked(
    queries: &[Vec<f64>],
    spaces: &[EmbeddingSpace],
    config: &EnsembleConfig,
) -> Result<InferredLabel> {
    let critical = critical_value(config.k, config.tau);
    let mut provisional = Vec::with_capacity(spaces.len());
    for (query, space) in queries.iter().zip(spaces) {
        let neighbors = top_k_neighbors(query, space, config.k)?;
        let n_u = neighbors.iter().filter(|n| n.label == Class::Unhealthy).count();
        let n_h = neighbors.len() - n_u;
        provisional.push(ModelVote {
            label: provisional_from_counts(n_h, n_u, critical),
            n_healthy: n_h,
            n_unhealthy: n_u,
        });
    }
    let labels: Vec<Annotation> = provisional.iter().map(|v| v.label).collect();
    let value = match config.tie_break {
        TieBreak::StrictMajorityV1 => majority_vote(&labels),
    };
    Ok(InferredLabel { value, provisional })
}

/// Annotates one patch given its embedding under each model (one query per
/// space, in the same order as `spaces`).
pub fn annotate_patch(
    queries: &[Vec<f64>],
    spaces: &[EmbeddingSpace],
    config: &EnsembleConfig,
) -> Result<InferredLabel> {
    check_spaces(spaces, config)?;
    if queries.len() != spaces.len() {
        return Err(SafeError::MissingEmbedding {
            patch_id: "<query>".into(),
            model: queries.len(),
        });
    }
    annotate_unchecked(queries, spaces, config)
}

/// A patch to annotate with its embedding under every model.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub patch_id: String,
    pub embeddings: Vec<Vec<f64>>,
}

/// Annotates every query; the result is keyed (and therefore ordered) by
/// patch id.
pub fn annotate_all(
    queries: &[Query],
    spaces: &[EmbeddingSpace],
    config: &EnsembleConfig,
) -> Result<BTreeMap<String, InferredLabel>> {
    check_spaces(spaces, config)?;
    let mut out = BTreeMap::new();
    for q in queries {
        if q.embeddings.len() != spaces.len() {
            return Err(SafeError::MissingEmbedding {
                patch_id: q.patch_id.clone(),
                model: q.embeddings.len(),
            });
        }
        out.insert(q.patch_id.clone(), annotate_unchecked(&q.embeddings, spaces, config)?);
    }
    Ok(out)
}

/// Unhealthy confidence: the mean over models of `n_U / K`. Used only for
/// threshold-free metrics.
pub fn confidence_score(label: &InferredLabel, k: usize) -> f64 {
    if label.provisional.is_empty() || k == 0 {
        return 0.0;
    }
    let total: f64 = label
        .provisional
        .iter()
        .map(|v| v.n_unhealthy as f64 / k as f64)
        .sum();
    total / label.provisional.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Annotation::{Healthy as H, Undecided as X, Unhealthy as U};

    fn space(model_id: usize, rows: &[Vec<f64>], labels: &[Class]) -> EmbeddingSpace {
        let ids = (0..rows.len()).map(|i| format!("p{i:04}")).collect();
        EmbeddingSpace::new(model_id, Matrix::from_rows(rows).unwrap(), labels.to_vec(), ids).unwrap()
    }

    #[test]
    fn critical_values() {
        assert_eq!(critical_value(25, 0.75), 18.75);
        assert!((critical_value(7, 0.80) - 5.6).abs() < 1e-12);
        assert_eq!(critical_value(10, 0.5), 5.0);
    }

    #[test]
    fn provisional_branches() {
        let mix = |h: usize, u: usize| {
            let mut v = vec![Class::Healthy; h];
            v.extend(std::iter::repeat_n(Class::Unhealthy, u));
            v
        };
        assert_eq!(provisional_label(&mix(20, 5), 18.75), H);
        assert_eq!(provisional_label(&mix(12, 13), 18.75), X);
        assert_eq!(provisional_label(&mix(6, 19), 18.75), U);
        // Strict inequality at an integral critical value.
        assert_eq!(provisional_label(&mix(5, 5), 5.0), X);
    }

    #[test]
    fn majority_rules() {
        assert_eq!(majority_vote(&[H, H, U]), H);
        assert_eq!(majority_vote(&[H, U, X]), X);
        assert_eq!(majority_vote(&[U, U, U]), U);
        assert_eq!(majority_vote(&[H, H, X]), H);
        assert_eq!(majority_vote(&[H, U]), X);
        assert_eq!(majority_vote(&[X]), X);
    }

    #[test]
    fn top_k_exact_hit_and_full_ranking() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![-1.0, 0.2]];
        let s = space(0, &rows, &[Class::Healthy, Class::Unhealthy, Class::Healthy, Class::Unhealthy]);
        let nn = top_k_neighbors(&[0.0, 2.0], &s, 1).unwrap();
        assert_eq!(nn[0].patch_id, "p0001");
        assert_eq!(nn[0].distance, 0.0);

        let all = top_k_neighbors(&[0.3, 0.1], &s, 4).unwrap();
        let mut idx: Vec<_> = all.iter().map(|n| n.index).collect();
        assert!(all.windows(2).all(|w| w[0].distance <= w[1].distance));
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert!(top_k_neighbors(&[1.0, 0.0], &s, 5).is_err());
    }

    #[test]
    fn ties_break_by_patch_id() {
        let rows = vec![vec![1.0, 0.0]; 5];
        let ids = vec!["e", "b", "d", "a", "c"].into_iter().map(String::from).collect();
        let s = EmbeddingSpace::new(0, Matrix::from_rows(&rows).unwrap(), vec![Class::Healthy; 5], ids)
            .unwrap();
        let nn = top_k_neighbors(&[2.0, 0.0], &s, 3).unwrap();
        let got: Vec<_> = nn.iter().map(|n| n.patch_id).collect();
        assert_eq!(got, vec!["a", "b", "c"]);
    }

    #[test]
    fn unanimous_duplicate() {
        let q = vec![0.2, -0.4, 0.9];
        let spaces: Vec<_> = (0..3)
            .map(|m| {
                space(
                    m,
                    &[q.clone(), vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
                    &[Class::Healthy, Class::Unhealthy, Class::Unhealthy],
                )
            })
            .collect();
        let cfg = EnsembleConfig { k: 1, tau: 0.5, models: 3, tie_break: TieBreak::StrictMajorityV1 };
        let out = annotate_patch(&vec![q; 3], &spaces, &cfg).unwrap();
        assert_eq!(out.value, H);
        assert_eq!(out.provisional_labels(), vec![H, H, H]);
        assert_eq!(out.vote_counts(), [3, 0, 0]);
    }

    #[test]
    fn split_provisional_is_undecided() {
        let q = vec![1.0, 0.0];
        let near = vec![1.0, 0.01];
        let far = vec![-1.0, 0.0];
        // K = 2, tau = 0.5: need both neighbors to agree.
        let s_h = space(0, &[near.clone(), q.clone(), far.clone()], &[Class::Healthy, Class::Healthy, Class::Unhealthy]);
        let s_u = space(1, &[near.clone(), q.clone(), far.clone()], &[Class::Unhealthy, Class::Unhealthy, Class::Healthy]);
        let s_x = space(2, &[near, q.clone(), far], &[Class::Healthy, Class::Unhealthy, Class::Healthy]);
        let cfg = EnsembleConfig { k: 2, tau: 0.5, models: 3, tie_break: TieBreak::StrictMajorityV1 };
        let out = annotate_patch(&vec![q; 3], &[s_h, s_u, s_x], &cfg).unwrap();
        assert_eq!(out.provisional_labels(), vec![H, U, X]);
        assert_eq!(out.value, X);
    }

    #[test]
    fn annotate_all_wrapper() {
        let s = space(0, &[vec![1.0, 0.0], vec![0.0, 1.0]], &[Class::Healthy, Class::Unhealthy]);
        let cfg = EnsembleConfig { k: 1, tau: 0.5, models: 1, tie_break: TieBreak::StrictMajorityV1 };
        let spaces = [s];
        assert!(annotate_all(&[], &spaces, &cfg).unwrap().is_empty());

        let q = Query { patch_id: "z".into(), embeddings: vec![vec![0.1, 1.0]] };
        let out = annotate_all(std::slice::from_ref(&q), &spaces, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out["z"], annotate_patch(&q.embeddings, &spaces, &cfg).unwrap());

        let missing = Query { patch_id: "gap".into(), embeddings: vec![] };
        match annotate_all(&[missing], &spaces, &cfg) {
            Err(SafeError::MissingEmbedding { patch_id, .. }) => assert_eq!(patch_id, "gap"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn confidence_is_mean_unhealthy_fraction() {
        let mk = |counts: &[usize]| InferredLabel {
            value: X,
            provisional: counts
                .iter()
                .map(|&u| ModelVote { label: X, n_healthy: 10 - u, n_unhealthy: u })
                .collect(),
        };
        assert_eq!(confidence_score(&mk(&[10, 10, 10]), 10), 1.0);
        assert_eq!(confidence_score(&mk(&[0, 0]), 10), 0.0);
        assert!((confidence_score(&mk(&[5, 7, 9]), 10) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let ok = EnsembleConfig::default();
        assert!(ok.validate().is_ok());
        assert!(EnsembleConfig { tau: 0.4, ..ok }.validate().is_err());
        assert!(EnsembleConfig { tau: 1.01, ..ok }.validate().is_err());
        assert!(EnsembleConfig { k: 0, ..ok }.validate().is_err());
        let json = serde_json::to_string(&ok).unwrap();
        assert!(json.contains("strict-majority-v1"));
        assert_eq!(serde_json::from_str::<EnsembleConfig>(&json).unwrap(), ok);
    }
}
