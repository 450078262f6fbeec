//! Evaluation instruments for an annotator that may abstain.
//!
//! Ground truth is always a decided class; predictions may be `Undecided`,
//! giving a 2×3 confusion matrix. Metrics that are undefined for the data at
//! hand (for instance recall of a class with no samples) are `None`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SafeError};
use crate::labels::{Annotation, Class};
use crate::numerics::{dot, euclidean, Matrix};

/// Rows: actual Healthy / Unhealthy. Columns: predicted Healthy / Unhealthy / Undecided.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtendedConfusionMatrix {
    pub counts: [[u64; 3]; 2],
}

const UNDECIDED_COL: usize = 2;

fn column(pred: Annotation) -> usize {
    match pred {
        Annotation::Healthy => 0,
        Annotation::Unhealthy => 1,
        Annotation::Undecided => UNDECIDED_COL,
    }
}

impl ExtendedConfusionMatrix {
    pub fn add(&mut self, actual: Class, predicted: Annotation) {
        self.counts[actual.index()][column(predicted)] += 1;
    }

    pub fn actual(&self, c: Class) -> u64 {
        self.counts[c.index()].iter().sum()
    }

    pub fn correct(&self, c: Class) -> u64 {
        self.counts[c.index()][c.index()]
    }

    pub fn wrong(&self, c: Class) -> u64 {
        self.counts[c.index()][c.opposite().index()]
    }

    pub fn undecided(&self, c: Class) -> u64 {
        self.counts[c.index()][UNDECIDED_COL]
    }

    pub fn predicted_as(&self, c: Class) -> u64 {
        self.counts[0][c.index()] + self.counts[1][c.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn decided(&self) -> u64 {
        self.predicted_as(Class::Healthy) + self.predicted_as(Class::Unhealthy)
    }
}

pub fn extended_confusion(actual: &[Class], predicted: &[Annotation]) -> Result<ExtendedConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(SafeError::DimensionMismatch {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    let mut cm = ExtendedConfusionMatrix::default();
    for (&a, &p) in actual.iter().zip(predicted) {
        cm.add(a, p);
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Fraction of samples that received a decided label.
pub fn decided_rate(cm: &ExtendedConfusionMatrix) -> Result<f64> {
    ratio(cm.decided(), cm.total())
        .ok_or_else(|| SafeError::InvalidArgument("decided rate of an empty sample".into()))
}

/// Fraction of actual class-`c` samples assigned the opposite decided class.
/// Abstentions stay in the denominator.
pub fn misclassification_rate(cm: &ExtendedConfusionMatrix, c: Class) -> Option<f64> {
    ratio(cm.wrong(c), cm.actual(c))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub pr: Option<f64>,
    pub re: Option<f64>,
    pub f1: Option<f64>,
    pub mr: Option<f64>,
    pub undecided_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: Option<f64>,
    pub bacc: Option<f64>,
    pub d_rate: Option<f64>,
    pub auprc: Option<f64>,
    pub healthy: ClassMetrics,
    pub unhealthy: ClassMetrics,
    pub confusion: ExtendedConfusionMatrix,
}

fn class_metrics(cm: &ExtendedConfusionMatrix, c: Class) -> ClassMetrics {
    let n = cm.actual(c);
    let re = ratio(cm.correct(c), n);
    let mr = misclassification_rate(cm, c);
    let pr = ratio(cm.correct(c), cm.predicted_as(c));
    let f1 = match (pr, re) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    // Taken as the complement of re + mr so the per-class identity
    // re + mr + undecided = 1 holds exactly in floating point.
    let undecided_fraction = re.zip(mr).map(|(r, m)| 1.0 - (r + m));
    ClassMetrics {
        pr,
        re,
        f1,
        mr,
        undecided_fraction,
    }
}

/// All confusion-derived metrics. `auprc` is left `None`; see [`auprc`].
pub fn core_metrics(cm: &ExtendedConfusionMatrix) -> MetricReport {
    let healthy = class_metrics(cm, Class::Healthy);
    let unhealthy = class_metrics(cm, Class::Unhealthy);
    let bacc = healthy.re.zip(unhealthy.re).map(|(a, b)| (a + b) / 2.0);
    MetricReport {
        acc: ratio(cm.correct(Class::Healthy) + cm.correct(Class::Unhealthy), cm.total()),
        bacc,
        d_rate: decided_rate(cm).ok(),
        auprc: None,
        healthy,
        unhealthy,
        confusion: *cm,
    }
}

impl MetricReport {
    pub fn class(&self, c: Class) -> &ClassMetrics {
        match c {
            Class::Healthy => &self.healthy,
            Class::Unhealthy => &self.unhealthy,
        }
    }

    /// Line-oriented `key=value` rendering; undefined metrics print `NA`.
    pub fn to_key_value(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let mut out = String::new();
        for (k, v) in [
            ("acc", self.acc),
            ("bacc", self.bacc),
            ("d_rate", self.d_rate),
            ("auprc", self.auprc),
        ] {
            let _ = writeln!(out, "{k}={}", fmt(v));
        }
        for (name, m) in [("healthy", &self.healthy), ("unhealthy", &self.unhealthy)] {
            for (k, v) in [
                ("pr", m.pr),
                ("re", m.re),
                ("f1", m.f1),
                ("mr", m.mr),
                ("undecided", m.undecided_fraction),
            ] {
                let _ = writeln!(out, "{name}.{k}={}", fmt(v));
            }
        }
        let c = &self.confusion.counts;
        let _ = writeln!(out, "confusion.healthy={},{},{}", c[0][0], c[0][1], c[0][2]);
        let _ = writeln!(out, "confusion.unhealthy={},{},{}", c[1][0], c[1][1], c[1][2]);
        out
    }
}

/// Area under the precision-recall curve with step interpolation (average
/// precision). `positive[i]` marks the positive class. `None` unless both
/// classes are present.
pub fn auprc(scores: &[f64], positive: &[bool]) -> Result<Option<f64>> {
    if scores.len() != positive.len() {
        return Err(SafeError::DimensionMismatch {
            expected: scores.len(),
            got: positive.len(),
        });
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(SafeError::InvalidArgument(format!("non-finite score {bad}")));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 || n_pos == positive.len() {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(Some(area))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaviesBouldin {
    pub value: f64,
    /// Set when two class centroids coincided and their separation was clamped.
    pub degenerate: bool,
}

const CENTROID_EPS: f64 = 1e-12;

/// Davies-Bouldin index with Euclidean centroid scatter and separation.
/// Labels are arbitrary cluster ids.
pub fn db_index(embeddings: &Matrix, labels: &[usize]) -> Result<DaviesBouldin> {
    if embeddings.rows() != labels.len() {
        return Err(SafeError::DimensionMismatch {
            expected: embeddings.rows(),
            got: labels.len(),
        });
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    if members.len() < 2 {
        return Err(SafeError::InvalidArgument(
            "Davies-Bouldin needs at least two non-empty clusters".into(),
        ));
    }
    let d = embeddings.cols();
    let mut centroids = Vec::with_capacity(members.len());
    let mut scatter = Vec::with_capacity(members.len());
    for idx in members.values() {
        let mut c = vec![0.0; d];
        for &i in idx {
            for (acc, v) in c.iter_mut().zip(embeddings.row(i)) {
                *acc += v;
            }
        }
        c.iter_mut().for_each(|v| *v /= idx.len() as f64);
        let s = idx.iter().map(|&i| euclidean(embeddings.row(i), &c)).sum::<f64>() / idx.len() as f64;
        centroids.push(c);
        scatter.push(s);
    }
    let k = centroids.len();
    let mut degenerate = false;
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in (0..k).filter(|&j| j != i) {
            let mut sep = euclidean(&centroids[i], &centroids[j]);
            if sep < CENTROID_EPS {
                sep = CENTROID_EPS;
                degenerate = true;
            }
            worst = worst.max((scatter[i] + scatter[j]) / sep);
        }
        total += worst;
    }
    Ok(DaviesBouldin {
        value: total / k as f64,
        degenerate,
    })
}

/// Exact 1-D Wasserstein-1 distance between two empirical samples with
/// uniform weights, as the integral of the absolute CDF difference.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut total = 0.0;
    let mut prev = xs[0].min(ys[0]);
    while i < xs.len() || j < ys.len() {
        let next = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let gap = next - prev;
        if gap > 0.0 {
            total += (i as f64 / na - j as f64 / nb).abs() * gap;
        }
        while i < xs.len() && xs[i] == next {
            i += 1;
        }
        while j < ys.len() && ys[j] == next {
            j += 1;
        }
        prev = next;
    }
    total
}

/// Mean over `projections` random unit directions of the 1-D Wasserstein-1
/// distance between the projected samples.
///
/// Directions are drawn from `ChaCha8Rng::seed_from_u64(seed)` as `d`
/// standard normals each, then normalized.
pub fn sliced_wasserstein(seen: &Matrix, unseen: &Matrix, projections: usize, seed: u64) -> Result<f64> {
    if seen.rows() == 0 || unseen.rows() == 0 {
        return Err(SafeError::InvalidArgument("sliced Wasserstein of an empty sample".into()));
    }
    if seen.cols() != unseen.cols() {
        return Err(SafeError::DimensionMismatch {
            expected: seen.cols(),
            got: unseen.cols(),
        });
    }
    if projections == 0 {
        return Err(SafeError::InvalidArgument("need at least one projection".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = seen.cols();
    let mut total = 0.0;
    for _ in 0..projections {
        let dir = random_direction(&mut rng, d);
        let pa: Vec<f64> = seen.iter_rows().map(|r| dot(r, &dir)).collect();
        let pb: Vec<f64> = unseen.iter_rows().map(|r| dot(r, &dir)).collect();
        total += wasserstein_1d(&pa, &pb);
    }
    Ok(total / projections as f64)
}

pub(crate) fn random_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingQualityReport {
    pub db_index: f64,
    pub db_degenerate: bool,
    pub wd_per_class: BTreeMap<Class, f64>,
}
