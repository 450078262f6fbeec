//! Deterministic mini-batch training with Adam, plus a finite-difference
//! gradient checker for the hand-written backward pass.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentationSpec};
use super::loss::{combined_loss, regularization, regularization_grad, scl_from_similarities, BCE_EPS};
use super::network::{sigmoid_of, to_input, Architecture, PenParams};
use crate::error::{Result, SafeError};
use crate::labels::Class;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const FD_STEP: f64 = 1e-6;

fn default_channels() -> Vec<usize> {
    vec![8, 16, 32]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub kappa: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l1_coeff: f64,
    pub l2_coeff: f64,
    pub d: usize,
    pub d_prime: usize,
    pub seed: u64,
    /// Conv block widths of the encoder.
    pub channels: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.3,
            kappa: 0.035,
            learning_rate: 1e-4,
            epochs: 150,
            batch_size: 128,
            l1_coeff: 1e-4,
            l2_coeff: 1e-4,
            d: 512,
            d_prime: 512,
            seed: 0,
            channels: default_channels(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SafeError::InvalidArgument(msg));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be non-negative, got {}", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad("batch size must be at least 2".into());
        }
        if self.l1_coeff < 0.0 || self.l2_coeff < 0.0 {
            return bad("regularization coefficients must be non-negative".into());
        }
        self.architecture(1).validate()
    }

    pub fn architecture(&self, input_size: usize) -> Architecture {
        Architecture {
            input_size,
            channels: self.channels.clone(),
            embed_dim: self.d,
            proj_dim: self.d_prime,
        }
    }
}

/// Which losses drive training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Contrastive loss on anchors and their augmented views plus
    /// `λ`-weighted cross-entropy on the anchors.
    Combined,
    /// Cross-entropy only (the downstream classifier).
    ClassifierOnly,
}

/// One mini-batch of encoder inputs (channel-major, in `[0, 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub anchors: Vec<Vec<f64>>,
    /// Augmented view of each anchor; may be empty for `ClassifierOnly`.
    pub views: Vec<Vec<f64>>,
    pub labels: Vec<Class>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub scl: f64,
    pub bce: f64,
    /// `scl + λ·bce` (or `bce` alone for the classifier objective).
    pub combined: f64,
    pub regularization: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Parameters plus optimizer moments; each step yields a new snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: PenParams,
    pub adam: AdamState,
}

impl TrainState {
    pub fn new(params: PenParams) -> Self {
        let n = params.len();
        TrainState {
            params,
            adam: AdamState::new(n),
        }
    }
}

fn check_batch(params: &PenParams, batch: &Batch, objective: Objective) -> Result<()> {
    let n = batch.anchors.len();
    if batch.labels.len() != n {
        return Err(SafeError::DimensionMismatch {
            expected: n,
            got: batch.labels.len(),
        });
    }
    if objective == Objective::Combined && batch.views.len() != n {
        return Err(SafeError::DimensionMismatch {
            expected: n,
            got: batch.views.len(),
        });
    }
    let len = params.architecture().input_len();
    if let Some(bad) = batch.anchors.iter().chain(&batch.views).find(|x| x.len() != len) {
        return Err(SafeError::DimensionMismatch {
            expected: len,
            got: bad.len(),
        });
    }
    if n == 0 {
        return Err(SafeError::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

/// Loss of `params` on `batch`, optionally accumulating its gradient.
pub(crate) fn evaluate(
    params: &PenParams,
    batch: &Batch,
    config: &TrainConfig,
    objective: Objective,
    mut grad: Option<&mut [f64]>,
) -> Result<LossBreakdown> {
    check_batch(params, batch, objective)?;
    let n = batch.anchors.len();
    let inputs: Vec<&Vec<f64>> = match objective {
        Objective::Combined => batch.anchors.iter().chain(&batch.views).collect(),
        Objective::ClassifierOnly => batch.anchors.iter().collect(),
    };
    let mut zs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in &inputs {
        let (z, cache) = params.encoder_forward(x);
        zs.push(z);
        caches.push(cache);
    }
    let want_grad = grad.is_some();
    let mut dzs: Vec<Vec<f64>> = if want_grad {
        zs.iter().map(|z| vec![0.0; z.len()]).collect()
    } else {
        Vec::new()
    };
    let mut scratch = if want_grad { vec![0.0; params.len()] } else { Vec::new() };

    let mut scl = 0.0;
    if objective == Objective::Combined {
        let m = zs.len();
        let raw: Vec<Vec<f64>> = zs.iter().map(|z| params.projection_raw(z)).collect();
        let norms: Vec<f64> = raw.iter().map(|u| u.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        if norms.iter().any(|&nm| nm == 0.0 || !nm.is_finite()) {
            return Err(SafeError::NonFinite("projection collapsed to a zero vector".into()));
        }
        let vs: Vec<Vec<f64>> = raw
            .iter()
            .zip(&norms)
            .map(|(u, &nm)| u.iter().map(|x| x / nm).collect())
            .collect();
        let mut sim = vec![0.0; m * m];
        for a in 0..m {
            for b in a + 1..m {
                let s: f64 = vs[a].iter().zip(&vs[b]).map(|(x, y)| x * y).sum();
                sim[a * m + b] = s;
                sim[b * m + a] = s;
            }
        }
        let labels: Vec<Class> = batch.labels.iter().chain(&batch.labels).copied().collect();
        let mut gsim = if want_grad { vec![0.0; m * m] } else { Vec::new() };
        scl = scl_from_similarities(&sim, &labels, config.kappa, want_grad.then_some(&mut gsim[..]));
        if want_grad {
            for a in 0..m {
                let mut dv = vec![0.0; vs[a].len()];
                for b in (0..m).filter(|&b| b != a) {
                    let g = gsim[a * m + b] + gsim[b * m + a];
                    if g != 0.0 {
                        for (d, &x) in dv.iter_mut().zip(&vs[b]) {
                            *d += g * x;
                        }
                    }
                }
                // Back through v = u / ‖u‖.
                let radial: f64 = dv.iter().zip(&vs[a]).map(|(d, v)| d * v).sum();
                let du: Vec<f64> = dv
                    .iter()
                    .zip(&vs[a])
                    .map(|(d, v)| (d - v * radial) / norms[a])
                    .collect();
                params.projection_backward(&zs[a], &du, &mut scratch, &mut dzs[a]);
            }
        }
    }

    let bce_weight = match objective {
        Objective::Combined => config.lambda,
        Objective::ClassifierOnly => 1.0,
    };
    let mut bce = 0.0;
    for i in 0..n {
        let y = batch.labels[i].as_target();
        let p = sigmoid_of(params.logit(&zs[i]));
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        bce -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        if want_grad && bce_weight != 0.0 && pc == p {
            params.classifier_backward(&zs[i], bce_weight * (p - y), &mut scratch, &mut dzs[i]);
        }
    }

    if want_grad {
        for (cache, dz) in caches.iter().zip(&dzs) {
            params.encoder_backward(cache, dz, &mut scratch);
        }
    }

    let mask = params.weight_mask();
    let reg = regularization(params.values(), Some(&mask), config.l1_coeff, config.l2_coeff);
    let combined = match objective {
        Objective::Combined => combined_loss(scl, bce, config.lambda)?,
        Objective::ClassifierOnly => bce,
    };
    let out = LossBreakdown {
        scl,
        bce,
        combined,
        regularization: reg,
        total: combined + reg,
    };
    if !out.total.is_finite() {
        return Err(SafeError::NonFinite(format!(
            "scl={} bce={} reg={}",
            out.scl, out.bce, out.regularization
        )));
    }
    if let Some(g) = grad.as_deref_mut() {
        regularization_grad(params.values(), &mask, config.l1_coeff, config.l2_coeff, &mut scratch);
        for (gi, si) in g.iter_mut().zip(&scratch) {
            *gi += si;
        }
    }
    Ok(out)
}

/// Loss and gradient of the full training objective (combined loss plus
/// regularization) with respect to every parameter.
pub fn loss_and_gradient(
    params: &PenParams,
    batch: &Batch,
    config: &TrainConfig,
    objective: Objective,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let loss = evaluate(params, batch, config, objective, Some(&mut grad))?;
    Ok((loss, grad))
}

fn step_with(
    state: &TrainState,
    batch: &Batch,
    config: &TrainConfig,
    objective: Objective,
) -> Result<(TrainState, LossBreakdown)> {
    let (loss, grad) = loss_and_gradient(&state.params, batch, config, objective)?;
    let mut next = state.clone();
    let adam = &mut next.adam;
    adam.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(adam.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(adam.t as i32);
    let lr = config.learning_rate;
    for (((w, g), m), v) in next
        .params
        .values_mut()
        .iter_mut()
        .zip(&grad)
        .zip(adam.m.iter_mut())
        .zip(adam.v.iter_mut())
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok((next, loss))
}

/// One Adam step on the combined objective. Returns the new snapshot and
/// the losses evaluated before the update.
pub fn train_step(state: &TrainState, batch: &Batch, config: &TrainConfig) -> Result<(TrainState, LossBreakdown)> {
    step_with(state, batch, config, Objective::Combined)
}

/// A training example: interleaved RGB pixels and a class.
#[derive(Debug, Clone, Copy)]
pub struct LabeledPatch<'a> {
    pub pixels: &'a [u8],
    pub label: Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Per-batch means.
    pub scl: f64,
    pub bce: f64,
    pub regularization: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedPen {
    pub params: PenParams,
    pub trace: Vec<EpochStats>,
}

/// Splits sample indices into mini-batches that each contain both classes
/// whenever the pool does. Each class is shuffled and dealt round-robin
/// across the batches; a class with fewer members than batches is reused
/// cyclically so no batch lacks it.
pub fn stratified_batches<R: Rng + ?Sized>(labels: &[Class], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    if labels.is_empty() {
        return Vec::new();
    }
    let n_batches = labels.len().div_ceil(batch_size.max(1));
    let mut batches = vec![Vec::new(); n_batches];
    for class in Class::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(rng);
        for (i, &s) in idx.iter().enumerate() {
            batches[i % n_batches].push(s);
        }
        for b in idx.len()..n_batches {
            batches[b].push(idx[b % idx.len()]);
        }
    }
    batches
}

/// Trains a network from scratch. With `epochs = 0` the freshly initialized
/// parameters are returned with an empty trace.
pub fn train_pen(
    samples: &[LabeledPatch<'_>],
    side: usize,
    config: &TrainConfig,
    augmentation: &AugmentationSpec,
    objective: Objective,
) -> Result<TrainedPen> {
    config.validate()?;
    augmentation.validate()?;
    let labels: Vec<Class> = samples.iter().map(|s| s.label).collect();
    if objective == Objective::Combined && Class::ALL.iter().any(|c| !labels.contains(c)) {
        return Err(SafeError::Validation(
            "contrastive training needs labeled patches from both classes".into(),
        ));
    }
    if let Some(bad) = samples.iter().find(|s| s.pixels.len() != side * side * 3) {
        return Err(SafeError::DimensionMismatch {
            expected: side * side * 3,
            got: bad.pixels.len(),
        });
    }
    let arch = config.architecture(side);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = TrainState::new(PenParams::init(&arch, &mut rng)?);
    let mut aug_rng = ChaCha8Rng::seed_from_u64(augmentation.seed ^ config.seed.rotate_left(17) ^ 0x5AFE);
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let batches = stratified_batches(&labels, config.batch_size, &mut rng);
        let mut sums = [0.0; 4];
        for idx in &batches {
            let anchors: Vec<Vec<f64>> = idx.iter().map(|&i| to_input(samples[i].pixels, side)).collect();
            let views = match objective {
                Objective::Combined => idx
                    .iter()
                    .map(|&i| to_input(&augment(samples[i].pixels, side, augmentation, &mut aug_rng), side))
                    .collect(),
                Objective::ClassifierOnly => Vec::new(),
            };
            let batch = Batch {
                anchors,
                views,
                labels: idx.iter().map(|&i| labels[i]).collect(),
            };
            let (next, loss) = step_with(&state, &batch, config, objective)?;
            state = next;
            for (s, v) in sums.iter_mut().zip([loss.scl, loss.bce, loss.regularization, loss.total]) {
                *s += v;
            }
        }
        let nb = batches.len().max(1) as f64;
        trace.push(EpochStats {
            epoch,
            scl: sums[0] / nb,
            bce: sums[1] / nb,
            regularization: sums[2] / nb,
            total: sums[3] / nb,
        });
    }
    Ok(TrainedPen {
        params: state.params,
        trace,
    })
}

/// Largest relative discrepancy `|g_a − g_n| / max(1, |g_a|, |g_n|)` between
/// the analytic gradient and central finite differences of the combined
/// objective plus regularization. The step is small because the loss is
/// sharply curved at low temperatures.
pub fn grad_check(params: &PenParams, batch: &Batch, config: &TrainConfig) -> Result<f64> {
    if params.len() > 5000 {
        return Err(SafeError::InvalidArgument(format!(
            "gradient check is meant for small networks; this one has {} parameters",
            params.len()
        )));
    }
    let (_, analytic) = loss_and_gradient(params, batch, config, Objective::Combined)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let w = params.values()[i];
        probe.values_mut()[i] = w + FD_STEP;
        let plus = evaluate(&probe, batch, config, Objective::Combined, None)?.total;
        probe.values_mut()[i] = w - FD_STEP;
        let minus = evaluate(&probe, batch, config, Objective::Combined, None)?.total;
        probe.values_mut()[i] = w;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            d: 16,
            d_prime: 8,
            channels: vec![4, 4, 6],
            batch_size: 8,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, side: usize) -> Batch {
        let len = 3 * side * side;
        let mut gen = || (0..len).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
        let anchors: Vec<_> = (0..n).map(|_| gen()).collect();
        let views: Vec<_> = (0..n).map(|_| gen()).collect();
        let labels = (0..n)
            .map(|i| if i % 3 == 0 { Class::Unhealthy } else { Class::Healthy })
            .collect();
        Batch { anchors, views, labels }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for lambda in [0.0, 0.3, 1.0] {
            let cfg = tiny_config(lambda);
            let p = PenParams::init(&cfg.architecture(8), &mut rng).unwrap();
            let batch = random_batch(&mut rng, 6, 8);
            let err = grad_check(&p, &batch, &cfg).unwrap();
            assert!(err <= 1e-4, "lambda {lambda}: {err}");
            let slow = TrainConfig { learning_rate: 0.0, ..cfg.clone() };
            assert_eq!(grad_check(&p, &batch, &slow).unwrap(), err);
        }
    }

    #[test]
    fn classifier_objective_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = tiny_config(0.3);
        let p = PenParams::init(&cfg.architecture(8), &mut rng).unwrap();
        let mut batch = random_batch(&mut rng, 5, 8);
        batch.views.clear();
        let (_, g) = loss_and_gradient(&p, &batch, &cfg, Objective::ClassifierOnly).unwrap();
        let mut probe = p.clone();
        for i in (0..p.len()).step_by(7) {
            let w = p.values()[i];
            probe.values_mut()[i] = w + FD_STEP;
            let a = evaluate(&probe, &batch, &cfg, Objective::ClassifierOnly, None).unwrap().total;
            probe.values_mut()[i] = w - FD_STEP;
            let b = evaluate(&probe, &batch, &cfg, Objective::ClassifierOnly, None).unwrap().total;
            probe.values_mut()[i] = w;
            let num = (a - b) / (2.0 * FD_STEP);
            assert!((num - g[i]).abs() / 1.0f64.max(g[i].abs()) < 1e-5);
        }
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = TrainConfig { learning_rate: 0.0, ..tiny_config(0.3) };
        let state = TrainState::new(PenParams::init(&cfg.architecture(8), &mut rng).unwrap());
        let batch = random_batch(&mut rng, 6, 8);
        let (next, _) = train_step(&state, &batch, &cfg).unwrap();
        assert_eq!(next.params, state.params);
        assert_eq!(next.adam.steps(), 1);
    }

    #[test]
    fn small_step_decreases_loss_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = TrainConfig { learning_rate: 1e-5, ..tiny_config(0.3) };
        let state = TrainState::new(PenParams::init(&cfg.architecture(8), &mut rng).unwrap());
        let batch = random_batch(&mut rng, 6, 8);
        let (next, before) = train_step(&state, &batch, &cfg).unwrap();
        let after = evaluate(&next.params, &batch, &cfg, Objective::Combined, None).unwrap();
        assert!(after.total <= before.total + 1e-12, "{} -> {}", before.total, after.total);
        let (again, _) = train_step(&state, &batch, &cfg).unwrap();
        assert_eq!(again, next);
    }

    #[test]
    fn stratified_batches_cover_both_classes() {
        let labels: Vec<Class> = (0..50)
            .map(|i| if i < 4 { Class::Unhealthy } else { Class::Healthy })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = stratified_batches(&labels, 8, &mut rng);
        assert_eq!(batches.len(), 7);
        for b in &batches {
            assert!(b.iter().any(|&i| labels[i] == Class::Unhealthy));
            assert!(b.iter().any(|&i| labels[i] == Class::Healthy));
        }
        let mut seen: Vec<usize> = batches.concat();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 50);
    }

    fn blob_patches(n: usize, side: usize, seed: u64) -> Vec<(Vec<u8>, Class)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let class = if i % 2 == 0 { Class::Healthy } else { Class::Unhealthy };
                let base: [f64; 3] = match class {
                    Class::Healthy => [160.0, 60.0, 40.0],
                    Class::Unhealthy => [230.0, 220.0, 60.0],
                };
                let px = (0..side * side)
                    .flat_map(|_| base.map(|b| (b + rng.random_range(-30.0..30.0)).clamp(0.0, 255.0) as u8))
                    .collect();
                (px, class)
            })
            .collect()
    }

    #[test]
    fn training_reduces_loss_and_repeats_exactly() {
        let data = blob_patches(24, 8, 1);
        let samples: Vec<_> = data.iter().map(|(p, c)| LabeledPatch { pixels: p, label: *c }).collect();
        let cfg = TrainConfig { epochs: 30, kappa: 0.1, ..tiny_config(0.3) };
        let aug = AugmentationSpec::geometric(2);
        let a = train_pen(&samples, 8, &cfg, &aug, Objective::Combined).unwrap();
        let b = train_pen(&samples, 8, &cfg, &aug, Objective::Combined).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
        let first: f64 = a.trace[..3].iter().map(|e| e.total).sum::<f64>() / 3.0;
        let last: f64 = a.trace[27..].iter().map(|e| e.total).sum::<f64>() / 3.0;
        assert!(last < first, "{first} -> {last}");

        let none = train_pen(&samples, 8, &TrainConfig { epochs: 0, ..cfg.clone() }, &aug, Objective::Combined).unwrap();
        assert!(none.trace.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        assert_eq!(none.params, PenParams::init(&cfg.architecture(8), &mut rng).unwrap());
    }

    #[test]
    fn single_class_pool_is_rejected() {
        let data = blob_patches(6, 8, 2);
        let samples: Vec<_> = data
            .iter()
            .map(|(p, _)| LabeledPatch { pixels: p, label: Class::Healthy })
            .collect();
        let cfg = TrainConfig { epochs: 1, ..tiny_config(0.3) };
        assert!(matches!(
            train_pen(&samples, 8, &cfg, &AugmentationSpec::none(), Objective::Combined),
            Err(SafeError::Validation(_))
        ));
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.d, c.d_prime), (150, 128, 512, 512));
        assert_eq!((c.kappa, c.lambda, c.learning_rate), (0.035, 0.3, 1e-4));
        assert!(c.validate().is_ok());
        assert!(TrainConfig { lambda: 1.2, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { d_prime: 600, ..c.clone() }.validate().is_err());
        assert!(TrainConfig { kappa: 0.0, ..c }.validate().is_err());
    }
}
