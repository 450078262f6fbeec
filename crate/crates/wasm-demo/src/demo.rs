use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safe_core::ensemble::{annotate_patch, EmbeddingSpace, EnsembleConfig};
use safe_core::numerics::Matrix;
use safe_core::patch_grid::extract_patches;
use safe_core::pipeline::synth::{render_image, truth_in_patch, SynthSpec};
use safe_core::{Annotation, Class, ImageLabel, PrelimLabel, Result, SafeError};
use wasm_bindgen::prelude::*;

/// Patch code for a tile dropped as background.
pub const DISCARDED: u8 = 3;

/// A synthetic image with its patch grid.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct PatchGrid {
    size: usize,
    patch: usize,
    rgba: Vec<u8>,
    codes: Vec<u8>,
    truth: Vec<u8>,
}

#[wasm_bindgen]
impl PatchGrid {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    #[wasm_bindgen(getter)]
    pub fn patch(&self) -> usize {
        self.patch
    }

    /// Image pixels, RGBA row-major.
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// Row-major preliminary label per grid cell: 0 Healthy, 1 Unhealthy,
    /// 2 Unlabeled, 3 discarded.
    #[wasm_bindgen(getter)]
    pub fn codes(&self) -> Vec<u8> {
        self.codes.clone()
    }

    /// 1 where the cell holds lesion pixels.
    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<u8> {
        self.truth.clone()
    }
}

fn prelim_code(p: PrelimLabel) -> u8 {
    match p {
        PrelimLabel::Healthy => 0,
        PrelimLabel::Unhealthy => 1,
        PrelimLabel::Unlabeled => 2,
    }
}

pub fn patch_grid(seed: u64, index: usize, dr: bool, spill: f64, missed_fraction: f64) -> Result<PatchGrid> {
    if !(0.0..=4.0).contains(&spill) || !(0.0..=1.0).contains(&missed_fraction) {
        return Err(SafeError::InvalidArgument("spill must lie in [0, 4] and missed fraction in [0, 1]".into()));
    }
    let spec = SynthSpec {
        seed,
        spill,
        missed_fraction,
        ..SynthSpec::default()
    };
    let label = if dr { ImageLabel::Dr } else { ImageLabel::NoDr };
    let img = render_image(&spec, label, index);
    let extracted = extract_patches(&img.fundus(), &img.annotations(), spec.patch_size)?;
    let (size, patch) = (spec.image_size, spec.patch_size);
    let grid = size / patch;
    let mut codes = vec![DISCARDED; grid * grid];
    let mut truth = vec![0; grid * grid];
    for p in &extracted.patches {
        let cell = p.grid_row * grid + p.grid_col;
        codes[cell] = prelim_code(p.prelim_label);
        truth[cell] = truth_in_patch(&img.truth_mask, size, size, p.grid_row, p.grid_col, patch) as u8;
    }
    let rgba = img.pixels.data().chunks(3).flat_map(|c| [c[0], c[1], c[2], 255]).collect();
    Ok(PatchGrid {
        size,
        patch,
        rgba,
        codes,
        truth,
    })
}

/// Half-width of the plane shown by the annotation map.
pub const EXTENT: f64 = 3.0;

/// Two Gaussian classes in the plane, seen by several models.
///
/// Each model observes the same points through its own jitter. Points are
/// lifted to `(x, y, 1)` so that cosine distance still separates positions
/// in the plane.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct ToySpaces {
    points: Vec<[f64; 2]>,
    labels: Vec<Class>,
    spaces: Vec<EmbeddingSpace>,
    seed: u64,
    noise: f64,
}

const CENTERS: [[f64; 2]; 2] = [[-1.0, -0.4], [1.0, 0.4]];
const SPREAD: f64 = 0.7;
const JITTER: f64 = 0.12;

fn lift(p: [f64; 2]) -> Vec<f64> {
    vec![p[0], p[1], 1.0]
}

fn sample(rng: &mut ChaCha8Rng, class: Class) -> [f64; 2] {
    let n = Normal::new(0.0, SPREAD).expect("positive spread");
    let c = CENTERS[class as usize];
    [c[0] + n.sample(rng), c[1] + n.sample(rng)]
}

pub fn toy_spaces(seed: u64, models: usize, per_class: usize, noise: f64) -> Result<ToySpaces> {
    if models == 0 || per_class == 0 || !(0.0..=0.5).contains(&noise) {
        return Err(SafeError::InvalidArgument(
            "need at least one model and point per class, and noise in [0, 0.5]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for class in [Class::Healthy, Class::Unhealthy] {
        for _ in 0..per_class {
            points.push(sample(&mut rng, class));
            let flip = rng.random::<f64>() < noise;
            labels.push(if flip { class.opposite() } else { class });
        }
    }
    let ids: Vec<String> = (0..points.len()).map(|i| format!("p{i:05}")).collect();
    let jitter = Normal::new(0.0, JITTER).expect("positive jitter");
    let spaces = (0..models)
        .map(|m| {
            let data = points
                .iter()
                .flat_map(|p| lift([p[0] + jitter.sample(&mut rng), p[1] + jitter.sample(&mut rng)]))
                .collect();
            EmbeddingSpace::new(m, Matrix::new(points.len(), 3, data)?, labels.clone(), ids.clone())
        })
        .collect::<Result<_>>()?;
    Ok(ToySpaces {
        points,
        labels,
        spaces,
        seed,
        noise,
    })
}

pub fn annotation_code(a: Annotation) -> u8 {
    match a {
        Annotation::Healthy => 0,
        Annotation::Unhealthy => 1,
        Annotation::Undecided => 2,
    }
}

impl ToySpaces {
    fn config(&self, k: usize, tau: f64) -> EnsembleConfig {
        EnsembleConfig {
            k,
            tau,
            models: self.spaces.len(),
            ..EnsembleConfig::default()
        }
    }

    fn annotate(&self, p: [f64; 2], config: &EnsembleConfig) -> Result<Annotation> {
        let q = lift(p);
        let queries = vec![q; self.spaces.len()];
        Ok(annotate_patch(&queries, &self.spaces, config)?.value)
    }

    pub fn annotation_map(&self, k: usize, tau: f64, resolution: usize) -> Result<Vec<u8>> {
        if resolution == 0 {
            return Err(SafeError::InvalidArgument("resolution must be positive".into()));
        }
        let config = self.config(k, tau);
        let step = 2.0 * EXTENT / resolution as f64;
        let mut out = Vec::with_capacity(resolution * resolution);
        for r in 0..resolution {
            for c in 0..resolution {
                let p = [-EXTENT + (c as f64 + 0.5) * step, EXTENT - (r as f64 + 0.5) * step];
                out.push(annotation_code(self.annotate(p, &config)?));
            }
        }
        Ok(out)
    }

    pub fn tau_sweep(&self, k: usize, taus: &[f64], queries: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9E37_79B9);
        let held_out: Vec<([f64; 2], Class)> = (0..queries)
            .map(|i| {
                let class = if i % 2 == 0 { Class::Healthy } else { Class::Unhealthy };
                (sample(&mut rng, class), class)
            })
            .collect();
        let mut out = Vec::with_capacity(2 * taus.len());
        for &tau in taus {
            let config = self.config(k, tau);
            let (mut decided, mut correct) = (0usize, 0usize);
            for &(p, class) in &held_out {
                if let Some(c) = self.annotate(p, &config)?.class() {
                    decided += 1;
                    correct += (c == class) as usize;
                }
            }
            let n = held_out.len().max(1) as f64;
            out.push(decided as f64 / n);
            out.push(correct as f64 / n);
        }
        Ok(out)
    }
}

#[wasm_bindgen]
impl ToySpaces {
    #[wasm_bindgen(getter)]
    pub fn models(&self) -> usize {
        self.spaces.len()
    }

    #[wasm_bindgen(getter)]
    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Point coordinates as `[x0, y0, x1, y1, ...]`.
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    /// Observed label per point: 0 Healthy, 1 Unhealthy.
    #[wasm_bindgen(getter)]
    pub fn labels(&self) -> Vec<u8> {
        self.labels.iter().map(|&c| c as u8).collect()
    }
}
