//! Synthetic fundus-like corpus for desk-scale experiments.
//!
//! Each image is a textured reddish disc on a black background with vessels
//! and a pale optic disc. DR images carry yellow lesion blobs. Expert
//! annotations are masks made by dilating each annotated lesion by a random
//! margin of up to `spill × patch_size` pixels, so coarse regions leak into
//! neighboring healthy tissue. A fraction of lesions is left unannotated.
//! The exact lesion pixels are written as a separate truth mask.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{write_manifest, LoadedImage, ManifestEntry};
use crate::error::{Result, SafeError};
use crate::labels::{ImageLabel, PrelimLabel};
use crate::patch_grid::{extract_patches, FundusImage, LesionAnnotationSet, Region};
use crate::raster::{write_mask_png, write_png, RgbImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_images: usize,
    pub dr_fraction: f64,
    pub image_size: usize,
    pub patch_size: usize,
    /// Inclusive range of lesions per DR image.
    pub lesions_per_image: [usize; 2],
    /// Range of lesion semi-axes in pixels.
    pub lesion_radius: [f64; 2],
    /// Maximum extra annotation width in patch widths: each annotated lesion
    /// is dilated by a margin drawn uniformly from `[0, spill × patch_size / 2]`.
    pub spill: f64,
    /// Keep every lesion inside a single patch cell so that no patch holds
    /// only a sliver of one.
    pub cell_aligned_lesions: bool,
    /// Probability that a lesion (other than the first) is left unannotated.
    pub missed_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_images: 200,
            dr_fraction: 0.5,
            image_size: 256,
            patch_size: 32,
            lesions_per_image: [2, 5],
            lesion_radius: [3.0, 7.0],
            spill: 1.0,
            cell_aligned_lesions: true,
            missed_fraction: 0.3,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SafeError::InvalidArgument(format!("synthetic spec: {m}")));
        if self.n_images < 2 || !(0.0 < self.dr_fraction && self.dr_fraction < 1.0) {
            return bad("need at least two images and a DR fraction strictly between 0 and 1");
        }
        if self.image_size < 32 || self.patch_size == 0 {
            return bad("image size must be at least 32 and patch size positive");
        }
        let [lo, hi] = self.lesions_per_image;
        if lo == 0 || lo > hi {
            return bad("lesion count range must be non-empty and start at 1 or more");
        }
        let [rlo, rhi] = self.lesion_radius;
        if !(rlo >= 1.0 && rlo <= rhi && rhi < self.image_size as f64 / 8.0)
            || (self.cell_aligned_lesions && 2.0 * rhi + 2.0 > self.patch_size as f64)
        {
            return bad("lesion radius range is invalid");
        }
        if !(self.spill >= 0.0 && (0.0..=1.0).contains(&self.missed_fraction)) {
            return bad("spill must be non-negative and missed fraction in [0, 1]");
        }
        Ok(())
    }

    pub fn n_dr(&self) -> usize {
        ((self.n_images as f64 * self.dr_fraction).round() as usize).clamp(1, self.n_images - 1)
    }
}

/// One rendered image with its weak annotation and exact lesion mask.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub id: String,
    pub label: ImageLabel,
    pub pixels: RgbImage,
    pub annotation_mask: Vec<bool>,
    pub truth_mask: Vec<bool>,
    pub lesions: usize,
    pub missed_lesions: usize,
}

impl SynthImage {
    pub fn fundus(&self) -> FundusImage {
        FundusImage {
            id: self.id.clone(),
            pixels: self.pixels.clone(),
            label: self.label,
        }
    }

    pub fn annotations(&self) -> LesionAnnotationSet {
        let regions = if self.label == ImageLabel::Dr {
            vec![Region::Mask {
                width: self.pixels.width(),
                height: self.pixels.height(),
                data: self.annotation_mask.clone(),
            }]
        } else {
            Vec::new()
        };
        LesionAnnotationSet {
            image_id: self.id.clone(),
            regions,
        }
    }
}

pub fn image_id(index: usize) -> String {
    format!("img_{index:04}")
}

/// Image labels in index order.
pub fn image_labels(spec: &SynthSpec) -> Vec<ImageLabel> {
    let n_dr = spec.n_dr();
    let mut labels: Vec<ImageLabel> = (0..spec.n_images)
        .map(|i| if i < n_dr { ImageLabel::Dr } else { ImageLabel::NoDr })
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    labels
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }

    fn pixels(&self, size: usize) -> Vec<(usize, usize)> {
        let r0 = (self.cy - self.ry).floor().max(0.0) as usize;
        let r1 = ((self.cy + self.ry).ceil() as usize).min(size - 1);
        let c0 = (self.cx - self.rx).floor().max(0.0) as usize;
        let c1 = ((self.cx + self.rx).ceil() as usize).min(size - 1);
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                if self.contains(c as f64, r as f64) {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

/// Marks every pixel within Chebyshev distance `margin` of `pixels`.
fn dilate_into(pixels: &[(usize, usize)], margin: usize, size: usize, mask: &mut [bool]) {
    let Some(&(r, c)) = pixels.first() else { return };
    let (mut r0, mut r1, mut c0, mut c1) = (r, r, c, c);
    for &(r, c) in pixels {
        r0 = r0.min(r);
        r1 = r1.max(r);
        c0 = c0.min(c);
        c1 = c1.max(c);
    }
    let (h, w) = (r1 - r0 + 1, c1 - c0 + 1);
    let mut local = vec![false; h * w];
    for &(r, c) in pixels {
        local[(r - r0) * w + (c - c0)] = true;
    }
    // A square structuring element is separable: dilate rows, then columns.
    let ow = w + 2 * margin;
    let mut rows = vec![false; h * ow];
    for y in 0..h {
        for x in 0..w {
            if local[y * w + x] {
                rows[y * ow + x..=y * ow + x + 2 * margin].fill(true);
            }
        }
    }
    for y in 0..h {
        for x in 0..ow {
            if !rows[y * ow + x] {
                continue;
            }
            for yy in y..=y + 2 * margin {
                let (gr, gc) = (r0 + yy, c0 + x);
                if gr >= margin && gc >= margin && gr - margin < size && gc - margin < size {
                    mask[(gr - margin) * size + gc - margin] = true;
                }
            }
        }
    }
}

/// Renders image `index` of the corpus. Each image has its own random stream,
/// so images can be rendered independently and in any order.
pub fn render_image(spec: &SynthSpec, label: ImageLabel, index: usize) -> SynthImage {
    let size = spec.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let c = (size as f64 - 1.0) / 2.0;
    let radius = 0.46 * size as f64;

    let base = [
        150.0 + rng.random_range(-12.0..12.0),
        62.0 + rng.random_range(-8.0..8.0),
        32.0 + rng.random_range(-6.0..6.0),
    ];
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = rng.random_range(0.02..0.08);
            [freq * theta.cos(), freq * theta.sin(), rng.random_range(0.0..std::f64::consts::TAU), rng.random_range(4.0..9.0)]
        })
        .collect();

    let od_side = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let optic = Ellipse {
        cx: c + od_side * radius * rng.random_range(0.35..0.55),
        cy: c + radius * rng.random_range(-0.15..0.15),
        rx: size as f64 * 0.07,
        ry: size as f64 * 0.08,
    };

    let mut vessel = vec![0.0f64; size * size];
    let step_noise = Normal::new(0.0, 0.09).expect("valid");
    for v in 0..5 {
        let mut angle = std::f64::consts::TAU * (v as f64 + rng.random::<f64>()) / 5.0;
        let (mut x, mut y) = (optic.cx, optic.cy);
        let steps = (radius * 1.6) as usize;
        for s in 0..steps {
            let width = 2.2 - 1.4 * s as f64 / steps as f64;
            let (ix0, iy0) = ((x - width).floor() as isize, (y - width).floor() as isize);
            for iy in iy0..=iy0 + (2.0 * width).ceil() as isize {
                for ix in ix0..=ix0 + (2.0 * width).ceil() as isize {
                    if ix < 0 || iy < 0 || ix >= size as isize || iy >= size as isize {
                        continue;
                    }
                    let d = ((ix as f64 - x).powi(2) + (iy as f64 - y).powi(2)).sqrt();
                    let k = (1.0 - d / width).clamp(0.0, 1.0);
                    let cell = &mut vessel[iy as usize * size + ix as usize];
                    *cell = cell.max(k);
                }
            }
            angle += step_noise.sample(&mut rng);
            x += angle.cos();
            y += angle.sin();
        }
    }

    let mut data = vec![0u8; size * size * 3];
    for r in 0..size {
        for col in 0..size {
            let (x, y) = (col as f64, r as f64);
            let rr = ((x - c).powi(2) + (y - c).powi(2)).sqrt() / radius;
            if rr > 1.0 {
                continue;
            }
            let field: f64 = waves.iter().map(|w| w[3] * (w[0] * x + w[1] * y + w[2]).sin()).sum();
            let shade = 1.0 - 0.35 * rr * rr;
            let mut px = [0.0; 3];
            for ch in 0..3 {
                let tint = [1.0, 0.5, 0.3][ch];
                px[ch] = base[ch] * shade + field * tint + rng.random_range(-6.0..6.0);
            }
            if optic.contains(x, y) {
                px = [235.0, 188.0, 150.0].map(|v| v + rng.random_range(-8.0..8.0));
            }
            let k = vessel[r * size + col];
            if k > 0.0 {
                for (ch, dark) in px.iter_mut().zip([0.62, 0.45, 0.5]) {
                    *ch *= 1.0 - k * (1.0 - dark);
                }
            }
            let i = (r * size + col) * 3;
            for ch in 0..3 {
                // Keep the disc interior strictly non-black.
                data[i + ch] = px[ch].round().clamp(if ch == 0 { 8.0 } else { 0.0 }, 255.0) as u8;
            }
        }
    }

    let mut truth_mask = vec![false; size * size];
    let mut annotation_mask = vec![false; size * size];
    let (mut lesions, mut missed) = (0, 0);
    if label == ImageLabel::Dr {
        let n = rng.random_range(spec.lesions_per_image[0]..=spec.lesions_per_image[1]);
        let mut placed = 0;
        let mut attempts = 0;
        while placed < n && attempts < 10_000 {
            attempts += 1;
            let rx = rng.random_range(spec.lesion_radius[0]..=spec.lesion_radius[1]);
            let ry = rng.random_range(spec.lesion_radius[0]..=spec.lesion_radius[1]);
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let rho = radius * 0.85 * rng.random::<f64>().sqrt();
            let (cx, cy) = (c + rho * t.cos(), c + rho * t.sin());
            if spec.cell_aligned_lesions {
                let p = spec.patch_size as f64;
                let inside = |v: f64, r: f64| {
                    let off = v - (v / p).floor() * p;
                    off - r >= 0.5 && off + r <= p - 1.5
                };
                if !inside(cx, rx) || !inside(cy, ry) {
                    continue;
                }
            }
            let e = Ellipse { cx, cy, rx, ry };
            let clearance = ((e.cx - optic.cx).powi(2) + (e.cy - optic.cy).powi(2)).sqrt();
            if clearance < optic.ry + rx.max(ry) + 3.0 {
                continue;
            }
            let pix = e.pixels(size);
            for &(r, col) in &pix {
                truth_mask[r * size + col] = true;
                let i = (r * size + col) * 3;
                let px = [240.0, 218.0, 78.0].map(|v: f64| v + rng.random_range(-10.0..10.0));
                for ch in 0..3 {
                    data[i + ch] = px[ch].round().clamp(0.0, 255.0) as u8;
                }
            }
            let annotated = placed == 0 || rng.random::<f64>() >= spec.missed_fraction;
            let max_margin = spec.spill * spec.patch_size as f64 / 2.0;
            let margin = if max_margin > 0.0 {
                rng.random_range(0.0..=max_margin).round() as usize
            } else {
                0
            };
            if annotated {
                dilate_into(&pix, margin, size, &mut annotation_mask);
            } else {
                missed += 1;
            }
            placed += 1;
        }
        lesions = placed;
    }

    SynthImage {
        id: image_id(index),
        label,
        pixels: RgbImage::new(size, size, data).expect("sized by construction"),
        annotation_mask,
        truth_mask,
        lesions,
        missed_lesions: missed,
    }
}

/// Renders the whole corpus in memory, in the form the loader produces.
pub fn render_corpus(spec: &SynthSpec) -> Result<Vec<LoadedImage>> {
    spec.validate()?;
    Ok(image_labels(spec)
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let img = render_image(spec, label, i);
            LoadedImage {
                image: img.fundus(),
                annotations: img.annotations(),
                truth_mask: (label == ImageLabel::Dr).then(|| img.truth_mask.clone()),
            }
        })
        .collect())
}

/// Patch and lesion bookkeeping for a generated corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub images: usize,
    pub dr_images: usize,
    pub lesions: usize,
    pub missed_lesions: usize,
    pub retained_patches: usize,
    pub prelim_healthy: usize,
    pub prelim_unhealthy: usize,
    pub unlabeled: usize,
    /// Preliminary Unhealthy patches containing no lesion pixel.
    pub noisy_unhealthy: usize,
    /// Unlabeled patches that do contain lesion pixels.
    pub missed_unhealthy: usize,
}

/// Whether any truth pixel falls inside the patch at grid `(row, col)`.
pub fn truth_in_patch(truth: &[bool], width: usize, height: usize, row: usize, col: usize, size: usize) -> bool {
    Region::Mask {
        width,
        height,
        data: truth.to_vec(),
    }
    .intersects(&crate::patch_grid::Footprint {
        row0: row * size,
        col0: col * size,
        size,
    })
}

fn tally(img: &SynthImage, patch_size: usize, summary: &mut SynthSummary) -> Result<()> {
    let extracted = extract_patches(&img.fundus(), &img.annotations(), patch_size)?;
    let (w, h) = (img.pixels.width(), img.pixels.height());
    for p in &extracted.patches {
        let truth = truth_in_patch(&img.truth_mask, w, h, p.grid_row, p.grid_col, patch_size);
        summary.retained_patches += 1;
        match p.prelim_label {
            PrelimLabel::Healthy => summary.prelim_healthy += 1,
            PrelimLabel::Unhealthy => {
                summary.prelim_unhealthy += 1;
                summary.noisy_unhealthy += usize::from(!truth);
            }
            PrelimLabel::Unlabeled => {
                summary.unlabeled += 1;
                summary.missed_unhealthy += usize::from(truth);
            }
        }
    }
    Ok(())
}

/// Renders the corpus under `out_dir` (`images/`, `annotations/`, `truth/`,
/// `manifest.jsonl`, `truth_summary.json`) and returns its bookkeeping.
pub fn gen_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<SynthSummary> {
    spec.validate()?;
    for sub in ["images", "annotations", "truth"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| SafeError::io(&d, e))?;
    }
    let mut entries = Vec::with_capacity(spec.n_images);
    let mut summary = SynthSummary {
        images: spec.n_images,
        ..SynthSummary::default()
    };
    for (i, label) in image_labels(spec).into_iter().enumerate() {
        let img = render_image(spec, label, i);
        let rel = |sub: &str| PathBuf::from(sub).join(format!("{}.png", img.id));
        write_png(&out_dir.join(rel("images")), &img.pixels)?;
        let mut entry = ManifestEntry {
            image_path: rel("images"),
            label,
            annotations: Vec::new(),
            truth_mask: None,
        };
        if label == ImageLabel::Dr {
            let size = spec.image_size;
            write_mask_png(&out_dir.join(rel("annotations")), size, size, &img.annotation_mask)?;
            write_mask_png(&out_dir.join(rel("truth")), size, size, &img.truth_mask)?;
            entry.annotations.push(rel("annotations"));
            entry.truth_mask = Some(rel("truth"));
            summary.dr_images += 1;
        }
        summary.lesions += img.lesions;
        summary.missed_lesions += img.missed_lesions;
        tally(&img, spec.patch_size, &mut summary)?;
        entries.push(entry);
    }
    write_manifest(&out_dir.join("manifest.jsonl"), &entries)?;
    let path = out_dir.join("truth_summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| SafeError::Format(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| SafeError::io(&path, e))?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(spill: f64, missed: f64) -> SynthSpec {
        SynthSpec {
            n_images: 12,
            image_size: 128,
            patch_size: 16,
            spill,
            missed_fraction: missed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn dilation_is_chebyshev() {
        let mut mask = vec![false; 100];
        dilate_into(&[(5, 5)], 2, 10, &mut mask);
        let set: Vec<usize> = (0..100).filter(|&i| mask[i]).collect();
        assert_eq!(set.len(), 25);
        assert!(mask[3 * 10 + 3] && mask[7 * 10 + 7] && !mask[2 * 10 + 5]);
        let mut edge = vec![false; 100];
        dilate_into(&[(0, 9)], 3, 10, &mut edge);
        assert_eq!(edge.iter().filter(|&&b| b).count(), 16);
    }

    #[test]
    fn zero_spill_labels_only_true_lesion_patches() {
        let spec = small(0.0, 0.0);
        let mut s = SynthSummary::default();
        for (i, l) in image_labels(&spec).into_iter().enumerate() {
            tally(&render_image(&spec, l, i), spec.patch_size, &mut s).unwrap();
        }
        assert!(s.prelim_unhealthy > 0);
        assert_eq!(s.noisy_unhealthy, 0);
        assert_eq!(s.missed_unhealthy, 0);
    }

    #[test]
    fn spill_produces_noisy_labels() {
        let spec = small(1.0, 0.3);
        let mut s = SynthSummary::default();
        for (i, l) in image_labels(&spec).into_iter().enumerate() {
            tally(&render_image(&spec, l, i), spec.patch_size, &mut s).unwrap();
        }
        assert!(s.noisy_unhealthy > 0);
        assert!(s.noisy_unhealthy < s.prelim_unhealthy);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = small(1.0, 0.3);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = gen_synthetic(&spec, a.path()).unwrap();
        let sb = gen_synthetic(&spec, b.path()).unwrap();
        assert_eq!(sa, sb);
        for rel in ["manifest.jsonl", "truth_summary.json", "images/img_0003.png"] {
            assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap());
        }
        let m = super::super::manifest::load_manifest(&a.path().join("manifest.jsonl")).unwrap();
        assert_eq!(m.entries.len(), 12);
        let loaded = m.load_image(&m.entries[0]).unwrap();
        let direct = render_image(&spec, m.entries[0].label, 0);
        assert_eq!(loaded.image.pixels, direct.pixels);
    }
}
