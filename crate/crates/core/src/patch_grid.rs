//! Tiling images into non-overlapping patches and preliminary labeling.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SafeError};
use crate::labels::{ImageLabel, PrelimLabel};
use crate::raster::RgbImage;

/// Patches whose black-pixel fraction exceeds this are discarded.
pub const MAX_BLACK_FRACTION: f64 = 0.90;
pub const DEFAULT_PATCH_SIZE: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct FundusImage {
    pub id: String,
    pub pixels: RgbImage,
    pub label: ImageLabel,
}

/// A lesion region in image pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// Half-open box: rows `y0..y1`, columns `x0..x1`.
    Box { x0: usize, y0: usize, x1: usize, y1: usize },
    /// Binary mask covering the whole (unpadded) image.
    Mask {
        width: usize,
        height: usize,
        data: Vec<bool>,
    },
}

impl Region {
    fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        match *self {
            Region::Box { x0, y0, x1, y1 } => {
                if x0 >= x1 || y0 >= y1 || x1 > width || y1 > height {
                    return Err(SafeError::Validation(format!(
                        "box ({x0},{y0})-({x1},{y1}) is empty or outside a {width}x{height} image"
                    )));
                }
            }
            Region::Mask {
                width: w,
                height: h,
                ref data,
            } => {
                if w != width || h != height || data.len() != w * h {
                    return Err(SafeError::Validation(format!(
                        "mask {w}x{h} does not match a {width}x{height} image"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether any region pixel falls inside the given footprint.
    pub fn intersects(&self, fp: &Footprint) -> bool {
        match *self {
            Region::Box { x0, y0, x1, y1 } => {
                x0 < fp.col_end() && fp.col0 < x1 && y0 < fp.row_end() && fp.row0 < y1
            }
            Region::Mask {
                width,
                height,
                ref data,
            } => {
                let r_end = fp.row_end().min(height);
                let c_end = fp.col_end().min(width);
                fp.col0 < c_end
                    && (fp.row0..r_end)
                        .any(|r| data[r * width + fp.col0..r * width + c_end].iter().any(|&b| b))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LesionAnnotationSet {
    pub image_id: String,
    pub regions: Vec<Region>,
}

impl LesionAnnotationSet {
    pub fn empty(image_id: impl Into<String>) -> Self {
        LesionAnnotationSet {
            image_id: image_id.into(),
            regions: Vec::new(),
        }
    }

    pub fn validate(&self, img: &FundusImage) -> Result<()> {
        if img.label == ImageLabel::NoDr && !self.regions.is_empty() {
            return Err(SafeError::Validation(format!(
                "image {} is NoDR but carries {} lesion regions",
                img.id,
                self.regions.len()
            )));
        }
        for region in &self.regions {
            region.check_bounds(img.pixels.width(), img.pixels.height())?;
        }
        Ok(())
    }
}

/// Square pixel area covered by one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
}

impl Footprint {
    pub fn row_end(&self) -> usize {
        self.row0 + self.size
    }

    pub fn col_end(&self) -> usize {
        self.col0 + self.size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub image_id: String,
    pub grid_row: usize,
    pub grid_col: usize,
    pub size: usize,
    /// `size × size × 3` interleaved RGB.
    pub pixels: Vec<u8>,
    pub prelim_label: PrelimLabel,
}

impl PatchRecord {
    pub fn footprint(&self) -> Footprint {
        Footprint {
            row0: self.grid_row * self.size,
            col0: self.grid_col * self.size,
            size: self.size,
        }
    }

    /// Stable identifier, ordered by image then grid position.
    pub fn patch_id(&self) -> String {
        patch_id(&self.image_id, self.grid_row, self.grid_col)
    }
}

pub fn patch_id(image_id: &str, row: usize, col: usize) -> String {
    format!("{image_id}/r{row:03}c{col:03}")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatchSets {
    pub labeled: Vec<PatchRecord>,
    pub unlabeled: Vec<PatchRecord>,
}

/// Pads bottom and right with black so both dimensions are multiples of
/// `patch_size`. Original pixels stay at offset (0, 0).
pub fn pad_image(img: &FundusImage, patch_size: usize) -> Result<FundusImage> {
    if patch_size == 0 {
        return Err(SafeError::InvalidArgument("patch size must be positive".into()));
    }
    let (w, h) = (img.pixels.width(), img.pixels.height());
    let pw = w.div_ceil(patch_size) * patch_size;
    let ph = h.div_ceil(patch_size) * patch_size;
    if pw == w && ph == h {
        return Ok(img.clone());
    }
    let mut out = RgbImage::black(pw, ph);
    for r in 0..h {
        out.row_bytes_mut(r)[..w * 3].copy_from_slice(img.pixels.row_bytes(r));
    }
    Ok(FundusImage {
        id: img.id.clone(),
        pixels: out,
        label: img.label,
    })
}

/// Splits an image whose sides are multiples of `patch_size` into patches in
/// row-major grid order. Every patch starts out `Unlabeled`.
pub fn partition_image(img: &FundusImage, patch_size: usize) -> Result<Vec<PatchRecord>> {
    let (w, h) = (img.pixels.width(), img.pixels.height());
    if patch_size == 0 || w % patch_size != 0 || h % patch_size != 0 {
        return Err(SafeError::Precondition(format!(
            "{w}x{h} image is not divisible into {patch_size}-pixel patches; pad it first"
        )));
    }
    let (rows, cols) = (h / patch_size, w / patch_size);
    let mut out = Vec::with_capacity(rows * cols);
    for gr in 0..rows {
        for gc in 0..cols {
            let mut pixels = Vec::with_capacity(patch_size * patch_size * 3);
            for r in gr * patch_size..(gr + 1) * patch_size {
                let row = img.pixels.row_bytes(r);
                pixels.extend_from_slice(&row[gc * patch_size * 3..(gc + 1) * patch_size * 3]);
            }
            out.push(PatchRecord {
                image_id: img.id.clone(),
                grid_row: gr,
                grid_col: gc,
                size: patch_size,
                pixels,
                prelim_label: PrelimLabel::Unlabeled,
            });
        }
    }
    Ok(out)
}

/// Fraction of pixels with all three channels exactly zero.
pub fn black_fraction(patch: &PatchRecord) -> f64 {
    let n = patch.pixels.len() / 3;
    if n == 0 {
        return 0.0;
    }
    let black = patch
        .pixels
        .chunks_exact(3)
        .filter(|p| p[0] == 0 && p[1] == 0 && p[2] == 0)
        .count();
    black as f64 / n as f64
}

pub fn is_background(patch: &PatchRecord) -> bool {
    black_fraction(patch) > MAX_BLACK_FRACTION
}

pub fn assign_preliminary_label(
    patch: &PatchRecord,
    image_label: ImageLabel,
    annotations: &LesionAnnotationSet,
) -> PrelimLabel {
    match image_label {
        ImageLabel::NoDr => PrelimLabel::Healthy,
        ImageLabel::Dr => {
            let fp = patch.footprint();
            if annotations.regions.iter().any(|r| r.intersects(&fp)) {
                PrelimLabel::Unhealthy
            } else {
                PrelimLabel::Unlabeled
            }
        }
    }
}

pub fn build_patch_sets(patches: Vec<PatchRecord>) -> PatchSets {
    let (labeled, unlabeled) = patches
        .into_iter()
        .partition(|p| p.prelim_label != PrelimLabel::Unlabeled);
    PatchSets { labeled, unlabeled }
}

#[derive(Debug, Clone)]
pub struct ExtractedImage {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Retained (non-background) patches, labeled, in grid order.
    pub patches: Vec<PatchRecord>,
    pub discarded: Vec<(usize, usize)>,
}

/// Pad, partition, drop background patches, then label what remains.
pub fn extract_patches(
    img: &FundusImage,
    annotations: &LesionAnnotationSet,
    patch_size: usize,
) -> Result<ExtractedImage> {
    annotations.validate(img)?;
    let padded = pad_image(img, patch_size)?;
    let grid_rows = padded.pixels.height() / patch_size;
    let grid_cols = padded.pixels.width() / patch_size;
    let mut patches = Vec::new();
    let mut discarded = Vec::new();
    for mut patch in partition_image(&padded, patch_size)? {
        if is_background(&patch) {
            discarded.push((patch.grid_row, patch.grid_col));
            continue;
        }
        patch.prelim_label = assign_preliminary_label(&patch, img.label, annotations);
        patches.push(patch);
    }
    Ok(ExtractedImage {
        grid_rows,
        grid_cols,
        patches,
        discarded,
    })
}

/// Inverse of [`partition_image`]; cells without a patch stay black.
pub fn reassemble(patches: &[PatchRecord], grid_rows: usize, grid_cols: usize) -> Result<RgbImage> {
    let size = patches.first().map_or(1, |p| p.size);
    let mut out = RgbImage::black(grid_cols * size, grid_rows * size);
    for p in patches {
        if p.size != size || p.grid_row >= grid_rows || p.grid_col >= grid_cols {
            return Err(SafeError::InvalidArgument(format!(
                "patch {} does not fit a {grid_rows}x{grid_cols} grid of {size}-pixel cells",
                p.patch_id()
            )));
        }
        for r in 0..size {
            let row = out.row_bytes_mut(p.grid_row * size + r);
            row[p.grid_col * size * 3..(p.grid_col + 1) * size * 3]
                .copy_from_slice(&p.pixels[r * size * 3..(r + 1) * size * 3]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn image(w: usize, h: usize, label: ImageLabel) -> FundusImage {
        let data = (0..w * h * 3).map(|i| (i % 251) as u8 + 1).collect();
        FundusImage {
            id: "img".into(),
            pixels: RgbImage::new(w, h, data).unwrap(),
            label,
        }
    }

    fn patch_at(row: usize, col: usize, size: usize) -> PatchRecord {
        PatchRecord {
            image_id: "img".into(),
            grid_row: row,
            grid_col: col,
            size,
            pixels: vec![1; size * size * 3],
            prelim_label: PrelimLabel::Unlabeled,
        }
    }

    #[test]
    fn pad_to_multiples() {
        let img = image(1440, 960, ImageLabel::Dr);
        let padded = pad_image(&img, 128).unwrap();
        assert_eq!((padded.pixels.width(), padded.pixels.height()), (1536, 1024));
        assert_eq!(padded.pixels.pixel(959, 1439), img.pixels.pixel(959, 1439));
        assert_eq!(padded.pixels.pixel(960, 0), [0, 0, 0]);
        assert_eq!(padded.pixels.pixel(0, 1440), [0, 0, 0]);

        let square = image(1024, 1024, ImageLabel::NoDr);
        assert_eq!(pad_image(&square, 128).unwrap(), square);

        let dot = image(1, 1, ImageLabel::NoDr);
        let padded = pad_image(&dot, 128).unwrap();
        assert_eq!((padded.pixels.width(), padded.pixels.height()), (128, 128));
        assert_eq!(padded.pixels.pixel(0, 0), dot.pixels.pixel(0, 0));
        assert_eq!(padded.pixels.pixel(0, 1), [0, 0, 0]);
        assert!(pad_image(&dot, 0).is_err());
    }

    #[test]
    fn partition_grid_counts_and_coordinates() {
        let patches = partition_image(&image(1024, 1536, ImageLabel::Dr), 128).unwrap();
        assert_eq!(patches.len(), 96);
        assert_eq!((patches[95].grid_row, patches[95].grid_col), (11, 7));

        let one = partition_image(&image(128, 128, ImageLabel::Dr), 128).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!((one[0].grid_row, one[0].grid_col), (0, 0));

        // 256 rows x 384 cols
        let img = image(384, 256, ImageLabel::Dr);
        let patches = partition_image(&img, 128).unwrap();
        assert_eq!(patches.len(), 6);
        let p = patches.iter().find(|p| p.grid_row == 1 && p.grid_col == 2).unwrap();
        let fp = p.footprint();
        assert_eq!((fp.row0, fp.row_end() - 1, fp.col0, fp.col_end() - 1), (128, 255, 256, 383));
        assert_eq!(&p.pixels[..3], &img.pixels.pixel(128, 256));

        assert!(matches!(
            partition_image(&image(130, 128, ImageLabel::Dr), 128),
            Err(SafeError::Precondition(_))
        ));
    }

    #[test]
    fn black_fraction_boundary_is_strict() {
        let mut p = patch_at(0, 0, 10);
        assert_eq!(black_fraction(&p), 0.0);
        assert!(!is_background(&p));
        p.pixels[..90 * 3].fill(0);
        assert_eq!(black_fraction(&p), 0.9);
        assert!(!is_background(&p));
        p.pixels.fill(0);
        assert_eq!(black_fraction(&p), 1.0);
        assert!(is_background(&p));
        // A pixel with one zero channel is not black.
        let mut q = patch_at(0, 0, 1);
        q.pixels = vec![0, 0, 5];
        assert_eq!(black_fraction(&q), 0.0);
    }

    #[test]
    fn preliminary_labels() {
        let p = patch_at(1, 1, 4); // rows 4..8, cols 4..8
        let boxes = |x0, y0, x1, y1| LesionAnnotationSet {
            image_id: "img".into(),
            regions: vec![Region::Box { x0, y0, x1, y1 }],
        };
        assert_eq!(
            assign_preliminary_label(&p, ImageLabel::NoDr, &boxes(0, 0, 16, 16)),
            PrelimLabel::Healthy
        );
        // Single shared pixel at (7, 7).
        assert_eq!(
            assign_preliminary_label(&p, ImageLabel::Dr, &boxes(7, 7, 12, 12)),
            PrelimLabel::Unhealthy
        );
        // Touching edge without sharing a pixel.
        assert_eq!(
            assign_preliminary_label(&p, ImageLabel::Dr, &boxes(8, 0, 12, 12)),
            PrelimLabel::Unlabeled
        );
        assert_eq!(
            assign_preliminary_label(&p, ImageLabel::Dr, &LesionAnnotationSet::empty("img")),
            PrelimLabel::Unlabeled
        );

        let mut data = vec![false; 16 * 16];
        data[5 * 16 + 6] = true;
        let mask = LesionAnnotationSet {
            image_id: "img".into(),
            regions: vec![Region::Mask {
                width: 16,
                height: 16,
                data,
            }],
        };
        assert_eq!(assign_preliminary_label(&p, ImageLabel::Dr, &mask), PrelimLabel::Unhealthy);
        assert_eq!(
            assign_preliminary_label(&patch_at(0, 0, 4), ImageLabel::Dr, &mask),
            PrelimLabel::Unlabeled
        );
    }

    #[test]
    fn patch_sets_split_by_label() {
        let mut patches = Vec::new();
        for (i, label) in [
            PrelimLabel::Healthy,
            PrelimLabel::Healthy,
            PrelimLabel::Healthy,
            PrelimLabel::Unhealthy,
            PrelimLabel::Unhealthy,
        ]
        .into_iter()
        .chain(std::iter::repeat_n(PrelimLabel::Unlabeled, 4))
        .enumerate()
        {
            let mut p = patch_at(0, i, 2);
            p.prelim_label = label;
            patches.push(p);
        }
        let sets = build_patch_sets(patches);
        assert_eq!((sets.labeled.len(), sets.unlabeled.len()), (5, 4));

        let healthy: Vec<_> = (0..3)
            .map(|i| PatchRecord {
                prelim_label: PrelimLabel::Healthy,
                ..patch_at(0, i, 2)
            })
            .collect();
        assert!(build_patch_sets(healthy).unlabeled.is_empty());
    }

    #[test]
    fn annotation_validation() {
        let nodr = image(8, 8, ImageLabel::NoDr);
        let set = LesionAnnotationSet {
            image_id: "img".into(),
            regions: vec![Region::Box { x0: 0, y0: 0, x1: 2, y1: 2 }],
        };
        assert!(set.validate(&nodr).is_err());
        let dr = image(8, 8, ImageLabel::Dr);
        assert!(set.validate(&dr).is_ok());
        let outside = LesionAnnotationSet {
            image_id: "img".into(),
            regions: vec![Region::Box { x0: 4, y0: 4, x1: 9, y1: 6 }],
        };
        assert!(outside.validate(&dr).is_err());
    }

    #[test]
    fn extraction_filters_before_labeling() {
        // Left half black, right half textured: 4x4 grid of 2-pixel patches.
        let mut img = image(8, 8, ImageLabel::Dr);
        for r in 0..8 {
            img.pixels.row_bytes_mut(r)[..12].fill(0);
        }
        let ann = LesionAnnotationSet {
            image_id: "img".into(),
            regions: vec![Region::Box { x0: 0, y0: 0, x1: 5, y1: 2 }],
        };
        let ex = extract_patches(&img, &ann, 2).unwrap();
        assert_eq!(ex.discarded.len(), 8);
        assert_eq!(ex.patches.len(), 8);
        let unhealthy: Vec<_> = ex
            .patches
            .iter()
            .filter(|p| p.prelim_label == PrelimLabel::Unhealthy)
            .map(|p| (p.grid_row, p.grid_col))
            .collect();
        assert_eq!(unhealthy, vec![(0, 2)]);
    }

    proptest! {
        #[test]
        fn pad_partition_reassemble_is_exact(
            w in 1usize..40, h in 1usize..40, ps in 1usize..12, seed in any::<u64>(),
        ) {
            let data: Vec<u8> = (0..w * h * 3)
                .map(|i| ((i as u64).wrapping_mul(seed | 1) >> 7) as u8)
                .collect();
            let img = FundusImage { id: "p".into(), pixels: RgbImage::new(w, h, data).unwrap(), label: ImageLabel::Dr };
            let padded = pad_image(&img, ps).unwrap();
            let patches = partition_image(&padded, ps).unwrap();
            let rows = padded.pixels.height() / ps;
            let cols = padded.pixels.width() / ps;
            prop_assert_eq!(patches.len(), rows * cols);
            // Footprints tile the image without overlap.
            let mut covered = vec![0u8; padded.pixels.width() * padded.pixels.height()];
            for p in &patches {
                let fp = p.footprint();
                for r in fp.row0..fp.row_end() {
                    for c in fp.col0..fp.col_end() {
                        covered[r * padded.pixels.width() + c] += 1;
                    }
                }
            }
            prop_assert!(covered.iter().all(|&c| c == 1));
            prop_assert_eq!(reassemble(&patches, rows, cols).unwrap(), padded.pixels);
        }

        #[test]
        fn nodr_patches_are_always_healthy(row in 0usize..10, col in 0usize..10, x0 in 0usize..30, y0 in 0usize..30) {
            let p = patch_at(row, col, 3);
            let ann = LesionAnnotationSet {
                image_id: "img".into(),
                regions: vec![Region::Box { x0, y0, x1: x0 + 2, y1: y0 + 2 }],
            };
            prop_assert_eq!(assign_preliminary_label(&p, ImageLabel::NoDr, &ann), PrelimLabel::Healthy);
            prop_assert_ne!(assign_preliminary_label(&p, ImageLabel::Dr, &ann), PrelimLabel::Healthy);
        }
    }
}
