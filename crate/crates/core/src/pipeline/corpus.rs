//! Extracted patches of a whole dataset.

use crate::error::Result;
use crate::labels::{Class, ImageLabel, PrelimLabel};
use crate::patch_grid::{extract_patches, Footprint, PatchRecord, Region};

use super::manifest::{DatasetManifest, LoadedImage};
use super::split::Split;

#[derive(Debug, Clone)]
pub struct CorpusPatch {
    pub record: PatchRecord,
    /// Class according to the truth mask, when the dataset provides one.
    pub truth: Option<Class>,
}

impl CorpusPatch {
    pub fn patch_id(&self) -> String {
        self.record.patch_id()
    }

    /// Reference class for scoring: the truth when known, else the
    /// preliminary label.
    pub fn reference(&self) -> Option<Class> {
        self.truth.or(self.record.prelim_label.class())
    }

    pub fn is_labeled(&self) -> bool {
        self.record.prelim_label != PrelimLabel::Unlabeled
    }
}

#[derive(Debug, Clone)]
pub struct CorpusImage {
    pub id: String,
    pub label: ImageLabel,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patches: Vec<CorpusPatch>,
    pub discarded: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub patch_size: usize,
    pub images: Vec<CorpusImage>,
}

fn truth_class(image: &LoadedImage, fp: &Footprint) -> Option<Class> {
    match (&image.truth_mask, image.image.label) {
        (Some(mask), _) => {
            let region = Region::Mask {
                width: image.image.pixels.width(),
                height: image.image.pixels.height(),
                data: mask.clone(),
            };
            Some(if region.intersects(fp) { Class::Unhealthy } else { Class::Healthy })
        }
        (None, ImageLabel::NoDr) => Some(Class::Healthy),
        (None, ImageLabel::Dr) => None,
    }
}

impl Corpus {
    pub fn from_images(images: impl IntoIterator<Item = LoadedImage>, patch_size: usize) -> Result<Self> {
        let mut out = Vec::new();
        for img in images {
            let ex = extract_patches(&img.image, &img.annotations, patch_size)?;
            let patches = ex
                .patches
                .into_iter()
                .map(|record| CorpusPatch {
                    truth: truth_class(&img, &record.footprint()),
                    record,
                })
                .collect();
            out.push(CorpusImage {
                id: img.image.id.clone(),
                label: img.image.label,
                grid_rows: ex.grid_rows,
                grid_cols: ex.grid_cols,
                patches,
                discarded: ex.discarded,
            });
        }
        Ok(Corpus {
            patch_size,
            images: out,
        })
    }

    pub fn from_manifest(manifest: &DatasetManifest, patch_size: usize) -> Result<Self> {
        let loaded = manifest
            .entries
            .iter()
            .map(|e| manifest.load_image(e))
            .collect::<Result<Vec<_>>>()?;
        Self::from_images(loaded, patch_size)
    }

    pub fn image_labels(&self) -> Vec<(String, ImageLabel)> {
        self.images.iter().map(|i| (i.id.clone(), i.label)).collect()
    }

    pub fn patches(&self) -> impl Iterator<Item = &CorpusPatch> {
        self.images.iter().flat_map(|i| &i.patches)
    }

    /// Labeled patches of the training (`test = false`) or test images.
    pub fn labeled<'a>(&'a self, split: &'a Split, test: bool) -> impl Iterator<Item = &'a CorpusPatch> + 'a {
        self.images
            .iter()
            .filter(move |i| split.is_test(&i.id) == test)
            .flat_map(|i| &i.patches)
            .filter(|p| p.is_labeled())
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &CorpusPatch> {
        self.patches().filter(|p| !p.is_labeled())
    }
}
