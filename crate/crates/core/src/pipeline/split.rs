//! Image-level train/test splits and patch-level fold planning.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SafeError};
use crate::labels::{Class, ImageLabel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl Split {
    pub fn is_test(&self, image_id: &str) -> bool {
        self.test.contains(image_id)
    }
}

/// Splits images (not patches) so that each image label keeps its share of
/// the test set to within one image.
pub fn stratified_split(images: &[(String, ImageLabel)], test_fraction: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(SafeError::InvalidArgument(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: BTreeSet::new(),
        test: BTreeSet::new(),
    };
    for label in [ImageLabel::NoDr, ImageLabel::Dr] {
        let mut ids: Vec<&String> = images.iter().filter(|(_, l)| *l == label).map(|(id, _)| id).collect();
        if ids.is_empty() {
            return Err(SafeError::Validation(format!("no {label:?} images to split")));
        }
        ids.sort();
        ids.shuffle(&mut rng);
        let n_test = (ids.len() as f64 * test_fraction).round() as usize;
        for (i, id) in ids.into_iter().enumerate() {
            if i < n_test {
                split.test.insert(id.clone());
            } else {
                split.train.insert(id.clone());
            }
        }
    }
    Ok(split)
}

/// Fold assignment of the labeled training patches and the folds each
/// ensemble member trains on: model `m` holds out fold `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    /// Fold of each input patch, in input order.
    pub fold_of: Vec<usize>,
    pub model_folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    /// Indices of the patches model `m` trains on.
    pub fn training_indices(&self, m: usize) -> Vec<usize> {
        let folds = &self.model_folds[m];
        (0..self.fold_of.len())
            .filter(|&i| folds.contains(&self.fold_of[i]))
            .collect()
    }
}

pub fn make_folds(labels: &[Class], n_folds: usize, models: usize, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 || models == 0 || models > n_folds {
        return Err(SafeError::InvalidArgument(format!(
            "need 2 <= folds and 1 <= models <= folds, got {n_folds} folds and {models} models"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    for class in Class::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold_of[i] = j % n_folds;
        }
    }
    let model_folds = (0..models)
        .map(|m| (0..n_folds).filter(|&f| f != m).collect())
        .collect();
    Ok(FoldPlan {
        n_folds,
        fold_of,
        model_folds,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n_nodr: usize, n_dr: usize) -> Vec<(String, ImageLabel)> {
        (0..n_nodr)
            .map(|i| (format!("n{i:03}"), ImageLabel::NoDr))
            .chain((0..n_dr).map(|i| (format!("d{i:03}"), ImageLabel::Dr)))
            .collect()
    }

    #[test]
    fn eighty_twenty_per_class() {
        let imgs = images(50, 50);
        let s = stratified_split(&imgs, 0.2, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
        assert_eq!(s.test.iter().filter(|id| id.starts_with('n')).count(), 10);
        assert!(s.train.is_disjoint(&s.test));
        assert_eq!(s, stratified_split(&imgs, 0.2, 7).unwrap());
        assert_ne!(s, stratified_split(&imgs, 0.2, 8).unwrap());
        assert!(stratified_split(&imgs, 0.0, 7).unwrap().test.is_empty());
        assert!(stratified_split(&images(5, 0), 0.2, 7).is_err());
    }

    #[test]
    fn folds_are_stratified_and_leave_one_out() {
        let labels: Vec<Class> = (0..103)
            .map(|i| if i % 4 == 0 { Class::Unhealthy } else { Class::Healthy })
            .collect();
        let plan = make_folds(&labels, 4, 3, 1).unwrap();
        for class in Class::ALL {
            let mut sizes = [0usize; 4];
            for (i, &f) in plan.fold_of.iter().enumerate() {
                if labels[i] == class {
                    sizes[f] += 1;
                }
            }
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        assert_eq!(plan.model_folds, vec![vec![1, 2, 3], vec![0, 2, 3], vec![0, 1, 3]]);
        assert_eq!(plan, make_folds(&labels, 4, 3, 1).unwrap());

        let two = make_folds(&labels, 2, 2, 3).unwrap();
        let (a, b) = (two.training_indices(0), two.training_indices(1));
        assert_eq!(a.len() + b.len(), labels.len());
        assert!(a.iter().all(|i| !b.contains(i)));

        assert!(make_folds(&labels, 1, 1, 0).is_err());
        assert!(make_folds(&labels, 3, 4, 0).is_err());
    }
}
