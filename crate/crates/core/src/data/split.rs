//! Dyad-granularity dataset splitting, stratified by the direction-i label.
//!
//! Splitting at clip granularity would leak near-duplicate clips of the same
//! pair across folds, so all clips of a dyad always travel together.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::seeding::derive_seed;

use super::{DataError, Dataset};

/// One cross-validation fold at dyad granularity.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Dataset,
    pub test: Dataset,
    /// Dyad ids of the test fold, for reproducing the split later.
    pub test_dyads: Vec<String>,
}

/// Per-class shuffled dyad indices dealt round-robin into K bins.
fn stratified_bins(
    dataset: &Dataset,
    k: usize,
    seed: u64,
    tag: &str,
) -> Result<Vec<Vec<usize>>, DataError> {
    let n_classes = dataset.schema.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (idx, dyad) in dataset.dyads.iter().enumerate() {
        by_class[dyad.label_i_to_j()].push(idx);
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(DataError::ClassTooSmall {
                class: dataset.schema.classes[class].clone(),
                dyads: members.len(),
                k,
            });
        }
    }
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, mut members) in by_class.into_iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, tag, class as u64));
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            bins[pos % k].push(idx);
        }
    }
    Ok(bins)
}

/// K disjoint, exhaustive (train, test) pairs over dyads.
pub fn kfold_split(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>, DataError> {
    if k < 2 {
        return Err(DataError::BadFoldCount(k));
    }
    let bins = stratified_bins(dataset, k, seed, "kfold")?;
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let mut test_idx = bins[fold].clone();
        test_idx.sort_unstable();
        let mut train_idx: Vec<usize> = (0..dataset.n_dyads())
            .filter(|i| !test_idx.contains(i))
            .collect();
        train_idx.sort_unstable();
        let test = dataset.subset(&test_idx);
        folds.push(FoldSplit {
            fold,
            test_dyads: test.dyads.iter().map(|d| d.dyad_id.clone()).collect(),
            train: dataset.subset(&train_idx),
            test,
        });
    }
    Ok(folds)
}

/// Splits off roughly `fraction` of dyads per class as a holdout set.
/// Returns `(remainder, holdout)`.
pub fn stratified_holdout(
    dataset: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::BadFraction(fraction));
    }
    let n_classes = dataset.schema.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (idx, dyad) in dataset.dyads.iter().enumerate() {
        by_class[dyad.label_i_to_j()].push(idx);
    }
    let mut held = Vec::new();
    let mut kept = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "holdout", class as u64));
        members.shuffle(&mut rng);
        // At least one held out per non-empty class, and at least one kept.
        let total = members.len();
        if total == 0 {
            continue;
        }
        let mut n_held = ((total as f64) * fraction).round() as usize;
        n_held = n_held.clamp(1, total.saturating_sub(1).max(1));
        held.extend_from_slice(&members[..n_held]);
        kept.extend_from_slice(&members[n_held..]);
    }
    held.sort_unstable();
    kept.sort_unstable();
    Ok((dataset.subset(&kept), dataset.subset(&held)))
}

#[cfg(test)]
mod tests {
    use super::super::{synth_generate, SynthConfig};
    use super::*;
    use std::collections::BTreeSet;

    fn dataset(classes: usize, per_class: usize) -> Dataset {
        let cfg = SynthConfig {
            feature_dim: classes.max(4),
            classes,
            dyads_per_class: per_class,
            clips_per_dyad: 2,
            noise: 0.0,
            ..SynthConfig::default()
        };
        synth_generate(&cfg, 3).unwrap()
    }

    #[test]
    fn nine_dyads_three_folds() {
        let ds = dataset(3, 3);
        let folds = kfold_split(&ds, 3, 1).unwrap();
        assert_eq!(folds.len(), 3);
        let mut seen = BTreeSet::new();
        for f in &folds {
            assert_eq!(f.test.n_dyads(), 3);
            assert_eq!(f.train.n_dyads(), 6);
            for id in &f.test_dyads {
                assert!(seen.insert(id.clone()), "fold test sets must be disjoint");
            }
        }
        assert_eq!(seen.len(), 9, "union of test folds covers every dyad");
    }

    #[test]
    fn no_dyad_in_both_train_and_test() {
        let ds = dataset(2, 7);
        for f in kfold_split(&ds, 3, 9).unwrap() {
            let train: BTreeSet<_> = f.train.dyads.iter().map(|d| &d.dyad_id).collect();
            for d in &f.test.dyads {
                assert!(!train.contains(&d.dyad_id));
            }
        }
    }

    #[test]
    fn same_seed_same_folds() {
        let ds = dataset(3, 5);
        let a = kfold_split(&ds, 3, 7).unwrap();
        let b = kfold_split(&ds, 3, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.test_dyads, y.test_dyads);
        }
    }

    #[test]
    fn stratification_within_one_dyad_of_global() {
        let ds = dataset(3, 8);
        let folds = kfold_split(&ds, 3, 11).unwrap();
        for f in &folds {
            let counts = f.test.class_dyad_counts();
            for &c in &counts {
                // 8 dyads per class over 3 folds: ideal 8/3 ≈ 2.67.
                assert!((c as f64 - 8.0 / 3.0).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn small_class_is_rejected_with_name() {
        let ds = dataset(2, 2);
        let err = kfold_split(&ds, 3, 1).unwrap_err();
        assert!(matches!(err, DataError::ClassTooSmall { k: 3, dyads: 2, .. }));
    }

    #[test]
    fn holdout_is_stratified_and_disjoint() {
        let ds = dataset(2, 10);
        let (rest, held) = stratified_holdout(&ds, 0.2, 5).unwrap();
        assert_eq!(held.n_dyads(), 4);
        assert_eq!(rest.n_dyads(), 16);
        assert_eq!(held.class_dyad_counts(), vec![2, 2]);
        let ids: BTreeSet<_> = rest.dyads.iter().map(|d| &d.dyad_id).collect();
        assert!(held.dyads.iter().all(|d| !ids.contains(&d.dyad_id)));
    }
}
