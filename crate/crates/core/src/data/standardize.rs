//! Per-feature standardization fitted on a training split.
//!
//! Statistics are pooled over both persons per modality so the transform
//! commutes with swapping the two interactants.

use super::{Dataset, Modality, ModalityBundle, NUM_MODALITIES};

/// Per-(modality, coordinate) mean and deviation. Deviations below 1e-12 are
/// replaced by 1 so constant features pass through centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub dim: usize,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

impl Standardizer {
    /// Identity transform (used before fitting, and in tests).
    pub fn identity(dim: usize) -> Standardizer {
        Standardizer {
            dim,
            mean: vec![vec![0.0; dim]; NUM_MODALITIES],
            std: vec![vec![1.0; dim]; NUM_MODALITIES],
        }
    }

    /// Fits mean/std over every clip of `train`, both persons pooled.
    pub fn fit(train: &Dataset) -> Standardizer {
        let d = train.feature_dim;
        let mut mean = vec![vec![0.0; d]; NUM_MODALITIES];
        let mut m2 = vec![vec![0.0; d]; NUM_MODALITIES];
        let mut count = 0usize;
        for clip in train.clips() {
            for bundle in [&clip.person_i, &clip.person_j] {
                for m in Modality::ALL {
                    let row = bundle.row(m);
                    for (k, v) in row.iter().enumerate() {
                        mean[m.index()][k] += v;
                        m2[m.index()][k] += v * v;
                    }
                }
            }
            count += 2;
        }
        let n = count.max(1) as f64;
        let mut std = vec![vec![1.0; d]; NUM_MODALITIES];
        for mi in 0..NUM_MODALITIES {
            for k in 0..d {
                mean[mi][k] /= n;
                let var = (m2[mi][k] / n - mean[mi][k] * mean[mi][k]).max(0.0);
                let s = var.sqrt();
                std[mi][k] = if s < 1e-12 { 1.0 } else { s };
            }
        }
        Standardizer { dim: d, mean, std }
    }

    pub fn apply_row(&self, m: Modality, row: &[f64]) -> Vec<f64> {
        let mi = m.index();
        row.iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[mi][k]) / self.std[mi][k])
            .collect()
    }

    pub fn apply_bundle(&self, bundle: &ModalityBundle) -> ModalityBundle {
        ModalityBundle {
            face: self.apply_row(Modality::Face, &bundle.face),
            body: self.apply_row(Modality::Body, &bundle.body),
            audio: self.apply_row(Modality::Audio, &bundle.audio),
            text: self.apply_row(Modality::Text, &bundle.text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{synth_generate, SynthConfig};
    use super::*;

    #[test]
    fn fitted_transform_centers_and_scales_train_data() {
        let cfg = SynthConfig {
            feature_dim: 5,
            classes: 2,
            dyads_per_class: 4,
            clips_per_dyad: 6,
            noise: 0.2,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg, 2).unwrap();
        let std = Standardizer::fit(&ds);
        let mut sums = vec![vec![0.0; 5]; NUM_MODALITIES];
        let mut sq = vec![vec![0.0; 5]; NUM_MODALITIES];
        let mut count = 0;
        for clip in ds.clips() {
            for bundle in [&clip.person_i, &clip.person_j] {
                let b = std.apply_bundle(bundle);
                for m in Modality::ALL {
                    for (k, v) in b.row(m).iter().enumerate() {
                        sums[m.index()][k] += v;
                        sq[m.index()][k] += v * v;
                    }
                }
            }
            count += 2;
        }
        for mi in 0..NUM_MODALITIES {
            for k in 0..5 {
                let mean = sums[mi][k] / count as f64;
                let var = sq[mi][k] / count as f64 - mean * mean;
                assert!(mean.abs() < 1e-9, "mean {mean}");
                assert!((var - 1.0).abs() < 1e-6, "var {var}");
            }
        }
    }

    #[test]
    fn constant_feature_passes_through() {
        let cfg = SynthConfig {
            feature_dim: 4,
            classes: 2,
            dyads_per_class: 2,
            clips_per_dyad: 2,
            noise: 0.0,
            ..SynthConfig::default()
        };
        let mut ds = synth_generate(&cfg, 2).unwrap();
        for dyad in &mut ds.dyads {
            for clip in &mut dyad.clips {
                clip.person_i.body = vec![3.0; 4];
                clip.person_j.body = vec![3.0; 4];
            }
        }
        let std = Standardizer::fit(&ds);
        let first = &ds.dyads[0].clips[0].person_i;
        let out = std.apply_bundle(first);
        assert_eq!(out.body, vec![0.0; 4], "constant features center to zero with unit divisor");
    }

    #[test]
    fn identity_is_a_no_op() {
        let std = Standardizer::identity(3);
        let row = vec![1.0, -2.0, 0.5];
        assert_eq!(std.apply_row(Modality::Audio, &row), row);
    }
}
