//! Synthetic dyadic feature generator with planted cross-person structure.
//!
//! Class evidence for the direction i→j lives in the face–audio interaction:
//! person j's audio carries the class basis with a random per-clip sign,
//! `s·u_c`, and person i's face carries the matching sign on a fixed
//! class-independent key direction, `s·k`. Neither person's features have a
//! class-dependent mean (the sign flips per clip, and the key says nothing
//! about the class), so a linear readout of either person decodes nothing;
//! the label is recovered by routing the partner's audio across the
//! inter-person edges. The j→i direction plants the mirrored face/audio
//! interaction.
//!
//! Class bases occupy disjoint coordinate blocks, and body/text carry
//! equal-amplitude distractor bases of a *random* class each clip. Averaging
//! a person's modalities uniformly therefore mixes the true class block with
//! impostor blocks; separating them requires modality-selective attention on
//! the inter-person edges. On top of that, every feature of a person is
//! amplitude-modulated over the clip index with a class-specific frequency,
//! so clip position carries information too.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::seeding::derive_seed;

use super::{ClipRecord, DataError, Dataset, Dyad, LabelSchema, Modality, ModalityBundle, NUM_MODALITIES};

/// Coupling strength of the planted interaction term.
const SIGNAL_AMP: f64 = 4.0;
/// Scale of per-(dyad, person, modality) style vectors.
const BASE_SCALE: f64 = 0.05;
/// Depth of the per-class periodic amplitude modulation.
const MOD_DEPTH: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub feature_dim: usize,
    pub classes: usize,
    pub dyads_per_class: usize,
    pub clips_per_dyad: usize,
    pub noise: f64,
    /// When set, a fraction of dyads gets differing direction labels.
    pub asymmetric: bool,
    pub asym_fraction: f64,
    pub bidirectional: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            feature_dim: 16,
            classes: 4,
            dyads_per_class: 24,
            clips_per_dyad: 12,
            noise: 0.05,
            asymmetric: true,
            asym_fraction: 0.5,
            bidirectional: true,
        }
    }
}

impl SynthConfig {
    pub fn schema(&self) -> LabelSchema {
        if self.bidirectional && self.classes == 4 {
            LabelSchema::noxi()
        } else if !self.bidirectional && self.classes == 2 {
            LabelSchema::udiva()
        } else {
            LabelSchema {
                name: format!("synth{}", self.classes),
                classes: (1..=self.classes).map(|i| format!("C{i}")).collect(),
                bidirectional: self.bidirectional,
            }
        }
    }
}

/// The vectors the generator plants, exposed so tests can decode the
/// interaction term independently of any trained model.
#[derive(Debug, Clone)]
pub struct SynthBases {
    /// `[class][modality]` unit vectors of the configured dimension.
    pub class_modality: Vec<Vec<Vec<f64>>>,
    /// `[modality]` sign-key unit vectors, orthogonal to the class bases.
    pub keys: Vec<Vec<f64>>,
}

impl SynthBases {
    pub fn basis(&self, class: usize, m: Modality) -> &[f64] {
        &self.class_modality[class][m.index()]
    }

    pub fn key(&self, m: Modality) -> &[f64] {
        &self.keys[m.index()]
    }

    /// Nearest-class-basis decode of the planted i→j interaction term: the
    /// face key projection resolves the sign of the audio basis projection.
    pub fn decode_i_to_j(&self, clip: &ClipRecord) -> usize {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let key_sign = dot(&clip.person_i.face, self.key(Modality::Face));
        let scores: Vec<f64> = (0..self.class_modality.len())
            .map(|c| key_sign * dot(&clip.person_j.audio, self.basis(c, Modality::Audio)))
            .collect();
        crate::tensor::argmax(&scores)
    }
}

fn gaussian_vec(rng: &mut ChaCha20Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale
        })
        .collect()
}

/// Class bases on disjoint coordinate blocks (shared block layout across
/// modalities, family-specific sign patterns) plus one key vector per
/// modality spread over all coordinates.
fn make_bases(cfg: &SynthConfig, seed: u64) -> SynthBases {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "synth-bases", 0));
    let d = cfg.feature_dim;
    let block = |class: usize| -> std::ops::Range<usize> {
        class * d / cfg.classes..(class + 1) * d / cfg.classes
    };
    let mut per_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); cfg.classes];
    let mut keys: Vec<Vec<f64>> = Vec::with_capacity(NUM_MODALITIES);
    for _ in 0..NUM_MODALITIES {
        for (c, slots) in per_class.iter_mut().enumerate() {
            let range = block(c);
            let scale = 1.0 / (range.len() as f64).sqrt();
            let mut v = vec![0.0; d];
            for k in range {
                v[k] = if rng.gen::<bool>() { scale } else { -scale };
            }
            slots.push(v);
        }
        let mut key = gaussian_vec(&mut rng, d, 1.0);
        let norm: f64 = key.iter().map(|x| x * x).sum::<f64>().sqrt();
        for k in &mut key {
            *k /= norm;
        }
        keys.push(key);
    }
    SynthBases {
        class_modality: per_class,
        keys,
    }
}

/// The bases a given `(cfg, seed)` generation run plants.
pub fn synth_bases(cfg: &SynthConfig, seed: u64) -> Result<SynthBases, DataError> {
    validate(cfg)?;
    Ok(make_bases(cfg, seed))
}

fn validate(cfg: &SynthConfig) -> Result<(), DataError> {
    if cfg.classes < 2 {
        return Err(DataError::TooFewClasses(cfg.classes));
    }
    // Class bases plus the key must fit orthogonally.
    if cfg.feature_dim < cfg.classes + 1 {
        return Err(DataError::DimTooSmall {
            d: cfg.feature_dim,
            classes: cfg.classes,
        });
    }
    Ok(())
}

fn class_frequency(class: usize) -> f64 {
    (class % 4 + 1) as f64
}

/// Deterministic synthetic dataset for the given config and seed.
pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<Dataset, DataError> {
    validate(cfg)?;
    let schema = cfg.schema();
    let bases = make_bases(cfg, seed);
    let d = cfg.feature_dim;
    let n = cfg.clips_per_dyad;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "synth-data", 0));

    // Which dyads of each class get a differing reverse label.
    let asym_count = if cfg.asymmetric && cfg.bidirectional {
        ((cfg.dyads_per_class as f64) * cfg.asym_fraction).round() as usize
    } else {
        0
    };

    let mut dyads = Vec::with_capacity(cfg.classes * cfg.dyads_per_class);
    for class in 0..cfg.classes {
        let mut order: Vec<usize> = (0..cfg.dyads_per_class).collect();
        order.shuffle(&mut rng);
        let asym_set: Vec<bool> = {
            let mut flags = vec![false; cfg.dyads_per_class];
            for &k in order.iter().take(asym_count) {
                flags[k] = true;
            }
            flags
        };

        for k in 0..cfg.dyads_per_class {
            let label_i = class;
            let label_j = if cfg.bidirectional {
                Some(if asym_set[k] {
                    let mut other = rng.gen_range(0..cfg.classes - 1);
                    if other >= class {
                        other += 1;
                    }
                    other
                } else {
                    class
                })
            } else {
                None
            };

            // Per-person per-modality style, fixed across the dyad's clips.
            let style_i: Vec<Vec<f64>> = (0..NUM_MODALITIES)
                .map(|_| gaussian_vec(&mut rng, d, BASE_SCALE))
                .collect();
            let style_j: Vec<Vec<f64>> = (0..NUM_MODALITIES)
                .map(|_| gaussian_vec(&mut rng, d, BASE_SCALE))
                .collect();

            let dyad_id = format!("{}_{k:03}", schema.classes[class]);
            let mut clips = Vec::with_capacity(n);
            for t in 0..n {
                let mut person_i = ModalityBundle {
                    face: style_i[0].clone(),
                    body: style_i[1].clone(),
                    audio: style_i[2].clone(),
                    text: style_i[3].clone(),
                };
                let mut person_j = ModalityBundle {
                    face: style_j[0].clone(),
                    body: style_j[1].clone(),
                    audio: style_j[2].clone(),
                    text: style_j[3].clone(),
                };

                // Joint-sign interaction terms, one per labeled direction:
                // the perceiver's face gets the sign key, the partner's
                // audio the matching-signed class basis.
                let mut plant =
                    |rng: &mut ChaCha20Rng, face: &mut [f64], audio: &mut [f64], class: usize| {
                        let s: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        add_scaled(face, &bases.keys[Modality::Face.index()], s * SIGNAL_AMP);
                        add_scaled(
                            audio,
                            &bases.class_modality[class][Modality::Audio.index()],
                            s * SIGNAL_AMP,
                        );
                    };
                plant(&mut rng, &mut person_i.face, &mut person_j.audio, label_i);
                if let Some(lj) = label_j {
                    plant(&mut rng, &mut person_j.face, &mut person_i.audio, lj);
                } else {
                    // Fill the unused slots with uncorrelated draws so both
                    // persons' modality statistics stay comparable.
                    let s: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    add_scaled(&mut person_j.face, &bases.keys[Modality::Face.index()], s * SIGNAL_AMP);
                    let s2: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    let c2 = rng.gen_range(0..cfg.classes);
                    add_scaled(
                        &mut person_i.audio,
                        &bases.class_modality[c2][Modality::Audio.index()],
                        s2 * SIGNAL_AMP,
                    );
                }

                // Label-independent distractors: body and text carry a
                // random class block at full amplitude each clip, so a
                // uniform average over a person's modalities confuses the
                // true block with impostors.
                for bundle in [&mut person_i, &mut person_j] {
                    for m in [Modality::Body, Modality::Text] {
                        let impostor = rng.gen_range(0..cfg.classes);
                        let s: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        add_scaled(
                            bundle.row_mut(m),
                            &bases.class_modality[impostor][m.index()],
                            s * SIGNAL_AMP,
                        );
                    }
                }

                // Class-frequency amplitude modulation of everything.
                let phase = |f: f64| {
                    1.0 + MOD_DEPTH * (2.0 * std::f64::consts::PI * f * t as f64 / n as f64).sin()
                };
                let mod_i = phase(class_frequency(label_i));
                let mod_j = phase(class_frequency(label_j.unwrap_or(label_i)));
                for m in Modality::ALL {
                    for v in person_i.row_mut(m).iter_mut() {
                        *v *= mod_i;
                    }
                    for v in person_j.row_mut(m).iter_mut() {
                        *v *= mod_j;
                    }
                }

                if cfg.noise > 0.0 {
                    for bundle in [&mut person_i, &mut person_j] {
                        for m in Modality::ALL {
                            for v in bundle.row_mut(m).iter_mut() {
                                let z: f64 = rng.sample(StandardNormal);
                                *v += cfg.noise * z;
                            }
                        }
                    }
                }

                clips.push(ClipRecord {
                    dyad_id: dyad_id.clone(),
                    clip_index: t,
                    person_i,
                    person_j,
                    label_i_to_j: label_i,
                    label_j_to_i: label_j,
                });
            }
            dyads.push(Dyad {
                dyad_id,
                n_clips: n,
                clips,
            });
        }
    }

    let dataset = Dataset {
        schema,
        feature_dim: d,
        dyads,
    };
    dataset.validate().expect("generator output is structurally valid");
    Ok(dataset)
}

fn add_scaled(target: &mut [f64], basis: &[f64], scale: f64) {
    for (t, b) in target.iter_mut().zip(basis) {
        *t += scale * b;
    }
}
