//! Dataset schema, clip segmentation, feature-file I/O, synthetic dyadic
//! data generation, hierarchical relabeling, and fold splitting.

mod io;
mod remap;
mod split;
mod standardize;
mod synth;

pub use io::{load_dataset, save_dataset, write_dataset_string};
pub use remap::{remap_hierarchical, HierarchyLevel};
pub use split::{kfold_split, stratified_holdout, FoldSplit};
pub use standardize::Standardizer;
pub use synth::{synth_bases, synth_generate, SynthBases, SynthConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_MODALITIES: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("segment_indices: clip count must be at least 1")]
    ZeroClips,
    #[error("segment_indices: duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("synth_generate: need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("synth_generate: feature dimension {d} must be at least the class count {classes}")]
    DimTooSmall { d: usize, classes: usize },
    #[error("kfold_split: K must be at least 2, got {0}")]
    BadFoldCount(usize),
    #[error("kfold_split: class {class} has {dyads} dyads, fewer than K={k}")]
    ClassTooSmall { class: String, dyads: usize, k: usize },
    #[error("remap_hierarchical: expected the 4-class schema {expected}, got {got}")]
    WrongSchema { expected: String, got: String },
    #[error("holdout: fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}

/// One of the four per-person feature streams, in fixed row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Face = 0,
    Body = 1,
    Audio = 2,
    Text = 3,
}

impl Modality {
    pub const ALL: [Modality; NUM_MODALITIES] =
        [Modality::Face, Modality::Body, Modality::Audio, Modality::Text];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            Modality::Face => 'F',
            Modality::Body => 'B',
            Modality::Audio => 'A',
            Modality::Text => 'T',
        }
    }

    pub fn from_letter(c: char) -> Option<Modality> {
        match c.to_ascii_uppercase() {
            'F' => Some(Modality::Face),
            'B' => Some(Modality::Body),
            'A' => Some(Modality::Audio),
            'T' => Some(Modality::Text),
            _ => None,
        }
    }
}

/// Unordered cross-modality pair, canonicalized to row order (F, B, A, T).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModalityPair {
    lo: Modality,
    hi: Modality,
}

impl ModalityPair {
    pub fn new(a: Modality, b: Modality) -> Option<ModalityPair> {
        if a == b {
            return None;
        }
        let (lo, hi) = if a.index() < b.index() { (a, b) } else { (b, a) };
        Some(ModalityPair { lo, hi })
    }

    /// All six unordered pairs in canonical order.
    pub fn all() -> Vec<ModalityPair> {
        let mut out = Vec::new();
        for i in 0..NUM_MODALITIES {
            for j in i + 1..NUM_MODALITIES {
                out.push(ModalityPair {
                    lo: Modality::ALL[i],
                    hi: Modality::ALL[j],
                });
            }
        }
        out
    }

    pub fn members(&self) -> (Modality, Modality) {
        (self.lo, self.hi)
    }

    pub fn contains_edge(&self, u: usize, v: usize) -> bool {
        (self.lo.index() == u && self.hi.index() == v)
            || (self.lo.index() == v && self.hi.index() == u)
    }

    /// Label such as `F-A` or `B-T`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.lo.letter(), self.hi.letter())
    }

    pub fn parse(s: &str) -> Option<ModalityPair> {
        let mut parts = s.split('-');
        let a = Modality::from_letter(parts.next()?.trim().chars().next()?)?;
        let b = Modality::from_letter(parts.next()?.trim().chars().next()?)?;
        if parts.next().is_some() {
            return None;
        }
        ModalityPair::new(a, b)
    }
}

/// Named, ordered class set plus whether both directions carry labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub name: String,
    pub classes: Vec<String>,
    pub bidirectional: bool,
}

impl LabelSchema {
    pub fn noxi() -> LabelSchema {
        LabelSchema {
            name: "noxi".into(),
            classes: vec!["Str".into(), "Acq".into(), "Fri".into(), "Vgf".into()],
            bidirectional: true,
        }
    }

    pub fn udiva() -> LabelSchema {
        LabelSchema {
            name: "udiva".into(),
            classes: vec!["Kno".into(), "Unk".into()],
            bidirectional: false,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }
}

/// The four aligned feature vectors of one person for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBundle {
    pub face: Vec<f64>,
    pub body: Vec<f64>,
    pub audio: Vec<f64>,
    pub text: Vec<f64>,
}

impl ModalityBundle {
    pub fn zeros(d: usize) -> ModalityBundle {
        ModalityBundle {
            face: vec![0.0; d],
            body: vec![0.0; d],
            audio: vec![0.0; d],
            text: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.face.len()
    }

    pub fn row(&self, m: Modality) -> &[f64] {
        match m {
            Modality::Face => &self.face,
            Modality::Body => &self.body,
            Modality::Audio => &self.audio,
            Modality::Text => &self.text,
        }
    }

    pub fn row_mut(&mut self, m: Modality) -> &mut Vec<f64> {
        match m {
            Modality::Face => &mut self.face,
            Modality::Body => &mut self.body,
            Modality::Audio => &mut self.audio,
            Modality::Text => &mut self.text,
        }
    }

    pub fn uniform_dim(&self) -> Option<usize> {
        let d = self.face.len();
        (self.body.len() == d && self.audio.len() == d && self.text.len() == d).then_some(d)
    }
}

/// One aligned dyadic clip with direction-specific labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub dyad_id: String,
    pub clip_index: usize,
    pub person_i: ModalityBundle,
    pub person_j: ModalityBundle,
    pub label_i_to_j: usize,
    pub label_j_to_i: Option<usize>,
}

/// All clips of one dyad, contiguous indices `0..n_clips`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dyad {
    pub dyad_id: String,
    pub n_clips: usize,
    pub clips: Vec<ClipRecord>,
}

impl Dyad {
    pub fn label_i_to_j(&self) -> usize {
        self.clips[0].label_i_to_j
    }

    pub fn label_j_to_i(&self) -> Option<usize> {
        self.clips[0].label_j_to_i
    }

    /// Maximum clip index used by the temporal encoder; at least 1 so a
    /// single-clip dyad still has a valid period.
    pub fn max_clip_index(&self) -> usize {
        (self.n_clips.saturating_sub(1)).max(1)
    }
}

/// A schema'd collection of dyads with a common feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: LabelSchema,
    pub feature_dim: usize,
    pub dyads: Vec<Dyad>,
}

impl Dataset {
    pub fn n_dyads(&self) -> usize {
        self.dyads.len()
    }

    pub fn n_clips(&self) -> usize {
        self.dyads.iter().map(|d| d.clips.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.dyads.is_empty()
    }

    pub fn clips(&self) -> impl Iterator<Item = &ClipRecord> {
        self.dyads.iter().flat_map(|d| d.clips.iter())
    }

    /// Per-class dyad counts keyed by the direction-i label.
    pub fn class_dyad_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.schema.n_classes()];
        for d in &self.dyads {
            counts[d.label_i_to_j()] += 1;
        }
        counts
    }

    /// New dataset containing the dyads at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            feature_dim: self.feature_dim,
            dyads: indices.iter().map(|&i| self.dyads[i].clone()).collect(),
        }
    }

    /// Structural checks: contiguous clip indices, constant labels per dyad,
    /// uniform feature dimension, labels inside the schema.
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| DataError::Malformed { line: 0, msg };
        for dyad in &self.dyads {
            if dyad.clips.len() != dyad.n_clips {
                return Err(bad(format!(
                    "dyad {}: declared {} clips, found {}",
                    dyad.dyad_id,
                    dyad.n_clips,
                    dyad.clips.len()
                )));
            }
            for (t, clip) in dyad.clips.iter().enumerate() {
                if clip.clip_index != t {
                    return Err(bad(format!(
                        "dyad {}: expected clip index {t}, found {}",
                        dyad.dyad_id, clip.clip_index
                    )));
                }
                if clip.label_i_to_j != dyad.label_i_to_j()
                    || clip.label_j_to_i != dyad.label_j_to_i()
                {
                    return Err(bad(format!("dyad {}: labels vary across clips", dyad.dyad_id)));
                }
                if clip.label_i_to_j >= self.schema.n_classes() {
                    return Err(bad(format!(
                        "dyad {}: label {} outside schema {}",
                        dyad.dyad_id, clip.label_i_to_j, self.schema.name
                    )));
                }
                if self.schema.bidirectional != clip.label_j_to_i.is_some() {
                    return Err(bad(format!(
                        "dyad {}: direction labels inconsistent with schema {}",
                        dyad.dyad_id, self.schema.name
                    )));
                }
                for bundle in [&clip.person_i, &clip.person_j] {
                    match bundle.uniform_dim() {
                        Some(d) if d == self.feature_dim => {}
                        _ => {
                            return Err(bad(format!(
                                "dyad {} clip {t}: feature dimension differs from {}",
                                dyad.dyad_id, self.feature_dim
                            )))
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Non-overlapping equal-length intervals covering `[0, duration]`.
pub fn segment_indices(duration: f64, n: usize) -> Result<Vec<(f64, f64)>, DataError> {
    if n == 0 {
        return Err(DataError::ZeroClips);
    }
    if duration <= 0.0 {
        return Err(DataError::NonPositiveDuration(duration));
    }
    let width = duration / n as f64;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let start = t as f64 * width;
        let end = if t + 1 == n { duration } else { (t + 1) as f64 * width };
        out.push((start, end));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_examples() {
        let segs = segment_indices(100.0, 10).unwrap();
        assert_eq!(segs.len(), 10);
        assert_eq!(segs[0], (0.0, 10.0));
        assert_eq!(segs[9], (90.0, 100.0));
        assert_eq!(segment_indices(10.0, 1).unwrap(), vec![(0.0, 10.0)]);
        assert_eq!(segment_indices(10.0, 0).unwrap_err(), DataError::ZeroClips);
    }

    #[test]
    fn segments_partition_exactly() {
        for &(duration, n) in &[(100.0, 10), (17.3, 7), (1.0, 1), (3600.0, 137), (0.1, 3)] {
            let segs = segment_indices(duration, n).unwrap();
            assert_eq!(segs[0].0, 0.0);
            assert_eq!(segs[n - 1].1, duration);
            let width = duration / n as f64;
            for w in segs.windows(2) {
                assert_eq!(w[0].1, w[1].0, "consecutive start must equal previous end");
            }
            for (start, end) in &segs {
                assert!((end - start - width).abs() < 1e-9 * duration.max(1.0));
            }
        }
    }

    #[test]
    fn modality_pair_labels_are_canonical() {
        let labels: Vec<String> = ModalityPair::all().iter().map(|p| p.label()).collect();
        assert_eq!(labels, vec!["F-B", "F-A", "F-T", "B-A", "B-T", "A-T"]);
        assert_eq!(ModalityPair::parse("A-T"), ModalityPair::parse("T-A"));
        assert_eq!(ModalityPair::parse("F-F"), None);
        assert_eq!(ModalityPair::parse("X-Y"), None);
    }

    #[test]
    fn schema_lookups() {
        let s = LabelSchema::noxi();
        assert_eq!(s.class_index("Fri"), Some(2));
        assert_eq!(s.class_index("nope"), None);
        assert!(s.bidirectional);
        assert!(!LabelSchema::udiva().bidirectional);
    }
}
