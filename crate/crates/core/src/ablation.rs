//! Inference-time masking ablations scored by prediction fidelity.
//!
//! Every mask is evaluation-only: model parameters are untouched. Fidelity is
//! the per-fold mean L1 distance between the original and masked prediction
//! distributions, averaged over folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::data::{Dataset, Dyad, ModalityPair};
use crate::model::{predict_video, AsyrecModel, ClipPrediction, ForwardVariant, ModelError};
use crate::seeding::derive_seed;
use crate::tensor::argmax;
use crate::train::{recall_per_class, uar, ConfusionMatrix, TrainError};

#[derive(Debug, Error)]
pub enum AblationError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("fidelity: output lists have lengths {original} and {masked}")]
    LengthMismatch { original: usize, masked: usize },
    #[error("fidelity: no observations")]
    Empty,
    #[error("segment mask at ratio {ratio} would remove all {n} clips of dyad {dyad}")]
    MasksEverything { dyad: String, n: usize, ratio: f64 },
    #[error("mask ratio {0} outside [0, 1]")]
    BadRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn matches(self, t: usize) -> bool {
        match self {
            Parity::Even => t % 2 == 0,
            Parity::Odd => t % 2 == 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Beginning,
    Middle,
    End,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Beginning => "beginning",
            Region::Middle => "middle",
            Region::End => "end",
        }
    }

    /// Clip range of length `round(ratio·n)`: at the start, centered on
    /// `n/2`, or at the end.
    pub fn clip_range(self, n_clips: usize, ratio: f64) -> std::ops::Range<usize> {
        let m = ((n_clips as f64) * ratio).round() as usize;
        let m = m.min(n_clips);
        match self {
            Region::Beginning => 0..m,
            Region::Middle => {
                let start = (n_clips / 2).saturating_sub(m / 2);
                let start = start.min(n_clips - m);
                start..start + m
            }
            Region::End => n_clips - m..n_clips,
        }
    }
}

/// One masking condition.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    /// Bypass node attention and its residual rescaling.
    NoNodeAttention,
    /// Replace edge attention with the uniform admissible distribution.
    NoEdgeAttention,
    /// Zero the temporal encoding for a seeded sample of clips of one parity.
    TemporalParity { parity: Parity, ratio: f64, seed: u64 },
    /// Zero both directed edges of one cross-modality pair, renormalized.
    ModalityEdge { pair: ModalityPair },
    /// Drop a contiguous clip range from the video-level prediction.
    Segment { region: Region, ratio: f64 },
}

/// ΔF for one mask, with the per-fold breakdown and the masked model's UAR.
#[derive(Debug, Clone)]
pub struct FidelityReport {
    pub spec: MaskSpec,
    pub per_fold: Vec<f64>,
    /// Mean over folds of the per-fold mean L1 distance.
    pub delta_f: f64,
    pub per_fold_uar: Vec<f64>,
}

/// One trained fold and its held-out data.
pub struct FoldEval<'a> {
    pub fold: usize,
    pub model: &'a AsyrecModel,
    pub test: &'a Dataset,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean-over-folds of the per-fold mean L1 distance between aligned
/// observation lists.
pub fn fidelity(folds: &[(Vec<Vec<f64>>, Vec<Vec<f64>>)]) -> Result<f64, AblationError> {
    if folds.is_empty() {
        return Err(AblationError::Empty);
    }
    let mut fold_means = Vec::with_capacity(folds.len());
    for (original, masked) in folds {
        fold_means.push(fold_fidelity(original, masked)?);
    }
    Ok(fold_means.iter().sum::<f64>() / fold_means.len() as f64)
}

fn fold_fidelity(original: &[Vec<f64>], masked: &[Vec<f64>]) -> Result<f64, AblationError> {
    if original.len() != masked.len() {
        return Err(AblationError::LengthMismatch {
            original: original.len(),
            masked: masked.len(),
        });
    }
    if original.is_empty() {
        return Err(AblationError::Empty);
    }
    let total: f64 = original.iter().zip(masked).map(|(a, b)| l1(a, b)).sum();
    Ok(total / original.len() as f64)
}

/// Per-(clip, direction) probability vectors with their true labels, in
/// deterministic dataset order.
struct Observations {
    probs: Vec<Vec<f64>>,
    labels: Vec<usize>,
    directions: Vec<usize>,
    n_classes: usize,
}

impl Observations {
    fn mean_uar(&self) -> Result<f64, AblationError> {
        let n_dirs = self.directions.iter().copied().max().unwrap_or(0) + 1;
        let mut uars = Vec::new();
        for dir in 0..n_dirs {
            let mut cm = ConfusionMatrix::new(self.n_classes);
            for ((p, &label), &d) in self
                .probs
                .iter()
                .zip(&self.labels)
                .zip(&self.directions)
            {
                if d == dir {
                    cm.record(label, argmax(p));
                }
            }
            uars.push(uar(&recall_per_class(&cm))?);
        }
        Ok(uars.iter().sum::<f64>() / uars.len() as f64)
    }
}

fn collect_clip_observations<F>(
    model: &AsyrecModel,
    test: &Dataset,
    mut variant_of: F,
) -> Result<Observations, AblationError>
where
    F: FnMut(&Dyad, usize) -> ForwardVariant,
{
    model.check_schema(test).map_err(TrainError::from)?;
    let mut obs = Observations {
        probs: Vec::new(),
        labels: Vec::new(),
        directions: Vec::new(),
        n_classes: model.schema.n_classes(),
    };
    for dyad in &test.dyads {
        for clip in &dyad.clips {
            let variant = variant_of(dyad, clip.clip_index);
            let pred = model.forward_clip(clip, dyad.max_clip_index(), &variant)?;
            obs.probs.push(pred.p_i_to_j.clone());
            obs.labels.push(clip.label_i_to_j);
            obs.directions.push(0);
            if let (Some(p_j), Some(label_j)) = (pred.p_j_to_i, clip.label_j_to_i) {
                obs.probs.push(p_j);
                obs.labels.push(label_j);
                obs.directions.push(1);
            }
        }
    }
    Ok(obs)
}

/// Video-level observations over a per-dyad retained clip range.
fn collect_video_observations<F>(
    model: &AsyrecModel,
    test: &Dataset,
    mut keep: F,
) -> Result<Observations, AblationError>
where
    F: FnMut(&Dyad, usize) -> bool,
{
    model.check_schema(test).map_err(TrainError::from)?;
    let mut obs = Observations {
        probs: Vec::new(),
        labels: Vec::new(),
        directions: Vec::new(),
        n_classes: model.schema.n_classes(),
    };
    for dyad in &test.dyads {
        let mut preds: Vec<ClipPrediction> = Vec::new();
        for clip in &dyad.clips {
            if keep(dyad, clip.clip_index) {
                preds.push(model.forward_clip(
                    clip,
                    dyad.max_clip_index(),
                    &ForwardVariant::default(),
                )?);
            }
        }
        let vp = predict_video(&preds)?;
        obs.probs.push(vp.p_i_to_j.clone());
        obs.labels.push(dyad.label_i_to_j());
        obs.directions.push(0);
        if let (Some(p_j), Some(label_j)) = (vp.p_j_to_i, dyad.label_j_to_i()) {
            obs.probs.push(p_j);
            obs.labels.push(label_j);
            obs.directions.push(1);
        }
    }
    Ok(obs)
}

/// Seeded uniform sample of the fold's clips with the requested parity.
/// Returns (dyad index, clip index) pairs.
fn sample_parity_clips(
    test: &Dataset,
    parity: Parity,
    ratio: f64,
    seed: u64,
    fold: usize,
) -> Vec<(usize, usize)> {
    let mut eligible: Vec<(usize, usize)> = Vec::new();
    for (di, dyad) in test.dyads.iter().enumerate() {
        for clip in &dyad.clips {
            if parity.matches(clip.clip_index) {
                eligible.push((di, clip.clip_index));
            }
        }
    }
    let count = ((eligible.len() as f64) * ratio).round() as usize;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "parity-mask", fold as u64));
    eligible.shuffle(&mut rng);
    eligible.truncate(count.min(eligible.len()));
    eligible
}

fn check_ratio(ratio: f64) -> Result<(), AblationError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(AblationError::BadRatio(ratio));
    }
    Ok(())
}

/// Runs one masking condition over trained folds.
pub fn run_mask(folds: &[FoldEval], spec: &MaskSpec) -> Result<FidelityReport, AblationError> {
    if folds.is_empty() {
        return Err(AblationError::Empty);
    }
    let mut per_fold = Vec::with_capacity(folds.len());
    let mut per_fold_uar = Vec::with_capacity(folds.len());

    for fe in folds {
        let (original, masked) = match spec {
            MaskSpec::NoNodeAttention => (
                collect_clip_observations(fe.model, fe.test, |_, _| ForwardVariant::default())?,
                collect_clip_observations(fe.model, fe.test, |_, _| {
                    ForwardVariant::no_node_attention()
                })?,
            ),
            MaskSpec::NoEdgeAttention => (
                collect_clip_observations(fe.model, fe.test, |_, _| ForwardVariant::default())?,
                collect_clip_observations(fe.model, fe.test, |_, _| {
                    ForwardVariant::no_edge_attention()
                })?,
            ),
            MaskSpec::TemporalParity { parity, ratio, seed } => {
                check_ratio(*ratio)?;
                let masked_clips = sample_parity_clips(fe.test, *parity, *ratio, *seed, fe.fold);
                let original =
                    collect_clip_observations(fe.model, fe.test, |_, _| ForwardVariant::default())?;
                let ids: Vec<(String, usize)> = masked_clips
                    .iter()
                    .map(|&(di, ci)| (fe.test.dyads[di].dyad_id.clone(), ci))
                    .collect();
                let masked = collect_clip_observations(fe.model, fe.test, |dyad, t| {
                    if ids.iter().any(|(id, ci)| id == &dyad.dyad_id && *ci == t) {
                        ForwardVariant::zeroed_temporal()
                    } else {
                        ForwardVariant::default()
                    }
                })?;
                (original, masked)
            }
            MaskSpec::ModalityEdge { pair } => (
                collect_clip_observations(fe.model, fe.test, |_, _| ForwardVariant::default())?,
                collect_clip_observations(fe.model, fe.test, |_, _| {
                    ForwardVariant::mask_pair(*pair)
                })?,
            ),
            MaskSpec::Segment { region, ratio } => {
                check_ratio(*ratio)?;
                for dyad in &fe.test.dyads {
                    let range = region.clip_range(dyad.n_clips, *ratio);
                    if range.len() >= dyad.n_clips {
                        return Err(AblationError::MasksEverything {
                            dyad: dyad.dyad_id.clone(),
                            n: dyad.n_clips,
                            ratio: *ratio,
                        });
                    }
                }
                let original = collect_video_observations(fe.model, fe.test, |_, _| true)?;
                let masked = collect_video_observations(fe.model, fe.test, |dyad, t| {
                    !region.clip_range(dyad.n_clips, *ratio).contains(&t)
                })?;
                (original, masked)
            }
        };
        per_fold.push(fold_fidelity(&original.probs, &masked.probs)?);
        per_fold_uar.push(masked.mean_uar()?);
    }

    Ok(FidelityReport {
        spec: spec.clone(),
        delta_f: per_fold.iter().sum::<f64>() / per_fold.len() as f64,
        per_fold,
        per_fold_uar,
    })
}

/// Flat result row for the ablation CSV
/// (`kind,parity,ratio,pair,region,seed,fold,dF,uar`).
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub kind: &'static str,
    pub parity: String,
    pub ratio: String,
    pub pair: String,
    pub region: String,
    pub seed: u64,
    pub fold: usize,
    pub d_f: f64,
    pub uar: f64,
}

fn rows_of(report: &FidelityReport, folds: &[FoldEval], seed: u64) -> Vec<AblationRow> {
    let (kind, parity, ratio, pair, region) = match &report.spec {
        MaskSpec::NoNodeAttention => ("no_node_att", String::new(), String::new(), String::new(), String::new()),
        MaskSpec::NoEdgeAttention => ("no_edge_att", String::new(), String::new(), String::new(), String::new()),
        MaskSpec::TemporalParity { parity, ratio, .. } => (
            "temporal_parity",
            parity.label().to_string(),
            format!("{ratio}"),
            String::new(),
            String::new(),
        ),
        MaskSpec::ModalityEdge { pair } => (
            "modality_edge",
            String::new(),
            String::new(),
            pair.label(),
            String::new(),
        ),
        MaskSpec::Segment { region, ratio } => (
            "segment",
            String::new(),
            format!("{ratio}"),
            String::new(),
            region.label().to_string(),
        ),
    };
    folds
        .iter()
        .enumerate()
        .map(|(slot, fe)| AblationRow {
            kind,
            parity: parity.clone(),
            ratio: ratio.clone(),
            pair: pair.clone(),
            region: region.clone(),
            seed,
            fold: fe.fold,
            d_f: report.per_fold[slot],
            uar: report.per_fold_uar[slot],
        })
        .collect()
}

/// Which grid of conditions to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Attention,
    TemporalParity,
    ModalityEdge,
    Segment,
}

impl GridKind {
    pub fn parse(s: &str) -> Option<GridKind> {
        match s {
            "attention" => Some(GridKind::Attention),
            "temporal_parity" => Some(GridKind::TemporalParity),
            "modality_edge" => Some(GridKind::ModalityEdge),
            "segment" => Some(GridKind::Segment),
            _ => None,
        }
    }

    pub fn all() -> [GridKind; 4] {
        [
            GridKind::Attention,
            GridKind::TemporalParity,
            GridKind::ModalityEdge,
            GridKind::Segment,
        ]
    }

    pub fn valid_names() -> &'static str {
        "attention, temporal_parity, modality_edge, segment"
    }

    /// The full condition grid for this kind. Ratio-ful kinds include a
    /// ratio-0 smoke condition.
    pub fn specs(self, seed: u64) -> Vec<MaskSpec> {
        match self {
            GridKind::Attention => vec![MaskSpec::NoNodeAttention, MaskSpec::NoEdgeAttention],
            GridKind::TemporalParity => {
                let mut out = Vec::new();
                for parity in [Parity::Even, Parity::Odd] {
                    for step in 0..=9 {
                        out.push(MaskSpec::TemporalParity {
                            parity,
                            ratio: step as f64 / 10.0,
                            seed,
                        });
                    }
                }
                out
            }
            GridKind::ModalityEdge => ModalityPair::all()
                .into_iter()
                .map(|pair| MaskSpec::ModalityEdge { pair })
                .collect(),
            GridKind::Segment => {
                let mut out = Vec::new();
                for region in [Region::Beginning, Region::Middle, Region::End] {
                    for step in [0.0, 0.1, 0.2, 0.3] {
                        out.push(MaskSpec::Segment {
                            region,
                            ratio: step,
                        });
                    }
                }
                out
            }
        }
    }
}

/// Runs every condition of the requested kinds, one CSV row per fold.
pub fn run_grid(
    folds: &[FoldEval],
    kinds: &[GridKind],
    seed: u64,
) -> Result<Vec<AblationRow>, AblationError> {
    let mut rows = Vec::new();
    for kind in kinds {
        for spec in kind.specs(seed) {
            let report = run_mask(folds, &spec)?;
            rows.extend(rows_of(&report, folds, seed));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use crate::model::AsyrecModel;
    use crate::tensor::Tensor;

    fn fixture() -> (AsyrecModel, Dataset) {
        let cfg = SynthConfig {
            feature_dim: 6,
            classes: 2,
            dyads_per_class: 3,
            clips_per_dyad: 10,
            noise: 0.1,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg, 77).unwrap();
        let mut model = AsyrecModel::new(ds.schema.clone(), 6, 77);
        // Random heads so masks actually move the outputs.
        model.params.head_i_to_j.weight = Tensor::from_fn(vec![2, 36], |i| (i as f64 * 0.37).sin() * 0.5);
        model.params.head_i_to_j.bias = Tensor::vector(vec![0.1, -0.1]);
        model.params.head_j_to_i.as_mut().unwrap().weight =
            Tensor::from_fn(vec![2, 36], |i| (i as f64 * 0.53).cos() * 0.5);
        (model, ds)
    }

    #[test]
    fn fidelity_examples() {
        let identical = vec![(vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]])];
        assert_eq!(fidelity(&identical).unwrap(), 0.0);
        let opposite = vec![(vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]])];
        assert_eq!(fidelity(&opposite).unwrap(), 2.0);
        let mismatch = vec![(vec![vec![1.0]], vec![])];
        assert!(matches!(
            fidelity(&mismatch),
            Err(AblationError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn fidelity_is_symmetric_and_bounded() {
        let a = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        let b = vec![vec![0.4, 0.6], vec![0.3, 0.7]];
        let ab = fidelity(&[(a.clone(), b.clone())]).unwrap();
        let ba = fidelity(&[(b, a)]).unwrap();
        assert_eq!(ab, ba);
        assert!((0.0..=2.0).contains(&ab));
    }

    #[test]
    fn ratio_zero_masks_give_zero_delta() {
        let (model, ds) = fixture();
        let folds = [FoldEval { fold: 0, model: &model, test: &ds }];
        for spec in [
            MaskSpec::TemporalParity { parity: Parity::Even, ratio: 0.0, seed: 5 },
            MaskSpec::Segment { region: Region::Middle, ratio: 0.0 },
        ] {
            let report = run_mask(&folds, &spec).unwrap();
            assert_eq!(report.delta_f, 0.0, "{spec:?}");
        }
    }

    #[test]
    fn parity_mask_leaves_other_parity_untouched() {
        let (model, ds) = fixture();
        let original = collect_clip_observations(&model, &ds, |_, _| ForwardVariant::default()).unwrap();
        let masked = collect_clip_observations(&model, &ds, |_, t| {
            if t % 2 == 0 {
                ForwardVariant::zeroed_temporal()
            } else {
                ForwardVariant::default()
            }
        })
        .unwrap();
        // Observation order: per clip, direction i then j. Odd clips must be
        // bit-identical.
        let mut obs_idx = 0;
        for dyad in &ds.dyads {
            for clip in &dyad.clips {
                for _ in 0..2 {
                    if clip.clip_index % 2 == 1 {
                        assert_eq!(original.probs[obs_idx], masked.probs[obs_idx]);
                    }
                    obs_idx += 1;
                }
            }
        }
        assert_eq!(obs_idx, original.probs.len());
    }

    #[test]
    fn segment_ranges_match_expected_boundaries() {
        assert_eq!(Region::Beginning.clip_range(20, 0.1), 0..2);
        assert_eq!(Region::Middle.clip_range(20, 0.1), 9..11);
        assert_eq!(Region::End.clip_range(20, 0.1), 18..20);
        assert_eq!(Region::Beginning.clip_range(10, 0.3), 0..3);
        assert_eq!(Region::Middle.clip_range(10, 0.0), 5..5);
    }

    #[test]
    fn segment_mask_rejects_total_removal() {
        let (model, ds) = fixture();
        let folds = [FoldEval { fold: 0, model: &model, test: &ds }];
        let spec = MaskSpec::Segment { region: Region::Beginning, ratio: 1.0 };
        assert!(matches!(
            run_mask(&folds, &spec),
            Err(AblationError::MasksEverything { .. })
        ));
    }

    #[test]
    fn masked_edge_columns_still_convex() {
        // Covered structurally in the graph module; here check ΔF is finite
        // and parameters survive a full grid run untouched.
        let (model, ds) = fixture();
        let before = model.params.clone();
        let folds = [FoldEval { fold: 0, model: &model, test: &ds }];
        let rows = run_grid(&folds, &[GridKind::ModalityEdge, GridKind::Attention], 3).unwrap();
        assert_eq!(rows.len(), 6 + 2);
        for row in &rows {
            assert!(row.d_f.is_finite() && row.d_f >= 0.0 && row.d_f <= 2.0);
        }
        assert_eq!(model.params, before);
    }

    #[test]
    fn grid_sizes_match_protocol() {
        let (model, ds) = fixture();
        let folds = [FoldEval { fold: 0, model: &model, test: &ds }];
        let rows = run_grid(&folds, &[GridKind::TemporalParity], 1).unwrap();
        // 9 nonzero ratios × 2 parities + 2 ratio-0 smoke rows.
        assert_eq!(rows.len(), 20);
        let nonzero = rows.iter().filter(|r| r.ratio != "0").count();
        assert_eq!(nonzero, 18);
        for row in rows.iter().filter(|r| r.ratio == "0") {
            assert_eq!(row.d_f, 0.0);
        }
        let rows = run_grid(&folds, &[GridKind::Segment], 1).unwrap();
        assert_eq!(rows.len(), 12);
    }

    #[test]
    fn uniform_beta_columns_equal_one_third() {
        let tape = crate::tensor::Tape::new();
        let adj = crate::ne_agn::build_adjacency(4);
        let beta = crate::ne_agn::BetaMatrix::uniform(&tape, &adj);
        let t = beta.to_tensor();
        for v in 0..4 {
            for u in 0..4 {
                let expected = if u == v { 0.0 } else { 1.0 / 3.0 };
                assert_eq!(t.row(u)[v], expected);
            }
        }
    }
}
