//! Confusion matrices, per-class recall, UAR, and model evaluation.

use serde::Serialize;

use crate::data::Dataset;
use crate::model::{predict_video, AsyrecModel, ClipPrediction, ForwardVariant};
use crate::tensor::argmax;

use super::TrainError;

/// Rows are true classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> ConfusionMatrix {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, truth: usize, predicted: usize) -> usize {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<usize>> {
        (0..self.n_classes)
            .map(|t| self.counts[t * self.n_classes..(t + 1) * self.n_classes].to_vec())
            .collect()
    }
}

/// Row-normalized diagonal; classes with no true instances are undefined
/// (`None`) and excluded from UAR.
pub fn recall_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.n_classes())
        .map(|t| {
            let row_total: usize = (0..cm.n_classes()).map(|p| cm.count(t, p)).sum();
            (row_total > 0).then(|| cm.count(t, t) as f64 / row_total as f64)
        })
        .collect()
}

/// Unweighted average of the defined per-class recalls.
pub fn uar(recalls: &[Option<f64>]) -> Result<f64, TrainError> {
    let defined: Vec<f64> = recalls.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(TrainError::NoDefinedRecalls);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Metrics for one prediction direction.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DirectionMetrics {
    pub direction: String,
    pub confusion: Vec<Vec<usize>>,
    /// `null` marks a class with no true instances in this evaluation.
    pub recalls: Vec<Option<f64>>,
    pub uar: f64,
}

fn direction_metrics(direction: &str, cm: &ConfusionMatrix) -> Result<DirectionMetrics, TrainError> {
    let recalls = recall_per_class(cm);
    Ok(DirectionMetrics {
        direction: direction.into(),
        confusion: cm.rows(),
        uar: uar(&recalls)?,
        recalls,
    })
}

/// Full evaluation output: clip-level metrics per direction (the primary
/// numbers) plus video-level metrics from averaged clip distributions.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsReport {
    pub schema: String,
    pub classes: Vec<String>,
    pub n_clips: usize,
    pub n_videos: usize,
    pub clip: Vec<DirectionMetrics>,
    pub video: Vec<DirectionMetrics>,
    /// Mean of the clip-level per-direction UARs.
    pub mean_uar: f64,
    pub video_mean_uar: f64,
}

/// Evaluates a model on a test set, one confusion matrix per direction.
pub fn evaluate(model: &AsyrecModel, test: &Dataset) -> Result<MetricsReport, TrainError> {
    evaluate_variant(model, test, &ForwardVariant::default())
}

pub fn evaluate_variant(
    model: &AsyrecModel,
    test: &Dataset,
    variant: &ForwardVariant,
) -> Result<MetricsReport, TrainError> {
    model.check_schema(test)?;
    let n_classes = model.schema.n_classes();
    let bidir = model.schema.bidirectional;

    let mut clip_i = ConfusionMatrix::new(n_classes);
    let mut clip_j = ConfusionMatrix::new(n_classes);
    let mut video_i = ConfusionMatrix::new(n_classes);
    let mut video_j = ConfusionMatrix::new(n_classes);

    for dyad in &test.dyads {
        let mut preds: Vec<ClipPrediction> = Vec::with_capacity(dyad.clips.len());
        for clip in &dyad.clips {
            let pred = model.forward_clip(clip, dyad.max_clip_index(), variant)?;
            clip_i.record(clip.label_i_to_j, argmax(&pred.p_i_to_j));
            if let (Some(p_j), Some(label_j)) = (&pred.p_j_to_i, clip.label_j_to_i) {
                clip_j.record(label_j, argmax(p_j));
            }
            preds.push(pred);
        }
        let vp = predict_video(&preds)?;
        video_i.record(dyad.label_i_to_j(), argmax(&vp.p_i_to_j));
        if let (Some(p_j), Some(label_j)) = (&vp.p_j_to_i, dyad.label_j_to_i()) {
            video_j.record(label_j, argmax(p_j));
        }
    }

    let mut clip = vec![direction_metrics("i_to_j", &clip_i)?];
    let mut video = vec![direction_metrics("i_to_j", &video_i)?];
    if bidir {
        clip.push(direction_metrics("j_to_i", &clip_j)?);
        video.push(direction_metrics("j_to_i", &video_j)?);
    }
    let mean_uar = clip.iter().map(|d| d.uar).sum::<f64>() / clip.len() as f64;
    let video_mean_uar = video.iter().map(|d| d.uar).sum::<f64>() / video.len() as f64;

    Ok(MetricsReport {
        schema: model.schema.name.clone(),
        classes: model.schema.classes.clone(),
        n_clips: test.n_clips(),
        n_videos: test.n_dyads(),
        clip,
        video,
        mean_uar,
        video_mean_uar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix_gives_unit_recalls() {
        let mut cm = ConfusionMatrix::new(3);
        for c in 0..3 {
            for _ in 0..5 {
                cm.record(c, c);
            }
        }
        let recalls = recall_per_class(&cm);
        assert_eq!(recalls, vec![Some(1.0), Some(1.0), Some(1.0)]);
        assert_eq!(uar(&recalls).unwrap(), 1.0);
    }

    #[test]
    fn half_correct_row() {
        let mut cm = ConfusionMatrix::new(2);
        cm.record(0, 0);
        cm.record(0, 1);
        assert_eq!(recall_per_class(&cm)[0], Some(0.5));
    }

    #[test]
    fn empty_class_is_undefined_and_excluded() {
        let mut cm = ConfusionMatrix::new(3);
        cm.record(0, 0);
        cm.record(1, 0);
        let recalls = recall_per_class(&cm);
        assert_eq!(recalls[2], None);
        assert_eq!(uar(&recalls).unwrap(), 0.5);
        let all_undefined = vec![None, None];
        assert!(uar(&all_undefined).is_err());
    }

    #[test]
    fn published_row_aggregations() {
        let noxi = vec![Some(49.6), Some(61.9), Some(38.4), Some(52.8)];
        assert!((uar(&noxi).unwrap() - 50.7).abs() <= 0.05);
        let udiva = vec![Some(65.5), Some(53.3)];
        assert!((uar(&udiva).unwrap() - 59.4).abs() <= 0.05);
        let equal = vec![Some(0.37), Some(0.37), Some(0.37)];
        assert!((uar(&equal).unwrap() - 0.37).abs() < 1e-12);
    }

    #[test]
    fn uar_invariant_under_class_duplication() {
        let mut cm = ConfusionMatrix::new(2);
        cm.record(0, 0);
        cm.record(0, 1);
        cm.record(1, 1);
        let base = uar(&recall_per_class(&cm)).unwrap();
        // Duplicate class-0 samples: per-class recalls unchanged.
        let mut dup = cm.clone();
        dup.record(0, 0);
        dup.record(0, 0);
        dup.record(0, 1);
        dup.record(0, 1);
        let doubled = uar(&recall_per_class(&dup)).unwrap();
        assert!((base - doubled).abs() < 1e-12);
    }

    #[test]
    fn confusion_total_is_conserved() {
        let mut cm = ConfusionMatrix::new(4);
        for k in 0..17 {
            cm.record(k % 4, (k * 3) % 4);
        }
        assert_eq!(cm.total(), 17);
        let rows = cm.rows();
        let sum: usize = rows.iter().flatten().sum();
        assert_eq!(sum, 17);
    }
}
