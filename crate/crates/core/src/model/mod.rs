//! End-to-end per-clip model: node-edge attention trunk, periodic temporal
//! encoding, fusion, and direction-specific classification heads.
//!
//! The trunk is shared between the two directions; only the heads differ.
//! A unidirectional schema carries a single head.

mod checkpoint;

pub use checkpoint::{load_model, load_model_string, save_model, save_model_string, CheckpointMeta};

use thiserror::Error;

use crate::data::{ClipRecord, DataError, Dataset, LabelSchema, Modality, ModalityPair, Standardizer, NUM_MODALITIES};
use crate::ne_agn::{self, build_adjacency, BetaMatrix, EdgeWeights, NeAgnParams, NeAgnVars};
use crate::seeding::derive_seed;
use crate::temporal::{self, TemporalEncoderParams, TemporalVars};
use crate::tensor::{concat, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("feature dimension mismatch: model expects {expected}, clip has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("clip {clip} of dyad {dyad}: schema {schema} requires a reverse-direction label")]
    MissingLabel {
        dyad: String,
        clip: usize,
        schema: String,
    },
    #[error("schema mismatch: model trained on {model}, data uses {data}")]
    SchemaMismatch { model: String, data: String },
    #[error("predict_video: empty prediction sequence")]
    EmptyVideo,
    #[error("checkpoint line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

/// Affine classifier mapping the fused vector to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// `[n_classes × 6d]`
    pub weight: Tensor,
    /// `[n_classes]`
    pub bias: Tensor,
}

impl HeadParams {
    /// Zero init gives exactly uniform class distributions before training.
    pub fn zeros(n_classes: usize, fused_dim: usize) -> HeadParams {
        HeadParams {
            weight: Tensor::zeros(vec![n_classes, fused_dim]),
            bias: Tensor::zeros(vec![n_classes]),
        }
    }
}

/// Every learnable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyrecParams {
    pub ne_agn: NeAgnParams,
    pub temporal: TemporalEncoderParams,
    pub head_i_to_j: HeadParams,
    pub head_j_to_i: Option<HeadParams>,
}

impl AsyrecParams {
    pub fn init(schema: &LabelSchema, d: usize, seed: u64) -> AsyrecParams {
        let fused = 6 * d;
        AsyrecParams {
            ne_agn: NeAgnParams::init(d, derive_seed(seed, "params", 0)),
            temporal: TemporalEncoderParams::init(d, derive_seed(seed, "params", 1)),
            head_i_to_j: HeadParams::zeros(schema.n_classes(), fused),
            head_j_to_i: schema
                .bidirectional
                .then(|| HeadParams::zeros(schema.n_classes(), fused)),
        }
    }

    /// Stable (name, tensor) enumeration; the order defines the optimizer
    /// slot layout and the checkpoint contents.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (k, t) in self.ne_agn.omega_i.iter().enumerate() {
            out.push((format!("omega_i.{k}"), t));
        }
        for (k, t) in self.ne_agn.omega_j.iter().enumerate() {
            out.push((format!("omega_j.{k}"), t));
        }
        out.push(("proj".into(), &self.ne_agn.proj));
        for (k, t) in self.ne_agn.edge_score.iter().enumerate() {
            out.push((format!("edge_score.{k}"), t));
        }
        out.push(("temporal.weight".into(), &self.temporal.weight));
        out.push(("temporal.bias".into(), &self.temporal.bias));
        out.push(("head_i_to_j.weight".into(), &self.head_i_to_j.weight));
        out.push(("head_i_to_j.bias".into(), &self.head_i_to_j.bias));
        if let Some(h) = &self.head_j_to_i {
            out.push(("head_j_to_i.weight".into(), &h.weight));
            out.push(("head_j_to_i.bias".into(), &h.bias));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.ne_agn.omega_i.iter_mut());
        out.extend(self.ne_agn.omega_j.iter_mut());
        out.push(&mut self.ne_agn.proj);
        out.extend(self.ne_agn.edge_score.iter_mut());
        out.push(&mut self.temporal.weight);
        out.push(&mut self.temporal.bias);
        out.push(&mut self.head_i_to_j.weight);
        out.push(&mut self.head_i_to_j.bias);
        if let Some(h) = &mut self.head_j_to_i {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    fn assemble_vars(&self, mut next: impl FnMut(&Tensor) -> Var) -> ModelVars {
        ModelVars {
            ne: NeAgnVars {
                omega_i: self.ne_agn.omega_i.iter().map(&mut next).collect(),
                omega_j: self.ne_agn.omega_j.iter().map(&mut next).collect(),
                proj: next(&self.ne_agn.proj),
                edge_score: self.ne_agn.edge_score.iter().map(&mut next).collect(),
                leaky_slope: self.ne_agn.leaky_slope,
            },
            temporal: TemporalVars {
                weight: next(&self.temporal.weight),
                bias: next(&self.temporal.bias),
                epsilon: self.temporal.epsilon,
            },
            head_i_to_j: HeadVars {
                weight: next(&self.head_i_to_j.weight),
                bias: next(&self.head_i_to_j.bias),
            },
            head_j_to_i: self.head_j_to_i.as_ref().map(|h| HeadVars {
                weight: next(&h.weight),
                bias: next(&h.bias),
            }),
        }
    }

    /// Binds every tensor onto `tape` in enumeration order.
    pub fn bind(&self, tape: &Tape, trainable: bool) -> ModelVars {
        self.assemble_vars(|t| {
            if trainable {
                tape.parameter(t)
            } else {
                tape.constant(t)
            }
        })
    }

    /// Rebuilds the var structure from a slice in enumeration order
    /// (gradient-check plumbing).
    pub fn vars_from_ordered(&self, vars: &[Var]) -> ModelVars {
        assert_eq!(vars.len(), self.named_tensors().len());
        let mut it = vars.iter();
        self.assemble_vars(|_| it.next().expect("length checked").clone())
    }
}

#[derive(Debug, Clone)]
pub struct HeadVars {
    pub weight: Var,
    pub bias: Var,
}

#[derive(Debug, Clone)]
pub struct ModelVars {
    pub ne: NeAgnVars,
    pub temporal: TemporalVars,
    pub head_i_to_j: HeadVars,
    pub head_j_to_i: Option<HeadVars>,
}

/// Inference-time structural switches; the default is the full model.
/// Masks never touch parameters.
#[derive(Debug, Clone)]
pub struct ForwardVariant {
    /// When false, node attention and its residual rescaling are bypassed.
    pub use_node_attention: bool,
    /// When false, edge weights are the uniform admissible distribution.
    pub use_edge_attention: bool,
    /// Zeroes both directed edges of the pair in both flow directions.
    pub masked_pair: Option<ModalityPair>,
    /// Rescale remaining edge weights per target after pair masking.
    pub renormalize_masked: bool,
    /// Replaces the temporal encoding with the zero vector.
    pub zero_temporal: bool,
}

impl Default for ForwardVariant {
    fn default() -> Self {
        ForwardVariant {
            use_node_attention: true,
            use_edge_attention: true,
            masked_pair: None,
            renormalize_masked: true,
            zero_temporal: false,
        }
    }
}

impl ForwardVariant {
    pub fn no_node_attention() -> Self {
        ForwardVariant {
            use_node_attention: false,
            ..ForwardVariant::default()
        }
    }

    pub fn no_edge_attention() -> Self {
        ForwardVariant {
            use_edge_attention: false,
            ..ForwardVariant::default()
        }
    }

    pub fn mask_pair(pair: ModalityPair) -> Self {
        ForwardVariant {
            masked_pair: Some(pair),
            ..ForwardVariant::default()
        }
    }

    pub fn zeroed_temporal() -> Self {
        ForwardVariant {
            zero_temporal: true,
            ..ForwardVariant::default()
        }
    }
}

/// Per-clip class distributions, one per labeled direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrediction {
    pub clip_index: usize,
    pub p_i_to_j: Vec<f64>,
    pub p_j_to_i: Option<Vec<f64>>,
}

/// Video-level distributions: the mean of the clip-level ones.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPrediction {
    pub p_i_to_j: Vec<f64>,
    pub p_j_to_i: Option<Vec<f64>>,
}

/// The trained artifact: parameters plus the feature standardization fitted
/// on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyrecModel {
    pub schema: LabelSchema,
    pub feature_dim: usize,
    pub params: AsyrecParams,
    pub standardizer: Standardizer,
}

impl AsyrecModel {
    pub fn new(schema: LabelSchema, feature_dim: usize, seed: u64) -> AsyrecModel {
        AsyrecModel {
            params: AsyrecParams::init(&schema, feature_dim, seed),
            standardizer: Standardizer::identity(feature_dim),
            schema,
            feature_dim,
        }
    }

    fn check_clip(&self, clip: &ClipRecord) -> Result<(), ModelError> {
        for bundle in [&clip.person_i, &clip.person_j] {
            match bundle.uniform_dim() {
                Some(d) if d == self.feature_dim => {}
                other => {
                    return Err(ModelError::DimensionMismatch {
                        expected: self.feature_dim,
                        got: other.unwrap_or(0),
                    })
                }
            }
        }
        Ok(())
    }

    /// Forward pass recorded on `tape`, returning per-direction logits.
    /// `max_index` is the dyad's maximum clip index.
    pub fn logits_on(
        &self,
        tape: &Tape,
        vars: &ModelVars,
        clip: &ClipRecord,
        max_index: usize,
        variant: &ForwardVariant,
    ) -> Result<(Var, Option<Var>), ModelError> {
        self.check_clip(clip)?;
        let std_i = self.standardizer.apply_bundle(&clip.person_i);
        let std_j = self.standardizer.apply_bundle(&clip.person_j);
        let rows = |b: &crate::data::ModalityBundle| -> Vec<Var> {
            Modality::ALL
                .iter()
                .map(|&m| tape.constant(&Tensor::vector(b.row(m).to_vec())))
                .collect()
        };
        let rows_i = rows(&std_i);
        let rows_j = rows(&std_j);

        let (h_i, h_j) = if variant.use_node_attention {
            let w_i = ne_agn::node_attention(&rows_i, &vars.ne.omega_i, vars.ne.leaky_slope)?;
            let w_j = ne_agn::node_attention(&rows_j, &vars.ne.omega_j, vars.ne.leaky_slope)?;
            (
                ne_agn::node_residual_update(&rows_i, &w_i)?,
                ne_agn::node_residual_update(&rows_j, &w_j)?,
            )
        } else {
            (rows_i.clone(), rows_j.clone())
        };

        let adj = build_adjacency(NUM_MODALITIES);
        let mut beta = if variant.use_edge_attention {
            ne_agn::edge_attention(&h_i, &h_j, &vars.ne, &adj)?
        } else {
            EdgeWeights {
                i_to_j: BetaMatrix::uniform(tape, &adj),
                j_to_i: BetaMatrix::uniform(tape, &adj),
            }
        };
        if let Some(pair) = variant.masked_pair {
            beta = EdgeWeights {
                i_to_j: beta.i_to_j.masked(pair, variant.renormalize_masked)?,
                j_to_i: beta.j_to_i.masked(pair, variant.renormalize_masked)?,
            };
        }

        let (hat_i, hat_j) = ne_agn::message_update(&h_i, &h_j, &beta, &adj)?;
        let graph_i = ne_agn::pool_graph(&hat_i)?;
        let graph_j = ne_agn::pool_graph(&hat_j)?;

        let phi = if variant.zero_temporal {
            tape.constant(&Tensor::zeros(vec![self.feature_dim]))
        } else {
            temporal::periodic_encode(clip.clip_index, max_index, &vars.temporal)?
        };

        let fused = |person_rows: &[Var], graph: &Var| -> Result<Var, TensorError> {
            let mut parts = person_rows.to_vec();
            parts.push(graph.clone());
            parts.push(phi.clone());
            concat(&parts, 0)
        };
        let head = |h: &HeadVars, fused: &Var| -> Result<Var, TensorError> {
            h.weight.matvec(fused)?.add(&h.bias)
        };

        let logits_i = head(&vars.head_i_to_j, &fused(&rows_i, &graph_i)?)?;
        let logits_j = match &vars.head_j_to_i {
            Some(h) => Some(head(h, &fused(&rows_j, &graph_j)?)?),
            None => None,
        };
        Ok((logits_i, logits_j))
    }

    /// Per-clip training loss on `tape`: cross-entropy per labeled direction,
    /// summed unweighted.
    pub fn clip_loss_on(
        &self,
        tape: &Tape,
        vars: &ModelVars,
        clip: &ClipRecord,
        max_index: usize,
        variant: &ForwardVariant,
    ) -> Result<Var, ModelError> {
        let (logits_i, logits_j) = self.logits_on(tape, vars, clip, max_index, variant)?;
        let mut loss = logits_i.cross_entropy(clip.label_i_to_j)?;
        if let Some(logits_j) = logits_j {
            let label_j = clip.label_j_to_i.ok_or_else(|| ModelError::MissingLabel {
                dyad: clip.dyad_id.clone(),
                clip: clip.clip_index,
                schema: self.schema.name.clone(),
            })?;
            loss = loss.add(&logits_j.cross_entropy(label_j)?)?;
        }
        Ok(loss)
    }

    /// Convenience single-clip inference on a fresh tape.
    pub fn forward_clip(
        &self,
        clip: &ClipRecord,
        max_index: usize,
        variant: &ForwardVariant,
    ) -> Result<ClipPrediction, ModelError> {
        let tape = Tape::new();
        let vars = self.params.bind(&tape, false);
        let (logits_i, logits_j) = self.logits_on(&tape, &vars, clip, max_index, variant)?;
        Ok(ClipPrediction {
            clip_index: clip.clip_index,
            p_i_to_j: logits_i.softmax(0)?.value().data().to_vec(),
            p_j_to_i: match logits_j {
                Some(l) => Some(l.softmax(0)?.value().data().to_vec()),
                None => None,
            },
        })
    }

    pub fn check_schema(&self, dataset: &Dataset) -> Result<(), ModelError> {
        if self.schema != dataset.schema || self.feature_dim != dataset.feature_dim {
            return Err(ModelError::SchemaMismatch {
                model: format!("{} (d={})", self.schema.name, self.feature_dim),
                data: format!("{} (d={})", dataset.schema.name, dataset.feature_dim),
            });
        }
        Ok(())
    }
}

/// Reporting loss from already-computed probabilities: negative log
/// probability of the true label, summed over labeled directions.
pub fn loss_value(pred: &ClipPrediction, clip: &ClipRecord) -> Result<f64, ModelError> {
    let mut total = -pred.p_i_to_j[clip.label_i_to_j].ln();
    if let Some(p_j) = &pred.p_j_to_i {
        let label_j = clip.label_j_to_i.ok_or_else(|| ModelError::MissingLabel {
            dyad: clip.dyad_id.clone(),
            clip: clip.clip_index,
            schema: "bidirectional".into(),
        })?;
        total += -p_j[label_j].ln();
    }
    Ok(total)
}

/// Mean of clip-level distributions per direction; the argmax is the
/// video-level label.
pub fn predict_video(preds: &[ClipPrediction]) -> Result<VideoPrediction, ModelError> {
    let first = preds.first().ok_or(ModelError::EmptyVideo)?;
    let n = preds.len() as f64;
    let n_classes = first.p_i_to_j.len();
    let mut p_i = vec![0.0; n_classes];
    let mut p_j = first.p_j_to_i.as_ref().map(|_| vec![0.0; n_classes]);
    for pred in preds {
        for (acc, v) in p_i.iter_mut().zip(&pred.p_i_to_j) {
            *acc += v / n;
        }
        if let (Some(acc_j), Some(pj)) = (&mut p_j, &pred.p_j_to_i) {
            for (acc, v) in acc_j.iter_mut().zip(pj) {
                *acc += v / n;
            }
        }
    }
    Ok(VideoPrediction {
        p_i_to_j: p_i,
        p_j_to_i: p_j,
    })
}
