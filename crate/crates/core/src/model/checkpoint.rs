//! Versioned text checkpoints with bit-exact 64-bit values.
//!
//! Floats are stored as the hex of their IEEE-754 bits, so save→load
//! round-trips are exact and repeated saves are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{LabelSchema, Standardizer, NUM_MODALITIES};
use crate::tensor::Tensor;

use super::{AsyrecModel, AsyrecParams, HeadParams, ModelError};
use crate::ne_agn::NeAgnParams;
use crate::temporal::TemporalEncoderParams;

const HEADER: &str = "#asyrec-checkpoint v1";

/// Free-form (key, value) pairs carried next to the parameters, e.g. the
/// training seed, fold index, and the fold's test dyads.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub entries: Vec<(String, String)>,
}

impl CheckpointMeta {
    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn push_f64(out: &mut String, v: f64) {
    let _ = write!(out, "{:016x}", v.to_bits());
}

fn push_tensor(out: &mut String, name: &str, t: &Tensor) {
    let shape: Vec<String> = t.shape().iter().map(|e| e.to_string()).collect();
    let _ = write!(out, "tensor {name} {}", shape.join("x"));
    for v in t.data() {
        out.push(' ');
        push_f64(out, *v);
    }
    out.push('\n');
}

pub fn save_model_string(model: &AsyrecModel, meta: &CheckpointMeta) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "schema {}", model.schema.name);
    let _ = writeln!(out, "classes {}", model.schema.classes.join(","));
    let _ = writeln!(out, "bidirectional {}", model.schema.bidirectional);
    let _ = writeln!(out, "dim {}", model.feature_dim);
    let mut slope = String::new();
    push_f64(&mut slope, model.params.ne_agn.leaky_slope);
    let _ = writeln!(out, "leaky_slope {slope}");
    let mut eps = String::new();
    push_f64(&mut eps, model.params.temporal.epsilon);
    let _ = writeln!(out, "epsilon {eps}");
    for (key, value) in &meta.entries {
        let _ = writeln!(out, "meta {key} {value}");
    }
    push_tensor(
        &mut out,
        "standardizer.mean",
        &flatten_stats(&model.standardizer.mean, model.feature_dim),
    );
    push_tensor(
        &mut out,
        "standardizer.std",
        &flatten_stats(&model.standardizer.std, model.feature_dim),
    );
    for (name, tensor) in model.params.named_tensors() {
        push_tensor(&mut out, &name, tensor);
    }
    out
}

fn flatten_stats(rows: &[Vec<f64>], d: usize) -> Tensor {
    let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Tensor::new(vec![NUM_MODALITIES, d], data).expect("stat rows are modality × dim")
}

fn unflatten_stats(t: &Tensor) -> Vec<Vec<f64>> {
    (0..NUM_MODALITIES).map(|m| t.row(m).to_vec()).collect()
}

pub fn save_model(model: &AsyrecModel, meta: &CheckpointMeta, path: &Path) -> Result<(), ModelError> {
    std::fs::write(path, save_model_string(model, meta))?;
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64, ModelError> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| ModelError::Checkpoint {
            line,
            msg: format!("bad float bits `{s}`"),
        })
}

pub fn load_model_string(text: &str) -> Result<(AsyrecModel, CheckpointMeta), ModelError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ModelError::Checkpoint {
        line: 1,
        msg: "empty checkpoint".into(),
    })?;
    if header != HEADER {
        return Err(ModelError::Checkpoint {
            line: 1,
            msg: format!("expected header `{HEADER}`"),
        });
    }

    let mut schema_name = None;
    let mut classes: Option<Vec<String>> = None;
    let mut bidirectional = None;
    let mut dim = None;
    let mut leaky_slope = None;
    let mut epsilon = None;
    let mut meta = CheckpointMeta::default();
    let mut tensors: Vec<(String, Tensor)> = Vec::new();

    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let (kind, rest) = line.split_once(' ').ok_or_else(|| ModelError::Checkpoint {
            line: line_no,
            msg: "expected `key value`".into(),
        })?;
        match kind {
            "schema" => schema_name = Some(rest.to_string()),
            "classes" => classes = Some(rest.split(',').map(String::from).collect()),
            "bidirectional" => {
                bidirectional = Some(rest.parse::<bool>().map_err(|_| ModelError::Checkpoint {
                    line: line_no,
                    msg: format!("bad bool `{rest}`"),
                })?)
            }
            "dim" => {
                dim = Some(rest.parse::<usize>().map_err(|_| ModelError::Checkpoint {
                    line: line_no,
                    msg: format!("bad dim `{rest}`"),
                })?)
            }
            "leaky_slope" => leaky_slope = Some(parse_f64(rest, line_no)?),
            "epsilon" => epsilon = Some(parse_f64(rest, line_no)?),
            "meta" => {
                let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.entries.push((key.to_string(), value.to_string()));
            }
            "tensor" => {
                let mut parts = rest.split(' ');
                let name = parts.next().unwrap_or_default().to_string();
                let shape_str = parts.next().ok_or_else(|| ModelError::Checkpoint {
                    line: line_no,
                    msg: "tensor line missing shape".into(),
                })?;
                let shape: Vec<usize> = shape_str
                    .split('x')
                    .map(|e| e.parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| ModelError::Checkpoint {
                        line: line_no,
                        msg: format!("bad shape `{shape_str}`"),
                    })?;
                let data: Vec<f64> = parts
                    .map(|p| parse_f64(p, line_no))
                    .collect::<Result<_, _>>()?;
                let tensor = Tensor::new(shape, data).map_err(|e| ModelError::Checkpoint {
                    line: line_no,
                    msg: e.to_string(),
                })?;
                tensors.push((name, tensor));
            }
            other => {
                return Err(ModelError::Checkpoint {
                    line: line_no,
                    msg: format!("unknown entry `{other}`"),
                })
            }
        }
    }

    let missing = |what: &str| ModelError::Checkpoint {
        line: 0,
        msg: format!("missing `{what}`"),
    };
    let schema = LabelSchema {
        name: schema_name.ok_or_else(|| missing("schema"))?,
        classes: classes.ok_or_else(|| missing("classes"))?,
        bidirectional: bidirectional.ok_or_else(|| missing("bidirectional"))?,
    };
    let d = dim.ok_or_else(|| missing("dim"))?;
    let leaky_slope = leaky_slope.ok_or_else(|| missing("leaky_slope"))?;
    let epsilon = epsilon.ok_or_else(|| missing("epsilon"))?;

    let mut take = |name: &str, shape: &[usize]| -> Result<Tensor, ModelError> {
        let pos = tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| missing(&format!("tensor {name}")))?;
        let (_, t) = tensors.remove(pos);
        if t.shape() != shape {
            return Err(ModelError::Checkpoint {
                line: 0,
                msg: format!("tensor {name}: shape {:?}, expected {:?}", t.shape(), shape),
            });
        }
        Ok(t)
    };

    let mean = unflatten_stats(&take("standardizer.mean", &[NUM_MODALITIES, d])?);
    let std = unflatten_stats(&take("standardizer.std", &[NUM_MODALITIES, d])?);
    let standardizer = Standardizer { dim: d, mean, std };

    let r = NUM_MODALITIES;
    let fused = 6 * d;
    let n_classes = schema.n_classes();
    let omega_i: Vec<Tensor> = (0..r)
        .map(|k| take(&format!("omega_i.{k}"), &[d]))
        .collect::<Result<_, _>>()?;
    let omega_j: Vec<Tensor> = (0..r)
        .map(|k| take(&format!("omega_j.{k}"), &[d]))
        .collect::<Result<_, _>>()?;
    let proj = take("proj", &[d, d])?;
    let edge_score: Vec<Tensor> = (0..r * (r - 1))
        .map(|k| take(&format!("edge_score.{k}"), &[2 * d]))
        .collect::<Result<_, _>>()?;
    let temporal = TemporalEncoderParams {
        weight: take("temporal.weight", &[d])?,
        bias: take("temporal.bias", &[d])?,
        epsilon,
    };
    let head_i_to_j = HeadParams {
        weight: take("head_i_to_j.weight", &[n_classes, fused])?,
        bias: take("head_i_to_j.bias", &[n_classes])?,
    };
    let head_j_to_i = if schema.bidirectional {
        Some(HeadParams {
            weight: take("head_j_to_i.weight", &[n_classes, fused])?,
            bias: take("head_j_to_i.bias", &[n_classes])?,
        })
    } else {
        None
    };

    let model = AsyrecModel {
        schema,
        feature_dim: d,
        params: AsyrecParams {
            ne_agn: NeAgnParams {
                omega_i,
                omega_j,
                proj,
                edge_score,
                leaky_slope,
            },
            temporal,
            head_i_to_j,
            head_j_to_i,
        },
        standardizer,
    };
    Ok((model, meta))
}

pub fn load_model(path: &Path) -> Result<(AsyrecModel, CheckpointMeta), ModelError> {
    load_model_string(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};

    #[test]
    fn round_trip_is_bit_exact_and_byte_identical() {
        let cfg = SynthConfig {
            feature_dim: 5,
            classes: 2,
            dyads_per_class: 2,
            clips_per_dyad: 2,
            noise: 0.3,
            ..SynthConfig::default()
        };
        let ds = synth_generate(&cfg, 31).unwrap();
        let mut model = AsyrecModel::new(ds.schema.clone(), 5, 31);
        model.standardizer = Standardizer::fit(&ds);
        // Non-trivial bit patterns in the heads.
        model.params.head_i_to_j.weight =
            Tensor::from_fn(vec![2, 30], |i| (i as f64 * 0.731).tan());

        let meta = CheckpointMeta::default()
            .with("seed", 31)
            .with("fold", 0)
            .with("test_dyads", "C1_000,C2_001");
        let text = save_model_string(&model, &meta);
        let (loaded, loaded_meta) = load_model_string(&text).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded_meta, meta);
        assert_eq!(save_model_string(&loaded, &loaded_meta), text);
        assert_eq!(loaded_meta.get("fold"), Some("0"));
    }

    #[test]
    fn unidirectional_model_round_trips() {
        let model = AsyrecModel::new(LabelSchema::udiva(), 4, 9);
        let text = save_model_string(&model, &CheckpointMeta::default());
        let (loaded, _) = load_model_string(&text).unwrap();
        assert!(loaded.params.head_j_to_i.is_none());
        assert_eq!(loaded, model);
    }

    #[test]
    fn corrupt_checkpoint_is_rejected_with_line() {
        let model = AsyrecModel::new(LabelSchema::udiva(), 4, 9);
        let text = save_model_string(&model, &CheckpointMeta::default());
        let broken = text.replace("tensor proj 4x4", "tensor proj 4x5");
        let err = load_model_string(&broken).unwrap_err();
        assert!(matches!(err, ModelError::Checkpoint { .. }));
    }
}
