//! Node-edge attention over the two interactants' modality nodes.
//!
//! Each person contributes one node per modality. Intra-person node attention
//! rescales a person's own nodes; cross-person edge attention weights the
//! counterpart's nodes per target modality; message passing aggregates the
//! counterpart's updated nodes into each person's graph knowledge vector.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::{ModalityPair, NUM_MODALITIES};
use crate::seeding::derive_seed;
use crate::tensor::{concat, Tape, Tensor, TensorError, Var};

/// Cross-person connectivity over modality nodes: ones off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    r: usize,
    mask: Vec<bool>,
}

/// Connections exist only between distinct modalities of the two persons.
pub fn build_adjacency(r: usize) -> Adjacency {
    let mut mask = vec![false; r * r];
    for u in 0..r {
        for v in 0..r {
            mask[u * r + v] = u != v;
        }
    }
    Adjacency { r, mask }
}

impl Adjacency {
    pub fn size(&self) -> usize {
        self.r
    }

    pub fn connected(&self, u: usize, v: usize) -> bool {
        self.mask[u * self.r + v]
    }

    pub fn ones_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.r, self.r],
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask length matches r*r")
    }
}

/// Learnable pieces of the graph layer, as plain tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct NeAgnParams {
    /// Node-attention vector per modality for person i, rows of shape `[d]`.
    pub omega_i: Vec<Tensor>,
    /// Node-attention vector per modality for person j.
    pub omega_j: Vec<Tensor>,
    /// Shared projection applied before edge scoring, `[d×d]`.
    pub proj: Tensor,
    /// One scoring vector of shape `[2d]` per ordered modality pair (u, v),
    /// u≠v, shared by both person-flow directions.
    pub edge_score: Vec<Tensor>,
    pub leaky_slope: f64,
}

/// Index of the scoring vector for the ordered pair (u, v), u != v.
pub fn pair_index(u: usize, v: usize, r: usize) -> usize {
    debug_assert!(u != v && u < r && v < r);
    u * (r - 1) + if v < u { v } else { v - 1 }
}

impl NeAgnParams {
    pub fn init(d: usize, seed: u64) -> NeAgnParams {
        let r = NUM_MODALITIES;
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "ne-agn-init", 0));
        let bound = 1.0 / (d as f64).sqrt();
        // The projection starts wide and the edge scores moderate: scoring
        // then sees large projected activations, so small score adjustments
        // already produce sharp input-dependent edge weights.
        let proj_bound = 5.0 / (d as f64).sqrt();
        let edge_bound = 4.0 / (2.0 * d as f64).sqrt();
        let mut uniform_tensor = |shape: Vec<usize>, b: f64| {
            Tensor::from_fn(shape, |_| rng.gen_range(-b..=b))
        };
        NeAgnParams {
            omega_i: (0..r).map(|_| uniform_tensor(vec![d], bound)).collect(),
            omega_j: (0..r).map(|_| uniform_tensor(vec![d], bound)).collect(),
            proj: uniform_tensor(vec![d, d], proj_bound),
            edge_score: (0..r * (r - 1))
                .map(|_| uniform_tensor(vec![2 * d], edge_bound))
                .collect(),
            leaky_slope: 0.01,
        }
    }
}

/// Tape-bound view of [`NeAgnParams`].
#[derive(Debug, Clone)]
pub struct NeAgnVars {
    pub omega_i: Vec<Var>,
    pub omega_j: Vec<Var>,
    pub proj: Var,
    pub edge_score: Vec<Var>,
    pub leaky_slope: f64,
}

/// Per-modality attention weights for one person: softmax over the
/// leaky-rectified inner products of each node with its attention vector.
pub fn node_attention(rows: &[Var], omega: &[Var], slope: f64) -> Result<Var, TensorError> {
    if rows.is_empty() {
        return Err(TensorError::EmptyInput { op: "node_attention" });
    }
    let logits: Vec<Var> = rows
        .iter()
        .zip(omega)
        .map(|(h, w)| h.dot(w))
        .collect::<Result<_, _>>()?;
    let stacked = concat(&logits, 0)?;
    stacked.leaky_relu(slope)?.softmax(0)
}

/// Residual rescaling: row r becomes `h_r + h_r * W_r`.
pub fn node_residual_update(rows: &[Var], weights: &Var) -> Result<Vec<Var>, TensorError> {
    rows.iter()
        .enumerate()
        .map(|(r, h)| {
            let w = weights.element(r)?;
            h.add(&h.scale_by(&w)?)
        })
        .collect()
}

/// Normalized cross-person edge weights for one flow direction. Entries on
/// inadmissible edges are `None` and materialize as exact zeros.
#[derive(Debug, Clone)]
pub struct BetaMatrix {
    r: usize,
    entries: Vec<Option<Var>>,
}

impl BetaMatrix {
    pub fn size(&self) -> usize {
        self.r
    }

    pub fn get(&self, u: usize, v: usize) -> Option<&Var> {
        self.entries[u * self.r + v].as_ref()
    }

    /// Incoming admissible (source, weight) pairs for target `v`.
    pub fn column(&self, v: usize) -> Vec<(usize, Var)> {
        (0..self.r)
            .filter_map(|u| self.entries[u * self.r + v].clone().map(|w| (u, w)))
            .collect()
    }

    /// Materializes the r×r weight matrix; masked entries are exactly 0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.r, self.r],
            self.entries
                .iter()
                .map(|e| e.as_ref().map_or(0.0, Var::item))
                .collect(),
        )
        .expect("entry count matches r*r")
    }

    /// Uniform admissible distribution: 1/(sources per target).
    pub fn uniform(tape: &Tape, adj: &Adjacency) -> BetaMatrix {
        let r = adj.size();
        let mut entries = vec![None; r * r];
        for v in 0..r {
            let sources: Vec<usize> = (0..r).filter(|&u| adj.connected(u, v)).collect();
            if sources.is_empty() {
                continue;
            }
            let w = 1.0 / sources.len() as f64;
            for u in sources {
                entries[u * r + v] = Some(tape.scalar_constant(w));
            }
        }
        BetaMatrix { r, entries }
    }

    /// Zeroes both directed edges of `pair`; when `renormalize` is set the
    /// remaining weights of each affected target are rescaled to sum to 1.
    pub fn masked(&self, pair: ModalityPair, renormalize: bool) -> Result<BetaMatrix, TensorError> {
        let r = self.r;
        let mut entries: Vec<Option<Var>> = self.entries.clone();
        for u in 0..r {
            for v in 0..r {
                if pair.contains_edge(u, v) {
                    entries[u * r + v] = None;
                }
            }
        }
        if renormalize {
            for v in 0..r {
                let remaining: Vec<usize> = (0..r)
                    .filter(|&u| entries[u * r + v].is_some())
                    .collect();
                let changed = (0..r).any(|u| {
                    self.entries[u * r + v].is_some() && entries[u * r + v].is_none()
                });
                if !changed || remaining.is_empty() {
                    continue;
                }
                let mut total: Option<Var> = None;
                for &u in &remaining {
                    let w = entries[u * r + v].clone().unwrap();
                    total = Some(match total {
                        Some(t) => t.add(&w)?,
                        None => w,
                    });
                }
                let total = total.unwrap();
                for &u in &remaining {
                    let w = entries[u * r + v].clone().unwrap();
                    entries[u * r + v] = Some(w.div(&total)?);
                }
            }
        }
        Ok(BetaMatrix { r, entries })
    }
}

/// Edge weights for both person-flow directions.
#[derive(Debug, Clone)]
pub struct EdgeWeights {
    /// Sources are person i's nodes, targets person j's.
    pub i_to_j: BetaMatrix,
    /// Sources are person j's nodes, targets person i's.
    pub j_to_i: BetaMatrix,
}

fn directed_edge_attention(
    h_src: &[Var],
    h_tgt: &[Var],
    params: &NeAgnVars,
    adj: &Adjacency,
) -> Result<BetaMatrix, TensorError> {
    let r = adj.size();
    let proj_src: Vec<Var> = h_src
        .iter()
        .map(|h| params.proj.matvec(h))
        .collect::<Result<_, _>>()?;
    let proj_tgt: Vec<Var> = h_tgt
        .iter()
        .map(|h| params.proj.matvec(h))
        .collect::<Result<_, _>>()?;

    let mut entries = vec![None; r * r];
    for v in 0..r {
        let sources: Vec<usize> = (0..r).filter(|&u| adj.connected(u, v)).collect();
        if sources.is_empty() {
            continue;
        }
        let logits: Vec<Var> = sources
            .iter()
            .map(|&u| {
                let pair = concat(&[proj_src[u].clone(), proj_tgt[v].clone()], 0)?;
                params.edge_score[pair_index(u, v, r)].dot(&pair)
            })
            .collect::<Result<_, _>>()?;
        let weights = concat(&logits, 0)?.softmax(0)?;
        for (slot, &u) in sources.iter().enumerate() {
            entries[u * r + v] = Some(weights.element(slot)?);
        }
    }
    Ok(BetaMatrix { r, entries })
}

/// Edge attention over the cross-person graph, both flow directions, with
/// scoring vectors shared between them.
pub fn edge_attention(
    h_i: &[Var],
    h_j: &[Var],
    params: &NeAgnVars,
    adj: &Adjacency,
) -> Result<EdgeWeights, TensorError> {
    Ok(EdgeWeights {
        i_to_j: directed_edge_attention(h_i, h_j, params, adj)?,
        j_to_i: directed_edge_attention(h_j, h_i, params, adj)?,
    })
}

fn aggregate(
    counterpart: &[Var],
    beta: &BetaMatrix,
    adj: &Adjacency,
) -> Result<Vec<Var>, TensorError> {
    let r = adj.size();
    (0..r)
        .map(|v| {
            let mut sum: Option<Var> = None;
            for (u, w) in beta.column(v) {
                if !adj.connected(u, v) {
                    continue;
                }
                let term = counterpart[u].scale_by(&w)?;
                sum = Some(match sum {
                    Some(s) => s.add(&term)?,
                    None => term,
                });
            }
            let total = match sum {
                Some(s) => s,
                None => counterpart[0].scale(0.0),
            };
            Ok(total.relu())
        })
        .collect()
}

/// Cross-person message passing: each person's updated node `v` aggregates
/// the counterpart's updated nodes, rectified.
pub fn message_update(
    h_i: &[Var],
    h_j: &[Var],
    beta: &EdgeWeights,
    adj: &Adjacency,
) -> Result<(Vec<Var>, Vec<Var>), TensorError> {
    let hat_i = aggregate(h_j, &beta.j_to_i, adj)?;
    let hat_j = aggregate(h_i, &beta.i_to_j, adj)?;
    Ok((hat_i, hat_j))
}

/// Average pooling over a person's node rows.
pub fn pool_graph(rows: &[Var]) -> Result<Var, TensorError> {
    let d = rows
        .first()
        .ok_or(TensorError::EmptyInput { op: "pool_graph" })?
        .numel();
    let as_rows: Vec<Var> = rows
        .iter()
        .map(|r| r.reshape(vec![1, d]))
        .collect::<Result<_, _>>()?;
    concat(&as_rows, 0)?.reduce_mean(0)
}
