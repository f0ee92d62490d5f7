//! Periodic temporal encoding of clip indices.
//!
//! The scalar clip index is upsampled into d dimensions by an affine map and
//! divided by the upsampled maximum index, so the phase sweeps one full cycle
//! over a video. Even indices map through sine, odd through cosine.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::seeding::derive_seed;
use crate::tensor::{Tensor, TensorError, Var};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Upsampling weights plus the divide-by-zero guard.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEncoderParams {
    /// `[d]`; conceptually a d×1 map applied to the scalar index.
    pub weight: Tensor,
    pub bias: Tensor,
    pub epsilon: f64,
}

impl TemporalEncoderParams {
    /// Weight entries uniform in ±1/√d, bias zero.
    pub fn init(d: usize, seed: u64) -> TemporalEncoderParams {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "temporal-init", 0));
        let bound = 1.0 / (d as f64).sqrt();
        TemporalEncoderParams {
            weight: Tensor::from_fn(vec![d], |_| rng.gen_range(-bound..=bound)),
            bias: Tensor::zeros(vec![d]),
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Tape-bound view of [`TemporalEncoderParams`].
#[derive(Debug, Clone)]
pub struct TemporalVars {
    pub weight: Var,
    pub bias: Var,
    pub epsilon: f64,
}

/// Affine upsampling of a clip index into d dimensions.
pub fn upsample_time(t: usize, params: &TemporalVars) -> Result<Var, TensorError> {
    params.weight.scale(t as f64).add(&params.bias)
}

/// Parity-selected periodic encoding of clip index `t` within a video whose
/// maximum clip index is `max_index`. Gradients flow to the upsampling
/// parameters through both the index and the maximum-index branches.
pub fn periodic_encode(
    t: usize,
    max_index: usize,
    params: &TemporalVars,
) -> Result<Var, TensorError> {
    let upsampled = upsample_time(t, params)?;
    let upsampled_max = upsample_time(max_index, params)?;
    let denom = upsampled_max.clamp_min(params.epsilon);
    let angle = upsampled.div(&denom)?.scale(2.0 * std::f64::consts::PI);
    Ok(if t % 2 == 0 { angle.sin() } else { angle.cos() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn bind(tape: &Tape, params: &TemporalEncoderParams) -> TemporalVars {
        TemporalVars {
            weight: tape.constant(&params.weight),
            bias: tape.constant(&params.bias),
            epsilon: params.epsilon,
        }
    }

    fn with_values(weight: Vec<f64>, bias: Vec<f64>) -> TemporalEncoderParams {
        TemporalEncoderParams {
            weight: Tensor::vector(weight),
            bias: Tensor::vector(bias),
            epsilon: DEFAULT_EPSILON,
        }
    }

    #[test]
    fn upsample_constant_weight_cases() {
        let tape = Tape::new();
        let params = bind(&tape, &with_values(vec![0.0, 0.0], vec![2.5, -1.0]));
        for t in [0, 3, 11] {
            assert_eq!(upsample_time(t, &params).unwrap().value().data(), &[2.5, -1.0]);
        }
    }

    #[test]
    fn upsample_is_affine_in_t() {
        let tape = Tape::new();
        let params = bind(&tape, &with_values(vec![0.4, -0.2], vec![0.1, 0.7]));
        let at = |t: usize| upsample_time(t, &params).unwrap().value();
        assert_eq!(at(0).data(), &[0.1, 0.7]);
        let step_a: Vec<f64> = at(2).data().iter().zip(at(1).data()).map(|(a, b)| a - b).collect();
        let step_b: Vec<f64> = at(1).data().iter().zip(at(0).data()).map(|(a, b)| a - b).collect();
        for (a, b) in step_a.iter().zip(&step_b) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_period_at_maximum_index() {
        let tape = Tape::new();
        // Even maximum index: sine of a full cycle is 0.
        let params = bind(&tape, &with_values(vec![1.0; 3], vec![0.0; 3]));
        let phi = periodic_encode(10, 10, &params).unwrap().value();
        for v in phi.data() {
            assert!(v.abs() < 1e-12, "sin(2π) per component, got {v}");
        }
        // Odd maximum index: cosine of a full cycle is 1.
        let phi = periodic_encode(9, 9, &params).unwrap().value();
        for v in phi.data() {
            assert!((v - 1.0).abs() < 1e-12, "cos(2π) per component, got {v}");
        }
    }

    #[test]
    fn output_bounded_for_random_params() {
        let tape = Tape::new();
        for seed in 0..5 {
            let p = TemporalEncoderParams::init(4, seed);
            let params = bind(&tape, &p);
            for t in 0..=9 {
                let phi = periodic_encode(t, 9, &params).unwrap().value();
                for v in phi.data() {
                    assert!((-1.0..=1.0).contains(v), "seed {seed} t {t}: {v}");
                }
            }
        }
    }

    #[test]
    fn parity_selects_sine_or_cosine() {
        let tape = Tape::new();
        let p = TemporalEncoderParams::init(6, 33);
        let params = bind(&tape, &p);
        let max_index = 11;
        for t in 0..=max_index {
            let phi = periodic_encode(t, max_index, &params).unwrap().value();
            let up = upsample_time(t, &params).unwrap().value();
            let up_max = upsample_time(max_index, &params).unwrap().value();
            for k in 0..6 {
                let ratio = up.data()[k] / up_max.data()[k].max(p.epsilon);
                let angle = 2.0 * std::f64::consts::PI * ratio;
                let expected = if t % 2 == 0 { angle.sin() } else { angle.cos() };
                assert!((phi.data()[k] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn even_components_sweep_one_monotone_cycle() {
        let tape = Tape::new();
        // Positive frozen weights, zero bias: phase is 2π·t/T, monotone 0→2π.
        let params = bind(&tape, &with_values(vec![0.8, 0.25], vec![0.0, 0.0]));
        let max_index = 12;
        let mut prev_phase = -1.0;
        for t in 0..=max_index {
            let up = upsample_time(t, &params).unwrap().value();
            let up_max = upsample_time(max_index, &params).unwrap().value();
            let phase = up.data()[0] / up_max.data()[0];
            assert!(phase >= prev_phase, "phase must increase");
            prev_phase = phase;
        }
        assert_eq!(prev_phase, 1.0, "phase completes exactly one cycle");
        let phi0 = periodic_encode(0, max_index, &params).unwrap().value();
        let phi_max = periodic_encode(max_index, max_index, &params).unwrap().value();
        for (a, b) in phi0.data().iter().zip(phi_max.data()) {
            assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences_away_from_clamp() {
        // Positive weights keep the upsampled maximum well above epsilon.
        let weight = Tensor::vector(vec![0.9, 0.4, 0.7]);
        let bias = Tensor::vector(vec![0.05, -0.02, 0.1]);
        let err = crate::tensor::grad_check(
            |tape, vars| {
                let params = TemporalVars {
                    weight: vars[0].clone(),
                    bias: vars[1].clone(),
                    epsilon: DEFAULT_EPSILON,
                };
                let phi = periodic_encode(3, 9, &params)?;
                let readout = tape.constant(&Tensor::vector(vec![0.3, -1.1, 0.7]));
                phi.dot(&readout)
            },
            &[weight, bias],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "error {err}");
    }
}
