//! Central-difference gradient oracle for reverse-mode results.

use super::{Tape, Tensor, TensorError, Var};

/// Compares reverse-mode gradients of `f` against central finite differences.
///
/// `f` must be a deterministic scalar-valued function of the given parameter
/// tensors. Returns the maximum over all coordinates of
/// `|ad - fd| / max(1, |ad|, |fd|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<f64, TensorError>
where
    F: Fn(&Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.parameter(t)).collect();
        Ok(f(&tape, &vars)?.item())
    };

    // Analytic gradients from one reverse pass.
    let tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.parameter(t)).collect();
    let loss = f(&tape, &vars)?;
    tape.backward(&loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .map(|v| tape.grad(v))
        .collect::<Result<_, _>>()?;

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_err = 0.0f64;
    for (pi, param) in params.iter().enumerate() {
        for ci in 0..param.numel() {
            let orig = param.data()[ci];
            work[pi].data_mut()[ci] = orig + step;
            let plus = eval(&work)?;
            work[pi].data_mut()[ci] = orig - step;
            let minus = eval(&work)?;
            work[pi].data_mut()[ci] = orig;

            let fd = (plus - minus) / (2.0 * step);
            let ad = analytic[pi].data()[ci];
            let err = (ad - fd).abs() / 1.0f64.max(ad.abs()).max(fd.abs());
            max_err = max_err.max(err);
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exact() {
        let p = Tensor::vector(vec![0.5, -1.2, 2.0, 3.3]);
        let err = grad_check(
            |_, vars| {
                let sq = vars[0].mul(&vars[0])?;
                sq.reduce_sum(0)
            },
            &[p],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-8, "error {err}");
    }

    #[test]
    fn constant_function_gives_zero_error() {
        let p = Tensor::vector(vec![1.0, 2.0]);
        let err = grad_check(
            |tape, vars| {
                let c = tape.scalar_constant(7.0);
                // Consume vars with a zero-weighted term so they stay on the tape.
                let z = vars[0].scale(0.0).reduce_sum(0)?;
                c.add(&z)
            },
            &[p],
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn matmul_backward_matches_finite_differences() {
        let mut seed = 0x2545f4914f6cdd1du64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = Tensor::matrix(4, 5, (0..20).map(|_| next()).collect()).unwrap();
        let b = Tensor::matrix(5, 2, (0..10).map(|_| next()).collect()).unwrap();
        let err = grad_check(
            |_, vars| {
                let c = vars[0].matmul(&vars[1])?;
                let flat = c.reshape(vec![8])?;
                // Weighted sum so every output entry matters differently.
                let w: Vec<f64> = (0..8).map(|i| (i as f64 + 1.0) * 0.3).collect();
                let wv = flat.tape().constant(&Tensor::vector(w));
                flat.dot(&wv)
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "error {err}");
    }

    #[test]
    fn softmax_jacobian_matches_finite_differences() {
        let x = Tensor::vector(vec![0.3, -0.9, 1.4, 0.2, -0.1, 0.8]);
        for target in 0..6 {
            let err = grad_check(
                |_, vars| {
                    let y = vars[0].softmax(0)?;
                    y.element(target)
                },
                std::slice::from_ref(&x),
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-6, "row {target} error {err}");
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = Tensor::vector(vec![0.4, -1.1, 0.9, 0.05]);
        let err = grad_check(|_, vars| vars[0].cross_entropy(2), &[logits], 1e-5).unwrap();
        assert!(err <= 1e-5, "error {err}");
    }

    #[test]
    fn composed_softmax_cross_entropy_matches() {
        let w = Tensor::matrix(3, 4, (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect()).unwrap();
        let err = grad_check(
            |tape, vars| {
                let x = tape.constant(&Tensor::vector(vec![0.2, -0.4, 1.1, 0.7]));
                let logits = vars[0].matvec(&x)?;
                logits.cross_entropy(1)
            },
            &[w],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "error {err}");
    }

    #[test]
    fn reduce_mean_gradient_matches() {
        let x = Tensor::matrix(2, 3, vec![0.1, 0.5, -0.7, 1.2, 0.0, 2.0]).unwrap();
        let err = grad_check(
            |_, vars| {
                let m = vars[0].reduce_mean(0)?;
                let sq = m.mul(&m)?;
                sq.reduce_sum(0)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "error {err}");
    }
}
