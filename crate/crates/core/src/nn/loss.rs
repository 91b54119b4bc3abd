use super::{NnError, Tensor};

/// `J = ½ Σ (y − ŷ)²` and its gradient `ŷ − y` with respect to the prediction.
pub fn mse_loss(y_hat: &Tensor, y: &Tensor) -> Result<(f64, Tensor), NnError> {
    let grad = y_hat.zip_map(y, |p, t| p - t)?;
    let loss = 0.5 * grad.data().iter().map(|d| d * d).sum::<f64>();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::finite_difference_grad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example() {
        let (j, g) = mse_loss(&Tensor::from_vec(vec![1.0, 1.0]), &Tensor::from_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(j, 0.5);
        assert_eq!(g.data(), &[0.0, -1.0]);
    }

    #[test]
    fn identical_inputs() {
        let y = Tensor::from_vec(vec![0.3, -2.0, 5.0]);
        let (j, g) = mse_loss(&y, &y).unwrap();
        assert_eq!(j, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        assert!(mse_loss(&Tensor::from_vec(vec![1.0]), &Tensor::from_vec(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y_hat = Tensor::from_vec((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let y = Tensor::from_vec((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let (_, g) = mse_loss(&y_hat, &y).unwrap();
        let fd = finite_difference_grad(|p| mse_loss(p, &y).unwrap().0, &y_hat, 1e-5);
        for (a, n) in g.data().iter().zip(fd.data()) {
            assert!((a - n).abs() <= 1e-6 * a.abs().max(1e-3));
        }
    }
}
