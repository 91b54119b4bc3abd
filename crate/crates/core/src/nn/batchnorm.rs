use super::{Mode, NnError, Param, Tensor};

/// Per-channel batch normalization with a learned affine restore
/// `x̃ = m·x̂ + n`.
///
/// Input is `[B × F]` or `[B × C × ...]`; statistics are taken per feature
/// (channel) over the batch and any trailing spatial dimensions, using the
/// population variance. Inference mode normalizes with running statistics
/// kept as an exponential moving average.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub scale: Param,
    pub shift: Param,
    pub eps: f64,
    pub momentum: f64,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct BnCache {
    mode: Mode,
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.99;

impl BatchNormLayer {
    pub fn new(features: usize) -> Self {
        Self {
            scale: Param::new(Tensor::filled(&[features], 1.0)),
            shift: Param::new(Tensor::zeros(&[features])),
            eps: DEFAULT_BN_EPS,
            momentum: DEFAULT_BN_MOMENTUM,
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            cache: None,
        }
    }

    pub fn features(&self) -> usize {
        self.running_mean.len()
    }

    /// Pre-affine normalized values from the last forward pass.
    pub fn normalized(&self) -> Option<&Tensor> {
        self.cache.as_ref().map(|c| &c.x_hat)
    }

    fn layout(&self, x: &Tensor) -> Result<(usize, usize, usize), NnError> {
        if x.ndim() < 2 || x.shape()[1] != self.features() {
            return Err(NnError::ShapeMismatch { expected: vec![x.batch(), self.features()], got: x.shape().to_vec() });
        }
        let spatial = x.shape()[2..].iter().product();
        Ok((x.shape()[0], x.shape()[1], spatial))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let (batch, channels, spatial) = self.layout(x)?;
        if mode == Mode::Train && batch < 2 {
            return Err(NnError::BatchTooSmall(batch));
        }
        let idx = |b: usize, c: usize, s: usize| (b * channels + c) * spatial + s;
        let count = (batch * spatial) as f64;
        let data = x.data();
        let mut x_hat = vec![0.0; data.len()];
        let mut out = vec![0.0; data.len()];
        let mut inv_std = vec![0.0; channels];
        for c in 0..channels {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = 0.0;
                    for b in 0..batch {
                        for s in 0..spatial {
                            sum += data[idx(b, c, s)];
                        }
                    }
                    let mean = sum / count;
                    let mut sq = 0.0;
                    for b in 0..batch {
                        for s in 0..spatial {
                            let d = data[idx(b, c, s)] - mean;
                            sq += d * d;
                        }
                    }
                    let var = sq / count;
                    self.running_mean[c] = self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean;
                    self.running_var[c] = self.momentum * self.running_var[c] + (1.0 - self.momentum) * var;
                    (mean, var)
                }
                Mode::Infer => (self.running_mean[c], self.running_var[c]),
            };
            let is = 1.0 / (var + self.eps).sqrt();
            inv_std[c] = is;
            let (m, n) = (self.scale.value.data()[c], self.shift.value.data()[c]);
            for b in 0..batch {
                for s in 0..spatial {
                    let i = idx(b, c, s);
                    x_hat[i] = (data[i] - mean) * is;
                    out[i] = m * x_hat[i] + n;
                }
            }
        }
        self.cache = Some(BnCache { mode, x_hat: Tensor::new(x.shape().to_vec(), x_hat)?, inv_std });
        Tensor::new(x.shape().to_vec(), out)
    }

    /// Gradients for `m`, `n` and the input; train mode differentiates
    /// through the batch mean and variance.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache("batchnorm"))?;
        grad.expect_shape(cache.x_hat.shape())?;
        let (batch, channels, spatial) = self.layout(grad)?;
        let idx = |b: usize, c: usize, s: usize| (b * channels + c) * spatial + s;
        let count = (batch * spatial) as f64;
        let (g, xh) = (grad.data(), cache.x_hat.data());
        let mut dx = vec![0.0; g.len()];
        for c in 0..channels {
            let m = self.scale.value.data()[c];
            let mut sum_g = 0.0;
            let mut sum_g_xh = 0.0;
            for b in 0..batch {
                for s in 0..spatial {
                    let i = idx(b, c, s);
                    sum_g += g[i];
                    sum_g_xh += g[i] * xh[i];
                }
            }
            self.scale.grad.data_mut()[c] = sum_g_xh;
            self.shift.grad.data_mut()[c] = sum_g;
            let is = cache.inv_std[c];
            for b in 0..batch {
                for s in 0..spatial {
                    let i = idx(b, c, s);
                    dx[i] = match cache.mode {
                        Mode::Train => m * is / count * (count * g[i] - sum_g - xh[i] * sum_g_xh),
                        Mode::Infer => m * is * g[i],
                    };
                }
            }
        }
        Tensor::new(grad.shape().to_vec(), dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.scale, &mut self.shift]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_a_column() {
        let mut bn = BatchNormLayer::new(1);
        bn.eps = 0.0;
        let out = bn.forward(&Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap(), Mode::Train).unwrap();
        let want = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in out.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn train_mode_needs_two_samples() {
        let mut bn = BatchNormLayer::new(2);
        assert_eq!(bn.forward(&Tensor::zeros(&[1, 2]), Mode::Train), Err(NnError::BatchTooSmall(1)));
        assert!(bn.forward(&Tensor::zeros(&[1, 2]), Mode::Infer).is_ok());
    }

    #[test]
    fn running_statistics_follow_moving_average() {
        let mut bn = BatchNormLayer::new(1);
        bn.forward(&Tensor::new(vec![2, 1], vec![1.0, 3.0]).unwrap(), Mode::Train).unwrap();
        assert!((bn.running_mean[0] - 0.02).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.99 + 0.01)).abs() < 1e-15);
        // inference uses the stored statistics, so the output is (x − 0.02) / sqrt(1 + eps)
        let out = bn.forward(&Tensor::new(vec![1, 1], vec![1.0]).unwrap(), Mode::Infer).unwrap();
        assert!((out.data()[0] - 0.98 / (1.0 + DEFAULT_BN_EPS).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spatial_input_uses_channel_statistics() {
        let mut bn = BatchNormLayer::new(2);
        let x = Tensor::new(vec![2, 2, 1, 2], vec![0.0, 2.0, 10.0, 10.0, 4.0, 6.0, 30.0, 50.0]).unwrap();
        let out = bn.forward(&x, Mode::Train).unwrap();
        // channel 0 holds {0, 2, 4, 6}: mean 3
        let c0 = [out.data()[0], out.data()[1], out.data()[4], out.data()[5]];
        assert!(c0.iter().sum::<f64>().abs() < 1e-12);
        assert!(c0[0] < c0[1] && c0[1] < c0[2] && c0[2] < c0[3]);
    }
}
