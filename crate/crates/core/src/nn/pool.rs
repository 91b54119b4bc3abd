use serde::{Deserialize, Serialize};

use super::conv::conv_output_dim;
use super::{NnError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

/// Max or average pooling over `[B × C × H × W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolLayer {
    pub mode: PoolMode,
    pub window: usize,
    pub stride: usize,
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct PoolCache {
    input_shape: Vec<usize>,
    out_hw: (usize, usize),
    /// Flat input index of each output's maximum (max mode only).
    argmax: Vec<usize>,
}

impl PoolLayer {
    pub fn new(mode: PoolMode, window: usize, stride: usize) -> Result<Self, NnError> {
        if window == 0 || stride == 0 {
            return Err(NnError::InvalidShape("pool window and stride must be positive".into()));
        }
        Ok(Self { mode, window, stride, cache: None })
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        match (conv_output_dim(h, self.window, self.stride, 0), conv_output_dim(w, self.window, self.stride, 0)) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(NnError::InputTooSmall { layer: format!("pool {}x{}", self.window, self.window), height: h, width: w }),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        if x.ndim() != 4 {
            return Err(NnError::InvalidShape(format!("pool input must be [B, C, H, W], got {:?}", x.shape())));
        }
        let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (oh, ow) = self.output_hw(h, w)?;
        let t = self.window;
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut argmax = Vec::new();
        let data = x.data();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let (y0, x0) = (oy * self.stride, ox * self.stride);
                    match self.mode {
                        PoolMode::Max => {
                            let mut best = base + y0 * w + x0;
                            for dy in 0..t {
                                for dx in 0..t {
                                    let idx = base + (y0 + dy) * w + x0 + dx;
                                    if data[idx] > data[best] {
                                        best = idx;
                                    }
                                }
                            }
                            argmax.push(best);
                            out.push(data[best]);
                        }
                        PoolMode::Avg => {
                            let mut sum = 0.0;
                            for dy in 0..t {
                                for dx in 0..t {
                                    sum += data[base + (y0 + dy) * w + x0 + dx];
                                }
                            }
                            out.push(sum / (t * t) as f64);
                        }
                    }
                }
            }
        }
        self.cache = Some(PoolCache { input_shape: x.shape().to_vec(), out_hw: (oh, ow), argmax });
        Tensor::new(vec![b, c, oh, ow], out)
    }

    /// Max mode routes each upstream value to its stored argmax; average mode
    /// spreads it evenly, `g / t²` per cell of the window.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache("pool"))?;
        let (b, c, h, w) = (cache.input_shape[0], cache.input_shape[1], cache.input_shape[2], cache.input_shape[3]);
        let (oh, ow) = cache.out_hw;
        grad.expect_shape(&[b, c, oh, ow])?;
        let mut dx = vec![0.0; b * c * h * w];
        match self.mode {
            PoolMode::Max => {
                for (&idx, &g) in cache.argmax.iter().zip(grad.data()) {
                    dx[idx] += g;
                }
            }
            PoolMode::Avg => {
                let t = self.window;
                let share = 1.0 / (t * t) as f64;
                for plane in 0..b * c {
                    let base = plane * h * w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = grad.data()[(plane * oh + oy) * ow + ox] * share;
                            for dy in 0..t {
                                for dxi in 0..t {
                                    dx[base + (oy * self.stride + dy) * w + ox * self.stride + dxi] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(cache.input_shape.clone(), dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Tensor {
        Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn max_pool_routes_to_argmax() {
        let mut p = PoolLayer::new(PoolMode::Max, 2, 2).unwrap();
        assert_eq!(p.forward(&square()).unwrap().data(), &[4.0]);
        let g = p.backward(&Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn avg_pool_divides_by_window_area() {
        let mut p = PoolLayer::new(PoolMode::Avg, 2, 2).unwrap();
        assert_eq!(p.forward(&square()).unwrap().data(), &[2.5]);
        let g = p.backward(&Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.25; 4]);
    }

    #[test]
    fn window_larger_than_input() {
        let mut p = PoolLayer::new(PoolMode::Max, 3, 1).unwrap();
        assert!(p.forward(&square()).is_err());
    }
}
