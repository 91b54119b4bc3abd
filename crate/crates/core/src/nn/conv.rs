use rand::Rng;

use super::tensor::gemm;
use super::{glorot_uniform, NnError, Param, Tensor};

/// Output length of a sliding window: `floor((size − k + 2·padding) / stride) + 1`.
pub fn conv_output_dim(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if stride == 0 || kernel == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// 2-D convolution (cross-correlation, no kernel flip) over `[B × C × H × W]` input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[filters × in_channels × k × k]`
    pub filters: Param,
    /// `[filters]`
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone, PartialEq)]
struct ConvCache {
    input_shape: Vec<usize>,
    out_hw: (usize, usize),
    lowered: Lowered,
}

/// What backward needs of the input.
#[derive(Debug, Clone, PartialEq)]
enum Lowered {
    /// im2col matrix `[C·k·k × B·OH·OW]`, samples side by side.
    Cols(Vec<f64>),
    /// Nonzero inputs as `(sample, flat index within the sample, value)`.
    Sparse(Vec<(usize, usize, f64)>),
}

/// Inputs with at most this fraction of nonzeros take the scatter path.
/// Binarized frames sit near 2%; ReLU activations near 50%.
const SPARSE_DENSITY: f64 = 0.125;

impl ConvLayer {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        n_filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = n_filters * kernel * kernel;
        let filters = glorot_uniform(&[n_filters, in_channels, kernel, kernel], fan_in, fan_out, rng);
        Self::from_params(filters, Tensor::zeros(&[n_filters]), stride, padding).expect("consistent shapes")
    }

    pub fn from_params(filters: Tensor, bias: Tensor, stride: usize, padding: usize) -> Result<Self, NnError> {
        let s = filters.shape();
        if s.len() != 4 || s[2] != s[3] {
            return Err(NnError::InvalidShape(format!("filters must be [F, C, k, k], got {s:?}")));
        }
        if stride == 0 {
            return Err(NnError::InvalidShape("stride must be at least 1".into()));
        }
        bias.expect_shape(&[s[0]])?;
        Ok(Self { filters: Param::new(filters), bias: Param::new(bias), stride, padding, cache: None })
    }

    pub fn n_filters(&self) -> usize {
        self.filters.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.filters.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.filters.value.shape()[2]
    }

    /// Output `(channels, height, width)` for an input of `(channels, height, width)`.
    pub fn output_shape(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize), NnError> {
        let (c, h, w) = input;
        if c != self.in_channels() {
            return Err(NnError::ChannelMismatch { expected: self.in_channels(), got: c });
        }
        let k = self.kernel();
        match (conv_output_dim(h, k, self.stride, self.padding), conv_output_dim(w, k, self.stride, self.padding)) {
            (Some(oh), Some(ow)) => Ok((self.n_filters(), oh, ow)),
            _ => Err(NnError::InputTooSmall { layer: format!("conv {k}x{k}/{}", self.stride), height: h, width: w }),
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        if x.ndim() != 4 {
            return Err(NnError::InvalidShape(format!("conv input must be [B, C, H, W], got {:?}", x.shape())));
        }
        let (batch, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (f, oh, ow) = self.output_shape((c, h, w))?;
        let geom = Geometry { c, h, w, k: self.kernel(), stride: self.stride, pad: self.padding, oh, ow, ld: batch * oh * ow };
        let nonzeros = x.data().iter().filter(|&&v| v != 0.0).count();
        let (out, lowered) = if (nonzeros as f64) <= SPARSE_DENSITY * x.len() as f64 {
            let sample = c * h * w;
            let sparse: Vec<_> = x
                .data()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i / sample, i % sample, v))
                .collect();
            (self.forward_sparse(&sparse, batch, &geom), Lowered::Sparse(sparse))
        } else {
            let cols = lower(x.data(), batch, &geom);
            (self.forward_cols(&cols, batch, &geom), Lowered::Cols(cols))
        };
        self.cache = Some(ConvCache { input_shape: x.shape().to_vec(), out_hw: (oh, ow), lowered });
        Tensor::new(vec![batch, f, oh, ow], out)
    }

    fn forward_cols(&self, cols: &[f64], batch: usize, g: &Geometry) -> Vec<f64> {
        let (f, ohw, n) = (self.n_filters(), g.oh * g.ow, g.ld);
        let ckk = g.c * g.k * g.k;
        // One product for the whole batch: [F × C·k·k] · [C·k·k × B·OH·OW].
        let mut prod = vec![0.0; f * n];
        gemm(f, ckk, n, 1.0, self.filters.value.data(), false, cols, false, 0.0, &mut prod);
        let mut out = vec![0.0; batch * f * ohw];
        for (fi, (row, &bias)) in prod.chunks_exact(n).zip(self.bias.value.data()).enumerate() {
            for (b, src) in row.chunks_exact(ohw).enumerate() {
                let dst = &mut out[(b * f + fi) * ohw..(b * f + fi + 1) * ohw];
                dst.iter_mut().zip(src).for_each(|(d, &s)| *d = s + bias);
            }
        }
        out
    }

    /// Each nonzero input adds `value · w` to every output whose window covers it.
    fn forward_sparse(&self, nonzeros: &[(usize, usize, f64)], batch: usize, g: &Geometry) -> Vec<f64> {
        let f = self.n_filters();
        let ohw = g.oh * g.ow;
        let wt = transpose(self.filters.value.data(), f, g.c * g.k * g.k);
        let mut out = vec![0.0; batch * f * ohw];
        for o in out.chunks_exact_mut(f * ohw) {
            for (row, &bias) in o.chunks_exact_mut(ohw).zip(self.bias.value.data()) {
                row.fill(bias);
            }
        }
        let (taps_y, taps_x) = (g.taps(g.h, g.oh), g.taps(g.w, g.ow));
        for &(b, i, v) in nonzeros {
            let (ch, iy, ix) = (i / (g.h * g.w), i / g.w % g.h, i % g.w);
            let o = &mut out[b * f * ohw..(b + 1) * f * ohw];
            for &(ki, oy) in &taps_y[iy] {
                for &(kj, ox) in &taps_x[ix] {
                    let wrow = &wt[((ch * g.k + ki) * g.k + kj) * f..][..f];
                    for (fi, &wv) in wrow.iter().enumerate() {
                        o[fi * ohw + oy * g.ow + ox] += wv * v;
                    }
                }
            }
        }
        out
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        self.backward_inner(grad, true).map(|g| g.expect("input gradient requested"))
    }

    pub(crate) fn backward_inner(&mut self, grad: &Tensor, need_input: bool) -> Result<Option<Tensor>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForwardCache("conv"))?;
        let (batch, c, h, w) = (cache.input_shape[0], cache.input_shape[1], cache.input_shape[2], cache.input_shape[3]);
        let (oh, ow) = cache.out_hw;
        let f = self.n_filters();
        grad.expect_shape(&[batch, f, oh, ow])?;
        let k = self.kernel();
        let ckk = c * k * k;
        let ohw = oh * ow;
        let n = batch * ohw;
        let geom = Geometry { c, h, w, k, stride: self.stride, pad: self.padding, oh, ow, ld: n };

        for (fi, acc) in self.bias.grad.data_mut().iter_mut().enumerate() {
            *acc = grad.data().chunks_exact(ohw).skip(fi).step_by(f).flatten().sum();
        }
        // [B × F × OH·OW] → [F × B·OH·OW], matching the column layout.
        let mut g = vec![0.0; f * n];
        for (b, sample) in grad.data().chunks_exact(f * ohw).enumerate() {
            for (fi, src) in sample.chunks_exact(ohw).enumerate() {
                g[fi * n + b * ohw..fi * n + (b + 1) * ohw].copy_from_slice(src);
            }
        }
        match &cache.lowered {
            Lowered::Cols(cols) => gemm(f, n, ckk, 1.0, &g, false, cols, true, 0.0, self.filters.grad.data_mut()),
            Lowered::Sparse(nonzeros) => {
                let (taps_y, taps_x) = (geom.taps(h, oh), geom.taps(w, ow));
                let mut dwt = vec![0.0; ckk * f];
                for &(b, i, v) in nonzeros {
                    let (ch, iy, ix) = (i / (h * w), i / w % h, i % w);
                    for &(ki, oy) in &taps_y[iy] {
                        for &(kj, ox) in &taps_x[ix] {
                            let acc = &mut dwt[((ch * k + ki) * k + kj) * f..][..f];
                            for (fi, a) in acc.iter_mut().enumerate() {
                                *a += g[fi * n + b * ohw + oy * ow + ox] * v;
                            }
                        }
                    }
                }
                self.filters.grad.data_mut().copy_from_slice(&transpose(&dwt, ckk, f));
            }
        }
        if !need_input {
            return Ok(None);
        }
        // The input gradient needs only the filters: col2im(Wᵀ · g).
        let mut dcols = vec![0.0; ckk * n];
        gemm(ckk, f, n, 1.0, self.filters.value.data(), true, &g, false, 0.0, &mut dcols);
        let sample = c * h * w;
        let mut dx = vec![0.0; batch * sample];
        for (b, d) in dx.chunks_exact_mut(sample).enumerate() {
            col2im(&dcols[b * ohw..], &geom, d);
        }
        Tensor::new(cache.input_shape.clone(), dx).map(Some)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.filters, &mut self.bias]
    }
}

/// Window geometry; `ld` is the row stride of the column matrix.
struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    ld: usize,
}

impl Geometry {
    /// Output columns `lo..hi` whose input column `ox·stride + kj − pad` lies inside the image.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kj).div_ceil(self.stride).min(self.ow);
        let hi = if self.w + self.pad > kj { ((self.w + self.pad - kj - 1) / self.stride + 1).min(self.ow) } else { 0 };
        (lo, hi.max(lo))
    }

    /// For every input coordinate along an axis of length `size`, the
    /// `(kernel offset, output coordinate)` pairs whose window covers it.
    fn taps(&self, size: usize, out: usize) -> Vec<Vec<(usize, usize)>> {
        (0..size)
            .map(|i| {
                (0..self.k)
                    .filter_map(|kk| {
                        let t = (i + self.pad).checked_sub(kk)?;
                        (t % self.stride == 0 && t / self.stride < out).then_some((kk, t / self.stride))
                    })
                    .collect()
            })
            .collect()
    }

    /// Input row for output row `oy` and kernel row `ki`, if inside the image.
    fn input_row(&self, oy: usize, ki: usize) -> Option<usize> {
        (oy * self.stride + ki).checked_sub(self.pad).filter(|&iy| iy < self.h)
    }
}

/// im2col for a whole batch.
fn lower(x: &[f64], batch: usize, g: &Geometry) -> Vec<f64> {
    let ckk = g.c * g.k * g.k;
    let (ohw, sample) = (g.oh * g.ow, g.c * g.h * g.w);
    let mut cols = vec![0.0; ckk * g.ld];
    for b in 0..batch {
        im2col(&x[b * sample..(b + 1) * sample], g, &mut cols[b * ohw..]);
    }
    cols
}

/// `[rows × cols]` → `[cols × rows]`
fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for (r, row) in a.chunks_exact(cols).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j * rows + r] = v;
        }
    }
    t
}

/// Writes one sample's columns; `cols` starts at the sample's first column.
fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let (k, ow) = (g.k, g.ow);
    for ch in 0..g.c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let (lo, hi) = g.valid_cols(kj);
                for oy in 0..g.oh {
                    let line = &mut cols[row * g.ld + oy * ow..row * g.ld + (oy + 1) * ow];
                    let Some(iy) = g.input_row(oy, ki) else {
                        line.fill(0.0);
                        continue;
                    };
                    let src = &x[(ch * g.h + iy) * g.w..(ch * g.h + iy + 1) * g.w];
                    line[..lo].fill(0.0);
                    line[hi..].fill(0.0);
                    let first = lo * g.stride + kj - g.pad;
                    for (v, &s) in line[lo..hi].iter_mut().zip(src[first..].iter().step_by(g.stride)) {
                        *v = s;
                    }
                }
            }
        }
    }
}

/// Adjoint of `im2col`: accumulates one sample's columns into `dx`.
fn col2im(cols: &[f64], g: &Geometry, dx: &mut [f64]) {
    let (k, ow) = (g.k, g.ow);
    for ch in 0..g.c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let (lo, hi) = g.valid_cols(kj);
                for oy in 0..g.oh {
                    let Some(iy) = g.input_row(oy, ki) else { continue };
                    let src = &cols[row * g.ld + oy * ow + lo..row * g.ld + oy * ow + hi];
                    let first = (ch * g.h + iy) * g.w + lo * g.stride + kj - g.pad;
                    for (d, &s) in dx[first..].iter_mut().step_by(g.stride).zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop cross-correlation.
    fn reference_conv(x: &Tensor, filters: &Tensor, bias: &[f64], stride: usize, pad: usize) -> Tensor {
        let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (f, k) = (filters.shape()[0], filters.shape()[2]);
        let oh = conv_output_dim(h, k, stride, pad).unwrap();
        let ow = conv_output_dim(w, k, stride, pad).unwrap();
        let mut out = Tensor::zeros(&[b, f, oh, ow]);
        for n in 0..b {
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[fi];
                        for ch in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        acc += x.data()[((n * c + ch) * h + iy as usize) * w + ix as usize]
                                            * filters.data()[((fi * c + ch) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((n * f + fi) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    /// Direct `∂L/∂W` and `∂L/∂x` for upstream gradient `g`.
    fn reference_grads(x: &Tensor, filters: &Tensor, g: &Tensor, stride: usize, pad: usize) -> (Vec<f64>, Vec<f64>) {
        let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (f, k) = (filters.shape()[0], filters.shape()[2]);
        let (oh, ow) = (g.shape()[2], g.shape()[3]);
        let mut dw = vec![0.0; filters.len()];
        let mut dx = vec![0.0; x.len()];
        for n in 0..b {
            for fi in 0..f {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let gv = g.data()[((n * f + fi) * oh + oy) * ow + ox];
                        for ch in 0..c {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        let xi = ((n * c + ch) * h + iy as usize) * w + ix as usize;
                                        let wi = ((fi * c + ch) * k + ki) * k + kj;
                                        dw[wi] += gv * x.data()[xi];
                                        dx[xi] += gv * filters.data()[wi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (dw, dx)
    }

    #[test]
    fn dense_and_sparse_inputs_match_reference_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (stride, pad) in [(1, 0), (2, 1), (4, 0), (3, 2)] {
            for sparse in [false, true] {
                let mut l = ConvLayer::new(2, 3, 4, stride, pad, &mut rng);
                l.bias.value = Tensor::from_vec(vec![0.1, -0.2, 0.3]);
                // Every 17th entry nonzero puts the input under the scatter threshold.
                let x = Tensor::new(
                    vec![2, 2, 11, 9],
                    (0..396).map(|i| if !sparse || i % 17 == 0 { ((i * 7) as f64).sin() + 1.5 } else { 0.0 }).collect(),
                )
                .unwrap();
                let got = l.forward(&x).unwrap();
                assert!(matches!(l.cache.as_ref().unwrap().lowered, Lowered::Sparse(_)) == sparse);
                let want = reference_conv(&x, &l.filters.value, l.bias.value.data(), stride, pad);
                for (a, b) in got.data().iter().zip(want.data()) {
                    assert!((a - b).abs() < 1e-12);
                }
                let g = Tensor::new(got.shape().to_vec(), (0..got.len()).map(|i| (i as f64 * 0.3).cos()).collect()).unwrap();
                let dx = l.backward(&g).unwrap();
                let (want_dw, want_dx) = reference_grads(&x, &l.filters.value, &g, stride, pad);
                for (a, b) in l.filters.grad.data().iter().zip(&want_dw) {
                    assert!((a - b).abs() < 1e-10);
                }
                for (a, b) in dx.data().iter().zip(&want_dx) {
                    assert!((a - b).abs() < 1e-10);
                }
                let ohw = got.shape()[2] * got.shape()[3];
                let want_db: Vec<f64> = (0..3)
                    .map(|fi| g.data().chunks_exact(ohw).skip(fi).step_by(3).flatten().sum())
                    .collect();
                for (a, b) in l.bias.grad.data().iter().zip(&want_db) {
                    assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn scaling_filter() {
        let filters = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let mut l = ConvLayer::from_params(filters, Tensor::zeros(&[1]), 1, 0).unwrap();
        let out = l.forward(&Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn output_dim_formula() {
        assert_eq!(conv_output_dim(84, 8, 4, 0), Some(20));
        assert_eq!(conv_output_dim(20, 4, 2, 0), Some(9));
        assert_eq!(conv_output_dim(9, 3, 1, 0), Some(7));
        assert_eq!(conv_output_dim(64, 8, 2, 0), Some(29));
        assert_eq!(conv_output_dim(2, 3, 1, 0), None);
        assert_eq!(conv_output_dim(2, 3, 1, 1), Some(2));
    }

    #[test]
    fn matches_reference_with_stride_and_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (stride, pad) in [(1, 0), (2, 1), (3, 2)] {
            let mut l = ConvLayer::new(2, 3, 3, stride, pad, &mut rng);
            l.bias.value = Tensor::from_vec(vec![0.1, -0.2, 0.3]);
            let x = Tensor::new(vec![2, 2, 7, 6], (0..168).map(|i| ((i * 7) as f64).sin()).collect()).unwrap();
            let want = reference_conv(&x, &l.filters.value, l.bias.value.data(), stride, pad);
            let got = l.forward(&x).unwrap();
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut l = ConvLayer::new(3, 2, 2, 1, 0, &mut rng);
        l.bias.value = Tensor::from_vec(vec![0.7, -1.5]);
        let out = l.forward(&Tensor::zeros(&[1, 3, 4, 4])).unwrap();
        assert!(out.data()[..9].iter().all(|&v| v == 0.7));
        assert!(out.data()[9..].iter().all(|&v| v == -1.5));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut l = ConvLayer::new(3, 2, 2, 1, 0, &mut rng);
        assert!(matches!(l.forward(&Tensor::zeros(&[1, 2, 4, 4])), Err(NnError::ChannelMismatch { .. })));
        assert!(matches!(l.forward(&Tensor::zeros(&[1, 3, 1, 1])), Err(NnError::InputTooSmall { .. })));
    }
}
