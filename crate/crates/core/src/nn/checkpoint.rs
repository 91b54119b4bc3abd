//! Little-endian binary checkpoints.
//!
//! ```text
//! "DQNLABCK" u32 version u8 layout u8 flags u32 n_sections
//! section: u32 n_layers, then per layer
//!   u8 tag, u32 n_dims, u64 dims..., u32 n_buffers, (u64 len, f64 values...)...
//! ```
//! Buffers hold raw f64 bit patterns, so a load reproduces a save exactly.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::{
    ActivationKind, ActivationLayer, BatchNormLayer, ConvLayer, DenseLayer, FlattenLayer, Layer, NnError,
    PoolLayer, PoolMode, Sequential, Tensor,
};

const MAGIC: &[u8; 8] = b"DQNLABCK";
const VERSION: u32 = 1;

const TAG_DENSE: u8 = 1;
const TAG_CONV: u8 = 2;
const TAG_POOL: u8 = 3;
const TAG_BATCHNORM: u8 = 4;
const TAG_ACTIVATION: u8 = 5;
const TAG_FLATTEN: u8 = 6;

/// One or more layer stacks plus two opaque header bytes for the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub layout: u8,
    pub flags: u8,
    pub sections: Vec<Sequential>,
}

fn io_err(e: io::Error) -> NnError {
    NnError::Checkpoint(e.to_string())
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_bytes(&fs::read(path).map_err(io_err)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.layout);
        out.push(self.flags);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for net in &self.sections {
            out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
            for layer in &net.layers {
                write_layer(&mut out, layer);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let layout = read_u8(&mut r)?;
        let flags = read_u8(&mut r)?;
        let n_sections = read_u32(&mut r)?;
        let mut sections = Vec::new();
        for _ in 0..n_sections {
            let n_layers = read_u32(&mut r)?;
            let mut layers = Vec::new();
            for _ in 0..n_layers {
                layers.push(read_layer(&mut r)?);
            }
            sections.push(Sequential::new(layers));
        }
        if !r.is_empty() {
            return Err(bad(format!("{} trailing bytes", r.len())));
        }
        Ok(Self { layout, flags, sections })
    }
}

fn write_record(out: &mut Vec<u8>, tag: u8, dims: &[u64], buffers: &[&[f64]]) {
    out.push(tag);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.extend_from_slice(&(buffers.len() as u32).to_le_bytes());
    for buf in buffers {
        out.extend_from_slice(&(buf.len() as u64).to_le_bytes());
        for v in *buf {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn write_layer(out: &mut Vec<u8>, layer: &Layer) {
    match layer {
        Layer::Dense(d) => write_record(
            out,
            TAG_DENSE,
            &[d.inputs() as u64, d.outputs() as u64, d.activation.code()],
            &[d.weights.value.data(), d.bias.value.data()],
        ),
        Layer::Conv(c) => write_record(
            out,
            TAG_CONV,
            &[c.n_filters() as u64, c.in_channels() as u64, c.kernel() as u64, c.stride as u64, c.padding as u64],
            &[c.filters.value.data(), c.bias.value.data()],
        ),
        Layer::Pool(p) => {
            let mode = match p.mode {
                PoolMode::Max => 0,
                PoolMode::Avg => 1,
            };
            write_record(out, TAG_POOL, &[mode, p.window as u64, p.stride as u64], &[])
        }
        Layer::BatchNorm(b) => write_record(
            out,
            TAG_BATCHNORM,
            &[b.features() as u64],
            &[
                b.scale.value.data(),
                b.shift.value.data(),
                &b.running_mean,
                &b.running_var,
                &[b.eps, b.momentum],
            ],
        ),
        Layer::Activation(a) => write_record(out, TAG_ACTIVATION, &[a.kind.code()], &[]),
        Layer::Flatten(_) => write_record(out, TAG_FLATTEN, &[], &[]),
    }
}

fn read_u8(r: &mut &[u8]) -> Result<u8, NnError> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(b[0])
}

fn read_u32(r: &mut &[u8]) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u64::from_le_bytes(b))
}

fn read_buffer(r: &mut &[u8]) -> Result<Vec<f64>, NnError> {
    let len = read_u64(r)? as usize;
    if len.saturating_mul(8) > r.len() {
        return Err(bad("buffer length exceeds file"));
    }
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(f64::from_bits(read_u64(r)?));
    }
    Ok(out)
}

fn expect_counts(tag: u8, dims: &[u64], buffers: &[Vec<f64>], n_dims: usize, n_buffers: usize) -> Result<(), NnError> {
    if dims.len() != n_dims || buffers.len() != n_buffers {
        return Err(bad(format!(
            "layer tag {tag}: expected {n_dims} dims and {n_buffers} buffers, got {} and {}",
            dims.len(),
            buffers.len()
        )));
    }
    Ok(())
}

fn read_layer(r: &mut &[u8]) -> Result<Layer, NnError> {
    let tag = read_u8(r)?;
    let n_dims = read_u32(r)? as usize;
    let dims = (0..n_dims).map(|_| read_u64(r)).collect::<Result<Vec<_>, _>>()?;
    let n_buffers = read_u32(r)? as usize;
    let mut buffers = (0..n_buffers).map(|_| read_buffer(r)).collect::<Result<Vec<_>, _>>()?;
    let act = |code: u64| ActivationKind::from_code(code).ok_or_else(|| bad(format!("unknown activation {code}")));
    let dim = |i: usize| dims[i] as usize;
    Ok(match tag {
        TAG_DENSE => {
            expect_counts(tag, &dims, &buffers, 3, 2)?;
            let bias = Tensor::new(vec![dim(1)], buffers.pop().expect("two buffers"))?;
            let weights = Tensor::new(vec![dim(0), dim(1)], buffers.pop().expect("two buffers"))?;
            Layer::Dense(DenseLayer::from_params(weights, bias, act(dims[2])?)?)
        }
        TAG_CONV => {
            expect_counts(tag, &dims, &buffers, 5, 2)?;
            let bias = Tensor::new(vec![dim(0)], buffers.pop().expect("two buffers"))?;
            let filters = Tensor::new(vec![dim(0), dim(1), dim(2), dim(2)], buffers.pop().expect("two buffers"))?;
            Layer::Conv(ConvLayer::from_params(filters, bias, dim(3), dim(4))?)
        }
        TAG_POOL => {
            expect_counts(tag, &dims, &buffers, 3, 0)?;
            let mode = match dims[0] {
                0 => PoolMode::Max,
                1 => PoolMode::Avg,
                m => return Err(bad(format!("unknown pool mode {m}"))),
            };
            Layer::Pool(PoolLayer::new(mode, dim(1), dim(2))?)
        }
        TAG_BATCHNORM => {
            expect_counts(tag, &dims, &buffers, 1, 5)?;
            let f = dim(0);
            let hyper = buffers.pop().expect("five buffers");
            let running_var = buffers.pop().expect("five buffers");
            let running_mean = buffers.pop().expect("five buffers");
            let shift = buffers.pop().expect("five buffers");
            let scale = buffers.pop().expect("five buffers");
            if hyper.len() != 2 || running_mean.len() != f || running_var.len() != f {
                return Err(bad("malformed batchnorm record"));
            }
            let mut bn = BatchNormLayer::new(f);
            bn.scale.value = Tensor::new(vec![f], scale)?;
            bn.shift.value = Tensor::new(vec![f], shift)?;
            bn.running_mean = running_mean;
            bn.running_var = running_var;
            bn.eps = hyper[0];
            bn.momentum = hyper[1];
            Layer::BatchNorm(bn)
        }
        TAG_ACTIVATION => {
            expect_counts(tag, &dims, &buffers, 1, 0)?;
            Layer::Activation(ActivationLayer::new(act(dims[0])?))
        }
        TAG_FLATTEN => {
            expect_counts(tag, &dims, &buffers, 0, 0)?;
            Layer::Flatten(FlattenLayer::new())
        }
        t => return Err(bad(format!("unknown layer tag {t}"))),
    })
}

/// Writes through a sibling temp file and a rename, so readers never see a partial file.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), NnError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(bytes).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_net(rng: &mut ChaCha8Rng) -> Sequential {
        let mut bn = BatchNormLayer::new(2);
        bn.running_mean = vec![0.125, -3.5];
        bn.running_var = vec![2.0, f64::MIN_POSITIVE];
        Sequential::new(vec![
            Layer::Conv(ConvLayer::new(1, 2, 3, 2, 1, rng)),
            Layer::BatchNorm(bn),
            Layer::Activation(ActivationLayer::new(ActivationKind::Relu)),
            Layer::Pool(PoolLayer::new(PoolMode::Avg, 2, 1).unwrap()),
            Layer::Flatten(FlattenLayer::new()),
            Layer::Dense(DenseLayer::new(18, 3, ActivationKind::Tanh, rng)),
        ])
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ck = Checkpoint { layout: 1, flags: 2, sections: vec![sample_net(&mut rng), sample_net(&mut rng)] };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        ck.save(&path).unwrap();
        let mut back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.layout, 1);
        assert_eq!(back.flags, 2);
        for (a, b) in ck.sections.iter().zip(&back.sections) {
            for (pa, pb) in a.params().iter().zip(b.params()) {
                let bits_a: Vec<u64> = pa.value.data().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = pb.value.data().iter().map(|v| v.to_bits()).collect();
                assert_eq!(bits_a, bits_b);
            }
        }
        let x = Tensor::new(vec![2, 1, 8, 8], (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut orig = ck.sections[0].clone();
        let ya = orig.forward(&x, Mode::Infer).unwrap();
        let yb = back.sections[0].forward(&x, Mode::Infer).unwrap();
        assert_eq!(ya, yb);
        assert_eq!(back.to_bytes(), ck.to_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bytes = Checkpoint { layout: 0, flags: 0, sections: vec![sample_net(&mut rng)] }.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
