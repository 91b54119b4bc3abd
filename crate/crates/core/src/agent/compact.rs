/// Observation storage for replay: 0/1 data packs to one bit per value,
/// anything else is kept as f64.
#[derive(Debug, Clone, PartialEq)]
pub enum CompactObs {
    Binary { len: usize, bits: Vec<u64> },
    Dense(Vec<f64>),
}

impl CompactObs {
    pub fn encode(values: &[f64]) -> Self {
        if !values.iter().all(|&v| v.to_bits() == 0 || v == 1.0) {
            return CompactObs::Dense(values.to_vec());
        }
        let mut bits = vec![0u64; values.len().div_ceil(64)];
        for (i, &v) in values.iter().enumerate() {
            if v == 1.0 {
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        CompactObs::Binary { len: values.len(), bits }
    }

    pub fn len(&self) -> usize {
        match self {
            CompactObs::Binary { len, .. } => *len,
            CompactObs::Dense(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the original values into `out`, which must have length `len()`.
    pub fn decode_into(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.len());
        match self {
            CompactObs::Binary { bits, .. } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = ((bits[i / 64] >> (i % 64)) & 1) as f64;
                }
            }
            CompactObs::Dense(v) => out.copy_from_slice(v),
        }
    }

    pub fn decode(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.decode_into(&mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_input_packs() {
        let v = vec![1.0, 0.0, 1.0];
        let c = CompactObs::encode(&v);
        assert!(matches!(c, CompactObs::Binary { len: 3, .. }));
        assert_eq!(c.decode(), v);
        assert!(matches!(CompactObs::encode(&[0.5]), CompactObs::Dense(_)));
    }

    proptest! {
        #[test]
        fn round_trip(bits in prop::collection::vec(any::<bool>(), 0..300), real in prop::option::of(-2.0f64..2.0)) {
            let mut v: Vec<f64> = bits.iter().map(|&b| b as u8 as f64).collect();
            if let Some(x) = real {
                v.push(x);
            }
            let decoded = CompactObs::encode(&v).decode();
            prop_assert_eq!(decoded.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }
}
