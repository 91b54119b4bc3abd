use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::targets::{dueling_aggregate, dueling_backward, Aggregation};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{
    ActivationKind, ActivationLayer, BatchNormLayer, ConvLayer, DenseLayer, FlattenLayer, Layer, Mode, NnError, Param,
    Sequential, Tensor,
};

/// Layer widths for the convolutional Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetPreset {
    /// 32/64/64 filters, 512 hidden units.
    Paper,
    /// 8/16/16 filters, 64 hidden units.
    Desk,
}

impl NetPreset {
    fn widths(self) -> ([usize; 3], usize) {
        match self {
            NetPreset::Paper => ([32, 64, 64], 512),
            NetPreset::Desk => ([8, 16, 16], 64),
        }
    }
}

/// Structure of the Q-network to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub preset: NetPreset,
    pub dueling: bool,
    pub aggregation: Aggregation,
    pub batch_norm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QHead {
    /// The trunk already ends in one output per action.
    Direct,
    Dueling { value: Sequential, advantage: Sequential, aggregation: Aggregation },
}

/// A state-to-action-values network, optionally with a dueling head.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub trunk: Sequential,
    pub head: QHead,
}

impl QNetwork {
    pub fn direct(net: Sequential) -> Self {
        Self { trunk: net, head: QHead::Direct }
    }

    pub fn dueling(trunk: Sequential, value: Sequential, advantage: Sequential, aggregation: Aggregation) -> Self {
        Self { trunk, head: QHead::Dueling { value, advantage, aggregation } }
    }

    pub fn is_dueling(&self) -> bool {
        matches!(self.head, QHead::Dueling { .. })
    }

    /// `[B × A]` action values.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let h = self.trunk.forward(x, mode)?;
        match &mut self.head {
            QHead::Direct => Ok(h),
            QHead::Dueling { value, advantage, aggregation } => {
                let v = value.forward(&h, mode)?;
                let a = advantage.forward(&h, mode)?;
                dueling_aggregate(&v, &a, *aggregation)
            }
        }
    }

    /// Value and advantage streams of the last forward input, for inspection.
    pub fn streams(&mut self, x: &Tensor, mode: Mode) -> Result<Option<(Tensor, Tensor)>, NnError> {
        let h = self.trunk.forward(x, mode)?;
        match &mut self.head {
            QHead::Direct => Ok(None),
            QHead::Dueling { value, advantage, .. } => Ok(Some((value.forward(&h, mode)?, advantage.forward(&h, mode)?))),
        }
    }

    /// Fills parameter gradients from `∂J/∂q`.
    pub fn backward(&mut self, grad_q: &Tensor) -> Result<(), NnError> {
        match &mut self.head {
            QHead::Direct => self.trunk.backward_params(grad_q),
            QHead::Dueling { value, advantage, aggregation } => {
                let (dv, da) = dueling_backward(grad_q, *aggregation);
                let mut dh = value.backward(&dv)?;
                dh.add_assign(&advantage.backward(&da)?)?;
                self.trunk.backward_params(&dh)
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.trunk.params_mut();
        if let QHead::Dueling { value, advantage, .. } = &mut self.head {
            out.extend(value.params_mut());
            out.extend(advantage.params_mut());
        }
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = self.trunk.params();
        if let QHead::Dueling { value, advantage, .. } = &self.head {
            out.extend(value.params());
            out.extend(advantage.params());
        }
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match &self.head {
            QHead::Direct => Checkpoint { layout: 0, flags: 0, sections: vec![self.trunk.clone()] },
            QHead::Dueling { value, advantage, aggregation } => Checkpoint {
                layout: 1,
                flags: aggregation.code(),
                sections: vec![self.trunk.clone(), value.clone(), advantage.clone()],
            },
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self, NnError> {
        let mut sections = ck.sections.into_iter();
        match (ck.layout, sections.len()) {
            (0, 1) => Ok(Self::direct(sections.next().expect("one section"))),
            (1, 3) => {
                let aggregation = Aggregation::from_code(ck.flags)
                    .ok_or_else(|| NnError::Checkpoint(format!("unknown aggregation code {}", ck.flags)))?;
                let trunk = sections.next().expect("three sections");
                let value = sections.next().expect("three sections");
                let advantage = sections.next().expect("three sections");
                Ok(Self::dueling(trunk, value, advantage, aggregation))
            }
            (layout, n) => Err(NnError::Checkpoint(format!("layout {layout} with {n} sections"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }

    /// Output length for a `[C × H × W]` observation, checking every layer.
    pub fn output_len(&self, observation_shape: &[usize]) -> Result<usize, NnError> {
        let h = self.trunk.output_sample_shape(observation_shape)?;
        let out = match &self.head {
            QHead::Direct => h,
            QHead::Dueling { value, advantage, .. } => {
                let v = value.output_sample_shape(&h)?;
                if v != [1] {
                    return Err(NnError::InvalidShape(format!("value stream must emit one output, got {v:?}")));
                }
                advantage.output_sample_shape(&h)?
            }
        };
        Ok(out.iter().product())
    }
}

/// Three convolutions (8×8/4, 4×4/2, 3×3/1) with ReLU, optional batch norm
/// after each, then a hidden dense layer and either one dense output per
/// action or parallel value/advantage outputs.
pub fn build_network<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    observation_shape: &[usize],
    n_actions: usize,
    rng: &mut R,
) -> Result<QNetwork, NnError> {
    let &[channels, height, width] = observation_shape else {
        return Err(NnError::InvalidShape(format!("observation must be [C, H, W], got {observation_shape:?}")));
    };
    if n_actions == 0 {
        return Err(NnError::InvalidShape("need at least one action".into()));
    }
    let (filters, hidden) = spec.preset.widths();
    let geometry = [(8, 4), (4, 2), (3, 1)];
    let mut trunk = Sequential::default();
    let mut shape = vec![channels, height, width];
    for (&n_filters, &(kernel, stride)) in filters.iter().zip(&geometry) {
        let conv = Layer::Conv(ConvLayer::new(shape[0], n_filters, kernel, stride, 0, rng));
        shape = conv.output_sample_shape(&shape).map_err(|e| NnError::Layer { layer: conv.name(), source: Box::new(e) })?;
        trunk.push(conv);
        if spec.batch_norm {
            trunk.push(Layer::BatchNorm(BatchNormLayer::new(n_filters)));
        }
        trunk.push(Layer::Activation(ActivationLayer::new(ActivationKind::Relu)));
    }
    trunk.push(Layer::Flatten(FlattenLayer::new()));
    let flat: usize = shape.iter().product();
    trunk.push(Layer::Dense(DenseLayer::new(flat, hidden, ActivationKind::Relu, rng)));
    if spec.dueling {
        let value = Sequential::new(vec![Layer::Dense(DenseLayer::new(hidden, 1, ActivationKind::Identity, rng))]);
        let advantage =
            Sequential::new(vec![Layer::Dense(DenseLayer::new(hidden, n_actions, ActivationKind::Identity, rng))]);
        Ok(QNetwork::dueling(trunk, value, advantage, spec.aggregation))
    } else {
        trunk.push(Layer::Dense(DenseLayer::new(hidden, n_actions, ActivationKind::Identity, rng)));
        Ok(QNetwork::direct(trunk))
    }
}
