use super::{
    ActivationLayer, BatchNormLayer, ConvLayer, DenseLayer, Mode, NnError, Param, PoolLayer, Tensor,
};

/// Reshapes `[B, ...]` to `[B, prod(...)]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlattenLayer {
    input_shape: Option<Vec<usize>>,
}

impl FlattenLayer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        self.input_shape = Some(x.shape().to_vec());
        x.clone().reshape(&[x.batch(), x.sample_len()])
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let shape = self.input_shape.as_ref().ok_or(NnError::NoForwardCache("flatten"))?;
        grad.clone().reshape(shape)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    Pool(PoolLayer),
    BatchNorm(BatchNormLayer),
    Activation(ActivationLayer),
    Flatten(FlattenLayer),
}

impl Layer {
    pub fn name(&self) -> String {
        match self {
            Layer::Dense(d) => format!("dense({}->{})", d.inputs(), d.outputs()),
            Layer::Conv(c) => format!("conv({}x{}, {} filters, stride {})", c.kernel(), c.kernel(), c.n_filters(), c.stride),
            Layer::Pool(p) => format!("pool({:?} {}x{})", p.mode, p.window, p.window),
            Layer::BatchNorm(b) => format!("batchnorm({})", b.features()),
            Layer::Activation(a) => format!("{:?}", a.kind).to_lowercase(),
            Layer::Flatten(_) => "flatten".to_string(),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv(l) => l.forward(x),
            Layer::Pool(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::Activation(l) => Ok(l.forward(x)),
            Layer::Flatten(l) => l.forward(x),
        }
    }

    fn backward_inner(&mut self, grad: &Tensor, need_input: bool) -> Result<Option<Tensor>, NnError> {
        match self {
            Layer::Dense(l) => l.backward_inner(grad, need_input),
            Layer::Conv(l) => l.backward_inner(grad, need_input),
            Layer::Pool(l) => l.backward(grad).map(Some),
            Layer::BatchNorm(l) => l.backward(grad).map(Some),
            Layer::Activation(l) => l.backward(grad).map(Some),
            Layer::Flatten(l) => l.backward(grad).map(Some),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        self.backward_inner(grad, true).map(|g| g.expect("input gradient requested"))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(l) => l.params_mut().into(),
            Layer::Conv(l) => l.params_mut().into(),
            Layer::BatchNorm(l) => l.params_mut().into(),
            Layer::Pool(_) | Layer::Activation(_) | Layer::Flatten(_) => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Conv(l) => vec![&l.filters, &l.bias],
            Layer::BatchNorm(l) => vec![&l.scale, &l.shift],
            Layer::Pool(_) | Layer::Activation(_) | Layer::Flatten(_) => Vec::new(),
        }
    }

    /// Shape of one sample after this layer, without running it.
    pub fn output_sample_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        match self {
            Layer::Dense(d) => {
                let n: usize = input.iter().product();
                if n != d.inputs() {
                    return Err(NnError::ShapeMismatch { expected: vec![d.inputs()], got: input.to_vec() });
                }
                Ok(vec![d.outputs()])
            }
            Layer::Conv(c) => match input {
                &[ch, h, w] => {
                    let (f, oh, ow) = c.output_shape((ch, h, w))?;
                    Ok(vec![f, oh, ow])
                }
                _ => Err(NnError::InvalidShape(format!("{} expects [C, H, W], got {input:?}", self.name()))),
            },
            Layer::Pool(p) => match input {
                &[ch, h, w] => {
                    let (oh, ow) = p.output_hw(h, w)?;
                    Ok(vec![ch, oh, ow])
                }
                _ => Err(NnError::InvalidShape(format!("{} expects [C, H, W], got {input:?}", self.name()))),
            },
            Layer::BatchNorm(b) => {
                if input.first() != Some(&b.features()) {
                    return Err(NnError::ShapeMismatch { expected: vec![b.features()], got: input.to_vec() });
                }
                Ok(input.to_vec())
            }
            Layer::Activation(_) => Ok(input.to_vec()),
            Layer::Flatten(_) => Ok(vec![input.iter().product()]),
        }
    }
}

/// A stack of layers applied in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Backpropagates `grad` and returns the gradient with respect to the input.
    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Like [`Sequential::backward`] but skips the input gradient of the first
    /// layer, which nothing consumes during training.
    pub fn backward_params(&mut self, grad: &Tensor) -> Result<(), NnError> {
        let mut g = grad.clone();
        let n = self.layers.len();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            match layer.backward_inner(&g, i > 0)? {
                Some(next) => g = next,
                None => debug_assert_eq!(i, 0),
            }
        }
        let _ = n;
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Walks the per-sample shape through every layer, naming the first one
    /// that cannot accept its input.
    pub fn output_sample_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.output_sample_shape(&shape).map_err(|e| NnError::Layer { layer: layer.name(), source: Box::new(e) })?;
        }
        Ok(shape)
    }
}
