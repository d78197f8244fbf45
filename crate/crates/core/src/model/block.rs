use rand::Rng;

use crate::autodiff::{Activation, DenseLayer, LayerVars, Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One block: a stack of fully connected ReLU layers (the trunk `f`)
/// followed by two bias-free linear heads reading the same hidden state.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights<T> {
    pub(crate) fc_layers: Vec<DenseLayer<T>>,
    /// `Q`, shape `lookback x width`.
    pub(crate) backcast_head: Matrix<T>,
    /// `G`, shape `horizon x width`.
    pub(crate) forecast_head: Matrix<T>,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockVars {
    fc: Vec<LayerVars>,
    backcast_head: Var,
    forecast_head: Var,
}

pub(crate) struct BlockOutput {
    pub hidden: Var,
    pub backcast: Var,
    pub forecast: Var,
}

impl<T: Scalar> BlockWeights<T> {
    pub fn new(
        fc_layers: Vec<DenseLayer<T>>,
        backcast_head: Matrix<T>,
        forecast_head: Matrix<T>,
    ) -> Result<Self> {
        let Some(first) = fc_layers.first() else {
            return Err(Error::Topology("block needs at least one layer".into()));
        };
        let lookback = first.input_width();
        for pair in fc_layers.windows(2) {
            if pair[1].input_width() != pair[0].output_width() {
                return Err(Error::Shape {
                    op: "block trunk",
                    left: pair[0].weight().shape(),
                    right: pair[1].weight().shape(),
                });
            }
        }
        let width = fc_layers.last().unwrap().output_width();
        if backcast_head.shape() != (lookback, width) {
            return Err(Error::Shape {
                op: "backcast head",
                left: backcast_head.shape(),
                right: (lookback, width),
            });
        }
        if forecast_head.cols() != width {
            return Err(Error::Shape {
                op: "forecast head",
                left: forecast_head.shape(),
                right: (forecast_head.rows(), width),
            });
        }
        Ok(Self {
            fc_layers,
            backcast_head,
            forecast_head,
        })
    }

    pub(crate) fn random<R: Rng + ?Sized>(
        lookback: usize,
        horizon: usize,
        layers: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        let mut fc_layers = Vec::with_capacity(layers);
        for k in 0..layers {
            let input = if k == 0 { lookback } else { width };
            fc_layers.push(DenseLayer::glorot(input, width, Activation::Relu, rng));
        }
        let head = |rows: usize, rng: &mut R| {
            let bound = (6.0 / (rows + width) as f64).sqrt();
            Matrix::from_fn(rows, width, |_, _| T::of(rng.random_range(-bound..=bound)))
        };
        let backcast_head = head(lookback, rng);
        let forecast_head = head(horizon, rng);
        Self {
            fc_layers,
            backcast_head,
            forecast_head,
        }
    }

    pub fn lookback(&self) -> usize {
        self.fc_layers[0].input_width()
    }

    pub fn horizon(&self) -> usize {
        self.forecast_head.rows()
    }

    pub fn width(&self) -> usize {
        self.forecast_head.cols()
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.fc_layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.fc_layers
    }

    pub fn backcast_head(&self) -> &Matrix<T> {
        &self.backcast_head
    }

    pub fn backcast_head_mut(&mut self) -> &mut Matrix<T> {
        &mut self.backcast_head
    }

    pub fn forecast_head(&self) -> &Matrix<T> {
        &self.forecast_head
    }

    pub fn forecast_head_mut(&mut self) -> &mut Matrix<T> {
        &mut self.forecast_head
    }

    /// Off-tape trunk `f(x)`, the final hidden state.
    pub fn trunk(&self, x: &[T]) -> Result<Vec<T>> {
        let mut h = x.to_vec();
        for layer in &self.fc_layers {
            h = layer.eval(&h)?;
        }
        Ok(h)
    }

    /// Off-tape trunk applied to every row of `x`.
    pub fn trunk_batch(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut h = x.clone();
        for layer in &self.fc_layers {
            h = layer.eval_batch(&h)?;
        }
        Ok(h)
    }

    /// Pre-activations of every trunk layer at `x`.
    pub fn trunk_pre_activations(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let mut h = x.to_vec();
        let mut out = Vec::with_capacity(self.fc_layers.len());
        for layer in &self.fc_layers {
            let z = layer.pre_activation(&h)?;
            h = z.iter().map(|&v| layer.activation().apply(v)).collect();
            out.push(z);
        }
        Ok(out)
    }

    pub(crate) fn record<'a>(&'a self, tape: &mut Tape<'a, T>) -> BlockVars {
        BlockVars {
            fc: self.fc_layers.iter().map(|l| l.record(tape)).collect(),
            backcast_head: tape.leaf_ref(&self.backcast_head),
            forecast_head: tape.leaf_ref(&self.forecast_head),
        }
    }

    pub(crate) fn parameters<'s>(&'s self, prefix: &str, out: &mut Vec<(String, &'s Matrix<T>)>) {
        for (k, layer) in self.fc_layers.iter().enumerate() {
            out.push((format!("{prefix}.fc{k}.weight"), layer.weight()));
            out.push((format!("{prefix}.fc{k}.bias"), layer.bias_matrix()));
        }
        out.push((format!("{prefix}.backcast_head"), &self.backcast_head));
        out.push((format!("{prefix}.forecast_head"), &self.forecast_head));
    }

    pub(crate) fn parameters_mut<'s>(&'s mut self, out: &mut Vec<&'s mut Matrix<T>>) {
        for layer in &mut self.fc_layers {
            let (w, b) = layer.params_mut();
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.backcast_head);
        out.push(&mut self.forecast_head);
    }
}

impl BlockVars {
    /// Leaf nodes in the order of [`BlockWeights::parameters`].
    pub(crate) fn parameter_vars(&self, out: &mut Vec<Var>) {
        for l in &self.fc {
            out.push(l.weight);
            out.push(l.bias);
        }
        out.push(self.backcast_head);
        out.push(self.forecast_head);
    }

    pub(crate) fn apply<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<BlockOutput> {
        let mut h = x;
        for layer in &self.fc {
            h = layer.apply(tape, h)?;
        }
        let backcast = tape.matmul_nt(h, self.backcast_head)?;
        let forecast = tape.matmul_nt(h, self.forecast_head)?;
        Ok(BlockOutput {
            hidden: h,
            backcast,
            forecast,
        })
    }
}

/// Applies one block to a single input vector, returning
/// `(backcast, forecast)` and recording the ops on `tape`.
pub fn block_forward<'a, T: Scalar>(
    block: &'a BlockWeights<T>,
    x: &[T],
    tape: &mut Tape<'a, T>,
) -> Result<(Vec<T>, Vec<T>)> {
    if x.len() != block.lookback() {
        return Err(Error::Shape {
            op: "block_forward",
            left: (1, x.len()),
            right: block.fc_layers[0].weight().shape(),
        });
    }
    let vars = block.record(tape);
    let input = tape.leaf(Matrix::row_vector(x));
    let out = vars.apply(tape, input)?;
    Ok((
        tape.value(out.backcast).as_slice().to_vec(),
        tape.value(out.forecast).as_slice().to_vec(),
    ))
}
