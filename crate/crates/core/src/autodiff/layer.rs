use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::matrix::Matrix;
use crate::autodiff::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu if x > T::zero() => x,
            Activation::Relu => T::zero(),
            Activation::Identity => x,
        }
    }
}

/// Fully connected layer `activation(W h + b)` with `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    weight: Matrix<T>,
    bias: Matrix<T>,
    activation: Activation,
}

/// Tape handles of a layer's parameters for one recorded pass.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Length {
                op: "DenseLayer bias",
                left: bias.len(),
                right: weight.rows(),
            });
        }
        Ok(Self {
            weight,
            bias: Matrix::row_vector(&bias),
            activation,
        })
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights and zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let weight = Matrix::from_fn(output, input, |_, _| {
            T::of(rng.random_range(-bound..=bound))
        });
        Self {
            weight,
            bias: Matrix::zeros(1, output),
            activation,
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix<T> {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut Matrix<T> {
        &mut self.weight
    }

    pub fn bias(&self) -> &[T] {
        self.bias.as_slice()
    }

    pub(crate) fn bias_matrix(&self) -> &Matrix<T> {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut Matrix<T> {
        &mut self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Matrix<T>, &mut Matrix<T>) {
        (&mut self.weight, &mut self.bias)
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, activation: Activation) {
        self.activation = activation;
    }

    /// Registers the parameters as borrowed leaves on `tape`.
    pub fn record<'a>(&'a self, tape: &mut Tape<'a, T>) -> LayerVars {
        LayerVars {
            weight: tape.leaf_ref(&self.weight),
            bias: tape.leaf_ref(&self.bias),
            activation: self.activation,
        }
    }

    /// `W x + b` without the activation, evaluated off-tape.
    pub fn pre_activation(&self, x: &[T]) -> Result<Vec<T>> {
        let mut z = self.weight.mul_vec(x)?;
        for (z, &b) in z.iter_mut().zip(self.bias()) {
            *z = *z + b;
        }
        Ok(z)
    }

    /// Off-tape evaluation of one input vector.
    pub fn eval(&self, x: &[T]) -> Result<Vec<T>> {
        let mut z = self.pre_activation(x)?;
        for v in &mut z {
            *v = self.activation.apply(*v);
        }
        Ok(z)
    }

    /// Off-tape evaluation of every row of the `B x in` matrix `x`.
    pub fn eval_batch(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut z = x.matmul_nt(&self.weight)?;
        let bias = self.bias();
        for r in 0..z.rows() {
            for (v, &b) in z.row_mut(r).iter_mut().zip(bias) {
                *v = self.activation.apply(*v + b);
            }
        }
        Ok(z)
    }
}

impl LayerVars {
    /// Applies the layer to the `B x in` node `x`.
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let (w_rows, w_cols) = tape.value(self.weight).shape();
        let x_shape = tape.value(x).shape();
        if x_shape.1 != w_cols {
            return Err(Error::Shape {
                op: "dense input",
                left: x_shape,
                right: (w_rows, w_cols),
            });
        }
        let z = tape.matmul_nt(x, self.weight)?;
        let z = tape.add_row(z, self.bias)?;
        Ok(match self.activation {
            Activation::Relu => tape.relu(z),
            Activation::Identity => z,
        })
    }
}

/// Applies `layer` to a single input vector, recording the ops on `tape`.
pub fn forward_dense<'a, T: Scalar>(
    layer: &'a DenseLayer<T>,
    input: &[T],
    tape: &mut Tape<'a, T>,
) -> Result<Vec<T>> {
    if input.len() != layer.input_width() {
        return Err(Error::Shape {
            op: "forward_dense",
            left: (1, input.len()),
            right: layer.weight.shape(),
        });
    }
    let vars = layer.record(tape);
    let x = tape.leaf(Matrix::row_vector(input));
    let out = vars.apply(tape, x)?;
    Ok(tape.value(out).as_slice().to_vec())
}
