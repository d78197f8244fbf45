use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{LossKind, Matrix, Tape, Var};
use crate::error::{Error, Result};
use crate::model::block::{BlockVars, BlockWeights};
use crate::scalar::Scalar;

pub const LOOKBACK_MULTIPLES: std::ops::RangeInclusive<usize> = 2..=7;

/// Network topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input window length `t`, an integer multiple of `horizon`.
    pub lookback: usize,
    pub horizon: usize,
    pub block_count: usize,
    /// Fully connected layers per block.
    pub layers: usize,
    pub width: usize,
    pub share_weights: bool,
}

impl ModelConfig {
    /// Paper-scale topology: 30 blocks of 4 layers, width 512.
    pub fn paper(horizon: usize, lookback_multiple: usize) -> Self {
        Self {
            lookback: horizon * lookback_multiple,
            horizon,
            block_count: 30,
            layers: 4,
            width: 512,
            share_weights: false,
        }
    }

    pub fn lookback_multiple(&self) -> usize {
        self.lookback / self.horizon.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Topology(m));
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if self.lookback % self.horizon != 0
            || !LOOKBACK_MULTIPLES.contains(&self.lookback_multiple())
        {
            return bad(format!(
                "lookback {} is not 2..=7 horizons of {}",
                self.lookback, self.horizon
            ));
        }
        if self.block_count == 0 || self.layers == 0 || self.width == 0 {
            return bad("block count, layers and width must be at least 1".into());
        }
        Ok(())
    }

    /// Number of distinct weight sets stored.
    pub fn stored_blocks(&self) -> usize {
        if self.share_weights {
            1
        } else {
            self.block_count
        }
    }
}

/// The generic doubly residual network.
#[derive(Clone, Debug, PartialEq)]
pub struct NBeatsModel<T> {
    config: ModelConfig,
    seed: u64,
    blocks: Vec<BlockWeights<T>>,
}

/// Per-block quantities of one forward pass over a single window.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    /// Block inputs `x_1 .. x_L`; `x_1` is the model input.
    pub inputs: Vec<Vec<T>>,
    pub backcasts: Vec<Vec<T>>,
    pub partial_forecasts: Vec<Vec<T>>,
    /// Residual left after the last block, `x_L - backcast_L`.
    pub final_residual: Vec<T>,
    pub forecast: Vec<T>,
}

pub(crate) struct ModelVars {
    blocks: Vec<BlockVars>,
}

impl ModelVars {
    /// Leaf nodes in the order of [`NBeatsModel::parameters`].
    pub(crate) fn parameter_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for b in &self.blocks {
            b.parameter_vars(&mut out);
        }
        out
    }
}

pub(crate) struct ForwardNodes {
    pub inputs: Vec<Var>,
    pub backcasts: Vec<Var>,
    pub partials: Vec<Var>,
    pub final_residual: Var,
    pub forecast: Var,
}

/// Builds a model with seeded Glorot-uniform weights.
pub fn build_model<T: Scalar>(config: ModelConfig, seed: u64) -> Result<NBeatsModel<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = (0..config.stored_blocks())
        .map(|_| {
            BlockWeights::random(
                config.lookback,
                config.horizon,
                config.layers,
                config.width,
                &mut rng,
            )
        })
        .collect();
    Ok(NBeatsModel {
        config,
        seed,
        blocks,
    })
}

impl<T: Scalar> NBeatsModel<T> {
    /// Assembles a model from explicit weights. Shared models take exactly
    /// one block.
    pub fn from_blocks(
        config: ModelConfig,
        seed: u64,
        blocks: Vec<BlockWeights<T>>,
    ) -> Result<Self> {
        if blocks.len() != config.stored_blocks() {
            return Err(Error::Topology(format!(
                "expected {} stored blocks, got {}",
                config.stored_blocks(),
                blocks.len()
            )));
        }
        for b in &blocks {
            if b.lookback() != config.lookback
                || b.horizon() != config.horizon
                || b.width() != config.width
                || b.layers().len() != config.layers
            {
                return Err(Error::Topology(
                    "block dimensions disagree with the model config".into(),
                ));
            }
        }
        Ok(Self {
            config,
            seed,
            blocks,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lookback(&self) -> usize {
        self.config.lookback
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn block_count(&self) -> usize {
        self.config.block_count
    }

    pub fn stored_blocks(&self) -> &[BlockWeights<T>] {
        &self.blocks
    }

    pub fn stored_blocks_mut(&mut self) -> &mut [BlockWeights<T>] {
        &mut self.blocks
    }

    /// Weights used by block `index` (0-based).
    pub fn block(&self, index: usize) -> &BlockWeights<T> {
        if self.config.share_weights {
            &self.blocks[0]
        } else {
            &self.blocks[index]
        }
    }

    /// A shared-weight model reusing the same block `block_count` times.
    pub fn with_block_count(&self, block_count: usize) -> Result<Self> {
        if !self.config.share_weights {
            return Err(Error::Topology(
                "only shared-weight models can change their block count".into(),
            ));
        }
        let config = ModelConfig {
            block_count,
            ..self.config
        };
        config.validate()?;
        Ok(Self {
            config,
            seed: self.seed,
            blocks: self.blocks.clone(),
        })
    }

    /// Equivalent unique-weight model holding `block_count` copies.
    pub fn unshared(&self) -> Self {
        let blocks = (0..self.config.block_count)
            .map(|i| self.block(i).clone())
            .collect();
        Self {
            config: ModelConfig {
                share_weights: false,
                ..self.config
            },
            seed: self.seed,
            blocks,
        }
    }

    /// Named parameters in a fixed order (checkpoint and optimizer order).
    pub fn parameters(&self) -> Vec<(String, &Matrix<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            b.parameters(&format!("block{i}"), &mut out);
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            b.parameters_mut(&mut out);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters()
            .iter()
            .map(|(_, m)| m.rows() * m.cols())
            .sum()
    }

    pub(crate) fn record<'a>(&'a self, tape: &mut Tape<'a, T>) -> ModelVars {
        ModelVars {
            blocks: self.blocks.iter().map(|b| b.record(tape)).collect(),
        }
    }

    /// Records the doubly residual recursion over the `B x t` node `x`.
    pub(crate) fn forward_nodes(
        &self,
        tape: &mut Tape<'_, T>,
        vars: &ModelVars,
        x: Var,
    ) -> Result<ForwardNodes> {
        let cols = tape.value(x).cols();
        if cols != self.config.lookback {
            return Err(Error::Shape {
                op: "model input",
                left: tape.value(x).shape(),
                right: (tape.value(x).rows(), self.config.lookback),
            });
        }
        let l = self.config.block_count;
        let mut nodes = ForwardNodes {
            inputs: Vec::with_capacity(l),
            backcasts: Vec::with_capacity(l),
            partials: Vec::with_capacity(l),
            final_residual: x,
            forecast: x,
        };
        let mut residual = x;
        let mut forecast: Option<Var> = None;
        for block in 0..l {
            let bv = if self.config.share_weights {
                &vars.blocks[0]
            } else {
                &vars.blocks[block]
            };
            let out = bv.apply(tape, residual)?;
            if !tape.value(out.backcast).is_finite()
                || !tape.value(out.forecast).is_finite()
                || !tape.value(out.hidden).is_finite()
            {
                return Err(Error::NonFiniteBlock { block });
            }
            nodes.inputs.push(residual);
            nodes.backcasts.push(out.backcast);
            nodes.partials.push(out.forecast);
            forecast = Some(match forecast {
                None => out.forecast,
                Some(acc) => tape.add(acc, out.forecast)?,
            });
            residual = tape.sub(residual, out.backcast)?;
        }
        nodes.final_residual = residual;
        nodes.forecast = forecast.expect("at least one block");
        Ok(nodes)
    }

    /// Forecasts every row of the `B x t` batch.
    pub fn forecast_batch(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if !x.is_finite() {
            return Err(Error::Degenerate("non-finite model input".into()));
        }
        let mut tape = Tape::new();
        let vars = self.record(&mut tape);
        let input = tape.leaf_ref(x);
        let nodes = self.forward_nodes(&mut tape, &vars, input)?;
        Ok(tape.value(nodes.forecast).clone())
    }

    /// Batch loss over `inputs` (`B x t`) and `targets` (`B x H`) with the
    /// gradient of every parameter, in [`parameters`](Self::parameters) order.
    /// `row_scale` holds the per-row MASE denominators and is ignored by the
    /// other losses.
    pub fn loss_gradients(
        &self,
        kind: LossKind,
        inputs: &Matrix<T>,
        targets: Matrix<T>,
        row_scale: Vec<T>,
    ) -> Result<(T, Vec<Matrix<T>>)> {
        let mut tape = Tape::new();
        let vars = self.record(&mut tape);
        let x = tape.leaf_ref(inputs);
        let nodes = self.forward_nodes(&mut tape, &vars, x)?;
        let root = tape.loss(kind, nodes.forecast, targets, row_scale)?;
        let loss = tape.value(root).get(0, 0);
        let g = tape.backward(root, T::one())?;
        let grads = vars
            .parameter_vars()
            .into_iter()
            .zip(self.parameters())
            .map(|(v, (_, m))| g.get_or_zeros(v, m.shape()))
            .collect();
        Ok((loss, grads))
    }

    /// Forward pass with the full per-block trace.
    pub fn forward(&self, x: &[T]) -> Result<ForwardTrace<T>> {
        let mut tape = Tape::new();
        model_forward(self, x, &mut tape)
    }

    /// Forecast with the input scaled by its window maximum and the output
    /// descaled by the same factor; a zero maximum uses scale 1.
    pub fn scaled_forecast(&self, window: &[T]) -> Result<Vec<T>> {
        let scale = window_scale(window);
        let x: Vec<T> = window.iter().map(|&v| v / scale).collect();
        let trace = self.forward(&x)?;
        Ok(trace.forecast.into_iter().map(|v| v * scale).collect())
    }
}

/// Divisor applied to a window before it enters the network.
pub fn window_scale<T: Scalar>(window: &[T]) -> T {
    let max = window
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, v| m.max(v));
    if max == T::zero() || !max.is_finite() {
        T::one()
    } else {
        max
    }
}

/// Forward pass over one window, recording every op on `tape`.
pub fn model_forward<'a, T: Scalar>(
    model: &'a NBeatsModel<T>,
    x: &[T],
    tape: &mut Tape<'a, T>,
) -> Result<ForwardTrace<T>> {
    if x.len() != model.lookback() {
        return Err(Error::Length {
            op: "model_forward input",
            left: x.len(),
            right: model.lookback(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite model input".into()));
    }
    let vars = model.record(tape);
    let input = tape.leaf(Matrix::row_vector(x));
    let nodes = model.forward_nodes(tape, &vars, input)?;
    let vec = |v: Var| tape.value(v).as_slice().to_vec();
    Ok(ForwardTrace {
        inputs: nodes.inputs.iter().map(|&v| vec(v)).collect(),
        backcasts: nodes.backcasts.iter().map(|&v| vec(v)).collect(),
        partial_forecasts: nodes.partials.iter().map(|&v| vec(v)).collect(),
        final_residual: vec(nodes.final_residual),
        forecast: vec(nodes.forecast),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::block::block_forward;

    fn small(share: bool, blocks: usize) -> ModelConfig {
        ModelConfig {
            lookback: 6,
            horizon: 3,
            block_count: blocks,
            layers: 2,
            width: 8,
            share_weights: share,
        }
    }

    #[test]
    fn paper_defaults() {
        let cfg = ModelConfig::paper(18, 2);
        assert_eq!((cfg.block_count, cfg.layers, cfg.width), (30, 4, 512));
        assert_eq!(cfg.lookback, 36);
    }

    #[test]
    fn invalid_topologies_rejected() {
        let mut cfg = small(false, 2);
        cfg.lookback = 5;
        assert!(build_model::<f64>(cfg, 0).is_err());
        cfg.lookback = 24;
        assert!(build_model::<f64>(cfg, 0).is_err());
        let mut cfg = small(false, 0);
        assert!(build_model::<f64>(cfg, 0).is_err());
        cfg.block_count = 1;
        cfg.width = 0;
        assert!(build_model::<f64>(cfg, 0).is_err());
    }

    #[test]
    fn sharing_stores_one_block_and_seed_is_deterministic() {
        let a = build_model::<f64>(small(true, 5), 9).unwrap();
        assert_eq!(a.stored_blocks().len(), 1);
        let b = build_model::<f64>(small(true, 5), 9).unwrap();
        assert_eq!(a, b);
        let c = build_model::<f64>(small(false, 5), 9).unwrap();
        assert_eq!(c.stored_blocks().len(), 5);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = build_model::<f64>(small(false, 1), 1).unwrap();
        for p in m.parameters_mut() {
            p.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let (bc, fc) = block_forward(m.block(0), &[1.0; 6], &mut tape).unwrap();
        assert!(bc.iter().chain(&fc).all(|&v| v == 0.0));
    }

    #[test]
    fn dead_forecast_head_gives_zero_forecast() {
        let mut m = build_model::<f64>(small(false, 1), 2).unwrap();
        m.stored_blocks_mut()[0]
            .forecast_head_mut()
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let mut tape = Tape::new();
        let (_, fc) = block_forward(m.block(0), &[0.5; 6], &mut tape).unwrap();
        assert!(fc.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_max_window_uses_unit_scale() {
        let m = build_model::<f64>(small(true, 3), 4).unwrap();
        let zeros = [0.0; 6];
        assert_eq!(m.scaled_forecast(&zeros).unwrap(), m.forward(&zeros).unwrap().forecast);
        let unit = [0.2, 1.0, 0.3, 0.4, 0.9, 0.1];
        assert_eq!(m.scaled_forecast(&unit).unwrap(), m.forward(&unit).unwrap().forecast);
    }

    #[test]
    fn wrong_input_length_is_an_error() {
        let m = build_model::<f64>(small(true, 2), 4).unwrap();
        assert!(m.forward(&[1.0; 5]).is_err());
    }

    #[test]
    fn non_finite_block_is_reported() {
        let mut m = build_model::<f64>(small(false, 3), 4).unwrap();
        m.stored_blocks_mut()[1].forecast_head_mut().set(0, 0, f64::INFINITY);
        let err = m.forward(&[1.0; 6]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteBlock { block: 1 }), "{err}");
    }
}
