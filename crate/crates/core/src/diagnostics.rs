//! Numerical checks of the meta-learning reading of the network: input
//! shifts, first-order linearization with effective forecast projections,
//! and the closed form of a fully linear stack.
//!
//! ```text
//! mu_0 = 0,  mu_l = mu_{l-1} + Q f(x - mu_{l-1})
//! G'_1 = G,  G'_l = G'_{l-1} [I - J_f(x_{l-1}) Q],  y_lin = sum_l G'_l f(x)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Matrix};
use crate::error::{Error, Result};
use crate::model::{checkpoint, BlockWeights, ForwardTrace, ModelConfig, NBeatsModel};
use crate::scalar::Scalar;

pub const DIAGNOSTICS_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_FD_STEP: f64 = 1e-5;
/// Pre-activations closer than this to zero count as sitting on a kink.
pub const KINK_GUARD: f64 = 1e-6;
pub const KINK_JITTER: f64 = 1e-4;
pub const MAX_JITTERS: usize = 3;
pub const DEFAULT_EPSILONS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Input shifts `mu_0..mu_L`; block `l` sees `x - mu_{l-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSequence<T> {
    pub shifts: Vec<Vec<T>>,
}

impl<T: Scalar> ShiftSequence<T> {
    /// Largest violation of `mu_l = mu_{l-1} + backcast_l` over the trace.
    pub fn recursion_error(&self, trace: &ForwardTrace<T>) -> f64 {
        let mut worst = 0.0f64;
        for (l, b) in trace.backcasts.iter().enumerate() {
            for ((cur, prev), bc) in self.shifts[l + 1].iter().zip(&self.shifts[l]).zip(b) {
                worst = worst.max((*cur - *prev - *bc).to_f64_lossy().abs());
            }
        }
        worst
    }
}

pub fn extract_shifts<T: Scalar>(trace: &ForwardTrace<T>) -> ShiftSequence<T> {
    let x = &trace.inputs[0];
    let diff = |xl: &[T]| x.iter().zip(xl).map(|(a, b)| *a - *b).collect::<Vec<T>>();
    let mut shifts: Vec<Vec<T>> = trace.inputs.iter().map(|xl| diff(xl)).collect();
    shifts.push(diff(&trace.final_residual));
    ShiftSequence { shifts }
}

/// Effective forecast projections `G'_1..G'_L`, each `H x width`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveProjection<T> {
    pub projections: Vec<Matrix<T>>,
}

/// Central-difference Jacobian of a block trunk, `width x lookback`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianEstimate<T> {
    pub jacobian: Matrix<T>,
    /// Point actually differentiated (after any kink jitter).
    pub point: Vec<T>,
    pub step: f64,
    pub jitters: usize,
}

fn near_kink<T: Scalar>(block: &BlockWeights<T>, x: &[T]) -> Result<bool> {
    let pre = block.trunk_pre_activations(x)?;
    Ok(block.layers().iter().zip(&pre).any(|(layer, z)| {
        layer.activation() == Activation::Relu && z.iter().any(|v| v.to_f64_lossy().abs() < KINK_GUARD)
    }))
}

pub fn jacobian_f<T: Scalar>(block: &BlockWeights<T>, x0: &[T], h: f64) -> Result<JacobianEstimate<T>> {
    let t = block.lookback();
    if x0.len() != t {
        return Err(Error::Length {
            op: "jacobian point",
            left: x0.len(),
            right: t,
        });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut point = x0.to_vec();
    let mut jitters = 0;
    while near_kink(block, &point)? {
        if jitters == MAX_JITTERS {
            return Err(Error::KinkProximity(MAX_JITTERS));
        }
        jitters += 1;
        // Reproducible per point: the jitter stream depends only on the attempt.
        let mut rng = ChaCha8Rng::seed_from_u64(jitters as u64);
        point = x0
            .iter()
            .map(|&v| v + T::of(KINK_JITTER * rng.random_range(-1.0..=1.0)))
            .collect();
    }
    // Rows 2j and 2j+1 hold the +h and -h probes along e_j.
    let mut probes = Matrix::zeros(2 * t, t);
    for j in 0..t {
        for (k, sign) in [(2 * j, 1.0), (2 * j + 1, -1.0)] {
            probes.row_mut(k).copy_from_slice(&point);
            probes.set(k, j, point[j] + T::of(sign * h));
        }
    }
    let out = block.trunk_batch(&probes)?;
    let jac = Matrix::from_fn(block.width(), t, |i, j| {
        (out.get(2 * j, i) - out.get(2 * j + 1, i)) / T::of(2.0 * h)
    });
    if !jac.is_finite() {
        return Err(Error::Degenerate("non-finite Jacobian estimate".into()));
    }
    Ok(JacobianEstimate {
        jacobian: jac,
        point,
        step: h,
        jitters,
    })
}

/// Copy of `model` with every backcast head multiplied by `epsilon`.
pub fn scale_backcast<T: Scalar>(model: &NBeatsModel<T>, epsilon: f64) -> NBeatsModel<T> {
    let mut out = model.clone();
    for b in out.stored_blocks_mut() {
        let q = b.backcast_head().scale(T::of(epsilon));
        *b.backcast_head_mut() = q;
    }
    out
}

/// Shared-weight model that repeats block 0 of `model` for its block count.
pub fn shared_view<T: Scalar>(model: &NBeatsModel<T>) -> Result<NBeatsModel<T>> {
    if model.config().share_weights {
        return Ok(model.clone());
    }
    NBeatsModel::from_blocks(
        ModelConfig {
            share_weights: true,
            ..*model.config()
        },
        model.seed(),
        vec![model.block(0).clone()],
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linearization<T> {
    pub linearized: Vec<T>,
    pub full: Vec<T>,
    /// Max-abs difference between the two forecasts.
    pub residual: f64,
    pub projections: EffectiveProjection<T>,
    pub shifts: ShiftSequence<T>,
}

fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (*p - *q).to_f64_lossy().abs())
        .fold(0.0, f64::max)
}

/// First-order forecast of a shared-weight model whose backcast head is
/// scaled by `epsilon`, next to the exact forward pass.
pub fn linearized_forecast<T: Scalar>(model: &NBeatsModel<T>, x: &[T], epsilon: f64) -> Result<Linearization<T>> {
    if !model.config().share_weights {
        return Err(Error::Topology("linearization needs a shared-weight model".into()));
    }
    let scaled = scale_backcast(model, epsilon);
    let trace = scaled.forward(x)?;
    let block = scaled.block(0);
    let (g, q) = (block.forecast_head(), block.backcast_head());
    let width = block.width();
    let mut projections = vec![g.clone()];
    for l in 1..scaled.block_count() {
        // Step l+1 expands around the input of block l.
        let jac = jacobian_f(block, &trace.inputs[l - 1], DEFAULT_FD_STEP)?.jacobian;
        let update = Matrix::identity(width).sub(&jac.matmul(q)?)?;
        let next = projections[l - 1].matmul(&update)?;
        projections.push(next);
    }
    let fx = block.trunk(x)?;
    let mut linearized = vec![T::zero(); scaled.horizon()];
    for p in &projections {
        for (acc, v) in linearized.iter_mut().zip(p.mul_vec(&fx)?) {
            *acc = *acc + v;
        }
    }
    if projections.iter().any(|p| !p.is_finite()) {
        return Err(Error::Degenerate("non-finite effective projection".into()));
    }
    Ok(Linearization {
        residual: max_abs_diff(&linearized, &trace.forecast),
        linearized,
        full: trace.forecast.clone(),
        projections: EffectiveProjection { projections },
        shifts: extract_shifts(&trace),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Collapse<T> {
    pub network: Vec<T>,
    pub closed: Vec<T>,
    /// Max-abs difference relative to the largest closed-form entry.
    pub max_rel_diff: f64,
}

/// Affine map `F x + c` equal to an all-Identity trunk.
pub fn fold_linear_trunk<T: Scalar>(block: &BlockWeights<T>) -> Result<(Matrix<T>, Vec<T>)> {
    if block.layers().iter().any(|l| l.activation() != Activation::Identity) {
        return Err(Error::Config("linear collapse needs Identity activations".into()));
    }
    let mut layers = block.layers().iter();
    let first = layers.next().expect("blocks have a layer");
    let mut f = first.weight().clone();
    let mut c = first.bias().to_vec();
    for layer in layers {
        f = layer.weight().matmul(&f)?;
        c = layer.weight().mul_vec(&c)?;
        for (ci, bi) in c.iter_mut().zip(layer.bias()) {
            *ci = *ci + *bi;
        }
    }
    Ok((f, c))
}

/// Compares the `block_count`-block forward pass of a shared, all-linear
/// model with `sum_{l=1..L} G (I - F Q)^{l-1} (F x + c)`.
pub fn linear_collapse_check<T: Scalar>(model: &NBeatsModel<T>, x: &[T], block_count: usize) -> Result<Collapse<T>> {
    if block_count == 0 {
        return Err(Error::Config("block count must be at least 1".into()));
    }
    let model = shared_view(model)?.with_block_count(block_count)?;
    let block = model.block(0);
    let (f, c) = fold_linear_trunk(block)?;
    let (g, q) = (block.forecast_head(), block.backcast_head());
    let step = Matrix::identity(block.width()).sub(&f.matmul(q)?)?;
    let mut h = f.mul_vec(x)?;
    for (hi, ci) in h.iter_mut().zip(&c) {
        *hi = *hi + *ci;
    }
    let mut closed = vec![T::zero(); model.horizon()];
    for l in 0..block_count {
        if l > 0 {
            h = step.mul_vec(&h)?;
        }
        for (acc, v) in closed.iter_mut().zip(g.mul_vec(&h)?) {
            *acc = *acc + v;
        }
    }
    let network = model.forward(x)?.forecast;
    let denom = closed
        .iter()
        .map(|v| v.to_f64_lossy().abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    Ok(Collapse {
        max_rel_diff: max_abs_diff(&network, &closed) / denom,
        network,
        closed,
    })
}

/// Least-squares slope of `ln residual` against `ln epsilon`.
pub fn convergence_order(epsilons: &[f64], residuals: &[f64]) -> Result<f64> {
    if epsilons.len() != residuals.len() || epsilons.len() < 2 {
        return Err(Error::Config("order fit needs two or more paired points".into()));
    }
    if epsilons.iter().chain(residuals).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Degenerate("order fit needs positive finite values".into()));
    }
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("order fit needs distinct epsilons".into()));
    }
    Ok(xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseOptions {
    pub probes: usize,
    pub epsilons: Vec<f64>,
    /// Linear collapse is checked for every block count `1..=max`.
    pub collapse_max_blocks: usize,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self {
            probes: 16,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            collapse_max_blocks: 8,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearizationRow {
    pub epsilon: f64,
    pub mean_residual: f64,
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub block_count: usize,
    pub max_rel_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub checkpoint_digest: String,
    pub lookback: usize,
    pub horizon: usize,
    pub block_count: usize,
    pub probes: usize,
    pub seed: u64,
    /// Worst `mu_l = mu_{l-1} + backcast_l` violation over all probes.
    pub shift_recursion_error: f64,
    pub linearization: Vec<LinearizationRow>,
    /// Log-log slope of the mean residual; `None` when a residual is zero.
    pub linearization_order: Option<f64>,
    pub collapse: Vec<CollapseRow>,
}

/// Probe windows in the scaled input range `[0.5, 1]`.
pub fn probe_inputs<T: Scalar>(lookback: usize, count: usize, seed: u64) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..lookback).map(|_| T::of(rng.random_range(0.5..=1.0))).collect())
        .collect()
}

/// Runs every diagnostic on `model`. Unique-weight models are read
/// through their first block repeated.
pub fn diagnose<T: Scalar>(model: &NBeatsModel<T>, opts: &DiagnoseOptions) -> Result<DiagnosticsReport> {
    if opts.probes == 0 || opts.epsilons.is_empty() {
        return Err(Error::Config("diagnostics need probes and epsilons".into()));
    }
    let shared = shared_view(model)?;
    let probes = probe_inputs::<T>(model.lookback(), opts.probes, opts.seed);

    let shift_recursion_error = probes
        .par_iter()
        .map(|x| {
            let trace = model.forward(x)?;
            Ok(extract_shifts(&trace).recursion_error(&trace))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);

    let mut linearization = Vec::with_capacity(opts.epsilons.len());
    for &epsilon in &opts.epsilons {
        let residuals = probes
            .par_iter()
            .map(|x| linearized_forecast(&shared, x, epsilon).map(|l| l.residual))
            .collect::<Result<Vec<f64>>>()?;
        linearization.push(LinearizationRow {
            epsilon,
            mean_residual: residuals.iter().sum::<f64>() / residuals.len() as f64,
            max_residual: residuals.iter().copied().fold(0.0, f64::max),
        });
    }
    let linearization_order = convergence_order(
        &opts.epsilons,
        &linearization.iter().map(|r| r.mean_residual).collect::<Vec<_>>(),
    )
    .ok();

    let mut linear = shared.clone();
    for b in linear.stored_blocks_mut() {
        for layer in b.layers_mut() {
            layer.set_activation(Activation::Identity);
        }
    }
    let collapse = (1..=opts.collapse_max_blocks)
        .map(|block_count| {
            let worst = probes
                .iter()
                .map(|x| linear_collapse_check(&linear, x, block_count).map(|c| c.max_rel_diff))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(CollapseRow {
                block_count,
                max_rel_diff: worst,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DiagnosticsReport {
        schema_version: DIAGNOSTICS_SCHEMA_VERSION,
        checkpoint_digest: checkpoint::digest(model),
        lookback: model.lookback(),
        horizon: model.horizon(),
        block_count: model.block_count(),
        probes: opts.probes,
        seed: opts.seed,
        shift_recursion_error,
        linearization,
        linearization_order,
        collapse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::DenseLayer;
    use crate::model::build_model;

    fn cfg(block_count: usize, layers: usize, width: usize) -> ModelConfig {
        ModelConfig {
            lookback: 8,
            horizon: 4,
            block_count,
            layers,
            width,
            share_weights: true,
        }
    }

    fn linear(model: &NBeatsModel<f64>, zero_bias: bool) -> NBeatsModel<f64> {
        let mut m = model.clone();
        for b in m.stored_blocks_mut() {
            for layer in b.layers_mut() {
                layer.set_activation(Activation::Identity);
                if zero_bias {
                    *layer.bias_mut() = Matrix::zeros(1, layer.output_width());
                }
            }
        }
        m
    }

    fn input() -> Vec<f64> {
        (0..8).map(|k| 0.6 + 0.05 * k as f64).collect()
    }

    #[test]
    fn shifts_follow_the_backcast_recursion() {
        let m = build_model::<f64>(cfg(5, 2, 16), 3).unwrap();
        let trace = m.forward(&input()).unwrap();
        let s = extract_shifts(&trace);
        assert_eq!(s.shifts.len(), 6);
        assert!(s.shifts[0].iter().all(|v| *v == 0.0));
        assert!(s.recursion_error(&trace) < 1e-12);
        let total: Vec<f64> = (0..8).map(|i| trace.backcasts.iter().map(|b| b[i]).sum()).collect();
        assert!(max_abs_diff(&s.shifts[5], &total) < 1e-12);
    }

    #[test]
    fn zero_backcast_gives_zero_shifts_and_exact_linearization() {
        let m = scale_backcast(&build_model::<f64>(cfg(4, 2, 16), 1).unwrap(), 0.0);
        let lin = linearized_forecast(&m, &input(), 1.0).unwrap();
        assert!(lin.shifts.shifts.iter().flatten().all(|v| *v == 0.0));
        let gfx = m.block(0).forecast_head().mul_vec(&m.block(0).trunk(&input()).unwrap()).unwrap();
        for (a, b) in lin.linearized.iter().zip(&gfx) {
            assert!((a - 4.0 * b).abs() < 1e-12);
        }
        assert!(lin.residual < 1e-12);
    }

    #[test]
    fn single_block_has_no_correction() {
        let m = build_model::<f64>(cfg(1, 3, 16), 2).unwrap();
        let lin = linearized_forecast(&m, &input(), 0.1).unwrap();
        assert_eq!(lin.projections.projections.len(), 1);
        assert!(lin.residual < 1e-12);
    }

    #[test]
    fn identity_trunk_jacobian_is_weight_product() {
        let m = linear(&build_model::<f64>(cfg(1, 3, 12), 4).unwrap(), false);
        let (f, _) = fold_linear_trunk(m.block(0)).unwrap();
        let j = jacobian_f(m.block(0), &input(), DEFAULT_FD_STEP).unwrap();
        assert_eq!(j.jitters, 0);
        assert!(j.jacobian.sub(&f).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn constant_trunk_has_zero_jacobian() {
        let layer = DenseLayer::new(Matrix::zeros(6, 8), vec![0.5; 6], Activation::Relu).unwrap();
        let block = BlockWeights::new(vec![layer], Matrix::zeros(8, 6), Matrix::zeros(4, 6)).unwrap();
        let j = jacobian_f(&block, &input(), DEFAULT_FD_STEP).unwrap();
        assert_eq!(j.jacobian.max_abs(), 0.0);
    }

    #[test]
    fn unresolvable_kink_is_reported() {
        // Every pre-activation is identically zero.
        let layer = DenseLayer::new(Matrix::zeros(6, 8), vec![0.0; 6], Activation::Relu).unwrap();
        let block = BlockWeights::new(vec![layer], Matrix::zeros(8, 6), Matrix::zeros(4, 6)).unwrap();
        assert!(matches!(
            jacobian_f(&block, &input(), DEFAULT_FD_STEP),
            Err(Error::KinkProximity(3))
        ));
    }

    #[test]
    fn collapse_matches_forward_for_linear_models() {
        let base = build_model::<f64>(cfg(5, 3, 10), 9).unwrap();
        for zero_bias in [true, false] {
            let m = linear(&base, zero_bias);
            for l in 1..=5 {
                let c = linear_collapse_check(&m, &input(), l).unwrap();
                assert!(c.max_rel_diff < 1e-9, "L={l}: {}", c.max_rel_diff);
            }
        }
        assert!(linear_collapse_check(&base, &input(), 2).is_err());
    }

    #[test]
    fn order_fit_recovers_power_law() {
        let eps = [1e-1, 1e-2, 1e-3];
        let r: Vec<f64> = eps.iter().map(|e| 3.0 * e * e).collect();
        assert!((convergence_order(&eps, &r).unwrap() - 2.0).abs() < 1e-12);
        assert!(convergence_order(&eps, &[1.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn report_serializes_and_flags_exact_collapse() {
        let m = build_model::<f64>(cfg(3, 2, 16), 6).unwrap();
        let opts = DiagnoseOptions {
            probes: 3,
            collapse_max_blocks: 3,
            ..DiagnoseOptions::default()
        };
        let r = diagnose(&m, &opts).unwrap();
        assert_eq!(r.collapse.len(), 3);
        assert!(r.collapse.iter().all(|c| c.max_rel_diff < 1e-9));
        let back: DiagnosticsReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
