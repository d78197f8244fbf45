//! Oracles and fixtures shared by the integration tests and the acceptance
//! harness. Everything here is coded independently of the library paths it
//! checks.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nbeats::autodiff::{Activation, LossKind, Matrix};
use nbeats::model::{build_model, ModelConfig, NBeatsModel};
use nbeats::Model;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

// ---------------------------------------------------------------- gradients

/// Gradient model of the gradient checks: L=4 blocks of 4 layers, width 32.
pub fn gradient_model(seed: u64, share_weights: bool) -> Model {
    build_model(
        ModelConfig {
            lookback: 12,
            horizon: 6,
            block_count: 4,
            layers: 4,
            width: 32,
            share_weights,
        },
        seed,
    )
    .unwrap()
}

pub struct GradBatch {
    pub inputs: Matrix<f64>,
    pub targets: Matrix<f64>,
    pub scales: Vec<f64>,
}

pub fn grad_batch(rng: &mut ChaCha8Rng, model: &Model, rows: usize) -> GradBatch {
    GradBatch {
        inputs: uniform_matrix(rng, rows, model.lookback(), 0.2, 1.2),
        targets: uniform_matrix(rng, rows, model.horizon(), 0.5, 1.5),
        scales: (0..rows).map(|_| rng.random_range(0.5..2.0)).collect(),
    }
}

fn loss_at(model: &Model, kind: LossKind, b: &GradBatch) -> f64 {
    model
        .loss_gradients(kind, &b.inputs, b.targets.clone(), b.scales.clone())
        .unwrap()
        .0
}

fn perturbed(model: &Model, param: usize, coord: usize, delta: f64) -> Model {
    let mut m = model.clone();
    m.parameters_mut()[param].as_mut_slice()[coord] += delta;
    m
}

pub const FD_STEP: f64 = 1e-4;

/// Outcome of one finite-difference probe of a parameter coordinate.
#[derive(Clone, Copy, Debug)]
pub struct GradProbe {
    pub analytic: f64,
    pub numeric: f64,
    /// Disagreement between the `h` and `2h` central differences, relative
    /// to their size; large only when a kink lies inside the stencil.
    pub stencil_spread: f64,
}

impl GradProbe {
    pub fn relative_error(&self) -> f64 {
        let d = self.analytic.abs().max(self.numeric.abs());
        if d == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / d
        }
    }
}

/// Five-point central difference of the loss along one coordinate.
pub fn probe_coordinate(model: &Model, kind: LossKind, b: &GradBatch, analytic: f64, param: usize, coord: usize) -> GradProbe {
    let h = FD_STEP;
    let f = |d: f64| loss_at(&perturbed(model, param, coord, d), kind, b);
    let (p1, m1, p2, m2) = (f(h), f(-h), f(2.0 * h), f(-2.0 * h));
    let d1 = (p1 - m1) / (2.0 * h);
    let d2 = (p2 - m2) / (4.0 * h);
    let numeric = (4.0 * d1 - d2) / 3.0;
    let spread = (d1 - d2).abs() / d1.abs().max(d2.abs()).max(1e-12);
    GradProbe {
        analytic,
        numeric,
        stencil_spread: spread,
    }
}

/// Threshold above which a probe is treated as straddling a kink.
pub const KINK_SPREAD: f64 = 1e-4;
/// Coordinates whose analytic gradient is below this are dead units; they
/// are checked in absolute terms instead.
pub const MIN_GRADIENT: f64 = 1e-6;

pub struct GradientCheck {
    pub probes: Vec<(LossKind, GradProbe)>,
    pub dead_max_abs: f64,
    pub rejected: usize,
}

impl GradientCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.probes.iter().map(|(_, p)| p.relative_error()).fold(0.0, f64::max)
    }
}

/// `count` probes per loss, each a random model, batch and coordinate,
/// alternating unique and shared weights. Kink-straddling draws are
/// redrawn.
pub fn gradient_check(count: usize, seed: u64) -> GradientCheck {
    let mut r = rng(seed);
    let mut out = GradientCheck {
        probes: Vec::new(),
        dead_max_abs: 0.0,
        rejected: 0,
    };
    for kind in [LossKind::Smape, LossKind::Mape, LossKind::Mase] {
        let mut done = 0;
        while done < count {
            let model = gradient_model(r.random(), done % 2 == 1);
            let batch = grad_batch(&mut r, &model, 4);
            let (_, grads) = model
                .loss_gradients(kind, &batch.inputs, batch.targets.clone(), batch.scales.clone())
                .unwrap();
            let param = r.random_range(0..grads.len());
            let coord = r.random_range(0..grads[param].as_slice().len());
            let analytic = grads[param].as_slice()[coord];
            let probe = probe_coordinate(&model, kind, &batch, analytic, param, coord);
            if probe.stencil_spread > KINK_SPREAD && analytic.abs() >= MIN_GRADIENT {
                out.rejected += 1;
                continue;
            }
            if analytic.abs() < MIN_GRADIENT {
                out.dead_max_abs = out.dead_max_abs.max((probe.numeric - analytic).abs());
                continue;
            }
            out.probes.push((kind, probe));
            done += 1;
        }
    }
    out
}

// ------------------------------------------------------------ linear models

/// Shared-weight model with Identity activations and zero biases.
pub fn linear_model(lookback: usize, horizon: usize, width: usize, layers: usize, seed: u64) -> Model {
    let mut m = build_model::<f64>(
        ModelConfig {
            lookback,
            horizon,
            block_count: 1,
            layers,
            width,
            share_weights: true,
        },
        seed,
    )
    .unwrap();
    for layer in m.stored_blocks_mut()[0].layers_mut() {
        layer.set_activation(Activation::Identity);
        layer.bias_mut().as_mut_slice().fill(0.0);
    }
    m
}

/// Trunk product `W_k ... W_1` of a block, by nalgebra.
pub fn trunk_product<T: nbeats::Scalar>(model: &NBeatsModel<T>) -> DMatrix<f64> {
    let block = model.block(0);
    let to = |m: &Matrix<T>| DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j).to_f64_lossy());
    let mut f = to(block.layers()[0].weight());
    for layer in &block.layers()[1..] {
        f = to(layer.weight()) * f;
    }
    f
}

/// `sum_{l=1..L} G (I - F Q)^{l-1} F x` by repeated nalgebra products.
pub fn neumann_partial_sums(model: &Model, x: &[f64], max_blocks: usize) -> Vec<DVector<f64>> {
    let block = model.block(0);
    let f = trunk_product(model);
    let g = to_na(block.forecast_head());
    let q = to_na(block.backcast_head());
    let step = DMatrix::identity(f.nrows(), f.nrows()) - &f * &q;
    let mut h = &f * DVector::from_column_slice(x);
    let mut acc = DVector::zeros(g.nrows());
    let mut out = Vec::with_capacity(max_blocks);
    for l in 0..max_blocks {
        if l > 0 {
            h = &step * h;
        }
        acc += &g * &h;
        out.push(acc.clone());
    }
    out
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let denom = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / denom
}

// ---------------------------------------------------------- reference Theta

/// Classical multiplicative decomposition by ratio to a centred moving
/// average, applied when the lag-m autocorrelation clears the 90% bound.
/// Returns the seasonal index per phase (all 1 when not seasonal).
fn reference_indices(y: &[f64], m: usize) -> Vec<f64> {
    let n = y.len();
    if m <= 1 || n < 3 * m || y.iter().any(|v| *v <= 0.0) {
        return vec![1.0; m.max(1)];
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r: Vec<f64> = (1..=m)
        .map(|k| (0..n - k).map(|i| (y[i] - mean) * (y[i + k] - mean)).sum::<f64>() / var)
        .collect();
    let bound = 1.645 * ((1.0 + 2.0 * r[..m - 1].iter().map(|v| v * v).sum::<f64>()) / n as f64).sqrt();
    if r[m - 1].abs() <= bound {
        return vec![1.0; m];
    }
    let mut ratios = vec![Vec::new(); m];
    let half = m / 2;
    for t in half..n - half {
        let ma = if m % 2 == 0 {
            let inner: f64 = y[t + 1 - half..t + half].iter().sum();
            (0.5 * y[t - half] + inner + 0.5 * y[t + half]) / m as f64
        } else {
            y[t - half..=t + half].iter().sum::<f64>() / m as f64
        };
        ratios[t % m].push(y[t] / ma);
    }
    let raw: Vec<f64> = ratios.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let norm = raw.iter().sum::<f64>() / m as f64;
    raw.iter().map(|v| v / norm).collect()
}

/// Theta(0,2) in its SES-with-drift form: SES on the deseasonalised data
/// plus half the regression slope as drift, with the finite-sample
/// correction of the slope term.
pub fn reference_theta(y: &[f64], horizon: usize, m: usize) -> Vec<f64> {
    let n = y.len();
    let idx = reference_indices(y, m);
    let d: Vec<f64> = (0..n).map(|t| y[t] / idx[t % idx.len()]).collect();
    let nf = n as f64;
    let tbar = (nf - 1.0) / 2.0;
    let dbar = d.iter().sum::<f64>() / nf;
    let slope = d.iter().enumerate().map(|(t, v)| (t as f64 - tbar) * (v - dbar)).sum::<f64>()
        / (0..n).map(|t| (t as f64 - tbar).powi(2)).sum::<f64>();
    let mut best = (f64::INFINITY, 0.5, 0.0);
    for k in 1..100 {
        let a = k as f64 / 100.0;
        let mut level = d[0];
        let mut sse = 0.0;
        for v in &d[1..] {
            sse += (v - level).powi(2);
            level += a * (v - level);
        }
        if sse < best.0 {
            best = (sse, a, level);
        }
    }
    let (_, a, level) = best;
    (1..=horizon)
        .map(|h| {
            let drift = 0.5 * slope * ((h - 1) as f64 + 1.0 / a - (1.0 - a).powi(n as i32) / a);
            (level + drift) * idx[(n + h - 1) % idx.len()]
        })
        .collect()
}

/// Monthly-like positive fixture: level, trend, seasonality and noise.
pub fn monthly_fixture(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let n = r.random_range(60..144);
            let level = r.random_range(500.0..8000.0);
            let trend = r.random_range(-0.004..0.01) * level;
            let amp = r.random_range(0.0..0.3);
            let phase = r.random_range(0.0..std::f64::consts::TAU);
            let noise = r.random_range(0.01..0.08);
            (0..n)
                .map(|t| {
                    let s = 1.0 + amp * (std::f64::consts::TAU * t as f64 / 12.0 + phase).sin();
                    let e: f64 = r.random_range(-1.0..1.0);
                    (level + trend * t as f64) * s * (1.0 + noise * e)
                })
                .collect()
        })
        .collect()
}
