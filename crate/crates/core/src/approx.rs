//! Small ReLU networks fitted to the transition, reward and optimal Q
//! targets of a solved MDP, and the relative errors they reach.
//!
//! Parameters live in one flat vector so that gradients and optimizer state
//! share its layout. Layer `l` stores a `dims[l+1] x dims[l]` row-major weight
//! matrix followed by its bias.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{DeterministicMdp, MajorityMdpSpec};
use crate::solver::{backward_induction, optimal_policy, optimal_state_distribution, Solution, SolverError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApproxError {
    #[error("expected input of length {expected}, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("expected target of length {expected}, got {got}")]
    TargetShape { expected: usize, got: usize },
    #[error("parameter vector has {got} entries, layer dims need {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("network needs at least an input and an output dimension")]
    TooFewLayers,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("targets have zero second moment")]
    ZeroDenominator,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

// ---------------------------------------------------------------------------
// Network

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    dims: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpParams {
    /// `dims = [input, hidden..., output]`.
    pub fn from_flat(dims: Vec<usize>, params: Vec<f64>) -> Result<Self, ApproxError> {
        if dims.len() < 2 {
            return Err(ApproxError::TooFewLayers);
        }
        let expected = param_count(&dims);
        if params.len() != expected {
            return Err(ApproxError::ParamCount {
                expected,
                got: params.len(),
            });
        }
        Ok(MlpParams { dims, params })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self, ApproxError> {
        let n = param_count(&dims);
        Self::from_flat(dims, vec![0.0; n])
    }

    /// `depth` hidden layers of `width` units. Hidden weights are He-uniform,
    /// output weights Glorot-uniform, biases zero.
    pub fn random<R: Rng + ?Sized>(
        input: usize,
        depth: usize,
        width: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(width, depth));
        dims.push(output);
        let mut params = Vec::with_capacity(param_count(&dims));
        let layers = dims.len() - 1;
        for (l, w) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = if l + 1 < layers {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            params.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        MlpParams { dims, params }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        // (offset, fan_in, fan_out)
        let mut offset = 0;
        self.dims.windows(2).map(move |w| {
            let at = offset;
            offset += w[1] * w[0] + w[1];
            (at, w[0], w[1])
        })
    }

    /// Pre-activations and activations of every layer.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.dims.len() - 2;
        let mut acts = vec![x.to_vec()];
        for (l, (off, fan_in, fan_out)) in self.layers().enumerate() {
            let prev = &acts[acts.len() - 1];
            let w = &self.params[off..off + fan_in * fan_out];
            let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    b[o] + w[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(prev)
                        .map(|(wi, xi)| wi * xi)
                        .sum::<f64>()
                })
                .collect();
            acts.push(if l == last { z } else { z.into_iter().map(|v| v.max(0.0)).collect() });
        }
        acts
    }
}

pub fn mlp_forward(p: &MlpParams, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
    if x.len() != p.input_dim() {
        return Err(ApproxError::InputShape {
            expected: p.input_dim(),
            got: x.len(),
        });
    }
    Ok(p.trace(x).pop().expect("output layer"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub weight: f64,
}

/// Loss `(1/B) sum_i w_i ||f(x_i) - y_i||^2` over the batch and its gradient
/// in the flat parameter layout.
pub fn mlp_gradient(p: &MlpParams, batch: &[&Sample]) -> Result<(f64, Vec<f64>), ApproxError> {
    if batch.is_empty() {
        return Err(ApproxError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; p.params.len()];
    let mut loss = 0.0;
    let layers: Vec<(usize, usize, usize)> = p.layers().collect();
    for s in batch {
        if s.x.len() != p.input_dim() {
            return Err(ApproxError::InputShape {
                expected: p.input_dim(),
                got: s.x.len(),
            });
        }
        if s.y.len() != p.output_dim() {
            return Err(ApproxError::TargetShape {
                expected: p.output_dim(),
                got: s.y.len(),
            });
        }
        let acts = p.trace(&s.x);
        let out = &acts[acts.len() - 1];
        let mut delta: Vec<f64> = out
            .iter()
            .zip(&s.y)
            .map(|(o, y)| {
                loss += scale * s.weight * (o - y).powi(2);
                2.0 * scale * s.weight * (o - y)
            })
            .collect();
        for (l, &(off, fan_in, fan_out)) in layers.iter().enumerate().rev() {
            let input = &acts[l];
            for o in 0..fan_out {
                let row = off + o * fan_in;
                for i in 0..fan_in {
                    grad[row + i] += delta[o] * input[i];
                }
                grad[off + fan_in * fan_out + o] += delta[o];
            }
            if l > 0 {
                let w = &p.params[off..off + fan_in * fan_out];
                delta = (0..fan_in)
                    .map(|i| {
                        if input[i] > 0.0 {
                            (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
    }
    Ok((loss, grad))
}

/// `||g - g_fd|| / max(||g||, ||g_fd||)` where `g_fd` is the central
/// finite-difference gradient of the batch loss with step `h`.
pub fn finite_difference_deviation(p: &MlpParams, batch: &[&Sample], h: f64) -> Result<f64, ApproxError> {
    let (_, g) = mlp_gradient(p, batch)?;
    let mut probe = p.clone();
    let mut fd = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let orig = probe.params[k];
        probe.params[k] = orig + h;
        let plus = mlp_gradient(&probe, batch)?.0;
        probe.params[k] = orig - h;
        let minus = mlp_gradient(&probe, batch)?.0;
        probe.params[k] = orig;
        fd.push((plus - minus) / (2.0 * h));
    }
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut g.iter().zip(&fd).map(|(a, b)| a - b));
    let scale = norm(&mut g.iter().copied()).max(norm(&mut fd.iter().copied()));
    Ok(diff / scale.max(f64::MIN_POSITIVE))
}

// ---------------------------------------------------------------------------
// Optimizer

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 32,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ApproxError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ApproxError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(ApproxError::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ApproxError::Config("betas must lie in [0, 1)".into()));
        }
        if self.eps <= 0.0 {
            return Err(ApproxError::Config("eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl AdamState {
    pub fn new(p: &MlpParams) -> Self {
        AdamState {
            m: vec![0.0; p.params.len()],
            v: vec![0.0; p.params.len()],
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }
}

pub fn adam_step(p: &mut MlpParams, grad: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    state.t += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (k, &g) in grad.iter().enumerate() {
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        p.params[k] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Datasets and errors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxDatasets {
    pub model: Dataset,
    pub reward: Dataset,
    pub q: Dataset,
}

fn bits_f64(v: u64, width: usize) -> impl Iterator<Item = f64> {
    (0..width).map(move |i| ((v >> (width - 1 - i)) & 1) as f64)
}

/// Occupancy-weighted datasets along the optimal policy from `starts`
/// (uniformly weighted). Inputs are the state bits followed by the action
/// bit; weights are rescaled to mean 1.
pub fn build_datasets<M: DeterministicMdp + ?Sized>(
    mdp: &M,
    sol: &Solution,
    starts: &[u64],
) -> Result<ApproxDatasets, ApproxError> {
    if starts.is_empty() {
        return Err(ApproxError::EmptyDataset);
    }
    let policy = optimal_policy(&sol.q);
    let w0 = 1.0 / starts.len() as f64;
    let initial: Vec<(u64, f64)> = starts.iter().map(|&s| (s, w0)).collect();
    let occupancy = optimal_state_distribution(mdp, &policy, &initial)?;
    let width = mdp.state_width();
    let action_bits = crate::bits::bits_for(mdp.num_actions().saturating_sub(1) as u64).max(1);
    let mean = 1.0 / occupancy.len() as f64;
    let make = |name: &str, target: &dyn Fn(u64, usize) -> Vec<f64>| Dataset {
        name: name.to_string(),
        samples: occupancy
            .iter()
            .map(|&((s, a), w)| Sample {
                x: bits_f64(s, width).chain(bits_f64(a as u64, action_bits)).collect(),
                y: target(s, a),
                weight: w / mean,
            })
            .collect(),
    };
    Ok(ApproxDatasets {
        model: make("model", &|s, a| bits_f64(mdp.transition(s, a), width).collect()),
        reward: make("reward", &|s, a| vec![f64::from(mdp.reward(s, a))]),
        q: make("q", &|s, a| vec![f64::from(sol.q.get(1, s, a))]),
    })
}

/// `sum_i w_i ||p_i - t_i||^2 / sum_i w_i ||t_i||^2`.
pub fn relative_error(preds: &[Vec<f64>], targets: &[Vec<f64>], weights: &[f64]) -> Result<f64, ApproxError> {
    if preds.is_empty() {
        return Err(ApproxError::EmptyDataset);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((p, t), w) in preds.iter().zip(targets).zip(weights) {
        if p.len() != t.len() {
            return Err(ApproxError::TargetShape {
                expected: t.len(),
                got: p.len(),
            });
        }
        num += w * p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        den += w * t.iter().map(|b| b * b).sum::<f64>();
    }
    if den <= 0.0 {
        return Err(ApproxError::ZeroDenominator);
    }
    Ok(num / den)
}

pub fn dataset_error(p: &MlpParams, data: &Dataset) -> Result<f64, ApproxError> {
    let preds = data
        .samples
        .iter()
        .map(|s| mlp_forward(p, &s.x))
        .collect::<Result<Vec<_>, _>>()?;
    let targets: Vec<Vec<f64>> = data.samples.iter().map(|s| s.y.clone()).collect();
    let weights: Vec<f64> = data.samples.iter().map(|s| s.weight).collect();
    relative_error(&preds, &targets, &weights)
}

fn full_loss(p: &MlpParams, data: &Dataset) -> f64 {
    let refs: Vec<&Sample> = data.samples.iter().collect();
    mlp_gradient(p, &refs).map_or(f64::NAN, |(l, _)| l)
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    /// Relative error on the full dataset after each epoch.
    pub errors: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub diverged: bool,
}

/// Minibatch Adam on `data` from a fresh initialisation drawn from `rng`.
/// Stops early and flags divergence on a non-finite loss.
pub fn fit(
    data: &Dataset,
    depth: usize,
    width: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FitResult, ApproxError> {
    cfg.validate()?;
    let first = data.samples.first().ok_or(ApproxError::EmptyDataset)?;
    let mut p = MlpParams::random(first.x.len(), depth, width, first.y.len(), rng);
    let mut state = AdamState::new(&p);
    let initial_loss = full_loss(&p, data);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut errors = Vec::with_capacity(cfg.epochs);
    let mut diverged = false;
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data.samples[i]).collect();
            let (loss, grad) = mlp_gradient(&p, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                diverged = true;
                break 'epochs;
            }
            adam_step(&mut p, &grad, &mut state, cfg);
        }
        let e = dataset_error(&p, data)?;
        if !e.is_finite() || !p.is_finite() {
            diverged = true;
            errors.push(f64::NAN);
            break;
        }
        errors.push(e);
    }
    Ok(FitResult {
        errors,
        initial_loss,
        final_loss: full_loss(&p, data),
        diverged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochErrors {
    pub epoch: usize,
    pub e_model: f64,
    pub e_reward: f64,
    pub e_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxReport {
    pub repeat: usize,
    pub seed: u64,
    pub e_model: f64,
    pub e_reward: f64,
    pub e_q: f64,
    pub dataset_size: usize,
    pub initial_losses: [f64; 3],
    pub final_losses: [f64; 3],
    /// Targets whose training hit a non-finite loss.
    pub diverged: Vec<String>,
    pub epochs: Vec<EpochErrors>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample mean and population standard deviation.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxAggregate {
    pub e_model: MeanStd,
    pub e_reward: MeanStd,
    pub e_q: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxExperiment {
    pub depth: usize,
    pub width: usize,
    pub config: TrainConfig,
    pub reports: Vec<ApproxReport>,
    pub aggregate: ApproxAggregate,
}

impl ApproxExperiment {
    /// `mean e_q > mean e_model` and `mean e_q > mean e_reward`.
    pub fn q_hardest(&self) -> bool {
        let a = &self.aggregate;
        a.e_q.mean > a.e_model.mean && a.e_q.mean > a.e_reward.mean
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Trains the three networks per repeat on datasets built from every start
/// state with `s[c] = 0_b`. Repeat `r` uses ChaCha streams `3r..3r+3` of
/// `cfg.seed`; repeats run in parallel.
pub fn run_approx_experiment(
    spec: &MajorityMdpSpec,
    depth: usize,
    width: usize,
    cfg: &TrainConfig,
    repeats: usize,
) -> Result<ApproxExperiment, ApproxError> {
    cfg.validate()?;
    if repeats == 0 {
        return Err(ApproxError::Config("repeats must be at least 1".into()));
    }
    let sol = backward_induction(spec)?;
    let starts: Vec<u64> = (0..1u64 << spec.n()).map(|r| spec.encode_state(0, r)).collect();
    let data = build_datasets(spec, &sol, &starts)?;
    let sets = [&data.model, &data.reward, &data.q];

    let reports = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let fits = sets
                .iter()
                .enumerate()
                .map(|(t, d)| fit(d, depth, width, cfg, &mut stream_rng(cfg.seed, (3 * r + t) as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            let last = |f: &FitResult| f.errors.last().copied().unwrap_or(f64::NAN);
            let epochs = (0..cfg.epochs)
                .map(|e| EpochErrors {
                    epoch: e + 1,
                    e_model: fits[0].errors.get(e).copied().unwrap_or(f64::NAN),
                    e_reward: fits[1].errors.get(e).copied().unwrap_or(f64::NAN),
                    e_q: fits[2].errors.get(e).copied().unwrap_or(f64::NAN),
                })
                .collect();
            Ok(ApproxReport {
                repeat: r,
                seed: cfg.seed,
                e_model: last(&fits[0]),
                e_reward: last(&fits[1]),
                e_q: last(&fits[2]),
                dataset_size: data.q.len(),
                initial_losses: [fits[0].initial_loss, fits[1].initial_loss, fits[2].initial_loss],
                final_losses: [fits[0].final_loss, fits[1].final_loss, fits[2].final_loss],
                diverged: sets
                    .iter()
                    .zip(&fits)
                    .filter(|(_, f)| f.diverged)
                    .map(|(d, _)| d.name.clone())
                    .collect(),
                epochs,
            })
        })
        .collect::<Result<Vec<_>, ApproxError>>()?;

    let col = |f: fn(&ApproxReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    let aggregate = ApproxAggregate {
        e_model: col(|r| r.e_model),
        e_reward: col(|r| r.e_reward),
        e_q: col(|r| r.e_q),
    };
    Ok(ApproxExperiment {
        depth,
        width,
        config: cfg.clone(),
        reports,
        aggregate,
    })
}

/// Exponential smoothing `y_t = (1 - rate) y_{t-1} + rate x_t` for display.
pub fn smooth(xs: &[f64], rate: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = None;
    for &x in xs {
        let y = match acc {
            None => x,
            Some(prev) => (1.0 - rate) * prev + rate * x,
        };
        acc = Some(y);
        out.push(y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::BitString;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Central finite differences of the batch loss.
    fn numeric_gradient(p: &MlpParams, batch: &[&Sample], h: f64) -> Vec<f64> {
        (0..p.params.len())
            .map(|k| {
                let mut plus = p.clone();
                plus.params[k] += h;
                let mut minus = p.clone();
                minus.params[k] -= h;
                (mlp_gradient(&plus, batch).unwrap().0 - mlp_gradient(&minus, batch).unwrap().0) / (2.0 * h)
            })
            .collect()
    }

    fn random_batch(p: &MlpParams, size: usize, r: &mut ChaCha8Rng) -> Vec<Sample> {
        (0..size)
            .map(|_| Sample {
                x: (0..p.input_dim()).map(|_| r.gen_range(-1.0..1.0)).collect(),
                y: (0..p.output_dim()).map(|_| r.gen_range(-1.0..1.0)).collect(),
                weight: r.gen_range(0.5..1.5),
            })
            .collect()
    }

    #[test]
    fn forward_examples() {
        let p = MlpParams::zeros(vec![3, 4, 2]).unwrap();
        assert_eq!(mlp_forward(&p, &[1.0, 0.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        let id = MlpParams::from_flat(vec![3, 2], vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(mlp_forward(&id, &[0.3, 0.5, 0.7]).unwrap(), vec![0.3, 0.7]);
        assert!(matches!(mlp_forward(&id, &[1.0]), Err(ApproxError::InputShape { .. })));
        let r = MlpParams::random(5, 2, 8, 3, &mut rng(1));
        let out = mlp_forward(&r, &[1.0, 0.0, 0.5, 0.25, 1.0]).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
        assert!(MlpParams::from_flat(vec![2, 1], vec![0.0]).is_err());
    }

    #[test]
    fn gradient_of_single_linear_neuron() {
        let p = MlpParams::from_flat(vec![2, 1], vec![0.5, -1.0, 0.25]).unwrap();
        let s = Sample { x: vec![2.0, 3.0], y: vec![1.0], weight: 1.0 };
        let (loss, g) = mlp_gradient(&p, &[&s]).unwrap();
        let yhat = 0.5 * 2.0 - 3.0 + 0.25;
        assert!((loss - (yhat - 1.0f64).powi(2)).abs() < 1e-12);
        let r = 2.0 * (yhat - 1.0);
        assert_eq!(g, vec![r * 2.0, r * 3.0, r]);
    }

    #[test]
    fn gradient_zero_at_exact_fit() {
        let p = MlpParams::random(4, 1, 6, 2, &mut rng(2));
        let xs = [[1.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 1.0]];
        let samples: Vec<Sample> = xs
            .iter()
            .map(|x| Sample { x: x.to_vec(), y: mlp_forward(&p, x).unwrap(), weight: 1.0 })
            .collect();
        let refs: Vec<&Sample> = samples.iter().collect();
        let (loss, g) = mlp_gradient(&p, &refs).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        assert_eq!(mlp_gradient(&p, &[]), Err(ApproxError::EmptyBatch));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(3);
        for trial in 0..6 {
            let depth = 1 + trial % 2;
            let p = MlpParams::random(3, depth, 5, 2, &mut r);
            let batch = random_batch(&p, 4, &mut r);
            let refs: Vec<&Sample> = batch.iter().collect();
            let (_, g) = mlp_gradient(&p, &refs).unwrap();
            let num = numeric_gradient(&p, &refs, 1e-5);
            for (a, b) in g.iter().zip(&num) {
                assert!((a - b).abs() <= 1e-6 + 1e-4 * a.abs().max(b.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let cfg = TrainConfig::with_seed(0);
        let mut p = MlpParams::from_flat(vec![1, 1], vec![1.0, -2.0]).unwrap();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &[0.0, 0.0], &mut st, &cfg);
        assert_eq!(p.params(), &[1.0, -2.0]);
        let mut p = MlpParams::from_flat(vec![1, 1], vec![1.0, -2.0]).unwrap();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &[3.0, -0.5], &mut st, &cfg);
        assert!((p.params()[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((p.params()[1] - (-2.0 + 0.001)).abs() < 1e-9);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn adam_decreases_quadratic() {
        let cfg = TrainConfig { lr: 0.05, ..TrainConfig::with_seed(0) };
        let mut p = MlpParams::from_flat(vec![1, 1], vec![3.0, -2.0]).unwrap();
        let mut st = AdamState::new(&p);
        let loss = |p: &MlpParams| p.params().iter().map(|v| v * v).sum::<f64>();
        let start = loss(&p);
        for _ in 0..100 {
            let g: Vec<f64> = p.params().iter().map(|v| 2.0 * v).collect();
            adam_step(&mut p, &g, &mut st, &cfg);
        }
        assert!(loss(&p) < 0.1 * start);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::with_seed(1).validate().is_ok());
        assert!(TrainConfig { lr: 0.0, ..TrainConfig::with_seed(1) }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::with_seed(1) }.validate().is_err());
    }

    #[test]
    fn relative_error_examples() {
        let t = vec![vec![1.0, 2.0], vec![0.0, 3.0]];
        let w = [1.0, 2.0];
        assert_eq!(relative_error(&t, &t, &w).unwrap(), 0.0);
        let zeros = vec![vec![0.0; 2]; 2];
        assert_eq!(relative_error(&zeros, &t, &w).unwrap(), 1.0);
        let p = vec![vec![1.5, 2.0], vec![0.5, 2.0]];
        let base = relative_error(&p, &t, &w).unwrap();
        let scale = |v: &Vec<Vec<f64>>| v.iter().map(|r| r.iter().map(|x| -3.0 * x).collect()).collect::<Vec<Vec<f64>>>();
        assert!((relative_error(&scale(&p), &scale(&t), &w).unwrap() - base).abs() < 1e-12);
        assert_eq!(relative_error(&zeros, &zeros, &w), Err(ApproxError::ZeroDenominator));
    }

    #[test]
    fn dataset_targets() {
        let spec = MajorityMdpSpec::unconditioned(3, "101".parse().unwrap()).unwrap();
        let sol = backward_induction(&spec).unwrap();
        let starts: Vec<u64> = (0..8).map(|r| spec.encode_state(0, r)).collect();
        let d = build_datasets(&spec, &sol, &starts).unwrap();
        let reward_state = BitString::from_int(spec.encode_state(3, 0b101), 5).unwrap();
        for s in &d.reward.samples {
            let state: Vec<bool> = s.x[..5].iter().map(|v| *v == 1.0).collect();
            assert_eq!(s.y[0] == 1.0, BitString::new(state) == reward_state);
        }
        assert!(d.model.samples.iter().all(|s| s.y.iter().all(|v| *v == 0.0 || *v == 1.0)));
        let h = spec.horizon() as f64;
        assert!(d.q.samples.iter().all(|s| (0.0..=h).contains(&s.y[0])));
        let mean_w = d.q.samples.iter().map(|s| s.weight).sum::<f64>() / d.q.len() as f64;
        assert!((mean_w - 1.0).abs() < 1e-12);
        assert!(build_datasets(&spec, &sol, &[]).is_err());
    }

    #[test]
    fn experiment_is_deterministic() {
        let spec = MajorityMdpSpec::unconditioned(3, "011".parse().unwrap()).unwrap();
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::with_seed(11) };
        let a = run_approx_experiment(&spec, 1, 4, &cfg, 2).unwrap();
        let b = run_approx_experiment(&spec, 1, 4, &cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reports.len(), 2);
        assert_eq!(a.reports[0].epochs.len(), 5);
        assert!(run_approx_experiment(&spec, 1, 4, &cfg, 0).is_err());
    }

    #[test]
    fn wide_network_interpolates_small_mdp() {
        let spec = MajorityMdpSpec::unconditioned(3, "110".parse().unwrap()).unwrap();
        let cfg = TrainConfig { epochs: 300, ..TrainConfig::with_seed(5) };
        let exp = run_approx_experiment(&spec, 1, 256, &cfg, 1).unwrap();
        let r = &exp.reports[0];
        assert!(r.e_model < 0.05 && r.e_reward < 0.05 && r.e_q < 0.05, "{r:?}");
        assert!(r.final_losses.iter().zip(&r.initial_losses).all(|(f, i)| f <= i));
    }

    #[test]
    fn smoothing() {
        assert_eq!(smooth(&[1.0, 0.0, 0.0], 0.5), vec![1.0, 0.5, 0.25]);
        assert!(smooth(&[], 0.2).is_empty());
    }
}
