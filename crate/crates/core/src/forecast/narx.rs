use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{check_finite, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::seed;
use crate::transform::TransformParams;

/// Raw network outputs are clipped to `[-CLIP, CLIP]` before the inverse
/// transform.
pub const CLIP: f64 = 3.0;

/// Training settings. Defaults follow the usual Levenberg-Marquardt
/// schedule: damping 1e-3, decreased/increased by 10 on accepted/rejected
/// steps, at most 1000 iterations, and early stopping after 6 consecutive
/// iterations without validation improvement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NarxConfig {
    pub hidden: usize,
    pub members: usize,
    pub validation_fraction: f64,
    pub max_iterations: usize,
    pub patience: usize,
    pub mu_initial: f64,
    pub mu_factor: f64,
    pub mu_max: f64,
    pub min_gradient: f64,
    pub min_rows: usize,
}

impl Default for NarxConfig {
    fn default() -> Self {
        Self {
            hidden: 5,
            members: 10,
            validation_fraction: 0.1,
            max_iterations: 1000,
            patience: 6,
            mu_initial: 1e-3,
            mu_factor: 10.0,
            mu_max: 1e10,
            min_gradient: 1e-7,
            min_rows: 100,
        }
    }
}

/// Single-hidden-layer network with tanh units and a linear output.
///
/// Parameters are stored flat: input weights (`hidden x inputs`, row-major),
/// hidden biases, output weights, output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub inputs: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl Network {
    pub fn param_count(inputs: usize, hidden: usize) -> usize {
        hidden * (inputs + 2) + 1
    }

    pub fn from_params(inputs: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        let expected = Self::param_count(inputs, hidden);
        if params.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            inputs,
            hidden,
            params,
        })
    }

    fn random(inputs: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let in_scale = 1.0 / libm::sqrt(inputs as f64);
        let out_scale = 1.0 / libm::sqrt(hidden as f64);
        let mut params = Vec::with_capacity(Self::param_count(inputs, hidden));
        for _ in 0..hidden * (inputs + 1) {
            params.push((rng.random::<f64>() - 0.5) * in_scale);
        }
        for _ in 0..=hidden {
            params.push((rng.random::<f64>() - 0.5) * out_scale);
        }
        Self {
            inputs,
            hidden,
            params,
        }
    }

    pub fn input_weights(&self, unit: usize) -> &[f64] {
        &self.params[unit * self.inputs..(unit + 1) * self.inputs]
    }

    pub fn hidden_bias(&self, unit: usize) -> f64 {
        self.params[self.hidden * self.inputs + unit]
    }

    pub fn output_weight(&self, unit: usize) -> f64 {
        self.params[self.hidden * (self.inputs + 1) + unit]
    }

    pub fn output_bias(&self) -> f64 {
        self.params[self.hidden * (self.inputs + 2)]
    }

    /// Unclipped output for one input row.
    pub fn raw(&self, x: &[f64]) -> f64 {
        let mut out = self.output_bias();
        for k in 0..self.hidden {
            let a = crate::linalg::dot(self.input_weights(k), x) + self.hidden_bias(k);
            out += self.output_weight(k) * libm::tanh(a);
        }
        out
    }

    /// Residuals `raw(x_i) - y_i` and the Jacobian rows for `rows`.
    fn residuals_and_jacobian(
        &self,
        x: &Matrix,
        y: &[f64],
        rows: &[usize],
        jac: &mut [f64],
        res: &mut [f64],
    ) {
        let p = self.params.len();
        let (ni, nh) = (self.inputs, self.hidden);
        let mut h = vec![0.0; nh];
        for (r, &i) in rows.iter().enumerate() {
            let xi = x.row(i);
            let jr = &mut jac[r * p..(r + 1) * p];
            let mut out = self.output_bias();
            for k in 0..nh {
                h[k] = libm::tanh(crate::linalg::dot(self.input_weights(k), xi) + self.hidden_bias(k));
                out += self.output_weight(k) * h[k];
            }
            res[r] = out - y[i];
            for k in 0..nh {
                let dk = self.output_weight(k) * (1.0 - h[k] * h[k]);
                for j in 0..ni {
                    jr[k * ni + j] = dk * xi[j];
                }
                jr[nh * ni + k] = dk;
                jr[nh * (ni + 1) + k] = h[k];
            }
            jr[p - 1] = 1.0;
        }
    }

    fn sse(&self, x: &Matrix, y: &[f64], rows: &[usize]) -> f64 {
        rows.iter()
            .map(|&i| {
                let e = self.raw(x.row(i)) - y[i];
                e * e
            })
            .sum()
    }
}

/// Ensemble of independently initialized and trained networks.
#[derive(Debug, Clone, PartialEq)]
pub struct NarxModel {
    pub members: Vec<Network>,
}

impl NarxModel {
    /// Clipped raw output of every member.
    pub fn member_outputs(&self, x: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| m.raw(x).clamp(-CLIP, CLIP))
            .collect()
    }

    /// All parameters, member after member.
    pub fn to_flat(&self) -> Vec<f64> {
        self.members.iter().flat_map(|m| m.params.iter().copied()).collect()
    }

    pub fn from_flat(inputs: usize, hidden: usize, flat: &[f64]) -> Result<Self> {
        let p = Network::param_count(inputs, hidden);
        if flat.is_empty() || flat.len() % p != 0 {
            return Err(Error::Dimension {
                expected: p,
                got: flat.len(),
            });
        }
        let members = flat
            .chunks(p)
            .map(|c| Network::from_params(inputs, hidden, c.to_vec()))
            .collect::<Result<_>>()?;
        Ok(Self { members })
    }
}

pub fn fit_narx(x: &Matrix, y: &[f64], seed: u64) -> Result<NarxModel> {
    fit_narx_with(x, y, seed, &NarxConfig::default())
}

pub fn fit_narx_with(x: &Matrix, y: &[f64], seed: u64, cfg: &NarxConfig) -> Result<NarxModel> {
    let n = x.rows();
    if n < cfg.min_rows {
        return Err(Error::InvalidInput(alloc::format!(
            "NARX needs at least {} rows, got {n}",
            cfg.min_rows
        )));
    }
    if y.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: y.len(),
        });
    }
    check_finite(x.as_slice())?;
    check_finite(y)?;
    let mut members = Vec::with_capacity(cfg.members);
    for member in 0..cfg.members {
        let net = match train_member(x, y, seed, member, 0, cfg) {
            Some(net) => net,
            None => train_member(x, y, seed, member, 1, cfg)
                .ok_or(Error::NanLoss { member })?,
        };
        members.push(net);
    }
    Ok(NarxModel { members })
}

/// Trains one member; `None` signals a non-finite loss.
fn train_member(
    x: &Matrix,
    y: &[f64],
    base_seed: u64,
    member: usize,
    attempt: u64,
    cfg: &NarxConfig,
) -> Option<Network> {
    let n = x.rows();
    let mut rng = seed::rng(base_seed, &[member as u64, attempt]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (libm::round(n as f64 * cfg.validation_fraction) as usize).clamp(1, n - 1);
    let (val_rows, train_rows) = order.split_at(n_val);
    let mut train_rows = train_rows.to_vec();
    train_rows.sort_unstable();

    let mut net = Network::random(x.cols(), cfg.hidden, &mut rng);
    let p = net.params.len();
    let m = train_rows.len();
    let mut jac = vec![0.0; m * p];
    let mut res = vec![0.0; m];
    let mut jtj: Matrix;
    let mut grad = vec![0.0; p];

    let mut best = net.clone();
    let mut best_val = net.sse(x, y, val_rows);
    if !best_val.is_finite() {
        return None;
    }
    let mut fails = 0;
    let mut mu = cfg.mu_initial;

    'outer: for _ in 0..cfg.max_iterations {
        net.residuals_and_jacobian(x, y, &train_rows, &mut jac, &mut res);
        let loss: f64 = res.iter().map(|r| r * r).sum();
        if !loss.is_finite() {
            return None;
        }
        jtj = Matrix::zeros(p, p);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (jr, &e) in jac.chunks_exact(p).zip(&res) {
            for a in 0..p {
                let ja = jr[a];
                grad[a] += ja * e;
                for b in 0..=a {
                    jtj[(a, b)] += ja * jr[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                jtj[(b, a)] = jtj[(a, b)];
            }
        }
        let gnorm = libm::sqrt(grad.iter().map(|g| g * g).sum());
        if gnorm < cfg.min_gradient {
            break;
        }
        loop {
            let mut damped = jtj.clone();
            for a in 0..p {
                damped[(a, a)] += mu;
            }
            if let Ok(ch) = Cholesky::new(&damped) {
                let step = ch.solve(&grad);
                let candidate = Network {
                    params: net.params.iter().zip(&step).map(|(w, s)| w - s).collect(),
                    ..net.clone()
                };
                let new_loss = candidate.sse(x, y, &train_rows);
                if new_loss.is_finite() && new_loss < loss {
                    net = candidate;
                    mu = (mu / cfg.mu_factor).max(1e-20);
                    break;
                }
            }
            mu *= cfg.mu_factor;
            if mu > cfg.mu_max {
                break 'outer;
            }
        }
        let val = net.sse(x, y, val_rows);
        if !val.is_finite() {
            return None;
        }
        if val < best_val {
            best_val = val;
            best = net.clone();
            fails = 0;
        } else {
            fails += 1;
            if fails >= cfg.patience {
                break;
            }
        }
    }
    Some(best)
}

/// Clip each member's raw output, map it to a price, then average prices.
pub fn predict_narx(model: &NarxModel, x: &[f64], target: &TransformParams) -> f64 {
    let outputs = model.member_outputs(x);
    outputs.iter().map(|&z| target.invert(z)).sum::<f64>() / outputs.len() as f64
}
