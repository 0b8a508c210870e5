//! Mutual information neural estimation with the Donsker–Varadhan bound.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{AdamConfig, AdamState};

/// `T(x) = w2 · relu(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatisticNet {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

struct Forward {
    pre: Array2<f64>,
    hidden: Array2<f64>,
    out: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct NetGrad {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array1<f64>,
    b2: f64,
}

impl StatisticNet {
    pub fn init(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let a1 = 1.0 / (input_dim as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        Self {
            w1: Array2::from_shape_simple_fn((hidden, input_dim), || rng.random_range(-a1..a1)),
            b1: Array1::from_shape_simple_fn(hidden, || rng.random_range(-a1..a1)),
            w2: Array1::from_shape_simple_fn(hidden, || rng.random_range(-a2..a2)),
            b2: 0.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    fn forward_full(&self, x: ArrayView2<'_, f64>) -> Forward {
        let pre = x.dot(&self.w1.t()) + &self.b1;
        let hidden = pre.mapv(|a| a.max(0.0));
        let out = hidden.dot(&self.w2) + self.b2;
        Forward { pre, hidden, out }
    }

    /// Scores for each row of `x`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.forward_full(x).out
    }

    /// Gradient of `Σ_i coef_i · T(x_i)`.
    fn backward(&self, x: ArrayView2<'_, f64>, f: &Forward, coef: ArrayView1<'_, f64>) -> NetGrad {
        let w2 = f.hidden.t().dot(&coef);
        let b2 = coef.sum();
        let mut d_pre = coef.insert_axis(Axis(1)).dot(&self.w2.view().insert_axis(Axis(0)));
        d_pre.zip_mut_with(&f.pre, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        NetGrad {
            w1: d_pre.t().dot(&x),
            b1: d_pre.sum_axis(Axis(0)),
            w2,
            b2,
        }
    }

    fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).all(|x| x.is_finite()) && self.b2.is_finite()
    }
}

fn log_mean_exp(values: ArrayView1<'_, f64>) -> f64 {
    let max = values.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !max.is_finite() {
        return max;
    }
    max + (values.mapv(|x| (x - max).exp()).sum() / values.len() as f64).ln()
}

/// `mean(t_joint) − ln mean(exp(t_marginal))`, evaluated stably.
pub fn dv_bound(t_joint: ArrayView1<'_, f64>, t_marginal: ArrayView1<'_, f64>) -> Result<f64> {
    if t_joint.is_empty() || t_marginal.is_empty() {
        return Err(Error::Precondition("empty batch for the DV bound".into()));
    }
    Ok(t_joint.mean().expect("non-empty") - log_mean_exp(t_marginal))
}

/// DV bound of `net` on a joint batch and a marginal batch, each given as
/// rows of concatenated `[v, e]`.
pub fn dv_objective(
    net: &StatisticNet,
    joint: ArrayView2<'_, f64>,
    marginal: ArrayView2<'_, f64>,
) -> Result<f64> {
    dv_bound(net.forward(joint).view(), net.forward(marginal).view())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub lr: f64,
    /// Rate of the moving average used for the denominator gradient.
    pub ma_rate: f64,
    /// Rate of the exponential smoothing applied to the reported bound.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            hidden: 128,
            lr: 1e-3,
            ma_rate: 0.01,
            smoothing: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    /// Smoothed final bound in nats, clamped at zero.
    pub mi_nats: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Raw full-data DV bound after each epoch.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub history: Vec<f64>,
    pub config: MineConfig,
}

impl MiEstimate {
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({"mi_nats": self.mi_nats, "epochs": self.epochs, "seed": self.seed})
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,dv_bound\n");
        for (i, b) in self.history.iter().enumerate() {
            out.push_str(&format!("{},{b}\n", i + 1));
        }
        out
    }
}

/// Column-wise z-scoring; constant columns are only centered.
fn standardize(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x.std_axis(Axis(0), 0.0);
    let mut out = &x - &mean;
    for (mut col, &sd) in out.columns_mut().into_iter().zip(&std) {
        if sd > 0.0 {
            col /= sd;
        }
    }
    out
}

fn pair_rows(v: &Array2<f64>, e: &Array2<f64>, idx: &[usize], e_idx: &[usize]) -> Array2<f64> {
    concatenate![Axis(1), v.select(Axis(0), idx), e.select(Axis(0), e_idx)]
}

/// Estimates `I(v; e)` from paired rows.
pub fn estimate_mi(v: ArrayView2<'_, f64>, e: ArrayView2<'_, f64>, cfg: &MineConfig) -> Result<MiEstimate> {
    let n = v.nrows();
    if e.nrows() != n {
        return Err(Error::Shape(format!("{n} v rows but {} e rows", e.nrows())));
    }
    if n < 100 {
        return Err(Error::InsufficientInput(format!("MINE needs at least 100 samples, got {n}")));
    }
    if cfg.epochs == 0 || cfg.batch_size < 2 || cfg.hidden == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Validation("invalid MINE configuration".into()));
    }
    if v.iter().chain(e.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Validation("non-finite MINE input".into()));
    }
    let v = standardize(v);
    let e = standardize(e);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = StatisticNet::init(v.ncols() + e.ncols(), cfg.hidden, &mut rng);
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut st_w1 = AdamState::new(net.w1.len());
    let mut st_b1 = AdamState::new(net.b1.len());
    let mut st_w2 = AdamState::new(net.w2.len());
    let mut st_b2 = AdamState::new(1);

    let all: Vec<usize> = (0..n).collect();
    let mut eval_perm = all.clone();
    eval_perm.shuffle(&mut rng);
    let eval_joint = pair_rows(&v, &e, &all, &all);
    let eval_marginal = pair_rows(&v, &e, &all, &eval_perm);

    let batch = cfg.batch_size.min(n);
    let mut order = all;
    let mut moving: Option<f64> = None;
    let mut step = 0u64;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut smoothed = 0.0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            if chunk.len() < 2 {
                continue;
            }
            let mut shuffled = chunk.to_vec();
            shuffled.shuffle(&mut rng);
            let joint = pair_rows(&v, &e, chunk, chunk);
            let marginal = pair_rows(&v, &e, chunk, &shuffled);
            let fj = net.forward_full(joint.view());
            let fm = net.forward_full(marginal.view());
            let b = chunk.len() as f64;
            let exp_m = fm.out.mapv(f64::exp);
            let mean_exp = exp_m.sum() / b;
            let ma = match moving {
                None => mean_exp,
                Some(prev) => (1.0 - cfg.ma_rate) * prev + cfg.ma_rate * mean_exp,
            };
            moving = Some(ma);
            if !ma.is_finite() || ma <= 0.0 {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("moving average of e^T is {ma}"),
                });
            }
            // minimize −(mean T_joint − mean e^T_marginal / ma)
            let cj = Array1::from_elem(chunk.len(), -1.0 / b);
            let cm = exp_m / (b * ma);
            let gj = net.backward(joint.view(), &fj, cj.view());
            let gm = net.backward(marginal.view(), &fm, cm.view());
            step += 1;
            st_w1.step(&adam, step, net.w1.as_slice_mut().unwrap(), (gj.w1 + gm.w1).as_slice().unwrap());
            st_b1.step(&adam, step, net.b1.as_slice_mut().unwrap(), (gj.b1 + gm.b1).as_slice().unwrap());
            st_w2.step(&adam, step, net.w2.as_slice_mut().unwrap(), (gj.w2 + gm.w2).as_slice().unwrap());
            st_b2.step(&adam, step, std::slice::from_mut(&mut net.b2), &[gj.b2 + gm.b2]);
        }
        let bound = dv_objective(&net, eval_joint.view(), eval_marginal.view())?;
        if !bound.is_finite() || !net.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("DV bound {bound}"),
            });
        }
        smoothed = if epoch == 1 {
            bound
        } else {
            (1.0 - cfg.smoothing) * smoothed + cfg.smoothing * bound
        };
        history.push(bound);
    }
    Ok(MiEstimate {
        mi_nats: smoothed.max(0.0),
        epochs: cfg.epochs,
        seed: cfg.seed,
        history,
        config: cfg.clone(),
    })
}
