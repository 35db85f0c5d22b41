//! Diagonal-Gaussian policy with tanh squashing.
//!
//! The trunk MLP maps a state to `[mean, log_std]` heads. Sampling draws
//! `u = mean + std * z` and squashes `a = tanh(u)`, with the standard
//! change-of-variables correction on the log-density. Divergences between two
//! policy conditionals are computed in closed form on the pre-squash
//! Gaussians.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Mlp, MlpCache, MlpGrads};
use super::softplus;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8; // ln(2*pi)/2

#[derive(Debug, Clone)]
pub struct GaussianTanhPolicy {
    trunk: Mlp,
    action_dim: usize,
    log_std_min: f64,
    log_std_max: f64,
}

/// Mean / clamped-log-std heads for a batch of states, plus the clamp mask
/// (1.0 where the raw log-std was inside the bounds, 0.0 where clamped).
#[derive(Debug, Clone)]
pub struct PolicyHeads {
    pub mean: Array2<f64>,
    pub log_std: Array2<f64>,
    pub clamp_mask: Array2<f64>,
}

impl PolicyHeads {
    pub fn std(&self) -> Array2<f64> {
        self.log_std.mapv(f64::exp)
    }

    pub fn row(&self, i: usize) -> (Array1<f64>, Array1<f64>) {
        (
            self.mean.row(i).to_owned(),
            self.log_std.row(i).mapv(f64::exp),
        )
    }
}

impl GaussianTanhPolicy {
    /// A fresh policy with the given state dimension, action dimension, and
    /// hidden layout.
    pub fn new<R: Rng>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(state_dim);
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        GaussianTanhPolicy {
            trunk: Mlp::new(&sizes, rng),
            action_dim,
            log_std_min: LOG_STD_MIN,
            log_std_max: LOG_STD_MAX,
        }
    }

    pub fn from_trunk(trunk: Mlp, action_dim: usize) -> Self {
        assert_eq!(trunk.output_dim(), 2 * action_dim, "trunk head width");
        GaussianTanhPolicy {
            trunk,
            action_dim,
            log_std_min: LOG_STD_MIN,
            log_std_max: LOG_STD_MAX,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn log_std_bounds(&self) -> (f64, f64) {
        (self.log_std_min, self.log_std_max)
    }

    fn split_heads(&self, raw: Array2<f64>) -> PolicyHeads {
        let mean = raw.slice(s![.., ..self.action_dim]).to_owned();
        let raw_log_std = raw.slice(s![.., self.action_dim..]).to_owned();
        let log_std = raw_log_std.mapv(|v| v.clamp(self.log_std_min, self.log_std_max));
        let clamp_mask = raw_log_std
            .mapv(|v| if v > self.log_std_min && v < self.log_std_max { 1.0 } else { 0.0 });
        PolicyHeads {
            mean,
            log_std,
            clamp_mask,
        }
    }

    pub fn heads_batch(&self, states: &Array2<f64>) -> PolicyHeads {
        self.split_heads(self.trunk.forward_batch(states))
    }

    pub fn heads_batch_cached(&self, states: &Array2<f64>) -> (PolicyHeads, MlpCache) {
        let cache = self.trunk.forward_batch_cached(states);
        (self.split_heads(cache.output().clone()), cache)
    }

    pub fn heads(&self, state: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
        let batch = state.insert_axis(Axis(0)).to_owned();
        let h = self.heads_batch(&batch);
        (h.mean.row(0).to_owned(), h.log_std.row(0).mapv(f64::exp))
    }

    /// Backward through the trunk given upstream gradients on the mean and
    /// log-std heads. The clamp zeroes the log-std gradient where saturated.
    pub fn trunk_backward(
        &self,
        cache: &MlpCache,
        heads: &PolicyHeads,
        d_mean: &Array2<f64>,
        d_log_std: &Array2<f64>,
    ) -> (MlpGrads, Array2<f64>) {
        let batch = d_mean.nrows();
        let mut upstream = Array2::zeros((batch, 2 * self.action_dim));
        upstream.slice_mut(s![.., ..self.action_dim]).assign(d_mean);
        upstream
            .slice_mut(s![.., self.action_dim..])
            .assign(&(d_log_std * &heads.clamp_mask));
        self.trunk.backward_batch(cache, &upstream)
    }

    /// Gaussian noise batch for reparameterized sampling.
    pub fn draw_noise<R: Rng>(&self, batch: usize, rng: &mut R) -> Array2<f64> {
        Array2::from_shape_fn((batch, self.action_dim), |_| rng.sample(StandardNormal))
    }

    /// Deterministic reparameterized sample given pre-drawn noise.
    /// Returns squashed actions and per-row log-probabilities.
    pub fn sample_batch_with_noise(
        &self,
        heads: &PolicyHeads,
        noise: &Array2<f64>,
    ) -> (Array2<f64>, Array1<f64>) {
        let std = heads.std();
        let u = &heads.mean + &(&std * noise);
        let actions = u.mapv(f64::tanh);
        let mut log_probs = Array1::zeros(u.nrows());
        for i in 0..u.nrows() {
            let mut acc = 0.0;
            for j in 0..self.action_dim {
                let z = noise[[i, j]];
                acc += -0.5 * z * z - heads.log_std[[i, j]] - HALF_LN_2PI;
                acc -= log_one_minus_tanh_sq(u[[i, j]]);
            }
            log_probs[i] = acc;
        }
        (actions, log_probs)
    }

    /// Sample one action; see [`GaussianTanhPolicy::sample_batch_with_noise`].
    pub fn sample<R: Rng>(&self, state: ArrayView1<f64>, rng: &mut R) -> (Array1<f64>, f64) {
        let batch = state.insert_axis(Axis(0)).to_owned();
        let heads = self.heads_batch(&batch);
        let noise = self.draw_noise(1, rng);
        let (a, lp) = self.sample_batch_with_noise(&heads, &noise);
        (a.row(0).to_owned(), lp[0])
    }

    pub fn sample_batch<R: Rng>(
        &self,
        states: &Array2<f64>,
        rng: &mut R,
    ) -> (Array2<f64>, Array1<f64>) {
        let heads = self.heads_batch(states);
        let noise = self.draw_noise(states.nrows(), rng);
        self.sample_batch_with_noise(&heads, &noise)
    }

    /// Deterministic action: squashed mean head.
    pub fn mean_action(&self, state: ArrayView1<f64>) -> Array1<f64> {
        let (mean, _) = self.heads(state);
        mean.mapv(f64::tanh)
    }

    pub fn mean_action_batch(&self, states: &Array2<f64>) -> Array2<f64> {
        self.heads_batch(states).mean.mapv(f64::tanh)
    }

    /// Log-density of an explicit action in (-1, 1)^dim under pi(.|state).
    pub fn log_density(&self, state: ArrayView1<f64>, action: ArrayView1<f64>) -> f64 {
        let (mean, std) = self.heads(state);
        let mut acc = 0.0;
        for j in 0..self.action_dim {
            let a = action[j];
            let u = 0.5 * ((1.0 + a) / (1.0 - a)).ln(); // atanh
            let z = (u - mean[j]) / std[j];
            acc += -0.5 * z * z - std[j].ln() - HALF_LN_2PI;
            acc -= log_one_minus_tanh_sq(u);
        }
        acc
    }
}

/// Stable `ln(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))`.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Jeffrey divergence between the pre-squash conditionals at two states:
/// `D_J = (KL(P||Q) + KL(Q||P)) / 2`.
pub fn jeffrey_divergence(
    policy: &GaussianTanhPolicy,
    s: ArrayView1<f64>,
    s_hat: ArrayView1<f64>,
) -> f64 {
    let (m1, std1) = policy.heads(s);
    let (m2, std2) = policy.heads(s_hat);
    jeffrey_divergence_params(&m1, &std1, &m2, &std2)
}

/// Closed-form Jeffrey divergence between diagonal Gaussians.
pub fn jeffrey_divergence_params(
    mu1: &Array1<f64>,
    sigma1: &Array1<f64>,
    mu2: &Array1<f64>,
    sigma2: &Array1<f64>,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..mu1.len() {
        let d = mu1[i] - mu2[i];
        let v1 = sigma1[i] * sigma1[i];
        let v2 = sigma2[i] * sigma2[i];
        acc += (v1 + d * d) / (4.0 * v2) + (v2 + d * d) / (4.0 * v1) - 0.5;
    }
    acc
}

/// Partial derivatives of [`jeffrey_divergence_params`] with respect to both
/// means and both log standard deviations.
pub fn jeffrey_divergence_grad(
    mu1: &Array1<f64>,
    sigma1: &Array1<f64>,
    mu2: &Array1<f64>,
    sigma2: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>) {
    let n = mu1.len();
    let mut dmu1 = Array1::zeros(n);
    let mut dls1 = Array1::zeros(n);
    let mut dmu2 = Array1::zeros(n);
    let mut dls2 = Array1::zeros(n);
    for i in 0..n {
        let d = mu1[i] - mu2[i];
        let v1 = sigma1[i] * sigma1[i];
        let v2 = sigma2[i] * sigma2[i];
        let g = d / (2.0 * v2) + d / (2.0 * v1);
        dmu1[i] = g;
        dmu2[i] = -g;
        dls1[i] = v1 / (2.0 * v2) - (v2 + d * d) / (2.0 * v1);
        dls2[i] = v2 / (2.0 * v1) - (v1 + d * d) / (2.0 * v2);
    }
    (dmu1, dls1, dmu2, dls2)
}
