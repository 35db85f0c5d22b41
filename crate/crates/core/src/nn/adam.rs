//! Bias-corrected Adam over MLP parameters.

use ndarray::{Array1, Array2};

use super::mlp::{Mlp, MlpGrads};
use super::NnError;

#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    pub first_moment: MlpGrads,
    pub second_moment: MlpGrads,
}

impl AdamState {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: MlpGrads::zeros_like(net),
            second_moment: MlpGrads::zeros_like(net),
        }
    }
}

fn update_slot(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, st: &AdamState, c1: f64, c2: f64) {
    *m = st.beta1 * *m + (1.0 - st.beta1) * g;
    *v = st.beta2 * *v + (1.0 - st.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= st.learning_rate * m_hat / (v_hat.sqrt() + st.epsilon);
}

/// One Adam step on `net` in place. Errors on non-finite gradients.
pub fn adam_step(state: &mut AdamState, net: &mut Mlp, grads: &MlpGrads) -> Result<(), NnError> {
    if !grads.is_finite() {
        return Err(NnError::NonFiniteGrad {
            context: "adam_step".into(),
        });
    }
    state.step_count += 1;
    let c1 = 1.0 - state.beta1.powi(state.step_count as i32);
    let c2 = 1.0 - state.beta2.powi(state.step_count as i32);
    let snapshot = state.clone();
    let (weights, biases) = net.weights_mut();
    for l in 0..weights.len() {
        let w: &mut Array2<f64> = &mut weights[l];
        let gw = &grads.weights[l];
        let mw = &mut state.first_moment.weights[l];
        let vw = &mut state.second_moment.weights[l];
        ndarray::Zip::from(w)
            .and(gw)
            .and(mw)
            .and(vw)
            .for_each(|p, &g, m, v| update_slot(p, g, m, v, &snapshot, c1, c2));
        let b: &mut Array1<f64> = &mut biases[l];
        let gb = &grads.biases[l];
        let mb = &mut state.first_moment.biases[l];
        let vb = &mut state.second_moment.biases[l];
        ndarray::Zip::from(b)
            .and(gb)
            .and(mb)
            .and(vb)
            .for_each(|p, &g, m, v| update_slot(p, g, m, v, &snapshot, c1, c2));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut rng = stream(10, &[0]);
        let mut net = Mlp::new(&[2, 3, 1], &mut rng);
        let before = net.to_flat();
        let mut st = AdamState::new(&net, 1e-3);
        let g = MlpGrads::zeros_like(&net);
        adam_step(&mut st, &mut net, &g).unwrap();
        assert_eq!(net.to_flat(), before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_magnitude_is_bias_corrected() {
        // t=1: m_hat = g, v_hat = g*g, update = lr * g / (|g| + eps)
        let mut rng = stream(11, &[0]);
        let mut net = Mlp::new(&[1, 1], &mut rng);
        let before = net.to_flat();
        let mut st = AdamState::new(&net, 3e-4);
        let mut g = MlpGrads::zeros_like(&net);
        g.weights[0][[0, 0]] = 2.5;
        adam_step(&mut st, &mut net, &g).unwrap();
        let after = net.to_flat();
        let delta = before[0] - after[0];
        let expected = 3e-4 * 2.5 / (2.5 + 1e-8);
        assert!((delta - expected).abs() < 1e-15, "delta={delta}");
    }

    #[test]
    fn identical_runs_produce_identical_params() {
        let run = || {
            let mut rng = stream(12, &[0]);
            let mut net = Mlp::new(&[2, 4, 1], &mut rng);
            let mut st = AdamState::new(&net, 1e-2);
            for k in 0..50 {
                let mut g = MlpGrads::zeros_like(&net);
                for w in g.weights.iter_mut() {
                    w.mapv_inplace(|_| (k as f64 * 0.1).sin());
                }
                adam_step(&mut st, &mut net, &g).unwrap();
            }
            net.to_flat()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut rng = stream(13, &[0]);
        let mut net = Mlp::new(&[2, 2], &mut rng);
        let mut st = AdamState::new(&net, 1e-3);
        let mut g = MlpGrads::zeros_like(&net);
        g.biases[0][0] = f64::NAN;
        let err = adam_step(&mut st, &mut net, &g).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGrad { .. }));
        assert_eq!(st.step_count, 0, "failed step must not advance the counter");
    }

    #[test]
    fn second_moment_stays_nonnegative() {
        let mut rng = stream(14, &[0]);
        let mut net = Mlp::new(&[3, 3, 1], &mut rng);
        let mut st = AdamState::new(&net, 1e-3);
        for k in 0..20 {
            let mut g = MlpGrads::zeros_like(&net);
            for w in g.weights.iter_mut() {
                w.mapv_inplace(|_| ((k * 7) as f64).cos() * 3.0 - 1.0);
            }
            adam_step(&mut st, &mut net, &g).unwrap();
        }
        assert!(st.second_moment.to_flat().iter().all(|&v| v >= 0.0));
        assert_eq!(st.step_count, 20);
    }
}
