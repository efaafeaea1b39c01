use serde::{Deserialize, Serialize};

use super::mlp::{MlpGrads, MlpParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: MlpGrads,
    second: MlpGrads,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first: MlpGrads::zeros_like(params),
            second: MlpGrads::zeros_like(params),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Applies one update in place.
    pub fn update(&mut self, params: &mut MlpParams, grads: &MlpGrads) -> Result<()> {
        if !grads.matches(params) || !self.first.matches(params) {
            return Err(Error::shape(
                "Adam gradients and moments must be shaped like the parameters",
            ));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        };

        for (((layer, g), m), v) in params
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            let ps = layer.weight.as_mut_slice().iter_mut();
            let gs = g.weight.as_slice().iter();
            let ms = m.weight.as_mut_slice().iter_mut();
            let vs = v.weight.as_mut_slice().iter_mut();
            for (((p, &g), m), v) in ps.zip(gs).zip(ms).zip(vs) {
                update(p, g, m, v);
            }
            for (((p, &g), m), v) in layer
                .bias
                .iter_mut()
                .zip(&g.bias)
                .zip(&mut m.bias)
                .zip(&mut v.bias)
            {
                update(p, g, m, v);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{Activation, Layer, Matrix, SeededRng};

    fn scalar_net(w: f64) -> MlpParams {
        let layer = Layer::new(
            Matrix::from_vec(1, 1, vec![w]).unwrap(),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap();
        MlpParams::new(vec![layer]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut rng = SeededRng::new(2);
        let mut net = MlpParams::glorot(&[4, 3], &[Activation::Identity], &mut rng).unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        state.update(&mut net, &MlpGrads::zeros_like(&before)).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar_net(1.0);
        let mut grads = MlpGrads::zeros_like(&net);
        grads.layers[0].weight.as_mut_slice()[0] = 1.0;
        let config = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(&net, config);
        state.update(&mut net, &grads).unwrap();
        let w = net.layers()[0].weight.get(0, 0);
        let expected = 1.0 - 0.1 * (1.0 / (1.0 + 1e-8));
        assert!((w - expected).abs() < 1e-15, "{w}");
        assert!((w - 0.9).abs() < 1e-8);
    }

    #[test]
    fn repeated_runs_are_bitwise_identical() {
        let run = || {
            let mut rng = SeededRng::new(17);
            let mut net = MlpParams::glorot(&[3, 5, 2], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
            let mut state = AdamState::new(&net, AdamConfig::default());
            for step in 0..20 {
                let mut g = MlpGrads::zeros_like(&net);
                for (i, v) in g.layers[0].weight.as_mut_slice().iter_mut().enumerate() {
                    *v = ((i + step) as f64).sin();
                }
                state.update(&mut net, &g).unwrap();
            }
            net.fingerprint()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn misshapen_gradients_rejected() {
        let mut net = scalar_net(1.0);
        let other = MlpParams::glorot(&[2, 1], &[Activation::Identity], &mut SeededRng::new(0)).unwrap();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let err = state.update(&mut net, &MlpGrads::zeros_like(&other));
        assert!(matches!(err, Err(Error::Shape(_))));
        assert_eq!(state.step(), 0);
    }
}
