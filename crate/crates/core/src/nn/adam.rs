use super::param::Parameterized;
use crate::Scalar;

/// Adaptive-moment optimizer hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers mirror the model layout.
#[derive(Clone, Debug)]
pub struct Adam<M> {
    config: AdamConfig,
    first: M,
    second: M,
    step: u32,
}

impl<M> Adam<M> {
    pub fn steps(&self) -> u32 {
        self.step
    }
}

impl<M> Adam<M> {
    pub fn new<T: Scalar>(model: &M, config: AdamConfig) -> Self
    where
        M: Parameterized<T>,
    {
        Self {
            config,
            first: model.zeros_like(),
            second: model.zeros_like(),
            step: 0,
        }
    }

    pub fn step<T: Scalar>(&mut self, model: &mut M, grads: &M)
    where
        M: Parameterized<T>,
    {
        self.step += 1;
        let c = self.config;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.eps);
        let params = model.named_params_mut();
        let g = grads.named_params();
        let m = self.first.named_params_mut();
        let v = self.second.named_params_mut();
        for (((p, g), m), v) in params.into_iter().zip(g).zip(m).zip(v) {
            let (p, g, m, v) = (p.1, g.1, m.1, v.1);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Linear;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_moves_each_weight_by_learning_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut lin = Linear::<f64>::new(2, 1, 0.1, &mut rng);
        let before = lin.clone();
        let mut g = lin.zeros_like();
        g.weight.data = vec![3.0, -0.5];
        g.bias.data = vec![1e-3];
        let mut opt = Adam::new(&lin, AdamConfig { learning_rate: 0.01, ..Default::default() });
        opt.step(&mut lin, &g);
        // With bias correction the first update is lr * sign(g) up to eps.
        assert!((before.weight.data[0] - lin.weight.data[0] - 0.01).abs() < 1e-8);
        assert!((lin.weight.data[1] - before.weight.data[1] - 0.01).abs() < 1e-8);
        assert!((before.bias.data[0] - lin.bias.data[0] - 0.01).abs() < 1e-6);
    }
}
