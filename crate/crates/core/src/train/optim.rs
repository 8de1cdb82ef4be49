use crate::fields::{FieldGrads, FieldParams};

/// Adam with bias correction over all three networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: FieldGrads,
    v: FieldGrads,
    steps: u64,
}

impl Adam {
    pub fn new(params: &FieldParams) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zero_grads(),
            v: params.zero_grads(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut FieldParams, grads: &FieldGrads, lr: f64) {
        self.steps += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.steps as i32);
        let c2 = 1.0 - b2.powi(self.steps as i32);
        let moments = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
        for ((p, g), (m, v)) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(moments) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = FieldParams::new(&FieldConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        let before = params.clone();
        let mut grads = params.zero_grads();
        grads.fine[3] = 2.5;
        grads.boundary[0] = -1e-3;
        let mut adam = Adam::new(&params);
        adam.step(&mut params, &grads, 0.01);
        assert!((before.fine.params[3] - params.fine.params[3] - 0.01).abs() < 1e-9);
        assert!((params.boundary.params[0] - before.boundary.params[0] - 0.01).abs() < 1e-6);
        assert_eq!(before.coarse.params, params.coarse.params);
    }
}
