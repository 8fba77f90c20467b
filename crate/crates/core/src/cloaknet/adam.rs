use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for a list of flat parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(group_sizes: &[usize]) -> Self {
        Self {
            step: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every group.
    ///
    /// Panics if the group shapes differ from those the state was built with.
    pub fn step(&mut self, hyper: &AdamHyper, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len(), "parameter group count");
        assert_eq!(grads.len(), self.m.len(), "gradient group count");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - hyper.beta1.powi(t);
        let bc2 = 1.0 - hyper.beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            assert_eq!(p.len(), m.len(), "parameter group size");
            assert_eq!(g.len(), m.len(), "gradient group size");
            for i in 0..m.len() {
                let gi = g[i];
                m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
                v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.eps);
            }
        }
    }
}
