use crate::{NnError, Result};

/// Adam with bias correction. Moment buffers are laid out per parameter
/// group, matching the slices passed to [`AdamState::step`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(learning_rate: f64, group_sizes: &[usize]) -> Self {
        Self::with_betas(learning_rate, 0.9, 0.999, 1e-8, group_sizes)
    }

    pub fn with_betas(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64, group_sizes: &[usize]) -> Self {
        assert!((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2));
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            first: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(NnError::Shape {
                context: "adam parameter groups".into(),
                expected: vec![self.first.len()],
                actual: vec![params.len(), grads.len()],
            });
        }
        for (gi, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[gi].len() || g.len() != p.len() {
                return Err(NnError::Shape {
                    context: format!("adam group {gi}"),
                    expected: vec![self.first[gi].len()],
                    actual: vec![p.len(), g.len()],
                });
            }
            if let Some(index) = g.iter().position(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteGradient { group: gi, index });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[gi], &mut self.second[gi]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}
