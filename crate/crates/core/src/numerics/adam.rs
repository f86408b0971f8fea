use super::{NumericsError, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the joint gradient to this L2 norm when it is exceeded.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

/// Bias-corrected Adam moments for an ordered parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let (first, second): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
            .unzip();
        Self {
            config,
            first,
            second,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "adam",
                left: vec![self.first.len()],
                right: vec![params.len(), grads.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(NumericsError::ShapeMismatch {
                    op: "adam",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
        }
        let mut scale = 1.0;
        if let Some(max_norm) = self.config.clip_norm {
            let norm = grads
                .iter()
                .flat_map(|g| g.data())
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            if norm > max_norm {
                scale = max_norm / norm;
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gv = gv * scale;
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]);
        let before = p.clone();
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        st.step(&mut [&mut p], &[Tensor::zeros(&[1, 3])]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::scalar(0.0);
        let mut st = AdamState::new(AdamConfig::with_lr(0.1), [&p]);
        st.step(&mut [&mut p], &[Tensor::scalar(1.0)]).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = 0.1 / (1 + 1e-8)
        assert!((p.item() + 0.1).abs() < 1e-8, "{}", p.item());
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn deterministic_runs() {
        let run = || {
            let mut p = Tensor::matrix(1, 2, vec![0.3, -0.7]);
            let mut st = AdamState::new(AdamConfig::default(), [&p]);
            for i in 0..50 {
                let g = Tensor::matrix(1, 2, vec![(i as f64).sin(), p.data()[0]]);
                st.step(&mut [&mut p], &[g]).unwrap();
            }
            p
        };
        assert_eq!(run().data(), run().data());
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::scalar(0.0);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        let err = st.step(&mut [&mut p], &[Tensor::zeros(&[1, 2])]);
        assert!(matches!(err, Err(NumericsError::ShapeMismatch { .. })));
    }
}
