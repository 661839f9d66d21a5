//! Adam optimiser.

use super::{expect_extent, Real, Tensor, TensorError};

/// Adam with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    /// Optimiser with the default moment constants (0.9, 0.999, 1e-7).
    pub fn new(lr: f64) -> Self {
        Self::with_params(lr, 0.9, 0.999, 1e-7)
    }

    pub fn with_params(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<(), TensorError> {
        expect_extent("adam_step", "parameter-list", params.len(), grads.len())?;
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
            self.v = self.m.clone();
        }
        expect_extent("adam_step", "state", self.m.len(), params.len())?;
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            expect_extent("adam_step", "element", p.numel(), g.numel())?;
            expect_extent("adam_step", "element", m.len(), g.numel())?;
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let (tb1, tb2) = (T::from_real(b1), T::from_real(b2));
        let (ob1, ob2) = (T::from_real(1.0 - b1), T::from_real(1.0 - b2));
        let (ic1, ic2) = (T::from_real(1.0 / c1), T::from_real(1.0 / c2));
        let (lr, eps) = (T::from_real(self.lr), T::from_real(self.eps));
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = tb1 * *mv + ob1 * gv;
                *vv = tb2 * *vv + ob2 * gv * gv;
                let m_hat = *mv * ic1;
                let v_hat = *vv * ic2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
