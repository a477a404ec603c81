use super::graph::Mat;
use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Mat> = store.ids().map(|id| Mat::zeros(store.value(id).dim())).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected Adam update from the gradients held in `store`.
    ///
    /// Non-finite gradients abort the step before anything is modified. The
    /// caller zeroes the gradients afterwards.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Optimizer("parameter count changed".into()));
        }
        if let Some(id) = store.ids().find(|&id| store.grad(id).iter().any(|g| !g.is_finite())) {
            return Err(Error::Optimizer(format!(
                "non-finite gradient for {}; step skipped",
                store.name(id)
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, id) in store.ids().enumerate() {
            let g = store.grad(id).clone();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(&mut *m)
                .and(&mut *v)
                .and(&g)
                .for_each(|m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                });
            ndarray::Zip::from(store.value_mut(id))
                .and(&*m)
                .and(&*v)
                .for_each(|w, &m, &v| {
                    *w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Mat::from_elem((1, 1), x)).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        for g in [2.5, -0.03] {
            let mut store = scalar_store(1.0);
            let id = store.ids().next().unwrap();
            store.add_grad(id, &Mat::from_elem((1, 1), g));
            let mut adam = AdamState::new(&store, 0.01);
            adam.step(&mut store).unwrap();
            let delta = store.value(id)[[0, 0]] - 1.0;
            assert!((delta + 0.01 * g.signum()).abs() < 1e-6, "delta {delta}");
            assert_eq!(adam.step, 1);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = scalar_store(0.7);
        let mut adam = AdamState::new(&store, 0.1);
        adam.step(&mut store).unwrap();
        let id = store.ids().next().unwrap();
        assert!((store.value(id)[[0, 0]] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut store = scalar_store(0.7);
        let id = store.ids().next().unwrap();
        store.add_grad(id, &Mat::from_elem((1, 1), f64::NAN));
        let mut adam = AdamState::new(&store, 0.1);
        assert!(matches!(adam.step(&mut store), Err(Error::Optimizer(_))));
        assert_eq!(adam.step, 0);
        assert_eq!(store.value(id)[[0, 0]], 0.7);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut store = scalar_store(0.0);
        let id = store.ids().next().unwrap();
        let mut adam = AdamState::new(&store, 0.1);
        for _ in 0..200 {
            let w = store.value(id)[[0, 0]];
            store.zero_grads();
            store.add_grad(id, &Mat::from_elem((1, 1), 2.0 * (w - 3.0)));
            adam.step(&mut store).unwrap();
        }
        assert!((store.value(id)[[0, 0]] - 3.0).abs() < 0.1);
    }
}
