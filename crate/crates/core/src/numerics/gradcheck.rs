//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates the forward pass, so it is
//! independent of [`Graph::backward`].

use super::graph::{Graph, Mat, Var};
use super::params::ParamStore;
use crate::error::{contract, Result};

/// Denominator floor for the relative error, so gradients near zero are
/// compared absolutely.
pub const REL_FLOOR: f64 = 1e-2;

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares autodiff gradients of a scalar loss against central differences
/// with step `h`, over every entry of every input and every parameter.
pub fn check_gradients<F>(store: &ParamStore, inputs: &[Mat], build: F, h: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &ParamStore, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore, inputs: &[Mat]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|m| g.constant(m.clone())).collect();
        let loss = build(&mut g, store, &vars)?;
        if g.shape(loss) != (1, 1) {
            return Err(contract("gradient check needs a scalar loss"));
        }
        Ok(g.scalar(loss))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.input(m.clone())).collect();
    let loss = build(&mut g, store, &vars)?;
    g.backward(loss)?;
    let mut param_grads = store.clone();
    param_grads.zero_grads();
    g.accumulate_into(&mut param_grads);

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut perturbed = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = g
            .grad(*var)
            .cloned()
            .unwrap_or_else(|| Mat::zeros(inputs[k].dim()));
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let orig = inputs[k][[r, c]];
            perturbed[k][[r, c]] = orig + h;
            let up = eval(store, &perturbed)?;
            perturbed[k][[r, c]] = orig - h;
            let down = eval(store, &perturbed)?;
            perturbed[k][[r, c]] = orig;
            worst = worst.max(relative_error(analytic[[r, c]], (up - down) / (2.0 * h)));
            checked += 1;
        }
    }

    let mut shifted = store.clone();
    for id in store.ids() {
        let analytic = param_grads.grad(id).clone();
        let (rows, cols) = analytic.dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = store.value(id)[[r, c]];
                shifted.value_mut(id)[[r, c]] = orig + h;
                let up = eval(&shifted, inputs)?;
                shifted.value_mut(id)[[r, c]] = orig - h;
                let down = eval(&shifted, inputs)?;
                shifted.value_mut(id)[[r, c]] = orig;
                worst = worst.max(relative_error(analytic[[r, c]], (up - down) / (2.0 * h)));
                checked += 1;
            }
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        checked,
    })
}

/// Reduces an arbitrary-shape output to a scalar through a fixed weighting,
/// so every output entry carries a distinct gradient.
pub fn project(g: &mut Graph, out: Var, weights: &Mat) -> Result<Var> {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    Ok(g.sum(prod))
}
