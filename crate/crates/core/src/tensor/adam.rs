use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.0002,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for an ordered list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (vec![T::zero(); p.len()], vec![T::zero(); p.len()]))
            .unzip();
        AdamState {
            config,
            step: 0,
            m,
            v,
        }
    }

    /// One update of every parameter from its stored gradient.
    ///
    /// All gradients are checked before anything is modified, so a missing
    /// gradient leaves both the parameters and the moments untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                node: "adam".into(),
                detail: format!("{} parameters, state holds {}", params.len(), self.m.len()),
            });
        }
        for (i, p) in params.iter().enumerate() {
            match p.grad() {
                None => return Err(Error::MissingGrad(format!("#{i}"))),
                Some(g) if g.len() != self.m[i].len() => {
                    return Err(Error::ShapeMismatch {
                        node: "adam".into(),
                        detail: format!(
                            "parameter #{i} has {} values, moments {}",
                            g.len(),
                            self.m[i].len()
                        ),
                    })
                }
                _ => {}
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = T::of(1.0 - beta1.powi(t));
        let bc2 = T::of(1.0 - beta2.powi(t));
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (one, lr, eps) = (T::one(), T::of(lr), T::of(eps));

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.take().expect("checked above");
            for (((w, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(&g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.grad = Some(g);
        }
        Ok(())
    }
}
