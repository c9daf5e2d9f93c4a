use super::params::ParamSet;
use super::tensor::Scalar;
use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_LR: f64 = 0.01;

/// SGD with heavy-ball momentum: `v <- mu v + g; p <- p - lr v`.
/// With `clip_norm` set, `g` is first rescaled so its global L2 norm does not
/// exceed it.
#[derive(Debug, Clone)]
pub struct Sgd<F: Scalar = f32> {
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: Option<f64>,
    velocity: Option<ParamSet<F>>,
}

impl<F: Scalar> Sgd<F> {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum,
            clip_norm: None,
            velocity: None,
        }
    }

    pub fn reset(&mut self) {
        self.velocity = None;
    }

    /// Applies one update. Non-finite gradients abort the step untouched.
    pub fn step(&mut self, params: &mut ParamSet<F>, grads: &ParamSet<F>) -> Result<()> {
        params.ensure_same_structure(grads, "sgd step")?;
        if let Some((a, _)) = grads
            .arrays
            .iter()
            .flat_map(|a| a.values.iter().map(move |v| (a, v)))
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::Training(format!(
                "non-finite gradient in '{}'",
                a.name
            )));
        }
        let mut scale = 1.0;
        if let Some(max) = self.clip_norm {
            let norm = grads
                .arrays
                .iter()
                .flat_map(|a| a.values.iter())
                .map(|v| {
                    let v = v.to_f64().unwrap();
                    v * v
                })
                .sum::<f64>()
                .sqrt();
            if norm > max {
                scale = max / norm;
            }
        }
        let scale = F::from_f64(scale).unwrap();
        let velocity = self.velocity.get_or_insert_with(|| grads.zeros_like());
        let mu = F::from_f64(self.momentum).unwrap();
        let lr = F::from_f64(self.lr).unwrap();
        for ((p, g), v) in params
            .arrays
            .iter_mut()
            .zip(&grads.arrays)
            .zip(velocity.arrays.iter_mut())
        {
            for ((pv, &gv), vv) in p.values.iter_mut().zip(&g.values).zip(v.values.iter_mut()) {
                *vv = mu * *vv + gv * scale;
                *pv = *pv - lr * *vv;
            }
        }
        Ok(())
    }
}
