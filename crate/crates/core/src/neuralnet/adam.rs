use super::{ConvNet, Gradients, Scalar};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar = f32> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &ConvNet<T>) -> Self {
        let zeros: Vec<Vec<T>> = net.params().iter().map(|p| vec![T::ZERO; p.data.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut ConvNet<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        let params = net.params();
        let matches = grads.tensors.len() == params.len()
            && self.m.len() == params.len()
            && params.iter().zip(&grads.tensors).all(|(p, g)| p.data.len() == g.len())
            && params.iter().zip(&self.m).all(|(p, m)| p.data.len() == m.len());
        if !matches {
            return Err(Error::BadInputShape("gradients or optimizer state do not match the network".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        for ((p, g), (m, v)) in net
            .params_mut()
            .iter_mut()
            .zip(&grads.tensors)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &g), m), v) in p.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g.to_f64();
                let mi = ADAM_BETA1 * m.to_f64() + (1.0 - ADAM_BETA1) * g;
                let vi = ADAM_BETA2 * v.to_f64() + (1.0 - ADAM_BETA2) * g * g;
                *m = T::from_f64(mi);
                *v = T::from_f64(vi);
                let update = lr * (mi / c1) / ((vi / c2).sqrt() + ADAM_EPS);
                *w = T::from_f64(w.to_f64() - update);
            }
        }
        net.steps += 1;
        Ok(())
    }
}
