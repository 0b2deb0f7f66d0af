use super::params::Parameters;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

fn zeros_like(ts: &[Tensor]) -> Vec<Tensor> {
    ts.iter().map(|t| Tensor::zeros(t.shape())).collect()
}

fn same_shapes(a: &[Tensor], b: &[Tensor]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape())
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(params: &P, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros_like(params.tensors()),
            v: zeros_like(params.tensors()),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        if !same_shapes(params.tensors(), grads.tensors()) || !same_shapes(params.tensors(), &self.m) {
            return Err(Error::Shape("adam: parameter, gradient and state shapes differ".into()));
        }
        self.step += 1;
        let t = self.step.min(i32::MAX as u64) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);

        let tensors = params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()));
        for ((p, g), (m, v)) in tensors {
            let p = p.data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, &gi) in g.data().iter().enumerate() {
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamBundle;

    fn scalar(x: f64) -> ParamBundle {
        ParamBundle::new().with("x", Tensor::vector(vec![x])).unwrap()
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(&p, 0.001);
        adam.step(&mut p, &scalar(0.37)).unwrap();
        let moved = 1.0 - p.flat_get(0);
        assert!((moved - 0.001).abs() < 1e-7, "{moved}");
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(2.5);
        let mut adam = AdamState::new(&p, 0.001);
        adam.step(&mut p, &scalar(0.0)).unwrap();
        assert_eq!(p.flat_get(0), 2.5);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        // scalar reference written out by hand
        let (lr, b1, b2, eps, g) = (0.01f64, 0.9f64, 0.999f64, 1e-8f64, 0.5f64);
        let mut x = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }

        let mut p = scalar(1.0);
        let mut adam = AdamState::new(&p, lr);
        adam.step(&mut p, &scalar(g)).unwrap();
        adam.step(&mut p, &scalar(g)).unwrap();
        assert!((p.flat_get(0) - x).abs() < 1e-12);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = scalar(1.0);
        let mut adam = AdamState::new(&p, 0.001);
        let g = ParamBundle::new().with("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(adam.step(&mut p, &g).is_err());
    }

    #[test]
    fn drives_a_bare_tensor() {
        let mut t = Tensor::vector(vec![1.0, -1.0]);
        let mut adam = AdamState::new(&t, 0.1);
        adam.step(&mut t, &Tensor::vector(vec![1.0, -1.0])).unwrap();
        assert!(t.data()[0] < 1.0 && t.data()[1] > -1.0);
    }
}
