//! Gradient contract and a central-difference checker for it.

use super::params::ParamBundle;
use crate::error::{Error, Result};

/// Below this magnitude, gradient entries are compared on an absolute
/// scale; central differences with step 1e-4 carry ~1e-8 absolute noise.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// A scalar loss over a parameter bundle with an analytic gradient.
pub trait Objective {
    fn loss(&self, params: &ParamBundle) -> Result<f64>;

    /// Loss value and `dL/dparams`, laid out like `params`.
    fn loss_and_gradient(&self, params: &ParamBundle) -> Result<(f64, ParamBundle)>;
}

/// Analytic gradient, refusing to differentiate a non-finite loss.
pub fn gradient<O: Objective + ?Sized>(objective: &O, params: &ParamBundle) -> Result<ParamBundle> {
    let (loss, grad) = objective.loss_and_gradient(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    params.check_layout(&grad, "gradient")?;
    Ok(grad)
}

pub fn finite_diff_gradient<O: Objective + ?Sized>(
    objective: &O,
    params: &ParamBundle,
    step: f64,
) -> Result<ParamBundle> {
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    for i in 0..params.param_count() {
        let x = params.flat_get(i);
        probe.flat_set(i, x + step);
        let up = objective.loss(&probe)?;
        probe.flat_set(i, x - step);
        let down = objective.loss(&probe)?;
        probe.flat_set(i, x);
        out.flat_set(i, (up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Worst-case relative disagreement between two gradients.
pub fn max_relative_error(analytic: &ParamBundle, numeric: &ParamBundle) -> f64 {
    analytic
        .flatten()
        .iter()
        .zip(numeric.flatten())
        .map(|(&a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}

/// Compares the analytic gradient against central differences on every
/// coordinate and returns the worst relative error.
pub fn finite_diff_check<O: Objective + ?Sized>(
    objective: &O,
    params: &ParamBundle,
    step: f64,
) -> Result<f64> {
    let analytic = gradient(objective, params)?;
    let numeric = finite_diff_gradient(objective, params, step)?;
    Ok(max_relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    /// f(x) = sum_i c_i x_i^2
    struct Quadratic {
        coeffs: Vec<f64>,
        corrupt: bool,
    }

    impl Objective for Quadratic {
        fn loss(&self, p: &ParamBundle) -> Result<f64> {
            Ok(p.flatten().iter().zip(&self.coeffs).map(|(x, c)| c * x * x).sum())
        }

        fn loss_and_gradient(&self, p: &ParamBundle) -> Result<(f64, ParamBundle)> {
            let mut g = p.zeros_like();
            for (i, c) in self.coeffs.iter().enumerate() {
                let mut v = 2.0 * c * p.flat_get(i);
                if self.corrupt && i == 1 {
                    v *= 1.5;
                }
                g.flat_set(i, v);
            }
            Ok((self.loss(p)?, g))
        }
    }

    fn params(values: Vec<f64>) -> ParamBundle {
        ParamBundle::new().with("x", Tensor::vector(values)).unwrap()
    }

    #[test]
    fn square_at_three_has_slope_six() {
        let q = Quadratic {
            coeffs: vec![1.0],
            corrupt: false,
        };
        let g = gradient(&q, &params(vec![3.0])).unwrap();
        assert_eq!(g.flat_get(0), 6.0);
    }

    #[test]
    fn quadratic_agrees_with_differences() {
        let q = Quadratic {
            coeffs: vec![1.0, -2.0, 0.5, 3.0],
            corrupt: false,
        };
        let err = finite_diff_check(&q, &params(vec![0.3, -1.2, 2.0, 0.7]), 1e-4).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let q = Quadratic {
            coeffs: vec![1.0, -2.0, 0.5, 3.0],
            corrupt: true,
        };
        let err = finite_diff_check(&q, &params(vec![0.3, -1.2, 2.0, 0.7]), 1e-4).unwrap();
        assert!(err > 0.1, "{err}");
    }

    struct NanLoss;
    impl Objective for NanLoss {
        fn loss(&self, _: &ParamBundle) -> Result<f64> {
            Ok(f64::NAN)
        }
        fn loss_and_gradient(&self, p: &ParamBundle) -> Result<(f64, ParamBundle)> {
            Ok((f64::NAN, p.zeros_like()))
        }
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        assert!(matches!(
            gradient(&NanLoss, &params(vec![1.0])),
            Err(Error::NonFinite(_))
        ));
    }
}
