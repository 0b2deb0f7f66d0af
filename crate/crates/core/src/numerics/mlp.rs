//! Two-layer perceptron `y = W2 a(W1 x + b1) + b2` with a leaky-relu
//! hidden activation and a linear output.
//!
//! The layer bundle holds exactly four tensors in order: first weight
//! (`hidden x in`), first bias, second weight (`out x hidden`), second bias.
//! Names are free so the same kernel serves the relation-meta learner and
//! the adapter's bottleneck network (slope 0, i.e. plain relu).

use super::params::ParamBundle;
use super::tensor::{affine, matvec_t_acc, outer_acc, Tensor};
use crate::error::{Error, Result};

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub input: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
}

fn layers(bundle: &ParamBundle) -> Result<[&Tensor; 4]> {
    let t = bundle.tensors();
    if t.len() != 4 {
        return Err(Error::Shape(format!(
            "two-layer perceptron needs 4 tensors, got {}",
            t.len()
        )));
    }
    Ok([&t[0], &t[1], &t[2], &t[3]])
}

/// Checks that the four tensors chain `in -> hidden -> out`.
pub fn check_shapes(bundle: &ParamBundle, input_dim: usize) -> Result<(usize, usize)> {
    let [w1, b1, w2, b2] = layers(bundle)?;
    let hidden = w1.rows();
    let out = w2.rows();
    let ok = w1.shape().len() == 2
        && w2.shape().len() == 2
        && w1.cols() == input_dim
        && b1.shape() == [hidden]
        && w2.cols() == hidden
        && b2.shape() == [out];
    if !ok {
        return Err(Error::Shape(format!(
            "layers {:?} {:?} {:?} {:?} do not chain from input {input_dim}",
            w1.shape(),
            b1.shape(),
            w2.shape(),
            b2.shape()
        )));
    }
    Ok((hidden, out))
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn mlp_forward(input: &[f64], bundle: &ParamBundle, slope: f64) -> Result<Vec<f64>> {
    mlp_forward_cached(input, bundle, slope).map(|(y, _)| y)
}

pub fn mlp_forward_cached(
    input: &[f64],
    bundle: &ParamBundle,
    slope: f64,
) -> Result<(Vec<f64>, MlpCache)> {
    let (hidden_dim, out_dim) = check_shapes(bundle, input.len())?;
    let [w1, b1, w2, b2] = layers(bundle)?;
    let mut pre = vec![0.0; hidden_dim];
    affine(w1, b1, input, &mut pre);
    let hidden: Vec<f64> = pre.iter().map(|&z| leaky(z, slope)).collect();
    let mut out = vec![0.0; out_dim];
    affine(w2, b2, &hidden, &mut out);
    Ok((
        out,
        MlpCache {
            input: input.to_vec(),
            pre_activation: pre,
            hidden,
        },
    ))
}

/// Accumulates `dL/dparams` into `grads` and, if requested, `dL/dinput`
/// into `d_input`, given `d_out = dL/dy`.
///
/// The activation derivative at exactly zero is taken from the negative
/// side (`slope`).
pub fn mlp_backward(
    bundle: &ParamBundle,
    cache: &MlpCache,
    d_out: &[f64],
    slope: f64,
    grads: &mut ParamBundle,
    d_input: Option<&mut [f64]>,
) {
    let t = bundle.tensors();
    let (w1, w2) = (&t[0], &t[2]);
    let g = grads.tensors_mut();

    outer_acc(&mut g[2], d_out, &cache.hidden);
    super::tensor::axpy(1.0, d_out, g[3].data_mut());

    let mut d_hidden = vec![0.0; cache.hidden.len()];
    matvec_t_acc(w2, d_out, &mut d_hidden);
    for (dh, &z) in d_hidden.iter_mut().zip(&cache.pre_activation) {
        if z <= 0.0 {
            *dh *= slope;
        }
    }

    outer_acc(&mut g[0], &d_hidden, &cache.input);
    super::tensor::axpy(1.0, &d_hidden, g[1].data_mut());

    if let Some(dx) = d_input {
        matvec_t_acc(w1, &d_hidden, dx);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bundle(w1: Tensor, b1: Vec<f64>, w2: Tensor, b2: Vec<f64>) -> ParamBundle {
        ParamBundle::new()
            .with("w1", w1)
            .unwrap()
            .with("b1", Tensor::vector(b1))
            .unwrap()
            .with("w2", w2)
            .unwrap()
            .with("b2", Tensor::vector(b2))
            .unwrap()
    }

    fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.row_mut(i)[i] = 1.0;
        }
        t
    }

    #[test]
    fn identity_network_passes_positive_input() {
        let b = bundle(identity(3), vec![0.0; 3], identity(3), vec![0.0; 3]);
        let x = [0.5, 2.0, 7.0];
        assert_eq!(mlp_forward(&x, &b, 0.2).unwrap(), x.to_vec());
    }

    #[test]
    fn leaky_hidden_value() {
        let b = bundle(
            Tensor::matrix(1, 1, vec![-1.0]).unwrap(),
            vec![0.0],
            Tensor::matrix(1, 1, vec![1.0]).unwrap(),
            vec![0.0],
        );
        let (_, cache) = mlp_forward_cached(&[2.0], &b, 0.2).unwrap();
        assert!((cache.hidden[0] - (-0.4)).abs() < 1e-15);
    }

    #[test]
    fn random_net_matches_explicit_matrix_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut r = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (w1, b1, w2, b2, x) = (r(16), r(4), r(8), r(2), r(4));
        let net = bundle(
            Tensor::matrix(4, 4, w1.clone()).unwrap(),
            b1.clone(),
            Tensor::matrix(2, 4, w2.clone()).unwrap(),
            b2.clone(),
        );
        let y = mlp_forward(&x, &net, 0.2).unwrap();

        // independent oracle: explicit index loops
        let mut h = [0.0; 4];
        for i in 0..4 {
            let mut s = b1[i];
            for j in 0..4 {
                s += w1[i * 4 + j] * x[j];
            }
            h[i] = if s > 0.0 { s } else { 0.2 * s };
        }
        for k in 0..2 {
            let mut s = b2[k];
            for i in 0..4 {
                s += w2[k * 4 + i] * h[i];
            }
            assert!((y[k] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let b = bundle(identity(3), vec![0.0; 3], identity(3), vec![0.0; 2]);
        assert!(mlp_forward(&[1.0; 3], &b, 0.2).is_err());
        let b = bundle(identity(3), vec![0.0; 3], identity(3), vec![0.0; 3]);
        assert!(mlp_forward(&[1.0; 4], &b, 0.2).is_err());
    }

    #[test]
    fn forward_is_bitwise_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut r = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let net = bundle(
            Tensor::matrix(6, 3, r(18)).unwrap(),
            r(6),
            Tensor::matrix(3, 6, r(18)).unwrap(),
            r(3),
        );
        let x = r(3);
        let a = mlp_forward(&x, &net, 0.2).unwrap();
        let b = mlp_forward(&x, &net, 0.2).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
