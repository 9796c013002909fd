//! Finite-difference checks for every differentiable op, plus algebraic
//! properties of the signal ops.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unetgan::ops::{BnMode, Conv1dSpec, RunningStats, BN_EPS, BN_MOMENTUM};
use unetgan::tensor::gradcheck::{self, random_tensor, DEFAULT_STEP};
use unetgan::tensor::{Graph, Tensor, Var};
use unetgan::Result;

const TOL: f64 = 1e-4;

fn assert_grad<F>(inputs: &[Tensor<f64>], f: F)
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let report = gradcheck::check(inputs, f, DEFAULT_STEP).unwrap();
    assert!(report.checked > 0);
    assert!(report.max_rel_error < TOL, "{report:?}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn squared_error_hand_value() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::from_slice(&[0.0]).with_requires_grad(true));
    let y = g.constant(Tensor::from_slice(&[2.0]));
    let l = g.mse(y, x).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[-4.0]);
}

#[test]
fn elementwise_arithmetic() {
    let mut r = rng(1);
    let a = random_tensor(&[2, 3, 4], 1.0, 0.0, &mut r);
    let b = random_tensor(&[2, 3, 4], 1.0, 0.0, &mut r);
    assert_grad(&[a.clone(), b.clone()], |g, v| {
        let s = g.add(v[0], v[1])?;
        let d = g.sub(s, v[1])?;
        let p = g.mul(d, v[1])?;
        let q = g.affine(p, 1.5, -0.25)?;
        gradcheck::project(g, q, 0)
    });
    assert_grad(&[a, b], |g, v| {
        let m = g.mse(v[0], v[1])?;
        let n = g.mean(v[0])?;
        g.add(m, n)
    });
}

#[test]
fn log_and_clamp_interior() {
    let mut r = rng(2);
    let a = random_tensor(&[8], 0.4, 0.0, &mut r);
    let a = Tensor::new([8], a.data().iter().map(|v| v + 0.5).collect()).unwrap();
    assert_grad(&[a], |g, v| {
        let c = g.clamp(v[0], 1e-3, 1.0 - 1e-3)?;
        let l = g.log(c)?;
        gradcheck::project(g, l, 1)
    });
}

#[test]
fn conv_over_strides_and_dilations() {
    let mut r = rng(3);
    for (k, s, d) in [
        (1, 1, 1),
        (3, 1, 1),
        (3, 1, 2),
        (5, 2, 1),
        (4, 3, 2),
        (15, 4, 1),
        (3, 1, 4),
    ] {
        let spec = Conv1dSpec::new(2, 3, k).with_stride(s).with_dilation(d);
        let x = random_tensor(&[2, 2, 13], 1.0, 0.0, &mut r);
        let w = random_tensor(&spec.weight_shape(), 0.5, 0.0, &mut r);
        let b = random_tensor(&[3], 0.5, 0.0, &mut r);
        assert_grad(&[x, w, b], |g, v| {
            let y = g.conv1d(v[0], v[1], v[2], spec)?;
            gradcheck::project(g, y, 2)
        });
    }
}

#[test]
fn batch_norm_input_gamma_beta() {
    let mut r = rng(4);
    let x = random_tensor(&[3, 2, 5], 1.0, 0.0, &mut r);
    let gamma = random_tensor(&[2], 1.0, 0.3, &mut r);
    let beta = random_tensor(&[2], 1.0, 0.0, &mut r);
    for mode in [BnMode::Training, BnMode::TrainingFrozen, BnMode::Inference] {
        assert_grad(&[x.clone(), gamma.clone(), beta.clone()], |g, v| {
            let mut stats = RunningStats::<f64> {
                mean: vec![0.1, -0.2],
                var: vec![0.8, 1.3],
            };
            let y = g.batch_norm(v[0], v[1], v[2], &mut stats, mode, BN_MOMENTUM, BN_EPS)?;
            gradcheck::project(g, y, 3)
        });
    }
}

#[test]
fn activations() {
    let mut r = rng(5);
    let x = random_tensor(&[2, 2, 6], 2.0, 0.05, &mut r);
    assert_grad(std::slice::from_ref(&x), |g, v| {
        let y = g.leaky_relu(v[0], 0.1)?;
        gradcheck::project(g, y, 4)
    });
    assert_grad(std::slice::from_ref(&x), |g, v| {
        let y = g.tanh(v[0])?;
        gradcheck::project(g, y, 5)
    });
    assert_grad(&[x], |g, v| {
        let y = g.sigmoid(v[0])?;
        gradcheck::project(g, y, 6)
    });
}

#[test]
fn leaky_relu_at_zero_takes_slope() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::from_slice(&[0.0]).with_requires_grad(true));
    let y = g.leaky_relu(x, 0.1).unwrap();
    assert_eq!(g.value(y).data(), &[0.0]);
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.1]);
}

#[test]
fn resampling_and_concat() {
    let mut r = rng(6);
    let x = random_tensor(&[2, 3, 7], 1.0, 0.0, &mut r);
    assert_grad(std::slice::from_ref(&x), |g, v| {
        let y = g.decimate(v[0])?;
        gradcheck::project(g, y, 7)
    });
    assert_grad(std::slice::from_ref(&x), |g, v| {
        let y = g.upsample_linear2x(v[0])?;
        gradcheck::project(g, y, 8)
    });
    let z = random_tensor(&[2, 1, 7], 1.0, 0.0, &mut r);
    assert_grad(&[x, z], |g, v| {
        let y = g.concat_channels(v[0], v[1])?;
        let y = g.mul(y, y)?;
        gradcheck::project(g, y, 9)
    });
}

#[test]
fn pooling_dense_reshape() {
    let mut r = rng(7);
    let x = random_tensor(&[3, 4, 5], 1.0, 0.0, &mut r);
    let w = random_tensor(&[2, 4], 1.0, 0.0, &mut r);
    let b = random_tensor(&[2], 1.0, 0.0, &mut r);
    assert_grad(&[x, w, b], |g, v| {
        let p = g.mean_time(v[0])?;
        let d = g.dense(p, v[1], v[2])?;
        let f = g.reshape(d, &[6])?;
        gradcheck::project(g, f, 10)
    });
}

#[test]
fn decimate_gradient_is_comb() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(
        Tensor::new([1, 1, 6], vec![1.0; 6])
            .unwrap()
            .with_requires_grad(true),
    );
    let y = g.decimate(x).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
}

fn tensor_strategy(max_c: usize, max_t: usize) -> impl Strategy<Value = Tensor<f64>> {
    (1..=2usize, 1..=max_c, 1..=max_t).prop_flat_map(|(b, c, t)| {
        prop::collection::vec(-10.0f64..10.0, b * c * t)
            .prop_map(move |d| Tensor::new([b, c, t], d).unwrap())
    })
}

/// Output positions of a K=3 stride-1 stack that change when input
/// position `p` of a length-`t` signal is perturbed.
fn footprint(dilations: &[usize], t: usize, p: usize) -> Vec<usize> {
    let run = |bump: f64| {
        let mut g = Graph::<f64>::new();
        let mut x = vec![0.0; t];
        x[p] = bump;
        let mut h = g.constant(Tensor::new([1, 1, t], x).unwrap());
        for &r in dilations {
            let spec = Conv1dSpec::new(1, 1, 3).with_dilation(r);
            let w = g.constant(Tensor::new([1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap());
            let b = g.constant(Tensor::zeros([1]));
            h = g.conv1d(h, w, b, spec).unwrap();
        }
        g.value(h).data().to_vec()
    };
    let (a, b) = (run(0.0), run(1.0));
    (0..t).filter(|&i| a[i] != b[i]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decimate_inverts_upsample(x in tensor_strategy(3, 20)) {
        let mut g = Graph::<f64>::new();
        let v = g.constant(x.clone());
        let u = g.upsample_linear2x(v).unwrap();
        let d = g.decimate(u).unwrap();
        prop_assert_eq!(g.value(d).data(), x.data());
    }

    #[test]
    fn same_padding_preserves_length(t in 1usize..64, k in 1usize..16, r in prop::sample::select(vec![1usize, 2, 4])) {
        let spec = Conv1dSpec::new(1, 1, k).with_dilation(r);
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros([1, 1, t]));
        let w = g.constant(Tensor::zeros(spec.weight_shape()));
        let b = g.constant(Tensor::zeros([1]));
        let y = g.conv1d(x, w, b, spec).unwrap();
        prop_assert_eq!(g.shape(y), &[1, 1, t]);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients(x in tensor_strategy(2, 8), seed in 0u64..1000) {
        let grad = |which: u8| {
            let mut g = Graph::<f64>::new();
            let v = g.leaf(x.clone().with_requires_grad(true));
            let t = g.tanh(v).unwrap();
            let a = gradcheck::project(&mut g, t, seed).unwrap();
            let sq = g.mul(v, v).unwrap();
            let b = g.mean(sq).unwrap();
            match which {
                0 => { let s = g.add(a, b).unwrap(); g.backward(s).unwrap(); }
                _ => { g.backward(a).unwrap(); g.backward(b).unwrap(); }
            }
            g.grad(v).unwrap().to_vec()
        };
        for (p, q) in grad(0).iter().zip(grad(1)) {
            prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn dilated_stack_reach(p in 0usize..64) {
        for (dil, reach) in [(vec![1, 2, 4], 7usize), (vec![1, 1, 1], 3)] {
            let fp = footprint(&dil, 64, p);
            prop_assert!(fp.iter().all(|&i| i.abs_diff(p) <= reach));
            // Away from the edges the full span is touched.
            if p >= reach && p + reach < 64 {
                prop_assert_eq!(fp.len(), 2 * reach + 1);
            }
        }
    }

    #[test]
    fn forward_backward_bit_identical(x in tensor_strategy(2, 12)) {
        let run = || {
            let mut g = Graph::<f64>::new();
            let v = g.leaf(x.clone().with_requires_grad(true));
            let c = g.shape(v)[1];
            let spec = Conv1dSpec::new(c, 2, 3).with_dilation(2);
            let w = g.constant(Tensor::full(spec.weight_shape(), 0.3));
            let b = g.constant(Tensor::full([2], 0.1));
            let y = g.conv1d(v, w, b, spec).unwrap();
            let y = g.tanh(y).unwrap();
            let s = gradcheck::project(&mut g, y, 1).unwrap();
            g.backward(s).unwrap();
            (g.value(s).item().to_bits(), g.grad(v).unwrap().iter().map(|f| f.to_bits()).collect::<Vec<_>>())
        };
        prop_assert_eq!(run(), run());
    }
}
