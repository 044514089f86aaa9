use alloc::vec;
use alloc::vec::Vec;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Projects the output onto fixed random weights so every adjoint entry is exercised.
fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rand_tensor(&mut rng, tape.shape(y));
    let r = tape.constant(r);
    let p = tape.mul(y, r).unwrap();
    tape.sum(p)
}

/// Largest elementwise relative error between autodiff and central
/// differences (h = 1e-5) over all inputs.
fn grad_check(inputs: &[Tensor<f64>], build: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = vars.iter().map(|&v| tape.grad(v).unwrap().clone()).collect();

    let eval = |inputs: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = build(&mut tape, &vars);
        tape.value(loss).data()[0]
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn matmul_identity_and_hand_product() {
    let mut tape = Tape::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&mut rng, &[3, 3]);
    let mut eye = Tensor::zeros(&[3, 3]);
    for i in 0..3 {
        eye.data_mut()[i * 3 + i] = 1.0;
    }
    let (e, xv) = (tape.constant(eye), tape.constant(x.clone()));
    let y = tape.matmul(e, xv).unwrap();
    assert_eq!(tape.value(y), &x);

    let a = tape.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let b = tape.constant(Tensor::from_rows(&[&[1.0], &[1.0]]));
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
    assert_eq!(tape.shape(c), &[2, 1]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    match tape.matmul(a, b) {
        Err(Error::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_is_ones_times_b_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (a, b) = (rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4, 2]));
    let mut tape = Tape::new();
    let (av, bv) = (tape.leaf(a, true), tape.leaf(b.clone(), true));
    let c = tape.matmul(av, bv).unwrap();
    let s = tape.sum(c);
    tape.backward(s).unwrap();
    let ga = tape.grad(av).unwrap();
    for i in 0..3 {
        for p in 0..4 {
            let expected: f64 = (0..2).map(|j| b.data()[p * 2 + j]).sum();
            assert!((ga.data()[i * 4 + p] - expected).abs() < 1e-12);
        }
    }
    let worst = grad_check(&[rand_tensor(&mut rng, &[3, 4]), rand_tensor(&mut rng, &[4, 2])], |t, v| {
        let c = t.matmul(v[0], v[1]).unwrap();
        t.sum(c)
    });
    assert!(worst < 1e-6, "rel err {worst}");
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new(&[4], vec![0.3; 4]).unwrap());
    let y = tape.masked_softmax(x, Axis::Cols, &[true; 4]).unwrap();
    for &v in tape.value(y).data() {
        assert!((v - 0.25).abs() < 1e-12);
    }

    let x = tape.constant(Tensor::new(&[2], vec![0.0, 0.0]).unwrap());
    let y = tape.masked_softmax(x, Axis::Cols, &[true, false]).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 0.0]);

    let x = tape.constant(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
    let y = tape.masked_softmax(x, Axis::Cols, &[true; 3]).unwrap();
    // exp-normalize evaluated directly
    let z: f64 = (1f64).exp() + (2f64).exp() + (3f64).exp();
    let expected = [(1f64).exp() / z, (2f64).exp() / z, (3f64).exp() / z];
    for (v, e) in tape.value(y).data().iter().zip(expected) {
        assert!((v - e).abs() < 1e-12);
    }
    for (v, e) in tape.value(y).data().iter().zip([0.09003, 0.24473, 0.66524]) {
        assert!((v - e).abs() < 1e-5);
    }
}

#[test]
fn softmax_fully_masked_slice_is_error() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let err = tape.masked_softmax(x, Axis::Cols, &[true, true, false, false]).unwrap_err();
    assert_eq!(err, Error::DegenerateSlice { index: 1 });
}

#[test]
fn softmax_along_rows_normalizes_columns() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_rows(&[&[1.0, 5.0], &[2.0, -1.0], &[0.5, 0.0]]));
    let y = tape.masked_softmax(x, Axis::Rows, &[true, true, true, true, false, true]).unwrap();
    let d = tape.value(y).data();
    assert!((d[0] + d[2] + d[4] - 1.0).abs() < 1e-12);
    assert_eq!(d[4], 0.0);
    assert!((d[1] + d[3] + d[5] - 1.0).abs() < 1e-12);
}

#[test]
fn layer_norm_examples() {
    let mut tape = Tape::<f64>::new();
    let (g, b) = (tape.constant(Tensor::full(&[2], 1.0)), tape.constant(Tensor::zeros(&[2])));
    let x = tape.constant(Tensor::new(&[1, 2], vec![1.0, 3.0]).unwrap());
    let y = tape.layer_norm(x, g, b, 1e-6).unwrap();
    let d = tape.value(y).data();
    assert!((d[0] + 1.0).abs() < 1e-5 && (d[1] - 1.0).abs() < 1e-5, "{d:?}");

    let (g, b) = (tape.constant(Tensor::full(&[3], 1.0)), tape.constant(Tensor::zeros(&[3])));
    let x = tape.constant(Tensor::new(&[1, 3], vec![4.2; 3]).unwrap());
    let y = tape.layer_norm(x, g, b, 1e-6).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn layer_norm_normalizes_each_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(rand_tensor(&mut rng, &[5, 7]));
    let (g, b) = (tape.constant(Tensor::full(&[7], 1.0)), tape.constant(Tensor::zeros(&[7])));
    let y = tape.layer_norm(x, g, b, 1e-6).unwrap();
    for row in tape.value(y).data().chunks(7) {
        let mean = row.iter().sum::<f64>() / 7.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 7.0;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-4, "{mean} {var}");
    }
}

#[test]
fn depthwise_conv_examples() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new(&[3, 1], vec![1.0, 2.0, 3.0]).unwrap());
    let k = tape.constant(Tensor::new(&[3, 1], vec![1.0, 1.0, 1.0]).unwrap());
    let p = tape.constant(Tensor::new(&[1, 1], vec![1.0]).unwrap());
    let y = depthwise_separable_conv1d(&mut tape, x, k, p, &[true; 3]).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 6.0, 5.0]);

    // unit impulse + identity mixing
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xt = rand_tensor(&mut rng, &[6, 4]);
    let x = tape.constant(xt.clone());
    let mut impulse = Tensor::zeros(&[5, 4]);
    impulse.data_mut()[2 * 4..3 * 4].fill(1.0);
    let mut eye = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        eye.data_mut()[i * 4 + i] = 1.0;
    }
    let (k, p) = (tape.constant(impulse), tape.constant(eye));
    let y = depthwise_separable_conv1d(&mut tape, x, k, p, &[true; 6]).unwrap();
    assert_eq!(tape.value(y), &xt);
}

#[test]
fn even_kernel_is_config_error() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[3, 2]));
    let k = tape.constant(Tensor::zeros(&[4, 2]));
    assert!(matches!(tape.depthwise_conv1d(x, k), Err(Error::Config(_))));
}

/// Dense convolution with the factored kernel `W[o][c][e] = depth[o][c]·point[c][e]`.
fn dense_conv_oracle(x: &Tensor<f64>, depth: &Tensor<f64>, point: &Tensor<f64>) -> Vec<f64> {
    let (n, d) = x.dims2().unwrap();
    let (k, _) = depth.dims2().unwrap();
    let (_, e) = point.dims2().unwrap();
    let half = (k / 2) as isize;
    let mut out = vec![0.0; n * e];
    for t in 0..n as isize {
        for oe in 0..e {
            let mut acc = 0.0;
            for o in 0..k as isize {
                let src = t + o - half;
                if src < 0 || src >= n as isize {
                    continue;
                }
                for c in 0..d {
                    let w = depth.data()[o as usize * d + c] * point.data()[c * e + oe];
                    acc += x.data()[src as usize * d + c] * w;
                }
            }
            out[t as usize * e + oe] = acc;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn separable_conv_matches_dense_oracle(n in 1usize..9, d in 1usize..5, e in 1usize..5, half in 0usize..3, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 2 * half + 1;
        let (x, depth, point) = (rand_tensor(&mut rng, &[n, d]), rand_tensor(&mut rng, &[k, d]), rand_tensor(&mut rng, &[d, e]));
        let expected = dense_conv_oracle(&x, &depth, &point);
        let mut tape = Tape::new();
        let (xv, dv, pv) = (tape.constant(x), tape.constant(depth), tape.constant(point));
        let y = depthwise_separable_conv1d(&mut tape, xv, dv, pv, &vec![true; n]).unwrap();
        for (a, b) in tape.value(y).data().iter().zip(&expected) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_softmax_is_distribution(values in proptest::collection::vec(-50.0f64..50.0, 1..12), mask_bits in any::<u16>()) {
        let n = values.len();
        let mut mask: Vec<bool> = (0..n).map(|i| mask_bits & (1 << i) != 0).collect();
        mask[0] = true;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[n], values).unwrap());
        let y = tape.masked_softmax(x, Axis::Cols, &mask).unwrap();
        let d = tape.value(y).data();
        let s: f64 = d.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-6);
        for (v, m) in d.iter().zip(&mask) {
            prop_assert!(v.is_finite() && *v >= 0.0);
            if !m { prop_assert_eq!(*v, 0.0); }
        }
    }

    #[test]
    fn layer_norm_gradients_match_finite_differences(rows in 1usize..4, dim in 2usize..6, seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = [rand_tensor(&mut rng, &[rows, dim]), rand_tensor(&mut rng, &[dim]), rand_tensor(&mut rng, &[dim])];
        let worst = grad_check(&inputs, |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2], 1e-6).unwrap();
            weighted_sum(t, y, seed)
        });
        prop_assert!(worst < 1e-4, "rel err {}", worst);
    }
}

#[test]
fn primitive_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut r = |s: &[usize]| rand_tensor(&mut rng, s);
    type Build = fn(&mut Tape<f64>, &[Var]) -> Var;
    let cases: Vec<(&str, Vec<Tensor<f64>>, Build)> = vec![
        ("transpose", vec![r(&[3, 2])], |t, v| {
            let y = t.transpose(v[0]).unwrap();
            weighted_sum(t, y, 1)
        }),
        ("add_sub_mul", vec![r(&[2, 3]), r(&[2, 3])], |t, v| {
            let a = t.add(v[0], v[1]).unwrap();
            let b = t.sub(a, v[1]).unwrap();
            let c = t.mul(b, v[1]).unwrap();
            weighted_sum(t, c, 2)
        }),
        ("bias_ops", vec![r(&[3, 4]), r(&[4]), r(&[4]), r(&[1])], |t, v| {
            let a = t.add_bias(v[0], v[1]).unwrap();
            let b = t.mul_bias(a, v[2]).unwrap();
            let c = t.add_scalar(b, v[3]).unwrap();
            weighted_sum(t, c, 3)
        }),
        ("add_row_col", vec![r(&[3, 2]), r(&[3, 1]), r(&[2, 1])], |t, v| {
            let y = t.add_row_col(v[0], v[1], v[2]).unwrap();
            weighted_sum(t, y, 4)
        }),
        ("relu_sigmoid_scale", vec![r(&[2, 5])], |t, v| {
            let a = t.relu(v[0]).unwrap();
            let b = t.sigmoid(v[0]).unwrap();
            let c = t.add(a, b).unwrap();
            let d = t.scale(c, 1.7).unwrap();
            let e = t.mul_const(d, alloc::vec![2.0, 0.0, 1.0, 1.0, 0.5, 1.0, 1.0, 1.0, 3.0, 1.0]).unwrap();
            weighted_sum(t, e, 5)
        }),
        ("softmax_both_axes", vec![r(&[3, 4])], |t, v| {
            let mask = [true, false, true, true, true, true, false, true, true, true, true, false];
            let a = t.masked_softmax(v[0], Axis::Cols, &mask).unwrap();
            let b = t.masked_softmax(v[0], Axis::Rows, &mask).unwrap();
            let c = t.add(a, b).unwrap();
            weighted_sum(t, c, 6)
        }),
        ("log_softmax_pick", vec![r(&[5])], |t, v| {
            let a = t.masked_log_softmax(v[0], &[true, true, false, true, true]).unwrap();
            let p = t.pick(a, 3).unwrap();
            t.scale(p, -1.0).unwrap()
        }),
        ("depthwise_conv", vec![r(&[5, 3]), r(&[3, 3])], |t, v| {
            let y = t.depthwise_conv1d(v[0], v[1]).unwrap();
            weighted_sum(t, y, 7)
        }),
        ("conv1d_batched", vec![r(&[2, 4, 3]), r(&[3, 3, 2])], |t, v| {
            let y = t.conv1d(v[0], v[1]).unwrap();
            weighted_sum(t, y, 8)
        }),
        ("conv2d", vec![r(&[3, 4, 2]), r(&[3, 3, 2, 3])], |t, v| {
            let y = t.conv2d(v[0], v[1]).unwrap();
            weighted_sum(t, y, 9)
        }),
        ("mask_rows_pad_reshape", vec![r(&[3, 2])], |t, v| {
            let a = t.mask_rows(v[0], &[true, false, true]).unwrap();
            let b = t.pad_rows(a, 5).unwrap();
            let c = t.reshape(b, &[2, 5]).unwrap();
            weighted_sum(t, c, 10)
        }),
        ("masked_max", vec![r(&[2, 3, 2])], |t, v| {
            let y = t.masked_max(v[0], &[true, true, false, true, false, false]).unwrap();
            weighted_sum(t, y, 11)
        }),
        ("masked_mean", vec![r(&[4, 3])], |t, v| {
            let y = t.masked_mean_rows(v[0], &[true, false, true, true]).unwrap();
            weighted_sum(t, y, 12)
        }),
        ("concat_slice", vec![r(&[2, 2]), r(&[2, 3])], |t, v| {
            let a = t.concat_cols(&[v[0], v[1]]).unwrap();
            let b = t.slice_cols(a, 1, 4).unwrap();
            weighted_sum(t, b, 13)
        }),
        ("gather", vec![r(&[4, 3])], |t, v| {
            let y = t.gather(v[0], &[2, 0, 2, 3]).unwrap();
            weighted_sum(t, y, 14)
        }),
        ("bce_with_logit", vec![r(&[1])], |t, v| {
            let a = t.bce_with_logit(v[0], 1.0).unwrap();
            let b = t.bce_with_logit(v[0], 0.0).unwrap();
            let c = t.scale(b, 0.3).unwrap();
            t.add(a, c).unwrap()
        }),
    ];
    for (name, inputs, build) in cases {
        let worst = grad_check(&inputs, build);
        assert!(worst < 1e-4, "{name}: rel err {worst}");
    }
}

#[test]
fn self_attention_single_position_is_value_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut tape = Tape::<f64>::new();
    let xt = rand_tensor(&mut rng, &[1, 4]);
    let wv_t = rand_tensor(&mut rng, &[4, 4]);
    let x = tape.constant(xt.clone());
    let (wq, wk) = (tape.constant(rand_tensor(&mut rng, &[4, 4])), tape.constant(rand_tensor(&mut rng, &[4, 4])));
    let wv = tape.constant(wv_t.clone());
    let y = self_attention(&mut tape, x, wq, wk, wv, &[true], 1).unwrap();
    let expected = kernels::matmul(xt.data(), wv_t.data(), 1, 4, 4);
    for (a, b) in tape.value(y).data().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn self_attention_zero_query_key_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tape = Tape::<f64>::new();
    let xt = rand_tensor(&mut rng, &[5, 3]);
    let wv_t = rand_tensor(&mut rng, &[3, 3]);
    let x = tape.constant(xt.clone());
    let (wq, wk) = (tape.constant(Tensor::zeros(&[3, 3])), tape.constant(Tensor::zeros(&[3, 3])));
    let wv = tape.constant(wv_t.clone());
    let y = self_attention(&mut tape, x, wq, wk, wv, &[true; 5], 1).unwrap();
    let v = kernels::matmul(xt.data(), wv_t.data(), 5, 3, 3);
    let mean: Vec<f64> = (0..3).map(|c| (0..5).map(|r| v[r * 3 + c]).sum::<f64>() / 5.0).collect();
    for row in tape.value(y).data().chunks(3) {
        for (a, b) in row.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

/// Per-pair dot products, explicit exponentials, explicit weighted sums.
fn naive_attention(x: &Tensor<f64>, wq: &Tensor<f64>, wk: &Tensor<f64>, wv: &Tensor<f64>, mask: &[bool]) -> Vec<f64> {
    let (n, d) = x.dims2().unwrap();
    let proj = |w: &Tensor<f64>, i: usize, c: usize| (0..d).map(|p| x.data()[i * d + p] * w.data()[p * d + c]).sum::<f64>();
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        let scores: Vec<f64> = (0..n)
            .map(|j| {
                if !mask[j] {
                    return f64::NEG_INFINITY;
                }
                (0..d).map(|c| proj(wq, i, c) * proj(wk, j, c)).sum::<f64>() / (d as f64).sqrt()
            })
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        for j in 0..n {
            let a = scores[j].exp() / z;
            for c in 0..d {
                out[i * d + c] += a * proj(wv, j, c);
            }
        }
    }
    out
}

#[test]
fn self_attention_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, wq, wk, wv) = (
        rand_tensor(&mut rng, &[4, 8]),
        rand_tensor(&mut rng, &[8, 8]),
        rand_tensor(&mut rng, &[8, 8]),
        rand_tensor(&mut rng, &[8, 8]),
    );
    for mask in [[true; 4], [true, true, false, true]] {
        let expected = naive_attention(&x, &wq, &wk, &wv, &mask);
        let mut tape = Tape::new();
        let vars: Vec<Var> = [&x, &wq, &wk, &wv].iter().map(|t| tape.constant((*t).clone())).collect();
        let y = self_attention(&mut tape, vars[0], vars[1], vars[2], vars[3], &mask, 1).unwrap();
        for (a, b) in tape.value(y).data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn backward_of_sum_is_ones() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap(), true);
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 4]);
}

#[test]
fn backward_contract_errors() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[2]), true);
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(matches!(tape.backward(s), Err(Error::Contract(_))));
}

#[test]
fn unreached_leaves_get_zero_grad_and_constants_none() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::full(&[3], 2.0), true);
    let unused = tape.leaf(Tensor::full(&[2], 1.0), true);
    let c = tape.constant(Tensor::full(&[3], 1.0));
    let y = tape.mul(x, c).unwrap();
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(unused).unwrap().data(), &[0.0, 0.0]);
    assert!(tape.grad(c).is_none());
    let d = tape.detach(x);
    assert!(tape.grad(d).is_none());
}

#[test]
fn composite_graph_matches_finite_differences() {
    // conv -> attention -> softmax -> cross-entropy
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, d) = (5, 4);
    let inputs = vec![
        rand_tensor(&mut rng, &[n, d]),
        rand_tensor(&mut rng, &[3, d]),
        rand_tensor(&mut rng, &[d, d]),
        rand_tensor(&mut rng, &[d, d]),
        rand_tensor(&mut rng, &[d, d]),
        rand_tensor(&mut rng, &[d, d]),
        rand_tensor(&mut rng, &[d, 1]),
    ];
    let mask = [true, true, true, true, false];
    let worst = grad_check(&inputs, |t, v| {
        let c = depthwise_separable_conv1d(t, v[0], v[1], v[2], &mask).unwrap();
        let a = self_attention(t, c, v[3], v[4], v[5], &mask, 2).unwrap();
        let logits = t.matmul(a, v[6]).unwrap();
        let logp = t.masked_log_softmax(logits, &mask).unwrap();
        let p = t.pick(logp, 2).unwrap();
        t.scale(p, -1.0).unwrap()
    });
    assert!(worst < 1e-4, "rel err {worst}");
}

#[test]
fn forward_values_stay_finite_for_extreme_logits() {
    let mut tape = Tape::<f32>::new();
    let x = tape.leaf(Tensor::new(&[3], vec![1e4f32, -1e4, 0.0]).unwrap(), true);
    let y = tape.masked_softmax(x, Axis::Cols, &[true; 3]).unwrap();
    let l = tape.masked_log_softmax(x, &[true; 3]).unwrap();
    let p = tape.pick(l, 1).unwrap();
    tape.backward(p).unwrap();
    assert!(tape.value(y).is_finite());
    assert!(tape.value(l).is_finite());
    assert!(tape.grad(x).unwrap().is_finite());
}
