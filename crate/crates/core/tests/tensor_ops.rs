use a2dmn::tensor::{grad_check, GradCheck, Tape, Tensor};
use a2dmn::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Insert `d - 1` zero rows/columns between kernel taps.
fn inflate(w: &Tensor<f64>, d: usize) -> Tensor<f64> {
    let s = w.shape();
    let (co, ci, kh, kw) = (s[0], s[1], s[2], s[3]);
    let (eh, ew) = ((kh - 1) * d + 1, (kw - 1) * d + 1);
    let mut out = Tensor::zeros(&[co, ci, eh, ew]);
    for o in 0..co {
        for i in 0..ci {
            for y in 0..kh {
                for x in 0..kw {
                    out.data_mut()[((o * ci + i) * eh + y * d) * ew + x * d] =
                        w.data()[((o * ci + i) * kh + y) * kw + x];
                }
            }
        }
    }
    out
}

/// Textbook six-loop same-padded convolution.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], d: usize) -> Vec<f64> {
    let (n, ci, h, wd) = x.dims4("t").unwrap();
    let (co, _, kh, kw) = w.dims4("t").unwrap();
    let (py, px) = ((kh as i64 - 1) / 2 * d as i64, (kw as i64 - 1) / 2 * d as i64);
    let mut out = vec![0.0; n * co * h * wd];
    for b_ in 0..n {
        for o in 0..co {
            for y in 0..h {
                for xx in 0..wd {
                    let mut s = b[o];
                    for i in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = y as i64 + (ky * d) as i64 - py;
                                let ix = xx as i64 + (kx * d) as i64 - px;
                                if iy >= 0 && ix >= 0 && iy < h as i64 && ix < wd as i64 {
                                    s += w.data()[((o * ci + i) * kh + ky) * kw + kx]
                                        * x.data()[((b_ * ci + i) * h + iy as usize) * wd + ix as usize];
                                }
                            }
                        }
                    }
                    out[((b_ * co + o) * h + y) * wd + xx] = s;
                }
            }
        }
    }
    out
}

/// Direct stride-2 2x2 convolution mapping [N,Co,2H,2W] -> [N,Ci,H,W] with
/// kernel laid out [Ci,Co,2,2].
fn stride2_conv(y: &Tensor<f64>, w: &Tensor<f64>) -> Vec<f64> {
    let (n, co, h2, w2) = y.dims4("t").unwrap();
    let ci = w.shape()[0];
    let (h, wd) = (h2 / 2, w2 / 2);
    let mut out = vec![0.0; n * ci * h * wd];
    for b in 0..n {
        for i in 0..ci {
            for r in 0..h {
                for c in 0..wd {
                    let mut s = 0.0;
                    for o in 0..co {
                        for a in 0..2 {
                            for e in 0..2 {
                                s += y.data()[((b * co + o) * h2 + 2 * r + a) * w2 + 2 * c + e]
                                    * w.data()[((i * co + o) * 2 + a) * 2 + e];
                            }
                        }
                    }
                    out[((b * ci + i) * h + r) * wd + c] = s;
                }
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn conv_three_by_three_on_two_by_two() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let w = t.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let b = t.constant(Tensor::zeros(&[1]));
    let y = t.conv2d(x, w, b, 1).unwrap();
    assert_eq!(t.value(y).data(), &[10.0, 10.0, 10.0, 10.0]);
}

#[test]
fn conv_delta_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xt = rand_tensor(&mut rng, &[2, 1, 5, 7]);
    let mut k = Tensor::zeros(&[1, 1, 3, 3]);
    k.data_mut()[4] = 1.0;
    let mut t = Tape::<f64>::new();
    let x = t.constant(xt.clone());
    let w = t.constant(k);
    let b = t.constant(Tensor::zeros(&[1]));
    let y = t.conv2d(x, w, b, 1).unwrap();
    assert_eq!(t.value(y).data(), xt.data());
}

#[test]
fn conv_matches_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for &(k, d) in &[(1, 1), (3, 1), (3, 2), (5, 4), (7, 1)] {
        let xt = rand_tensor(&mut rng, &[2, 3, 9, 6]);
        let wt = rand_tensor(&mut rng, &[4, 3, k, k]);
        let bt = rand_tensor(&mut rng, &[4]);
        let expected = naive_conv(&xt, &wt, bt.data(), d);
        let mut t = Tape::<f64>::new();
        let (x, w, b) = (t.constant(xt), t.constant(wt), t.constant(bt));
        let y = t.conv2d(x, w, b, d).unwrap();
        for (a, e) in t.value(y).data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "k={k} d={d}: {a} vs {e}");
        }
    }
}

#[test]
fn dilated_conv_equals_inflated_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xt = rand_tensor(&mut rng, &[1, 1, 8, 8]);
    let wt = rand_tensor(&mut rng, &[1, 1, 3, 3]);
    let inflated = inflate(&wt, 2);
    assert_eq!(inflated.shape(), &[1, 1, 5, 5]);
    let run = |w: Tensor<f64>, d: usize| {
        let mut t = Tape::<f64>::new();
        let (x, w, b) = (t.constant(xt.clone()), t.constant(w), t.constant(Tensor::zeros(&[1])));
        let y = t.conv2d(x, w, b, d).unwrap();
        t.value(y).data().to_vec()
    };
    let (a, b) = (run(wt, 2), run(inflated, 1));
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor::zeros(&[1, 2, 4, 4]));
    let w = t.constant(Tensor::zeros(&[1, 3, 3, 3]));
    let b = t.constant(Tensor::zeros(&[1]));
    assert!(matches!(t.conv2d(x, w, b, 1), Err(Error::Shape { .. })));
    let w_even = t.constant(Tensor::zeros(&[1, 2, 2, 2]));
    assert!(matches!(t.conv2d(x, w_even, b, 1), Err(Error::Shape { .. })));
}

#[test]
fn transposed_conv_single_tap() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor::new(&[1, 1, 1, 1], vec![5.0]).unwrap());
    let w = t.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
    let b = t.constant(Tensor::zeros(&[1]));
    let y = t.transposed_conv2d(x, w, b).unwrap();
    assert_eq!(t.value(y).shape(), &[1, 1, 2, 2]);
    assert_eq!(t.value(y).data(), &[5.0; 4]);
}

#[test]
fn transposed_conv_zero_input_gives_bias() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor::zeros(&[2, 3, 3, 4]));
    let w = t.constant(Tensor::full(&[3, 2, 2, 2], 0.7));
    let b = t.constant(Tensor::new(&[2], vec![1.5, -2.0]).unwrap());
    let y = t.transposed_conv2d(x, w, b).unwrap();
    let v = t.value(y);
    assert_eq!(v.shape(), &[2, 2, 6, 8]);
    for (i, &e) in v.data().iter().enumerate() {
        let ch = (i / 48) % 2;
        assert_eq!(e, if ch == 0 { 1.5 } else { -2.0 });
    }
    let w3 = t.constant(Tensor::zeros(&[3, 2, 3, 3]));
    assert!(t.transposed_conv2d(x, w3, b).is_err());
}

#[test]
fn transposed_conv_is_adjoint_of_stride2_conv() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let xt = rand_tensor(&mut rng, &[2, 3, 3, 5]);
        let wt = rand_tensor(&mut rng, &[3, 4, 2, 2]);
        let yt = rand_tensor(&mut rng, &[2, 4, 6, 10]);
        let mut t = Tape::<f64>::new();
        let (x, w, b) = (t.constant(xt.clone()), t.constant(wt.clone()), t.constant(Tensor::zeros(&[4])));
        let up = t.transposed_conv2d(x, w, b).unwrap();
        let lhs = dot(t.value(up).data(), yt.data());
        let rhs = dot(xt.data(), &stride2_conv(&yt, &wt));
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

/// <L x, y> == <x, L^T y> for every hand-written backward of a linear map.
#[test]
fn hand_written_backwards_are_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let xt = rand_tensor(&mut rng, &[2, 3, 6, 6]);
        let wt = rand_tensor(&mut rng, &[2, 3, 3, 3]);
        let wu = rand_tensor(&mut rng, &[3, 2, 2, 2]);
        let other = rand_tensor(&mut rng, &[2, 2, 6, 6]);
        type Build = fn(&mut Tape<f64>, a2dmn::Var, a2dmn::Var, a2dmn::Var, a2dmn::Var, a2dmn::Var) -> a2dmn::Var;
        let cases: [(&str, Build); 5] = [
            ("conv", |t, x, w, _, _, z| t.conv2d(x, w, z, 2).unwrap()),
            ("upconv", |t, x, _, u, _, z| t.transposed_conv2d(x, u, z).unwrap()),
            ("concat", |t, x, _, _, o, _| t.concat_channels(x, o).unwrap()),
            ("slice", |t, x, _, _, _, _| t.slice_channels(x, 1, 2).unwrap()),
            ("scale", |t, x, _, _, _, _| t.scale(x, -1.75)),
        ];
        for (name, build) in cases {
            let mut t = Tape::<f64>::new();
            let x = t.param(xt.clone());
            let w = t.constant(wt.clone());
            let u = t.constant(wu.clone());
            let o = t.param(other.clone());
            let z = t.constant(Tensor::zeros(&[2]));
            let y = build(&mut t, x, w, u, o, z);
            let probe = rand_tensor(&mut rng, t.value(y).shape());
            let lhs = dot(t.value(y).data(), probe.data());
            // backward of <y, probe> yields L^T probe in x.grad
            let prod = t.inner_product(y, probe.data()).unwrap();
            t.backward(prod).unwrap();
            let rhs = dot(xt.data(), t.grad(x).unwrap())
                + t.grad(o).map_or(0.0, |g| dot(other.data(), g));
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{name}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn maxpool_examples() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = t.maxpool2d(x).unwrap();
    assert_eq!(t.value(y).data(), &[4.0]);

    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::full(&[1, 2, 4, 4], 3.0));
    let y = t.maxpool2d(x).unwrap();
    assert_eq!(t.value(y).data(), &[3.0; 8]);
    let s = t.sum(y);
    t.backward(s).unwrap();
    let g = t.grad(x).unwrap();
    for c in 0..2 {
        for r in 0..4 {
            for col in 0..4 {
                let expect = if r % 2 == 0 && col % 2 == 0 { 1.0 } else { 0.0 };
                assert_eq!(g[(c * 4 + r) * 4 + col], expect);
            }
        }
    }
    let mut t = Tape::<f64>::new();
    let odd = t.constant(Tensor::zeros(&[1, 1, 3, 4]));
    assert!(t.maxpool2d(odd).is_err());
}

#[test]
fn maxpool_matches_window_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xt = rand_tensor(&mut rng, &[1, 1, 6, 6]);
    let mut t = Tape::<f64>::new();
    let x = t.constant(xt.clone());
    let y = t.maxpool2d(x).unwrap();
    for r in 0..3 {
        for c in 0..3 {
            let mut m = f64::NEG_INFINITY;
            for dr in 0..2 {
                for dc in 0..2 {
                    m = m.max(xt.data()[(2 * r + dr) * 6 + 2 * c + dc]);
                }
            }
            assert_eq!(t.value(y).data()[r * 3 + c], m);
        }
    }
}

#[test]
fn elementwise_examples() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = t.relu(x);
    assert_eq!(t.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = t.constant(Tensor::scalar(0.0));
    let s = t.sigmoid(z);
    assert_eq!(t.value(s).data(), &[0.5]);
    let zeros = t.constant(Tensor::zeros(&[3]));
    let a = t.add(x, zeros).unwrap();
    assert_eq!(t.value(a).data(), t.value(x).data());
    let bad = t.constant(Tensor::zeros(&[4]));
    assert!(t.add(x, bad).is_err());
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = t.relu(x);
    let s = t.sum(r);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.0, 0.0, 1.0]);
}

#[test]
fn concat_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let at = rand_tensor(&mut rng, &[2, 2, 3, 3]);
    let bt = rand_tensor(&mut rng, &[2, 3, 3, 3]);
    let mut t = Tape::<f64>::new();
    let a = t.param(at.clone());
    let b = t.param(bt.clone());
    let empty = t.constant(Tensor::new(&[2, 0, 3, 3], vec![]).unwrap());
    let same = t.concat_channels(a, empty).unwrap();
    assert_eq!(t.value(same).data(), at.data());
    let c = t.concat_channels(a, b).unwrap();
    assert_eq!(t.value(c).shape(), &[2, 5, 3, 3]);
    assert_eq!(t.value(c).slice_channels(0, 2).unwrap().data(), at.data());
    assert_eq!(t.value(c).slice_channels(2, 3).unwrap().data(), bt.data());
    let s = t.sum(c);
    t.backward(s).unwrap();
    assert!(t.grad(a).unwrap().iter().all(|&g| g == 1.0));
    assert!(t.grad(b).unwrap().iter().all(|&g| g == 1.0));
    let wrong = t.constant(Tensor::zeros(&[2, 1, 4, 3]));
    assert!(t.concat_channels(a, wrong).is_err());
}

#[test]
fn softmax_examples() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::zeros(&[1, 5, 2, 2]));
    let y = t.softmax_channels(x).unwrap();
    assert!(t.value(y).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    let big = t.constant(Tensor::new(&[1, 2, 1, 1], vec![1000.0, 0.0]).unwrap());
    let y = t.softmax_channels(big).unwrap();
    assert_eq!(t.value(y).data(), &[1.0, 0.0]);
    let one = t.constant(Tensor::zeros(&[1, 1, 2, 2]));
    assert!(t.softmax_channels(one).is_err());
}

#[test]
fn softmax_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = rand_tensor(&mut rng, &[2, 4, 3, 3]).with_requires_grad(true);
    let probe = rand_tensor(&mut rng, &[2, 4, 3, 3]);
    let r = grad_check(&[x], &GradCheck::default(), |t, v| {
        let y = t.softmax_channels(v[0])?;
        t.inner_product(y, probe.data())
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn backward_basics() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::new(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
    let s = t.sum(x);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1.0; 4]);

    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap());
    let y = t.add(x, x).unwrap();
    let s = t.sum(y);
    t.backward(s).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[2.0; 3]);
    assert!(matches!(t.backward(y), Err(Error::Shape { .. })));
}

#[test]
fn unreachable_and_constant_leaves_get_no_grad() {
    let mut t = Tape::<f64>::new();
    let x = t.param(Tensor::full(&[2], 1.0));
    let c = t.constant(Tensor::full(&[2], 1.0));
    let unused = t.param(Tensor::full(&[2], 1.0));
    let y = t.add(x, c).unwrap();
    let s = t.sum(y);
    t.backward(s).unwrap();
    assert!(t.grad(x).is_some());
    assert!(t.grad(c).is_none());
    assert!(t.grad(unused).is_none());
}

#[test]
fn grad_check_linear_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&mut rng, &[1, 2, 4, 4]).with_requires_grad(true);
    let r = grad_check(&[x], &GradCheck::default(), |t, v| {
        let s = t.scale(v[0], 3.0);
        Ok(t.sum(s))
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-10, "{r:?}");
}

#[test]
fn grad_check_conv_relu_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = rand_tensor(&mut rng, &[2, 2, 6, 6]).with_requires_grad(true);
    let w = rand_tensor(&mut rng, &[3, 2, 3, 3]).with_requires_grad(true);
    let b = rand_tensor(&mut rng, &[3]).with_requires_grad(true);
    let r = grad_check(&[x, w, b], &GradCheck::default(), |t, v| {
        let y = t.conv2d(v[0], v[1], v[2], 2)?;
        let y = t.relu(y);
        Ok(t.sum(y))
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn grad_check_maxpool_at_tie_uses_jitter() {
    let x = Tensor::full(&[1, 1, 4, 4], 1.0).with_requires_grad(true);
    let cfg = GradCheck { jitter: Some(1e-2), seed: 3, ..GradCheck::default() };
    let r = grad_check(&[x], &cfg, |t, v| {
        let y = t.maxpool2d(v[0])?;
        let y = t.scale(y, 2.0);
        Ok(t.sum(y))
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-6, "{r:?}");
}

#[test]
fn grad_check_reports_non_finite_node() {
    let x = Tensor::new(&[1], vec![1.0]).unwrap().with_requires_grad(true);
    let err = grad_check(&[x], &GradCheck::default(), |t, v| {
        let y = t.scale(v[0], f64::INFINITY);
        Ok(t.sum(y))
    })
    .unwrap_err();
    assert!(matches!(err, Error::NonFinite { node: 1, op: "scale" }), "{err}");
}

proptest! {
    #[test]
    fn dilation_inflation_equivalence(seed in 0u64..1000, d in 1usize..4, k in prop::sample::select(vec![1usize, 3, 5])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xt = rand_tensor(&mut rng, &[1, 2, 7, 9]);
        let wt = rand_tensor(&mut rng, &[2, 2, k, k]);
        let run = |w: Tensor<f64>, d: usize| {
            let mut t = Tape::<f64>::new();
            let (x, w, b) = (t.constant(xt.clone()), t.constant(w), t.constant(Tensor::zeros(&[2])));
            let y = t.conv2d(x, w, b, d).unwrap();
            t.value(y).data().to_vec()
        };
        let a = run(wt.clone(), d);
        let b = run(inflate(&wt, d), 1);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(vals in prop::collection::vec(-50.0f64..50.0, 12)) {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::new(&[1, 3, 2, 2], vals).unwrap());
        let y = t.softmax_channels(x).unwrap();
        let d = t.value(y).data();
        for p in 0..4 {
            let s: f64 = (0..3).map(|c| d[c * 4 + p]).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
