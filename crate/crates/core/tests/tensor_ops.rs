use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taylorcast_core::nn::ConvSpec;
use taylorcast_core::tensor::{check_gradients, GradCheck, Tape, Tensor};

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Direct nested-loop cross-correlation with zero padding.
fn conv_oracle(x: &Tensor, w: &Tensor, b: &[f64], spec: &ConvSpec) -> Tensor {
    let xs = x.shape();
    let (n, cin, it, ih, iw) = (xs[0], xs[1], xs[2], xs[3], xs[4]);
    let [kt, kh, kw] = spec.kernel;
    let [st, sh, sw] = spec.stride;
    let [pt, ph, pw] = spec.padding;
    let ot = (it + 2 * pt - kt) / st + 1;
    let oh = (ih + 2 * ph - kh) / sh + 1;
    let ow = (iw + 2 * pw - kw) / sw + 1;
    let cout = spec.out_channels;
    let mut y = vec![0.0; n * cout * ot * oh * ow];
    let xd = x.data();
    let wd = w.data();
    for bn in 0..n {
        for co in 0..cout {
            for t in 0..ot {
                for h in 0..oh {
                    for q in 0..ow {
                        let mut acc = b[co];
                        for ci in 0..cin {
                            for a in 0..kt {
                                for c in 0..kh {
                                    for d in 0..kw {
                                        let ti = (t * st + a) as isize - pt as isize;
                                        let hi = (h * sh + c) as isize - ph as isize;
                                        let wi = (q * sw + d) as isize - pw as isize;
                                        if ti < 0
                                            || hi < 0
                                            || wi < 0
                                            || ti >= it as isize
                                            || hi >= ih as isize
                                            || wi >= iw as isize
                                        {
                                            continue;
                                        }
                                        let xi = (((bn * cin + ci) * it + ti as usize) * ih
                                            + hi as usize)
                                            * iw
                                            + wi as usize;
                                        let wi_ = (((co * cin + ci) * kt + a) * kh + c) * kw + d;
                                        acc += xd[xi] * wd[wi_];
                                    }
                                }
                            }
                        }
                        y[(((bn * cout + co) * ot + t) * oh + h) * ow + q] = acc;
                    }
                }
            }
        }
    }
    Tensor::new(&[n, cout, ot, oh, ow], y).unwrap()
}

fn run_conv(x: &Tensor, w: &Tensor, b: &Tensor, spec: &ConvSpec) -> Tensor {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone()).unwrap();
    let wv = tape.input(w.clone()).unwrap();
    let bv = tape.input(b.clone()).unwrap();
    let y = tape.conv3d(xv, wv, Some(bv), spec).unwrap();
    tape.value(y).clone()
}

#[test]
fn conv3d_sum_of_ones() {
    let spec = ConvSpec::new(1, 1, [1, 3, 3]);
    let y = run_conv(
        &Tensor::ones(&[1, 1, 1, 3, 3]),
        &Tensor::ones(&[1, 1, 1, 3, 3]),
        &Tensor::zeros(&[1]),
        &spec,
    );
    assert_eq!(y.shape(), &[1, 1, 1, 1, 1]);
    assert_eq!(y.data(), &[9.0]);
}

#[test]
fn conv3d_identity_kernel_same_padding() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[1, 2, 4, 5, 5], &mut rng);
    let spec = ConvSpec::same(2, 2, [3, 3, 3]);
    let mut w = Tensor::zeros(&spec.weight_shape());
    for c in 0..2 {
        // center tap of kernel [c, c]
        let idx = ((c * 2 + c) * 3 + 1) * 9 + 4;
        w.data_mut()[idx] = 1.0;
    }
    let y = run_conv(&x, &w, &Tensor::zeros(&[2]), &spec);
    assert_eq!(y, x);
}

#[test]
fn conv3d_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let specs = [
        ConvSpec::new(2, 3, [3, 3, 3]),
        ConvSpec::same(2, 3, [3, 3, 3]),
        ConvSpec::new(2, 3, [2, 3, 3])
            .with_stride([1, 2, 2])
            .with_padding([0, 1, 1]),
        ConvSpec::new(2, 1, [4, 3, 3]).with_padding([0, 1, 1]),
        ConvSpec::new(2, 2, [1, 2, 3])
            .with_stride([2, 1, 2])
            .with_padding([1, 0, 2]),
    ];
    for spec in specs {
        let x = random(&[1, 2, 4, 5, 5], &mut rng);
        let w = random(&spec.weight_shape(), &mut rng);
        let b = random(&[spec.out_channels], &mut rng);
        let got = run_conv(&x, &w, &b, &spec);
        let want = conv_oracle(&x, &w, b.data(), &spec);
        assert_eq!(got.shape(), want.shape(), "{spec:?}");
        for (g, e) in got.data().iter().zip(want.data()) {
            assert!(
                (g - e).abs() <= 1e-12 * e.abs().max(1.0),
                "{spec:?}: {g} vs {e}"
            );
        }
    }
}

#[test]
fn same_padding_preserves_extents() {
    let spec = ConvSpec::same(1, 4, [3, 3, 3]);
    let y = run_conv(
        &Tensor::ones(&[2, 1, 6, 7, 5]),
        &Tensor::ones(&spec.weight_shape()),
        &Tensor::zeros(&[4]),
        &spec,
    );
    assert_eq!(y.shape(), &[2, 4, 6, 7, 5]);
}

#[test]
fn conv3d_rejects_wrong_channels() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::zeros(&[1, 2, 3, 3, 3])).unwrap();
    let spec = ConvSpec::new(3, 1, [1, 1, 1]);
    let w = tape.input(Tensor::zeros(&spec.weight_shape())).unwrap();
    assert!(tape.conv3d(x, w, None, &spec).is_err());
}

fn conv_layer_grad_error(spec: ConvSpec, x_shape: &[usize], seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(x_shape, &mut rng);
    let w = random(&spec.weight_shape(), &mut rng);
    let b = random(&[spec.out_channels], &mut rng);
    let cfg = GradCheck::default();
    let ex = {
        let (w, b) = (w.clone(), b.clone());
        check_gradients(
            move |t, xv| {
                let wv = t.input(w.clone())?;
                let bv = t.input(b.clone())?;
                t.conv3d(xv, wv, Some(bv), &spec)
            },
            &x,
            cfg,
        )
        .unwrap()
    };
    let ew = {
        let (x, b) = (x.clone(), b.clone());
        check_gradients(
            move |t, wv| {
                let xv = t.input(x.clone())?;
                let bv = t.input(b.clone())?;
                t.conv3d(xv, wv, Some(bv), &spec)
            },
            &w,
            cfg,
        )
        .unwrap()
    };
    let eb = check_gradients(
        move |t, bv| {
            let xv = t.input(x.clone())?;
            let wv = t.input(w.clone())?;
            t.conv3d(xv, wv, Some(bv), &spec)
        },
        &b,
        cfg,
    )
    .unwrap();
    (ex, ew, eb)
}

#[test]
fn conv3d_layer_gradients() {
    let (ex, ew, eb) = conv_layer_grad_error(ConvSpec::same(1, 2, [3, 3, 3]), &[1, 1, 4, 6, 6], 3);
    assert!(ex < 1e-4 && ew < 1e-4 && eb < 1e-4, "{ex} {ew} {eb}");
    let strided = ConvSpec::new(2, 2, [2, 3, 3])
        .with_stride([1, 2, 2])
        .with_padding([0, 1, 1]);
    let (ex, ew, eb) = conv_layer_grad_error(strided, &[1, 2, 3, 5, 6], 4);
    assert!(ex < 1e-4 && ew < 1e-4 && eb < 1e-4, "{ex} {ew} {eb}");
}

#[test]
fn conv_transpose_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = ConvSpec::new(2, 3, [1, 3, 3])
        .with_stride([1, 2, 2])
        .with_padding([0, 1, 1]);
    let x = random(&[1, 2, 1, 3, 3], &mut rng);
    let w = random(&spec.transposed_weight_shape(), &mut rng);
    let b = random(&[3], &mut rng);
    let cfg = GradCheck::default();
    let (w2, b2) = (w.clone(), b.clone());
    let ex = check_gradients(
        move |t, xv| {
            let wv = t.input(w2.clone())?;
            let bv = t.input(b2.clone())?;
            t.conv_transpose3d(xv, wv, Some(bv), &spec, [0, 1, 1])
        },
        &x,
        cfg,
    )
    .unwrap();
    let (x2, b2) = (x.clone(), b.clone());
    let ew = check_gradients(
        move |t, wv| {
            let xv = t.input(x2.clone())?;
            let bv = t.input(b2.clone())?;
            t.conv_transpose3d(xv, wv, Some(bv), &spec, [0, 1, 1])
        },
        &w,
        cfg,
    )
    .unwrap();
    let eb = check_gradients(
        move |t, bv| {
            let xv = t.input(x.clone())?;
            let wv = t.input(w.clone())?;
            t.conv_transpose3d(xv, wv, Some(bv), &spec, [0, 1, 1])
        },
        &b,
        cfg,
    )
    .unwrap();
    assert!(ex < 1e-4 && ew < 1e-4 && eb < 1e-4, "{ex} {ew} {eb}");
}

#[test]
fn elementwise_and_shape_op_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[2, 3, 4], &mut rng);
    let other = random(&[3, 4], &mut rng);
    let cfg = GradCheck::default();
    type Case = Box<
        dyn Fn(
            &mut Tape,
            taylorcast_core::tensor::Var,
        ) -> taylorcast_core::Result<taylorcast_core::tensor::Var>,
    >;
    let o = other.clone();
    let cases: Vec<(&str, Case)> = vec![
        ("sin", Box::new(|t, v| t.sin(v))),
        ("tanh", Box::new(|t, v| t.tanh(v))),
        ("sigmoid", Box::new(|t, v| t.sigmoid(v))),
        ("exp", Box::new(|t, v| t.exp(v))),
        ("leaky", Box::new(|t, v| t.leaky_relu(v, 0.2))),
        ("square", Box::new(|t, v| t.square(v))),
        ("scale", Box::new(|t, v| t.scale(v, -1.7))),
        ("mean", Box::new(|t, v| t.mean(v))),
        ("self-mul", Box::new(|t, v| t.mul(v, v))),
        ("mul-bcast", {
            let o = o.clone();
            Box::new(move |t, v| {
                let b = t.leaf(o.clone())?;
                t.mul(v, b)
            })
        }),
        (
            "sub-self-bcast",
            Box::new(|t, v| {
                let tail = t.narrow(v, 0, 1, 1)?;
                let tail = t.reshape(tail, &[3, 4])?;
                t.sub(v, tail)
            }),
        ),
        ("narrow", Box::new(|t, v| t.narrow(v, 1, 1, 2))),
        (
            "concat",
            Box::new(|t, v| {
                let a = t.narrow(v, 2, 0, 1)?;
                let s = t.sin(v)?;
                t.concat(&[s, a, v], 2)
            }),
        ),
        ("repeat", Box::new(|t, v| t.repeat_trailing(v, &[2, 3]))),
        (
            "matmul",
            Box::new(|t, v| {
                let a = t.reshape(v, &[6, 4])?;
                let b = t.reshape(v, &[4, 6])?;
                t.matmul(a, b)
            }),
        ),
    ];
    for (name, f) in cases {
        let err = check_gradients(f, &x, cfg).unwrap();
        assert!(err < 1e-4, "{name}: {err}");
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w1 = random(&[4, 8], &mut rng);
    let w2 = random(&[8, 8], &mut rng);
    let w3 = random(&[8, 2], &mut rng);
    let b1 = random(&[8], &mut rng);
    let x = random(&[5, 4], &mut rng);
    let mlp = |t: &mut Tape,
               x: taylorcast_core::tensor::Var,
               ws: [taylorcast_core::tensor::Var; 3],
               b1| {
        let h = t.matmul(x, ws[0])?;
        let h = t.add(h, b1)?;
        let h = t.tanh(h)?;
        let h = t.matmul(h, ws[1])?;
        let h = t.sigmoid(h)?;
        let y = t.matmul(h, ws[2])?;
        let y = t.square(y)?;
        t.mean(y)
    };
    // gradient w.r.t. the middle layer weights
    let err = check_gradients(
        |t, w| {
            let xv = t.input(x.clone())?;
            let a = t.input(w1.clone())?;
            let c = t.input(w3.clone())?;
            let b = t.input(b1.clone())?;
            mlp(t, xv, [a, w, c], b)
        },
        &w2,
        GradCheck::default(),
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transpose_is_adjoint_of_conv(seed in any::<u64>(), stride in 1usize..3, pad in 0usize..2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = ConvSpec::new(2, 3, [1, 3, 3])
            .with_stride([1, stride, stride])
            .with_padding([0, pad, pad]);
        let x = random(&[1, 2, 2, 7, 7], &mut rng);
        let w = random(&spec.weight_shape(), &mut rng);
        let out = spec.output_extents([2, 7, 7]).unwrap();
        let y = random(&[1, 3, out[0], out[1], out[2]], &mut rng);
        // output padding that restores the 7x7 input extent
        let op = (7 + 2 * pad - 3) % stride;
        let mut tape = Tape::new();
        let xv = tape.input(x.clone()).unwrap();
        let wv = tape.input(w).unwrap();
        let yv = tape.input(y.clone()).unwrap();
        let cx = tape.conv3d(xv, wv, None, &spec).unwrap();
        let ty = tape.conv_transpose3d(yv, wv, None, &ConvSpec { in_channels: 3, out_channels: 2, ..spec }, [0, op, op]).unwrap();
        prop_assert_eq!(tape.shape(ty), x.shape());
        let lhs: f64 = tape.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(tape.value(ty).data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn random_graphs_match_finite_differences(seed in any::<u64>(), ops in proptest::collection::vec(0u8..6, 1..6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[3, 2], &mut rng);
        let c = random(&[2], &mut rng);
        let err = check_gradients(
            |t, v| {
                let mut cur = v;
                let cv = t.input(c.clone())?;
                for &op in &ops {
                    cur = match op {
                        0 => t.sin(cur)?,
                        1 => t.tanh(cur)?,
                        2 => t.mul(cur, cv)?,
                        3 => t.add(cur, v)?,
                        4 => t.sigmoid(cur)?,
                        _ => t.mul(cur, v)?,
                    };
                }
                Ok(cur)
            },
            &x,
            GradCheck::default(),
        ).unwrap();
        prop_assert!(err < 1e-4, "{}", err);
    }
}
