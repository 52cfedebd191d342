use a2dmn::losses::{total_loss, LossConfig};
use a2dmn::model::{self, shapes, ArchConfig, Head, Network, ParamStore, ParamVars};
use a2dmn::{Error, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_images(seed: u64, n: usize, size: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[n, 1, size, size], |_| rng.random_range(0.0..1.0))
}

fn zeroed(mut store: ParamStore<f32>) -> ParamStore<f32> {
    for (_, t) in store.iter_mut() {
        t.data_mut().fill(0.0);
    }
    store
}

#[test]
fn default_head_has_five_kernels_over_last_up_width() {
    let shapes = shapes::param_shapes(&ArchConfig::default(), Head::Semantic);
    let head = shapes.iter().find(|(n, _)| n == "head.w").unwrap();
    assert_eq!(head.1, vec![5, 32, 1, 1]);
}

#[test]
fn build_is_deterministic() {
    let cfg = ArchConfig::desk();
    let a = model::build(&cfg, Head::Semantic, 11).unwrap();
    let b = model::build(&cfg, Head::Semantic, 11).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    let c = model::build(&cfg, Head::Semantic, 12).unwrap();
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn build_rejects_invalid_config() {
    let bad_size = ArchConfig { image_size: 72, ..ArchConfig::desk() };
    assert!(matches!(model::build(&bad_size, Head::Semantic, 0), Err(Error::Config { field: "image_size", .. })));
    let too_small = ArchConfig::desk().with_scale(64, 0.01);
    assert!(matches!(model::build(&too_small, Head::Semantic, 0), Err(Error::Config { field: "channel_scale", .. })));
}

/// Parameter count at scale 1/8 written out layer by layer by hand.
#[test]
fn desk_parameter_count_matches_hand_enumeration() {
    let conv = |o: usize, i: usize, k: usize| o * i * k * k + o;
    let b = [4, 8, 16, 32, 64];
    let c = [4, 8, 16, 32];
    let a3 = [15, 13, 11, 9];
    let a5 = [1, 5, 1, 1];
    let y = [32, 16, 8, 4];
    let m2 = [1, 1, 1, 5];
    let mut total = 0;
    let mut cin = 1;
    for s in 0..5 {
        total += conv(b[s], cin, 3) + conv(b[s], b[s], 3);
        cin = b[s];
    }
    for k in 0..4 {
        total += 2 * conv(c[k], b[k], 3) + conv(c[k], b[k], a3[k]);
        total += conv(c[k], 3 * c[k] + b[k], 1) + conv(c[k], c[k], a5[k]);
    }
    let mut din = 64;
    for j in 0..4 {
        let s = 3 - j;
        total += din * y[j] * 4 + y[j];
        total += conv(y[j], y[j] + b[s] + c[s], 3) + conv(y[j], y[j], m2[j]) + conv(y[j], y[j] + b[s], 3);
        din = y[j];
    }
    total += conv(5, 4, 1);
    let store = model::build(&ArchConfig::desk(), Head::Semantic, 0).unwrap();
    assert_eq!(store.num_scalars(), total);
    assert_eq!(shapes::param_count(&ArchConfig::desk(), Head::Semantic), total);
}

#[test]
fn stage_one_shapes_at_full_width() {
    let cfg = ArchConfig::default().with_scale(64, 1.0);
    let store = model::build(&cfg, Head::Semantic, 0).unwrap();
    let mut tape = Tape::<f32>::new();
    let pv = ParamVars::register(&mut tape, &store, false);
    let x = tape.constant(random_images(0, 1, 64));
    let mut net = Network { cfg: &cfg, tape: &mut tape, params: &pv, trace: None };
    let out = net.basic_block(x, 0).unwrap();
    assert_eq!(tape.value(out.c1).shape(), &[1, 32, 64, 64]);
    assert_eq!(tape.value(out.c2).shape(), &[1, 32, 64, 64]);
    assert_eq!(tape.value(out.pooled.unwrap()).shape(), &[1, 32, 32, 32]);
}

#[test]
fn zero_params_give_zero_block_outputs() {
    let cfg = ArchConfig::desk();
    let store = zeroed(model::build(&cfg, Head::Semantic, 0).unwrap());
    let mut tape = Tape::<f32>::new();
    let pv = ParamVars::register(&mut tape, &store, false);
    let x = tape.constant(Tensor::zeros(&[2, 1, 64, 64]));
    let mut net = Network { cfg: &cfg, tape: &mut tape, params: &pv, trace: None };
    let s1 = net.basic_block(x, 0).unwrap();
    let s2 = net.basic_block(s1.pooled.unwrap(), 1).unwrap();
    let d = net.dme_block(s1.c2, 0).unwrap();
    // at 1/8 width stage 2 has as many channels as up block 3 emits
    let u = net.up_block(s2.c2, d, s1.c1, s1.c2, 3).unwrap();
    assert_eq!(tape.value(u).shape(), &[2, 4, 64, 64]);
    for v in [s1.c1, s1.c2, s1.pooled.unwrap(), d, u] {
        assert!(tape.value(v).data().iter().all(|&e| e == 0.0));
    }
}

#[test]
fn pooled_extent_is_half_of_c2() {
    let cfg = ArchConfig::desk();
    let store = model::build(&cfg, Head::Semantic, 2).unwrap();
    let (tape, trace, _) = model::forward_traced(&cfg, &store, Head::Semantic, &random_images(1, 1, 64)).unwrap();
    for s in 1..=4 {
        let c2 = tape.value(trace.get(&format!("enc.b{s}.c2")).unwrap()).shape().to_vec();
        let p = tape.value(trace.get(&format!("enc.b{s}.pool")).unwrap()).shape().to_vec();
        assert_eq!((p[2] * 2, p[3] * 2), (c2[2], c2[3]));
    }
    assert!(trace.get("enc.b5.pool").is_none());
}

#[test]
fn dme_block_one_at_full_width() {
    let cfg = ArchConfig::default().with_scale(64, 1.0);
    let store = model::build(&cfg, Head::Semantic, 0).unwrap();
    let mut tape = Tape::<f32>::new();
    let pv = ParamVars::register(&mut tape, &store, false);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = tape.constant(Tensor::from_fn(&[1, 32, 64, 64], |_| rng.random_range(0.0..1.0)));
    let mut trace = model::Trace::default();
    let mut net = Network { cfg: &cfg, tape: &mut tape, params: &pv, trace: Some(&mut trace) };
    let skip = net.dme_block(x, 0).unwrap();
    assert_eq!(tape.value(trace.get("dme.1.concat").unwrap()).shape(), &[1, 128, 64, 64]);
    assert_eq!(tape.value(trace.get("dme.1.proj").unwrap()).shape(), &[1, 32, 64, 64]);
    assert_eq!(tape.value(skip).shape(), &[1, 32, 64, 64]);
}

/// Delta branch kernels, an averaging projection and an identity skip
/// convolution turn the block into the identity on nonnegative inputs.
#[test]
fn dme_block_with_constructed_weights_is_identity() {
    let cfg = ArchConfig::desk();
    let mut store = zeroed(model::build(&cfg, Head::Semantic, 0).unwrap());
    let c = cfg.dme(0);
    assert_eq!(c, cfg.basic(0));
    let delta = |k: usize| {
        Tensor::from_fn(&[c, c, k, k], |i| {
            let (o, rest) = (i / (c * k * k), i % (c * k * k));
            let (ci, tap) = (rest / (k * k), rest % (k * k));
            if o == ci && tap == (k * k) / 2 { 1.0 } else { 0.0 }
        })
    };
    for (name, k) in [("branch1", 3), ("branch2", 3), ("branch3", cfg.large_kernel_sizes[0]), ("a5", cfg.skip_kernel_sizes[0])] {
        *store.get_mut(&format!("dme.1.{name}.w")).unwrap() = delta(k);
    }
    *store.get_mut("dme.1.proj.w").unwrap() = Tensor::from_fn(&[c, 4 * c, 1, 1], |i| {
        let (o, ci) = (i / (4 * c), i % (4 * c));
        if ci % c == o { 0.25 } else { 0.0 }
    });
    let mut tape = Tape::<f32>::new();
    let pv = ParamVars::register(&mut tape, &store, false);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xt = Tensor::from_fn(&[2, c, 64, 64], |_| rng.random_range(0.0..1.0f32));
    let x = tape.constant(xt.clone());
    let skip = Network { cfg: &cfg, tape: &mut tape, params: &pv, trace: None }.dme_block(x, 0).unwrap();
    for (a, b) in tape.value(skip).data().iter().zip(xt.data()) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn dilated_branch_receptive_fields() {
    let layers = shapes::layers(&ArchConfig::default(), Head::Semantic);
    let rf = |n: &str| layers.iter().find(|l| l.name == n).unwrap().receptive_field();
    assert_eq!(rf("dme.1.branch1"), 5);
    assert_eq!(rf("dme.1.branch2"), 9);
    assert_eq!(rf("dme.1.branch3"), 15);
    assert_eq!(rf("dme.4.branch3"), 9);
}

#[test]
fn up_block_widths_and_extents() {
    let cfg = ArchConfig::desk();
    let store = model::build(&cfg, Head::Semantic, 5).unwrap();
    let (tape, trace, _) = model::forward_traced(&cfg, &store, Head::Semantic, &random_images(2, 1, 64)).unwrap();
    let mut prev = tape.value(trace.get("enc.b5.c2").unwrap()).shape()[2];
    for (j, y) in [32, 16, 8, 4].into_iter().enumerate() {
        let s = tape.value(trace.get(&format!("dec.u{}.t3", j + 1)).unwrap()).shape().to_vec();
        assert_eq!(s[1], y);
        assert_eq!(s[2], 2 * prev);
        prev = s[2];
    }
    let full = ArchConfig::default();
    assert_eq!(full.up_widths, [256, 128, 64, 32]);
    let u4 = shapes::layers(&full, Head::Semantic).into_iter().find(|l| l.name == "dec.u4.conv3").unwrap();
    assert_eq!(u4.out_ch, 32);
}

#[test]
fn traced_shapes_match_static_enumeration() {
    for (cfg, n) in [(ArchConfig::desk(), 2), (ArchConfig::default().with_scale(32, 0.0625), 1)] {
        for head in [Head::Semantic, Head::Binary] {
            let store = model::build(&cfg, head, 1).unwrap();
            let (tape, trace, _) = model::forward_traced(&cfg, &store, head, &random_images(3, n, cfg.image_size)).unwrap();
            let expected = shapes::activation_shapes(&cfg, head, n);
            assert_eq!(trace.entries.len(), expected.len());
            for ((name, v), (ename, eshape)) in trace.entries.iter().zip(&expected) {
                assert_eq!(name, ename);
                assert_eq!(tape.value(*v).shape(), &eshape[..], "{name}");
            }
        }
    }
}

#[test]
fn forward_output_is_a_distribution() {
    let cfg = ArchConfig::desk();
    let store = model::build(&cfg, Head::Semantic, 6).unwrap();
    let probs = model::forward(&cfg, &store, &random_images(4, 2, 64)).unwrap();
    assert_eq!(probs.shape(), &[2, 5, 64, 64]);
    let plane = 64 * 64;
    for b in 0..2 {
        for p in 0..plane {
            let s: f32 = (0..5).map(|c| probs.data()[(b * 5 + c) * plane + p]).sum();
            assert!((s - 1.0).abs() < 1e-5);
            assert!((0..5).all(|c| probs.data()[(b * 5 + c) * plane + p] >= 0.0));
        }
    }
}

#[test]
fn forward_rejects_wrong_image_size() {
    let cfg = ArchConfig::desk();
    let store = model::build(&cfg, Head::Semantic, 6).unwrap();
    assert!(matches!(model::forward(&cfg, &store, &random_images(0, 1, 32)), Err(Error::Shape { .. })));
}

#[test]
fn batch_items_are_independent() {
    let cfg = ArchConfig::desk();
    let store = model::build(&cfg, Head::Semantic, 7).unwrap();
    let one = random_images(5, 1, 64);
    let two = Tensor::stack_batch(&[one.clone(), one.clone()]).unwrap();
    let out = model::forward(&cfg, &store, &two).unwrap();
    let half = out.numel() / 2;
    assert_eq!(&out.data()[..half], &out.data()[half..]);
    assert_eq!(model::forward(&cfg, &store, &one).unwrap().data(), &out.data()[..half]);
}

/// Zero biases and a zero image leave every activation at zero, so the output
/// is the same distribution at every pixel.
#[test]
fn zero_image_gives_spatially_constant_output() {
    let cfg = ArchConfig::desk();
    let store = model::build(&cfg, Head::Semantic, 8).unwrap();
    let out = model::forward(&cfg, &store, &Tensor::zeros(&[1, 1, 64, 64])).unwrap();
    let plane = 64 * 64;
    for c in 0..5 {
        let ch = &out.data()[c * plane..(c + 1) * plane];
        assert!(ch.iter().all(|&v| v == ch[0]));
    }
}

#[test]
fn binary_head_outputs() {
    let cfg = ArchConfig::desk();
    let mut store = model::build(&cfg, Head::Binary, 9).unwrap();
    let x = random_images(6, 2, 64);
    let out = model::binary_head(&cfg, &store, &x).unwrap();
    assert_eq!(out.shape(), &[2, 1, 64, 64]);
    assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    store.get_mut("head.w").unwrap().data_mut().fill(0.0);
    let out = model::binary_head(&cfg, &store, &x).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.5));
}

#[test]
fn semantic_and_binary_trunks_agree() {
    let cfg = ArchConfig::desk();
    let sem = model::build(&cfg, Head::Semantic, 10).unwrap();
    let mut bin = model::build(&cfg, Head::Binary, 99).unwrap();
    for (name, t) in bin.iter_mut() {
        if !name.starts_with("head.") {
            *t = sem.get(name).unwrap().clone();
        }
    }
    let x = random_images(7, 1, 64);
    let (ts, trs, _) = model::forward_traced(&cfg, &sem, Head::Semantic, &x).unwrap();
    let (tb, trb, _) = model::forward_traced(&cfg, &bin, Head::Binary, &x).unwrap();
    for (name, v) in &trs.entries {
        if name.starts_with("head.") {
            continue;
        }
        assert_eq!(ts.value(*v).data(), tb.value(trb.get(name).unwrap()).data(), "{name}");
    }
}

#[test]
fn encoder_transfer() {
    let cfg = ArchConfig::desk();
    let pre = model::build(&cfg, Head::Binary, 1).unwrap();
    let fresh = model::build(&cfg, Head::Semantic, 2).unwrap();
    let mut target = fresh.clone();
    target.load_encoder(&pre.encoder_subset()).unwrap();
    for (name, t) in target.iter() {
        if model::is_encoder_param(name) {
            assert_eq!(t.data(), pre.get(name).unwrap().data(), "{name}");
        } else {
            assert_eq!(t.data(), fresh.get(name).unwrap().data(), "{name}");
        }
    }
    let mut again = target.clone();
    again.load_encoder(&target.encoder_subset()).unwrap();
    assert_eq!(again.to_bytes(), target.to_bytes());

    let other = model::build(&ArchConfig::desk().with_scale(64, 0.25), Head::Binary, 1).unwrap();
    assert!(matches!(target.load_encoder(&other.encoder_subset()), Err(Error::ParamShapes(_))));
    let mut partial = pre.encoder_subset();
    partial = {
        let mut p = ParamStore::new();
        for (n, t) in partial.iter().filter(|(n, _)| *n != "dme.2.a5.w") {
            p.insert(n, t.clone()).unwrap();
        }
        p
    };
    match target.load_encoder(&partial) {
        Err(Error::MissingParams(names)) => assert_eq!(names, vec!["dme.2.a5.w".to_string()]),
        other => panic!("expected missing parameter error, got {other:?}"),
    }
}

#[test]
fn transferred_encoder_reproduces_stage_activations() {
    let cfg = ArchConfig::desk();
    let pre = model::build(&cfg, Head::Binary, 3).unwrap();
    let mut sem = model::build(&cfg, Head::Semantic, 4).unwrap();
    sem.load_encoder(&pre.encoder_subset()).unwrap();
    let x = random_images(8, 1, 64);
    let (tp, trp, _) = model::forward_traced(&cfg, &pre, Head::Binary, &x).unwrap();
    let (tsem, trsem, _) = model::forward_traced(&cfg, &sem, Head::Semantic, &x).unwrap();
    for s in 1..=5 {
        for a in ["c1", "c2"] {
            let name = format!("enc.b{s}.{a}");
            let (p, q) = (tp.value(trp.get(&name).unwrap()), tsem.value(trsem.get(&name).unwrap()));
            for (u, v) in p.data().iter().zip(q.data()) {
                assert!((u - v).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn checkpoint_round_trip_is_byte_exact() {
    let cfg = ArchConfig::desk();
    let store = model::build(&cfg, Head::Semantic, 12).unwrap();
    let bytes = store.to_bytes();
    assert_eq!(&bytes[..4], b"A2DM");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
    assert_eq!(u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize, store.len());
    let back = ParamStore::from_bytes(&bytes).unwrap();
    assert_eq!(back, store);
    assert_eq!(back.to_bytes(), bytes);
    let x = random_images(9, 1, 64);
    assert_eq!(
        model::forward(&cfg, &store, &x).unwrap().data(),
        model::forward(&cfg, &back, &x).unwrap().data()
    );
    assert!(ParamStore::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(ParamStore::from_bytes(&bad).is_err());
}

#[test]
fn every_parameter_receives_gradient() {
    let cfg = ArchConfig::desk();
    let store = model::build(&cfg, Head::Semantic, 13).unwrap();
    let mut tape = Tape::<f32>::new();
    let pv = ParamVars::register(&mut tape, &store, true);
    let x = tape.constant(random_images(10, 2, 64));
    let probs = Network { cfg: &cfg, tape: &mut tape, params: &pv, trace: None }.forward(x, Head::Semantic).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let plane = 64 * 64;
    let mut target = Tensor::zeros(&[2, 5, 64, 64]);
    for b in 0..2 {
        for p in 0..plane {
            let c = rng.random_range(0..5);
            target.data_mut()[(b * 5 + c) * plane + p] = 1.0;
        }
    }
    let image = tape.value(x).clone();
    let (tv, iv) = (tape.constant(target), tape.constant(image));
    let loss = total_loss(&mut tape, probs, tv, iv, &LossConfig::default()).unwrap();
    tape.backward(loss.total).unwrap();
    for (name, v) in pv.iter() {
        let g = tape.grad(v).unwrap_or_else(|| panic!("{name} has no gradient"));
        assert!(g.iter().any(|&e| e != 0.0), "{name} has an all-zero gradient");
    }
}
