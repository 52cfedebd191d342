use std::path::Path;

use a2dmn::data::{
    augment, crop, flip_horizontal, generate_dataset, generate_phantom, kfold_split, normalize, one_hot_to_mask,
    pad_to_square, preprocess, read_dataset, read_manifest, read_pgm, read_sample, resize, rotate, translate,
    write_dataset, write_pgm, write_sample, AugmentConfig, PhantomParams, Sample,
};
use a2dmn::metrics::iou;
use a2dmn::{ClassOrder, Error, TissueClass};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn order() -> ClassOrder {
    ClassOrder::default()
}

fn gradient_sample(w: usize, h: usize) -> Sample {
    let image = (0..w * h).map(|i| (i * 7 % 251) as u8).collect();
    let mask = (0..w * h).map(|i| ((i / w) * 5 / h) as u8).collect();
    Sample::new("g", 3, w, h, image, mask).unwrap()
}

#[test]
fn phantom_is_deterministic_and_ordered() {
    let p = PhantomParams::default();
    let a = generate_phantom(&p, 42).unwrap();
    assert_eq!(a, generate_phantom(&p, 42).unwrap());
    assert_ne!(a.image(), generate_phantom(&p, 43).unwrap().image());
    let o = order();
    // down every column: background, fat, mammary or tumor, muscle, background
    let rank = |l: u8, seen_tissue: bool| match o.class(l) {
        TissueClass::Background => if seen_tissue { 4 } else { 0 },
        TissueClass::Fat => 1,
        TissueClass::Mammary | TissueClass::Tumor => 2,
        TissueClass::Muscle => 3,
    };
    for x in 0..a.width() {
        let mut seen_tissue = false;
        let mut prev = 0;
        for y in 0..a.height() {
            let l = a.mask()[y * a.width() + x];
            seen_tissue |= o.class(l) != TissueClass::Background;
            let r = rank(l, seen_tissue);
            assert!(r >= prev, "column {x} row {y}");
            prev = r;
        }
    }
}

#[test]
fn no_tumor_gives_four_labels() {
    let p = PhantomParams { tumor_probability: 0.0, ..PhantomParams::default() };
    for seed in 0..20 {
        let s = generate_phantom(&p, seed).unwrap();
        assert_eq!(s.labels_present().len(), 4);
        assert!(!s.mask().contains(&order().label(TissueClass::Tumor)));
    }
}

#[test]
fn degenerate_params_are_rejected() {
    let p = PhantomParams { interfaces: [0.1, 0.5, 0.4, 0.9], ..PhantomParams::default() };
    assert!(matches!(generate_phantom(&p, 0), Err(Error::Config { .. })));
    let p = PhantomParams { interfaces: [0.1, 0.12, 0.7, 0.9], ..PhantomParams::default() };
    assert!(generate_phantom(&p, 0).is_err());
    let p = PhantomParams { tumor_probability: 1.5, ..PhantomParams::default() };
    assert!(generate_phantom(&p, 0).is_err());
}

#[test]
fn class_shares_at_defaults() {
    let p = PhantomParams::default();
    let mut lo = [f64::INFINITY; 5];
    let mut hi = [0.0f64; 5];
    for seed in 0..1000 {
        let s = generate_phantom(&p, seed).unwrap();
        let n = s.mask().len() as f64;
        for l in 0..5u8 {
            let share = s.mask().iter().filter(|&&m| m == l).count() as f64 / n;
            lo[l as usize] = lo[l as usize].min(share);
            hi[l as usize] = hi[l as usize].max(share);
        }
    }
    eprintln!("share ranges: {lo:?} {hi:?}");
    let bg = order().background() as usize;
    for l in 0..5 {
        let (a, b) = if l == bg { (0.20, 0.60) } else { (0.05, 0.45) };
        assert!(lo[l] >= a && hi[l] <= b, "label {l}: [{}, {}]", lo[l], hi[l]);
    }
}

#[test]
fn pad_examples() {
    let o = order();
    let sq = gradient_sample(6, 6);
    assert_eq!(pad_to_square(&sq, &o), sq);
    let wide = gradient_sample(100, 80);
    let p = pad_to_square(&wide, &o);
    assert_eq!((p.width(), p.height()), (100, 100));
    assert!(p.image()[..10 * 100].iter().all(|&v| v == 0));
    assert!(p.mask()[90 * 100..].iter().all(|&v| v == o.background()));
    assert_eq!(crop(&p, 100, 80).unwrap(), wide);
    let tall = gradient_sample(80, 100);
    let p = pad_to_square(&tall, &o);
    for y in 0..100 {
        assert!(p.image()[y * 100..y * 100 + 10].iter().all(|&v| v == 0));
        assert!(p.image()[y * 100 + 90..(y + 1) * 100].iter().all(|&v| v == 0));
    }
    // odd remainder: extra column on the trailing side
    let odd = gradient_sample(7, 4);
    let p = pad_to_square(&odd, &o);
    assert_eq!((p.width(), p.height()), (7, 7));
    assert!(p.mask()[..7].iter().all(|&v| v == 0));
    assert!(p.mask()[5 * 7..].iter().all(|&v| v == 0));
    assert_eq!(crop(&p, 7, 4).unwrap(), odd);
}

#[test]
fn resize_examples() {
    let s = pad_to_square(&generate_phantom(&PhantomParams::default(), 1).unwrap(), &order());
    assert_eq!(resize(&s, s.width()).unwrap(), s);
    for size in [16, 37, 64, 150] {
        let r = resize(&s, size).unwrap();
        assert_eq!((r.width(), r.height()), (size, size));
        let before = s.labels_present();
        assert!(r.labels_present().iter().all(|l| before.contains(l)));
    }
    let flat = Sample::new("c", 0, 9, 9, vec![77; 81], vec![2; 81]).unwrap();
    for size in [4, 9, 20] {
        assert!(resize(&flat, size).unwrap().image().iter().all(|&v| v == 77));
    }
    assert!(resize(&gradient_sample(5, 4), 8).is_err());
}

#[test]
fn augment_examples() {
    let o = order();
    let s = preprocess(&generate_phantom(&PhantomParams::default(), 5).unwrap(), 64, &o).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(augment(&s, &AugmentConfig::identity(), &o, &mut rng).unwrap(), s);
    assert_eq!(flip_horizontal(&flip_horizontal(&s)), s);
    assert_eq!(translate(&translate(&s, 0, 0, &o), 0, 0, &o), s);
    let t = translate(&s, 3, -2, &o);
    assert_eq!(t.image()[10 * 64 + 10], s.image()[12 * 64 + 7]);
    let cfg = AugmentConfig::default();
    for _ in 0..50 {
        let a = augment(&s, &cfg, &o, &mut rng).unwrap();
        let before = s.labels_present();
        assert!(a.labels_present().iter().all(|l| before.contains(l) || *l == o.background()));
    }
    assert!(augment(&gradient_sample(5, 4), &cfg, &o, &mut rng).is_err());
}

#[test]
fn rotation_round_trip_keeps_masks() {
    let o = order();
    let mut worst = 1.0f64;
    for seed in 0..20 {
        let s = preprocess(&generate_phantom(&PhantomParams::default(), seed).unwrap(), 64, &o).unwrap();
        let back = rotate(&rotate(&s, 20.0, &o), -20.0, &o);
        let (a, b) = (s.label_map(), back.label_map());
        for l in 0..5u8 {
            if let Some(v) = iou(&a, &b, l).unwrap() {
                worst = worst.min(v);
            }
        }
    }
    eprintln!("worst rotation round-trip IoU: {worst}");
    assert!(worst >= 0.9, "{worst}");
}

#[test]
fn normalize_examples() {
    let s = Sample::new("n", 0, 3, 1, vec![0, 255, 51], vec![0, 4, 3]).unwrap();
    let (img, oh) = normalize::<f64>(&s);
    assert_eq!(img.shape(), &[1, 1, 3]);
    assert_eq!(img.data(), &[0.0, 1.0, 0.2]);
    assert_eq!(oh.shape(), &[5, 1, 3]);
    for i in 0..3 {
        let sum: f64 = (0..5).map(|c| oh.data()[c * 3 + i]).sum();
        assert_eq!(sum, 1.0);
    }
    assert_eq!(one_hot_to_mask(&oh).unwrap(), s.mask());
    let p = generate_phantom(&PhantomParams::default(), 9).unwrap();
    assert_eq!(one_hot_to_mask(&normalize::<f32>(&p).1).unwrap(), p.mask());
}

#[test]
fn kfold_examples() {
    let ids: Vec<String> = (0..325).map(|i| format!("id{i}")).collect();
    let folds = kfold_split(&ids, 5, 0.15, 7).unwrap();
    assert_eq!(folds.len(), 5);
    let mut all: Vec<String> = Vec::new();
    for f in &folds {
        assert_eq!(f.test.len(), 65);
        assert_eq!(f.val.len(), 39);
        assert_eq!(f.train.len(), 221);
        let mut within: Vec<&String> = f.test.iter().chain(&f.train).chain(&f.val).collect();
        within.sort();
        within.dedup();
        assert_eq!(within.len(), 325);
        all.extend(f.test.iter().cloned());
    }
    all.sort();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(all, sorted);
    assert_eq!(folds, kfold_split(&ids, 5, 0.15, 7).unwrap());
    assert_ne!(folds, kfold_split(&ids, 5, 0.15, 8).unwrap());
    assert!(kfold_split(&ids[..4], 5, 0.15, 0).is_err());
    let uneven = kfold_split(&ids[..12], 5, 0.15, 0).unwrap();
    assert_eq!(uneven.iter().map(|f| f.test.len()).collect::<Vec<_>>(), vec![3, 3, 2, 2, 2]);
}

#[test]
fn pgm_and_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_phantom(&PhantomParams::default(), 3).unwrap();
    let (ip, mp) = (dir.path().join("i.pgm"), dir.path().join("m.pgm"));
    write_sample(&s, &ip, &mp).unwrap();
    assert_eq!(read_sample(&s.id, s.seed, &ip, &mp).unwrap(), s);
    let bytes = std::fs::read(&ip).unwrap();
    assert!(bytes.starts_with(b"P5\n96 80\n255\n"));

    write_pgm(&mp, 2, 2, &[0, 1, 7, 2]).unwrap();
    assert!(matches!(read_sample("x", 0, &ip, &mp), Err(Error::Format { .. })));
    let bad = dir.path().join("bad.pgm");
    std::fs::write(&bad, b"P2\n2 2\n255\n0 0 0 0").unwrap();
    assert!(read_pgm(&bad).is_err());
    std::fs::write(&bad, b"P5\n2 2\n255\n\x00\x00\x00").unwrap();
    assert!(read_pgm(&bad).is_err());
    std::fs::write(&bad, b"P5\n# comment\n2 1\n255\n\x05\x06").unwrap();
    assert_eq!(read_pgm(&bad).unwrap(), (2, 1, vec![5, 6]));
}

#[test]
fn dataset_with_325_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = PhantomParams { width: 24, height: 20, ..PhantomParams::default() };
    let samples = generate_dataset(&p, 325, 11).unwrap();
    write_dataset(dir.path(), &samples).unwrap();
    assert_eq!(read_manifest(&dir.path().join("manifest.csv")).unwrap().len(), 325);
    assert!(Path::new(&dir.path().join("images/phantom_0000.pgm")).exists());
    assert_eq!(read_dataset(dir.path()).unwrap(), samples);
    assert_eq!(generate_dataset(&p, 325, 11).unwrap(), samples);
}

#[test]
fn binary_collapse() {
    let o = order();
    let s = generate_phantom(&PhantomParams::default(), 2).unwrap();
    let b = s.collapse_binary(&o);
    assert!(b.labels_present().len() <= 2);
    b.check_binary().unwrap();
    assert!(s.check_binary().is_err());
    let tumor = o.label(TissueClass::Tumor);
    for (&m, &bm) in s.mask().iter().zip(b.mask()) {
        assert_eq!(bm == 1, m == tumor);
    }
}

proptest! {
    #[test]
    fn pad_crop_round_trip(w in 1usize..30, h in 1usize..30, seed in 0u64..100) {
        let image = (0..w * h).map(|i| ((i as u64 * 31 + seed) % 256) as u8).collect();
        let mask = (0..w * h).map(|i| ((i as u64 + seed) % 5) as u8).collect();
        let s = Sample::new("p", seed, w, h, image, mask).unwrap();
        let p = pad_to_square(&s, &order());
        prop_assert_eq!(p.width(), w.max(h));
        prop_assert_eq!(crop(&p, w, h).unwrap(), s);
    }
}
