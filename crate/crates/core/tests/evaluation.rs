use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reconstsum::eval::{keyshot_prf, ssim, top_k_accuracy, GrayImage};
use reconstsum::kts;
use reconstsum::model::FeatureSequence;
use reconstsum::numgrad::Matrix;
use reconstsum::selection::{ScoreKind, ScoreVector};
use reconstsum::summarizer;
use reconstsum::trainer::{train_video, TrainConfig};

fn noisy_copy(rng: &mut ChaCha8Rng, base: &[u8], amp: i32) -> Vec<u8> {
    base.iter()
        .map(|&v| (v as i32 + rng.gen_range(-amp..=amp)).clamp(0, 255) as u8)
        .collect()
}

#[test]
fn top_k_is_monotone_in_threshold() {
    // Human frames 10..15 are smooth ramps; generated frames 0..5 are copies
    // with increasing noise, spreading SSIM across the tested thresholds.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut frames = HashMap::new();
    for k in 0..6 {
        let ramp: Vec<u8> = (0..24 * 24).map(|p| ((p % 24) * 10 + k * 3) as u8).collect();
        frames.insert(k, GrayImage::new(24, 24, noisy_copy(&mut rng, &ramp, 8 + 14 * k as i32)).unwrap());
        frames.insert(10 + k, GrayImage::new(24, 24, ramp).unwrap());
    }
    let generated: Vec<usize> = (0..6).collect();
    let human: Vec<usize> = (10..16).collect();
    let at = |t| top_k_accuracy(&generated, &human, &frames, 6, t).unwrap();
    let (a, b, c) = (at(0.5), at(0.7), at(0.9));
    assert!(a >= b && b >= c, "{a} {b} {c}");
    assert!(a > c, "fixture should separate the thresholds: {a} {b} {c}");
}

#[test]
fn ssim_is_one_only_for_identical_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let (w, h) = (rng.gen_range(11..30), rng.gen_range(11..30));
        let a: Vec<u8> = (0..w * h).map(|_| rng.gen()).collect();
        let mut b = a.clone();
        let i = rng.gen_range(0..w * h);
        b[i] = b[i].wrapping_add(rng.gen_range(1..=255));
        let (a, b) = (GrayImage::new(w, h, a).unwrap(), GrayImage::new(w, h, b).unwrap());
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert!(ssim(&a, &b).unwrap() < 1.0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }
}

fn covered(s: &[(usize, usize)]) -> BTreeSet<usize> {
    s.iter().flat_map(|&(a, b)| a..b).collect()
}

fn intervals() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..30, 1usize..6), 0..5)
        .prop_map(|v| v.into_iter().map(|(a, l)| (a, (a + l).min(30))).collect())
}

proptest! {
    #[test]
    fn f_is_one_iff_same_frames(a in intervals(), b in intervals()) {
        let f = keyshot_prf(&a, &b).fscore;
        let same = !covered(&a).is_empty() && covered(&a) == covered(&b);
        prop_assert_eq!(f == 1.0, same);
        prop_assert!((0.0..=1.0).contains(&f));
    }
}

#[test]
fn pipeline_products_are_valid_and_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d) = (24, 6);
    let centres: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let data = (0..n)
        .flat_map(|t| centres[t / 8].clone())
        .map(|v| v + 0.05 * rng.gen_range(-1.0..1.0))
        .collect();
    let x = FeatureSequence::new(Matrix::from_vec(n, d, data).unwrap(), 2.0, "clip").unwrap();
    let q = ScoreVector::new((0..n).map(|_| rng.gen_range(0.0..=1.0)).collect(), ScoreKind::Aesthetic).unwrap();
    let cfg = TrainConfig {
        hidden: 6,
        max_epochs: 20,
        step_size: 1e-2,
        ..Default::default()
    };
    let params = train_video(&x, &q, &cfg).unwrap().final_params;
    let seg = kts::segment(&x, kts::default_max_segments(n, 2.0), kts::DEFAULT_PENALTY_WEIGHT).unwrap();
    assert_eq!(seg.boundaries(), &[0, 8, 16, 24]);

    let products = || {
        vec![
            summarizer::make_thumbnail(&x, &params, &q, &cfg, 3).unwrap(),
            summarizer::make_storyboard(&x, &params, &q, &cfg, 0.25).unwrap(),
            summarizer::make_trailer(&x, &params, &q, &cfg, &seg, 9.0).unwrap(),
            summarizer::make_animated_thumbnail(&x, &params, &q, &cfg, &seg, 3.0).unwrap(),
        ]
    };
    let first = products();
    for s in &first {
        s.validate(n).unwrap();
    }
    assert_eq!(first[0].frame_indices.as_ref().unwrap().len(), 3);
    assert_eq!(first[1].frame_indices.as_ref().unwrap().len(), 6);
    assert_eq!(first[2].segments.as_ref().unwrap().len(), 2);
    assert_eq!(first[3].segments.as_ref().unwrap().len(), 1);
    assert_eq!(first, products());
}
