use codeaug::corpus::QueryCodePair;
use codeaug::neural::*;
use codeaug::pipeline::ExperimentConfig;
use codeaug::synth::{generate, SynthConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tok() -> TokenizerConfig {
    TokenizerConfig::with_buckets(256)
}

fn random_ids(r: &mut ChaCha8Rng) -> Vec<u32> {
    (0..r.gen_range(4..9)).map(|_| r.gen_range(1..256)).collect()
}

fn perturb(xs: &mut [f64], r: &mut ChaCha8Rng, scale: f64) {
    for x in xs {
        *x = r.gen_range(-scale..scale);
    }
}

#[test]
fn contrastive_gradients_match_finite_differences() {
    for seed in 0..6 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut p = BiEncoderParams::init(tok(), 8, seed).unwrap();
        perturb(&mut p.projection, &mut r, 0.8);
        perturb(&mut p.bias, &mut r, 0.3);
        let batch: Vec<(Vec<u32>, Vec<u32>)> = (0..4).map(|_| (random_ids(&mut r), random_ids(&mut r))).collect();
        let rep = gradient_check(
            GradCheckCase::Contrastive {
                params: &p,
                batch: &batch,
                temperature: 0.5,
            },
            1e-5,
            seed,
        )
        .unwrap();
        assert!(rep.coordinates >= 200, "{rep:?}");
        assert!(rep.max_relative_error < 1e-4, "seed {seed}: {rep:?}");
        assert!(rep.max_abs_analytic > 1e-3);
    }
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    for act in [Activation::Tanh, Activation::Softplus, Activation::Square, Activation::Abs] {
        for seed in 0..6 {
            let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut p = CrossEncoderParams::init(tok(), 8, 8, seed).unwrap();
            p.activation = act;
            perturb(&mut p.w2, &mut r, 1.0);
            perturb(&mut p.b1, &mut r, 0.5);
            p.b2[0] = r.gen_range(-0.5..0.5);
            let batch: Vec<(Vec<u32>, Vec<u32>, f64)> = (0..4)
                .map(|i| (random_ids(&mut r), random_ids(&mut r), (i % 2) as f64))
                .collect();
            let rep = gradient_check(GradCheckCase::CrossEntropy { params: &p, batch: &batch }, 1e-5, seed).unwrap();
            assert!(rep.coordinates >= 200, "{rep:?}");
            assert!(rep.max_relative_error < 1e-4, "{act:?} seed {seed}: {rep:?}");
        }
    }
}

#[test]
fn flat_region_has_zero_gradient() {
    // zero table and projection: every text encodes to the bias, so all
    // similarities are equal and the loss sits at ln(bs) with zero slope
    let mut p = BiEncoderParams::zeros(tok(), 8).unwrap();
    p.bias.iter_mut().enumerate().for_each(|(i, b)| *b = 1.0 + i as f64);
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let batch: Vec<(Vec<u32>, Vec<u32>)> = (0..4).map(|_| (random_ids(&mut r), random_ids(&mut r))).collect();
    assert!((bi_batch_loss(&p, &batch, 0.05).unwrap() - 4f64.ln()).abs() < 1e-12);
    let rep = gradient_check(
        GradCheckCase::Contrastive {
            params: &p,
            batch: &batch,
            temperature: 0.05,
        },
        1e-4,
        3,
    )
    .unwrap();
    assert!(rep.max_abs_analytic < 1e-12, "{rep:?}");
    assert!(rep.max_abs_numeric < 1e-8, "{rep:?}");
}

#[test]
fn gradient_check_rejects_bad_eps() {
    let p = BiEncoderParams::zeros(tok(), 8).unwrap();
    let batch = vec![(vec![1], vec![2]), (vec![3], vec![4])];
    let case = || GradCheckCase::Contrastive {
        params: &p,
        batch: &batch,
        temperature: 0.05,
    };
    assert!(gradient_check(case(), 1e-2, 0).is_err());
    assert!(gradient_check(case(), 1e-8, 0).is_err());
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        lr_scale: 300.0,
        epochs: 3,
        tokenizer: TokenizerConfig::with_buckets(4096),
        ..TrainConfig::bi_encoder()
    }
}

fn corpus_200() -> Vec<QueryCodePair> {
    generate(&SynthConfig {
        n_train: 200,
        seed: 1,
        ..Default::default()
    })
    .unwrap()
    .train
    .pairs
}

#[test]
fn bi_encoder_loss_trace_golden() {
    let trained = train_bi_encoder(&corpus_200(), &small_cfg()).unwrap();
    let l = &trained.epoch_losses;
    assert_eq!(l.len(), 3);
    assert!(l[2] < l[0], "{l:?}");
    let golden = GOLDEN_BI_LOSSES;
    for (got, want) in l.iter().zip(golden) {
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{l:?}");
    }
}

// Recorded from this implementation; any change to tokenization, init,
// batching or the optimizer shows up here.
const GOLDEN_BI_LOSSES: [f64; 3] = [2.4422109830385823, 1.0870058505891016, 0.3631267286636851];

#[test]
fn zero_learning_rate_leaves_bi_encoder_untouched() {
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..small_cfg()
    };
    let pairs = corpus_200();
    let init = BiEncoderParams::init(cfg.tokenizer.clone(), cfg.dim, cfg.seed).unwrap();
    let trained = fit_bi_encoder(init.clone(), &pairs, &cfg).unwrap();
    assert_eq!(trained.params, init);
    assert_eq!(trained.epoch_losses.len(), 3);
}

#[test]
fn zero_learning_rate_keeps_cross_scores_at_one_half() {
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..small_cfg()
    };
    let pairs = corpus_200();
    let trained = train_cross_encoder(&pairs, &cfg).unwrap();
    for p in pairs.iter().take(20) {
        assert_eq!(trained.params.score_text(&p.query, &p.code).unwrap(), 0.5);
        assert_eq!(trained.params.score_text(&p.query, &pairs[0].code).unwrap(), 0.5);
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let pairs = corpus_200();
    let cfg = TrainConfig {
        epochs: 1,
        ..small_cfg()
    };
    let a = train_bi_encoder(&pairs, &cfg).unwrap();
    let b = train_bi_encoder(&pairs, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.epoch_losses, b.epoch_losses);
    let c = train_bi_encoder(&pairs, &TrainConfig { seed: 2, ..cfg.clone() }).unwrap();
    assert_ne!(a.params, c.params);

    let x = train_cross_encoder(&pairs, &cfg).unwrap();
    let y = train_cross_encoder(&pairs, &cfg).unwrap();
    assert_eq!(x.params, y.params);
}

#[test]
fn trained_cross_encoder_prefers_held_out_positives() {
    let corpus = generate(&SynthConfig::default()).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..ExperimentConfig::desk_scale().filter_model
    };
    let model = train_cross_encoder(&corpus.train.pairs, &cfg).unwrap().params;
    let test = &corpus.test.pairs;
    let n = test.len();
    let pos: f64 = test.iter().map(|p| model.score_text(&p.query, &p.code).unwrap()).sum::<f64>() / n as f64;
    let neg: f64 = (0..n)
        .map(|i| model.score_text(&test[i].query, &test[(i + 1) % n].code).unwrap())
        .sum::<f64>()
        / n as f64;
    assert!(pos > neg, "positives {pos} vs mismatched {neg}");
}

#[test]
fn training_needs_a_full_batch() {
    let pairs = corpus_200();
    let cfg = TrainConfig {
        batch_size: 512,
        ..small_cfg()
    };
    assert!(train_bi_encoder(&pairs, &cfg).is_err());
}

fn vec8() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, 8).prop_filter("nonzero", |v| norm(v) > 1e-3)
}

proptest! {
    #[test]
    fn cosine_is_scale_invariant(u in vec8(), v in vec8(), a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let su: Vec<f64> = u.iter().map(|x| a * x).collect();
        let sv: Vec<f64> = v.iter().map(|x| b * x).collect();
        let base = cosine_sim(&u, &v).unwrap();
        prop_assert!((cosine_sim(&su, &sv).unwrap() - base).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn contrastive_loss_bounds(qs in proptest::collection::vec(vec8(), 1..6), tau in 0.05f64..2.0) {
        let cs: Vec<Vec<f64>> = qs.iter().rev().cloned().collect();
        let loss = contrastive_loss(&qs, &cs, tau).unwrap();
        prop_assert!(loss >= 0.0);
        let same = vec![qs[0].clone(); qs.len()];
        let flat = contrastive_loss(&same, &same, tau).unwrap();
        prop_assert!((flat - (qs.len() as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn aligning_a_positive_lowers_the_loss(a in 0.0f64..1.5, b in 0.0f64..1.5, tau in 0.05f64..2.0) {
        // q0 and c0 sit at angles a and b on the unit circle; the second
        // pair stays fixed so only sim(q0, c0) moves, and only upwards
        prop_assume!(a + 0.01 < b);
        let q = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let c_far = vec![vec![b.cos(), b.sin()], vec![0.0, 1.0]];
        let c_near = vec![vec![a.cos(), a.sin()], vec![0.0, 1.0]];
        let far = contrastive_loss(&q, &c_far, tau).unwrap();
        let near = contrastive_loss(&q, &c_near, tau).unwrap();
        prop_assert!(near < far, "{near} >= {far}");
    }
}
