use curvematch_core::corpus::{gen_corpus, CorpusConfig, SherdSize};
use curvematch_core::net::{contrastive_loss, EmbeddingNet, NetConfig};
use curvematch_core::stage1::match_catalog;
use curvematch_core::stage2::{
    augment, augmented_embeddings, build_training_set, is_true_match, labeled_pair_gradient, pair_images, psi,
    psi_bar, rerank, to_network_input, Augmentation, AugmentationSpec, LabeledPair, TrainConfig, Trainer,
    TrainingSetOptions, TrainingSherd,
};
use curvematch_core::transform::{flip, Flip};
use curvematch_core::{BinaryImage, Candidate, Catalog, Design, DesignId, Error, MatchConfig, Pose, SherdTemplate};
use proptest::prelude::*;

fn tiny_corpus() -> (Catalog, Vec<TrainingSherd>) {
    let config = CorpusConfig {
        designs: 3,
        sherds_per_design: 1,
        seed: 17,
        design_width: 64,
        design_height: 64,
        sherd_size: SherdSize { min: 18, max: 24 },
        ..CorpusConfig::default()
    };
    let corpus = gen_corpus(&config).unwrap();
    let sherds = corpus
        .records
        .iter()
        .zip(&corpus.sherds)
        .map(|(r, s)| TrainingSherd {
            template: s.template.clone(),
            truth: Some((r.design_id, r.truth_pose)),
        })
        .collect();
    (Catalog::new(corpus.designs).unwrap(), sherds)
}

fn options(cap: Option<usize>, stride: u32) -> TrainingSetOptions {
    TrainingSetOptions {
        input_size: 32,
        neg_pos_cap: cap,
        augment_negatives: false,
        theta_stride: stride,
        seed: 3,
    }
}

#[test]
fn training_set_counts_follow_the_rules() {
    let (catalog, sherds) = tiny_corpus();
    let config = MatchConfig::new(3, 30).unwrap();
    let cands: Vec<Vec<Candidate>> = sherds
        .iter()
        .map(|s| match_catalog(&catalog, &s.template, config).unwrap())
        .collect();
    let one = build_training_set(&catalog, &sherds[..1], &cands[..1], &AugmentationSpec::full(), &options(Some(10), 30))
        .unwrap();
    assert_eq!(one.positives.len(), 96);
    let false_count = cands[0]
        .iter()
        .filter(|c| !is_true_match(c, sherds[0].truth.unwrap(), 30))
        .count();
    assert_eq!(one.negatives.len(), false_count.min(10 * 96));
    assert!(one.positives.iter().all(|p| p.label) && one.negatives.iter().all(|p| !p.label));

    let all = build_training_set(&catalog, &sherds, &cands, &AugmentationSpec::full(), &options(Some(0), 30)).unwrap();
    assert_eq!(all.positives.len(), 96 * sherds.len());
    assert!(all.negatives.is_empty());

    let mut unlabeled = sherds.clone();
    unlabeled[1].truth = None;
    assert!(build_training_set(&catalog, &unlabeled, &cands, &AugmentationSpec::full(), &options(None, 30)).is_err());
}

#[test]
fn negative_cap_subsamples_deterministically() {
    let (catalog, sherds) = tiny_corpus();
    let config = MatchConfig::new(5, 30).unwrap();
    let cands = vec![match_catalog(&catalog, &sherds[0].template, config).unwrap()];
    let spec = AugmentationSpec::identity();
    let a = build_training_set(&catalog, &sherds[..1], &cands, &spec, &options(Some(2), 30)).unwrap();
    let b = build_training_set(&catalog, &sherds[..1], &cands, &spec, &options(Some(2), 30)).unwrap();
    assert_eq!(a.negatives.len(), 2);
    assert_eq!(a.negatives, b.negatives);
}

#[test]
fn identity_composite_reproduces_the_truth_pair() {
    let (catalog, sherds) = tiny_corpus();
    let (id, pose) = sherds[0].truth.unwrap();
    let (a, b) = pair_images(&sherds[0].template, &catalog.get(id).unwrap().image, pose);
    // A clean sherd matches its patch exactly at the truth pose.
    assert_eq!(a, b);
    assert_eq!(augment(&a, Augmentation::IDENTITY).unwrap(), a);
}

#[test]
fn true_match_tolerance() {
    let truth = (DesignId(1), Pose { x: 10, y: 10, theta: 350 });
    let c = |d, x, y, t| Candidate {
        design_id: DesignId(d),
        pose: Pose { x, y, theta: t },
        phi: 0.0,
        psi_bar: None,
    };
    assert!(is_true_match(&c(1, 12, 8, 0), truth, 10));
    assert!(!is_true_match(&c(1, 13, 10, 350), truth, 10));
    assert!(!is_true_match(&c(1, 10, 10, 10), truth, 10));
    assert!(!is_true_match(&c(0, 10, 10, 350), truth, 10));
}

fn small_net(seed: u64) -> EmbeddingNet {
    let mut cfg = NetConfig::tiny();
    cfg.input_size = 32;
    EmbeddingNet::new(cfg, seed).unwrap()
}

#[test]
fn full_spec_psi_bar_is_the_mean_of_96_terms() {
    let net = small_net(1);
    let a = BinaryImage::from_fn(21, 17, |x, y| (x * y) % 7 < 2);
    let b = BinaryImage::from_fn(21, 17, |x, y| (x + 2 * y) % 5 == 0);
    let spec = AugmentationSpec::full();
    let mut sum = 0.0;
    let mut terms = 0;
    for e in spec.elements() {
        sum += psi(&net, &augment(&a, e).unwrap(), &augment(&b, e).unwrap()).unwrap();
        terms += 1;
    }
    assert_eq!(terms, 96);
    let got = psi_bar(&net, &a, &b, &spec).unwrap();
    assert!((got - sum / 96.0).abs() <= 1e-12 * got.max(1.0));
    assert_eq!(psi_bar(&net, &a, &a, &spec).unwrap(), 0.0);
    assert_eq!(augmented_embeddings(&net, &a, &spec).unwrap().len(), 96);
}

#[test]
fn rerank_puts_an_identical_patch_first() {
    let decoy = BinaryImage::from_fn(40, 40, |x, y| (x / 3 + y / 3) % 2 == 0);
    let truth = BinaryImage::from_fn(40, 40, |x, y| (x * x + y * 3) % 11 < 3);
    let catalog = Catalog::new(vec![
        Design {
            id: DesignId(0),
            image: decoy,
        },
        Design {
            id: DesignId(1),
            image: truth.clone(),
        },
    ])
    .unwrap();
    let t = SherdTemplate::full(BinaryImage::from_fn(12, 10, |x, y| truth.get(x + 14, y + 9) == 1));
    let cands = match_catalog(&catalog, &t, MatchConfig::new(3, 90).unwrap()).unwrap();
    let net = small_net(2);
    for tta in [false, true] {
        let ranked = rerank(&net, &t, &catalog, &cands, tta).unwrap();
        assert_eq!(ranked.len(), 2);
        assert_eq!(ranked[0].design_id, DesignId(1));
        assert_eq!(ranked[0].psi_bar, Some(0.0));
    }
    let mut bad = cands.clone();
    bad[0].design_id = DesignId(9);
    assert!(matches!(rerank(&net, &t, &catalog, &bad, false), Err(Error::UnknownDesign(_))));
}

fn pair(seed: usize, label: bool) -> LabeledPair {
    LabeledPair {
        a: BinaryImage::from_fn(32, 32, |x, y| (x * 3 + y * seed) % 7 < 3),
        b: BinaryImage::from_fn(32, 32, |x, y| (x + y * 5 + seed) % 6 < 2),
        label,
    }
}

#[test]
fn small_step_descends_on_the_same_pair() {
    let p = pair(2, true);
    let net = small_net(4);
    let config = TrainConfig {
        base_lr: 1e-4,
        momentum: 0.0,
        weight_decay: 0.0,
        max_iters: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(net, config).unwrap();
    let before = trainer.backward_and_step(&[&p]).unwrap();
    let fa = trainer.net().forward(&p.a).unwrap();
    let fb = trainer.net().forward(&p.b).unwrap();
    let after = contrastive_loss(&fa, &fb, true, 0.5).unwrap().0;
    assert!(after < before, "{after} !< {before}");
    let (l, _) = labeled_pair_gradient(trainer.net(), &p, 0.5f32).unwrap();
    assert_eq!(l, after);
}

#[test]
fn training_is_reproducible_per_seed() {
    let set = curvematch_core::stage2::TrainingSet {
        positives: (0..6).map(|i| pair(i, true)).collect(),
        negatives: (0..6).map(|i| pair(i + 7, false)).collect(),
    };
    let config = TrainConfig {
        batch_size: 4,
        max_iters: 5,
        base_lr: 1e-2,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut t = Trainer::new(small_net(5), config.clone()).unwrap();
        let losses = t.train(&set).unwrap();
        (losses, t.into_net().params_flat())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identity_and_involutions(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let img = BinaryImage::from_fn(w, h, |x, y| (x as u64 * 31 + y as u64 * 17 + seed) % 5 < 2);
        prop_assert_eq!(augment(&img, Augmentation::IDENTITY).unwrap(), img.clone());
        prop_assert_eq!(flip(&flip(&img, Flip::Horizontal), Flip::Horizontal), img.clone());
        prop_assert_eq!(flip(&flip(&img, Flip::Vertical), Flip::Vertical), img.clone());
        let side = w.max(h);
        let square = to_network_input(&img, side).unwrap();
        prop_assert_eq!(square.count_ones(), img.count_ones());
        if w == h {
            prop_assert_eq!(square, img);
        }
    }
}
