use curvematch_core::corpus::{
    gen_corpus, gen_corpus_sherd, gen_design, gen_sherd, split_train_test, CorpusConfig, DegradationSpec, DesignStyle,
    SherdSize, DENSITY_RANGE,
};
use curvematch_core::stage1::{cost_plane_direct, PoseGrid};
use curvematch_core::transform::{crop_patch, RotatedTemplate};
use proptest::prelude::*;

fn small_config(seed: u64, degradation: DegradationSpec) -> CorpusConfig {
    CorpusConfig {
        designs: 4,
        sherds_per_design: 4,
        seed,
        design_width: 72,
        design_height: 64,
        sherd_size: SherdSize { min: 16, max: 26 },
        degradation,
        ..CorpusConfig::default()
    }
}

#[test]
fn corpus_is_a_pure_function_of_its_config() {
    let c = small_config(5, DegradationSpec::heavy());
    let a = gen_corpus(&c).unwrap();
    let b = gen_corpus(&c).unwrap();
    assert_eq!(a.designs, b.designs);
    assert_eq!(a.records, b.records);
    for (x, y) in a.sherds.iter().zip(&b.sherds) {
        assert_eq!(x.template, y.template);
    }
    // Each record derives its own seed, so generating one alone agrees.
    let (r, s) = gen_corpus_sherd(&c, &a.designs, 9).unwrap();
    assert_eq!(r, a.records[9]);
    assert_eq!(s.template, a.sherds[9].template);
    let other = gen_corpus(&small_config(6, DegradationSpec::heavy())).unwrap();
    assert_ne!(other.designs, a.designs);
}

#[test]
fn clean_sherds_reproduce_their_design_at_the_truth_pose() {
    let c = small_config(8, DegradationSpec::none());
    let corpus = gen_corpus(&c).unwrap();
    for (r, s) in corpus.records.iter().zip(&corpus.sherds) {
        let design = &corpus.designs[r.design_id.0 as usize].image;
        let pose = r.truth_pose;
        assert_eq!(pose.theta % c.theta_step, 0);
        assert!(PoseGrid::new(design, &s.template).contains(pose));
        let plane = cost_plane_direct(design, &s.template, pose.theta);
        assert_eq!(plane.at(pose.x, pose.y), 0.0, "sherd {}", r.id);
        let rot = RotatedTemplate::new(&s.template, pose.theta);
        assert_eq!(crop_patch(design, pose, &s.template).unwrap(), rot.curve);
        assert_eq!(s.clean_curve, *s.template.curve());
        // The rotated canvas lies fully on the design.
        let (ox, oy) = rot.origin(pose.x, pose.y);
        assert!(ox >= 0 && oy >= 0);
        assert!(ox as usize + rot.extent.width <= design.width());
        assert!(oy as usize + rot.extent.height <= design.height());
    }
}

fn mean_damage(spec: DegradationSpec) -> f64 {
    let corpus = gen_corpus(&small_config(21, spec)).unwrap();
    let mut flipped = 0usize;
    let mut area = 0usize;
    for s in &corpus.sherds {
        flipped += s.template.curve().hamming(&s.clean_curve);
        area += s.template.mask().count_ones();
    }
    flipped as f64 / area as f64
}

#[test]
fn degradation_presets_are_ordered() {
    let none = mean_damage(DegradationSpec::none());
    let mild = mean_damage(DegradationSpec::mild());
    let heavy = mean_damage(DegradationSpec::heavy());
    assert_eq!(none, 0.0);
    assert!(mild > 0.0);
    assert!(heavy > mild, "heavy {heavy} vs mild {mild}");
}

#[test]
fn degraded_curves_stay_inside_the_mask() {
    let corpus = gen_corpus(&small_config(4, DegradationSpec::heavy())).unwrap();
    for s in &corpus.sherds {
        let t = &s.template;
        assert_eq!(t.curve().and(t.mask()), *t.curve());
    }
}

#[test]
fn split_is_stratified_and_seeded() {
    let corpus = gen_corpus(&small_config(2, DegradationSpec::none())).unwrap();
    let (train, test) = split_train_test(&corpus.records, 0.75, 1).unwrap();
    assert_eq!((train.len(), test.len()), (12, 4));
    for d in 0..4u32 {
        let n = corpus
            .records
            .iter()
            .filter(|r| r.design_id.0 == d && train.contains(&r.id))
            .count();
        assert_eq!(n, 3);
    }
    assert_eq!(split_train_test(&corpus.records, 0.75, 1).unwrap(), (train, test));
    assert!(split_train_test(&corpus.records, 1.0, 1).is_err());
}

#[test]
fn oversized_sherds_are_rejected() {
    let design = gen_design(1, 64, 64, DesignStyle::Arcs, 3).unwrap();
    let r = gen_sherd(&design, 3, SherdSize { min: 60, max: 64 }, &DegradationSpec::none(), 10);
    assert!(r.is_err());
    assert!(gen_sherd(&design, 3, SherdSize { min: 10, max: 12 }, &DegradationSpec::none(), 7).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn designs_meet_the_density_band(seed in any::<u64>(), style in 0usize..4) {
        let style = DesignStyle::ALL[style];
        let d = gen_design(seed, 80, 72, style, 3).unwrap();
        prop_assert!(d.density() >= DENSITY_RANGE.0 && d.density() <= DENSITY_RANGE.1);
        prop_assert_eq!(d, gen_design(seed, 80, 72, style, 3).unwrap());
    }

    #[test]
    fn single_sherds_are_exact(seed in any::<u64>(), step in prop::sample::select(vec![1u32, 10, 45, 90])) {
        let design = gen_design(seed ^ 1, 80, 80, DesignStyle::Waves, 3).unwrap();
        let s = gen_sherd(&design, seed, SherdSize { min: 12, max: 30 }, &DegradationSpec::none(), step).unwrap();
        prop_assert_eq!(s.truth_pose.theta % step, 0);
        let plane = cost_plane_direct(&design, &s.template, s.truth_pose.theta);
        prop_assert_eq!(plane.at(s.truth_pose.x, s.truth_pose.y), 0.0);
    }
}
