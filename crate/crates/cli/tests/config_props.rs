use std::path::Path;

use cleansel::config::{parse_config, to_config_string};
use cleansel_core::data::CenterLayout;
use cleansel_core::harness::ExperimentPreset;
use cleansel_core::noise::NoiseKind;
use cleansel_core::stage1::MembershipSource;
use cleansel_core::stage2::ConsistencyScore;
use cleansel_core::trainer::Method;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    // awkward decimals exercise the float formatting
    (1u32..1000, 1u32..7).prop_map(|(a, b)| a as f64 / 10f64.powi(b as i32))
}

fn preset() -> impl Strategy<Value = ExperimentPreset> {
    let data = (8usize..200, 2usize..6, 0usize..5, unit(), unit(), any::<bool>(), any::<bool>());
    let noise = (prop_oneof![Just(NoiseKind::None), Just(NoiseKind::Boundary), Just(NoiseKind::Symmetric), Just(NoiseKind::ClassificationBased)], 0.0f64..1.0);
    let train_a = (
        prop_oneof![Just(Method::CrossEntropy), Just(Method::Stage1Only), Just(Method::Stage2Only), Just(Method::Full)],
        (2usize..100).prop_flat_map(|e| (Just(e), 0..e)),
        unit(),
        0.0f64..0.99,
        unit(),
        1usize..256,
        0.01f64..0.99,
        unit(),
    );
    let train_b = (
        unit(),
        unit(),
        0usize..20,
        prop::collection::vec(1usize..64, 0..3),
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        0u64..(1 << 62),
    );
    let misc = (prop::collection::vec(0u64..(1 << 62), 1..6), 1usize..50, "[a-z][a-z0-9-]{0,12}");
    (data, noise, train_a, train_b, misc).prop_map(|(d, n, ta, tb, m)| {
        let mut p = ExperimentPreset::boundary_idn();
        p.data.n_per_class = d.0;
        p.data.class_count = d.1;
        p.data.dim = d.1 + d.2;
        p.data.center_spread = d.3;
        p.data.cluster_std = d.4;
        p.data.center_layout = if d.5 { CenterLayout::Equidistant } else { CenterLayout::Gaussian };
        p.data.imbalance_ratios = if d.6 { (1..=d.1).map(|k| k as f64 / 7.0).collect() } else { Vec::new() };
        p.noise.kind = n.0;
        p.noise.ratio = n.1;
        p.train.method = ta.0;
        (p.train.epochs, p.train.warmup_epochs) = ta.1;
        p.train.learning_rate = ta.2;
        p.train.momentum = ta.3;
        p.train.weight_decay = ta.4;
        p.train.batch_size = ta.5;
        p.train.theta = ta.6;
        p.train.theta_agg = ta.7;
        p.train.lambda_min = tb.0;
        p.train.lambda_max = tb.1;
        p.train.n_max = tb.2;
        p.train.hidden = tb.3;
        p.train.supervised_guard = tb.4;
        p.train.stage2_per_class = tb.5;
        p.train.membership = if tb.6 { MembershipSource::PredictedLabel } else { MembershipSource::NoisyLabel };
        p.train.consistency_score = if tb.6 { ConsistencyScore::Weighted } else { ConsistencyScore::Plain };
        p.train.seed = tb.7;
        p.seeds = m.0;
        p.test_per_class = m.1;
        p.name = m.2;
        p
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parse_serialize_parse_is_identity(p in preset()) {
        prop_assume!(p.validate().is_ok());
        let text = to_config_string(&p);
        let once = parse_config(&text, Path::new("a.toml")).unwrap();
        prop_assert_eq!(&once, &p);
        let twice = parse_config(&to_config_string(&once), Path::new("b.toml")).unwrap();
        prop_assert_eq!(twice, once);
    }
}
