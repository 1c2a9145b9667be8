use cleansel_core::harness::{self, ExperimentPreset};
use cleansel_core::stage1::Stage;
use cleansel_core::trainer::{Method, Phase, TrainConfig};
use cleansel_core::Error;

fn small(method: Method, seed: u64) -> ExperimentPreset {
    let mut p = ExperimentPreset::boundary_idn().with_run(method, seed);
    p.data.n_per_class = 60;
    p.test_per_class = 30;
    p.train.epochs = 8;
    p.train.warmup_epochs = 2;
    p.train.lr_decay_epoch = 6;
    p.train.lambda_u_ramp_epochs = 3;
    p.train.n_max = 5;
    p
}

#[test]
fn runs_are_reproducible() {
    let a = harness::run_experiment(&small(Method::Full, 3), &mut |_| {}).unwrap().2;
    let b = harness::run_experiment(&small(Method::Full, 3), &mut |_| {}).unwrap().2;
    assert_eq!(a, b);
    let c = harness::run_experiment(&small(Method::Full, 4), &mut |_| {}).unwrap().2;
    assert_ne!(a, c);
}

#[test]
fn report_shape_follows_method() {
    for method in Method::ALL {
        let (_, _, r) = harness::run_experiment(&small(method, 1), &mut |_| {}).unwrap();
        assert_eq!(r.method, method);
        assert_eq!(r.epochs.len(), 8);
        for (i, e) in r.epochs.iter().enumerate() {
            assert_eq!(e.epoch, i);
            for auc in [e.auc_s1, e.auc_s2].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&auc));
            }
            let expect = match (i < 2, method) {
                (true, _) => Phase::Warmup,
                (false, Method::CrossEntropy) => Phase::CrossEntropy,
                _ => Phase::Select,
            };
            assert_eq!(e.phase, expect);
            if e.phase == Phase::Select {
                assert!(e.n_s2.unwrap() <= e.n_s1.unwrap());
                if !method.uses_stage2() {
                    assert_eq!(e.n_s1, e.n_s2);
                    assert_eq!(e.losses.loss_min, 0.0);
                    assert_eq!(e.losses.loss_max, 0.0);
                }
            } else {
                assert_eq!(e.n_s1, None);
            }
        }

        assert!((0.0..=1.0).contains(&r.final_test_accuracy()));
    }
}

#[test]
fn stage_two_clean_set_nests_inside_stage_one() {
    let mut checked = 0;
    harness::run_experiment(&small(Method::Full, 2), &mut |snap| {
        assert_eq!(snap.s1.stage, Stage::S1);
        assert_eq!(snap.s2.stage, Stage::S2);
        for (a, b) in snap.s1.is_clean.iter().zip(&snap.s2.is_clean) {
            assert!(*a || !*b);
        }
        let c = snap.consistency.expect("full method reports consistency");
        assert_eq!(c.indices, snap.s1.clean_indices());
        assert!(c.d.iter().all(|d| (0.0..=2.0).contains(d)));
        checked += 1;
    })
    .unwrap();
    assert_eq!(checked, 6);
}

#[test]
fn warm_up_epochs_do_not_depend_on_method() {
    let a = harness::run_experiment(&small(Method::CrossEntropy, 5), &mut |_| {}).unwrap().2;
    let b = harness::run_experiment(&small(Method::Full, 5), &mut |_| {}).unwrap().2;
    assert_eq!(a.epochs[..2], b.epochs[..2]);
    assert_ne!(a.epochs[2..], b.epochs[2..]);
}

#[test]
fn invalid_config_names_the_field() {
    let cfg = TrainConfig {
        theta: 1.5,
        ..TrainConfig::default()
    };
    match cfg.validate() {
        Err(Error::Config { field, .. }) => assert_eq!(field, "train.theta"),
        other => panic!("{other:?}"),
    }
}
