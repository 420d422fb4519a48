mod common;

use common::*;
use glru::bounds::{label_determination, predict_bounds_primal_scb, BoundKind, Label};
use glru::convex::{Loss, Regularizer};
use glru::data::{complement, parse_libsvm, write_libsvm, LibsvmOptions, ModificationSpec, Task};
use glru::erm::{dual_objective, primal_objective, TrainConfig};
use glru::gap::{gap_for_modification, gap_loocv_l2};
use glru::synth::synth_dataset;
use glru::workflows::{loocv_glru, loocv_naive, LoocvConfig};
use proptest::prelude::*;

fn loss_strategy() -> impl Strategy<Value = Loss> {
    prop::sample::select(all_losses())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fast_gaps_are_nonnegative(
        seed in any::<u64>(),
        loss in loss_strategy(),
        reg_index in 0usize..5,
        kind in 0usize..4,
        n in 6usize..30,
        d in 2usize..8,
    ) {
        let mut rng = rng(seed);
        let reg = regularizers(0.1, d)[reg_index];
        let ds = random_dataset(&mut rng, n, d, task_of(&loss), 0.8, reg.intercept.is_some());
        let model = solve(&ds, &loss, &reg, 1e-6);
        let spec = random_modification(&mut rng, &ds, &reg, kind, 2);
        let g = gap_for_modification(&model, &ds, &spec).unwrap();
        let (w, a, reg_new) = g.candidate(&model);
        let ds_new = spec.apply(&ds).unwrap();
        let p = primal_objective(&ds_new, &loss, &reg_new, &w);
        let dv = dual_objective(&ds_new, &loss, &reg_new, &a);
        prop_assert!(g.certificate().gap >= -1e-10 * (p.abs() + dv.abs()).max(1.0));
        prop_assert!(dv <= p + 1e-10 * p.abs().max(1.0));
    }

    #[test]
    fn primal_scb_contains_the_held_out_margin(seed in any::<u64>(), lambda_exp in -4i32..2) {
        let lambda = 2f64.powi(lambda_exp);
        let ds = synth_dataset(seed, 25, 4, 0.2, 1.0).unwrap();
        let reg = Regularizer::l2(lambda);
        let model = solve(&ds, &Loss::Logistic, &reg, 1e-12);
        let i = (seed % 25) as usize;
        let (cert, _) = gap_loocv_l2(&model, &ds, i).unwrap();
        let iv = predict_bounds_primal_scb(ds.row(i), &model.w, cert.radius_primal().unwrap());
        let fold = ds.select_instances(&complement(&[i], ds.n()));
        let refit = solve(&fold, &Loss::Logistic, &reg, 1e-13);
        let err = (2.0 * refit.gap().max(0.0) / lambda).sqrt() * ds.instance_norm(i) + 1e-12;
        let m = ds.row(i).dot(&refit.w);
        prop_assert!(iv.contains_approx(m, err), "{m} not in {iv:?}");
        match label_determination(iv) {
            Label::Positive => prop_assert!(m > 0.0),
            Label::Negative => prop_assert!(m < 0.0),
            Label::Undetermined => {}
        }
    }

    #[test]
    fn screened_loocv_is_exact(seed in any::<u64>(), lambda_exp in -8i32..1, dual in any::<bool>()) {
        let ds = synth_dataset(seed, 20, 4, 0.2, 1.0).unwrap();
        let reg = Regularizer::l2(2f64.powi(lambda_exp));
        let bound = if dual { BoundKind::DualScb } else { BoundKind::PrimalScb };
        let cfg = LoocvConfig { train: TrainConfig::with_tol(1e-11), bound, early_stop: true, ..LoocvConfig::default() };
        let naive = loocv_naive(&ds, &Loss::Logistic, &reg, &cfg).unwrap();
        let glru = loocv_glru(&ds, &Loss::Logistic, &reg, &cfg).unwrap();
        prop_assert_eq!(naive.error_count, glru.error_count);
    }

    #[test]
    fn libsvm_round_trip(seed in any::<u64>(), n in 1usize..20, d in 1usize..10, classification in any::<bool>()) {
        let mut rng = rng(seed);
        let task = if classification { Task::Classification } else { Task::Regression };
        let ds = random_dataset(&mut rng, n, d, task, 0.5, false);
        let text = write_libsvm(&ds);
        let back = parse_libsvm(&text, LibsvmOptions { task, min_features: d }).unwrap();
        prop_assert_eq!(back.d(), d);
        prop_assert_eq!(back.y(), ds.y());
        prop_assert_eq!(back.x().to_dense(), ds.x().to_dense());
        prop_assert_eq!(back.content_hash(), ds.content_hash());
    }

    #[test]
    fn removing_then_adding_instances_restores_the_data(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = rng(seed);
        let ds = random_dataset(&mut rng, 12, 5, Task::Classification, 0.6, false);
        let tail: Vec<usize> = (ds.n() - k..ds.n()).collect();
        let removed = ModificationSpec::RemoveInstances(tail.clone()).apply(&ds).unwrap();
        let back = ModificationSpec::AddInstances {
            rows: tail.iter().map(|&i| ds.row(i).to_owned()).collect(),
            y: tail.iter().map(|&i| ds.y()[i]).collect(),
        }
        .apply(&removed)
        .unwrap();
        prop_assert_eq!(back.content_hash(), ds.content_hash());
    }

    #[test]
    fn removing_then_adding_features_restores_the_data(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = rng(seed);
        let ds = random_dataset(&mut rng, 10, 6, Task::Regression, 0.6, false);
        let tail: Vec<usize> = (ds.d() - k..ds.d()).collect();
        let removed = ModificationSpec::RemoveFeatures(tail.clone()).apply(&ds).unwrap();
        let back = ModificationSpec::AddFeatures {
            cols: tail.iter().map(|&j| ds.col(j).to_owned()).collect(),
        }
        .apply(&removed)
        .unwrap();
        prop_assert_eq!(back.x().to_dense(), ds.x().to_dense());
    }
}
