use std::collections::HashSet;

use nalgebra::DVector;
use proptest::prelude::*;

use pls_core::bench::{load_run, persist_run, ExperimentConfig};
use pls_core::credal::{
    compute_alpha_cut, gamma_maximin_score, score_ppp, select_candidate, AlphaCut, CandidateScore, CredalBox,
    CriterionKind, SelectionSettings,
};
use pls_core::data::{generate_synthetic, split, Partition, SplitSpec, SyntheticSpec};
use pls_core::laplace::laplace_log_marginal;
use pls_core::logistic::{Candidate, Design};
use pls_core::optim::BfgsConfig;
use pls_core::self_training::{run_self_training, SelfTrainingConfig, StoppingRule};

fn partition(seed: u64, n: usize) -> Partition {
    let d = generate_synthetic(&SyntheticSpec {
        n_total: n,
        true_beta: vec![-0.2, 1.3],
        seed,
    })
    .unwrap();
    split(
        &d,
        &SplitSpec {
            labeled_fraction: 0.3,
            test_fraction: 0.3,
            seed,
        },
    )
    .unwrap()
    .standardized()
    .0
}

fn cheap_kinds() -> impl Strategy<Value = CriterionKind> {
    prop_oneof![
        Just(CriterionKind::ProbabilityScore),
        Just(CriterionKind::PredictiveVariance),
        Just(CriterionKind::LikelihoodMaxMax),
        Just(CriterionKind::Ppp),
        Just(CriterionKind::PppMultiLabel),
        Just(CriterionKind::PppMultiModel),
        Just(CriterionKind::PppWeighted),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn loop_conserves_points(seed in 0u64..500, n in 14usize..30, kind in cheap_kinds()) {
        let part = partition(seed, n);
        let k = part.unlabeled.len();
        let l0 = part.labeled.n_rows();
        let r = run_self_training(&part.labeled, &part.unlabeled, &part.test, kind, StoppingRule::default(), &SelfTrainingConfig::default()).unwrap();
        prop_assert_eq!(r.records.len(), k + 1);
        prop_assert_eq!(r.criterion_evaluations, (k * (k + 1) / 2) as u64);
        let mut seen = HashSet::new();
        for (t, rec) in r.records.iter().enumerate() {
            prop_assert_eq!(rec.labeled_size, l0 + t);
            prop_assert_eq!(rec.labeled_size + rec.pool_size, l0 + k);
            if let Some(i) = rec.selected_pool_index {
                prop_assert!(seen.insert(i));
            }
        }
    }

    #[test]
    fn selection_ignores_input_order(scores in prop::collection::vec(-3i32..3, 1..25), seed in any::<u64>()) {
        let list: Vec<CandidateScore> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| CandidateScore { pool_index: i, pseudo_label: 0, score: f64::from(s), worst_case_mu: None })
            .collect();
        let winner = select_candidate(&list).unwrap();
        let best = *scores.iter().max().unwrap();
        prop_assert_eq!(winner.pool_index, scores.iter().position(|&s| s == best).unwrap());
        let mut shuffled = list.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(select_candidate(&shuffled).unwrap(), winner);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn gamma_maximin_structure(seed in 0u64..1000, x in -2.0f64..2.0, label in 0u8..2) {
        let part = partition(seed, 30);
        let data = Design::from_dataset(&part.labeled).unwrap();
        let bx = CredalBox::symmetric(2, 3.0, 2.0).unwrap();
        let settings = SelectionSettings::default();
        let cand = Candidate { pool_index: 0, features: DVector::from_vec(vec![x]), pseudo_label: label };
        let base = compute_alpha_cut(&data, &bx, 1.0, &settings).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for a in [0.05, 0.2, 0.6, 1.0] {
            let cut = AlphaCut { alpha: a, ..base.clone() };
            let s = gamma_maximin_score(&data, &cand, &bx, &cut, &settings).unwrap();
            prop_assert!(s.score >= prev - 1e-6);
            prev = s.score;
            let mu = DVector::from_vec(s.worst_case_mu.unwrap());
            prop_assert!(bx.contains(&mu, 1e-8));
            let lm = laplace_log_marginal(&data, &bx.prior_at(&mu).unwrap(), &BfgsConfig::default()).unwrap().log_value;
            prop_assert!(cut.constraint(lm) >= -1e-8);
            let center = laplace_log_marginal(&data, bx.center_prior(), &BfgsConfig::default()).unwrap().log_value;
            if cut.constraint(center) >= 0.0 {
                let ppp = score_ppp(&data, &cand, bx.center_prior(), &BfgsConfig::default()).unwrap();
                prop_assert!(s.score <= ppp + 1e-6);
            }
        }
    }
}

#[test]
fn persisted_run_round_trips() {
    let cfg = ExperimentConfig {
        synthetic_n_total: 24,
        labeled_fraction: 0.25,
        max_iterations: Some(4),
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    for kind in [CriterionKind::GammaMaximinSoftRevision { alpha: 0.7 }, CriterionKind::SupervisedBaseline] {
        let r = pls_core::bench::run_cell(&cfg, kind, 11).unwrap();
        let path = dir.path().join(format!("{}.json", kind.label()));
        persist_run(&r, &path).unwrap();
        let back = load_run(&path).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.fingerprint, cfg.fingerprint(&kind));
    }
}

#[test]
fn pseudo_labels_follow_the_current_model() {
    // the pseudo-label of every selection equals the refit model's prediction at that step
    let part = partition(77, 24);
    let r = run_self_training(
        &part.labeled,
        &part.unlabeled,
        &part.test,
        CriterionKind::PredictiveVariance,
        StoppingRule::default(),
        &SelfTrainingConfig::default(),
    )
    .unwrap();
    let mut design = Design::from_dataset(&part.labeled).unwrap();
    for rec in &r.records {
        let Some(i) = rec.selected_pool_index else { break };
        let (model, _) =
            pls_core::logistic::fit_mle_with_fallback(&design, &pls_core::logistic::RidgeSchedule::default()).unwrap();
        let x = part.unlabeled.row(i);
        let predicted = u8::from(pls_core::logistic::response(model.eta(&x)) >= 0.5);
        assert_eq!(rec.pseudo_label, Some(predicted));
        design.push(&x, predicted);
    }
}
