#[path = "common/mod.rs"]
mod common;

use common::{check, dense_grid, to_matrix};
use cupcf::evaluate::{FoldOutcome, ScoredPair};
use cupcf::{
    confusion_for_user, kfold_split, mae, merge_lists, metrics, run_experiment, run_on_folds,
    Averaging, ConfusionMatrix, ExperimentConfig, Method, PredictConfig, RankingMode, Rating,
    RatingsMatrix, RecommendationList, SplitSource,
};
use proptest::prelude::*;

fn scores() -> impl Strategy<Value = Vec<(u32, f64)>> {
    prop::collection::vec((1u32..=30, 1.0f64..=5.0), 0..20)
}

fn list(user: u32, s: &[(u32, f64)], n: usize) -> RecommendationList<f64> {
    RecommendationList::from_scores(user, s.iter().copied(), n).unwrap()
}

fn pair(user: u32, item: u32, value: u8, score: f64) -> ScoredPair {
    ScoredPair {
        rating: Rating::new(user, item, value),
        score,
        nhsm_score: score,
        pearson_score: score,
        nhsm_fellback: false,
        pearson_fellback: false,
        cold_user: false,
    }
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        k_folds: 3,
        seed: 7,
        predict: PredictConfig {
            k_neighbors: 4,
            ..Default::default()
        },
        n_values: vec![1, 3],
        thresholds: vec![3, 4],
        ..Default::default()
    }
}

#[test]
pub(crate) fn merge_is_idempotent_and_commutative() {
    check(256, (scores(), scores(), 1usize..=15), |(a, b, n)| {
        let (la, lb) = (list(1, &a, n), list(1, &b, n));
        prop_assert_eq!(
            merge_lists(&la, &la, n).unwrap().entries,
            la.entries.clone()
        );
        let ab = merge_lists(&la, &lb, n).unwrap();
        let ba = merge_lists(&lb, &la, n).unwrap();
        prop_assert_eq!(&ab.entries, &ba.entries);

        let mut union: Vec<u32> = la.items().chain(lb.items()).collect();
        union.sort_unstable();
        union.dedup();
        prop_assert!(ab.len() >= la.len().max(lb.len()));
        prop_assert_eq!(ab.len(), union.len().min(n));
        for w in ab.entries.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
        Ok(())
    });
}

#[test]
pub(crate) fn perfect_predictions_have_no_errors() {
    let strategy = (
        prop::collection::btree_map(1u32..=40, 1u8..=5, 1..20),
        1usize..=20,
        3u8..=4,
    );
    check(256, strategy, |(test, n, t)| {
        let pairs: Vec<(f64, u8)> = test.values().map(|&r| (r as f64, r)).collect();
        prop_assert_eq!(mae(&pairs).unwrap(), 0.0);

        let held: Vec<(u32, u8)> = test.iter().map(|(&i, &r)| (i, r)).collect();
        let scored: Vec<(u32, f64)> = held.iter().map(|&(i, r)| (i, r as f64)).collect();
        let cm = confusion_for_user(&list(1, &scored, n), &held, t);
        prop_assert_eq!(cm.b, 0);
        prop_assert_eq!(cm.c, 0);
        prop_assert_eq!(cm.total() as usize, n.min(held.len()));
        Ok(())
    });
}

#[test]
fn pooled_counts_are_the_sum_over_users() {
    let strategy = (
        prop::collection::vec((1u32..=6, 1u32..=15, 1u8..=5, 1.0f64..=5.0), 1..60),
        1usize..=8,
    );
    check(256, strategy, |(raw, n)| {
        let mut seen = std::collections::HashSet::new();
        let pairs: Vec<ScoredPair> = raw
            .into_iter()
            .filter(|&(u, i, _, _)| seen.insert((u, i)))
            .map(|(u, i, r, s)| pair(u, i, r, s))
            .collect();
        let outcome = FoldOutcome::from_pairs(0, pairs);
        for t in [3u8, 4] {
            let cell = outcome.cell(n, t, RankingMode::Cup, Averaging::Micro);
            let summed: ConfusionMatrix = (0..outcome.users.len())
                .map(|g| outcome.user_confusion(g, n, t, RankingMode::Cup))
                .sum();
            prop_assert_eq!(cell.confusion, summed);
            let m = metrics(&summed);
            prop_assert_eq!(cell.precision, m.precision);
            prop_assert_eq!(cell.recall, m.recall);
            let per_user_cap: u64 = outcome.users.iter().map(|g| g.len().min(n) as u64).sum();
            prop_assert_eq!(summed.total(), per_user_cap);
        }
        Ok(())
    });
}

#[test]
fn same_seed_same_report() {
    check(16, dense_grid(8, 8), |g| {
        let m = to_matrix(&g);
        let a = run_experiment::<f64>(&m, &small_config()).unwrap();
        let b = run_experiment::<f64>(&m, &small_config()).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
        prop_assert_eq!(a.fingerprint, b.fingerprint);
        Ok(())
    });
}

#[test]
fn two_user_experiment_runs() {
    let m = RatingsMatrix::from_ratings([
        Rating::new(1, 1, 5),
        Rating::new(1, 2, 3),
        Rating::new(1, 3, 4),
        Rating::new(2, 1, 4),
        Rating::new(2, 2, 2),
        Rating::new(2, 3, 5),
    ])
    .unwrap();
    let config = ExperimentConfig {
        k_folds: 2,
        ..small_config()
    };
    let report = run_experiment::<f64>(&m, &config).unwrap();
    assert_eq!(report.folds.len(), 2);
    assert_eq!(report.folds.iter().map(|f| f.n_test).sum::<usize>(), 6);
    for f in &report.folds {
        assert_eq!(f.n_train + f.n_test, 6);
        assert!(f.mae.is_finite() && f.mae >= 0.0 && f.mae <= 4.0);
        assert_eq!(f.cells.len(), 4);
    }
}

#[test]
fn config_changes_the_fingerprint() {
    let m = cupcf::toy_matrix();
    let a = run_experiment::<f64>(&m, &small_config()).unwrap();
    let b = run_experiment::<f64>(
        &m,
        &ExperimentConfig {
            method: Method::PearsonOnly,
            ..small_config()
        },
    )
    .unwrap();
    assert_ne!(a.fingerprint, b.fingerprint);
    assert_eq!(a.input_checksum, b.input_checksum);
}

#[test]
fn external_folds_are_labelled() {
    let m = cupcf::toy_matrix();
    let folds = kfold_split(&m, 2, 3).unwrap();
    let split = SplitSource::External {
        name: "custom".into(),
    };
    let report = run_on_folds::<f64>(&folds, split.clone(), m.checksum(), &small_config()).unwrap();
    assert_eq!(report.config.split, split);
}
