#[path = "common/mod.rs"]
mod common;

use common::{check, dense_grid, mean, naive_predict, to_matrix};
use cupcf::{
    build_similarity_matrix, cup_predict, predict_with_measure, select_neighbors, Measure,
    NeighborPolicy, PredictConfig, Predictor, SimilarityMatrix64,
};
use proptest::prelude::*;

fn config(k: usize) -> PredictConfig {
    PredictConfig {
        k_neighbors: k,
        ..Default::default()
    }
}

// Similarity values have their own oracle; here the kernel is checked given
// them, since exact ties between neighbours make the cut-off sensitive to the
// last bit.
#[test]
pub(crate) fn single_measure_matches_oracle() {
    let strategy = (2usize..=8, 2usize..=8).prop_flat_map(|(n, m)| (dense_grid(n, m), 1..=n));
    check(100, strategy, |(g, k)| {
        let (n, m) = (g.len(), g[0].len());
        let mat = to_matrix(&g);
        let nhsm: SimilarityMatrix64 = build_similarity_matrix(&mat, Measure::Nhsm);
        let pearson: SimilarityMatrix64 = build_similarity_matrix(&mat, Measure::Pearson);
        for u in 0..n {
            for p in 0..m {
                let (user, item) = (u as u32 + 1, p as u32 + 1);
                for sim in [&nhsm, &pearson] {
                    let got = predict_with_measure(&mat, sim, user, item, &config(k)).unwrap();
                    let want = naive_predict(&g, |a, b| sim.get(a, b), u, p, k);
                    prop_assert_eq!(got.1, want.1);
                    prop_assert!((got.0 - want.0).abs() <= 1e-9);
                }
            }
        }
        Ok(())
    });
}

#[test]
pub(crate) fn combination_identity_betweenness_and_clamping() {
    check(100, (dense_grid(6, 7), 1usize..=6), |(g, k)| {
        let mat = to_matrix(&g);
        let nhsm: SimilarityMatrix64 = build_similarity_matrix(&mat, Measure::Nhsm);
        let pearson: SimilarityMatrix64 = build_similarity_matrix(&mat, Measure::Pearson);
        let clamped = Predictor::new(&mat, &nhsm, &pearson, config(k)).unwrap();
        let raw_config = PredictConfig {
            clamp: false,
            ..config(k)
        };
        let raw = Predictor::new(&mat, &nhsm, &pearson, raw_config).unwrap();
        for user in 1..=6u32 {
            for item in 1..=7u32 {
                let c = clamped.predict(user, item).unwrap();
                let r = raw.predict(user, item).unwrap();
                let avg = (r.nhsm_component + r.pearson_component) / 2.0;
                prop_assert_eq!(r.value, avg);
                prop_assert_eq!(c.value, avg.clamp(1.0, 5.0));
                let lo = r.nhsm_component.min(r.pearson_component);
                let hi = r.nhsm_component.max(r.pearson_component);
                prop_assert!(lo <= r.value && r.value <= hi);
                prop_assert!((1.0..=5.0).contains(&c.value));
                prop_assert_eq!(c.nhsm_component, r.nhsm_component);
            }
        }
        Ok(())
    });
}

#[test]
pub(crate) fn zero_similarity_falls_back_to_user_mean_exactly() {
    check(100, dense_grid(5, 6), |g| {
        let mat = to_matrix(&g);
        let zero = SimilarityMatrix64::zeros(Measure::Nhsm, mat.users().to_vec());
        for (u, row) in g.iter().enumerate() {
            let mu = mean(row);
            for item in 1..=6u32 {
                let p = cup_predict(&mat, &zero, &zero, u as u32 + 1, item, &config(300)).unwrap();
                prop_assert!(p.nhsm_fellback && p.pearson_fellback);
                prop_assert_eq!(p.nhsm_component, mu);
                prop_assert_eq!(p.pearson_component, mu);
                prop_assert_eq!(p.value, mu);
            }
        }
        Ok(())
    });
}

#[test]
pub(crate) fn positive_scaling_keeps_neighbours_and_predictions() {
    // powers of two scale without rounding, so ties stay ties
    check(
        100,
        (dense_grid(7, 7), -8i32..=8, 1usize..=6),
        |(g, e, k)| {
            let c = 2f64.powi(e);
            let mat = to_matrix(&g);
            for measure in [Measure::Nhsm, Measure::Pearson] {
                let s: SimilarityMatrix64 = build_similarity_matrix(&mat, measure);
                let scaled = s.scaled(c);
                for user in 1..=7u32 {
                    let a: Vec<u32> = select_neighbors(&s, user, k)
                        .iter()
                        .map(|n| n.user)
                        .collect();
                    let b: Vec<u32> = select_neighbors(&scaled, user, k)
                        .iter()
                        .map(|n| n.user)
                        .collect();
                    prop_assert_eq!(a, b);
                    for item in 1..=7u32 {
                        let x = predict_with_measure(&mat, &s, user, item, &config(k)).unwrap();
                        let y =
                            predict_with_measure(&mat, &scaled, user, item, &config(k)).unwrap();
                        prop_assert_eq!(x.1, y.1);
                        prop_assert!((x.0 - y.0).abs() <= 1e-12);
                    }
                }
            }
            Ok(())
        },
    );
}

#[test]
fn scaling_by_any_positive_factor_on_the_toy_data() {
    let mat = cupcf::toy_matrix();
    let s: SimilarityMatrix64 = build_similarity_matrix(&mat, Measure::Pearson);
    for c in [0.3, 1.7, 42.0] {
        let scaled = s.scaled(c);
        for user in 1..=5 {
            for item in 1..=5 {
                let x = predict_with_measure(&mat, &s, user, item, &config(3)).unwrap();
                let y = predict_with_measure(&mat, &scaled, user, item, &config(3)).unwrap();
                assert_eq!(x.1, y.1);
                assert!((x.0 - y.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn policies_agree_when_k_covers_everyone() {
    check(64, dense_grid(6, 6), |g| {
        let mat = to_matrix(&g);
        let s: SimilarityMatrix64 = build_similarity_matrix(&mat, Measure::Pearson);
        let rated_first = PredictConfig {
            neighbors: NeighborPolicy::RatedThenTopK,
            ..config(10)
        };
        for user in 1..=6u32 {
            for item in 1..=6u32 {
                let a = predict_with_measure(&mat, &s, user, item, &config(10)).unwrap();
                let b = predict_with_measure(&mat, &s, user, item, &rated_first).unwrap();
                prop_assert_eq!(a.1, b.1);
                prop_assert!((a.0 - b.0).abs() <= 1e-12);
            }
        }
        Ok(())
    });
}

#[test]
fn predictor_is_deterministic() {
    let mat = cupcf::toy_matrix();
    let nhsm: SimilarityMatrix64 = build_similarity_matrix(&mat, Measure::Nhsm);
    let pearson: SimilarityMatrix64 = build_similarity_matrix(&mat, Measure::Pearson);
    let a = Predictor::new(&mat, &nhsm, &pearson, config(2)).unwrap();
    let b = Predictor::new(&mat, &nhsm, &pearson, config(2)).unwrap();
    for user in 1..=5 {
        assert_eq!(
            a.predict_all_unrated(user).unwrap(),
            b.predict_all_unrated(user).unwrap()
        );
    }
}
