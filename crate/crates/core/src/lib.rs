//! User-based collaborative filtering that predicts ratings from two
//! neighbourhoods, one under the NHSM similarity and one under Pearson
//! correlation, and averages the two predictions.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which is what the CLI and the
//! evaluation harness use.
//!
//! ```
//! use cupcf::{build_similarity_matrix, cup_predict, toy_matrix, Measure, PredictConfig};
//!
//! let ratings = toy_matrix();
//! let nhsm: cupcf::SimilarityMatrix64 = build_similarity_matrix(&ratings, Measure::Nhsm);
//! let pearson = build_similarity_matrix(&ratings, Measure::Pearson);
//! let p = cup_predict(&ratings, &nhsm, &pearson, 1, 1, &PredictConfig::default()).unwrap();
//! assert!(p.value >= 1.0 && p.value <= 5.0);
//! ```

pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod prediction;
pub mod recommend;
pub mod scalar;
pub mod similarity;

pub use dataset::{
    item_mean, kfold_split, load_external_folds, load_ratings, read_ratings, toy_matrix,
    user_stats, write_ratings, FoldSplit, Format, Rating, RatingsMatrix, UserStats,
};
pub use error::{Error, Result};
pub use evaluate::{
    check_bands, confusion_for_user, mae, metrics, run_experiment, run_on_folds, Averaging,
    BandCheck, ConfusionMatrix, EvalReport, ExperimentConfig, Metrics, RankingMode, SplitSource,
};
pub use prediction::{
    cup_predict, predict_all_unrated, predict_with_measure, select_neighbors, Method, Neighbor,
    NeighborPolicy, PredictConfig, Prediction, Predictor,
};
pub use recommend::{merge_lists, top_n, RecommendationList};
pub use scalar::Scalar;
pub use similarity::{
    build_similarity_matrix, jaccard_mod, nhsm_similarity, pearson_similarity, pss_factors,
    Measure, PssFactors, SimilarityMatrix,
};

pub type UserStats64 = UserStats<f64>;
pub type SimilarityMatrix64 = SimilarityMatrix<f64>;
pub type Prediction64 = Prediction<f64>;
pub type Predictor64<'a> = Predictor<'a, f64>;
pub type RecommendationList64 = RecommendationList<f64>;
pub type PssFactors64 = PssFactors<f64>;

pub type UserStats32 = UserStats<f32>;
pub type SimilarityMatrix32 = SimilarityMatrix<f32>;
pub type Prediction32 = Prediction<f32>;
pub type Predictor32<'a> = Predictor<'a, f32>;
pub type RecommendationList32 = RecommendationList<f32>;
pub type PssFactors32 = PssFactors<f32>;
