//! k-nearest-neighbour rating prediction (weighted deviation from the
//! active user's mean) under each similarity measure, and the combined
//! prediction that averages the two.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{RatingsMatrix, SCALE_MAX, SCALE_MIN};
use crate::error::{Error, Result};
use crate::scalar::{mean_of, Scalar};
use crate::similarity::{Measure, SimilarityMatrix};

pub const DEFAULT_K_NEIGHBORS: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub k_neighbors: usize,
    /// Clip final predictions into the rating scale.
    pub clamp: bool,
    #[serde(default)]
    pub neighbors: NeighborPolicy,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            k_neighbors: DEFAULT_K_NEIGHBORS,
            clamp: true,
            neighbors: NeighborPolicy::default(),
        }
    }
}

/// How the neighbours contributing to one (user, item) prediction are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborPolicy {
    /// Take the user's k nearest neighbours, then keep those who rated the
    /// item.
    #[default]
    TopKThenRated,
    /// Among the users who rated the item, take the k nearest.
    RatedThenTopK,
}

impl FromStr for NeighborPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "top-k-then-rated" | "topk-first" => Ok(NeighborPolicy::TopKThenRated),
            "rated-then-top-k" | "rated-first" => Ok(NeighborPolicy::RatedThenTopK),
            other => Err(Error::Config(format!("unknown neighbour policy '{other}'"))),
        }
    }
}

impl PredictConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which prediction is used as the score of an item.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Mean of the NHSM and Pearson predictions.
    #[default]
    Cupcf,
    NhsmOnly,
    PearsonOnly,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cupcf => "CUPCF",
            Method::NhsmOnly => "NHSM",
            Method::PearsonOnly => "Pearson",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cupcf" | "cup" | "combined" => Ok(Method::Cupcf),
            "nhsm-only" | "nhsm" => Ok(Method::NhsmOnly),
            "pearson-only" | "pearson" => Ok(Method::PearsonOnly),
            other => Err(Error::Config(format!(
                "unknown prediction method '{other}'"
            ))),
        }
    }
}

/// A neighbour of the active user with its raw similarity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Neighbor<T> {
    pub user: u32,
    pub similarity: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction<T> {
    pub user: u32,
    pub item: u32,
    /// Mean of the two components, clipped to the scale when clamping is on.
    pub value: T,
    pub nhsm_component: T,
    pub pearson_component: T,
    pub nhsm_fellback: bool,
    pub pearson_fellback: bool,
}

impl<T: Scalar> Prediction<T> {
    fn combine(user: u32, item: u32, nhsm: (T, bool), pearson: (T, bool), clamp: bool) -> Self {
        let value = clamp_if((nhsm.0 + pearson.0) * T::half(), clamp);
        Prediction {
            user,
            item,
            value,
            nhsm_component: nhsm.0,
            pearson_component: pearson.0,
            nhsm_fellback: nhsm.1,
            pearson_fellback: pearson.1,
        }
    }

    /// Combined value before clipping.
    pub fn unclamped(&self) -> T {
        (self.nhsm_component + self.pearson_component) * T::half()
    }

    /// Score under `method`; single-measure scores are clipped like the
    /// combined one.
    pub fn score(&self, method: Method, clamp: bool) -> T {
        match method {
            Method::Cupcf => self.value,
            Method::NhsmOnly => clamp_if(self.nhsm_component, clamp),
            Method::PearsonOnly => clamp_if(self.pearson_component, clamp),
        }
    }

    pub fn component(&self, measure: Measure) -> T {
        match measure {
            Measure::Nhsm => self.nhsm_component,
            Measure::Pearson => self.pearson_component,
        }
    }
}

fn clamp_if<T: Scalar>(v: T, clamp: bool) -> T {
    if clamp {
        v.max(T::from_rating(SCALE_MIN))
            .min(T::from_rating(SCALE_MAX))
    } else {
        v
    }
}

// descending similarity, ascending index on ties
fn by_similarity<T: Scalar>(a: &(usize, T), b: &(usize, T)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

fn top_k_at<T: Scalar>(sim: &SimilarityMatrix<T>, user: usize, k: usize) -> Vec<(usize, T)> {
    let candidates: Vec<(usize, T)> = sim
        .row(user)
        .iter()
        .copied()
        .enumerate()
        .filter(|&(v, _)| v != user)
        .collect();
    top_k(candidates, k)
}

fn top_k<T: Scalar>(mut candidates: Vec<(usize, T)>, k: usize) -> Vec<(usize, T)> {
    if k == 0 {
        return Vec::new();
    }
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, by_similarity);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(by_similarity);
    candidates
}

/// The `k` users most similar to `user` (raw similarity, descending; ties by
/// ascending user id), excluding the user. Empty for an unknown user.
pub fn select_neighbors<T: Scalar>(
    sim: &SimilarityMatrix<T>,
    user: u32,
    k: usize,
) -> Vec<Neighbor<T>> {
    let Some(idx) = sim.index_of(user) else {
        return Vec::new();
    };
    top_k_at(sim, idx, k)
        .into_iter()
        .map(|(v, s)| Neighbor {
            user: sim.users()[v],
            similarity: s,
        })
        .collect()
}

/// `μ_u + Σ (r_v,p − μ_v)·s / Σ |s|` over the neighbours that rated the item
/// with non-zero similarity; `(μ_u, true)` when there are none.
fn deviation_from_mean<T: Scalar>(
    matrix: &RatingsMatrix,
    user_means: &[T],
    neighbors: &[(usize, T)],
    user: usize,
    item: Option<usize>,
) -> (T, bool) {
    let mean_u = user_means[user];
    let Some(p) = item else {
        return (mean_u, true);
    };
    let (mut num, mut den) = (T::zero(), T::zero());
    for &(v, s) in neighbors {
        if s == T::zero() {
            continue;
        }
        if let Some(r) = matrix.rating_at(v, p) {
            num += (T::from_rating(r) - user_means[v]) * s;
            den += s.abs();
        }
    }
    if den == T::zero() {
        (mean_u, true)
    } else {
        (mean_u + num / den, false)
    }
}

/// The `k` nearest raters of item `p`.
fn nearest_raters<T: Scalar>(
    matrix: &RatingsMatrix,
    sim: &SimilarityMatrix<T>,
    user: usize,
    p: usize,
    k: usize,
) -> Vec<(usize, T)> {
    let raters = matrix
        .item_column(p)
        .iter()
        .map(|&(v, _)| v as usize)
        .filter(|&v| v != user)
        .map(|v| (v, sim.get(user, v)))
        .collect();
    top_k(raters, k)
}

fn check_aligned<T: Scalar>(matrix: &RatingsMatrix, sim: &SimilarityMatrix<T>) -> Result<()> {
    if sim.users() != matrix.users() {
        return Err(Error::Config(
            "similarity matrix was not built from this rating matrix".into(),
        ));
    }
    Ok(())
}

fn user_means<T: Scalar>(matrix: &RatingsMatrix) -> Vec<T> {
    (0..matrix.n_users())
        .map(|u| {
            mean_of(matrix.user_row(u).iter().map(|&(_, r)| r)).expect("stored user has ratings")
        })
        .collect()
}

/// Prediction for one (user, item) under a single similarity matrix.
/// Returns the value and whether it fell back to the user's mean.
pub fn predict_with_measure<T: Scalar>(
    matrix: &RatingsMatrix,
    sim: &SimilarityMatrix<T>,
    user: u32,
    item: u32,
    config: &PredictConfig,
) -> Result<(T, bool)> {
    config.validate()?;
    check_aligned(matrix, sim)?;
    let u = matrix.user_index(user).ok_or(Error::ColdUser(user))?;
    let means = user_means(matrix);
    let p = matrix.item_index(item);
    let neighbors = match (config.neighbors, p) {
        (NeighborPolicy::RatedThenTopK, Some(p)) => {
            nearest_raters(matrix, sim, u, p, config.k_neighbors)
        }
        (NeighborPolicy::RatedThenTopK, None) => Vec::new(),
        (NeighborPolicy::TopKThenRated, _) => top_k_at(sim, u, config.k_neighbors),
    };
    Ok(deviation_from_mean(matrix, &means, &neighbors, u, p))
}

/// Mean of the NHSM and Pearson predictions for one (user, item).
pub fn cup_predict<T: Scalar>(
    matrix: &RatingsMatrix,
    nhsm_sim: &SimilarityMatrix<T>,
    pearson_sim: &SimilarityMatrix<T>,
    user: u32,
    item: u32,
    config: &PredictConfig,
) -> Result<Prediction<T>> {
    Predictor::for_users(matrix, nhsm_sim, pearson_sim, *config, &[user])?.predict(user, item)
}

/// Combined predictions for every item of `matrix` the user has not rated,
/// ascending by item id.
pub fn predict_all_unrated<T: Scalar>(
    matrix: &RatingsMatrix,
    nhsm_sim: &SimilarityMatrix<T>,
    pearson_sim: &SimilarityMatrix<T>,
    user: u32,
    config: &PredictConfig,
) -> Result<Vec<Prediction<T>>> {
    Predictor::for_users(matrix, nhsm_sim, pearson_sim, *config, &[user])?.predict_all_unrated(user)
}

/// Prediction state for one training matrix: user means, the global mean
/// and each user's top-k neighbour list under both measures.
pub struct Predictor<'a, T> {
    matrix: &'a RatingsMatrix,
    nhsm_sim: &'a SimilarityMatrix<T>,
    pearson_sim: &'a SimilarityMatrix<T>,
    config: PredictConfig,
    user_means: Vec<T>,
    global_mean: T,
    nhsm_neighbors: Vec<Vec<(usize, T)>>,
    pearson_neighbors: Vec<Vec<(usize, T)>>,
}

impl<'a, T: Scalar> Predictor<'a, T> {
    /// Precomputes neighbour lists for every user in `matrix`.
    pub fn new(
        matrix: &'a RatingsMatrix,
        nhsm_sim: &'a SimilarityMatrix<T>,
        pearson_sim: &'a SimilarityMatrix<T>,
        config: PredictConfig,
    ) -> Result<Self> {
        Self::for_users(matrix, nhsm_sim, pearson_sim, config, matrix.users())
    }

    /// Like [`new`](Self::new), but only the listed users get neighbour
    /// lists; users absent from `matrix` are ignored.
    pub fn for_users(
        matrix: &'a RatingsMatrix,
        nhsm_sim: &'a SimilarityMatrix<T>,
        pearson_sim: &'a SimilarityMatrix<T>,
        config: PredictConfig,
        users: &[u32],
    ) -> Result<Self> {
        config.validate()?;
        check_aligned(matrix, nhsm_sim)?;
        check_aligned(matrix, pearson_sim)?;
        let n = matrix.n_users();
        let wanted: Vec<usize> = match config.neighbors {
            NeighborPolicy::TopKThenRated => {
                users.iter().filter_map(|&u| matrix.user_index(u)).collect()
            }
            // chosen per item at prediction time
            NeighborPolicy::RatedThenTopK => Vec::new(),
        };
        let lists = |sim: &SimilarityMatrix<T>| {
            let mut out = vec![Vec::new(); n];
            let computed: Vec<(usize, Vec<(usize, T)>)> = wanted
                .par_iter()
                .map(|&u| (u, top_k_at(sim, u, config.k_neighbors)))
                .collect();
            for (u, list) in computed {
                out[u] = list;
            }
            out
        };
        Ok(Predictor {
            matrix,
            nhsm_sim,
            pearson_sim,
            config,
            user_means: user_means(matrix),
            global_mean: matrix.global_mean().unwrap_or_else(|| {
                (T::from_rating(SCALE_MIN) + T::from_rating(SCALE_MAX)) * T::half()
            }),
            nhsm_neighbors: lists(nhsm_sim),
            pearson_neighbors: lists(pearson_sim),
        })
    }

    pub fn config(&self) -> &PredictConfig {
        &self.config
    }

    pub fn matrix(&self) -> &RatingsMatrix {
        self.matrix
    }

    /// Mean of every training rating; the value used for users unseen in
    /// training.
    pub fn global_mean(&self) -> T {
        self.global_mean
    }

    fn component(
        &self,
        sim: &SimilarityMatrix<T>,
        lists: &[Vec<(usize, T)>],
        u: usize,
        p: Option<usize>,
    ) -> (T, bool) {
        match (self.config.neighbors, p) {
            (NeighborPolicy::TopKThenRated, _) => {
                deviation_from_mean(self.matrix, &self.user_means, &lists[u], u, p)
            }
            (NeighborPolicy::RatedThenTopK, Some(q)) => {
                let near = nearest_raters(self.matrix, sim, u, q, self.config.k_neighbors);
                deviation_from_mean(self.matrix, &self.user_means, &near, u, p)
            }
            (NeighborPolicy::RatedThenTopK, None) => (self.user_means[u], true),
        }
    }

    fn at(&self, u: usize, item: u32) -> Prediction<T> {
        let p = self.matrix.item_index(item);
        let nhsm = self.component(self.nhsm_sim, &self.nhsm_neighbors, u, p);
        let pearson = self.component(self.pearson_sim, &self.pearson_neighbors, u, p);
        Prediction::combine(
            self.matrix.user_id(u),
            item,
            nhsm,
            pearson,
            self.config.clamp,
        )
    }

    /// Combined prediction; errors for a user with no training ratings.
    pub fn predict(&self, user: u32, item: u32) -> Result<Prediction<T>> {
        let u = self.matrix.user_index(user).ok_or(Error::ColdUser(user))?;
        Ok(self.at(u, item))
    }

    /// Like [`predict`](Self::predict), but a cold user gets the global
    /// training mean with both fallback flags set.
    pub fn predict_or_fallback(&self, user: u32, item: u32) -> Prediction<T> {
        self.predict(user, item).unwrap_or_else(|_| {
            let g = (self.global_mean, true);
            Prediction::combine(user, item, g, g, self.config.clamp)
        })
    }

    pub fn predict_all_unrated(&self, user: u32) -> Result<Vec<Prediction<T>>> {
        let u = self.matrix.user_index(user).ok_or(Error::ColdUser(user))?;
        let row = self.matrix.user_row(u);
        Ok((0..self.matrix.n_items())
            .filter(|&p| row.binary_search_by_key(&(p as u32), |&(q, _)| q).is_err())
            .map(|p| self.at(u, self.matrix.item_id(p)))
            .collect())
    }
}
