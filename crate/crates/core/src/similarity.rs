//! User–user similarity: NHSM (proximity/significance/singularity, modified
//! Jaccard, user rating preference) and Pearson correlation over co-rated
//! items, plus full symmetric similarity matrices.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{item_mean, RatingsMatrix, UserStats};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Nhsm,
    Pearson,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Nhsm => "nhsm",
            Measure::Pearson => "pearson",
        })
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nhsm" => Ok(Measure::Nhsm),
            "pearson" => Ok(Measure::Pearson),
            other => Err(Error::Config(format!(
                "unknown similarity measure '{other}'"
            ))),
        }
    }
}

/// The three sigmoid factors of one co-rated item and their product.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PssFactors<T> {
    pub proximity: T,
    pub significance: T,
    pub singularity: T,
    pub product: T,
}

/// Proximity, significance and singularity for a pair of ratings on the same
/// item with mean `mu_p`.
pub fn pss_factors<T: Scalar>(r_up: u8, r_vp: u8, r_med: T, mu_p: T) -> PssFactors<T> {
    let (ru, rv) = (T::from_rating(r_up), T::from_rating(r_vp));
    let proximity = T::one() - sigmoid((ru - rv).abs());
    let significance = sigmoid((ru - r_med).abs() * (rv - r_med).abs());
    let singularity = T::one() - sigmoid(((ru + rv) * T::half() - mu_p).abs());
    PssFactors {
        proximity,
        significance,
        singularity,
        product: proximity * significance * singularity,
    }
}

/// `|I_u ∩ I_v| / (|I_u| · |I_v|)`.
pub fn jaccard_mod<T: Scalar>(stats_u: &UserStats<T>, stats_v: &UserStats<T>) -> T {
    if stats_u.count == 0 || stats_v.count == 0 {
        return T::zero();
    }
    let common = sorted_intersection_len(&stats_u.rated, &stats_v.rated);
    T::from_count(common) / (T::from_count(stats_u.count) * T::from_count(stats_v.count))
}

/// User rating preference: `1 - sigmoid(|μ_u - μ_v| · |σ_u - σ_v|)`.
pub fn urp<T: Scalar>(stats_u: &UserStats<T>, stats_v: &UserStats<T>) -> T {
    T::one() - sigmoid((stats_u.mean - stats_v.mean).abs() * (stats_u.std - stats_v.std).abs())
}

fn sorted_intersection_len(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Merge-join over two rows sorted by item index, yielding
/// `(item index, r_u, r_v)` for co-rated items.
struct CoRated<'a> {
    a: &'a [(u32, u8)],
    b: &'a [(u32, u8)],
}

impl Iterator for CoRated<'_> {
    type Item = (u32, u8, u8);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        while let (Some(&(pa, ra)), Some(&(pb, rb))) = (self.a.first(), self.b.first()) {
            match pa.cmp(&pb) {
                std::cmp::Ordering::Less => self.a = &self.a[1..],
                std::cmp::Ordering::Greater => self.b = &self.b[1..],
                std::cmp::Ordering::Equal => {
                    self.a = &self.a[1..];
                    self.b = &self.b[1..];
                    return Some((pa, ra, rb));
                }
            }
        }
        None
    }
}

fn co_rated<'a>(a: &'a [(u32, u8)], b: &'a [(u32, u8)]) -> CoRated<'a> {
    CoRated { a, b }
}

fn nhsm_rows<T: Scalar>(
    row_u: &[(u32, u8)],
    row_v: &[(u32, u8)],
    stats_u: &UserStats<T>,
    stats_v: &UserStats<T>,
    r_med: T,
    item_mean: impl Fn(u32) -> T,
) -> T {
    let mut pss = T::zero();
    let mut common = 0usize;
    for (p, ru, rv) in co_rated(row_u, row_v) {
        pss += pss_factors(ru, rv, r_med, item_mean(p)).product;
        common += 1;
    }
    if common == 0 {
        return T::zero();
    }
    let jaccard =
        T::from_count(common) / (T::from_count(stats_u.count) * T::from_count(stats_v.count));
    pss * jaccard * urp(stats_u, stats_v)
}

fn pearson_rows<T: Scalar>(row_u: &[(u32, u8)], row_v: &[(u32, u8)], mean_u: T, mean_v: T) -> T {
    let (mut num, mut den_u, mut den_v) = (T::zero(), T::zero(), T::zero());
    for (_, ru, rv) in co_rated(row_u, row_v) {
        let du = T::from_rating(ru) - mean_u;
        let dv = T::from_rating(rv) - mean_v;
        num += du * dv;
        den_u += du * du;
        den_v += dv * dv;
    }
    if den_u == T::zero() || den_v == T::zero() {
        return T::zero();
    }
    // Cauchy–Schwarz bounds this by 1; clamp away rounding overshoot
    (num / (den_u.sqrt() * den_v.sqrt()))
        .max(-T::one())
        .min(T::one())
}

fn row_of<'m, T>(matrix: &'m RatingsMatrix, stats: &UserStats<T>) -> &'m [(u32, u8)] {
    let idx = matrix
        .user_index(stats.user)
        .unwrap_or_else(|| panic!("user {} is not in the rating matrix", stats.user));
    matrix.user_row(idx)
}

/// NHSM similarity of two users.
///
/// Item means are taken over every rater of the item in `matrix`. Users with
/// no co-rated item score 0.
pub fn nhsm_similarity<T: Scalar>(
    matrix: &RatingsMatrix,
    stats_u: &UserStats<T>,
    stats_v: &UserStats<T>,
) -> T {
    nhsm_rows(
        row_of(matrix, stats_u),
        row_of(matrix, stats_v),
        stats_u,
        stats_v,
        matrix.r_med(),
        |p| item_mean(matrix, matrix.item_id(p as usize)).expect("co-rated item has ratings"),
    )
}

/// Pearson correlation over co-rated items, centred on each user's overall
/// mean. Returns 0 when there is no co-rated item or either user's deviations
/// over the co-rated items are all zero.
pub fn pearson_similarity<T: Scalar>(
    matrix: &RatingsMatrix,
    stats_u: &UserStats<T>,
    stats_v: &UserStats<T>,
) -> T {
    pearson_rows(
        row_of(matrix, stats_u),
        row_of(matrix, stats_v),
        stats_u.mean,
        stats_v.mean,
    )
}

/// Dense symmetric user × user similarity matrix, indexed like
/// [`RatingsMatrix::users`]. The diagonal is 0: a user is never their own
/// neighbour.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix<T> {
    measure: Measure,
    users: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    /// Fills the upper triangle from `f(a, b)` with `a < b` and mirrors it.
    pub fn from_fn(
        measure: Measure,
        users: Vec<u32>,
        f: impl Fn(usize, usize) -> T + Sync,
    ) -> Self {
        let n = users.len();
        let upper: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|a| (a + 1..n).map(|b| f(a, b)).collect())
            .collect();
        let mut values = vec![T::zero(); n * n];
        for (a, row) in upper.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let b = a + 1 + off;
                values[a * n + b] = v;
                values[b * n + a] = v;
            }
        }
        SimilarityMatrix {
            measure,
            users,
            values,
        }
    }

    pub fn zeros(measure: Measure, users: Vec<u32>) -> Self {
        let n = users.len();
        SimilarityMatrix {
            measure,
            users,
            values: vec![T::zero(); n * n],
        }
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }

    pub fn index_of(&self, user: u32) -> Option<usize> {
        self.users.binary_search(&user).ok()
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.values[a * self.users.len() + b]
    }

    /// Similarities of one user to every user (self included, as 0).
    #[inline]
    pub fn row(&self, a: usize) -> &[T] {
        let n = self.users.len();
        &self.values[a * n..(a + 1) * n]
    }

    /// Similarity by user identifiers.
    pub fn value(&self, user_a: u32, user_b: u32) -> Option<T> {
        Some(self.get(self.index_of(user_a)?, self.index_of(user_b)?))
    }

    /// Every entry multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        SimilarityMatrix {
            measure: self.measure,
            users: self.users.clone(),
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    /// `(user_a, user_b, value)` for `a < b`, row-major.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (u32, u32, T)> + '_ {
        let n = self.users.len();
        (0..n).flat_map(move |a| {
            (a + 1..n).map(move |b| (self.users[a], self.users[b], self.get(a, b)))
        })
    }

    /// CSV dump of the upper triangle: `user_a,user_b,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "user_a,user_b,value")?;
        for (a, b, v) in self.upper_triangle() {
            writeln!(out, "{a},{b},{v}")?;
        }
        Ok(())
    }
}

/// Computes every pairwise similarity of `matrix` under `measure`.
pub fn build_similarity_matrix<T: Scalar>(
    matrix: &RatingsMatrix,
    measure: Measure,
) -> SimilarityMatrix<T> {
    let stats: Vec<UserStats<T>> = matrix.all_user_stats();
    build_with_stats(matrix, &stats, measure)
}

/// Same as [`build_similarity_matrix`] with precomputed user statistics
/// (indexed like `matrix.users()`).
pub fn build_with_stats<T: Scalar>(
    matrix: &RatingsMatrix,
    stats: &[UserStats<T>],
    measure: Measure,
) -> SimilarityMatrix<T> {
    let users = matrix.users().to_vec();
    match measure {
        Measure::Nhsm => {
            let means: Vec<T> = matrix.item_means();
            let r_med = matrix.r_med();
            SimilarityMatrix::from_fn(measure, users, |a, b| {
                nhsm_rows(
                    matrix.user_row(a),
                    matrix.user_row(b),
                    &stats[a],
                    &stats[b],
                    r_med,
                    |p| means[p as usize],
                )
            })
        }
        Measure::Pearson => SimilarityMatrix::from_fn(measure, users, |a, b| {
            pearson_rows(
                matrix.user_row(a),
                matrix.user_row(b),
                stats[a].mean,
                stats[b].mean,
            )
        }),
    }
}
