//! Top-N lists and merging of per-measure lists.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prediction::Prediction;
use crate::scalar::Scalar;

/// Recommended items for one user, best first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecommendationList<T> {
    pub user: u32,
    /// `(item, predicted value)`, descending by value, ties by ascending item.
    pub entries: Vec<(u32, T)>,
    pub n_requested: usize,
}

fn by_score<T: Scalar>(a: &(u32, T), b: &(u32, T)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

impl<T: Scalar> RecommendationList<T> {
    /// Ranks arbitrary `(item, score)` pairs. Duplicate items keep their
    /// highest score.
    pub fn from_scores(
        user: u32,
        scores: impl IntoIterator<Item = (u32, T)>,
        n: usize,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        let mut best: HashMap<u32, T> = HashMap::new();
        for (item, score) in scores {
            best.entry(item)
                .and_modify(|s| *s = s.max(score))
                .or_insert(score);
        }
        let mut entries: Vec<(u32, T)> = best.into_iter().collect();
        entries.sort_unstable_by(by_score);
        entries.truncate(n);
        Ok(RecommendationList {
            user,
            entries,
            n_requested: n,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|&(item, _)| item)
    }

    /// CSV rows `user,rank,item,score` with 1-based rank, no header.
    pub fn write_csv_rows<W: Write>(&self, mut out: W) -> Result<()> {
        for (rank, (item, score)) in self.entries.iter().enumerate() {
            writeln!(out, "{},{},{},{}", self.user, rank + 1, item, score)?;
        }
        Ok(())
    }
}

pub const RECOMMENDATION_CSV_HEADER: &str = "user,rank,item,score";

/// The `n` highest-valued predictions of one user.
pub fn top_n<T: Scalar>(
    user: u32,
    predictions: &[Prediction<T>],
    n: usize,
) -> Result<RecommendationList<T>> {
    if let Some(p) = predictions.iter().find(|p| p.user != user) {
        return Err(Error::UserMismatch(user, p.user));
    }
    RecommendationList::from_scores(user, predictions.iter().map(|p| (p.item, p.value)), n)
}

/// Union of two lists for the same user, keeping the higher score of a
/// shared item, re-ranked and cut to `n`.
pub fn merge_lists<T: Scalar>(
    list_a: &RecommendationList<T>,
    list_b: &RecommendationList<T>,
    n: usize,
) -> Result<RecommendationList<T>> {
    if list_a.user != list_b.user {
        return Err(Error::UserMismatch(list_a.user, list_b.user));
    }
    RecommendationList::from_scores(
        list_a.user,
        list_a.entries.iter().chain(&list_b.entries).copied(),
        n,
    )
}
