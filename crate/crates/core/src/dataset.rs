//! Rating ingestion, the sparse user × item matrix, per-user / per-item
//! statistics and k-fold splitting.
//!
//! User and item identifiers are the integers found in the input. Internally
//! both are mapped to dense indices assigned in ascending identifier order, so
//! "lower index" and "lower identifier" are interchangeable everywhere.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{mean_of, Scalar};

pub const SCALE_MIN: u8 = 1;
pub const SCALE_MAX: u8 = 5;

/// Header expected on the first line of CSV input.
pub const CSV_HEADER: &str = "user,item,rating";

/// A single explicit rating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub value: u8,
}

impl Rating {
    pub fn new(user: u32, item: u32, value: u8) -> Self {
        Rating { user, item, value }
    }
}

/// On-disk layout of a ratings file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// `user \t item \t rating \t timestamp`, as in MovieLens `u.data`.
    #[default]
    MovielensTab,
    /// `user,item,rating` header followed by integer records.
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "movielens" | "movielens_tab" | "movielens-tab" | "tab" => Ok(Format::MovielensTab),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown ratings format '{other}'"))),
        }
    }
}

/// Sparse user × item matrix of integer ratings on the 1..=5 scale.
///
/// Immutable once built. Rows (per user) and columns (per item) are both
/// kept, each sorted by the dense index of the other axis.
#[derive(Clone, Debug)]
pub struct RatingsMatrix {
    users: Vec<u32>,
    items: Vec<u32>,
    user_index: HashMap<u32, usize>,
    item_index: HashMap<u32, usize>,
    by_user: Vec<Vec<(u32, u8)>>,
    by_item: Vec<Vec<(u32, u8)>>,
    len: usize,
    scale_min: u8,
    scale_max: u8,
}

impl RatingsMatrix {
    /// Builds a matrix from ratings. Record positions (1-based) are used as
    /// line numbers in error messages.
    pub fn from_ratings(ratings: impl IntoIterator<Item = Rating>) -> Result<Self> {
        let records = ratings
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r))
            .collect();
        Self::build(records)
    }

    pub fn empty() -> Self {
        Self::build(Vec::new()).expect("empty matrix is always valid")
    }

    fn build(mut records: Vec<(usize, Rating)>) -> Result<Self> {
        for (line, r) in &records {
            if !(SCALE_MIN..=SCALE_MAX).contains(&r.value) {
                return Err(Error::Range {
                    line: *line,
                    value: r.value as i64,
                    min: SCALE_MIN,
                    max: SCALE_MAX,
                });
            }
        }
        // stable, so the later of two duplicate records is the one reported
        records.sort_by_key(|(_, r)| (r.user, r.item));
        for w in records.windows(2) {
            let (a, b) = (&w[0].1, &w[1].1);
            if a.user == b.user && a.item == b.item {
                return Err(Error::Duplicate {
                    line: w[0].0.max(w[1].0),
                    user: b.user,
                    item: b.item,
                });
            }
        }

        let mut users: Vec<u32> = records.iter().map(|(_, r)| r.user).collect();
        users.dedup();
        let mut items: Vec<u32> = records.iter().map(|(_, r)| r.item).collect();
        items.sort_unstable();
        items.dedup();

        let user_index: HashMap<u32, usize> =
            users.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let item_index: HashMap<u32, usize> =
            items.iter().enumerate().map(|(i, &p)| (p, i)).collect();

        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        // records are sorted by (user, item), so both axes come out sorted
        for (_, r) in &records {
            let u = user_index[&r.user];
            let p = item_index[&r.item];
            by_user[u].push((p as u32, r.value));
            by_item[p].push((u as u32, r.value));
        }

        Ok(RatingsMatrix {
            users,
            items,
            user_index,
            item_index,
            by_user,
            by_item,
            len: records.len(),
            scale_min: SCALE_MIN,
            scale_max: SCALE_MAX,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Number of stored ratings.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// User identifiers in ascending order.
    pub fn users(&self) -> &[u32] {
        &self.users
    }

    /// Item identifiers in ascending order.
    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn user_index(&self, user: u32) -> Option<usize> {
        self.user_index.get(&user).copied()
    }

    pub fn item_index(&self, item: u32) -> Option<usize> {
        self.item_index.get(&item).copied()
    }

    pub fn user_id(&self, index: usize) -> u32 {
        self.users[index]
    }

    pub fn item_id(&self, index: usize) -> u32 {
        self.items[index]
    }

    /// `(item index, rating)` pairs of one user, ascending by item.
    pub fn user_row(&self, user_index: usize) -> &[(u32, u8)] {
        &self.by_user[user_index]
    }

    /// `(user index, rating)` pairs of one item, ascending by user.
    pub fn item_column(&self, item_index: usize) -> &[(u32, u8)] {
        &self.by_item[item_index]
    }

    /// Rating by dense indices.
    #[inline]
    pub fn rating_at(&self, user_index: usize, item_index: usize) -> Option<u8> {
        let row = &self.by_user[user_index];
        row.binary_search_by_key(&(item_index as u32), |&(p, _)| p)
            .ok()
            .map(|pos| row[pos].1)
    }

    /// Rating by external identifiers.
    pub fn get(&self, user: u32, item: u32) -> Option<u8> {
        self.rating_at(self.user_index(user)?, self.item_index(item)?)
    }

    /// All ratings, ascending by (user, item).
    pub fn iter(&self) -> impl Iterator<Item = Rating> + '_ {
        self.by_user.iter().enumerate().flat_map(move |(u, row)| {
            row.iter()
                .map(move |&(p, value)| Rating::new(self.users[u], self.items[p as usize], value))
        })
    }

    pub fn scale_min(&self) -> u8 {
        self.scale_min
    }

    pub fn scale_max(&self) -> u8 {
        self.scale_max
    }

    /// Midpoint of the rating scale.
    pub fn r_med<T: Scalar>(&self) -> T {
        (T::from_rating(self.scale_min) + T::from_rating(self.scale_max)) * T::half()
    }

    /// `ratings / (users × items)`, 0 for an empty matrix.
    pub fn density(&self) -> f64 {
        let cells = self.n_users() as f64 * self.n_items() as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.len as f64 / cells
        }
    }

    /// Mean over every stored rating.
    pub fn global_mean<T: Scalar>(&self) -> Option<T> {
        mean_of(self.iter().map(|r| r.value))
    }

    /// SHA-256 over the canonical `(user, item, rating)` sequence.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for r in self.iter() {
            hasher.update(r.user.to_le_bytes());
            hasher.update(r.item.to_le_bytes());
            hasher.update([r.value]);
        }
        hex::encode(hasher.finalize())
    }

    /// Statistics of the user at a dense index.
    pub fn user_stats_at<T: Scalar>(&self, user_index: usize) -> Result<UserStats<T>> {
        let row = &self.by_user[user_index];
        let user = self.users[user_index];
        let mean: T = mean_of(row.iter().map(|&(_, r)| r))
            .ok_or_else(|| Error::NoData(format!("user {user} has no ratings")))?;
        let n = T::from_count(row.len());
        let var = row
            .iter()
            .map(|&(_, r)| {
                let d = T::from_rating(r) - mean;
                d * d
            })
            .sum::<T>()
            / n;
        Ok(UserStats {
            user,
            mean,
            std: var.sqrt(),
            rated: row.iter().map(|&(p, _)| self.items[p as usize]).collect(),
            count: row.len(),
        })
    }

    /// Statistics for every user, indexed like [`users`](Self::users).
    pub fn all_user_stats<T: Scalar>(&self) -> Vec<UserStats<T>> {
        (0..self.n_users())
            .map(|u| {
                self.user_stats_at(u)
                    .expect("every stored user has a rating")
            })
            .collect()
    }

    /// Item means indexed like [`items`](Self::items).
    pub fn item_means<T: Scalar>(&self) -> Vec<T> {
        self.by_item
            .iter()
            .map(|col| {
                mean_of(col.iter().map(|&(_, r)| r)).expect("every stored item has a rating")
            })
            .collect()
    }
}

/// Mean, population standard deviation and rated set of one user.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UserStats<T> {
    pub user: u32,
    pub mean: T,
    /// `sqrt(Σ (r - mean)² / |I_u|)`
    pub std: T,
    /// Rated item identifiers, ascending.
    pub rated: Vec<u32>,
    pub count: usize,
}

pub fn user_stats<T: Scalar>(matrix: &RatingsMatrix, user: u32) -> Result<UserStats<T>> {
    let idx = matrix
        .user_index(user)
        .ok_or_else(|| Error::NoData(format!("unknown user {user}")))?;
    matrix.user_stats_at(idx)
}

/// Mean rating of one item over every user who rated it.
pub fn item_mean<T: Scalar>(matrix: &RatingsMatrix, item: u32) -> Result<T> {
    matrix
        .item_index(item)
        .and_then(|p| mean_of(matrix.item_column(p).iter().map(|&(_, r)| r)))
        .ok_or_else(|| Error::NoData(format!("item {item} has no ratings")))
}

/// Parses ratings from a reader.
pub fn read_ratings<R: BufRead>(reader: R, format: Format) -> Result<RatingsMatrix> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if format == Format::Csv && line_no == 1 {
            let header = line.trim();
            if header != CSV_HEADER && header != "user,item,rating,timestamp" {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header '{CSV_HEADER}', found '{header}'"),
                });
            }
            continue;
        }
        records.push((line_no, parse_record(line, format, line_no)?));
    }
    RatingsMatrix::build(records)
}

fn parse_record(line: &str, format: Format, line_no: usize) -> Result<Rating> {
    let sep = match format {
        Format::MovielensTab => '\t',
        Format::Csv => ',',
    };
    let fields: Vec<&str> = line.split(sep).collect();
    if fields.len() != 3 && fields.len() != 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected 3 or 4 fields, found {}", fields.len()),
        });
    }
    let int = |s: &str, what: &str| -> Result<i64> {
        s.trim().parse::<i64>().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("{what} '{s}' is not an integer"),
        })
    };
    let user = int(fields[0], "user id")?;
    let item = int(fields[1], "item id")?;
    let value = int(fields[2], "rating")?;
    if let Some(ts) = fields.get(3) {
        int(ts, "timestamp")?;
    }
    let id = |v: i64, what: &str| -> Result<u32> {
        u32::try_from(v).map_err(|_| Error::Parse {
            line: line_no,
            message: format!("{what} {v} out of range"),
        })
    };
    if !(SCALE_MIN as i64..=SCALE_MAX as i64).contains(&value) {
        return Err(Error::Range {
            line: line_no,
            value,
            min: SCALE_MIN,
            max: SCALE_MAX,
        });
    }
    Ok(Rating::new(
        id(user, "user id")?,
        id(item, "item id")?,
        value as u8,
    ))
}

/// Loads a ratings file.
pub fn load_ratings(path: impl AsRef<Path>, format: Format) -> Result<RatingsMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_ratings(BufReader::new(file), format)
}

/// Writes ratings in the given format. MovieLens output carries a zero
/// timestamp column.
pub fn write_ratings<W: Write>(
    mut out: W,
    ratings: impl IntoIterator<Item = Rating>,
    format: Format,
) -> Result<()> {
    if format == Format::Csv {
        writeln!(out, "{CSV_HEADER}")?;
    }
    for r in ratings {
        match format {
            Format::MovielensTab => writeln!(out, "{}\t{}\t{}\t0", r.user, r.item, r.value)?,
            Format::Csv => writeln!(out, "{},{},{}", r.user, r.item, r.value)?,
        }
    }
    Ok(())
}

/// One train/test partition.
#[derive(Clone, Debug)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train: RatingsMatrix,
    /// Held-out ratings, ascending by (user, item).
    pub test: Vec<Rating>,
}

/// Shuffles all ratings with a ChaCha8 stream seeded by `seed`, cuts the
/// shuffled sequence into `k` contiguous groups whose sizes differ by at most
/// one, and uses group `i` as the test set of fold `i`.
pub fn kfold_split(matrix: &RatingsMatrix, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if matrix.is_empty() {
        return Err(Error::NoData("cannot split an empty matrix".into()));
    }
    let n = matrix.len();
    if k > n {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {n} available ratings"
        )));
    }

    let all: Vec<Rating> = matrix.iter().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut group = vec![0usize; n];
    for g in 0..k {
        for &idx in &order[g * n / k..(g + 1) * n / k] {
            group[idx] = g;
        }
    }

    (0..k)
        .map(|g| {
            let mut test = Vec::with_capacity(n / k + 1);
            let mut train = Vec::with_capacity(n - n / k);
            for (r, &rg) in all.iter().zip(&group) {
                if rg == g {
                    test.push(*r);
                } else {
                    train.push(*r);
                }
            }
            Ok(FoldSplit {
                fold_index: g,
                train: RatingsMatrix::from_ratings(train)?,
                test,
            })
        })
        .collect()
}

/// Loads pre-built folds named `u1.base`/`u1.test`, `u2.base`/`u2.test`, …
/// (the layout shipped with MovieLens 100K) from `dir`, stopping at the first
/// missing pair.
pub fn load_external_folds(dir: impl AsRef<Path>, format: Format) -> Result<Vec<FoldSplit>> {
    let dir = dir.as_ref();
    let mut folds = Vec::new();
    for i in 1.. {
        let base = dir.join(format!("u{i}.base"));
        let test = dir.join(format!("u{i}.test"));
        if !base.exists() || !test.exists() {
            break;
        }
        let train = load_ratings(&base, format)?;
        let test: Vec<Rating> = load_ratings(&test, format)?.iter().collect();
        if let Some(r) = test.iter().find(|r| train.get(r.user, r.item).is_some()) {
            return Err(Error::Config(format!(
                "fold {i}: pair ({}, {}) is in both train and test",
                r.user, r.item
            )));
        }
        folds.push(FoldSplit {
            fold_index: i - 1,
            train,
            test,
        });
    }
    if folds.is_empty() {
        return Err(Error::NoData(format!(
            "no u1.base/u1.test pair found in {}",
            dir.display()
        )));
    }
    Ok(folds)
}

/// The rating matrix used throughout the worked examples: five users, four
/// items.
///
/// ```text
///      i1 i2 i3 i4
/// u1    ?  5  4  3
/// u2    4  4  ?  2
/// u3    ?  ?  1  4
/// u4    5  2  4  4
/// u5    1  ?  3  ?
/// ```
pub fn toy_matrix() -> RatingsMatrix {
    let rows: [[u8; 4]; 5] = [
        [0, 5, 4, 3],
        [4, 4, 0, 2],
        [0, 0, 1, 4],
        [5, 2, 4, 4],
        [1, 0, 3, 0],
    ];
    let ratings = rows.iter().enumerate().flat_map(|(u, row)| {
        row.iter()
            .enumerate()
            .filter(|(_, &r)| r > 0)
            .map(move |(p, &r)| Rating::new(u as u32 + 1, p as u32 + 1, r))
    });
    RatingsMatrix::from_ratings(ratings).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, format: Format) -> Result<RatingsMatrix> {
        read_ratings(text.as_bytes(), format)
    }

    #[test]
    fn movielens_header_rows() {
        let m = parse(
            "196\t242\t3\t881250949\n186\t302\t3\t891717742\n",
            Format::MovielensTab,
        )
        .unwrap();
        assert_eq!((m.n_users(), m.n_items(), m.len()), (2, 2, 2));
        assert!(m.iter().all(|r| r.value == 3));
        assert_eq!(m.get(196, 242), Some(3));
        assert_eq!(m.get(196, 302), None);
    }

    #[test]
    fn empty_input() {
        let m = parse("", Format::MovielensTab).unwrap();
        assert_eq!((m.n_users(), m.n_items(), m.len()), (0, 0, 0));
        assert_eq!(m.density(), 0.0);
    }

    #[test]
    fn out_of_range_rating() {
        match parse("1\t1\t9\t0\n", Format::MovielensTab) {
            Err(Error::Range {
                line: 1, value: 9, ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        match parse("1\t1\t3\t0\n1\t2\n", Format::MovielensTab) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse("1\t1\t3\t0\n1\tx\t3\t0\n", Format::MovielensTab) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_pair() {
        match parse("1\t1\t3\t0\n2\t1\t3\t0\n1\t1\t4\t0\n", Format::MovielensTab) {
            Err(Error::Duplicate {
                line: 3,
                user: 1,
                item: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_requires_header() {
        let m = parse("user,item,rating\n1,2,5\n3,2,1\n", Format::Csv).unwrap();
        assert_eq!(m.len(), 2);
        assert!(matches!(
            parse("1,2,5\n", Format::Csv),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn toy_user_stats() {
        let m = toy_matrix();
        let s1: UserStats<f64> = user_stats(&m, 1).unwrap();
        assert_eq!(s1.mean, 4.0);
        assert!((s1.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(s1.count, 3);
        assert_eq!(s1.rated, vec![2, 3, 4]);

        let s2: UserStats<f64> = user_stats(&m, 2).unwrap();
        assert!((s2.mean - 10.0 / 3.0).abs() < 1e-15);
        assert!((s2.std - 0.942809041582063).abs() < 1e-12);
    }

    #[test]
    fn single_rating_user() {
        let m = RatingsMatrix::from_ratings([Rating::new(7, 1, 4)]).unwrap();
        let s: UserStats<f64> = user_stats(&m, 7).unwrap();
        assert_eq!((s.mean, s.std, s.count), (4.0, 0.0, 1));
        assert!(matches!(user_stats::<f64>(&m, 8), Err(Error::NoData(_))));
    }

    #[test]
    fn toy_item_means() {
        let m = toy_matrix();
        assert_eq!(item_mean::<f64>(&m, 4).unwrap(), 3.25);
        assert!((item_mean::<f64>(&m, 2).unwrap() - 11.0 / 3.0).abs() < 1e-15);
        let single = RatingsMatrix::from_ratings([Rating::new(1, 9, 5)]).unwrap();
        assert_eq!(item_mean::<f64>(&single, 9).unwrap(), 5.0);
        assert!(item_mean::<f64>(&single, 10).is_err());
    }

    #[test]
    fn r_med_is_scale_midpoint() {
        assert_eq!(toy_matrix().r_med::<f64>(), 3.0);
    }

    #[test]
    fn kfold_small() {
        let m = RatingsMatrix::from_ratings([
            Rating::new(1, 1, 1),
            Rating::new(1, 2, 2),
            Rating::new(2, 1, 3),
            Rating::new(2, 2, 4),
        ])
        .unwrap();
        let folds = kfold_split(&m, 2, 11).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].test.len(), 2);
        assert_eq!(folds[1].test.len(), 2);
        assert!(folds[0].test.iter().all(|r| !folds[1].test.contains(r)));
        for f in &folds {
            assert_eq!(f.train.len(), 2);
            assert!(f.test.iter().all(|r| f.train.get(r.user, r.item).is_none()));
        }
    }

    #[test]
    fn kfold_is_deterministic() {
        let m = toy_matrix();
        let a = kfold_split(&m, 3, 5).unwrap();
        let b = kfold_split(&m, 3, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.test, y.test);
        }
    }

    #[test]
    fn kfold_config_errors() {
        let m = toy_matrix();
        assert!(matches!(kfold_split(&m, 1, 0), Err(Error::Config(_))));
        assert!(matches!(kfold_split(&m, 100, 0), Err(Error::Config(_))));
        assert!(matches!(
            kfold_split(&RatingsMatrix::empty(), 2, 0),
            Err(Error::NoData(_))
        ));
    }

    #[test]
    fn external_folds() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("u1.base"), "1\t1\t3\t0\n1\t2\t4\t0\n").unwrap();
        std::fs::write(dir.path().join("u1.test"), "1\t3\t5\t0\n").unwrap();
        std::fs::write(dir.path().join("u2.base"), "1\t1\t3\t0\n1\t3\t5\t0\n").unwrap();
        std::fs::write(dir.path().join("u2.test"), "1\t2\t4\t0\n").unwrap();
        let folds = load_external_folds(dir.path(), Format::MovielensTab).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[1].test, vec![Rating::new(1, 2, 4)]);

        std::fs::write(dir.path().join("u1.test"), "1\t1\t5\t0\n").unwrap();
        assert!(matches!(
            load_external_folds(dir.path(), Format::MovielensTab),
            Err(Error::Config(_))
        ));
        let empty = tempfile::tempdir().unwrap();
        assert!(load_external_folds(empty.path(), Format::MovielensTab).is_err());
    }
}
