#![allow(dead_code)]

use cupcf::{Rating, RatingsMatrix};
use proptest::prelude::*;

/// Dense grid: `grid[u][p]` is user `u + 1`'s rating of item `p + 1`.
pub type Grid = Vec<Vec<Option<u8>>>;

pub fn grid(
    users: std::ops::RangeInclusive<usize>,
    items: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Grid> {
    (users, items).prop_flat_map(|(nu, ni)| {
        prop::collection::vec(
            prop::collection::vec(prop::option::weighted(0.6, 1u8..=5), ni),
            nu,
        )
    })
}

/// Grid where every user rates at least one item.
pub fn dense_grid(n: usize, m: usize) -> impl Strategy<Value = Grid> {
    grid(n..=n, m..=m).prop_map(|mut g| {
        for (u, row) in g.iter_mut().enumerate() {
            if row.iter().all(Option::is_none) {
                let p = u % row.len();
                row[p] = Some(3);
            }
        }
        g
    })
}

pub fn to_matrix(g: &Grid) -> RatingsMatrix {
    let ratings = g.iter().enumerate().flat_map(|(u, row)| {
        row.iter()
            .enumerate()
            .filter_map(move |(p, r)| r.map(|v| Rating::new(u as u32 + 1, p as u32 + 1, v)))
    });
    RatingsMatrix::from_ratings(ratings).unwrap()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn rated(row: &[Option<u8>]) -> Vec<f64> {
    row.iter().flatten().map(|&r| r as f64).collect()
}

pub fn mean(row: &[Option<u8>]) -> f64 {
    let r = rated(row);
    r.iter().sum::<f64>() / r.len() as f64
}

pub fn std_pop(row: &[Option<u8>]) -> f64 {
    let r = rated(row);
    let m = mean(row);
    (r.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / r.len() as f64).sqrt()
}

fn column_mean(g: &Grid, p: usize) -> f64 {
    let col: Vec<f64> = g.iter().filter_map(|row| row[p]).map(f64::from).collect();
    col.iter().sum::<f64>() / col.len() as f64
}

/// Straight transcription of the NHSM definition on a dense grid.
pub fn naive_nhsm(g: &Grid, u: usize, v: usize) -> f64 {
    let (a, b) = (&g[u], &g[v]);
    let mut pss = 0.0;
    let mut common = 0;
    for p in 0..a.len() {
        if let (Some(x), Some(y)) = (a[p], b[p]) {
            let (x, y) = (x as f64, y as f64);
            let prox = 1.0 - sig((x - y).abs());
            let sign = sig((x - 3.0).abs() * (y - 3.0).abs());
            let sing = 1.0 - sig(((x + y) / 2.0 - column_mean(g, p)).abs());
            pss += prox * sign * sing;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let na = a.iter().flatten().count() as f64;
    let nb = b.iter().flatten().count() as f64;
    let jac = common as f64 / (na * nb);
    let urp = 1.0 - sig((mean(a) - mean(b)).abs() * (std_pop(a) - std_pop(b)).abs());
    pss * jac * urp
}

/// Pearson over co-rated items centred on each user's overall mean; 0 when
/// undefined.
pub fn naive_pearson(g: &Grid, u: usize, v: usize) -> f64 {
    let (a, b) = (&g[u], &g[v]);
    let (ma, mb) = (mean(a), mean(b));
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for p in 0..a.len() {
        if let (Some(x), Some(y)) = (a[p], b[p]) {
            let (x, y) = (x as f64 - ma, y as f64 - mb);
            num += x * y;
            da += x * x;
            db += y * y;
        }
    }
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da.sqrt() * db.sqrt())
    }
}

/// Kernel prediction with an explicit similarity function: top-k users by
/// similarity (ties to the lower index), then only raters with non-zero
/// similarity contribute.
pub fn naive_predict(
    g: &Grid,
    sim: impl Fn(usize, usize) -> f64,
    u: usize,
    p: usize,
    k: usize,
) -> (f64, bool) {
    let mut others: Vec<(usize, f64)> = (0..g.len())
        .filter(|&v| v != u)
        .map(|v| (v, sim(u, v)))
        .collect();
    others.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
    others.truncate(k);
    let (mut num, mut den) = (0.0, 0.0);
    for (v, s) in others {
        if s == 0.0 {
            continue;
        }
        if let Some(r) = g[v][p] {
            num += (r as f64 - mean(&g[v])) * s;
            den += s.abs();
        }
    }
    if den == 0.0 {
        (mean(&g[u]), true)
    } else {
        (mean(&g[u]) + num / den, false)
    }
}

/// Runs `test` on `cases` values drawn from `strategy`, panicking with the
/// shrunk counterexample on failure.
pub fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>)
where
    S: Strategy,
    S::Value: std::fmt::Debug,
{
    let config = ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    };
    if let Err(e) = proptest::test_runner::TestRunner::new(config).run(&strategy, test) {
        panic!("{e}");
    }
}
