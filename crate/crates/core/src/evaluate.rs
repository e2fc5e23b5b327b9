//! Offline evaluation: MAE over every held-out rating and Top-N
//! confusion-matrix metrics (accuracy, precision, recall) per fold.
//!
//! For each user, the held-out items are ranked by predicted score and the
//! first N form the user's list. Only listed items are classified: an item is
//! predicted-positive when its score is at least the threshold and
//! actual-positive when its held-out rating is at least the threshold.
//! Counts are pooled over users (micro-averaging) unless macro-averaging is
//! requested.

use std::fmt::{self, Write as _};
use std::ops::AddAssign;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{kfold_split, FoldSplit, Rating, RatingsMatrix};
use crate::error::{Error, Result};
use crate::prediction::{Method, NeighborPolicy, PredictConfig, Predictor};
use crate::recommend::{merge_lists, RecommendationList};
use crate::scalar::Scalar;
use crate::similarity::{build_with_stats, Measure};

pub const DEFAULT_N_VALUES: [usize; 5] = [5, 10, 15, 20, 30];
pub const DEFAULT_THRESHOLDS: [u8; 2] = [3, 4];
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_SEED: u64 = 42;

/// Counts by actual × predicted class.
///
/// |               | predicted − | predicted + |
/// |---------------|-------------|-------------|
/// | **actual −**  | `a`         | `b`         |
/// | **actual +**  | `c`         | `d`         |
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, actual_positive: bool, predicted_positive: bool) {
        match (actual_positive, predicted_positive) {
            (false, false) => self.a += 1,
            (false, true) => self.b += 1,
            (true, false) => self.c += 1,
            (true, true) => self.d += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        self.a += o.a;
        self.b += o.b;
        self.c += o.c;
        self.d += o.d;
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        let mut acc = ConfusionMatrix::default();
        for cm in iter {
            acc += cm;
        }
        acc
    }
}

/// Accuracy, precision and recall; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    Metrics {
        accuracy: ratio(cm.a + cm.d, cm.total()),
        precision: ratio(cm.d, cm.b + cm.d),
        recall: ratio(cm.d, cm.c + cm.d),
    }
}

/// Mean absolute error of `(predicted, actual)` pairs.
pub fn mae<T: Scalar>(pairs: &[(T, u8)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::NoData("MAE of an empty list".into()));
    }
    let sum: T = pairs
        .iter()
        .map(|&(p, a)| (p - T::from_rating(a)).abs())
        .sum();
    Ok(sum / T::from_count(pairs.len()))
}

/// Classifies the items of one user's Top-N list (built over that user's
/// held-out items) against their held-out ratings. Listed items without a
/// held-out rating are skipped.
pub fn confusion_for_user<T: Scalar>(
    topn: &RecommendationList<T>,
    test_ratings: &[(u32, u8)],
    threshold: u8,
) -> ConfusionMatrix {
    let t = T::from_rating(threshold);
    let mut cm = ConfusionMatrix::default();
    for &(item, score) in &topn.entries {
        if let Some(&(_, actual)) = test_ratings.iter().find(|&&(i, _)| i == item) {
            cm.record(actual >= threshold, score >= t);
        }
    }
    cm
}

/// How Top-N lists are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingMode {
    /// Rank by the method's predicted score.
    #[default]
    Cup,
    /// Build separate NHSM and Pearson Top-N lists and merge them.
    Merged,
}

impl FromStr for RankingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cup" | "combined" => Ok(RankingMode::Cup),
            "merged" | "merge" => Ok(RankingMode::Merged),
            other => Err(Error::Config(format!("unknown ranking mode '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Sum counts over users, then compute metrics.
    #[default]
    Micro,
    /// Compute metrics per user, then average the defined ones.
    Macro,
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "micro" => Ok(Averaging::Micro),
            "macro" => Ok(Averaging::Macro),
            other => Err(Error::Config(format!("unknown averaging '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub k_folds: usize,
    pub seed: u64,
    pub predict: PredictConfig,
    pub n_values: Vec<usize>,
    pub thresholds: Vec<u8>,
    pub method: Method,
    pub ranking_mode: RankingMode,
    pub averaging: Averaging,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            k_folds: DEFAULT_FOLDS,
            seed: DEFAULT_SEED,
            predict: PredictConfig::default(),
            n_values: DEFAULT_N_VALUES.to_vec(),
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            method: Method::Cupcf,
            ranking_mode: RankingMode::Cup,
            averaging: Averaging::Micro,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.predict.validate()?;
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::Config(
                "N values must be non-empty and positive".into(),
            ));
        }
        if self.thresholds.is_empty() {
            return Err(Error::Config("at least one threshold is required".into()));
        }
        if self.ranking_mode == RankingMode::Merged && self.method != Method::Cupcf {
            return Err(Error::Config(
                "merged ranking combines both measures; use it with the CUPCF method".into(),
            ));
        }
        Ok(())
    }
}

/// Where the folds came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitSource {
    Random { k_folds: usize, seed: u64 },
    External { name: String },
}

/// One held-out rating with everything the metrics need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredPair {
    pub rating: Rating,
    /// Score of the evaluated method (clipped when clamping is on).
    pub score: f64,
    pub nhsm_score: f64,
    pub pearson_score: f64,
    pub nhsm_fellback: bool,
    pub pearson_fellback: bool,
    pub cold_user: bool,
}

/// All scored held-out pairs of one fold, grouped by user.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub n_train: usize,
    /// Per user, ascending by user id; each group ascending by item id.
    pub users: Vec<Vec<ScoredPair>>,
}

impl FoldOutcome {
    /// Groups pairs by user; input order does not matter.
    pub fn from_pairs(n_train: usize, mut pairs: Vec<ScoredPair>) -> Self {
        pairs.sort_by_key(|p| (p.rating.user, p.rating.item));
        let mut users: Vec<Vec<ScoredPair>> = Vec::new();
        for p in pairs {
            match users.last_mut() {
                Some(g) if g[0].rating.user == p.rating.user => g.push(p),
                _ => users.push(vec![p]),
            }
        }
        FoldOutcome { n_train, users }
    }

    pub fn n_test(&self) -> usize {
        self.users.iter().map(Vec::len).sum()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &ScoredPair> {
        self.users.iter().flatten()
    }

    pub fn mae(&self) -> Result<f64> {
        let pairs: Vec<(f64, u8)> = self.pairs().map(|p| (p.score, p.rating.value)).collect();
        mae(&pairs)
    }

    fn user_list(
        &self,
        group: &[ScoredPair],
        n: usize,
        mode: RankingMode,
    ) -> RecommendationList<f64> {
        let user = group[0].rating.user;
        let ranked = |f: fn(&ScoredPair) -> f64| {
            RecommendationList::from_scores(user, group.iter().map(|p| (p.rating.item, f(p))), n)
                .expect("n is positive")
        };
        match mode {
            RankingMode::Cup => ranked(|p| p.score),
            RankingMode::Merged => {
                merge_lists(&ranked(|p| p.nhsm_score), &ranked(|p| p.pearson_score), n)
                    .expect("both lists belong to the same user")
            }
        }
    }

    /// Confusion matrix of the user at position `group` in [`users`](Self::users).
    pub fn user_confusion(
        &self,
        group: usize,
        n: usize,
        threshold: u8,
        mode: RankingMode,
    ) -> ConfusionMatrix {
        let g = &self.users[group];
        let list = self.user_list(g, n, mode);
        let test: Vec<(u32, u8)> = g.iter().map(|p| (p.rating.item, p.rating.value)).collect();
        confusion_for_user(&list, &test, threshold)
    }

    /// Pooled confusion counts and the metrics for one (N, T) cell.
    pub fn cell(
        &self,
        n: usize,
        threshold: u8,
        mode: RankingMode,
        averaging: Averaging,
    ) -> CellReport {
        let per_user: Vec<ConfusionMatrix> = (0..self.users.len())
            .into_par_iter()
            .map(|g| self.user_confusion(g, n, threshold, mode))
            .collect();
        let confusion: ConfusionMatrix = per_user.iter().copied().sum();
        let m = match averaging {
            Averaging::Micro => metrics(&confusion),
            Averaging::Macro => macro_average(&per_user),
        };
        CellReport {
            n,
            threshold,
            confusion,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
        }
    }
}

fn macro_average(per_user: &[ConfusionMatrix]) -> Metrics {
    let all: Vec<Metrics> = per_user.iter().map(metrics).collect();
    let avg = |f: fn(&Metrics) -> Option<f64>| {
        let vals: Vec<f64> = all.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Metrics {
        accuracy: avg(|m| m.accuracy),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n: usize,
    pub threshold: u8,
    pub confusion: ConfusionMatrix,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackCounts {
    pub nhsm: usize,
    pub pearson: usize,
    pub both: usize,
    pub cold_user: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    /// 1-based.
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub mae: f64,
    pub fallbacks: FallbackCounts,
    pub cells: Vec<CellReport>,
}

impl FoldReport {
    pub fn cell(&self, n: usize, threshold: u8) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.threshold == threshold)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub method: Method,
    pub k_neighbors: usize,
    pub clamp: bool,
    pub neighbors: NeighborPolicy,
    pub split: SplitSource,
    pub n_values: Vec<usize>,
    pub thresholds: Vec<u8>,
    pub ranking_mode: RankingMode,
    pub averaging: Averaging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    /// SHA-256 of the canonical rating set.
    pub input_checksum: String,
    /// SHA-256 over the config echo and the input checksum.
    pub fingerprint: String,
    pub folds: Vec<FoldReport>,
}

/// Scores every held-out pair of one fold with predictors trained on the
/// fold's training matrix.
pub fn score_fold<T: Scalar>(fold: &FoldSplit, config: &ExperimentConfig) -> Result<FoldOutcome> {
    let train = &fold.train;
    let stats = train.all_user_stats::<T>();
    let (nhsm, pearson) = rayon::join(
        || build_with_stats(train, &stats, Measure::Nhsm),
        || build_with_stats(train, &stats, Measure::Pearson),
    );
    let predictor = Predictor::new(train, &nhsm, &pearson, config.predict)?;
    let clamp = config.predict.clamp;
    let pairs: Vec<ScoredPair> = fold
        .test
        .par_iter()
        .map(|r| {
            let p = predictor.predict_or_fallback(r.user, r.item);
            ScoredPair {
                rating: *r,
                score: p.score(config.method, clamp).as_f64(),
                nhsm_score: p.score(Method::NhsmOnly, clamp).as_f64(),
                pearson_score: p.score(Method::PearsonOnly, clamp).as_f64(),
                nhsm_fellback: p.nhsm_fellback,
                pearson_fellback: p.pearson_fellback,
                cold_user: train.user_index(r.user).is_none(),
            }
        })
        .collect();
    Ok(FoldOutcome::from_pairs(train.len(), pairs))
}

fn fold_report(
    fold: usize,
    outcome: &FoldOutcome,
    config: &ExperimentConfig,
) -> Result<FoldReport> {
    let mut fallbacks = FallbackCounts::default();
    for p in outcome.pairs() {
        fallbacks.nhsm += p.nhsm_fellback as usize;
        fallbacks.pearson += p.pearson_fellback as usize;
        fallbacks.both += (p.nhsm_fellback && p.pearson_fellback) as usize;
        fallbacks.cold_user += p.cold_user as usize;
    }
    let mut cells = Vec::new();
    for &t in &config.thresholds {
        for &n in &config.n_values {
            cells.push(outcome.cell(n, t, config.ranking_mode, config.averaging));
        }
    }
    Ok(FoldReport {
        fold: fold + 1,
        n_train: outcome.n_train,
        n_test: outcome.n_test(),
        mae: outcome.mae()?,
        fallbacks,
        cells,
    })
}

/// Splits `dataset` with the configured seeded k-fold and evaluates every fold.
pub fn run_experiment<T: Scalar>(
    dataset: &RatingsMatrix,
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let folds = kfold_split(dataset, config.k_folds, config.seed)?;
    let split = SplitSource::Random {
        k_folds: config.k_folds,
        seed: config.seed,
    };
    run_on_folds::<T>(&folds, split, dataset.checksum(), config)
}

/// Evaluates pre-built folds. `input_checksum` identifies the data the folds
/// came from.
pub fn run_on_folds<T: Scalar>(
    folds: &[FoldSplit],
    split: SplitSource,
    input_checksum: String,
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let reports = folds
        .iter()
        .map(|f| {
            let outcome = score_fold::<T>(f, config)?;
            fold_report(f.fold_index, &outcome, config)
        })
        .collect::<Result<Vec<_>>>()?;

    let echo = ReportConfig {
        method: config.method,
        k_neighbors: config.predict.k_neighbors,
        clamp: config.predict.clamp,
        neighbors: config.predict.neighbors,
        split,
        n_values: config.n_values.clone(),
        thresholds: config.thresholds.clone(),
        ranking_mode: config.ranking_mode,
        averaging: config.averaging,
    };
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&echo).expect("config serializes"));
    hasher.update(input_checksum.as_bytes());
    Ok(EvalReport {
        config: echo,
        input_checksum,
        fingerprint: hex::encode(hasher.finalize()),
        folds: reports,
    })
}

type CellValue<'a> = &'a dyn Fn(&CellReport) -> Option<f64>;

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One table per threshold, laid out as fold / method / T / metric rows
    /// against Top-N columns.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let ns = &self.config.n_values;
        for &t in &self.config.thresholds {
            let _ = writeln!(
                out,
                "### {} evaluation results by Top-N, threshold T = {t}\n",
                self.config.method
            );
            let _ = write!(out, "| Fold | Method Name | T | Evaluation Metric |");
            for n in ns {
                let _ = write!(out, " Top {n} Items |");
            }
            let _ = write!(out, "\n|---|---|---|---|");
            for _ in ns {
                let _ = write!(out, "---|");
            }
            out.push('\n');
            for fold in &self.folds {
                let mae = |_: &CellReport| Some(fold.mae);
                let rows: [(&str, CellValue); 4] = [
                    ("Accuracy", &|c| c.accuracy),
                    ("Precision", &|c| c.precision),
                    ("Recall", &|c| c.recall),
                    ("MAE", &mae),
                ];
                for (i, (name, f)) in rows.iter().enumerate() {
                    if i == 0 {
                        let _ = write!(
                            out,
                            "| {} | {} | {t} | {name} |",
                            fold.fold, self.config.method
                        );
                    } else {
                        let _ = write!(out, "| | | | {name} |");
                    }
                    for &n in ns {
                        let _ = write!(out, " {} |", fmt_metric(fold.cell(n, t).and_then(f)));
                    }
                    out.push('\n');
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "Input checksum: `{}`  ", self.input_checksum);
        let _ = writeln!(out, "Fingerprint: `{}`", self.fingerprint);
        out
    }
}

/// Four decimals, `n/a` for an undefined metric.
pub fn fmt_metric(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "n/a".to_string(),
    }
}

// Expected bands for a MovieLens 100K run with default settings.
pub const MAE_BAND: (f64, f64) = (0.70, 0.78);
pub const TOP5_T3_PRECISION_BAND: (f64, f64) = (0.88, 0.94);
pub const TOP5_T3_RECALL_MIN: f64 = 0.98;
pub const PRECISION_MONOTONE_SLACK: f64 = 0.005;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for BandCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Checks a report against the MovieLens 100K expected bands: per-fold
/// MAE, Top-5 / T=3 precision and recall, and precision non-increasing in N
/// at each threshold.
pub fn check_bands(report: &EvalReport) -> Vec<BandCheck> {
    let mut checks = Vec::new();
    for fold in &report.folds {
        let f = fold.fold;
        checks.push(BandCheck {
            name: format!("fold {f} MAE"),
            passed: (MAE_BAND.0..=MAE_BAND.1).contains(&fold.mae),
            detail: format!("{:.4} in [{}, {}]", fold.mae, MAE_BAND.0, MAE_BAND.1),
        });
        if let Some(cell) = fold.cell(5, 3) {
            let (lo, hi) = TOP5_T3_PRECISION_BAND;
            checks.push(BandCheck {
                name: format!("fold {f} Top-5 T=3 precision"),
                passed: cell.precision.is_some_and(|p| (lo..=hi).contains(&p)),
                detail: format!("{} in [{lo}, {hi}]", fmt_metric(cell.precision)),
            });
            checks.push(BandCheck {
                name: format!("fold {f} Top-5 T=3 recall"),
                passed: cell.recall.is_some_and(|r| r >= TOP5_T3_RECALL_MIN),
                detail: format!("{} >= {TOP5_T3_RECALL_MIN}", fmt_metric(cell.recall)),
            });
        }
        for &t in &report.config.thresholds {
            let mut ns = report.config.n_values.clone();
            ns.sort_unstable();
            let precisions: Vec<Option<f64>> = ns
                .iter()
                .map(|&n| fold.cell(n, t).and_then(|c| c.precision))
                .collect();
            let passed = precisions.windows(2).all(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => b <= a + PRECISION_MONOTONE_SLACK,
                _ => false,
            });
            checks.push(BandCheck {
                name: format!("fold {f} T={t} precision non-increasing in N"),
                passed,
                detail: precisions
                    .iter()
                    .map(|p| fmt_metric(*p))
                    .collect::<Vec<_>>()
                    .join(" >= "),
            });
        }
    }
    checks
}
