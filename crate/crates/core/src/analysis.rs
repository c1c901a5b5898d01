//! Rank statistics and run reports.

use std::fmt::Write as _;

use thiserror::Error;

use crate::evaluator::{Metric, QorResult};
use crate::scalar::Scalar;
use crate::search::SearchHistory;
use crate::space::ParameterSpace;

/// `|ρ|` threshold used to list influential parameters.
pub const DEFAULT_IMPORTANCE_THRESHOLD: f64 = 0.10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("series `{0}` is constant; rank correlation undefined")]
    ConstantSeries(String),
    #[error("series contains NaN")]
    NaN,
    #[error("need at least 2 distinct successful trials, got {0}")]
    InsufficientTrials(usize),
    #[error("runs are not comparable: {0}")]
    Incompatible(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSeries<T> {
    pub values: Vec<T>,
    /// 1-based ranks; tied values share the mean of their positions.
    pub ranks: Vec<T>,
}

impl<T: Scalar> RankedSeries<T> {
    pub fn new(values: Vec<T>) -> Result<Self, AnalysisError> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(AnalysisError::NaN);
        }
        let ranks = average_ranks(&values);
        Ok(RankedSeries { values, ranks })
    }

    pub fn has_ties(&self) -> bool {
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        sorted.windows(2).any(|w| w[0] == w[1])
    }
}

/// Average ranks (1-based). Inputs must not contain NaN.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN in rank input"));
    let mut ranks = vec![T::zero(); n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share rank mean((i+1)..=(j+1))
        let r = T::lit((i + j) as f64 / 2.0 + 1.0);
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Option<T> {
    let n = T::lit(x.len() as f64);
    let mx = x.iter().fold(T::zero(), |a, &v| a + v) / n;
    let my = y.iter().fold(T::zero(), |a, &v| a + v) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// `1 − 6 Σ d_i² / (n (n² − 1))` on precomputed tie-free ranks.
pub fn spearman_closed_form<T: Scalar>(rank_x: &[T], rank_y: &[T]) -> T {
    let n = T::lit(rank_x.len() as f64);
    let d2 = rank_x
        .iter()
        .zip(rank_y)
        .fold(T::zero(), |a, (&p, &q)| a + (p - q) * (p - q));
    T::one() - T::lit(6.0) * d2 / (n * (n * n - T::one()))
}

/// Spearman's ρ: Pearson correlation of average ranks. Equals the closed form
/// when neither series has ties.
pub fn spearman_rho<T: Scalar>(x: &[T], y: &[T]) -> Result<T, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooShort(x.len()));
    }
    let rx = RankedSeries::new(x.to_vec())?;
    let ry = RankedSeries::new(y.to_vec())?;
    let rho = pearson(&rx.ranks, &ry.ranks).ok_or_else(|| {
        let which = if rx.ranks.iter().all(|&r| r == rx.ranks[0]) { "x" } else { "y" };
        AnalysisError::ConstantSeries(which.into())
    })?;
    Ok(rho.max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEntry {
    pub param: String,
    pub rho: f64,
    pub abs_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub metric: Metric,
    pub n: usize,
    /// Sorted by `abs_rho` descending, then name.
    pub entries: Vec<ImportanceEntry>,
    /// Parameters whose index never varied across the trials.
    pub undefined: Vec<String>,
}

impl ImportanceReport {
    pub fn above(&self, threshold: f64) -> impl Iterator<Item = &ImportanceEntry> {
        self.entries.iter().filter(move |e| e.abs_rho > threshold)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,rho,abs_rho,n\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", e.param, e.rho, e.abs_rho, self.n);
        }
        out
    }
}

fn metric_value(q: &QorResult, metric: Metric) -> f64 {
    crate::evaluator::objective(q, metric)
}

/// `|ρ|` between each parameter's ordinal option index and `metric`.
pub fn importance_report(
    history: &SearchHistory,
    space: &ParameterSpace,
    metric: Metric,
) -> Result<ImportanceReport, AnalysisError> {
    let ok: Vec<_> = history.successful().collect();
    let distinct: std::collections::HashSet<_> = ok.iter().map(|t| t.sample.indices()).collect();
    if distinct.len() < 2 {
        return Err(AnalysisError::InsufficientTrials(distinct.len()));
    }
    let y: Vec<f64> = ok
        .iter()
        .map(|t| metric_value(t.qor.as_ref().expect("successful"), metric))
        .collect();
    if y.iter().all(|&v| v == y[0]) {
        return Err(AnalysisError::ConstantSeries(metric.as_str().into()));
    }
    let mut entries = Vec::new();
    let mut undefined = Vec::new();
    for (pos, p) in space.params().iter().enumerate() {
        if p.option_count() < 2 {
            continue;
        }
        let x: Vec<f64> = ok.iter().map(|t| t.sample.indices()[pos] as f64).collect();
        match spearman_rho(&x, &y) {
            Ok(rho) => entries.push(ImportanceEntry {
                param: p.name.clone(),
                rho,
                abs_rho: rho.abs(),
            }),
            Err(AnalysisError::ConstantSeries(_)) => undefined.push(p.name.clone()),
            Err(e) => return Err(e),
        }
    }
    entries.sort_by(|a, b| {
        b.abs_rho
            .partial_cmp(&a.abs_rho)
            .expect("finite rho")
            .then_with(|| a.param.cmp(&b.param))
    });
    Ok(ImportanceReport {
        metric,
        n: ok.len(),
        entries,
        undefined,
    })
}

pub const TRADEOFF_LABELS: [&str; 4] = ["power", "area", "neg_tns", "drc"];

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffMatrix {
    pub n: usize,
    /// `None` where a column is constant.
    pub rho: [[Option<f64>; 4]; 4],
}

impl TradeoffMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = TRADEOFF_LABELS.iter().position(|x| *x == a)?;
        let j = TRADEOFF_LABELS.iter().position(|x| *x == b)?;
        self.rho[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("metric,{}\n", TRADEOFF_LABELS.join(","));
        for (i, row) in self.rho.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default())
                .collect();
            let _ = writeln!(out, "{},{}", TRADEOFF_LABELS[i], cells.join(","));
        }
        out
    }
}

/// Pairwise Spearman ρ among power, area, −TNS and DRC count.
pub fn tradeoff_report(history: &SearchHistory) -> Result<TradeoffMatrix, AnalysisError> {
    let qs: Vec<QorResult> = history.successful().filter_map(|t| t.qor).collect();
    let distinct: std::collections::HashSet<_> =
        history.successful().map(|t| t.sample.indices()).collect();
    if distinct.len() < 2 {
        return Err(AnalysisError::InsufficientTrials(distinct.len()));
    }
    let cols: [Vec<f64>; 4] = [
        qs.iter().map(|q| q.power_mw).collect(),
        qs.iter().map(|q| q.area).collect(),
        qs.iter().map(|q| -q.tns_ns).collect(),
        qs.iter().map(|q| q.drc_violations as f64).collect(),
    ];
    let constant: Vec<bool> = cols.iter().map(|c| c.iter().all(|&v| v == c[0])).collect();
    let mut rho = [[None; 4]; 4];
    for i in 0..4 {
        for j in i..4 {
            if constant[i] || constant[j] {
                continue;
            }
            let v = if i == j { 1.0 } else { spearman_rho(&cols[i], &cols[j])? };
            rho[i][j] = Some(v);
            rho[j][i] = Some(v);
        }
    }
    Ok(TradeoffMatrix { n: qs.len(), rho })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub checkpoints: Vec<usize>,
    /// `(run label, best-so-far at each checkpoint)`.
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("run");
        for c in &self.checkpoints {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (label, cells) in &self.rows {
            out.push_str(label);
            for c in cells {
                out.push(',');
                if let Some(v) = c {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let label_w = self.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(3).max(3);
        let mut out = format!("{:<label_w$}", "run");
        for c in &self.checkpoints {
            let _ = write!(out, " {:>10}", format!("@{c}"));
        }
        out.push('\n');
        for (label, cells) in &self.rows {
            let _ = write!(out, "{label:<label_w$}");
            for c in cells {
                match c {
                    Some(v) => {
                        let _ = write!(out, " {v:>10.2}");
                    }
                    None => {
                        let _ = write!(out, " {:>10}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Best-so-far objective of each run after `c` iterations for each checkpoint.
pub fn compare_runs(
    runs: &[(String, &SearchHistory)],
    checkpoints: &[usize],
) -> Result<ComparisonTable, AnalysisError> {
    if let Some((_, first)) = runs.first() {
        for (label, h) in runs {
            if h.space_fingerprint != first.space_fingerprint {
                return Err(AnalysisError::Incompatible(format!(
                    "run `{label}` uses a different parameter space"
                )));
            }
            if h.backend_fingerprint != first.backend_fingerprint {
                return Err(AnalysisError::Incompatible(format!(
                    "run `{label}` uses a different flow backend"
                )));
            }
            if h.metric != first.metric {
                return Err(AnalysisError::Incompatible(format!(
                    "run `{label}` optimizes a different metric"
                )));
            }
        }
    }
    let rows = runs
        .iter()
        .map(|(label, h)| {
            let cells = checkpoints
                .iter()
                .map(|&c| if c == 0 { None } else { h.best_at(c) })
                .collect();
            (label.clone(), cells)
        })
        .collect();
    Ok(ComparisonTable {
        checkpoints: checkpoints.to_vec(),
        rows,
    })
}
