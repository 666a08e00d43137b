//! Rank correlation, ANOVA, two-sample t-tests, chi-square contingency,
//! Cohen's kappa and binary classification metrics.

pub mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{chi2_sf, f_sf, inc_beta, inc_gamma_p, inc_gamma_q, ln_gamma, t_two_sided};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("series is constant; rank correlation is undefined")]
    ConstantSeries,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("statistic is indeterminate: {0}")]
    Indeterminate(String),
    #[error("invalid contingency table: {0}")]
    InvalidTable(String),
    #[error("both raters use one identical category; chance agreement is 1 and kappa is undefined (observed agreement {observed})")]
    PerfectChanceAgreement { observed: f64 },
    #[error("confusion matrix is empty")]
    EmptyConfusion,
    #[error("domain error: {0}")]
    Domain(String),
}

fn check_finite(xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Average ranks, 1-based; ties share the mean of the positions they span.
pub fn rank_average(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantSeries);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho with a two-sided p-value from the t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew { needed: 3, got: x.len() });
    }
    check_finite(x)?;
    check_finite(y)?;
    let r = pearson(&rank_average(x), &rank_average(y))?;
    let n = x.len();
    let df = (n - 2) as f64;
    let p_value = if (1.0 - r.abs()) < 1e-15 {
        0.0
    } else {
        let t = r * (df / ((1.0 - r) * (1.0 + r))).sqrt();
        t_two_sided(t, df)?
    };
    Ok(CorrelationResult { r, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sum_sq_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum()
}

pub fn one_way_anova(groups: &[&[f64]]) -> Result<AnovaResult, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFew { needed: 2, got: groups.len() });
    }
    for g in groups {
        if g.len() < 2 {
            return Err(StatsError::TooFew { needed: 2, got: g.len() });
        }
        check_finite(g)?;
    }
    let k = groups.len();
    let total: usize = groups.iter().map(|g| g.len()).sum();
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / total as f64;
    let ss_between: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ss_within: f64 = groups.iter().map(|g| sum_sq_dev(g)).sum();
    let (df_between, df_within) = (k - 1, total - k);
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let (f, p_value) = if ms_within == 0.0 {
        if ms_between == 0.0 {
            return Err(StatsError::Indeterminate("zero variance within and between groups".into()));
        }
        (f64::INFINITY, 0.0)
    } else {
        let f = ms_between / ms_within;
        (f, f_sf(f, df_between as f64, df_within as f64)?)
    };
    Ok(AnovaResult {
        f,
        p_value,
        df_between,
        df_within,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variance {
    #[default]
    Pooled,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p_value: f64,
    pub df: f64,
}

/// Two-sided two-sample t-test of `mean(a) - mean(b)`.
pub fn t_test_two_sample(a: &[f64], b: &[f64], variance: Variance) -> Result<TTestResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFew { needed: 2, got: s.len() });
        }
        check_finite(s)?;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sum_sq_dev(a) / (na - 1.0), sum_sq_dev(b) / (nb - 1.0));
    let diff = mean(a) - mean(b);
    let (se2, df) = match variance {
        Variance::Pooled => {
            let df = na + nb - 2.0;
            let sp = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            (sp * (1.0 / na + 1.0 / nb), df)
        }
        Variance::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = if se2 == 0.0 {
                na + nb - 2.0
            } else {
                se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
            };
            (se2, df)
        }
    };
    if se2 == 0.0 {
        if diff == 0.0 {
            return Err(StatsError::Indeterminate("both samples constant with equal means".into()));
        }
        return Ok(TTestResult {
            t: f64::INFINITY.copysign(diff),
            p_value: 0.0,
            df,
        });
    }
    let t = diff / se2.sqrt();
    Ok(TTestResult {
        t,
        p_value: t_two_sided(t, df)?,
        df,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self, StatsError> {
        let rows = counts.len();
        let cols = counts.first().map_or(0, Vec::len);
        if rows < 2 || cols < 2 {
            return Err(StatsError::InvalidTable(format!("need at least 2x2, got {rows}x{cols}")));
        }
        if counts.iter().any(|r| r.len() != cols) {
            return Err(StatsError::InvalidTable("ragged rows".into()));
        }
        let table = Self { counts };
        if let Some(i) = table.row_totals().iter().position(|&t| t == 0) {
            return Err(StatsError::InvalidTable(format!("row {i} has zero margin")));
        }
        if let Some(j) = table.col_totals().iter().position(|&t| t == 0) {
            return Err(StatsError::InvalidTable(format!("column {j} has zero margin")));
        }
        Ok(table)
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.counts.len(), self.counts[0].len())
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.counts[0].len()).map(|j| self.counts.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn expected(&self) -> Vec<Vec<f64>> {
        let (rt, ct) = (self.row_totals(), self.col_totals());
        let n: u64 = rt.iter().sum();
        rt.iter()
            .map(|&r| ct.iter().map(|&c| r as f64 * c as f64 / n as f64).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi2Result {
    pub chi2: f64,
    pub p_value: f64,
    pub dof: usize,
    pub expected: Vec<Vec<f64>>,
    pub yates_applied: bool,
}

/// Pearson chi-square test of independence. With `yates` set and one degree
/// of freedom, each `|O - E|` shrinks by `min(0.5, |O - E|)`.
pub fn chi2_contingency(table: &ContingencyTable, yates: bool) -> Result<Chi2Result, StatsError> {
    let (r, c) = table.shape();
    let dof = (r - 1) * (c - 1);
    let expected = table.expected();
    let yates_applied = yates && dof == 1;
    let mut chi2 = 0.0;
    for (orow, erow) in table.counts().iter().zip(&expected) {
        for (&o, &e) in orow.iter().zip(erow) {
            let mut d = (o as f64 - e).abs();
            if yates_applied {
                d -= d.min(0.5);
            }
            chi2 += d * d / e;
        }
    }
    Ok(Chi2Result {
        chi2,
        p_value: chi2_sf(chi2, dof as f64)?,
        dof,
        expected,
        yates_applied,
    })
}

/// Cohen's kappa for two raters over the union of their categories.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    let n = a.len() as f64;
    let mut marginals: BTreeMap<&T, (f64, f64)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        marginals.entry(x).or_default().0 += 1.0;
        marginals.entry(y).or_default().1 += 1.0;
        agree += (x == y) as usize;
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marginals.values().map(|(ca, cb)| (ca / n) * (cb / n)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(StatsError::PerfectChanceAgreement { observed: p_o });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryConfusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

impl std::ops::AddAssign for BinaryConfusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// `None` marks a ratio whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn binary_metrics(c: &BinaryConfusion) -> Result<BinaryMetrics, StatsError> {
    if c.total() == 0 {
        return Err(StatsError::EmptyConfusion);
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(BinaryMetrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision,
        recall,
        specificity: ratio(c.tn, c.tn + c.fp),
        f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(rank_average(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn spearman_monotone_and_sign() {
        let x: Vec<f64> = (1..=7).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        let r = spearman(&x, &y).unwrap();
        assert_eq!((r.r, r.p_value, r.n), (1.0, 0.0, 7));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(spearman(&x, &neg).unwrap().r, -1.0);
        assert_eq!(spearman(&x, &[1.0; 7]), Err(StatsError::ConstantSeries));
        assert!(matches!(spearman(&x[..2], &y[..2]), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn anova_equal_groups() {
        let r = one_way_anova(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!((r.f, r.p_value), (0.0, 1.0));
        assert!(one_way_anova(&[&[1.0, 1.0], &[1.0, 1.0]]).is_err());
    }

    #[test]
    fn t_test_degenerate_cases() {
        let a = [1.0, 4.0, 2.0];
        let r = t_test_two_sample(&a, &a, Variance::Pooled).unwrap();
        assert_eq!((r.t, r.p_value), (0.0, 1.0));
        let r = t_test_two_sample(&[0.0, 0.0], &[1.0, 1.0], Variance::Pooled).unwrap();
        assert_eq!((r.t, r.p_value), (f64::NEG_INFINITY, 0.0));
    }

    #[test]
    fn chi2_independent_and_dof() {
        let t = ContingencyTable::new(vec![vec![5, 5], vec![5, 5]]).unwrap();
        let r = chi2_contingency(&t, true).unwrap();
        assert_eq!((r.chi2, r.p_value, r.dof), (0.0, 1.0, 1));
        let t = ContingencyTable::new(vec![vec![3, 5, 2], vec![4, 1, 6]]).unwrap();
        assert_eq!(chi2_contingency(&t, true).unwrap().dof, 2);
        assert!(!chi2_contingency(&t, true).unwrap().yates_applied);
        assert!(ContingencyTable::new(vec![vec![0, 0], vec![1, 2]]).is_err());
        assert!(ContingencyTable::new(vec![vec![1, 2]]).is_err());
    }

    #[test]
    fn kappa_hand_values() {
        assert_eq!(cohens_kappa(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), 0.0);
        assert_eq!(cohens_kappa(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
        // p_o = 0.5, p_e = 0.5 * 1 = 0.5 for one constant rater
        assert_eq!(cohens_kappa(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap(), 0.0);
        // p_o = 0.25, p_e = 0.75*0.5 + 0.25*0.5 = 0.5
        assert_eq!(cohens_kappa(&[1, 1, 1, 0], &[1, 0, 0, 1]).unwrap(), -0.5);
        assert!(matches!(
            cohens_kappa(&["a", "a"], &["a", "a"]),
            Err(StatsError::PerfectChanceAgreement { observed }) if observed == 1.0
        ));
    }

    #[test]
    fn binary_metric_flags() {
        let m = binary_metrics(&BinaryConfusion { tp: 1, ..Default::default() }).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.specificity), (1.0, Some(1.0), Some(1.0), None));
        let m = binary_metrics(&BinaryConfusion { tp: 1, fp: 1, tn: 1, fn_: 1 }).unwrap();
        assert_eq!(m.f1, Some(0.5));
        assert_eq!(m.specificity, Some(0.5));
        assert!(binary_metrics(&BinaryConfusion::default()).is_err());
    }
}
