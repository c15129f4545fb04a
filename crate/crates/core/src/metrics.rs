//! Per-device detection bookkeeping and the scalar detection metrics.
//!
//! Every device slot of every frame is scored once, so a run over F frames
//! of N devices contributes exactly F·N counts. Ratios whose denominator is
//! zero are `None` and serialize as `NA`.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::ActivityVector;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("truth has {truth} devices but estimate has {estimate}")]
    Length { truth: usize, estimate: usize },
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    ScoreLength { scores: usize, labels: usize },
    #[error("AUC needs both positive and negative labels")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn accumulate(&mut self, truth: &ActivityVector, estimate: &ActivityVector) -> Result<(), MetricsError> {
        self.accumulate_slots(truth.as_slice(), estimate.as_slice())
    }

    pub fn accumulate_slots(&mut self, truth: &[bool], estimate: &[bool]) -> Result<(), MetricsError> {
        if truth.len() != estimate.len() {
            return Err(MetricsError::Length {
                truth: truth.len(),
                estimate: estimate.len(),
            });
        }
        for (&t, &e) in truth.iter().zip(estimate) {
            match (t, e) {
                (true, true) => self.tp += 1,
                (false, true) => self.fp += 1,
                (true, false) => self.fn_ += 1,
                (false, false) => self.tn += 1,
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Detection probability (recall) `tp / (tp + fn)`.
    pub fn pd(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Misdetection probability `fn / (tp + fn)`.
    pub fn pm(&self) -> Option<f64> {
        ratio(self.fn_, self.tp + self.fn_)
    }

    /// Positive predictive value (precision) `tp / (tp + fp)`.
    pub fn ppv(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }
}

impl Add for Confusion {
    type Output = Confusion;

    fn add(self, rhs: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
            tn: self.tn + rhs.tn,
        }
    }
}

impl AddAssign for Confusion {
    fn add_assign(&mut self, rhs: Confusion) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Self {
        iter.fold(Confusion::default(), Add::add)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `PPV·P_D / (PPV + P_D)`, the harmonic-mean form without the factor 2.
pub fn f1_paper(pd: Option<f64>, ppv: Option<f64>) -> Option<f64> {
    let (pd, ppv) = (pd?, ppv?);
    let den = pd + ppv;
    (den > 0.0).then(|| pd * ppv / den)
}

/// Conventional F1 `2·PPV·P_D / (PPV + P_D)`.
pub fn f1_standard(pd: Option<f64>, ppv: Option<f64>) -> Option<f64> {
    f1_paper(pd, ppv).map(|v| 2.0 * v)
}

/// Rank (Mann-Whitney) AUC; tied scores share their average rank.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::ScoreLength {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie group i..=j shares the mean rank
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let group_pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        positive_rank_sum += mean_rank * group_pos as f64;
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub snr_db: f64,
    pub m: usize,
    pub method: String,
    pub pd: Option<f64>,
    pub pm: Option<f64>,
    pub ppv: Option<f64>,
    pub f1_paper: Option<f64>,
    pub f1_standard: Option<f64>,
    pub auc: Option<f64>,
    pub frames: u64,
}

pub const CSV_HEADER: &str = "snr_db,m,method,pd,pm,ppv,f1_paper,f1_standard,auc,frames";

impl MetricRow {
    pub fn from_confusion(snr_db: f64, m: usize, method: &str, conf: &Confusion, auc: Option<f64>, frames: u64) -> Self {
        let pd = conf.pd();
        let ppv = conf.ppv();
        Self {
            snr_db,
            m,
            method: method.to_string(),
            pd,
            pm: conf.pm(),
            ppv,
            f1_paper: f1_paper(pd, ppv),
            f1_standard: f1_standard(pd, ppv),
            auc,
            frames,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{},{},{}", fmt_num(self.snr_db), self.m, self.method);
        for v in [self.pd, self.pm, self.ppv, self.f1_paper, self.f1_standard, self.auc] {
            s.push(',');
            s.push_str(&fmt_opt(v));
        }
        let _ = write!(s, ",{}", self.frames);
        s
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 10 {
            return None;
        }
        let opt = |s: &str| -> Option<Option<f64>> {
            if s == "NA" {
                Some(None)
            } else {
                s.parse().ok().map(Some)
            }
        };
        Some(Self {
            snr_db: f[0].parse().ok()?,
            m: f[1].parse().ok()?,
            method: f[2].to_string(),
            pd: opt(f[3])?,
            pm: opt(f[4])?,
            ppv: opt(f[5])?,
            f1_paper: opt(f[6])?,
            f1_standard: opt(f[7])?,
            auc: opt(f[8])?,
            frames: f[9].parse().ok()?,
        })
    }
}

pub fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v:.6}")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

/// Header plus one line per row.
pub fn write_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Option<Vec<MetricRow>> {
    let mut lines = text.lines();
    if lines.next()? != CSV_HEADER {
        return None;
    }
    lines.filter(|l| !l.is_empty()).map(MetricRow::from_csv).collect()
}
