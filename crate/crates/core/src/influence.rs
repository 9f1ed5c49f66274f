//! Influential-point diagnostics: leave-one-out and leave-two-out scans of
//! the three function-selection comparisons, decision-flip flagging, pair
//! grouping, and the two multivariable workflows (eliminate univariable IPs
//! first, or scan the selected model).
//!
//! For every deletion the best FP1 and FP2 are searched from scratch on the
//! reduced data; the recorded deviance differences are exactly what a fresh
//! function-selection run on that reduced dataset would produce.

use crate::data::{DataError, Dataset, VariableKind};
use crate::dist::chisq_quantile;
use crate::fp::{self, FpError};
use crate::fsp::{self, FspError};
use crate::linreg::{Mat, QrWork};
use crate::select::{self, MfpModel, MfpOptions, SelectError};
use rayon::prelude::*;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InfluenceError {
    #[error("scan needs at least 10 observations; got {0}")]
    ScanTooSmall(usize),
    #[error("scan significance levels must lie in (0, 1); got {0}")]
    BadAlpha(f64),
    #[error("adjustment matrix has {0} rows, data has {1}")]
    AdjustRowMismatch(usize, usize),
    #[error("the model did not converge; refusing to scan it")]
    NotConverged,
    #[error(transparent)]
    Fsp(#[from] FspError),
    #[error(transparent)]
    Fp(#[from] FpError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Which deletions a scan enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    Loo,
    Pairs,
}

/// Whether influential points were judged against univariable fits or
/// against the selected multivariable model with frozen coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustMode {
    Univariable,
    MultivariableAdjusted,
}

/// One or two deleted observations, 0-based. Reports and files print them
/// 1-based to match the convention of numbering observations from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Deletion {
    pub first: usize,
    pub second: Option<usize>,
}

impl Deletion {
    pub fn single(i: usize) -> Self {
        Deletion {
            first: i,
            second: None,
        }
    }

    pub fn pair(i: usize, j: usize) -> Self {
        assert!(i < j, "pairs are stored with i < j");
        Deletion {
            first: i,
            second: Some(j),
        }
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.first == idx || self.second == Some(idx)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.first).chain(self.second)
    }
}

/// Deviance differences for one deletion, with significance flags at every
/// requested level (all derived from the same deviances, no refitting).
#[derive(Debug, Clone)]
pub struct DevDiffRecord {
    pub deleted: Deletion,
    pub dd_fp2_null: f64,
    pub dd_fp2_linear: f64,
    pub dd_fp2_fp1: Option<f64>,
    /// Per requested alpha: significance of the three comparisons.
    pub decisions: Vec<[bool; 3]>,
    /// A fit failure on this reduced dataset; the record is kept but its
    /// deviances are NaN and it never counts as a decision flip.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FullDataComparisons {
    pub dd_fp2_null: f64,
    pub dd_fp2_linear: f64,
    pub dd_fp2_fp1: Option<f64>,
    pub decisions: Vec<[bool; 3]>,
}

#[derive(Debug, Clone)]
pub struct ScanResult {
    pub mode: ScanMode,
    pub max_degree: u8,
    pub alphas: Vec<f64>,
    /// Chi-square critical values per alpha for the three comparisons.
    pub thresholds: Vec<[f64; 3]>,
    pub full: FullDataComparisons,
    pub records: Vec<DevDiffRecord>,
}

fn critical_values(alpha: f64, max_degree: u8) -> [f64; 3] {
    let df1 = 2 * max_degree as u32;
    let df2 = df1 - 1;
    [
        chisq_quantile(alpha, df1),
        chisq_quantile(alpha, df2),
        chisq_quantile(alpha, 2),
    ]
}

fn decisions_of(dd1: f64, dd2: f64, dd3: Option<f64>, thresholds: &[[f64; 3]]) -> Vec<[bool; 3]> {
    thresholds
        .iter()
        .map(|t| [dd1 > t[0], dd2 > t[1], dd3.is_some_and(|d| d > t[2])])
        .collect()
}

fn reduced_vec(src: &[f64], del: &Deletion) -> Vec<f64> {
    let mut out = Vec::with_capacity(src.len() - 1 - del.second.is_some() as usize);
    for (i, &v) in src.iter().enumerate() {
        if !del.contains(i) {
            out.push(v);
        }
    }
    out
}

fn reduced_mat(src: &Mat, del: &Deletion) -> Mat {
    let mut m = Mat::with_rows(src.n() - 1 - del.second.is_some() as usize);
    for j in 0..src.p() {
        m.push_col(&reduced_vec(src.col(j), del));
    }
    m
}

fn scan(
    x: &[f64],
    y: &[f64],
    adjust: Option<&Mat>,
    alphas: &[f64],
    max_degree: u8,
    mode: ScanMode,
) -> Result<ScanResult, InfluenceError> {
    let n = x.len();
    if n < 10 {
        return Err(InfluenceError::ScanTooSmall(n));
    }
    for &a in alphas {
        if !(a > 0.0 && a < 1.0) {
            return Err(InfluenceError::BadAlpha(a));
        }
    }
    if let Some(adj) = adjust {
        if adj.n() != n {
            return Err(InfluenceError::AdjustRowMismatch(adj.n(), n));
        }
    }
    fp::check_positive(x)?;

    // one scale for the whole scan: selection and deviances are invariant
    // to it, and a shared value keeps records comparable
    let scale = fp::decimal_scale(x);
    let u: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let thresholds: Vec<[f64; 3]> = alphas
        .iter()
        .map(|&a| critical_values(a, max_degree))
        .collect();

    let mut work = QrWork::default();
    let full_dev = fsp::fsp_deviances(&u, y, adjust, max_degree, &mut work)?;
    let full = FullDataComparisons {
        dd_fp2_null: full_dev.dd_vs_null(),
        dd_fp2_linear: full_dev.dd_vs_linear(),
        dd_fp2_fp1: full_dev.dd_fp2_vs_fp1(),
        decisions: decisions_of(
            full_dev.dd_vs_null(),
            full_dev.dd_vs_linear(),
            full_dev.dd_fp2_vs_fp1(),
            &thresholds,
        ),
    };

    let deletions: Vec<Deletion> = match mode {
        ScanMode::Loo => (0..n).map(Deletion::single).collect(),
        ScanMode::Pairs => {
            let mut v = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    v.push(Deletion::pair(i, j));
                }
            }
            v
        }
    };

    let records: Vec<DevDiffRecord> = deletions
        .into_par_iter()
        .map_init(QrWork::default, |work, del| {
            let ur = reduced_vec(&u, &del);
            let yr = reduced_vec(y, &del);
            let ar = adjust.map(|a| reduced_mat(a, &del));
            match fsp::fsp_deviances(&ur, &yr, ar.as_ref(), max_degree, work) {
                Ok(dev) => {
                    let dd1 = dev.dd_vs_null();
                    let dd2 = dev.dd_vs_linear();
                    let dd3 = dev.dd_fp2_vs_fp1();
                    DevDiffRecord {
                        deleted: del,
                        dd_fp2_null: dd1,
                        dd_fp2_linear: dd2,
                        dd_fp2_fp1: dd3,
                        decisions: decisions_of(dd1, dd2, dd3, &thresholds),
                        error: None,
                    }
                }
                Err(e) => DevDiffRecord {
                    deleted: del,
                    dd_fp2_null: f64::NAN,
                    dd_fp2_linear: f64::NAN,
                    dd_fp2_fp1: None,
                    decisions: vec![[false; 3]; thresholds.len()],
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    Ok(ScanResult {
        mode,
        max_degree,
        alphas: alphas.to_vec(),
        thresholds,
        full,
        records,
    })
}

/// Successively delete each single observation and record the three
/// function-selection deviance differences on the reduced data.
pub fn loo_scan(
    x: &[f64],
    y: &[f64],
    adjust: Option<&Mat>,
    alphas: &[f64],
    max_degree: u8,
) -> Result<ScanResult, InfluenceError> {
    scan(x, y, adjust, alphas, max_degree, ScanMode::Loo)
}

/// The same over all unordered pairs of observations (n(n-1)/2 deletions).
pub fn pair_scan(
    x: &[f64],
    y: &[f64],
    adjust: Option<&Mat>,
    alphas: &[f64],
    max_degree: u8,
) -> Result<ScanResult, InfluenceError> {
    scan(x, y, adjust, alphas, max_degree, ScanMode::Pairs)
}

/// Influential deletions for one variable at one significance level.
#[derive(Debug, Clone)]
pub struct IpReport {
    pub variable: String,
    pub flagged: Vec<Deletion>,
    pub full_decisions: [bool; 3],
    pub alpha: f64,
    pub mode: AdjustMode,
}

/// Deletions whose significance pattern differs from the full data on any
/// of the three comparisons, in either direction: losing significance
/// questions the complex model, gaining it reveals a masked one.
pub fn flag_influential(
    scan: &ScanResult,
    alpha: f64,
    variable: &str,
    mode: AdjustMode,
) -> IpReport {
    let t = critical_values(alpha, scan.max_degree);
    let judge = |dd1: f64, dd2: f64, dd3: Option<f64>| -> [bool; 3] {
        [dd1 > t[0], dd2 > t[1], dd3.is_some_and(|d| d > t[2])]
    };
    let full = judge(
        scan.full.dd_fp2_null,
        scan.full.dd_fp2_linear,
        scan.full.dd_fp2_fp1,
    );
    let flagged = scan
        .records
        .iter()
        .filter(|r| r.error.is_none())
        .filter(|r| judge(r.dd_fp2_null, r.dd_fp2_linear, r.dd_fp2_fp1) != full)
        .map(|r| r.deleted)
        .collect();
    IpReport {
        variable: variable.to_string(),
        flagged,
        full_decisions: full,
        alpha,
        mode,
    }
}

/// Five-number summary (min, lower quartile, median, upper quartile, max).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNum {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn five_num(values: &mut Vec<f64>) -> Option<FiveNum> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| -> f64 {
        // type-7 quantile: linear interpolation of order statistics
        let h = p * (values.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        values[lo] + (h - lo as f64) * (values[hi] - values[lo])
    };
    Some(FiveNum {
        min: values[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: values[values.len() - 1],
    })
}

#[derive(Debug, Clone)]
pub struct GroupSummary {
    pub count: usize,
    pub dd_fp2_null: Option<FiveNum>,
    pub dd_fp2_linear: Option<FiveNum>,
    pub dd_fp2_fp1: Option<FiveNum>,
}

fn summarize<'a>(records: impl Iterator<Item = &'a DevDiffRecord>) -> GroupSummary {
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    let mut d3 = Vec::new();
    let mut count = 0;
    for r in records {
        count += 1;
        if r.error.is_none() {
            d1.push(r.dd_fp2_null);
            d2.push(r.dd_fp2_linear);
            if let Some(v) = r.dd_fp2_fp1 {
                d3.push(v);
            }
        }
    }
    GroupSummary {
        count,
        dd_fp2_null: five_num(&mut d1),
        dd_fp2_linear: five_num(&mut d2),
        dd_fp2_fp1: five_num(&mut d3),
    }
}

/// Pair-scan summaries: G1 all pairs, G2 pairs that leave every identified
/// influential point in the data, G3 pairs that remove at least one.
/// G2 and G3 partition G1.
#[derive(Debug, Clone)]
pub struct PairGroups {
    pub g1: GroupSummary,
    pub g2: GroupSummary,
    pub g3: GroupSummary,
}

pub fn group_pairs(records: &[DevDiffRecord], ip_set: &BTreeSet<usize>) -> PairGroups {
    let hits_ip = |r: &DevDiffRecord| r.deleted.indices().any(|i| ip_set.contains(&i));
    PairGroups {
        g1: summarize(records.iter()),
        g2: summarize(records.iter().filter(|r| !hits_ip(r))),
        g3: summarize(records.iter().filter(|r| hits_ip(r))),
    }
}

/// One variable's scan with its flagging report.
#[derive(Debug)]
pub struct VariableScan {
    pub variable: String,
    pub scan: ScanResult,
    pub report: IpReport,
}

/// Result of either workflow: per-variable reports, the union of deleted
/// observations, the reduced dataset and the model refit on it.
#[derive(Debug)]
pub struct IpxResult {
    pub scans: Vec<VariableScan>,
    /// 0-based indices removed from the dataset, ascending.
    pub ip_union: Vec<usize>,
    pub reduced: Dataset,
    pub model: MfpModel,
}

fn union_of(scans: &[VariableScan]) -> Vec<usize> {
    let mut set = BTreeSet::new();
    for vs in scans {
        for del in &vs.report.flagged {
            set.extend(del.indices());
        }
    }
    set.into_iter().collect()
}

/// Univariable-first workflow: scan each continuous predictor on its own
/// (leave-one-out, no adjustment), pool every flagged observation, remove
/// them all and fit the multivariable model on the reduced data.
pub fn ipx_univariable(
    ds: &Dataset,
    opts: &MfpOptions,
    alphas: &[f64],
) -> Result<IpxResult, InfluenceError> {
    let (_, y) = ds.outcome();
    let mut scans = Vec::new();
    for (meta, col) in ds.predictors() {
        if meta.kind != VariableKind::Continuous {
            continue;
        }
        let scan = loo_scan(col, y, None, alphas, meta.max_degree)?;
        let report = flag_influential(&scan, opts.alpha_fp, &meta.name, AdjustMode::Univariable);
        scans.push(VariableScan {
            variable: meta.name.clone(),
            scan,
            report,
        });
    }
    let ip_union = union_of(&scans);
    let reduced = ds.drop_rows(&ip_union)?;
    let model = select::fit_mfp(&reduced, opts)?;
    Ok(IpxResult {
        scans,
        ip_union,
        reduced,
        model,
    })
}

/// Model-first workflow: scan each continuous variable the model kept,
/// holding all other selected terms fixed at their fitted powers AND
/// coefficients (the working response is y minus that frozen offset, so
/// only the scanned variable's function and the intercept are re-estimated
/// per deletion). Variables the model excluded are not checked.
pub fn ipx_multivariable(
    ds: &Dataset,
    model: &MfpModel,
    alphas: &[f64],
) -> Result<IpxResult, InfluenceError> {
    if !model.converged {
        return Err(InfluenceError::NotConverged);
    }
    let (_, y) = ds.outcome();
    let mut scans = Vec::new();
    for term in model.terms.iter().filter(|t| t.form.included()) {
        if term.kind != VariableKind::Continuous {
            continue;
        }
        let col = ds
            .column(&term.name)
            .ok_or_else(|| SelectError::UnknownVariable(term.name.clone()))?;
        let offset = model.partial_predictor(ds, Some(&term.name), false)?;
        let y_work: Vec<f64> = y.iter().zip(&offset).map(|(a, b)| a - b).collect();
        let meta = ds.meta_of(&term.name).expect("column exists");
        let scan = loo_scan(col, &y_work, None, alphas, meta.max_degree)?;
        let report = flag_influential(
            &scan,
            model.alpha_fp,
            &term.name,
            AdjustMode::MultivariableAdjusted,
        );
        scans.push(VariableScan {
            variable: term.name.clone(),
            scan,
            report,
        });
    }
    let ip_union = union_of(&scans);
    let reduced = ds.drop_rows(&ip_union)?;
    let opts = MfpOptions::new(model.alpha_select, model.alpha_fp);
    let refit = select::fit_mfp(&reduced, &opts)?;
    Ok(IpxResult {
        scans,
        ip_union,
        reduced,
        model: refit,
    })
}
