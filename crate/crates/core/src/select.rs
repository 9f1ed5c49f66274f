//! The multivariable procedure: cycle over predictors in order of initial
//! importance, re-running the function selection for continuous variables
//! and a 1-df inclusion test for binary ones, until the selected forms are
//! stable between cycles.

use crate::data::{DataError, Dataset, VariableKind, VariableMeta};
use crate::dist::chisq_sf;
use crate::fp::{self, fmt_power, FpError, FpForm};
use crate::fsp::{self, FspError, FspOptions, Selected};
use crate::linreg::{self, dd_from_rss, FitResult, LinregError, Mat, QrWork};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("dataset is not prepared for model fitting: {0}")]
    NotPrepared(String),
    #[error("variable {0:?} is not a predictor in this dataset")]
    UnknownVariable(String),
    #[error("models name different predictors; only in a: {only_a:?}, only in b: {only_b:?}")]
    NameMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },
    #[error("model file error: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Fsp(#[from] FspError),
    #[error(transparent)]
    Fp(#[from] FpError),
    #[error(transparent)]
    Fit(#[from] LinregError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Significance levels for the two components of the procedure.
#[derive(Debug, Clone, Copy)]
pub struct MfpOptions {
    /// Level for keeping a variable in the model at all.
    pub alpha_select: f64,
    /// Level for choosing between linear, FP1 and FP2.
    pub alpha_fp: f64,
    /// Cycle cap; hitting it flags the model as non-converged.
    pub max_cycles: usize,
}

impl MfpOptions {
    pub fn new(alpha_select: f64, alpha_fp: f64) -> Self {
        MfpOptions {
            alpha_select,
            alpha_fp,
            max_cycles: 10,
        }
    }

    pub fn at_level(alpha: f64) -> Self {
        MfpOptions::new(alpha, alpha)
    }
}

/// One predictor's state in a fitted model.
#[derive(Debug, Clone)]
pub struct TermState {
    pub name: String,
    pub kind: VariableKind,
    pub form: FpForm,
    /// Coefficients of this term's basis columns in the joint fit.
    pub coefficients: Vec<f64>,
    /// Origin shift the (prepared) data carried for this variable.
    pub shift: f64,
    /// Decimal divisor; coefficients refer to (x + shift) / scale.
    pub scale: f64,
    /// Observed range on the original (unshifted) scale.
    pub xmin: f64,
    pub xmax: f64,
    /// First column of this term's basis in the joint design (0 = intercept).
    pub col_start: usize,
}

impl TermState {
    /// This term's contribution f(x) for a shifted data column, using the
    /// stored coefficients.
    pub fn contribution(&self, shifted_col: &[f64]) -> Vec<f64> {
        if !self.form.included() {
            return vec![0.0; shifted_col.len()];
        }
        let u: Vec<f64> = shifted_col.iter().map(|v| v / self.scale).collect();
        let mut basis = Mat::with_rows(u.len());
        fp::push_form_basis(&mut basis, &u, self.form);
        basis.mul_vec(&self.coefficients)
    }
}

/// A fitted multivariable fractional polynomial model.
#[derive(Debug, Clone)]
pub struct MfpModel {
    /// Per-predictor states, in dataset order.
    pub terms: Vec<TermState>,
    pub intercept: f64,
    pub alpha_select: f64,
    pub alpha_fp: f64,
    pub cycles_used: usize,
    pub converged: bool,
    pub final_fit: FitResult,
    /// Names in the order the cycle visits them.
    pub visit_order: Vec<String>,
}

impl MfpModel {
    pub fn term(&self, name: &str) -> Option<&TermState> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn forms(&self) -> BTreeMap<String, FpForm> {
        self.terms
            .iter()
            .map(|t| (t.name.clone(), t.form))
            .collect()
    }

    /// Sum of all term contributions except `skip`, plus the intercept if
    /// `with_intercept`. Columns come from the prepared dataset.
    pub fn partial_predictor(
        &self,
        ds: &Dataset,
        skip: Option<&str>,
        with_intercept: bool,
    ) -> Result<Vec<f64>, SelectError> {
        let mut out = vec![if with_intercept { self.intercept } else { 0.0 }; ds.n()];
        for t in &self.terms {
            if Some(t.name.as_str()) == skip || !t.form.included() {
                continue;
            }
            let col = ds
                .column(&t.name)
                .ok_or_else(|| SelectError::UnknownVariable(t.name.clone()))?;
            for (o, c) in out.iter_mut().zip(t.contribution(col)) {
                *o += c;
            }
        }
        Ok(out)
    }
}

struct Prepared<'a> {
    metas: Vec<&'a VariableMeta>,
    cols: Vec<&'a [f64]>,
    /// Scaled columns the bases are built on (continuous: col / scale).
    us: Vec<Vec<f64>>,
    scales: Vec<f64>,
    y: &'a [f64],
    n: usize,
}

fn prepare<'a>(ds: &'a Dataset) -> Result<Prepared<'a>, SelectError> {
    if !ds.is_prepared() {
        return Err(SelectError::NotPrepared(
            "expand categoricals and apply shifts first (Dataset::prepared)".into(),
        ));
    }
    let mut metas = Vec::new();
    let mut cols = Vec::new();
    let mut us = Vec::new();
    let mut scales = Vec::new();
    for (m, col) in ds.predictors() {
        let scale = if m.kind == VariableKind::Continuous {
            fp::decimal_scale(col)
        } else {
            1.0
        };
        metas.push(m);
        cols.push(col);
        us.push(col.iter().map(|v| v / scale).collect());
        scales.push(scale);
    }
    let (_, y) = ds.outcome();
    Ok(Prepared {
        metas,
        cols,
        us,
        scales,
        y,
        n: ds.n(),
    })
}

fn adjust_design(p: &Prepared<'_>, forms: &[FpForm], skip: usize) -> Mat {
    let mut m = Mat::with_rows(p.n);
    for (k, form) in forms.iter().enumerate() {
        if k == skip || !form.included() {
            continue;
        }
        fp::push_form_basis(&mut m, &p.us[k], *form);
    }
    m
}

/// Fit an MFP model: backward elimination interleaved with the function
/// selection procedure, visiting predictors in ascending p-value order
/// from the initial full linear model, until the selected forms repeat.
pub fn fit_mfp(ds: &Dataset, opts: &MfpOptions) -> Result<MfpModel, SelectError> {
    let p = prepare(ds)?;
    let k = p.metas.len();
    let mut work = QrWork::default();

    // initial importance order: 1-df removal tests in the full linear model
    let mut full = Mat::with_rows(p.n);
    full.push_intercept();
    for u in &p.us {
        full.push_col(u);
    }
    let rss_full = linreg::fit_rss(&full, p.y, &mut work)?;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(k);
    for v in 0..k {
        let mut reduced = Mat::with_rows(p.n);
        reduced.push_intercept();
        for (j, u) in p.us.iter().enumerate() {
            if j != v {
                reduced.push_col(u);
            }
        }
        let rss_minus = linreg::fit_rss(&reduced, p.y, &mut work)?;
        let pval = chisq_sf(dd_from_rss(rss_minus, rss_full, p.n), 1);
        order.push((pval, v));
    }
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let visit: Vec<usize> = order.iter().map(|&(_, v)| v).collect();

    let force_all = opts.alpha_select >= 1.0;
    let mut forms = vec![FpForm::Linear; k];
    let mut cycles_used = 0;
    let mut converged = false;
    while cycles_used < opts.max_cycles {
        cycles_used += 1;
        let before = forms.clone();
        for &v in &visit {
            let meta = p.metas[v];
            let adjust = adjust_design(&p, &forms, v);
            let adjust_opt = if adjust.p() == 0 { None } else { Some(&adjust) };
            if meta.kind == VariableKind::Continuous {
                let fopts = FspOptions {
                    alpha_select: opts.alpha_select,
                    alpha_fp: opts.alpha_fp,
                    forced_in: meta.forced_in || force_all,
                    max_degree: meta.max_degree,
                };
                let dev =
                    fsp::fsp_deviances(&p.us[v], p.y, adjust_opt, meta.max_degree, &mut work)?;
                let p1 = chisq_sf(dev.dd_vs_null(), dev.df_null());
                let p2 = chisq_sf(dev.dd_vs_linear(), dev.df_linear());
                let p3 = dev.dd_fp2_vs_fp1().map(|d| chisq_sf(d, 2));
                forms[v] = match fsp::decide(p1, p2, p3, &fopts).0 {
                    Selected::Out => FpForm::Out,
                    Selected::Linear => FpForm::Linear,
                    Selected::BestFp1 => FpForm::from_powers(dev.best_fp1),
                    Selected::BestFp2 => {
                        FpForm::from_powers(dev.best_fp2.expect("degree-2 search ran"))
                    }
                };
            } else {
                // binary (or dummy): in or out on a 1-df deviance test
                let rss_without = linreg::fit_rss(&with_intercept(&adjust), p.y, &mut work)?;
                let mut with = with_intercept(&adjust);
                with.push_col(&p.us[v]);
                let rss_with = linreg::fit_rss(&with, p.y, &mut work)?;
                let pval = chisq_sf(dd_from_rss(rss_without, rss_with, p.n), 1);
                forms[v] = if meta.forced_in || force_all || pval < opts.alpha_select {
                    FpForm::Linear
                } else {
                    FpForm::Out
                };
            }
        }
        if forms == before {
            converged = true;
            break;
        }
    }

    build_model(&p, &forms, opts, cycles_used, converged, &visit)
}

fn with_intercept(adjust: &Mat) -> Mat {
    let mut m = Mat::with_rows(adjust.n());
    m.push_intercept();
    for j in 0..adjust.p() {
        m.push_col(adjust.col(j));
    }
    m
}

fn build_model(
    p: &Prepared<'_>,
    forms: &[FpForm],
    opts: &MfpOptions,
    cycles_used: usize,
    converged: bool,
    visit: &[usize],
) -> Result<MfpModel, SelectError> {
    let mut design = Mat::with_rows(p.n);
    design.push_intercept();
    let mut col_starts = vec![0usize; forms.len()];
    for (v, form) in forms.iter().enumerate() {
        col_starts[v] = design.p();
        fp::push_form_basis(&mut design, &p.us[v], *form);
    }
    let fit = linreg::fit_ols(&design, p.y)?;

    let mut terms = Vec::with_capacity(forms.len());
    for (v, form) in forms.iter().enumerate() {
        let meta = p.metas[v];
        let ncols = form.n_cols();
        let shift = meta.shift.unwrap_or(0.0);
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &val in p.cols[v] {
            xmin = xmin.min(val - shift);
            xmax = xmax.max(val - shift);
        }
        terms.push(TermState {
            name: meta.name.clone(),
            kind: meta.kind,
            form: *form,
            coefficients: fit.coefficients[col_starts[v]..col_starts[v] + ncols].to_vec(),
            shift,
            scale: p.scales[v],
            xmin,
            xmax,
            col_start: col_starts[v],
        });
    }
    Ok(MfpModel {
        intercept: fit.coefficients[0],
        terms,
        alpha_select: opts.alpha_select,
        alpha_fp: opts.alpha_fp,
        cycles_used,
        converged,
        final_fit: fit,
        visit_order: visit.iter().map(|&v| p.metas[v].name.clone()).collect(),
    })
}

/// Fit the joint model for a fixed set of forms, with no selection.
/// Predictors absent from `forms` are treated as out.
pub fn impose_forms(
    ds: &Dataset,
    forms_by_name: &BTreeMap<String, FpForm>,
    opts: &MfpOptions,
) -> Result<MfpModel, SelectError> {
    let p = prepare(ds)?;
    for name in forms_by_name.keys() {
        if !p.metas.iter().any(|m| &m.name == name) {
            return Err(SelectError::UnknownVariable(name.clone()));
        }
    }
    let forms: Vec<FpForm> = p
        .metas
        .iter()
        .map(|m| forms_by_name.get(&m.name).copied().unwrap_or(FpForm::Out))
        .collect();
    build_model(&p, &forms, opts, 0, true, &[])
}

/// Percentage reduction in R-squared when each selected predictor is
/// removed from the model (functional forms of the others held fixed,
/// coefficients re-estimated).
pub fn r2_reduction(model: &MfpModel, ds: &Dataset) -> Result<Vec<(String, f64)>, SelectError> {
    let p = prepare(ds)?;
    let forms: Vec<FpForm> = p
        .metas
        .iter()
        .map(|m| model.term(&m.name).map_or(FpForm::Out, |t| t.form))
        .collect();

    let mut full = Mat::with_rows(p.n);
    full.push_intercept();
    for (v, form) in forms.iter().enumerate() {
        fp::push_form_basis(&mut full, &p.us[v], *form);
    }
    let r2_full = linreg::fit_ols(&full, p.y)?.r2;

    let mut out = Vec::new();
    for (v, form) in forms.iter().enumerate() {
        if !form.included() {
            continue;
        }
        let mut reduced = Mat::with_rows(p.n);
        reduced.push_intercept();
        for (w, other) in forms.iter().enumerate() {
            if w != v {
                fp::push_form_basis(&mut reduced, &p.us[w], *other);
            }
        }
        let r2_minus = linreg::fit_ols(&reduced, p.y)?.r2;
        out.push((
            p.metas[v].name.clone(),
            100.0 * (r2_full - r2_minus) / r2_full,
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// model files

pub const MODEL_FORMAT: &str = "mfp-model";
pub const MODEL_VERSION: u32 = 1;

/// Serialized form of a fitted model; the on-disk TOML structure.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub alpha_select: f64,
    pub alpha_fp: f64,
    pub cycles_used: usize,
    pub converged: bool,
    pub intercept: f64,
    pub term: Vec<TermFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TermFile {
    pub name: String,
    pub kind: VariableKind,
    pub status: String,
    #[serde(default)]
    pub powers: Vec<f64>,
    #[serde(default)]
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub min: f64,
    #[serde(default)]
    pub max: f64,
}

fn one() -> f64 {
    1.0
}

impl TermFile {
    pub fn form(&self) -> Result<FpForm, SelectError> {
        match (self.status.as_str(), self.powers.as_slice()) {
            ("out", _) => Ok(FpForm::Out),
            ("linear", _) => Ok(FpForm::Linear),
            ("fp1", [p]) => Ok(FpForm::Fp1(*p)),
            ("fp2", [a, b]) => Ok(FpForm::Fp2(*a, *b)),
            _ => Err(SelectError::BadModelFile(format!(
                "term {:?}: status {:?} with powers {:?}",
                self.name, self.status, self.powers
            ))),
        }
    }

    /// Display in the conventional notation: powers for continuous
    /// variables, in/out for binary ones.
    pub fn describe(&self) -> String {
        match (self.kind, self.form().ok()) {
            (_, Some(FpForm::Out)) => "out".into(),
            (VariableKind::Binary, _) => "in".into(),
            (_, Some(FpForm::Linear)) => "1".into(),
            (_, Some(FpForm::Fp1(p))) => fmt_power(p),
            (_, Some(FpForm::Fp2(a, b))) => format!("{}, {}", fmt_power(a), fmt_power(b)),
            (_, None) => format!("?{}", self.status),
        }
    }
}

impl ModelFile {
    pub fn from_model(m: &MfpModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            alpha_select: m.alpha_select,
            alpha_fp: m.alpha_fp,
            cycles_used: m.cycles_used,
            converged: m.converged,
            intercept: m.intercept,
            term: m
                .terms
                .iter()
                .map(|t| {
                    let (status, powers) = match t.form {
                        FpForm::Out => ("out", vec![]),
                        FpForm::Linear => ("linear", vec![]),
                        FpForm::Fp1(p) => ("fp1", vec![p]),
                        FpForm::Fp2(a, b) => ("fp2", vec![a, b]),
                    };
                    TermFile {
                        name: t.name.clone(),
                        kind: t.kind,
                        status: status.into(),
                        powers,
                        coefficients: t.coefficients.clone(),
                        shift: t.shift,
                        scale: t.scale,
                        min: t.xmin,
                        max: t.xmax,
                    }
                })
                .collect(),
        }
    }

    pub fn forms(&self) -> Result<BTreeMap<String, FpForm>, SelectError> {
        self.term
            .iter()
            .map(|t| t.form().map(|f| (t.name.clone(), f)))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model serializes")
    }

    pub fn parse(text: &str) -> Result<Self, SelectError> {
        let file: ModelFile =
            toml::from_str(text).map_err(|e| SelectError::BadModelFile(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(SelectError::BadModelFile(format!(
                "unexpected format {:?}",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(SelectError::BadModelFile(format!(
                "unsupported version {}",
                file.version
            )));
        }
        for t in &file.term {
            t.form()?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, SelectError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// model comparison

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub variable: String,
    pub a: String,
    /// "=" when b agrees with a, otherwise b's own description.
    pub b: String,
    pub truth: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Predictors where a and b agree on inclusion.
    pub inclusion_agreements: usize,
    /// Predictors where a and b agree exactly on form and powers.
    pub power_agreements: usize,
    pub total: usize,
}

/// Compare two selected models predictor by predictor, optionally against a
/// reference truth model.
pub fn compare_models(
    a: &ModelFile,
    b: &ModelFile,
    truth: Option<&ModelFile>,
) -> Result<ComparisonReport, SelectError> {
    let names_a: Vec<&str> = a.term.iter().map(|t| t.name.as_str()).collect();
    let names_b: Vec<&str> = b.term.iter().map(|t| t.name.as_str()).collect();
    let only_a: Vec<String> = names_a
        .iter()
        .filter(|n| !names_b.contains(n))
        .map(|s| s.to_string())
        .collect();
    let only_b: Vec<String> = names_b
        .iter()
        .filter(|n| !names_a.contains(n))
        .map(|s| s.to_string())
        .collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(SelectError::NameMismatch { only_a, only_b });
    }

    let mut rows = Vec::new();
    let mut inclusion = 0;
    let mut power = 0;
    for ta in &a.term {
        let tb = b
            .term
            .iter()
            .find(|t| t.name == ta.name)
            .expect("name sets match");
        let fa = ta.form()?;
        let fb = tb.form()?;
        if fa.included() == fb.included() {
            inclusion += 1;
        }
        let agree = fa == fb;
        if agree {
            power += 1;
        }
        let tr = truth.and_then(|t| t.term.iter().find(|x| x.name == ta.name));
        rows.push(ComparisonRow {
            variable: ta.name.clone(),
            a: ta.describe(),
            b: if agree { "=".into() } else { tb.describe() },
            truth: tr.map(|t| t.describe()),
        });
    }
    Ok(ComparisonReport {
        total: rows.len(),
        rows,
        inclusion_agreements: inclusion,
        power_agreements: power,
    })
}
