//! Fractional polynomial powers, basis construction and the exhaustive
//! best-function search.
//!
//! Powers come from the conventional set {-2, -1, -0.5, 0, 0.5, 1, 2, 3}
//! where 0 stands for the natural logarithm. Degree one gives 8 candidate
//! functions; degree two gives the 36 unordered pairs (repeats allowed),
//! 44 candidates in total. A repeated pair (p, p) uses the basis
//! (x^p, x^p ln x).

use crate::linreg::{self, FitResult, LinregError, Mat, QrWork};
use thiserror::Error;

/// The permitted FP exponents, in ascending order.
pub const POWER_SET: [f64; 8] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];

#[derive(Debug, Error)]
pub enum FpError {
    #[error("non-positive value at index {index}: FP transforms need x > 0 (apply a shift first)")]
    NonPositiveInput { index: usize },
    #[error("all {tried} candidate fits failed; last error: {last}")]
    AllCandidatesFailed { tried: usize, last: LinregError },
    #[error(transparent)]
    Fit(#[from] LinregError),
}

/// One or two FP exponents; pairs are stored with p1 <= p2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTuple {
    pub p1: f64,
    pub p2: Option<f64>,
}

impl PowerTuple {
    pub fn fp1(p: f64) -> Self {
        PowerTuple { p1: p, p2: None }
    }

    pub fn fp2(a: f64, b: f64) -> Self {
        let (p1, p2) = if a <= b { (a, b) } else { (b, a) };
        PowerTuple { p1, p2: Some(p2) }
    }

    pub fn degree(&self) -> u8 {
        if self.p2.is_some() {
            2
        } else {
            1
        }
    }

    pub fn n_cols(&self) -> usize {
        self.degree() as usize
    }

    /// True for the degree-1 tuple with power 1, i.e. a straight line.
    pub fn is_linear(&self) -> bool {
        self.p2.is_none() && self.p1 == 1.0
    }
}

impl std::fmt::Display for PowerTuple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.p2 {
            Some(p2) => write!(f, "{}, {}", fmt_power(self.p1), fmt_power(p2)),
            None => write!(f, "{}", fmt_power(self.p1)),
        }
    }
}

/// Powers print the way the FP literature writes them: "0.5", "-2", "3".
pub fn fmt_power(p: f64) -> String {
    if p == p.trunc() {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

/// Selected functional form of one variable, without coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FpForm {
    Out,
    Linear,
    Fp1(f64),
    Fp2(f64, f64),
}

impl FpForm {
    pub fn from_powers(p: PowerTuple) -> Self {
        match p.p2 {
            Some(p2) => FpForm::Fp2(p.p1, p2),
            None => FpForm::Fp1(p.p1),
        }
    }

    pub fn included(&self) -> bool {
        !matches!(self, FpForm::Out)
    }

    pub fn n_cols(&self) -> usize {
        match self {
            FpForm::Out => 0,
            FpForm::Linear | FpForm::Fp1(_) => 1,
            FpForm::Fp2(_, _) => 2,
        }
    }

    pub fn powers(&self) -> Option<PowerTuple> {
        match *self {
            FpForm::Out | FpForm::Linear => None,
            FpForm::Fp1(p) => Some(PowerTuple::fp1(p)),
            FpForm::Fp2(a, b) => Some(PowerTuple::fp2(a, b)),
        }
    }
}

/// A form together with the fitted coefficients of its basis columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FpSpec {
    pub form: FpForm,
    /// One coefficient per basis column; empty when the variable is out.
    pub coefficients: Vec<f64>,
}

impl FpSpec {
    pub fn out() -> Self {
        FpSpec {
            form: FpForm::Out,
            coefficients: Vec::new(),
        }
    }
}

/// All candidate power tuples of the given degree (1 -> 8, 2 -> 36).
pub fn enumerate_powers(degree: u8) -> Vec<PowerTuple> {
    match degree {
        1 => POWER_SET.iter().map(|&p| PowerTuple::fp1(p)).collect(),
        2 => {
            let mut out = Vec::with_capacity(36);
            for (i, &a) in POWER_SET.iter().enumerate() {
                for &b in &POWER_SET[i..] {
                    out.push(PowerTuple::fp2(a, b));
                }
            }
            out
        }
        other => panic!("FP degree must be 1 or 2, got {other}"),
    }
}

pub(crate) fn check_positive(x: &[f64]) -> Result<(), FpError> {
    match x.iter().position(|&v| v <= 0.0) {
        Some(index) => Err(FpError::NonPositiveInput { index }),
        None => Ok(()),
    }
}

fn push_power_col(design: &mut Mat, x: &[f64], p: f64) {
    let n = x.len();
    let start = design.p();
    design.push_col(&vec![0.0; n]);
    let col = design.col_mut(start);
    if p == 0.0 {
        for (c, &v) in col.iter_mut().zip(x) {
            *c = v.ln();
        }
    } else {
        for (c, &v) in col.iter_mut().zip(x) {
            *c = v.powf(p);
        }
    }
}

/// Append the basis columns for `powers` evaluated at (already positive) `x`.
pub fn push_fp_basis(design: &mut Mat, x: &[f64], powers: PowerTuple) {
    match powers.p2 {
        None => push_power_col(design, x, powers.p1),
        Some(p2) if p2 != powers.p1 => {
            push_power_col(design, x, powers.p1);
            push_power_col(design, x, p2);
        }
        Some(p) => {
            // repeated powers: (x^p, x^p ln x)
            push_power_col(design, x, p);
            let n = x.len();
            let first = design.p() - 1;
            let mut second = vec![0.0; n];
            for i in 0..n {
                second[i] = design.col(first)[i] * x[i].ln();
            }
            design.push_col(&second);
        }
    }
}

/// Basis columns for one power tuple as a standalone matrix.
pub fn fp_basis(x: &[f64], powers: PowerTuple) -> Result<Mat, FpError> {
    check_positive(x)?;
    let mut m = Mat::with_rows(x.len());
    push_fp_basis(&mut m, x, powers);
    Ok(m)
}

/// Append the columns of `form` (linear or FP) evaluated at `x`.
pub fn push_form_basis(design: &mut Mat, x: &[f64], form: FpForm) {
    match form {
        FpForm::Out => {}
        FpForm::Linear => design.push_col(x),
        FpForm::Fp1(p) => push_fp_basis(design, x, PowerTuple::fp1(p)),
        FpForm::Fp2(a, b) => push_fp_basis(design, x, PowerTuple::fp2(a, b)),
    }
}

/// Power-of-ten divisor placing the median of `x` in [1, 10).
///
/// Dividing a positive predictor by a constant leaves every candidate's
/// residual sum of squares unchanged (the span of each basis plus intercept
/// is scale invariant), so this only stabilizes the arithmetic of extreme
/// powers like x^3 on wide-ranged variables.
pub fn decimal_scale(x: &[f64]) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    if median <= 0.0 {
        return 1.0;
    }
    10f64.powi(median.log10().floor() as i32)
}

/// Outcome of a best-FP search.
#[derive(Debug, Clone)]
pub struct BestFp {
    pub powers: PowerTuple,
    pub fit: FitResult,
    /// Decimal divisor the basis was built on; coefficients refer to x/scale.
    pub scale: f64,
}

/// Minimum-deviance candidate and its rss, for callers that refit later.
pub(crate) struct SearchHit {
    pub powers: PowerTuple,
    pub rss: f64,
}

/// Exhaustive search over the degree-1 or degree-2 candidates.
///
/// `u` must already be positive and decimally scaled. The design passed in
/// holds intercept and adjustment columns; candidate basis columns are
/// appended and truncated away again. Candidates are visited in ascending
/// lexicographic (p1, p2) order and ties keep the first minimum, so the
/// returned power tuple is deterministic. Individual candidate failures
/// (for example a basis column collinear with an adjuster) are skipped
/// unless every candidate fails.
pub(crate) fn search_best(
    design: &mut Mat,
    base_cols: usize,
    u: &[f64],
    y: &[f64],
    degree: u8,
    work: &mut QrWork,
) -> Result<SearchHit, FpError> {
    let mut best: Option<SearchHit> = None;
    let mut last_err: Option<LinregError> = None;
    let mut tried = 0usize;
    for powers in enumerate_powers(degree) {
        design.truncate_cols(base_cols);
        push_fp_basis(design, u, powers);
        tried += 1;
        match linreg::fit_rss(design, y, work) {
            Ok(rss) => {
                if best.as_ref().is_none_or(|b| rss < b.rss) {
                    best = Some(SearchHit { powers, rss });
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    design.truncate_cols(base_cols);
    best.ok_or_else(|| FpError::AllCandidatesFailed {
        tried,
        last: last_err.expect("no candidates succeeded, so at least one failed"),
    })
}

/// Best FP of the given degree for `x` against `y`, optionally adjusted.
///
/// `x` must be positive (shift first); adjustment columns enter every
/// candidate fit alongside the intercept. Decimal rescaling is applied
/// internally; the returned fit's coefficients refer to x/scale.
pub fn best_fp(x: &[f64], y: &[f64], adjust: Option<&Mat>, degree: u8) -> Result<BestFp, FpError> {
    check_positive(x)?;
    let n = x.len();
    let scale = decimal_scale(x);
    let u: Vec<f64> = x.iter().map(|v| v / scale).collect();

    let mut design = Mat::with_rows(n);
    design.push_intercept();
    if let Some(adj) = adjust {
        for j in 0..adj.p() {
            design.push_col(adj.col(j));
        }
    }
    let base_cols = design.p();
    let mut work = QrWork::default();
    let hit = search_best(&mut design, base_cols, &u, y, degree, &mut work)?;

    design.truncate_cols(base_cols);
    push_fp_basis(&mut design, &u, hit.powers);
    let fit = linreg::fit_ols(&design, y)?;
    Ok(BestFp {
        powers: hit.powers,
        fit,
        scale,
    })
}
