//! The function selection procedure: a closed test deciding between
//! excluding a variable, a linear term, the best FP1 or the best FP2.
//!
//! With FP2 as the most complex candidate the steps are: best FP2 against
//! the null model (4 df), best FP2 against linear (3 df), best FP2 against
//! best FP1 (2 df). Each step runs only if the previous one rejected, which
//! keeps the family-wise type I error near the nominal level. When FP1 is
//! the complexity cap the hierarchy collapses to FP1 vs null (2 df) and
//! FP1 vs linear (1 df).

use crate::dist::chisq_sf;
use crate::fp::{self, FpError, FpForm, FpSpec, PowerTuple};
use crate::linreg::{self, dd_from_rss, FitResult, LinregError, Mat, QrWork};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FspError {
    #[error(transparent)]
    Fp(#[from] FpError),
    #[error(transparent)]
    Fit(#[from] LinregError),
    #[error("significance level must lie in (0, 1]; got {0}")]
    BadAlpha(f64),
    #[error("max_degree must be 1 or 2; got {0}")]
    BadDegree(u8),
}

/// Significance levels and structural options for one FSP run.
///
/// `alpha_select` governs the first step (is the variable needed at all);
/// `alpha_fp` governs the function-shape steps. A standalone run uses one
/// level for both; the multivariable cycle passes its two levels through.
/// A selection level of 1 forces the variable in, as does `forced_in`.
#[derive(Debug, Clone, Copy)]
pub struct FspOptions {
    pub alpha_select: f64,
    pub alpha_fp: f64,
    pub forced_in: bool,
    pub max_degree: u8,
}

impl FspOptions {
    pub fn at_level(alpha: f64) -> Self {
        FspOptions {
            alpha_select: alpha,
            alpha_fp: alpha,
            forced_in: false,
            max_degree: 2,
        }
    }

    fn validate(&self) -> Result<(), FspError> {
        for a in [self.alpha_select, self.alpha_fp] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(FspError::BadAlpha(a));
            }
        }
        if self.max_degree != 1 && self.max_degree != 2 {
            return Err(FspError::BadDegree(self.max_degree));
        }
        Ok(())
    }
}

/// Residual sums of squares of the four reference fits, plus the winning
/// powers. This is all a deletion scan needs, so it avoids the full
/// summary fits.
#[derive(Debug, Clone)]
pub struct FspDeviances {
    pub n: usize,
    pub max_degree: u8,
    pub rss_null: f64,
    pub rss_linear: f64,
    pub best_fp1: PowerTuple,
    pub rss_fp1: f64,
    pub best_fp2: Option<PowerTuple>,
    pub rss_fp2: Option<f64>,
}

impl FspDeviances {
    fn rss_complex(&self) -> f64 {
        self.rss_fp2.unwrap_or(self.rss_fp1)
    }

    /// Most complex candidate against the null model (4 df, or 2 when the
    /// cap is FP1).
    pub fn dd_vs_null(&self) -> f64 {
        dd_from_rss(self.rss_null, self.rss_complex(), self.n)
    }

    /// Most complex candidate against the straight line (3 df, or 1).
    pub fn dd_vs_linear(&self) -> f64 {
        dd_from_rss(self.rss_linear, self.rss_complex(), self.n)
    }

    /// Best FP2 against best FP1 (2 df); absent when the cap is FP1.
    pub fn dd_fp2_vs_fp1(&self) -> Option<f64> {
        self.rss_fp2
            .map(|rss2| dd_from_rss(self.rss_fp1, rss2, self.n))
    }

    pub fn df_null(&self) -> u32 {
        2 * self.max_degree as u32
    }

    pub fn df_linear(&self) -> u32 {
        2 * self.max_degree as u32 - 1
    }
}

/// Compute the four reference fits on positive, decimally scaled `u`.
pub(crate) fn fsp_deviances(
    u: &[f64],
    y: &[f64],
    adjust: Option<&Mat>,
    max_degree: u8,
    work: &mut QrWork,
) -> Result<FspDeviances, FspError> {
    let n = u.len();
    let mut design = Mat::with_rows(n);
    design.push_intercept();
    if let Some(adj) = adjust {
        for j in 0..adj.p() {
            design.push_col(adj.col(j));
        }
    }
    let base_cols = design.p();

    let rss_null = linreg::fit_rss(&design, y, work)?;
    design.push_col(u);
    let rss_linear = linreg::fit_rss(&design, y, work)?;
    design.truncate_cols(base_cols);

    let hit1 = fp::search_best(&mut design, base_cols, u, y, 1, work)?;
    let (best_fp2, rss_fp2) = if max_degree == 2 {
        let hit2 = fp::search_best(&mut design, base_cols, u, y, 2, work)?;
        (Some(hit2.powers), Some(hit2.rss))
    } else {
        (None, None)
    };

    Ok(FspDeviances {
        n,
        max_degree,
        rss_null,
        rss_linear,
        best_fp1: hit1.powers,
        rss_fp1: hit1.rss,
        best_fp2,
        rss_fp2,
    })
}

/// Which model the closed test settled on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selected {
    Out,
    Linear,
    BestFp1,
    BestFp2,
}

/// The closed-test decision table on already-computed p-values.
///
/// A step stops the procedure when its p-value is >= the level (exact
/// equality counts as non-significant); a level of 1 never stops. When the
/// best FP1 is the straight line, the last test compares FP2 against that
/// same line with 2 df; it rejects whenever the 3-df step did, so the
/// procedure resolves to FP2 without a special case.
pub fn decide(
    p_vs_null: f64,
    p_vs_linear: f64,
    p_fp2_vs_fp1: Option<f64>,
    opts: &FspOptions,
) -> (Selected, u8) {
    let stops = |p: f64, alpha: f64| alpha < 1.0 && p >= alpha;
    if !opts.forced_in && opts.alpha_select < 1.0 && p_vs_null >= opts.alpha_select {
        return (Selected::Out, 1);
    }
    if stops(p_vs_linear, opts.alpha_fp) {
        return (Selected::Linear, 2);
    }
    match p_fp2_vs_fp1 {
        None => (Selected::BestFp1, 2),
        Some(p3) => {
            if stops(p3, opts.alpha_fp) {
                (Selected::BestFp1, 3)
            } else {
                (Selected::BestFp2, 3)
            }
        }
    }
}

/// Full result of one function selection run.
///
/// The dd/p field names follow the FP2 hierarchy; when `max_degree` is 1
/// they hold the collapsed FP1 comparisons (2 then 1 df) and the fp2-vs-fp1
/// entries are absent.
#[derive(Debug, Clone)]
pub struct FspResult {
    pub dd_fp2_null: f64,
    pub dd_fp2_linear: f64,
    pub dd_fp2_fp1: Option<f64>,
    pub p_fp2_null: f64,
    pub p_fp2_linear: f64,
    pub p_fp2_fp1: Option<f64>,
    pub best_fp1: PowerTuple,
    pub best_fp2: Option<PowerTuple>,
    pub selection: FpSpec,
    pub alpha_select: f64,
    pub alpha_fp: f64,
    pub steps_run: u8,
    /// Decimal divisor used for the basis; coefficients refer to x/scale.
    pub scale: f64,
    /// Fit of the selected model (the null model when the variable is out).
    pub fit: FitResult,
    /// Columns of `fit` that precede the variable's own basis columns.
    pub base_cols: usize,
}

/// Run the function selection procedure for one variable.
///
/// `x` must be positive (apply the origin shift first). Adjustment columns,
/// if any, enter every fit. Decimal rescaling of `x` is applied internally
/// and reported in the result.
pub fn run_fsp(
    x: &[f64],
    y: &[f64],
    adjust: Option<&Mat>,
    opts: &FspOptions,
) -> Result<FspResult, FspError> {
    opts.validate()?;
    fp::check_positive(x)?;
    let scale = fp::decimal_scale(x);
    let u: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let mut work = QrWork::default();
    let dev = fsp_deviances(&u, y, adjust, opts.max_degree, &mut work)?;

    let dd1 = dev.dd_vs_null();
    let dd2 = dev.dd_vs_linear();
    let dd3 = dev.dd_fp2_vs_fp1();
    let p1 = chisq_sf(dd1, dev.df_null());
    let p2 = chisq_sf(dd2, dev.df_linear());
    let p3 = dd3.map(|d| chisq_sf(d, 2));
    let (selected, steps_run) = decide(p1, p2, p3, opts);

    let n = u.len();
    let mut design = Mat::with_rows(n);
    design.push_intercept();
    if let Some(adj) = adjust {
        for j in 0..adj.p() {
            design.push_col(adj.col(j));
        }
    }
    let base_cols = design.p();
    let form = match selected {
        Selected::Out => FpForm::Out,
        Selected::Linear => FpForm::Linear,
        Selected::BestFp1 => FpForm::from_powers(dev.best_fp1),
        Selected::BestFp2 => FpForm::from_powers(dev.best_fp2.expect("degree 2 ran")),
    };
    fp::push_form_basis(&mut design, &u, form);
    let fit = linreg::fit_ols(&design, y)?;
    let coefficients = fit.coefficients[base_cols..].to_vec();

    Ok(FspResult {
        dd_fp2_null: dd1,
        dd_fp2_linear: dd2,
        dd_fp2_fp1: dd3,
        p_fp2_null: p1,
        p_fp2_linear: p2,
        p_fp2_fp1: p3,
        best_fp1: dev.best_fp1,
        best_fp2: dev.best_fp2,
        selection: FpSpec { form, coefficients },
        alpha_select: opts.alpha_select,
        alpha_fp: opts.alpha_fp,
        steps_run,
        scale,
        fit,
        base_cols,
    })
}
