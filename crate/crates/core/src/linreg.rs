//! Gaussian least-squares kernel: fits, deviances and deviance differences.
//!
//! The factorization is modified Gram-Schmidt with one reorthogonalization
//! pass, which keeps the projection residuals accurate enough that scan
//! records agree with from-scratch refits well below the 1e-8 tolerance the
//! rest of the crate is tested against. Deviance for a Gaussian model is
//! taken as n ln(rss/n); the additive constant cancels in every difference
//! this crate computes, and differences are what get compared to chi-square
//! critical values.

use thiserror::Error;

/// Residual norm below this fraction of the original column norm marks the
/// column as linearly dependent on its predecessors.
const RANK_TOL: f64 = 1e-10;

/// rss/n below this fraction of var(y) means the fit is exact up to noise
/// floor and the deviance is meaningless.
const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinregError {
    #[error("design is rank deficient; dependent column(s): {0:?}")]
    RankDeficient(Vec<usize>),
    #[error("degenerate fit: rss is zero to working precision, deviance undefined")]
    DegenerateFit,
    #[error("fits are not comparable: n = {0} vs n = {1}")]
    MismatchedFits(usize, usize),
    #[error("need more rows than columns: n = {n}, p = {p}")]
    TooFewRows { n: usize, p: usize },
}

/// Dense column-major matrix, sized for design matrices with few columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize, p: usize) -> Self {
        Mat {
            n,
            p,
            data: vec![0.0; n * p],
        }
    }

    /// A matrix with row count `n` and no columns yet.
    pub fn with_rows(n: usize) -> Self {
        Mat {
            n,
            p: 0,
            data: Vec::new(),
        }
    }

    pub fn from_columns(cols: &[&[f64]]) -> Self {
        assert!(!cols.is_empty(), "at least one column required");
        let n = cols[0].len();
        let mut m = Mat::with_rows(n);
        for c in cols {
            m.push_col(c);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn push_col(&mut self, col: &[f64]) {
        assert_eq!(col.len(), self.n, "column length mismatch");
        self.data.extend_from_slice(col);
        self.p += 1;
    }

    /// Push a column of ones (the intercept).
    pub fn push_intercept(&mut self) {
        self.data.extend(std::iter::repeat_n(1.0, self.n));
        self.p += 1;
    }

    /// Drop columns from the right until `p` remain.
    pub fn truncate_cols(&mut self, p: usize) {
        assert!(p <= self.p);
        self.data.truncate(self.n * p);
        self.p = p;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.n + i]
    }

    /// X * beta.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.p);
        let mut out = vec![0.0; self.n];
        for (j, &b) in beta.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.col(j)) {
                *o += b * v;
            }
        }
        out
    }
}

/// Summary of one least-squares fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Coefficients in design-column order (intercept first by convention).
    pub coefficients: Vec<f64>,
    pub rss: f64,
    /// n ln(rss/n); only differences of this are meaningful.
    pub deviance: f64,
    pub r2: f64,
    /// rss / (n - p).
    pub sigma2_hat: f64,
    /// sigma2_hat * (X'X)^-1, p x p.
    pub cov: Mat,
    pub residuals: Vec<f64>,
    pub n: usize,
    pub p: usize,
}

pub fn deviance_of(rss: f64, n: usize) -> f64 {
    (n as f64) * (rss / n as f64).ln()
}

/// Reusable buffers for repeated factorizations of same-shaped problems.
#[derive(Debug, Default, Clone)]
pub struct QrWork {
    q: Vec<f64>,
    r: Vec<f64>,
    qty: Vec<f64>,
    beta: Vec<f64>,
}

struct Solved {
    rss: f64,
}

/// Factorize and solve; on success `work.beta` holds the coefficients and
/// `work.r` the upper-triangular factor (row-major p x p).
fn solve_ls(design: &Mat, y: &[f64], work: &mut QrWork) -> Result<Solved, LinregError> {
    let n = design.n();
    let p = design.p();
    assert_eq!(y.len(), n, "response length mismatch");
    if n <= p {
        return Err(LinregError::TooFewRows { n, p });
    }

    work.q.clear();
    work.q.extend_from_slice(&design.data);
    work.r.clear();
    work.r.resize(p * p, 0.0);
    work.qty.clear();
    work.qty.resize(p, 0.0);

    let q = &mut work.q;
    let r = &mut work.r;
    let mut dependent: Vec<usize> = Vec::new();

    for j in 0..p {
        let norm0 = norm2(&q[j * n..(j + 1) * n]);
        // two projection passes ("twice is enough" reorthogonalization)
        for _ in 0..2 {
            for k in 0..j {
                if dependent.contains(&k) {
                    continue;
                }
                let dot = dot_cols(q, n, k, j);
                r[k * p + j] += dot;
                axpy_cols(q, n, k, j, -dot);
            }
        }
        let rjj = norm2(&q[j * n..(j + 1) * n]);
        if rjj <= RANK_TOL * norm0 || norm0 == 0.0 {
            dependent.push(j);
            for v in &mut q[j * n..(j + 1) * n] {
                *v = 0.0;
            }
            continue;
        }
        r[j * p + j] = rjj;
        let inv = 1.0 / rjj;
        for v in &mut q[j * n..(j + 1) * n] {
            *v *= inv;
        }
    }

    if !dependent.is_empty() {
        return Err(LinregError::RankDeficient(dependent));
    }

    // project y onto Q, again with a second pass for accuracy
    let mut resid = y.to_vec();
    for _ in 0..2 {
        for k in 0..p {
            let col = &q[k * n..(k + 1) * n];
            let dot: f64 = col.iter().zip(&resid).map(|(a, b)| a * b).sum();
            work.qty[k] += dot;
            for (rv, cv) in resid.iter_mut().zip(col) {
                *rv -= dot * cv;
            }
        }
    }

    // back-substitute R beta = Q'y
    work.beta.clear();
    work.beta.resize(p, 0.0);
    for j in (0..p).rev() {
        let mut s = work.qty[j];
        for k in (j + 1)..p {
            s -= r[j * p + k] * work.beta[k];
        }
        work.beta[j] = s / r[j * p + j];
    }

    // rss from the explicit residual of the original design
    let mut rss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let mut fitted = 0.0;
        for j in 0..p {
            fitted += design.data[j * n + i] * work.beta[j];
        }
        let e = yi - fitted;
        rss += e * e;
    }
    Ok(Solved { rss })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot_cols(data: &[f64], n: usize, a: usize, b: usize) -> f64 {
    let (ca, cb) = (&data[a * n..(a + 1) * n], &data[b * n..(b + 1) * n]);
    ca.iter().zip(cb).map(|(x, y)| x * y).sum()
}

fn axpy_cols(data: &mut [f64], n: usize, src: usize, dst: usize, alpha: f64) {
    let (lo, hi) = if src < dst { (src, dst) } else { (dst, src) };
    let (left, right) = data.split_at_mut(hi * n);
    let (s, d) = if src < dst {
        (&left[lo * n..(lo + 1) * n], &mut right[..n])
    } else {
        unreachable!("projection only uses earlier columns")
    };
    for (dv, sv) in d.iter_mut().zip(s) {
        *dv += alpha * sv;
    }
}

/// Lean fit: residual sum of squares only. Used by the deletion scans where
/// millions of candidate models are refit.
pub(crate) fn fit_rss(design: &Mat, y: &[f64], work: &mut QrWork) -> Result<f64, LinregError> {
    solve_ls(design, y, work).map(|s| s.rss)
}

/// Ordinary least squares with full summary output.
///
/// The design must already contain the intercept column.
pub fn fit_ols(design: &Mat, y: &[f64]) -> Result<FitResult, LinregError> {
    let mut work = QrWork::default();
    let solved = solve_ls(design, y, &mut work)?;
    let n = design.n();
    let p = design.p();
    let rss = solved.rss;

    let mean_y = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    if rss / n as f64 <= DEGENERATE_TOL * (tss / n as f64) {
        return Err(LinregError::DegenerateFit);
    }

    let beta = work.beta.clone();
    let residuals: Vec<f64> = {
        let fitted = design.mul_vec(&beta);
        y.iter().zip(&fitted).map(|(a, b)| a - b).collect()
    };
    let sigma2_hat = rss / (n - p) as f64;

    // (X'X)^-1 = R^-1 R^-T; invert R by back-substitution against I
    let r = &work.r;
    let mut rinv = vec![0.0; p * p];
    for col in 0..p {
        for j in (0..=col).rev() {
            let mut s = if j == col { 1.0 } else { 0.0 };
            for k in (j + 1)..=col {
                s -= r[j * p + k] * rinv[k * p + col];
            }
            rinv[j * p + col] = s / r[j * p + j];
        }
    }
    let mut cov = Mat::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                s += rinv[i * p + k] * rinv[j * p + k];
            }
            let v = sigma2_hat * s;
            cov.col_mut(j)[i] = v;
        }
    }

    let r2 = (1.0 - rss / tss).clamp(0.0, 1.0);
    Ok(FitResult {
        coefficients: beta,
        rss,
        deviance: deviance_of(rss, n),
        r2,
        sigma2_hat,
        cov,
        residuals,
        n,
        p,
    })
}

/// n ln(rss_smaller / rss_larger) for nested fits on the same data.
///
/// Tiny negative values from floating-point noise are clamped to zero;
/// anything beyond the numerical slack indicates the fits are not nested
/// and is returned as-is for the caller's assertions to catch.
pub fn deviance_difference(smaller: &FitResult, larger: &FitResult) -> Result<f64, LinregError> {
    if smaller.n != larger.n {
        return Err(LinregError::MismatchedFits(smaller.n, larger.n));
    }
    Ok(dd_from_rss(smaller.rss, larger.rss, smaller.n))
}

/// Deviance difference straight from two residual sums of squares.
pub fn dd_from_rss(rss_smaller: f64, rss_larger: f64, n: usize) -> f64 {
    let dd = (n as f64) * (rss_smaller / rss_larger).ln();
    if dd < 0.0 && dd > -1e-9 {
        0.0
    } else {
        dd
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_design(n: usize) -> Mat {
        let mut m = Mat::with_rows(n);
        m.push_intercept();
        m
    }

    #[test]
    fn intercept_only_recovers_mean() {
        let y = [1.0, 2.0, 6.0, 3.0, 8.0];
        let fit = fit_ols(&intercept_design(5), &y).unwrap();
        let mean = 4.0;
        assert!((fit.coefficients[0] - mean).abs() < 1e-12);
        let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert!((fit.rss - tss).abs() < 1e-12);
        assert_eq!(fit.r2, 0.0);
    }

    #[test]
    fn exact_line_is_degenerate() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let mut design = intercept_design(5);
        design.push_col(&x);
        assert!(matches!(
            fit_ols(&design, &y),
            Err(LinregError::DegenerateFit)
        ));
    }

    #[test]
    fn duplicate_column_is_rank_deficient() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.5, 7.0];
        let y = [2.0, 2.5, 1.0, 4.0, 5.0, 4.5];
        let mut design = intercept_design(6);
        design.push_col(&x);
        design.push_col(&x);
        match fit_ols(&design, &y) {
            Err(LinregError::RankDeficient(cols)) => assert_eq!(cols, vec![2]),
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn known_two_predictor_fit() {
        // y = 1 + 2 x1 - 0.5 x2, plus fixed perturbations
        let x1 = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let x2 = [1.0, 0.0, 2.0, 1.0, 3.0, 2.0, 0.0, 4.0];
        let noise = [0.01, -0.02, 0.03, 0.0, -0.01, 0.02, -0.03, 0.01];
        let y: Vec<f64> = (0..8)
            .map(|i| 1.0 + 2.0 * x1[i] - 0.5 * x2[i] + noise[i])
            .collect();
        let mut design = intercept_design(8);
        design.push_col(&x1);
        design.push_col(&x2);
        let fit = fit_ols(&design, &y).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 0.02);
        assert!((fit.coefficients[2] + 0.5).abs() < 0.02);
        // covariance is symmetric with positive diagonal
        for i in 0..3 {
            assert!(fit.cov.get(i, i) > 0.0);
            for j in 0..3 {
                assert!((fit.cov.get(i, j) - fit.cov.get(j, i)).abs() < 1e-15);
            }
        }
        // r2 from rss equals 1 - rss/tss
        let mean = y.iter().sum::<f64>() / 8.0;
        let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert!((fit.r2 - (1.0 - fit.rss / tss)).abs() < 1e-12);
    }

    #[test]
    fn deviance_difference_identity_and_arithmetic() {
        let y = [1.0, 2.0, 6.0, 3.0, 8.0, 2.5, 4.0, 7.0, 1.5, 0.5];
        let fit = fit_ols(&intercept_design(10), &y).unwrap();
        assert_eq!(deviance_difference(&fit, &fit).unwrap(), 0.0);
        // rss ratio e with n = 10 gives exactly 10
        assert!((dd_from_rss(std::f64::consts::E, 1.0, 10) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_n_is_an_error() {
        let y5 = [1.0, 2.0, 6.0, 3.0, 8.0];
        let y6 = [1.0, 2.0, 6.0, 3.0, 8.0, 4.0];
        let a = fit_ols(&intercept_design(5), &y5).unwrap();
        let b = fit_ols(&intercept_design(6), &y6).unwrap();
        assert!(matches!(
            deviance_difference(&a, &b),
            Err(LinregError::MismatchedFits(5, 6))
        ));
    }

    #[test]
    fn too_few_rows_rejected() {
        let y = [1.0, 2.0];
        let mut design = intercept_design(2);
        design.push_col(&[1.0, 2.0]);
        assert!(matches!(
            fit_ols(&design, &y),
            Err(LinregError::TooFewRows { n: 2, p: 2 })
        ));
    }
}
