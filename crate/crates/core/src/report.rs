//! Report emitters: fitted-function curves with pointwise confidence
//! bands, smoothed residual tables, scan and comparison tables, and the
//! per-run manifest. Tables are plain delimited text, written atomically.

use crate::fp::{self, FpForm};
use crate::fsp::FspResult;
use crate::influence::{ScanResult, VariableScan};
use crate::linreg::{FitResult, Mat};
use crate::select::{ComparisonReport, MfpModel, SelectError};
use sha2::{Digest, Sha256};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("variable {0:?} is not in the model")]
    VariableNotInModel(String),
    #[error("window fraction must lie in (0, 1]; got {0}")]
    BadWindow(f64),
    #[error("curve grid needs at least 2 points")]
    GridTooSmall,
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fitted partial function f(x) on a grid with 95% pointwise bounds.
///
/// The bounds are delta-method intervals from the coefficient covariance of
/// the variable's own basis columns. They ignore the uncertainty of having
/// selected the functional form from the same data, so they understate the
/// true uncertainty of a data-driven function.
#[derive(Debug, Clone)]
pub struct CurveTable {
    pub variable: String,
    /// Grid on the variable's original (unshifted) scale.
    pub grid: Vec<f64>,
    pub fit: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

const Z975: f64 = 1.959963984540054;

#[allow(clippy::too_many_arguments)]
fn curve_core(
    variable: &str,
    form: FpForm,
    coefficients: &[f64],
    cov: &Mat,
    col_start: usize,
    shift: f64,
    scale: f64,
    grid: Vec<f64>,
) -> CurveTable {
    let ncols = form.n_cols();
    let mut fit = Vec::with_capacity(grid.len());
    let mut lo = Vec::with_capacity(grid.len());
    let mut hi = Vec::with_capacity(grid.len());
    for &g in &grid {
        let u = [(g + shift) / scale];
        let mut basis = Mat::with_rows(1);
        fp::push_form_basis(&mut basis, &u, form);
        let b: Vec<f64> = (0..ncols).map(|j| basis.col(j)[0]).collect();
        let f: f64 = b.iter().zip(coefficients).map(|(x, c)| x * c).sum();
        let mut var = 0.0;
        for i in 0..ncols {
            for j in 0..ncols {
                var += b[i] * cov.get(col_start + i, col_start + j) * b[j];
            }
        }
        let half = Z975 * var.max(0.0).sqrt();
        fit.push(f);
        lo.push(f - half);
        hi.push(f + half);
    }
    CurveTable {
        variable: variable.to_string(),
        grid,
        fit,
        lo,
        hi,
    }
}

fn make_grid(xmin: f64, xmax: f64, points: usize) -> Vec<f64> {
    let step = (xmax - xmin) / (points - 1) as f64;
    (0..points).map(|i| xmin + step * i as f64).collect()
}

/// The selected partial function of one model variable over its observed
/// range (other variables' contributions are constants absorbed into the
/// intercept and do not appear).
pub fn function_curve(
    model: &MfpModel,
    variable: &str,
    grid_points: usize,
) -> Result<CurveTable, ReportError> {
    if grid_points < 2 {
        return Err(ReportError::GridTooSmall);
    }
    let term = model
        .term(variable)
        .filter(|t| t.form.included())
        .ok_or_else(|| ReportError::VariableNotInModel(variable.to_string()))?;
    Ok(curve_core(
        variable,
        term.form,
        &term.coefficients,
        &model.final_fit.cov,
        term.col_start,
        term.shift,
        term.scale,
        make_grid(term.xmin, term.xmax, grid_points),
    ))
}

/// The same curve from a standalone function-selection result.
pub fn fsp_function_curve(
    res: &FspResult,
    variable: &str,
    shift: f64,
    xmin: f64,
    xmax: f64,
    grid_points: usize,
) -> Result<CurveTable, ReportError> {
    if grid_points < 2 {
        return Err(ReportError::GridTooSmall);
    }
    if !res.selection.form.included() {
        return Err(ReportError::VariableNotInModel(variable.to_string()));
    }
    Ok(curve_core(
        variable,
        res.selection.form,
        &res.selection.coefficients,
        &res.fit.cov,
        res.base_cols,
        shift,
        res.scale,
        make_grid(xmin, xmax, grid_points),
    ))
}

/// Residuals against one predictor, smoothed by a running mean over the
/// nearest neighbors, with a 95% band (mean +/- 1.96 sd/sqrt(k)).
#[derive(Debug, Clone)]
pub struct SmoothTable {
    pub x: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Window size actually used.
    pub k: usize,
}

pub fn smooth_residuals(
    fit: &FitResult,
    x: &[f64],
    window_fraction: f64,
) -> Result<SmoothTable, ReportError> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(ReportError::BadWindow(window_fraction));
    }
    assert_eq!(x.len(), fit.residuals.len(), "x/residual length mismatch");
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let es: Vec<f64> = order.iter().map(|&i| fit.residuals[i]).collect();

    let k = ((window_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut smoothed = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut left = 0usize;
    for i in 0..n {
        // slide the k-wide window to hold the k nearest x-values of xs[i]
        if left > i {
            left = i;
        }
        while left + k < n && xs[left + k] - xs[i] < xs[i] - xs[left] {
            left += 1;
        }
        while left > 0 && left + k > i && xs[left + k - 1] - xs[i] > xs[i] - xs[left - 1] {
            left -= 1;
        }
        let window = &es[left..left + k];
        let mean = window.iter().sum::<f64>() / k as f64;
        let sd = if k > 1 {
            (window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = Z975 * sd / (k as f64).sqrt();
        smoothed.push(mean);
        lo.push(mean - half);
        hi.push(mean + half);
    }
    Ok(SmoothTable {
        x: xs,
        smoothed,
        lo,
        hi,
        k,
    })
}

// ---------------------------------------------------------------------------
// delimited emitters

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn curve_to_csv(t: &CurveTable) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "# partial function of {} with 95% pointwise bounds\n",
        t.variable
    ));
    s.push_str(
        "# bounds ignore model-selection uncertainty: the functional form was chosen\n\
         # from the same data, so the true uncertainty is larger\n",
    );
    s.push_str("x,fit,lo,hi\n");
    for i in 0..t.grid.len() {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt(t.grid[i]),
            fmt(t.fit[i]),
            fmt(t.lo[i]),
            fmt(t.hi[i])
        ));
    }
    s
}

pub fn smooth_to_csv(variable: &str, t: &SmoothTable) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "# smoothed residuals against {variable}: running mean over the {} nearest\n\
         # neighbors with a 95% pointwise band; the running mean is a stand-in smoother\n",
        t.k
    ));
    s.push_str("x,smoothed,lo,hi\n");
    for i in 0..t.x.len() {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt(t.x[i]),
            fmt(t.smoothed[i]),
            fmt(t.lo[i]),
            fmt(t.hi[i])
        ));
    }
    s
}

/// Scan records as a flat table: one row per deletion, indices 1-based,
/// second index blank for single deletions, one significance column per
/// requested level and comparison.
pub fn scan_to_csv(variable: &str, scan: &ScanResult) -> String {
    let mut s = String::new();
    s.push_str(&format!("# deletion scan of {variable}\n"));
    s.push_str(&format!(
        "# full data: dd_fp2_null={}, dd_fp2_linear={}, dd_fp2_fp1={}\n",
        fmt(scan.full.dd_fp2_null),
        fmt(scan.full.dd_fp2_linear),
        scan.full.dd_fp2_fp1.map_or(String::new(), fmt),
    ));
    for (a, t) in scan.alphas.iter().zip(&scan.thresholds) {
        s.push_str(&format!(
            "# alpha={a}: critical values {:.3}, {:.3}, {:.3}\n",
            t[0], t[1], t[2]
        ));
    }
    s.push_str("deleted_i,deleted_j,dd_fp2_null,dd_fp2_linear,dd_fp2_fp1");
    for a in &scan.alphas {
        for cmp in ["fp2_null", "fp2_linear", "fp2_fp1"] {
            s.push_str(&format!(",sig_{cmp}_{a}"));
        }
    }
    s.push_str(",error\n");
    for r in &scan.records {
        let j = r
            .deleted
            .second
            .map_or(String::new(), |j| (j + 1).to_string());
        s.push_str(&format!(
            "{},{},{},{},{}",
            r.deleted.first + 1,
            j,
            fmt(r.dd_fp2_null),
            fmt(r.dd_fp2_linear),
            r.dd_fp2_fp1.map_or(String::new(), fmt),
        ));
        for d in &r.decisions {
            for flag in d {
                s.push_str(if *flag { ",1" } else { ",0" });
            }
        }
        s.push(',');
        if let Some(e) = &r.error {
            s.push_str(&e.replace(',', ";"));
        }
        s.push('\n');
    }
    s
}

fn csv_cell(s: &str) -> String {
    if s.contains(',') {
        format!("\"{s}\"")
    } else {
        s.to_string()
    }
}

pub fn comparison_to_csv(report: &ComparisonReport) -> String {
    let with_truth = report.rows.iter().any(|r| r.truth.is_some());
    let mut s = String::new();
    s.push_str(&format!(
        "# inclusion agreements {}/{}, power agreements {}/{}\n",
        report.inclusion_agreements, report.total, report.power_agreements, report.total
    ));
    s.push_str(if with_truth {
        "variable,a,b,truth\n"
    } else {
        "variable,a,b\n"
    });
    for r in &report.rows {
        if with_truth {
            s.push_str(&format!(
                "{},{},{},{}\n",
                csv_cell(&r.variable),
                csv_cell(&r.a),
                csv_cell(&r.b),
                csv_cell(r.truth.as_deref().unwrap_or(""))
            ));
        } else {
            s.push_str(&format!(
                "{},{},{}\n",
                csv_cell(&r.variable),
                csv_cell(&r.a),
                csv_cell(&r.b)
            ));
        }
    }
    s
}

pub fn r2_reduction_to_csv(rows: &[(String, f64)]) -> String {
    let mut s = String::from("variable,pct_r2_reduction\n");
    for (name, v) in rows {
        s.push_str(&format!("{name},{v}\n"));
    }
    s
}

/// Flagged influential points of each scanned variable, 1-based.
pub fn ip_summary_to_csv(scans: &[VariableScan]) -> String {
    let mut s = String::from("variable,alpha,n_flagged,flagged\n");
    for vs in scans {
        let list: Vec<String> = vs
            .report
            .flagged
            .iter()
            .map(|d| match d.second {
                Some(j) => format!("({}|{})", d.first + 1, j + 1),
                None => (d.first + 1).to_string(),
            })
            .collect();
        s.push_str(&format!(
            "{},{},{},{}\n",
            vs.variable,
            vs.report.alpha,
            vs.report.flagged.len(),
            list.join(" ")
        ));
    }
    s
}

// ---------------------------------------------------------------------------
// run manifests

/// What produced an output file: command, flags, input digests, seed.
/// The manifest hash covers exactly these fields, so it changes if and
/// only if an input or flag changes.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub flags: Vec<(String, String)>,
    pub inputs: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub provenance: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            flags: Vec::new(),
            inputs: Vec::new(),
            seed: None,
            provenance: None,
        }
    }

    pub fn flag(mut self, key: &str, value: impl ToString) -> Self {
        self.flags.push((key.to_string(), value.to_string()));
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn provenance(mut self, p: &str) -> Self {
        self.provenance = Some(p.to_string());
        self
    }

    pub fn input_file(mut self, path: &Path) -> Result<Self, std::io::Error> {
        let bytes = std::fs::read(path)?;
        self.inputs
            .push((path.display().to_string(), sha256_hex(&bytes)));
        Ok(self)
    }

    fn canonical(&self) -> String {
        let mut flags = self.flags.clone();
        flags.sort();
        let mut inputs = self.inputs.clone();
        inputs.sort();
        let mut s = String::new();
        s.push_str(&format!("tool_version={}\n", self.tool_version));
        s.push_str(&format!("command={}\n", self.command));
        for (k, v) in &flags {
            s.push_str(&format!("flag.{k}={v}\n"));
        }
        for (p, h) in &inputs {
            s.push_str(&format!("input.{p}={h}\n"));
        }
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed={seed}\n"));
        }
        if let Some(p) = &self.provenance {
            s.push_str(&format!("provenance={p}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("manifest_hash = {:?}\n", self.hash()));
        s.push_str(&format!("tool_version = {:?}\n", self.tool_version));
        s.push_str(&format!("command = {:?}\n", self.command));
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed = {seed}\n"));
        }
        if let Some(p) = &self.provenance {
            s.push_str(&format!("provenance = {p:?}\n"));
        }
        let mut flags = self.flags.clone();
        flags.sort();
        s.push_str("\n[flags]\n");
        for (k, v) in &flags {
            s.push_str(&format!("{k} = {v:?}\n"));
        }
        let mut inputs = self.inputs.clone();
        inputs.sort();
        for (p, h) in &inputs {
            s.push_str(&format!("\n[[input]]\npath = {p:?}\nsha256 = {h:?}\n"));
        }
        s
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Write via a temporary file in the same directory, then rename, so
/// readers never observe a half-written table.
pub fn write_text_atomic(path: &Path, text: &str) -> Result<(), std::io::Error> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_default()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
