//! Plasmode-style data generation: predictors drawn through a Gaussian
//! copula with configurable marginal recipes and Spearman correlation
//! targets, outcomes from a known true model, and named subset slices.

use crate::data::{DataError, Dataset, Role, VariableKind, VariableMeta};
use crate::dist::{gamma_quantile, normal_cdf};
use crate::fp::FpForm;
use crate::select::{ModelFile, TermFile, MODEL_FORMAT, MODEL_VERSION};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlasmodeError {
    #[error("profile error: {0}")]
    BadProfile(String),
    #[error("correlation matrix is not positive semi-definite (eigenvalue {eigenvalue})")]
    NonPsdCorrelation { eigenvalue: f64 },
    #[error("variable {0:?} not present in the generated predictors")]
    UnknownVariable(String),
    #[error("non-positive value of {variable:?} where a positive one is required")]
    NonPositiveValue { variable: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How one margin maps a latent standard normal draw to a data value.
/// Every recipe is monotone in the latent, so the copula's rank structure
/// carries through.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarginRecipe {
    /// round(mean + sd z), clipped below at `min`.
    NormalRounded { mean: f64, sd: f64, min: f64 },
    /// shift + exp(mu + sigma z), optionally rounded to integers.
    LogNormalShifted {
        shift: f64,
        mu: f64,
        sigma: f64,
        round: bool,
    },
    /// Lognormal bulk with a stretched upper tail that flattens out again:
    /// the log-scale slope is sigma_bulk up to z_tail, sigma_tail until
    /// z_cap, and sigma_cap beyond.
    LogNormalTailed {
        shift: f64,
        mu: f64,
        sigma_bulk: f64,
        z_tail: f64,
        sigma_tail: f64,
        z_cap: f64,
        sigma_cap: f64,
    },
    /// max(0, floor(exp(mu + sigma z) - offset)); integer-valued with a
    /// point mass at zero.
    FlooredLogNormal { mu: f64, sigma: f64, offset: f64 },
    /// Gamma(shape, scale) via its quantile function.
    Gamma { shape: f64, scale: f64 },
    /// 1 with probability p_one.
    Bernoulli { p_one: f64 },
    /// Level codes cut at cumulative probabilities.
    Categorical { codes: Vec<f64>, probs: Vec<f64> },
}

impl MarginRecipe {
    fn apply(&self, z: f64) -> f64 {
        match self {
            MarginRecipe::NormalRounded { mean, sd, min } => (mean + sd * z).round().max(*min),
            MarginRecipe::LogNormalShifted {
                shift,
                mu,
                sigma,
                round,
            } => {
                let v = shift + (mu + sigma * z).exp();
                if *round {
                    v.round()
                } else {
                    v
                }
            }
            MarginRecipe::LogNormalTailed {
                shift,
                mu,
                sigma_bulk,
                z_tail,
                sigma_tail,
                z_cap,
                sigma_cap,
            } => {
                let w = if z <= *z_tail {
                    mu + sigma_bulk * z
                } else if z <= *z_cap {
                    mu + sigma_bulk * z_tail + sigma_tail * (z - z_tail)
                } else {
                    mu + sigma_bulk * z_tail
                        + sigma_tail * (z_cap - z_tail)
                        + sigma_cap * (z - z_cap)
                };
                shift + w.exp()
            }
            MarginRecipe::FlooredLogNormal { mu, sigma, offset } => {
                ((mu + sigma * z).exp() - offset).floor().max(0.0)
            }
            MarginRecipe::Gamma { shape, scale } => {
                let u = normal_cdf(z).clamp(1e-12, 1.0 - 1e-12);
                gamma_quantile(u, *shape, *scale)
            }
            MarginRecipe::Bernoulli { p_one } => f64::from(normal_cdf(z) > 1.0 - p_one),
            MarginRecipe::Categorical { codes, probs } => {
                let u = normal_cdf(z);
                let mut cum = 0.0;
                for (code, p) in codes.iter().zip(probs) {
                    cum += p;
                    if u < cum {
                        return *code;
                    }
                }
                *codes.last().expect("validated non-empty")
            }
        }
    }
}

/// Reference summary statistics a margin was calibrated against.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatTarget {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginDef {
    pub name: String,
    pub kind: VariableKind,
    pub recipe: MarginRecipe,
    #[serde(default)]
    pub target: Option<StatTarget>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationTarget {
    pub a: String,
    pub b: String,
    pub spearman: f64,
}

/// Marginal recipes plus the target rank-correlation structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorProfile {
    #[serde(default)]
    pub correlation: Vec<CorrelationTarget>,
    pub margin: Vec<MarginDef>,
}

const DEFAULT_PROFILE: &str = include_str!("default_profile.toml");

impl PredictorProfile {
    /// The built-in profile calibrated against the reference study tables.
    pub fn reference() -> Self {
        toml::from_str(DEFAULT_PROFILE).expect("bundled profile parses")
    }

    pub fn from_path(path: &Path) -> Result<Self, PlasmodeError> {
        let text = std::fs::read_to_string(path)?;
        let p: PredictorProfile =
            toml::from_str(&text).map_err(|e| PlasmodeError::BadProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PlasmodeError> {
        if self.margin.is_empty() {
            return Err(PlasmodeError::BadProfile("profile has no margins".into()));
        }
        for m in &self.margin {
            if let MarginRecipe::Categorical { codes, probs } = &m.recipe {
                if codes.is_empty() || codes.len() != probs.len() {
                    return Err(PlasmodeError::BadProfile(format!(
                        "margin {:?}: codes/probs mismatch",
                        m.name
                    )));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-6 {
                    return Err(PlasmodeError::BadProfile(format!(
                        "margin {:?}: probabilities sum to {total}",
                        m.name
                    )));
                }
            }
        }
        for c in &self.correlation {
            if c.spearman.abs() >= 1.0 {
                return Err(PlasmodeError::BadProfile(format!(
                    "correlation ({}, {}): |rho| must be < 1",
                    c.a, c.b
                )));
            }
            for name in [&c.a, &c.b] {
                if !self.margin.iter().any(|m| &m.name == name) {
                    return Err(PlasmodeError::BadProfile(format!(
                        "correlation names unknown margin {name:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Latent normal correlation matrix (row-major k x k) from the Spearman
    /// targets via 2 sin(pi rho / 6), repaired to PSD if needed.
    fn latent_matrix(&self) -> Result<Vec<f64>, PlasmodeError> {
        let k = self.margin.len();
        let idx: BTreeMap<&str, usize> = self
            .margin
            .iter()
            .enumerate()
            .map(|(i, m)| (m.name.as_str(), i))
            .collect();
        let mut corr = vec![0.0; k * k];
        for i in 0..k {
            corr[i * k + i] = 1.0;
        }
        for c in &self.correlation {
            let (i, j) = (idx[c.a.as_str()], idx[c.b.as_str()]);
            let latent = 2.0 * (std::f64::consts::PI * c.spearman / 6.0).sin();
            corr[i * k + j] = latent;
            corr[j * k + i] = latent;
        }
        nearest_psd(&mut corr, k)?;
        Ok(corr)
    }
}

/// Eigenvalues below this are clamped; below -REPAIR_TOL the matrix is
/// rejected as inconsistent rather than silently repaired.
const REPAIR_TOL: f64 = 0.05;

fn nearest_psd(corr: &mut [f64], k: usize) -> Result<(), PlasmodeError> {
    let (eigvals, eigvecs) = jacobi_eigen(corr.to_vec(), k);
    let min = eigvals.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return Ok(());
    }
    if min < -REPAIR_TOL {
        return Err(PlasmodeError::NonPsdCorrelation { eigenvalue: min });
    }
    // clamp, reconstruct, restore the unit diagonal
    let clamped: Vec<f64> = eigvals.iter().map(|&l| l.max(1e-10)).collect();
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for m in 0..k {
                s += eigvecs[i * k + m] * clamped[m] * eigvecs[j * k + m];
            }
            corr[i * k + j] = s;
        }
    }
    for i in 0..k {
        let d = corr[i * k + i].sqrt();
        for j in 0..k {
            corr[i * k + j] /= d;
            corr[j * k + i] /= d;
        }
        corr[i * k + i] = 1.0;
    }
    Ok(())
}

/// Cyclic Jacobi eigendecomposition for a small symmetric matrix.
/// Returns eigenvalues and the matching eigenvector columns.
fn jacobi_eigen(mut a: Vec<f64>, k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                off += a[i * k + j] * a[i * k + j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = a[p * k + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * k + q] - a[p * k + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let aip = a[i * k + p];
                    let aiq = a[i * k + q];
                    a[i * k + p] = c * aip - s * aiq;
                    a[i * k + q] = s * aip + c * aiq;
                }
                for j in 0..k {
                    let apj = a[p * k + j];
                    let aqj = a[q * k + j];
                    a[p * k + j] = c * apj - s * aqj;
                    a[q * k + j] = s * apj + c * aqj;
                }
                for i in 0..k {
                    let vip = v[i * k + p];
                    let viq = v[i * k + q];
                    v[i * k + p] = c * vip - s * viq;
                    v[i * k + q] = s * vip + c * viq;
                }
            }
        }
    }
    let eig = (0..k).map(|i| a[i * k + i]).collect();
    (eig, v)
}

/// Lower-triangular Cholesky factor (row-major), with a small diagonal
/// jitter retry for matrices at the PSD boundary.
fn cholesky(a: &[f64], k: usize) -> Result<Vec<f64>, PlasmodeError> {
    for jitter in [0.0, 1e-12, 1e-10, 1e-8] {
        let mut l = vec![0.0; k * k];
        let mut ok = true;
        'outer: for i in 0..k {
            for j in 0..=i {
                let mut s = a[i * k + j] + if i == j { jitter } else { 0.0 };
                for m in 0..j {
                    s -= l[i * k + m] * l[j * k + m];
                }
                if i == j {
                    if s <= 0.0 {
                        ok = false;
                        break 'outer;
                    }
                    l[i * k + j] = s.sqrt();
                } else {
                    l[i * k + j] = s / l[j * k + j];
                }
            }
        }
        if ok {
            return Ok(l);
        }
    }
    Err(PlasmodeError::NonPsdCorrelation {
        eigenvalue: f64::NAN,
    })
}

/// Generated predictor columns with their metadata (no outcome yet).
#[derive(Debug, Clone)]
pub struct PredictorBlock {
    pub meta: Vec<VariableMeta>,
    pub columns: Vec<Vec<f64>>,
    pub n: usize,
}

impl PredictorBlock {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.meta
            .iter()
            .position(|m| m.name == name)
            .map(|i| self.columns[i].as_slice())
    }
}

/// Draw `n` correlated predictor rows. Deterministic for a given
/// (profile, seed) pair.
pub fn generate_predictors(
    n: usize,
    profile: &PredictorProfile,
    seed: u64,
) -> Result<PredictorBlock, PlasmodeError> {
    assert!(n >= 1, "need at least one observation");
    profile.validate()?;
    let k = profile.margin.len();
    let latent = profile.latent_matrix()?;
    let chol = cholesky(&latent, k)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = vec![Vec::with_capacity(n); k];
    let mut w = vec![0.0; k];
    for _ in 0..n {
        for wi in w.iter_mut() {
            *wi = rng.sample(StandardNormal);
        }
        for (j, margin) in profile.margin.iter().enumerate() {
            let mut z = 0.0;
            for m in 0..=j {
                z += chol[j * k + m] * w[m];
            }
            columns[j].push(margin.recipe.apply(z));
        }
    }
    let meta = profile
        .margin
        .iter()
        .map(|m| VariableMeta {
            name: m.name.clone(),
            kind: m.kind,
            role: Role::Predictor,
            shift: None,
            max_degree: 2,
            forced_in: false,
        })
        .collect();
    Ok(PredictorBlock { meta, columns, n })
}

/// How one term of the true model transforms its variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    Power(f64),
    LogPlus1,
}

#[derive(Debug, Clone)]
pub struct TrueTerm {
    pub variable: String,
    pub transform: Transform,
    pub coefficient: f64,
}

/// The data-generating model: a fixed linear predictor plus Gaussian noise.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub intercept: f64,
    pub terms: Vec<TrueTerm>,
    pub noise_variance: f64,
}

impl TrueModel {
    /// The generating equation used throughout:
    /// y = -4 + 3.5 x1^0.5 - 0.25 x1 - 0.018 x3 - 0.4 x4a + 4 x5^-0.2
    ///     + 0.25 ln(x6+1) + 0.4 x8 + 0.021 x10 + e,  e ~ N(0, 0.49).
    pub fn reference() -> Self {
        let t = |variable: &str, transform: Transform, coefficient: f64| TrueTerm {
            variable: variable.into(),
            transform,
            coefficient,
        };
        TrueModel {
            intercept: -4.0,
            terms: vec![
                t("x1", Transform::Power(0.5), 3.5),
                t("x1", Transform::Power(1.0), -0.25),
                t("x3", Transform::Power(1.0), -0.018),
                t("x4a", Transform::Identity, -0.4),
                t("x5", Transform::Power(-0.2), 4.0),
                t("x6", Transform::LogPlus1, 0.25),
                t("x8", Transform::Identity, 0.4),
                t("x10", Transform::Power(1.0), 0.021),
            ],
            noise_variance: 0.49,
        }
    }

    /// Evaluate the linear predictor for one observation; `get` resolves a
    /// variable name to its value.
    pub fn linear_predictor<F>(&self, get: F) -> Result<f64, PlasmodeError>
    where
        F: Fn(&str) -> Option<f64>,
    {
        let mut eta = self.intercept;
        for term in &self.terms {
            let v = get(&term.variable)
                .ok_or_else(|| PlasmodeError::UnknownVariable(term.variable.clone()))?;
            let contribution = match term.transform {
                Transform::Identity => v,
                Transform::Power(p) => {
                    // negative or fractional powers need a positive base
                    let in_domain = v > 0.0 || (p == p.trunc() && p >= 0.0);
                    if !in_domain {
                        return Err(PlasmodeError::NonPositiveValue {
                            variable: term.variable.clone(),
                        });
                    }
                    v.powf(p)
                }
                Transform::LogPlus1 => {
                    if v + 1.0 > 0.0 {
                        (v + 1.0).ln()
                    } else {
                        return Err(PlasmodeError::NonPositiveValue {
                            variable: term.variable.clone(),
                        });
                    }
                }
            };
            eta += term.coefficient * contribution;
        }
        Ok(eta)
    }

    /// The linear predictor over a generated block; dummy names like x4a
    /// resolve against the level codes of their parent column.
    pub fn eta(&self, block: &PredictorBlock) -> Result<Vec<f64>, PlasmodeError> {
        (0..block.n)
            .map(|i| self.linear_predictor(|name| resolve(block, name, i)))
            .collect()
    }

    /// The functional forms of the generating equation, expressed in FP
    /// terms on the expanded predictors (x5's power -0.2 is not a member
    /// of the FP power set; a selection can only approximate it).
    pub fn true_forms(&self) -> BTreeMap<String, FpForm> {
        [
            ("x1", FpForm::Fp2(0.5, 1.0)),
            ("x2", FpForm::Out),
            ("x3", FpForm::Linear),
            ("x4a", FpForm::Linear),
            ("x4b", FpForm::Out),
            ("x5", FpForm::Fp1(-0.2)),
            ("x6", FpForm::Fp1(0.0)),
            ("x7", FpForm::Out),
            ("x8", FpForm::Linear),
            ("x9a", FpForm::Out),
            ("x9b", FpForm::Out),
            ("x10", FpForm::Linear),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// The true model as a model file, usable as the truth column of a
    /// comparison report.
    pub fn to_model_file(&self) -> ModelFile {
        let binary = ["x2", "x4a", "x4b", "x8", "x9a", "x9b"];
        let term = self
            .true_forms()
            .into_iter()
            .map(|(name, form)| {
                let (status, powers) = match form {
                    FpForm::Out => ("out", vec![]),
                    FpForm::Linear => ("linear", vec![]),
                    FpForm::Fp1(p) => ("fp1", vec![p]),
                    FpForm::Fp2(a, b) => ("fp2", vec![a, b]),
                };
                TermFile {
                    kind: if binary.contains(&name.as_str()) {
                        VariableKind::Binary
                    } else {
                        VariableKind::Continuous
                    },
                    name,
                    status: status.into(),
                    powers,
                    coefficients: vec![],
                    shift: 0.0,
                    scale: 1.0,
                    min: 0.0,
                    max: 0.0,
                }
            })
            .collect();
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            alpha_select: 0.0,
            alpha_fp: 0.0,
            cycles_used: 0,
            converged: true,
            intercept: self.intercept,
            term,
        }
    }
}

/// Resolve a variable name against a block, deriving dummy columns such as
/// x4a from their parent categorical on the fly.
fn resolve(block: &PredictorBlock, name: &str, row: usize) -> Option<f64> {
    if let Some(col) = block.column(name) {
        return Some(col[row]);
    }
    // x4a -> parent x4, dummy index 0
    let (base, suffix) = name.split_at(name.len().checked_sub(1)?);
    let letter = suffix.chars().next()?;
    if !letter.is_ascii_lowercase() {
        return None;
    }
    let idx = (letter as u8 - b'a') as usize;
    let pos = block.meta.iter().position(|m| m.name == base)?;
    let meta = &block.meta[pos];
    let col = &block.columns[pos];
    let mut levels: Vec<f64> = col.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    let level = *levels.get(idx + 1)?;
    let v = col[row];
    match meta.kind {
        VariableKind::Ordinal => Some(f64::from(v >= level)),
        VariableKind::Nominal => Some(f64::from(v == level)),
        _ => None,
    }
}

/// y = eta + N(0, noise_variance), i.i.d.; deterministic per seed.
pub fn generate_outcome(eta: &[f64], noise_variance: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = noise_variance.sqrt();
    eta.iter()
        .map(|e| e + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Separate stream for the outcome noise so predictors are unchanged if
/// only the outcome is re-drawn.
fn outcome_seed(seed: u64) -> u64 {
    seed ^ 0xD1B5_4A32_D192_ED03
}

/// Generate a complete dataset: predictors from the profile, outcome from
/// the true model.
pub fn generate_dataset(
    n: usize,
    profile: &PredictorProfile,
    seed: u64,
) -> Result<Dataset, PlasmodeError> {
    let block = generate_predictors(n, profile, seed)?;
    let model = TrueModel::reference();
    let eta = model.eta(&block)?;
    let y = generate_outcome(&eta, model.noise_variance, outcome_seed(seed));

    let mut meta = vec![VariableMeta {
        name: "y".into(),
        kind: VariableKind::Continuous,
        role: Role::Outcome,
        shift: None,
        max_degree: 2,
        forced_in: false,
    }];
    meta.extend(block.meta);
    let mut columns = vec![y];
    columns.extend(block.columns);
    let ds = Dataset::new(
        meta,
        columns,
        format!("generated data (n={n}, seed={seed})"),
    )?;
    Ok(ds)
}

/// Named subsets of a generated dataset, by 1-based inclusive row ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlicePreset {
    A125,
    A250,
    A500,
    B250,
    B500,
    C250,
    C500,
}

impl SlicePreset {
    pub const ALL: [SlicePreset; 7] = [
        SlicePreset::A125,
        SlicePreset::A250,
        SlicePreset::A500,
        SlicePreset::B250,
        SlicePreset::B500,
        SlicePreset::C250,
        SlicePreset::C500,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SlicePreset::A125 => "A125",
            SlicePreset::A250 => "A250",
            SlicePreset::A500 => "A500",
            SlicePreset::B250 => "B250",
            SlicePreset::B500 => "B500",
            SlicePreset::C250 => "C250",
            SlicePreset::C500 => "C500",
        }
    }

    pub fn range(self) -> (usize, usize) {
        match self {
            SlicePreset::A125 => (1, 125),
            SlicePreset::A250 => (1, 250),
            SlicePreset::A500 => (1, 500),
            SlicePreset::B250 => (2001, 2250),
            SlicePreset::B500 => (2001, 2500),
            SlicePreset::C250 => (3001, 3250),
            SlicePreset::C500 => (3001, 3500),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        SlicePreset::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(s))
    }
}

/// Take a named slice of the dataset.
pub fn slice(ds: &Dataset, preset: SlicePreset) -> Result<Dataset, DataError> {
    let (a, b) = preset.range();
    ds.slice_rows(a, b, preset.label())
}
