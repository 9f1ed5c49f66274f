//! Dataset ingestion and preparation: delimited-text loading against a
//! declared schema, origin shifts for positivity, and expansion of ordinal
//! and nominal variables into dummy predictors.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column {0:?} not found in the data file")]
    MissingColumn(String),
    #[error("non-numeric cell in column {column:?}, data row {row}")]
    NonNumericCell { row: usize, column: String },
    #[error("missing value in column {column:?}, data row {row}")]
    MissingValue { row: usize, column: String },
    #[error("categorical variable {0:?} has a single observed level")]
    SingleLevel(String),
    #[error("categorical variable {0:?} has non-integer level codes")]
    NonIntegerLevels(String),
    #[error("dataset must contain exactly one outcome variable; found {0}")]
    OutcomeCount(usize),
    #[error("duplicate variable name {0:?}")]
    DuplicateName(String),
    #[error("column {0:?} has {1} values, expected {2}")]
    LengthMismatch(String, usize, usize),
    #[error("dataset has no rows")]
    Empty,
    #[error("column {column:?} is not strictly positive after shift {shift}")]
    NonPositiveAfterShift { column: String, shift: f64 },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row range {0}-{1} is outside 1..={2}")]
    RangeOutOfBounds(usize, usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Binary,
    Ordinal,
    Nominal,
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VariableKind::Continuous => "continuous",
            VariableKind::Binary => "binary",
            VariableKind::Ordinal => "ordinal",
            VariableKind::Nominal => "nominal",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Outcome,
    Predictor,
}

fn default_role() -> Role {
    Role::Predictor
}

fn default_max_degree() -> u8 {
    2
}

/// Declared properties of one variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableMeta {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default = "default_role")]
    pub role: Role,
    /// Origin shift added before FP transforms. `None` requests the
    /// automatic rule; after `apply_shifts` it records the shift used.
    #[serde(default)]
    pub shift: Option<f64>,
    /// Most complex FP allowed for this variable (1 or 2).
    #[serde(default = "default_max_degree")]
    pub max_degree: u8,
    #[serde(default)]
    pub forced_in: bool,
}

impl VariableMeta {
    pub fn continuous(name: &str) -> Self {
        VariableMeta {
            name: name.to_string(),
            kind: VariableKind::Continuous,
            role: Role::Predictor,
            shift: None,
            max_degree: 2,
            forced_in: false,
        }
    }

    pub fn binary(name: &str) -> Self {
        VariableMeta {
            kind: VariableKind::Binary,
            ..VariableMeta::continuous(name)
        }
    }

    pub fn outcome(name: &str) -> Self {
        VariableMeta {
            role: Role::Outcome,
            ..VariableMeta::continuous(name)
        }
    }
}

/// A complete rectangular dataset: named columns plus per-variable metadata.
/// Immutable after construction; preparation steps return new datasets.
#[derive(Debug, Clone)]
pub struct Dataset {
    meta: Vec<VariableMeta>,
    columns: Vec<Vec<f64>>,
    n: usize,
    pub provenance: String,
}

impl Dataset {
    pub fn new(
        meta: Vec<VariableMeta>,
        columns: Vec<Vec<f64>>,
        provenance: impl Into<String>,
    ) -> Result<Self, DataError> {
        assert_eq!(meta.len(), columns.len(), "meta/column count mismatch");
        let n = columns.first().map_or(0, |c| c.len());
        if n == 0 {
            return Err(DataError::Empty);
        }
        let mut seen = BTreeSet::new();
        for (m, c) in meta.iter().zip(&columns) {
            if c.len() != n {
                return Err(DataError::LengthMismatch(m.name.clone(), c.len(), n));
            }
            if !seen.insert(m.name.clone()) {
                return Err(DataError::DuplicateName(m.name.clone()));
            }
        }
        let outcomes = meta.iter().filter(|m| m.role == Role::Outcome).count();
        if outcomes != 1 {
            return Err(DataError::OutcomeCount(outcomes));
        }
        Ok(Dataset {
            meta,
            columns,
            n,
            provenance: provenance.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn meta(&self) -> &[VariableMeta] {
        &self.meta
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.meta
            .iter()
            .position(|m| m.name == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn meta_of(&self, name: &str) -> Option<&VariableMeta> {
        self.meta.iter().find(|m| m.name == name)
    }

    pub fn outcome(&self) -> (&VariableMeta, &[f64]) {
        let i = self
            .meta
            .iter()
            .position(|m| m.role == Role::Outcome)
            .expect("validated at construction");
        (&self.meta[i], &self.columns[i])
    }

    pub fn predictors(&self) -> impl Iterator<Item = (&VariableMeta, &[f64])> {
        self.meta
            .iter()
            .zip(&self.columns)
            .filter(|(m, _)| m.role == Role::Predictor)
            .map(|(m, c)| (m, c.as_slice()))
    }

    /// Expand ordinal and nominal variables into dummy predictors.
    ///
    /// An ordinal variable with observed levels l1 < l2 < ... < lk becomes
    /// the cumulative indicators [x >= l2], ..., [x >= lk]; a nominal one
    /// becomes reference-cell indicators against l1. Dummies take the base
    /// name plus a letter suffix (x4 -> x4a, x4b) and are binary predictors
    /// in their own right. Binary and continuous columns pass through, so
    /// the operation is idempotent.
    pub fn expand_categorical(&self) -> Result<Dataset, DataError> {
        let mut meta = Vec::new();
        let mut columns = Vec::new();
        for (m, col) in self.meta.iter().zip(&self.columns) {
            match m.kind {
                VariableKind::Ordinal | VariableKind::Nominal => {
                    if col.iter().any(|v| v.fract() != 0.0) {
                        return Err(DataError::NonIntegerLevels(m.name.clone()));
                    }
                    let mut levels: Vec<f64> = col.to_vec();
                    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    levels.dedup();
                    if levels.len() < 2 {
                        return Err(DataError::SingleLevel(m.name.clone()));
                    }
                    for (k, level) in levels.iter().enumerate().skip(1) {
                        let suffix = (b'a' + (k - 1) as u8) as char;
                        let dummy: Vec<f64> = match m.kind {
                            VariableKind::Ordinal => {
                                col.iter().map(|&v| f64::from(v >= *level)).collect()
                            }
                            _ => col.iter().map(|&v| f64::from(v == *level)).collect(),
                        };
                        meta.push(VariableMeta {
                            name: format!("{}{}", m.name, suffix),
                            kind: VariableKind::Binary,
                            role: m.role,
                            shift: None,
                            max_degree: m.max_degree,
                            forced_in: m.forced_in,
                        });
                        columns.push(dummy);
                    }
                }
                _ => {
                    meta.push(m.clone());
                    columns.push(col.clone());
                }
            }
        }
        Dataset::new(meta, columns, self.provenance.clone())
    }

    /// Add origin shifts so every continuous predictor is strictly positive.
    ///
    /// A user-declared shift in the metadata wins; otherwise the automatic
    /// rule applies. The applied shift is recorded in the metadata.
    pub fn apply_shifts(&self) -> Result<Dataset, DataError> {
        let mut meta = self.meta.clone();
        let mut columns = self.columns.clone();
        for (m, col) in meta.iter_mut().zip(&mut columns) {
            if m.kind != VariableKind::Continuous || m.role != Role::Predictor {
                continue;
            }
            let shift = m.shift.unwrap_or_else(|| compute_shift(col));
            if shift != 0.0 {
                for v in col.iter_mut() {
                    *v += shift;
                }
            }
            if col.iter().any(|&v| v <= 0.0) {
                return Err(DataError::NonPositiveAfterShift {
                    column: m.name.clone(),
                    shift,
                });
            }
            m.shift = Some(shift);
        }
        Dataset::new(meta, columns, self.provenance.clone())
    }

    /// Expansion followed by shifting: the form model fitting expects.
    pub fn prepared(&self) -> Result<Dataset, DataError> {
        self.expand_categorical()?.apply_shifts()
    }

    /// True once every categorical is expanded and every continuous
    /// predictor is strictly positive with a recorded shift.
    pub fn is_prepared(&self) -> bool {
        self.meta
            .iter()
            .zip(&self.columns)
            .all(|(m, col)| match (m.kind, m.role) {
                (VariableKind::Ordinal | VariableKind::Nominal, _) => false,
                (VariableKind::Continuous, Role::Predictor) => {
                    m.shift.is_some() && col.iter().all(|&v| v > 0.0)
                }
                _ => true,
            })
    }

    /// Keep the 1-based inclusive row range, e.g. 1..=250.
    pub fn slice_rows(
        &self,
        start1: usize,
        end1: usize,
        label: &str,
    ) -> Result<Dataset, DataError> {
        if start1 < 1 || end1 > self.n || start1 > end1 {
            return Err(DataError::RangeOutOfBounds(start1, end1, self.n));
        }
        let columns = self
            .columns
            .iter()
            .map(|c| c[start1 - 1..end1].to_vec())
            .collect();
        let provenance = format!("{label} = obs {start1}-{end1} of {}", self.provenance);
        Dataset::new(self.meta.clone(), columns, provenance)
    }

    /// Remove the given 0-based rows (for influential-point deletion).
    pub fn drop_rows(&self, rows: &[usize]) -> Result<Dataset, DataError> {
        let drop: BTreeSet<usize> = rows.iter().copied().collect();
        let columns: Vec<Vec<f64>> = self
            .columns
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(i, _)| !drop.contains(i))
                    .map(|(_, v)| *v)
                    .collect()
            })
            .collect();
        let label: Vec<String> = drop.iter().map(|i| (i + 1).to_string()).collect();
        let provenance = format!("{} minus obs {{{}}}", self.provenance, label.join(", "));
        Dataset::new(self.meta.clone(), columns, provenance)
    }

    /// Serialize as delimited text with a header row. Values print in
    /// Rust's shortest round-trip form, so reading the file back recovers
    /// them exactly.
    pub fn to_delimited(&self, delimiter: char) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self.meta.iter().map(|m| m.name.as_str()).collect();
        out.push_str(&names.join(&delimiter.to_string()));
        out.push('\n');
        for i in 0..self.n {
            let row: Vec<String> = self.columns.iter().map(|c| format!("{}", c[i])).collect();
            out.push_str(&row.join(&delimiter.to_string()));
            out.push('\n');
        }
        out
    }
}

/// The default origin shift: zero when the minimum is already positive,
/// otherwise the amount that moves the minimum to exactly 1.
pub fn compute_shift(x: &[f64]) -> f64 {
    assert!(!x.is_empty(), "compute_shift on empty vector");
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        0.0
    } else {
        1.0 - min
    }
}

fn is_missing_token(s: &str) -> bool {
    matches!(s, "" | "." | "NA" | "na" | "N/A" | "NaN" | "nan")
}

/// Load a delimited text file (comma or tab, sniffed from the header line)
/// against a declared schema. Lines starting with '#' are skipped. Columns
/// present in the file but absent from the schema are ignored; shifts are
/// NOT applied here.
pub fn load_dataset(path: &Path, schema: &[VariableMeta]) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path)?;
    let provenance = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_delimited(&text, schema, provenance)
}

/// Parse delimited text content against a schema.
pub fn parse_delimited(
    text: &str,
    schema: &[VariableMeta],
    provenance: impl Into<String>,
) -> Result<Dataset, DataError> {
    let mut lines = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let header = lines.next().ok_or(DataError::Empty)?;
    let delimiter = if header.contains('\t') { '\t' } else { ',' };
    let names: Vec<&str> = header.split(delimiter).map(str::trim).collect();

    let mut index = Vec::with_capacity(schema.len());
    for m in schema {
        match names.iter().position(|&h| h == m.name) {
            Some(i) => index.push(i),
            None => return Err(DataError::MissingColumn(m.name.clone())),
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    for (row_idx, line) in lines.enumerate() {
        let row = row_idx + 1;
        let cells: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        for (k, m) in schema.iter().enumerate() {
            let cell = cells.get(index[k]).copied().unwrap_or("");
            if is_missing_token(cell) {
                return Err(DataError::MissingValue {
                    row,
                    column: m.name.clone(),
                });
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => columns[k].push(v),
                _ => {
                    return Err(DataError::NonNumericCell {
                        row,
                        column: m.name.clone(),
                    })
                }
            }
        }
    }
    Dataset::new(schema.to_vec(), columns, provenance)
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaFile {
    #[serde(default)]
    provenance: Option<String>,
    variable: Vec<VariableMeta>,
}

/// Read the variable schema from its TOML config file.
pub fn load_schema(path: &Path) -> Result<Vec<VariableMeta>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let parsed: SchemaFile = toml::from_str(&text).map_err(|e| DataError::Schema(e.to_string()))?;
    if parsed.variable.is_empty() {
        return Err(DataError::Schema("schema declares no variables".into()));
    }
    for v in &parsed.variable {
        if v.max_degree != 1 && v.max_degree != 2 {
            return Err(DataError::Schema(format!(
                "variable {:?}: max_degree must be 1 or 2",
                v.name
            )));
        }
    }
    Ok(parsed.variable)
}

/// Serialize a schema back to TOML (used by the data generator).
pub fn schema_to_toml(schema: &[VariableMeta]) -> String {
    let file = SchemaFile {
        provenance: None,
        variable: schema.to_vec(),
    };
    toml::to_string(&file).expect("schema serializes")
}
