//! Multivariable fractional polynomial model building for Gaussian-error
//! linear models: the closed-test function selection procedure, backward
//! elimination cycling, leave-one-out and leave-two-out influential-point
//! scans, a plasmode-style data generator with a known true model, and
//! table emitters for diagnostics.

pub mod data;
pub mod dist;
pub mod fp;
pub mod fsp;
pub mod influence;
pub mod linreg;
pub mod plasmode;
pub mod report;
pub mod select;

pub use data::{compute_shift, load_dataset, load_schema, Dataset, VariableKind, VariableMeta};
pub use dist::{chisq_quantile, chisq_sf};
pub use fp::{best_fp, enumerate_powers, fp_basis, FpForm, FpSpec, PowerTuple};
pub use fsp::{run_fsp, FspOptions, FspResult};
pub use influence::{
    flag_influential, group_pairs, ipx_multivariable, ipx_univariable, loo_scan, pair_scan,
    DevDiffRecord, IpReport, ScanResult,
};
pub use linreg::{deviance_difference, fit_ols, FitResult, Mat};
pub use plasmode::{
    generate_dataset, generate_outcome, generate_predictors, PredictorProfile, TrueModel,
};
pub use report::{function_curve, smooth_residuals, CurveTable, RunManifest};
pub use select::{compare_models, fit_mfp, r2_reduction, MfpModel, MfpOptions, ModelFile};
