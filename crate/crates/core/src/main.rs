//! Command-line surface: simulate, slice, fsp, mfp, influence, curve,
//! compare, report. Every file-writing run also writes a manifest
//! recording the command, flags, input digests and seed.

use clap::{Args, Parser, Subcommand};
use mfp::data::{self, Dataset};
use mfp::fp::fmt_power;
use mfp::fsp::FspOptions;
use mfp::influence::{self, AdjustMode, ScanMode};
use mfp::linreg::Mat;
use mfp::plasmode::{self, PredictorProfile, SlicePreset, TrueModel};
use mfp::report::{self, RunManifest};
use mfp::select::{self, MfpOptions, ModelFile};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mfp",
    version,
    about = "Multivariable fractional polynomial model building with influential-point diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Delimited data file (comma or tab, header row).
    #[arg(long)]
    data: PathBuf,
    /// Variable schema (TOML).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from the built-in true model and profile.
    Simulate {
        /// Number of observations to generate.
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Optional named subset to keep (A125, A250, A500, B250, B500,
        /// C250, C500).
        #[arg(long)]
        slice: Option<String>,
        /// Custom generator profile (TOML); defaults to the built-in one.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Output data file (CSV).
        #[arg(long)]
        out: PathBuf,
        /// Also write the matching schema file here.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
    /// Cut a named or explicit 1-based row range out of a dataset, or
    /// drop specific observations (e.g. for stepwise influential-point
    /// elimination by hand).
    Slice {
        #[command(flatten)]
        data: DataArgs,
        /// Named preset (A250, B500, ...) or an explicit range like 1:250.
        #[arg(long, conflicts_with = "drop")]
        range: Option<String>,
        /// Comma-separated 1-based observation numbers to remove.
        #[arg(long)]
        drop: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Function selection for one continuous variable.
    Fsp {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        variable: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Comma-separated covariates adjusted for (entering linearly).
        #[arg(long)]
        adjust: Option<String>,
        #[arg(long)]
        max_degree: Option<u8>,
        #[arg(long, default_value_t = false)]
        forced_in: bool,
        /// Write the summary table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the multivariable model.
    Mfp {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha_select: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha_fp: f64,
        /// Where to write the fitted model (TOML).
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Influential-point scans and workflows.
    Influence {
        #[command(flatten)]
        data: DataArgs,
        /// loo (single deletions) or pairs.
        #[arg(long, default_value = "loo")]
        mode: String,
        /// Workflow: u = univariable scans then refit, m = scan the
        /// selected model. Omit for a plain scan of --variable.
        #[arg(long)]
        workflow: Option<String>,
        /// Variable for a plain scan (no workflow).
        #[arg(long)]
        variable: Option<String>,
        /// Significance levels recorded per scan row.
        #[arg(long, default_value = "0.05,0.01")]
        alphas: String,
        #[arg(long, default_value_t = 0.05)]
        alpha_select: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha_fp: f64,
        /// Selected model file for --workflow m (fitted here if absent).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory for scan tables, reports and refit model.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fitted-function curve with 95% pointwise bounds.
    Curve {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        variable: String,
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two fitted models, optionally against a truth model.
    Compare {
        #[arg(long)]
        model_a: PathBuf,
        #[arg(long)]
        model_b: PathBuf,
        /// Path to a truth model file, or "builtin" for the generator's own.
        #[arg(long)]
        truth: Option<String>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variable-importance and smoothed-residual reports for a model.
    Report {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// Running-mean window as a fraction of n.
        #[arg(long, default_value_t = 0.2)]
        window: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// User-facing failure (bad flags, bad data, bad files): exit code 1.
/// Anything else that escapes is an internal error: exit code 2.
#[derive(Debug)]
struct UserError(String);

impl<E: std::error::Error> From<E> for UserError {
    fn from(e: E) -> Self {
        UserError(e.to_string())
    }
}

type Run = Result<(), UserError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; only real usage
            // mistakes count as user errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(UserError(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(_) => {
            eprintln!("internal error; this is a bug");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Run {
    match cli.command {
        Command::Simulate {
            n,
            seed,
            slice,
            profile,
            out,
            schema_out,
        } => cmd_simulate(n, seed, slice, profile, out, schema_out),
        Command::Slice {
            data,
            range,
            drop,
            out,
        } => cmd_slice(data, range, drop, out),
        Command::Fsp {
            data,
            variable,
            alpha,
            adjust,
            max_degree,
            forced_in,
            out,
        } => cmd_fsp(data, variable, alpha, adjust, max_degree, forced_in, out),
        Command::Mfp {
            data,
            alpha_select,
            alpha_fp,
            model_out,
        } => cmd_mfp(data, alpha_select, alpha_fp, model_out),
        Command::Influence {
            data,
            mode,
            workflow,
            variable,
            alphas,
            alpha_select,
            alpha_fp,
            model,
            out_dir,
        } => cmd_influence(
            data,
            mode,
            workflow,
            variable,
            alphas,
            alpha_select,
            alpha_fp,
            model,
            out_dir,
        ),
        Command::Curve {
            data,
            model,
            variable,
            grid,
            out,
        } => cmd_curve(data, model, variable, grid, out),
        Command::Compare {
            model_a,
            model_b,
            truth,
            out,
        } => cmd_compare(model_a, model_b, truth, out),
        Command::Report {
            data,
            model,
            window,
            out_dir,
        } => cmd_report(data, model, window, out_dir),
    }
}

fn load_prepared(args: &DataArgs) -> Result<Dataset, UserError> {
    let schema = data::load_schema(&args.schema)?;
    let raw = data::load_dataset(&args.data, &schema)?;
    Ok(raw.prepared()?)
}

fn write_with_manifest(path: &Path, text: &str, manifest: &RunManifest) -> Run {
    report::write_text_atomic(path, text)?;
    let mpath = manifest_path(path);
    report::write_text_atomic(&mpath, &manifest.to_toml())?;
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(".manifest.toml");
    out.with_file_name(name)
}

fn cmd_simulate(
    n: usize,
    seed: u64,
    slice: Option<String>,
    profile_path: Option<PathBuf>,
    out: PathBuf,
    schema_out: Option<PathBuf>,
) -> Run {
    let profile = match &profile_path {
        Some(p) => PredictorProfile::from_path(p)?,
        None => PredictorProfile::reference(),
    };
    let mut ds = plasmode::generate_dataset(n, &profile, seed)?;
    if let Some(label) = &slice {
        let preset = SlicePreset::parse(label)
            .ok_or_else(|| UserError(format!("unknown slice preset {label:?}")))?;
        ds = plasmode::slice(&ds, preset)?;
    }

    let mut manifest = RunManifest::new("simulate")
        .flag("n", n)
        .flag("slice", slice.as_deref().unwrap_or("none"))
        .seed(seed)
        .provenance(&ds.provenance);
    if let Some(p) = &profile_path {
        manifest = manifest.input_file(p)?;
    }
    write_with_manifest(&out, &ds.to_delimited(','), &manifest)?;
    if let Some(sp) = schema_out {
        report::write_text_atomic(&sp, &data::schema_to_toml(ds.meta()))?;
    }
    println!("wrote {} rows to {}", ds.n(), out.display());
    Ok(())
}

fn cmd_slice(args: DataArgs, range: Option<String>, drop: Option<String>, out: PathBuf) -> Run {
    let schema = data::load_schema(&args.schema)?;
    let ds = data::load_dataset(&args.data, &schema)?;
    let sliced = match (&range, &drop) {
        (Some(range), None) => {
            if let Some(preset) = SlicePreset::parse(range) {
                plasmode::slice(&ds, preset)?
            } else {
                let (a, b) = range
                    .split_once(':')
                    .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                    .ok_or_else(|| {
                        UserError(format!(
                            "range must be a preset (A250, ...) or start:end, got {range:?}"
                        ))
                    })?;
                ds.slice_rows(a, b, &format!("rows {a}-{b}"))?
            }
        }
        (None, Some(list)) => {
            let mut rows = Vec::new();
            for tok in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let obs: usize = tok
                    .parse()
                    .map_err(|_| UserError(format!("bad observation number {tok:?}")))?;
                if obs < 1 || obs > ds.n() {
                    return Err(UserError(format!("observation {obs} outside 1..={}", ds.n())));
                }
                rows.push(obs - 1);
            }
            ds.drop_rows(&rows)?
        }
        _ => return Err(UserError("give exactly one of --range or --drop".into())),
    };
    let manifest = RunManifest::new("slice")
        .flag("range", range.as_deref().unwrap_or(""))
        .flag("drop", drop.as_deref().unwrap_or(""))
        .provenance(&sliced.provenance)
        .input_file(&args.data)?
        .input_file(&args.schema)?;
    write_with_manifest(&out, &sliced.to_delimited(','), &manifest)?;
    println!("wrote {} rows to {}", sliced.n(), out.display());
    Ok(())
}

fn cmd_fsp(
    args: DataArgs,
    variable: String,
    alpha: f64,
    adjust: Option<String>,
    max_degree: Option<u8>,
    forced_in: bool,
    out: Option<PathBuf>,
) -> Run {
    let ds = load_prepared(&args)?;
    let meta = ds
        .meta_of(&variable)
        .ok_or_else(|| UserError(format!("variable {variable:?} not in schema")))?
        .clone();
    let x = ds.column(&variable).expect("checked above");
    let (_, y) = ds.outcome();

    let adjust_mat = match &adjust {
        None => None,
        Some(list) => {
            let mut m = Mat::with_rows(ds.n());
            for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let col = ds
                    .column(name)
                    .ok_or_else(|| UserError(format!("adjust variable {name:?} not in schema")))?;
                m.push_col(col);
            }
            Some(m)
        }
    };

    let opts = FspOptions {
        alpha_select: alpha,
        alpha_fp: alpha,
        forced_in: forced_in || meta.forced_in,
        max_degree: max_degree.unwrap_or(meta.max_degree),
    };
    let res = mfp::run_fsp(x, y, adjust_mat.as_ref(), &opts)?;

    let mut text = String::new();
    text.push_str("comparison,deviance_difference,p_value\n");
    text.push_str(&format!(
        "fp2_vs_null,{},{}\n",
        res.dd_fp2_null, res.p_fp2_null
    ));
    text.push_str(&format!(
        "fp2_vs_linear,{},{}\n",
        res.dd_fp2_linear, res.p_fp2_linear
    ));
    if let (Some(dd), Some(p)) = (res.dd_fp2_fp1, res.p_fp2_fp1) {
        text.push_str(&format!("fp2_vs_fp1,{dd},{p}\n"));
    }
    let form = match res.selection.form {
        mfp::FpForm::Out => "out".to_string(),
        mfp::FpForm::Linear => "linear".to_string(),
        mfp::FpForm::Fp1(p) => format!("fp1({})", fmt_power(p)),
        mfp::FpForm::Fp2(a, b) => format!("fp2({}; {})", fmt_power(a), fmt_power(b)),
    };
    text.push_str(&format!("selection,{form},steps={}\n", res.steps_run));
    if !res.selection.coefficients.is_empty() {
        let coefs: Vec<String> = res
            .selection
            .coefficients
            .iter()
            .map(|c| c.to_string())
            .collect();
        text.push_str(&format!(
            "coefficients(scale={}),{},\n",
            res.scale,
            coefs.join(" ")
        ));
    }

    match out {
        Some(path) => {
            let manifest = RunManifest::new("fsp")
                .flag("variable", &variable)
                .flag("alpha", alpha)
                .flag("adjust", adjust.as_deref().unwrap_or(""))
                .flag("max_degree", opts.max_degree)
                .flag("forced_in", opts.forced_in)
                .input_file(&args.data)?
                .input_file(&args.schema)?;
            write_with_manifest(&path, &text, &manifest)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_mfp(args: DataArgs, alpha_select: f64, alpha_fp: f64, model_out: PathBuf) -> Run {
    let ds = load_prepared(&args)?;
    let model = select::fit_mfp(&ds, &MfpOptions::new(alpha_select, alpha_fp))?;
    if !model.converged {
        eprintln!(
            "warning: no stable model after {} cycles; results are the last cycle's",
            model.cycles_used
        );
    }
    let file = ModelFile::from_model(&model);
    let manifest = RunManifest::new("mfp")
        .flag("alpha_select", alpha_select)
        .flag("alpha_fp", alpha_fp)
        .provenance(&ds.provenance)
        .input_file(&args.data)?
        .input_file(&args.schema)?;
    write_with_manifest(&model_out, &file.to_toml(), &manifest)?;
    for t in &file.term {
        println!("{:>6}  {}", t.name, t.describe());
    }
    println!(
        "cycles: {} (converged: {}), R2 = {:.4}",
        model.cycles_used, model.converged, model.final_fit.r2
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_influence(
    args: DataArgs,
    mode: String,
    workflow: Option<String>,
    variable: Option<String>,
    alphas: String,
    alpha_select: f64,
    alpha_fp: f64,
    model: Option<PathBuf>,
    out_dir: PathBuf,
) -> Run {
    let ds = load_prepared(&args)?;
    let alphas: Vec<f64> = alphas
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| UserError(format!("bad --alphas: {e}")))?;
    let scan_mode = match mode.as_str() {
        "loo" => ScanMode::Loo,
        "pairs" => ScanMode::Pairs,
        other => {
            return Err(UserError(format!(
                "--mode must be loo or pairs, got {other:?}"
            )))
        }
    };
    std::fs::create_dir_all(&out_dir).map_err(UserError::from)?;
    let opts = MfpOptions::new(alpha_select, alpha_fp);
    let base_manifest = || -> Result<RunManifest, UserError> {
        Ok(RunManifest::new("influence")
            .flag("mode", &mode)
            .flag("workflow", workflow.as_deref().unwrap_or("none"))
            .flag(
                "alphas",
                alphas
                    .iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            )
            .flag("alpha_select", alpha_select)
            .flag("alpha_fp", alpha_fp)
            .provenance(&ds.provenance)
            .input_file(&args.data)?
            .input_file(&args.schema)?)
    };

    match workflow.as_deref() {
        None => {
            let name = variable.ok_or_else(|| UserError("a plain scan needs --variable".into()))?;
            let meta = ds
                .meta_of(&name)
                .ok_or_else(|| UserError(format!("variable {name:?} not in schema")))?;
            let x = ds.column(&name).expect("checked");
            let (_, y) = ds.outcome();
            let scan = match scan_mode {
                ScanMode::Loo => influence::loo_scan(x, y, None, &alphas, meta.max_degree)?,
                ScanMode::Pairs => influence::pair_scan(x, y, None, &alphas, meta.max_degree)?,
            };
            let rep = influence::flag_influential(&scan, alpha_fp, &name, AdjustMode::Univariable);
            let path = out_dir.join(format!("scan_{name}.csv"));
            write_with_manifest(&path, &report::scan_to_csv(&name, &scan), &base_manifest()?)?;
            if scan_mode == ScanMode::Pairs {
                let ip_set: BTreeSet<usize> =
                    rep.flagged.iter().flat_map(|d| d.indices()).collect();
                let groups = influence::group_pairs(&scan.records, &ip_set);
                report::write_text_atomic(
                    &out_dir.join(format!("groups_{name}.csv")),
                    &groups_to_csv(&groups),
                )?;
            }
            println!(
                "{name}: {} influential deletion(s) at alpha {}",
                rep.flagged.len(),
                alpha_fp
            );
            Ok(())
        }
        Some("u") | Some("m") => {
            let is_multi = workflow.as_deref() == Some("m");
            let result = if is_multi {
                let fitted;
                let model_ref = match &model {
                    Some(p) => {
                        let file = ModelFile::load(p)?;
                        fitted = select::impose_forms(&ds, &file.forms()?, &opts)?;
                        &fitted
                    }
                    None => {
                        fitted = select::fit_mfp(&ds, &opts)?;
                        &fitted
                    }
                };
                influence::ipx_multivariable(&ds, model_ref, &alphas)?
            } else {
                influence::ipx_univariable(&ds, &opts, &alphas)?
            };
            for vs in &result.scans {
                let path = out_dir.join(format!("scan_{}.csv", vs.variable));
                report::write_text_atomic(&path, &report::scan_to_csv(&vs.variable, &vs.scan))?;
                if scan_mode == ScanMode::Pairs {
                    // corroborating pair diagnostics around the loo flags
                    let x = ds.column(&vs.variable).expect("scanned column exists");
                    let (_, y) = ds.outcome();
                    let md = ds.meta_of(&vs.variable).expect("meta").max_degree;
                    let pscan = influence::pair_scan(x, y, None, &alphas, md)?;
                    report::write_text_atomic(
                        &out_dir.join(format!("pairs_{}.csv", vs.variable)),
                        &report::scan_to_csv(&vs.variable, &pscan),
                    )?;
                    let ip_set: BTreeSet<usize> =
                        vs.report.flagged.iter().flat_map(|d| d.indices()).collect();
                    let groups = influence::group_pairs(&pscan.records, &ip_set);
                    report::write_text_atomic(
                        &out_dir.join(format!("groups_{}.csv", vs.variable)),
                        &groups_to_csv(&groups),
                    )?;
                }
            }
            write_with_manifest(
                &out_dir.join("influential_points.csv"),
                &report::ip_summary_to_csv(&result.scans),
                &base_manifest()?,
            )?;
            report::write_text_atomic(
                &out_dir.join("reduced_data.csv"),
                &result.reduced.to_delimited(','),
            )?;
            report::write_text_atomic(
                &out_dir.join("model_reduced.toml"),
                &ModelFile::from_model(&result.model).to_toml(),
            )?;
            let removed: Vec<String> = result
                .ip_union
                .iter()
                .map(|i| (i + 1).to_string())
                .collect();
            println!(
                "removed {} observation(s): [{}]; refit model in {}",
                result.ip_union.len(),
                removed.join(", "),
                out_dir.display()
            );
            Ok(())
        }
        Some(other) => Err(UserError(format!(
            "--workflow must be u or m, got {other:?}"
        ))),
    }
}

fn groups_to_csv(groups: &influence::PairGroups) -> String {
    let mut s = String::from("group,count,comparison,min,q1,median,q3,max\n");
    for (label, g) in [("G1", &groups.g1), ("G2", &groups.g2), ("G3", &groups.g3)] {
        for (cmp, f) in [
            ("fp2_null", &g.dd_fp2_null),
            ("fp2_linear", &g.dd_fp2_linear),
            ("fp2_fp1", &g.dd_fp2_fp1),
        ] {
            if let Some(f) = f {
                s.push_str(&format!(
                    "{label},{},{cmp},{},{},{},{},{}\n",
                    g.count, f.min, f.q1, f.median, f.q3, f.max
                ));
            }
        }
    }
    s
}

fn cmd_curve(
    args: DataArgs,
    model_path: PathBuf,
    variable: String,
    grid: usize,
    out: PathBuf,
) -> Run {
    let ds = load_prepared(&args)?;
    let file = ModelFile::load(&model_path)?;
    let model = select::impose_forms(
        &ds,
        &file.forms()?,
        &MfpOptions::new(file.alpha_select, file.alpha_fp),
    )?;
    let table = report::function_curve(&model, &variable, grid)?;
    let manifest = RunManifest::new("curve")
        .flag("variable", &variable)
        .flag("grid", grid)
        .provenance(&ds.provenance)
        .input_file(&args.data)?
        .input_file(&args.schema)?
        .input_file(&model_path)?;
    write_with_manifest(&out, &report::curve_to_csv(&table), &manifest)?;
    println!("wrote curve for {variable} to {}", out.display());
    Ok(())
}

fn cmd_compare(
    model_a: PathBuf,
    model_b: PathBuf,
    truth: Option<String>,
    out: Option<PathBuf>,
) -> Run {
    let a = ModelFile::load(&model_a)?;
    let b = ModelFile::load(&model_b)?;
    let truth_file = match truth.as_deref() {
        None => None,
        Some("builtin") => Some(TrueModel::reference().to_model_file()),
        Some(path) => Some(ModelFile::load(Path::new(path))?),
    };
    let report_tbl = select::compare_models(&a, &b, truth_file.as_ref())?;
    let text = report::comparison_to_csv(&report_tbl);
    match out {
        Some(path) => {
            let manifest = RunManifest::new("compare")
                .flag("truth", truth.as_deref().unwrap_or("none"))
                .input_file(&model_a)?
                .input_file(&model_b)?;
            write_with_manifest(&path, &text, &manifest)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_report(args: DataArgs, model_path: PathBuf, window: f64, out_dir: PathBuf) -> Run {
    let ds = load_prepared(&args)?;
    let file = ModelFile::load(&model_path)?;
    let model = select::impose_forms(
        &ds,
        &file.forms()?,
        &MfpOptions::new(file.alpha_select, file.alpha_fp),
    )?;
    std::fs::create_dir_all(&out_dir).map_err(UserError::from)?;

    let reductions = select::r2_reduction(&model, &ds)?;
    let manifest = RunManifest::new("report")
        .flag("window", window)
        .provenance(&ds.provenance)
        .input_file(&args.data)?
        .input_file(&args.schema)?
        .input_file(&model_path)?;
    write_with_manifest(
        &out_dir.join("r2_reduction.csv"),
        &report::r2_reduction_to_csv(&reductions),
        &manifest,
    )?;

    for term in model.terms.iter().filter(|t| t.form.included()) {
        if term.kind != mfp::VariableKind::Continuous {
            continue;
        }
        let shifted = ds.column(&term.name).expect("model fits this data");
        let original: Vec<f64> = shifted.iter().map(|v| v - term.shift).collect();
        let table = report::smooth_residuals(&model.final_fit, &original, window)?;
        report::write_text_atomic(
            &out_dir.join(format!("residuals_{}.csv", term.name)),
            &report::smooth_to_csv(&term.name, &table),
        )?;
    }
    println!("reports written to {}", out_dir.display());
    Ok(())
}
