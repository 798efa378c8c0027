//! Command-line front end. `main` only forwards to [`run`].
//!
//! Exit codes: 0 success, 1 user or input error, 2 numerical
//! non-convergence (artifacts are still written when possible), 3 internal
//! invariant violation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::density::{BaseDensity, SkewSpec};
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::sim::{self, ExperimentSpec, Interval};
use crate::speus::{absorb_pivot, speus_fit, FitOptions, PivotAbsorption, SpFit, SpeusProblem};
use crate::twopart::{
    self, lambda_theory, Omega, ScvResult, Transform, TwoPartConfig, TwoPartFit, TwoPartOptions,
    TwoPartProblem, LOGISTIC_DERIV_BOUND,
};

#[derive(Parser, Debug)]
#[command(name = "pivotblend", version, about = "Skewed pivot-blend regression and sparse two-part models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a skewed regression to CSV data.
    Fit(Settings),
    /// Fit a sparse skewed two-part model to a semicontinuous response.
    Twopart(Settings),
    /// Backward pivot-blend residual diagnostics.
    Diagnose(Settings),
    /// Run a simulation preset or a TOML experiment spec.
    Simulate(Settings),
    /// Pairs bootstrap intervals for the pivot, scales and coefficients.
    Bootstrap(Settings),
}

/// Every flag of every subcommand. A `--config` TOML file may set the same
/// keys (kebab-case, `B` and `A` as spelled) and overrides the flags it names.
#[derive(Args, Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct Settings {
    /// Preset name or experiment TOML path (simulate only).
    preset: Option<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    response: Option<String>,
    /// gaussian, laplace, gumbel, half-normal, maxwell, double-rayleigh,
    /// exponential, huber[:δ] or gdg:γ,d,p
    #[arg(long)]
    base: Option<String>,
    /// log, identity or power:<λ>
    #[arg(long)]
    transform: Option<String>,
    /// A value, `path`, `scv` or `theory`.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    n_lambda: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    m_fixed: Option<f64>,
    #[arg(long)]
    equal_scales: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long = "B")]
    #[serde(rename = "B")]
    b: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long = "A")]
    #[serde(rename = "A")]
    a: Option<f64>,
    /// Prior fit.json (diagnose).
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    fn merge_config(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = read_text(&path)?;
        let cfg: Settings = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        overlay!(self, cfg; preset, input, response, base, transform, lambda, folds, n_lambda,
                 reps, ratio, seed, out, m_fixed, tau, b, level, q, a, fit);
        self.equal_scales |= cfg.equal_scales;
        Ok(self)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(2024)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("pivotblend-out"));
        fs::create_dir_all(&dir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn base_or(&self, default: &str) -> Result<BaseDensity> {
        self.base.as_deref().unwrap_or(default).parse()
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            seed: self.seed(),
            m_fixed: self.m_fixed,
            equal_scales: self.equal_scales,
            tau_scale: self.tau,
            tau_pivot: self.tau,
            ..FitOptions::default()
        }
    }

    fn data(&self) -> Result<Data> {
        let path = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Config("--input is required".into()))?;
        let response = self
            .response
            .as_deref()
            .ok_or_else(|| Error::Config("--response is required".into()))?;
        read_table(path)?.split(response)
    }
}

/// Parsed CSV: header names and numeric columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Data {
    response: String,
    predictors: Vec<String>,
    x: DMatrix<f64>,
    y: Vec<f64>,
}

impl Table {
    fn split(self, response: &str) -> Result<Data> {
        let k = self.names.iter().position(|n| n == response).ok_or_else(|| {
            Error::Config(format!(
                "response column '{response}' not found; columns are {}",
                self.names.join(", ")
            ))
        })?;
        let n = self.columns[k].len();
        let y = self.columns[k].clone();
        let keep: Vec<usize> = (0..self.names.len()).filter(|&j| j != k).collect();
        let x = DMatrix::from_fn(n, keep.len(), |i, j| self.columns[keep[j]][i]);
        Ok(Data {
            response: response.to_string(),
            predictors: keep.iter().map(|&j| self.names[j].clone()).collect(),
            x,
            y,
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// Reads a UTF-8, comma-separated CSV with a header row. Every field must be
/// a finite number written with a '.' decimal point; NA-style values are
/// rejected.
pub fn read_table(path: &Path) -> Result<Table> {
    let text = read_text(path)?;
    parse_table(&text, &path.display().to_string())
}

pub fn parse_table(text: &str, origin: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Config(format!("{origin}: bad header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(Error::Config(format!("{origin}: header row is missing or has empty names")));
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (k, rec) in rdr.records().enumerate() {
        // data row k sits on line k + 2
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Config(format!("{origin}: line {line}: {e}")))?;
        if rec.len() != names.len() {
            return Err(Error::Config(format!(
                "{origin}: line {line} (row {}) has {} fields, expected {}",
                k + 1,
                rec.len(),
                names.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Config(format!(
                    "{origin}: line {line}, column {} ('{}'): '{field}' is not a number",
                    j + 1,
                    names[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Config(format!(
                    "{origin}: line {line}, column {} ('{}'): non-finite value '{field}'",
                    j + 1,
                    names[j]
                )));
            }
            columns[j].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::EmptyInput(format!("{origin}: no data rows")));
    }
    Ok(Table { names, columns })
}

/// `fit.json` of the `fit` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub response: String,
    pub predictors: Vec<String>,
    pub fit: SpFit,
    pub absorb_pivot: PivotAbsorption,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: usize,
    pub lambda_star: f64,
    pub lambda_1se: f64,
    pub index_min: usize,
    pub index_1se: usize,
}

/// `fit.json` of the `twopart` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPartArtifact {
    pub response: String,
    pub predictors: Vec<String>,
    pub config: TwoPartConfig,
    pub lambda_mode: String,
    pub lambda: f64,
    pub support: Vec<usize>,
    pub support_names: Vec<String>,
    pub fit: TwoPartFit,
    pub cv: Option<CvSummary>,
}

/// `intervals.json` of the `bootstrap` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalsArtifact {
    pub level: f64,
    pub draws: usize,
    pub failures: usize,
    pub valid: bool,
    pub warnings: Vec<String>,
    pub m: Interval,
    pub sigma: Interval,
    pub nu: Interval,
    pub alpha: Interval,
    pub beta: Vec<NamedInterval>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedInterval {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = std::env::var("PIVOTBLEND_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 3;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Internal(_) => 3,
        Error::Numerical { .. } | Error::Optimization { .. } | Error::NotConverged(_) => 2,
        _ => 1,
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Fit(s) => cmd_fit(&s.merge_config()?),
        Command::Twopart(s) => cmd_twopart(&s.merge_config()?),
        Command::Diagnose(s) => cmd_diagnose(&s.merge_config()?),
        Command::Simulate(s) => cmd_simulate(&s.merge_config()?),
        Command::Bootstrap(s) => cmd_bootstrap(&s.merge_config()?),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

fn build_problem(s: &Settings, d: &Data) -> Result<SpeusProblem> {
    let base = s.base_or("gaussian")?;
    SpeusProblem::new(d.x.clone(), d.y.clone(), base)
}

/// Per-row `(residual, back-transformed value, weight)` in input order.
fn blended_rows(r: &[f64], skew: &SkewSpec) -> Vec<(f64, f64, f64)> {
    let n_left = r.iter().filter(|&&v| v <= skew.m).count() as f64;
    let n_right = r.len() as f64 - n_left;
    let denom = n_left * skew.nu + n_right * skew.sigma;
    r.iter()
        .map(|&v| {
            let w = if v <= skew.m { skew.nu } else { skew.sigma } / denom;
            (v, skew.back_transform(v), w)
        })
        .collect()
}

fn residuals_csv(r: &[f64], skew: &SkewSpec) -> String {
    let mut out = String::from("row,residual,back_transformed,weight\n");
    for (i, (v, b, w)) in blended_rows(r, skew).into_iter().enumerate() {
        let _ = writeln!(out, "{},{v},{b},{w}", i + 1);
    }
    out
}

fn fit_summary(art: &FitArtifact) -> String {
    let f = &art.fit;
    let mut s = String::new();
    let _ = writeln!(s, "skewed pivot-blend fit of '{}' ({} rows, base {})", art.response, f.n_obs, f.base);
    let _ = writeln!(s, "converged: {} ({:?}, {} iterations, |grad| {:.2e})", f.converged, f.termination, f.n_iter, f.grad_norm);
    let _ = writeln!(s, "start used: {}", f.init_used);
    let _ = writeln!(s, "intercept: {:.6}", f.alpha);
    for (name, b) in art.predictors.iter().zip(&f.beta) {
        let _ = writeln!(s, "  {name}: {b:.6}");
    }
    let _ = writeln!(s, "pivot m = {:.6}, sigma = {:.6}, nu = {:.6}", f.skew.m, f.skew.sigma, f.skew.nu);
    let _ = writeln!(s, "negative log-likelihood: {:.6}", f.neg_loglik);
    if art.absorb_pivot.absorbable {
        let _ = writeln!(
            s,
            "pivot absorbable: yes; the model reduces to location-scale with intercept {:.6}",
            art.absorb_pivot.alpha_prime
        );
    } else {
        let _ = writeln!(s, "pivot absorbable: no; the pivot carries genuine skewness");
    }
    for w in &f.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

fn cmd_fit(s: &Settings) -> Result<i32> {
    let d = s.data()?;
    let prob = build_problem(s, &d)?;
    let fit = speus_fit(&prob, &s.fit_options())?;
    let art = FitArtifact {
        response: d.response.clone(),
        predictors: d.predictors.clone(),
        absorb_pivot: absorb_pivot(&fit),
        fit,
    };
    let dir = s.out_dir()?;
    let r = prob.residuals(&art.fit.beta, art.fit.alpha);
    let summary = fit_summary(&art);
    write_file(&dir, "fit.json", &to_json(&art)?)?;
    write_file(&dir, "residuals.csv", &residuals_csv(&r, &art.fit.skew))?;
    write_file(&dir, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(if art.fit.converged { 0 } else { 2 })
}

fn path_csv(path: &[TwoPartFit]) -> String {
    let mut out = String::from("index,lambda,support_size,objective,n_outer,converged,support\n");
    for (k, f) in path.iter().enumerate() {
        let sup: Vec<String> = f.support.iter().map(|j| j.to_string()).collect();
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{},{}",
            f.lambda_used,
            f.support.len(),
            f.objective,
            f.n_outer,
            f.converged,
            sup.join(";")
        );
    }
    out
}

fn cv_csv(res: &ScvResult) -> String {
    let mut out = String::from("fold,lambda_index,lambda,support_size,loss\n");
    for r in &res.cv_table {
        let _ = writeln!(out, "{},{},{},{},{}", r.fold, r.lambda_index, r.lambda, r.support_size, r.loss);
    }
    out
}

fn cmd_twopart(s: &Settings) -> Result<i32> {
    let d = s.data()?;
    let config = TwoPartConfig {
        transform: s.transform.as_deref().unwrap_or("log").parse::<Transform>()?,
        base: s.base_or("huber")?,
        tau: s.tau,
        ..TwoPartConfig::default()
    };
    let prob = TwoPartProblem::new(d.x.clone(), d.y.clone(), config.clone())?;
    let opts = TwoPartOptions {
        refit: s.fit_options(),
        ..TwoPartOptions::default()
    };
    let dir = s.out_dir()?;
    let mode = s.lambda.clone().unwrap_or_else(|| "scv".into());
    let folds = s.folds.unwrap_or(5);
    let n_lambda = s.n_lambda.unwrap_or(30);
    let mut cv = None;
    let fit = match mode.as_str() {
        "scv" => {
            let res = twopart::select_lambda_scv(&prob, folds, n_lambda, s.seed(), &opts)?;
            write_file(&dir, "path.csv", &path_csv(&res.path))?;
            write_file(&dir, "cv.csv", &cv_csv(&res))?;
            cv = Some(CvSummary {
                folds,
                lambda_star: res.lambda_star,
                lambda_1se: res.lambda_1se,
                index_min: res.index_min,
                index_1se: res.index_1se,
            });
            res.selected().clone()
        }
        "path" => {
            let path = twopart::s2_path(&prob, n_lambda, &opts)?;
            write_file(&dir, "path.csv", &path_csv(&path))?;
            path.last().cloned().ok_or_else(|| Error::Internal("empty path".into()))?
        }
        "theory" => {
            let sep = twopart::separate_fits(&prob, &opts.refit)?;
            let omega = Omega::Auto {
                base: config.base,
                skew: sep.skew(),
                b_bound: LOGISTIC_DERIV_BOUND,
            };
            let lambda = lambda_theory(prob.p(), s.q.unwrap_or(2.0), s.a.unwrap_or(1.0), omega)?;
            twopart::s2_fit(&prob, lambda, &opts)?
        }
        v => {
            let lambda: f64 = v.parse().map_err(|_| {
                Error::Config(format!("--lambda must be a number, 'path', 'scv' or 'theory', got '{v}'"))
            })?;
            twopart::s2_fit(&prob, lambda, &opts)?
        }
    };
    let th = &fit.params;
    let r = prob.continuous().residuals(&th.beta, th.alpha);
    let ws = diagnostics::backward_blend(&r, &fit.skew)?;
    let bundle = diagnostics::diagnostics_bundle(&ws, &config.base)?;
    let converged = fit.converged;
    let art = TwoPartArtifact {
        response: d.response.clone(),
        predictors: d.predictors.clone(),
        config,
        lambda_mode: mode,
        lambda: fit.lambda_used,
        support_names: fit.support.iter().map(|&j| d.predictors[j].clone()).collect(),
        support: fit.support.clone(),
        fit,
        cv,
    };
    write_file(&dir, "fit.json", &to_json(&art)?)?;
    write_file(&dir, "diagnostics.json", &to_json(&bundle)?)?;
    println!(
        "two-part fit of '{}': lambda = {:.6e}, support = [{}], converged = {}",
        art.response,
        art.lambda,
        art.support_names.join(", "),
        converged
    );
    for w in prob.warnings.iter().chain(&art.fit.warnings) {
        eprintln!("warning: {w}");
    }
    Ok(if converged { 0 } else { 2 })
}

fn qq_csv(pairs: &[(f64, f64)]) -> String {
    let mut out = String::from("theoretical,sample\n");
    for (a, b) in pairs {
        let _ = writeln!(out, "{a},{b}");
    }
    out
}

fn cmd_diagnose(s: &Settings) -> Result<i32> {
    let d = s.data()?;
    let (prob, fit) = match &s.fit {
        Some(path) => {
            let art: FitArtifact = serde_json::from_str(&read_text(path)?)
                .map_err(|e| Error::Config(format!("{}: not a fit.json from `fit`: {e}", path.display())))?;
            if art.predictors != d.predictors {
                return Err(Error::Dimension(format!(
                    "the fit used predictors [{}] but the data has [{}]",
                    art.predictors.join(", "),
                    d.predictors.join(", ")
                )));
            }
            (SpeusProblem::new(d.x.clone(), d.y.clone(), art.fit.base)?, art.fit)
        }
        None => {
            let prob = build_problem(s, &d)?;
            let fit = speus_fit(&prob, &s.fit_options())?;
            (prob, fit)
        }
    };
    let bundle = diagnostics::diagnostics_report(&fit, &prob)?;
    let ws = diagnostics::fit_sample(&fit, &prob)?;
    let dir = s.out_dir()?;
    write_file(&dir, "diagnostics.json", &to_json(&bundle)?)?;
    write_file(&dir, "qq.csv", &qq_csv(&diagnostics::qq_pairs(&ws, &fit.base)))?;
    println!(
        "weighted KS = {:.4}, p = {:.4} (n_eff = {:.1}): {}",
        bundle.ks.stat,
        bundle.ks.pvalue,
        ws.n_eff(),
        if bundle.verdict { "consistent with the base density" } else { "base density rejected at 5%" }
    );
    Ok(0)
}

#[derive(Serialize)]
struct Timing {
    total_seconds: f64,
    mean_seconds: f64,
    per_replication: Vec<f64>,
    threads: usize,
}

fn cmd_simulate(s: &Settings) -> Result<i32> {
    let name = s
        .preset
        .as_deref()
        .ok_or_else(|| Error::Config(format!("give a preset ({}) or a .toml spec", sim::PRESETS.join(", "))))?;
    let mut spec = if name.ends_with(".toml") {
        let mut spec = ExperimentSpec::from_toml(&read_text(Path::new(name))?)?;
        if let Some(seed) = s.seed {
            spec.design.seed = seed;
        }
        if let Some(r) = s.reps {
            spec.replications = r;
        }
        spec
    } else {
        sim::preset(name, s.ratio.unwrap_or(2.0), s.reps.unwrap_or(100), s.seed())?
    };
    if s.m_fixed.is_some() || s.equal_scales || s.tau.is_some() {
        spec.method_opts.m_fixed = s.m_fixed;
        spec.method_opts.equal_scales = s.equal_scales;
        spec.method_opts.tau_scale = s.tau;
        spec.method_opts.tau_pivot = s.tau;
    }
    spec.validate()?;
    let started = std::time::Instant::now();
    let res = sim::run_experiment(&spec)?;
    let total = started.elapsed().as_secs_f64();
    let dir = s.out_dir()?;
    let m = &res.metrics;
    // runtime lives in timing.json so reruns give byte-identical metrics
    let metrics = format!(
        "experiment,err_beta,err_sigma,err_nu,err_m,n_ok,n_failed\n\"{}\",{},{},{},{},{},{}\n",
        spec.name, m.err_beta, m.err_sigma, m.err_nu, m.err_m, m.n_ok, m.n_failed
    );
    let p = spec.design.p;
    let mut reps = String::from("rep");
    for j in 0..p {
        let _ = write!(reps, ",beta{}", j + 1);
    }
    reps.push_str(",alpha,m,sigma,nu,converged,error\n");
    for r in &res.replications {
        let _ = write!(reps, "{}", r.rep);
        for b in &r.beta_hat {
            let _ = write!(reps, ",{b}");
        }
        let err = r.error.as_deref().unwrap_or("").replace('"', "'");
        let _ = writeln!(reps, ",{},{},{},{},{},\"{err}\"", r.alpha_hat, r.m_hat, r.sigma_hat, r.nu_hat, r.converged);
    }
    let timing = Timing {
        total_seconds: total,
        mean_seconds: m.mean_runtime,
        per_replication: res.runtimes.clone(),
        threads: rayon::current_num_threads(),
    };
    write_file(&dir, "metrics.csv", &metrics)?;
    write_file(&dir, "replications.csv", &reps)?;
    write_file(&dir, "spec.json", &to_json(&spec)?)?;
    write_file(&dir, "timing.json", &to_json(&timing)?)?;
    println!(
        "{}: Err(beta) = {:.4}, Err(sigma) = {:.4}, Err(nu) = {:.4}, Err(m) = {:.4} over {} replications ({} failed)",
        spec.name, m.err_beta, m.err_sigma, m.err_nu, m.err_m, m.n_ok, m.n_failed
    );
    Ok(0)
}

fn cmd_bootstrap(s: &Settings) -> Result<i32> {
    let d = s.data()?;
    let prob = build_problem(s, &d)?;
    let level = s.level.unwrap_or(0.95);
    let res = sim::bootstrap(&prob, s.b.unwrap_or(200), level, s.seed(), &s.fit_options())?;
    let mut draws = String::from("draw");
    for name in &d.predictors {
        let _ = write!(draws, ",{name}");
    }
    draws.push_str(",alpha,m,sigma,nu,ok\n");
    for r in &res.draws {
        let _ = write!(draws, "{}", r.draw);
        for b in &r.beta {
            let _ = write!(draws, ",{b}");
        }
        let _ = writeln!(draws, ",{},{},{},{},{}", r.alpha, r.m, r.sigma, r.nu, r.ok);
    }
    let art = IntervalsArtifact {
        level,
        draws: res.draws.len(),
        failures: res.failures,
        valid: res.valid,
        warnings: res.warnings.clone(),
        m: res.ci_m,
        sigma: res.ci_sigma,
        nu: res.ci_nu,
        alpha: res.ci_alpha,
        beta: d
            .predictors
            .iter()
            .zip(&res.ci_beta)
            .map(|(name, ci)| NamedInterval {
                name: name.clone(),
                lo: ci.lo,
                hi: ci.hi,
            })
            .collect(),
    };
    let dir = s.out_dir()?;
    write_file(&dir, "draws.csv", &draws)?;
    write_file(&dir, "intervals.json", &to_json(&art)?)?;
    println!(
        "{}% intervals from {} draws ({} failed): m [{:.4}, {:.4}], sigma [{:.4}, {:.4}], nu [{:.4}, {:.4}]",
        100.0 * level,
        art.draws,
        art.failures,
        art.m.lo,
        art.m.hi,
        art.sigma.lo,
        art.sigma.hi,
        art.nu.lo,
        art.nu.hi
    );
    for w in &art.warnings {
        eprintln!("warning: {w}");
    }
    Ok(0)
}
