//! Command-line front end: JSON for structured results, CSV for series.

use std::fmt::Write as _;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use defaultlab::calibration::{
    calibrate_davis_lo, calibrate_torri_at_p, calibrate_vasicek, trace_torri_manifold,
    CalibrationTarget, Preset, DEFAULT_TOL,
};
use defaultlab::data::{load_panel, summary_stats, write_records, Panel, SummaryStats, YearRecord};
use defaultlab::divergence::{kl_curve_vs_r, kl_project, ProjectionOptions};
use defaultlab::hierarchy::{hier_pmf, iid_dependence_ratio, variance_decomposition, DecompositionReport};
use defaultlab::inference::{
    aic_select, fit, implied_moments, FitOptions, FitResult, FittedParams, Selection, Specification,
};
use defaultlab::models::{torri_pmf, CountDistribution, Family, ModelParams};
use defaultlab::moments::{empirical_moments, MomentSummary};
use defaultlab::numerics::Quadrature;
use defaultlab::riskmeasures::{risk_report, survival, RiskReport};
use defaultlab::simulate::{identifiability_experiment, simulate_panel, ConfusionMatrix, RngSpec};

const THREADS_VAR: &str = "DEFAULTLAB_THREADS";

#[derive(Parser)]
#[command(name = "defaultlab", version, about = "Correlated default-count models")]
struct Cli {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve model parameters from a mean default rate and pairwise correlation.
    Calibrate(CalibrateArgs),
    /// Count distribution as CSV (h, P, S).
    Pmf(DistArgs),
    /// Same table as `pmf`; S(h) = P(L >= h).
    Survival(DistArgs),
    /// Value-at-risk and expected shortfall.
    Risk(RiskArgs),
    /// KL projection of a target law onto a model family.
    Kl(KlArgs),
    /// KL to the Gaussian factor family along a grid of environmental variance ratios.
    KlCurve(KlCurveArgs),
    /// Maximum-likelihood fit of a default panel.
    Fit(FitArgs),
    /// Variance decomposition of a hierarchical specification.
    VarDecomp(VarDecompArgs),
    /// Torri parameters and tail risk along the iso-moment manifold.
    Manifold(ManifoldArgs),
    /// Monte Carlo AIC classification of simulated samples.
    Identify(IdentifyArgs),
    /// Synthetic default panel.
    Simulate(SimulateArgs),
    /// Summary statistics of a default panel.
    Summary(DataArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Davislo,
    Torri,
    Vasicek,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.02)]
    m: f64,
    #[arg(long, default_value_t = 0.08)]
    rho: f64,
    /// Idiosyncratic rate selecting a Torri branch.
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Args)]
struct DistArgs {
    /// Preset name, `family:key=value,...` or `hier-family:key=value,...`.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
}

#[derive(Args)]
struct RiskArgs {
    /// Model specs; may be repeated.
    #[arg(long)]
    model: Vec<String>,
    /// JSON produced by `calibrate` (`-` for stdin).
    #[arg(long)]
    from: Option<String>,
    /// Pool size; defaults to the calibration's, else 200.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.99")]
    alpha: Vec<f64>,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long)]
    target: String,
    /// davislo, torri or vasicek.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
}

#[derive(Args)]
struct KlCurveArgs {
    /// One-period contagion model supplying the structural parameters.
    #[arg(long)]
    structural: String,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
    r_grid: Vec<f64>,
    /// Unconditional mean default rate held fixed along the curve.
    #[arg(long, default_value_t = 0.02)]
    base_m: f64,
}

#[derive(Args)]
struct DataArgs {
    /// Delimited file with header `year,n,defaults,class`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "ALL")]
    class: String,
    #[arg(long)]
    from: Option<i32>,
    #[arg(long)]
    to: Option<i32>,
}

impl DataArgs {
    fn load(&self) -> Result<Panel, Failure> {
        let range = match (self.from, self.to) {
            (None, None) => None,
            (lo, hi) => Some((lo.unwrap_or(i32::MIN), hi.unwrap_or(i32::MAX))),
        };
        Ok(load_panel(&self.data, &self.class, range)?)
    }
}

#[derive(Args)]
struct FitArgs {
    /// Specification name, or `all` for every specification plus AIC ranking.
    #[arg(long, default_value = "all")]
    spec: String,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct VarDecompArgs {
    /// hier_davis_lo or hier_torri; fitted to the data.
    #[arg(long, required_unless_present = "params")]
    spec: Option<String>,
    /// Hierarchical parameters to use instead of fitting.
    #[arg(long, conflicts_with = "spec")]
    params: Option<String>,
    /// Representative pool size; defaults to the rounded mean pool size.
    #[arg(long)]
    n_bar: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct ManifoldArgs {
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0.02)]
    m: f64,
    #[arg(long, default_value_t = 0.08)]
    rho: f64,
    /// Explicit idiosyncratic rates.
    #[arg(long, value_delimiter = ',')]
    p_grid: Option<Vec<f64>>,
    /// Evenly spaced rates in (0, m) when no grid is given.
    #[arg(long, default_value_t = 50)]
    p_steps: usize,
    #[arg(long, default_value_t = 0.99)]
    alpha: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Counts per simulated sample.
    #[arg(long = "T", default_value_t = 100)]
    t: usize,
    /// Replications per target.
    #[arg(long = "R", default_value_t = 200)]
    r: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Target models separated by ';'; defaults to the five reference presets.
    #[arg(long, value_delimiter = ';')]
    targets: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: String,
    #[arg(long, default_value_t = 100)]
    years: usize,
    /// Pool sizes, cycled over the years.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    pools: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[arg(long, default_value_t = 1)]
    first_year: i32,
    #[arg(long, default_value = "ALL")]
    class: String,
}

/// Error with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<defaultlab::Error> for Failure {
    fn from(e: defaultlab::Error) -> Self {
        use defaultlab::Error as E;
        let code = match e {
            E::Parse { .. } | E::Validation { .. } | E::Empty(_) | E::Io(_) | E::Csv(_) => 3,
            E::QuadratureNonConvergence(_)
            | E::Optimization(_)
            | E::Infeasible(_)
            | E::Degenerate(_)
            | E::UnreachableRatio { .. } => 4,
            E::Domain(_) | E::SupportMismatch { .. } | E::UnsupportedOrder(_) => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 3,
            message: e.to_string(),
        }
    }
}

/// Command output plus an optional exit code override.
struct Output {
    text: String,
    code: u8,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, code: 0 }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn parse_params(s: &str) -> Result<FittedParams, Failure> {
    Ok(s.parse::<FittedParams>()?)
}

fn parse_model(s: &str) -> Result<ModelParams, Failure> {
    match parse_params(s)? {
        FittedParams::Model(m) => Ok(m),
        FittedParams::Hier(_) => Err(Failure::usage(format!("'{s}' must be a one-period model"))),
    }
}

fn distribution(params: &FittedParams, n: usize) -> Result<CountDistribution, Failure> {
    Ok(match params {
        FittedParams::Model(m) => m.pmf(n, Quadrature::Auto)?,
        FittedParams::Hier(h) => hier_pmf(h, n, Quadrature::Auto)?,
    })
}

#[derive(Serialize)]
struct Calibration {
    model: &'static str,
    target: CalibrationTarget,
    spec: String,
    params: ModelParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pi_n: Option<f64>,
}

fn calibrate(a: &CalibrateArgs) -> Result<Output, Failure> {
    let target = CalibrationTarget {
        n: a.n,
        m: a.m,
        rho: a.rho,
    };
    let (model, params, pi_n) = match a.model {
        ModelKind::Davislo => ("davis_lo", ModelParams::DavisLo(calibrate_davis_lo(&target, DEFAULT_TOL)?), None),
        ModelKind::Vasicek => ("vasicek", ModelParams::Vasicek(calibrate_vasicek(&target, DEFAULT_TOL)?), None),
        ModelKind::Torri => {
            let p = a.p.ok_or_else(|| Failure::usage("--model torri requires --p"))?;
            let b = calibrate_torri_at_p(&target, p, DEFAULT_TOL)?;
            ("torri", ModelParams::Torri(b.params()), Some(b.pi_n))
        }
    };
    Ok(Output::ok(json(&Calibration {
        model,
        target,
        spec: params.to_string(),
        params,
        pi_n,
    })?))
}

fn pmf_table(a: &DistArgs) -> Result<Output, Failure> {
    let dist = distribution(&parse_params(&a.model)?, a.n)?;
    let s = survival(&dist);
    let mut out = String::from("h,P,S\n");
    for (h, (p, sv)) in dist.pmf().iter().zip(&s).enumerate() {
        writeln!(out, "{h},{p},{sv}").expect("write to string");
    }
    Ok(Output::ok(out))
}

#[derive(Serialize)]
struct RiskRow {
    model: String,
    n: usize,
    #[serde(flatten)]
    report: RiskReport,
}

fn read_source(src: &str) -> Result<String, Failure> {
    if src == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        Ok(std::fs::read_to_string(src)?)
    }
}

fn risk(a: &RiskArgs) -> Result<Output, Failure> {
    let mut models: Vec<(String, FittedParams, Option<usize>)> = Vec::new();
    if let Some(src) = &a.from {
        let v: serde_json::Value = serde_json::from_str(&read_source(src)?)?;
        let spec = v["spec"]
            .as_str()
            .ok_or_else(|| Failure::usage("calibration JSON lacks a 'spec' field"))?;
        let n = v["target"]["n"].as_u64().map(|n| n as usize);
        models.push((spec.to_string(), parse_params(spec)?, n));
    }
    for s in &a.model {
        models.push((s.clone(), parse_params(s)?, None));
    }
    if models.is_empty() {
        return Err(Failure::usage("give at least one --model or --from"));
    }
    let mut rows = Vec::new();
    for (name, params, cal_n) in &models {
        let n = a.n.or(*cal_n).unwrap_or(200);
        let dist = distribution(params, n)?;
        for &alpha in &a.alpha {
            rows.push(RiskRow {
                model: name.clone(),
                n,
                report: risk_report(&dist, alpha)?,
            });
        }
    }
    Ok(Output::ok(json(&rows)?))
}

fn kl(a: &KlArgs) -> Result<Output, Failure> {
    let target = distribution(&parse_params(&a.target)?, a.n)?;
    let family: Family = a.family.parse()?;
    let res = kl_project(&target, family, &ProjectionOptions::default())?;
    let code = if res.converged { 0 } else { 4 };
    Ok(Output {
        text: json(&res)?,
        code,
    })
}

fn kl_curve(a: &KlCurveArgs) -> Result<Output, Failure> {
    let structural = parse_model(&a.structural)?;
    let points = kl_curve_vs_r(&structural, a.n, &a.r_grid, a.base_m, &ProjectionOptions::default());
    let mut out = String::from("r,kl,mu,sigma,vasicek_p,vasicek_rho_a,error\n");
    for pt in &points {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            pt.r,
            opt(pt.kl),
            opt(pt.mu),
            opt(pt.sigma),
            opt(pt.vasicek.map(|v| v.p)),
            opt(pt.vasicek.map(|v| v.rho_a)),
            pt.error.as_deref().unwrap_or("").replace(',', ";"),
        )
        .expect("write to string");
    }
    Ok(Output::ok(out))
}

#[derive(Serialize)]
struct FitReport {
    #[serde(flatten)]
    fit: FitResult,
    implied_moments: MomentSummary,
    /// Dependence share of the scaled-count variance; one-period specs only.
    #[serde(skip_serializing_if = "Option::is_none")]
    r_data: Option<f64>,
}

#[derive(Serialize)]
struct PanelFit {
    class: String,
    years: usize,
    n_bar: f64,
    empirical_moments: MomentSummary,
    fits: Vec<FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<Selection>,
}

fn representative_pool(panel: &Panel) -> usize {
    panel.n_bar().round() as usize
}

fn fit_cmd(a: &FitArgs) -> Result<Output, Failure> {
    let panel = a.data.load()?;
    let specs: Vec<Specification> = if a.spec.eq_ignore_ascii_case("all") {
        Specification::ALL.to_vec()
    } else {
        vec![a.spec.parse()?]
    };
    let stats = summary_stats(&panel);
    let opts = FitOptions::default();
    let mut fits = Vec::new();
    for spec in specs {
        let f = fit(spec, &panel, &opts)?;
        let implied = implied_moments(&f.params, &panel)?;
        let r_data = if spec.is_hierarchical() || !stats.variance_defined || stats.scaled_variance <= 0.0 {
            None
        } else {
            Some(iid_dependence_ratio(&implied, representative_pool(&panel), stats.scaled_variance)?)
        };
        fits.push(FitReport {
            fit: f,
            implied_moments: implied,
            r_data,
        });
    }
    let selection = if fits.len() > 1 {
        let plain: Vec<FitResult> = fits.iter().map(|f| f.fit.clone()).collect();
        Some(aic_select(&plain)?)
    } else {
        None
    };
    let converged = fits.iter().all(|f| f.fit.converged);
    let report = PanelFit {
        class: panel.class().to_string(),
        years: panel.len(),
        n_bar: panel.n_bar(),
        empirical_moments: empirical_moments(&panel)?,
        fits,
        selection,
    };
    Ok(Output {
        text: json(&report)?,
        code: if converged { 0 } else { 4 },
    })
}

#[derive(Serialize)]
struct DecompOutput {
    params: FittedParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    nll: Option<f64>,
    n_bar: usize,
    #[serde(flatten)]
    report: DecompositionReport,
}

fn var_decomp(a: &VarDecompArgs) -> Result<Output, Failure> {
    let panel = a.data.load()?;
    let (params, nll, converged) = match (&a.params, &a.spec) {
        (Some(p), _) => (parse_params(p)?, None, true),
        (None, Some(s)) => {
            let spec: Specification = s.parse()?;
            if !spec.is_hierarchical() {
                return Err(Failure::usage(format!("'{s}' is not a hierarchical specification")));
            }
            let f = fit(spec, &panel, &FitOptions::default())?;
            (f.params, Some(f.nll), f.converged)
        }
        (None, None) => return Err(Failure::usage("give --spec or --params")),
    };
    let FittedParams::Hier(hp) = params else {
        return Err(Failure::usage("variance decomposition needs hierarchical parameters"));
    };
    let n_bar = a.n_bar.unwrap_or_else(|| representative_pool(&panel));
    let stats: SummaryStats = summary_stats(&panel);
    let report = variance_decomposition(&hp, n_bar, stats.scaled_variance, Quadrature::Auto)?;
    Ok(Output {
        text: json(&DecompOutput {
            params,
            nll,
            n_bar,
            report,
        })?,
        code: if converged { 0 } else { 4 },
    })
}

fn manifold(a: &ManifoldArgs) -> Result<Output, Failure> {
    let target = CalibrationTarget {
        n: a.n,
        m: a.m,
        rho: a.rho,
    };
    target.validate()?;
    let grid = match &a.p_grid {
        Some(g) => g.clone(),
        None => {
            let k = a.p_steps.max(1);
            (1..=k).map(|i| a.m * i as f64 / (k + 1) as f64).collect()
        }
    };
    let mut out = String::from("p,u,v,pi_n,var,es\n");
    for pt in trace_torri_manifold(&target, &grid) {
        match pt.branch {
            Some(b) => {
                let r = risk_report(&torri_pmf(&b.params(), a.n), a.alpha)?;
                writeln!(out, "{},{},{},{},{},{}", pt.p, b.u, b.v, b.pi_n, r.var, r.es)
            }
            None => writeln!(out, "{},,,,,", pt.p),
        }
        .expect("write to string");
    }
    Ok(Output::ok(out))
}

fn identify(a: &IdentifyArgs) -> Result<Output, Failure> {
    let targets: Vec<(String, ModelParams)> = match &a.targets {
        Some(names) => names
            .iter()
            .map(|s| Ok((s.clone(), parse_model(s)?)))
            .collect::<Result<_, Failure>>()?,
        None => Preset::ALL
            .iter()
            .map(|p| Ok((p.name().to_string(), p.params()?)))
            .collect::<Result<_, Failure>>()?,
    };
    let cm = identifiability_experiment(&targets, a.n, a.t, a.r, RngSpec::new(a.seed), &FitOptions::default())?;
    let text = match a.format {
        Format::Json => json(&cm)?,
        Format::Csv => confusion_csv(&cm),
    };
    let code = if cm.total_failures() == 0 { 0 } else { 4 };
    Ok(Output { text, code })
}

fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("target");
    for c in &cm.cols {
        write!(out, ",{c}").expect("write to string");
    }
    out.push_str(",failures\n");
    for (i, row) in cm.rows.iter().enumerate() {
        out.push_str(row);
        for r in &cm.rates[i] {
            write!(out, ",{r}").expect("write to string");
        }
        writeln!(out, ",{}", cm.failures[i]).expect("write to string");
    }
    out
}

fn simulate_cmd(a: &SimulateArgs) -> Result<Output, Failure> {
    if a.years == 0 {
        return Err(Failure::usage("--years must be at least 1"));
    }
    let params = parse_params(&a.spec)?;
    let pools: Vec<usize> = a.pools.iter().copied().cycle().take(a.years).collect();
    let panel = simulate_panel(
        &params,
        &pools,
        RngSpec {
            seed: a.seed,
            stream: a.stream,
        },
    )?;
    let records: Vec<YearRecord> = panel
        .records()
        .iter()
        .map(|r| YearRecord {
            year: a.first_year + r.year - 1,
            class: a.class.clone(),
            ..r.clone()
        })
        .collect();
    let mut buf = Vec::new();
    write_records(&mut buf, &records)?;
    Ok(Output::ok(String::from_utf8(buf).expect("csv output is UTF-8")))
}

fn summary(a: &DataArgs) -> Result<Output, Failure> {
    Ok(Output::ok(json(&summary_stats(&a.load()?))?))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("{THREADS_VAR}='{raw}' is not a non-negative integer")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Pmf(a) | Command::Survival(a) => pmf_table(a),
        Command::Risk(a) => risk(a),
        Command::Kl(a) => kl(a),
        Command::KlCurve(a) => kl_curve(a),
        Command::Fit(a) => fit_cmd(a),
        Command::VarDecomp(a) => var_decomp(a),
        Command::Manifold(a) => manifold(a),
        Command::Identify(a) => identify(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Summary(a) => summary(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|out| {
        match &cli.out {
            Some(path) => std::fs::write(path, &out.text)?,
            None => io::stdout().write_all(out.text.as_bytes())?,
        }
        if out.code == 4 {
            eprintln!("warning: numerical optimization did not fully converge");
        }
        Ok(out.code)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
