//! `posratio`: forensic re-analysis of positivity-ratio studies.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 when the
//! input data are unreadable or unusable.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use posratio_core::claims::ClaimsConfig;
use posratio_core::io::{
    curves_tsv, fit_scatter, parse_records, parse_summaries, records_to_scatter, transform_csv,
    AlternateVerdict, ClaimsResults, FitResults, LabeledForensics,
};
use posratio_core::simulation::{calibrate_linear, default_specs};
use posratio_core::{
    audit, equal_variance_sensitivity, evaluate_all, power_comparison, AnalysisReport,
    LabeledSummary, Loaded, ReportResults, ScatterData, SummaryStats, XKind,
};

use config::{load_params, ClaimsParams, FitParams, ForensicsParams, SimulateParams};

#[derive(Parser)]
#[command(name = "posratio", version, about = "Forensic re-analysis of positivity-ratio studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit published two-group summaries against a critical ratio.
    Forensics(ForensicsArgs),
    /// Linear and quadratic fits against ratio and fraction, with curve samples.
    Fit(FitArgs),
    /// Evaluate the claim ladder on raw observations.
    Claims(ClaimsArgs),
    /// Power of the dichotomized design against direct nonlinearity tests.
    Simulate(SimulateArgs),
    /// Append ratio and fraction columns to a (p,n,outcome) file.
    Transform(TransformArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config, or a previous JSON report whose parameters are reused.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum XVar {
    Ratio,
    Fraction,
}

impl From<XVar> for XKind {
    fn from(v: XVar) -> Self {
        match v {
            XVar::Ratio => XKind::Ratio,
            XVar::Fraction => XKind::Fraction,
        }
    }
}

#[derive(Args)]
struct ForensicsArgs {
    #[command(flatten)]
    common: Common,
    /// CSV with columns label,n1,n2,mean1,mean2,t.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, requires_all = ["n2", "mean1", "mean2", "t"])]
    n1: Option<u32>,
    #[arg(long)]
    n2: Option<u32>,
    #[arg(long)]
    mean1: Option<f64>,
    #[arg(long)]
    mean2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Impurity allowance for the headline verdict.
    #[arg(long)]
    allowance: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    /// Predictor scale of an (x,y) input file.
    #[arg(long, value_enum)]
    x_var: Option<XVar>,
    /// Write curve samples (TSV) here.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Curve samples per parameterization (at least 200).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct ClaimsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    x_var: Option<XVar>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    upper_threshold: Option<f64>,
    /// Seed of the permutation test.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    permutations: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Outcome cut that defines the two groups.
    #[arg(long)]
    threshold: Option<f64>,
    /// Run replications on one thread. Output is identical.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Forensics(a) => forensics(a),
        Command::Fit(a) => fit(a),
        Command::Claims(a) => claims(a),
        Command::Simulate(a) => simulate(a),
        Command::Transform(a) => transform(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_input(path: &Path) -> Outcome<Vec<u8>> {
    std::fs::read(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(data)
}

fn emit(text: &str, output: Option<&Path>) -> Outcome<()> {
    match output {
        Some(p) => std::fs::write(p, text)
            .with_context(|| format!("cannot write {}", p.display()))
            .map_err(data),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report(
    input: &[u8],
    params: &impl serde::Serialize,
    results: ReportResults,
    output: Option<&Path>,
) -> Outcome<()> {
    let parameters = serde_json::to_value(params).map_err(usage)?;
    let json = AnalysisReport::new(input, parameters, results).to_json().map_err(data)?;
    emit(&json, output)
}

fn load_input(path: &Path, x_kind: XKind) -> Outcome<(Vec<u8>, Loaded)> {
    let bytes = read_input(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| data(anyhow!("{} is not UTF-8", path.display())))?;
    let loaded = parse_records(&text, x_kind)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data)?;
    Ok((bytes, loaded))
}

fn forensics(a: ForensicsArgs) -> Outcome<()> {
    let mut p: ForensicsParams = load_params(a.common.config.as_deref())?;
    if let Some(path) = &a.input {
        let bytes = read_input(path)?;
        let text = String::from_utf8(bytes).map_err(|_| data(anyhow!("input is not UTF-8")))?;
        p.samples = parse_summaries(&text)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(data)?;
    }
    if let (Some(n1), Some(n2), Some(m1), Some(m2), Some(t)) = (a.n1, a.n2, a.mean1, a.mean2, a.t) {
        let stats = SummaryStats::new(n1, n2, m1, m2, t).map_err(usage)?;
        p.samples.push(LabeledSummary { label: "command-line".into(), stats });
    }
    if let Some(t) = a.threshold {
        p.forensics.threshold = t;
    }
    if let Some(v) = a.allowance {
        p.forensics.impurity_allowance = v;
    }
    if p.samples.is_empty() {
        return Err(usage(anyhow!(
            "no samples: pass --input, --n1/--n2/--mean1/--mean2/--t, or a config with [[samples]]"
        )));
    }

    let mut entries = Vec::with_capacity(p.samples.len());
    for s in &p.samples {
        let report = audit(&s.stats, &p.forensics)
            .with_context(|| format!("sample '{}'", s.label))
            .map_err(data)?;
        let sensitivity = if report.implied_sd.is_some() {
            equal_variance_sensitivity(&s.stats, &p.forensics.sd_ratios, p.forensics.threshold)
                .map_err(data)?
        } else {
            Vec::new()
        };
        entries.push(LabeledForensics { label: s.label.clone(), report, sensitivity });
    }
    // The samples are part of the parameters, so they are hashed as input.
    let input = serde_json::to_vec(&p.samples).map_err(data)?;
    emit_report(&input, &p, ReportResults::Forensics(entries), a.common.output.as_deref())
}

/// The data in the requested scale plus the other scale when derivable.
fn both_scales(loaded: &Loaded, primary: XKind) -> Outcome<Vec<(ScatterData, usize)>> {
    let other = match primary {
        XKind::Ratio => Some(XKind::Fraction),
        XKind::Fraction => Some(XKind::Ratio),
        XKind::Raw => None,
    };
    let convert = |kind: XKind| -> Outcome<(ScatterData, usize)> {
        match loaded {
            Loaded::Records(r) => records_to_scatter(r, kind).map_err(data),
            Loaded::Scatter(s) if s.x_kind == kind => Ok((s.clone(), 0)),
            Loaded::Scatter(s) => match kind {
                XKind::Fraction => s.to_fraction().map(|d| (d, 0)).map_err(data),
                XKind::Ratio => s.to_ratio().map_err(data),
                XKind::Raw => Err(usage(anyhow!("cannot convert to raw scale"))),
            },
        }
    };
    let mut out = vec![convert(primary)?];
    if let Some(k) = other {
        out.push(convert(k)?);
    }
    Ok(out)
}

fn fit(a: FitArgs) -> Outcome<()> {
    let mut p: FitParams = load_params(a.common.config.as_deref())?;
    if let Some(x) = a.x_var {
        p.x_var = x.into();
    }
    if let Some(n) = a.samples {
        p.curve_samples = n;
    }
    if p.curve_samples < 200 {
        return Err(usage(anyhow!("--samples must be at least 200")));
    }
    let (bytes, loaded) = load_input(&a.input, p.x_var)?;
    // Ratio first, then fraction, whatever the input scale.
    let primary = match &loaded {
        Loaded::Records(_) => XKind::Ratio,
        Loaded::Scatter(s) => s.x_kind,
    };
    let mut scales = both_scales(&loaded, primary)?;
    scales.sort_by_key(|(d, _)| d.x_kind != XKind::Ratio);
    let mut fits = Vec::new();
    for (d, excluded) in &scales {
        fits.push(
            fit_scatter(d, *excluded)
                .with_context(|| format!("{} fit", d.x_kind))
                .map_err(data)?,
        );
    }
    let results = FitResults { fits };
    if let Some(path) = &a.curves {
        let tsv = curves_tsv(&results, p.curve_samples).map_err(data)?;
        emit(&tsv, Some(path))?;
    }
    emit_report(&bytes, &p, ReportResults::Fit(results), a.common.output.as_deref())
}

fn claims_config(base: &ClaimsConfig, kind: XKind) -> Outcome<ClaimsConfig> {
    match kind {
        XKind::Fraction => base.in_fraction_units().map_err(usage),
        _ => Ok(*base),
    }
}

fn claims(a: ClaimsArgs) -> Outcome<()> {
    let mut p: ClaimsParams = load_params(a.common.config.as_deref())?;
    if let Some(x) = a.x_var {
        p.x_var = x.into();
    }
    if let Some(v) = a.alpha {
        p.claims.alpha = v;
    }
    if let Some(t) = a.threshold {
        p.claims = p.claims.for_threshold(t);
    }
    if let Some(t) = a.upper_threshold {
        p.upper_threshold = t;
    }
    if let Some(s) = a.seed {
        p.claims.changepoint.seed = s;
    }
    if let Some(n) = a.permutations {
        p.claims.changepoint.permutations = n;
    }
    p.claims.validate().map_err(usage)?;

    let (bytes, loaded) = load_input(&a.input, p.x_var)?;
    let primary_kind = match &loaded {
        Loaded::Records(_) => p.x_var,
        Loaded::Scatter(s) => s.x_kind,
    };
    let scales = both_scales(&loaded, primary_kind)?;
    let (data_primary, _) = &scales[0];

    let lower = claims_config(&p.claims, primary_kind)?;
    let upper = claims_config(&p.claims.for_threshold(p.upper_threshold), primary_kind)?;
    let primary = evaluate_all(data_primary, &lower).map_err(data)?;
    let upper = evaluate_all(data_primary, &upper).map_err(data)?;
    let alternate_nonlinearity = match scales.get(1) {
        Some((alt, _)) => {
            let cfg = claims_config(&p.claims, alt.x_kind)?;
            let report = evaluate_all(alt, &cfg).map_err(data)?;
            Some(AlternateVerdict { x_kind: alt.x_kind, verdict: report.verdict(6).clone() })
        }
        None => None,
    };
    let results = ClaimsResults { primary, upper, alternate_nonlinearity };
    emit_report(&bytes, &p, ReportResults::Claims(Box::new(results)), a.common.output.as_deref())
}

fn simulate(a: SimulateArgs) -> Outcome<()> {
    let mut p: SimulateParams = load_params(a.common.config.as_deref())?;
    if let Some(s) = a.seed {
        p.power.master_seed = s;
    }
    if let Some(r) = a.replications {
        p.power.replications = r;
    }
    if let Some(n) = a.permutations {
        p.power.permutations = n;
    }
    if let Some(v) = a.alpha {
        p.power.alpha = v;
    }
    if let Some(t) = a.threshold {
        p.power.threshold_y = t;
    }
    p.power.parallel = !a.sequential;
    if p.specs.is_empty() {
        p.specs = default_specs();
        if p.calibrate_linear {
            let step = p
                .specs
                .iter()
                .find(|s| s.shape.name() == "step")
                .cloned()
                .expect("default specs include a step");
            let linear = calibrate_linear(&step, p.power.threshold_y).map_err(data)?;
            p.specs.push(linear);
        }
    }
    let table = power_comparison(&p.specs, &p.power).map_err(usage)?;
    let input = serde_json::to_vec(&p.specs).map_err(data)?;
    emit_report(&input, &p, ReportResults::Power(table), a.common.output.as_deref())
}

fn transform(a: TransformArgs) -> Outcome<()> {
    let (_, loaded) = load_input(&a.input, XKind::Ratio)?;
    let Loaded::Records(records) = loaded else {
        return Err(data(anyhow!("transform needs a (p,n,outcome) file")));
    };
    emit(&transform_csv(&records), a.output.as_deref())
}
