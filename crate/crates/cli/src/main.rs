//! `ordcare`: fit, check and interpret the care-level ordinal model from the command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ordcare::data::{write_count_table, DataFormat};
use ordcare::inference::{cost_report, write_curves_csv, CostReport};
use ordcare::model::outcome_probabilities;
use ordcare::sampler::{load_posterior, write_posterior, PosteriorSidecar};
use ordcare::selection::{scan_candidates, CandidateGrid};
use ordcare::simulate::{load_design, uniform_design};
use ordcare::validation::{
    cell_checks, chance_correct_rate, discrepancy_pvalue, error_rate, replicate_datasets, Measure,
    ValidationReport,
};
use ordcare::{
    derivative_table, load_dataset, posterior_summary, run_mcmc, simulate_dataset, CareLevel,
    CostSchedule, Dataset, ModelSpec, PosteriorSamples, Priors, RawCoefficients, SamplerConfig,
    Scenario, Thresholds, TrueParameters,
};

#[derive(Parser, Debug)]
#[command(
    name = "ordcare",
    version,
    about = "Robust Bayesian ordinal regression for care-level data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Fit a model and write posterior draws, summaries and diagnostics.
    Fit(FitArgs),
    /// Generate a synthetic count-table dataset from known parameters.
    Simulate(SimulateArgs),
    /// Fit every candidate of a model grid and rank by WAIC.
    Scan(ScanArgs),
    /// Posterior predictive checks, cell coverage and error rate of a fit.
    Validate(ValidateArgs),
    /// Threshold-curve derivatives and curve points for plotting.
    Curves(CurvesArgs),
    /// Expected cost per patient under the care scenarios.
    Cost(CostArgs),
    /// Posterior-mean outcome probabilities at one (intended, recommended) point.
    Predict(PredictArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct SamplerArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Retained draws summed over chains.
    #[arg(long)]
    draws: Option<usize>,
    /// Burn-in iterations per chain.
    #[arg(long, default_value_t = 10_000)]
    burnin: usize,
}

impl SamplerArgs {
    fn config(&self, default_draws: usize) -> SamplerConfig {
        SamplerConfig {
            chains: self.chains,
            kept_draws_total: self.draws.unwrap_or(default_draws),
            burn_in: self.burnin,
            seed: self.seed,
            ..SamplerConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct FitArgs {
    /// Dataset (long format or count table).
    #[arg(long)]
    data: PathBuf,
    /// Model spec JSON; defaults to the selected structure.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Prior overrides JSON.
    #[arg(long)]
    priors: Option<PathBuf>,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Exit with status 3 when any R-hat exceeds this.
    #[arg(long, default_value_t = 1.05)]
    rhat_max: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SimulateArgs {
    /// Parameter JSON: `beta` (raw scale), `theta` (free thresholds), `sigma`, `alpha`, optional `spec`.
    #[arg(long)]
    params: PathBuf,
    /// Design CSV with columns intended,recommended,count.
    #[arg(long, conflicts_with = "per_cell")]
    design: Option<PathBuf>,
    /// Uniform design with this many observations per (intended, recommended) pair.
    #[arg(long)]
    per_cell: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output count-table CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
enum GridKind {
    /// One axis at a time around the selected structure.
    Axes,
    /// Full cross product of terms, sigma structure and contamination.
    Full,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ScanArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    priors: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GridKind::Axes)]
    grid: GridKind,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Locates a fit artifact and optionally checks it against the inputs at hand.
#[derive(Args, Debug, Clone, Serialize)]
struct FitRef {
    /// Directory written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Dataset to analyze; must match the fitted data. Defaults to the fitted data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Spec the fit must have been made with.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory; defaults to the fit directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ValidateArgs {
    #[command(flatten)]
    fit: FitRef,
    /// Number of replicated datasets (at most the number of draws).
    #[arg(long, default_value_t = 100_000)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CurvesArgs {
    #[command(flatten)]
    fit: FitRef,
    /// Draws written to the curve-points CSV.
    #[arg(long, default_value_t = 1000)]
    subset: usize,
    /// Points on the x1 grid.
    #[arg(long, default_value_t = 61)]
    grid: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CostScheduleArgs {
    #[arg(long, default_value_t = 0.0)]
    cost_self: f64,
    #[arg(long, default_value_t = 2000.0)]
    cost_primary: f64,
    #[arg(long, default_value_t = 3000.0)]
    cost_ooh: f64,
    #[arg(long, default_value_t = 4500.0)]
    cost_ed: f64,
    /// Telephone consultation fee.
    #[arg(long, default_value_t = 96.0)]
    fee: f64,
    /// Add the consultation fee to every patient.
    #[arg(long)]
    include_fee: bool,
}

impl CostScheduleArgs {
    fn schedule(&self) -> CostSchedule {
        CostSchedule {
            level_costs: vec![
                self.cost_self,
                self.cost_primary,
                self.cost_ooh,
                self.cost_ed,
            ],
            fee: self.fee,
            include_consultation: self.include_fee,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct CostArgs {
    #[command(flatten)]
    fit: FitRef,
    #[command(flatten)]
    costs: CostScheduleArgs,
    /// Scenario to print: intended, recommendation, final, full-compliance, observed or all.
    #[arg(long, default_value = "all")]
    scenario: String,
}

#[derive(Args, Debug, Clone, Serialize)]
struct PredictArgs {
    #[command(flatten)]
    fit: FitRef,
    #[arg(long)]
    x1: usize,
    #[arg(long)]
    x2: usize,
}

/// Reproducibility record embedded in every JSON output.
#[derive(Debug, Clone, Serialize)]
struct RunConfig<'a> {
    tool_version: &'static str,
    #[serde(flatten)]
    command: &'a Command,
    #[serde(rename = "resolved_spec", skip_serializing_if = "Option::is_none")]
    spec: Option<&'a ModelSpec>,
    #[serde(rename = "resolved_priors", skip_serializing_if = "Option::is_none")]
    priors: Option<&'a Priors>,
    #[serde(rename = "resolved_sampler", skip_serializing_if = "Option::is_none")]
    sampler: Option<&'a SamplerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_schedule: Option<&'a CostSchedule>,
}

impl<'a> RunConfig<'a> {
    fn new(command: &'a Command) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            spec: None,
            priors: None,
            sampler: None,
            cost_schedule: None,
        }
    }

    fn value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

/// Exit statuses: 1 usage or configuration, 2 data, 3 convergence.
#[derive(Debug)]
struct Convergence(String);

impl std::fmt::Display for Convergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Convergence {}

fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Convergence>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<ordcare::Error>() {
            if e.is_convergence_error() {
                return 3;
            }
            if e.is_data_error() || matches!(e, ordcare::Error::Io { .. } | ordcare::Error::Json(_))
            {
                return 2;
            }
            return 1;
        }
        if cause.downcast_ref::<io::Error>().is_some()
            || cause.downcast_ref::<serde_json::Error>().is_some()
        {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::Fit(a) => cmd_fit(command, a),
        Command::Simulate(a) => cmd_simulate(command, a),
        Command::Scan(a) => cmd_scan(command, a),
        Command::Validate(a) => cmd_validate(command, a),
        Command::Curves(a) => cmd_curves(command, a),
        Command::Cost(a) => cmd_cost(command, a),
        Command::Predict(a) => cmd_predict(command, a),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| ordcare::Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let v = serde_json::from_str(&text).map_err(ordcare::Error::from)?;
    Ok(v)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(path: &Path) -> Result<Dataset> {
    let format = DataFormat::detect(path)?;
    load_dataset(path, format).with_context(|| format!("loading {}", path.display()))
}

fn load_spec(path: Option<&Path>, k: usize) -> Result<ModelSpec> {
    match path {
        Some(p) => read_json(p).with_context(|| format!("reading spec {}", p.display())),
        None => Ok(ModelSpec::selected(k)),
    }
}

fn load_priors(path: Option<&Path>) -> Result<Priors> {
    match path {
        Some(p) => read_json(p).with_context(|| format!("reading priors {}", p.display())),
        None => Ok(Priors::default()),
    }
}

fn stdout() -> io::StdoutLock<'static> {
    io::stdout().lock()
}

fn cmd_fit(command: &Command, a: &FitArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let spec = load_spec(a.spec.as_deref(), data.k())?;
    let priors = load_priors(a.priors.as_deref())?;
    let config = a.sampler.config(SamplerConfig::default().kept_draws_total);
    let (samples, diag) = run_mcmc(&data, &spec, &priors, &config)?;

    let mut rc = RunConfig::new(command);
    rc.spec = Some(&spec);
    rc.priors = Some(&priors);
    rc.sampler = Some(&config);
    let rc = rc.value();

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_posterior(&a.out, &samples, rc.clone())?;
    let summary = posterior_summary(&samples)?;
    summary.write_csv(a.out.join("summary.csv"))?;
    write_json(
        &a.out.join("diagnostics.json"),
        &serde_json::json!({ "diagnostics": diag, "run_config": rc }),
    )?;

    let mut out = stdout();
    writeln!(
        out,
        "{} draws from {} chains; model {}",
        samples.len(),
        samples.n_chains(),
        spec.terms_label()
    )?;
    summary.render(&mut out)?;
    writeln!(out, "{:<12} {:>9} {:>9}", "parameter", "rhat", "ess")?;
    for ((name, r), e) in diag.names.iter().zip(&diag.rhat).zip(&diag.ess) {
        writeln!(out, "{name:<12} {r:>9.4} {e:>9.0}")?;
    }
    if diag.min_ess() < 1000.0 {
        eprintln!(
            "warning: minimum effective sample size {:.0} is below 1000",
            diag.min_ess()
        );
    }
    if diag.max_rhat() > a.rhat_max {
        return Err(anyhow!(Convergence(format!(
            "max R-hat {:.4} exceeds {}",
            diag.max_rhat(),
            a.rhat_max
        ))));
    }
    Ok(())
}

/// Parameters of `simulate`, coefficients on the raw care-level scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SimulationParams {
    #[serde(default)]
    spec: Option<ModelSpec>,
    beta: Vec<f64>,
    #[serde(default)]
    theta: Vec<f64>,
    sigma: Vec<f64>,
    #[serde(default)]
    alpha: f64,
}

fn cmd_simulate(command: &Command, a: &SimulateArgs) -> Result<()> {
    let p: SimulationParams =
        read_json(&a.params).with_context(|| format!("reading {}", a.params.display()))?;
    let spec = p.spec.clone().unwrap_or_else(|| ModelSpec::selected(4));
    let k = spec.k();
    let truth = TrueParameters {
        beta_raw: RawCoefficients::new(spec.terms().to_vec(), p.beta.clone())?,
        thresholds: Thresholds::new(k, &p.theta)?,
        sigma: p.sigma.clone(),
        alpha: p.alpha,
        spec,
    };
    let design = match (&a.design, a.per_cell) {
        (Some(path), _) => load_design(path)?,
        (None, Some(n)) => uniform_design(k, n),
        (None, None) => bail!("one of --design or --per-cell is required"),
    };
    let data = simulate_dataset(&truth, &design, a.seed)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_count_table(&a.out, &data.count_table())?;
    let rc = RunConfig::new(command).value();
    let sidecar = PathBuf::from(format!("{}.json", a.out.display()));
    write_json(
        &sidecar,
        &serde_json::json!({ "parameters": truth, "run_config": rc }),
    )?;
    writeln!(
        stdout(),
        "wrote {} observations to {}",
        data.n(),
        a.out.display()
    )?;
    Ok(())
}

fn cmd_scan(command: &Command, a: &ScanArgs) -> Result<()> {
    let data = load_data(&a.data)?;
    let priors = load_priors(a.priors.as_deref())?;
    let config = a.sampler.config(20_000);
    let grid = match a.grid {
        GridKind::Axes => CandidateGrid::axes(data.k())?,
        GridKind::Full => CandidateGrid::full(data.k())?,
    };
    let table = scan_candidates(&data, &grid, &priors, &config)?;

    let mut rc = RunConfig::new(command);
    rc.priors = Some(&priors);
    rc.sampler = Some(&config);
    fs::create_dir_all(&a.out)?;
    table.write_csv(a.out.join("scan.csv"))?;
    write_json(
        &a.out.join("scan.json"),
        &serde_json::json!({ "scan": table, "run_config": rc.value() }),
    )?;
    table.render(stdout())?;
    Ok(())
}

/// A loaded fit together with the dataset it is analyzed against.
struct Loaded {
    samples: PosteriorSamples,
    sidecar: PosteriorSidecar,
    data: Dataset,
    out: PathBuf,
}

fn load_fit(r: &FitRef) -> Result<Loaded> {
    let (samples, sidecar) = load_posterior(&r.fit)
        .with_context(|| format!("loading fit artifact from {}", r.fit.display()))?;
    if let Some(path) = &r.spec {
        let spec: ModelSpec = read_json(path)?;
        if spec != sidecar.spec {
            return Err(ordcare::Error::StaleArtifact(format!(
                "{} was fitted with `{}` ({}), not the requested `{}` ({})",
                r.fit.display(),
                sidecar.spec.terms_label(),
                sidecar.spec.sigma_structure().name(),
                spec.terms_label(),
                spec.sigma_structure().name()
            ))
            .into());
        }
    }
    let data = match &r.data {
        Some(path) => {
            let d = load_data(path)?;
            if d.count_table() != sidecar.data {
                return Err(ordcare::Error::StaleArtifact(format!(
                    "{} differs from the data {} was fitted to",
                    path.display(),
                    r.fit.display()
                ))
                .into());
            }
            d
        }
        None => sidecar.data.to_dataset()?,
    };
    let out = r.out.clone().unwrap_or_else(|| r.fit.clone());
    fs::create_dir_all(&out)?;
    Ok(Loaded {
        samples,
        sidecar,
        data,
        out,
    })
}

fn cmd_validate(command: &Command, a: &ValidateArgs) -> Result<()> {
    let l = load_fit(&a.fit)?;
    let reps = replicate_datasets(&l.samples, &l.data, a.replicates, a.seed)?;
    let cells = cell_checks(&reps, &l.data)?;
    let mut measures: Vec<Measure> = (0..l.data.k()).map(Measure::CountAt).collect();
    measures.extend([Measure::Mean, Measure::Sd]);
    let pvalues = measures
        .iter()
        .map(|&m| Ok((m.name(), discrepancy_pvalue(&reps, &l.data, m)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = ValidationReport {
        replicates: reps.len(),
        seed: a.seed,
        coverage: cells.coverage.clone(),
        pvalues,
        error_rate: error_rate(&l.samples, &l.data)?,
        chance_correct_rate: chance_correct_rate(l.data.k()),
    };
    let mut rc = RunConfig::new(command);
    rc.spec = Some(&l.sidecar.spec);
    cells.write_csv(l.out.join("cells.csv"))?;
    write_json(
        &l.out.join("validation.json"),
        &serde_json::json!({ "validation": report, "run_config": rc.value() }),
    )?;
    report.render(stdout())?;
    Ok(())
}

fn cmd_curves(command: &Command, a: &CurvesArgs) -> Result<()> {
    let l = load_fit(&a.fit)?;
    let table = derivative_table(&l.samples)?;
    write_curves_csv(&l.samples, a.subset, a.grid, l.out.join("curves.csv"))?;
    let mut rc = RunConfig::new(command);
    rc.spec = Some(&l.sidecar.spec);
    write_json(
        &l.out.join("derivatives.json"),
        &serde_json::json!({ "derivatives": table, "run_config": rc.value() }),
    )?;
    table.render(stdout())?;
    Ok(())
}

fn cmd_cost(command: &Command, a: &CostArgs) -> Result<()> {
    let selected = match a.scenario.as_str() {
        "all" => None,
        s => Some(Scenario::parse(s).ok_or_else(|| anyhow!("unknown scenario `{s}`"))?),
    };
    let l = load_fit(&a.fit)?;
    let schedule = a.costs.schedule();
    let report: CostReport = cost_report(&l.samples, &l.data, &schedule)?;
    let mut rc = RunConfig::new(command);
    rc.spec = Some(&l.sidecar.spec);
    rc.cost_schedule = Some(&schedule);
    write_json(
        &l.out.join("cost.json"),
        &serde_json::json!({ "cost": report, "run_config": rc.value() }),
    )?;
    match selected {
        None => report.render(stdout())?,
        Some(s) => {
            let e = report.scenario(s).expect("every scenario is reported");
            writeln!(
                stdout(),
                "{:<16} {:>9.1}  ({:.1}, {:.1})",
                s.name(),
                e.mean,
                e.hpd.lo,
                e.hpd.hi
            )?;
        }
    }
    Ok(())
}

fn cmd_predict(command: &Command, a: &PredictArgs) -> Result<()> {
    let l = load_fit(&a.fit)?;
    let k = l.sidecar.spec.k();
    let x1 = CareLevel::new(a.x1, k).ok_or_else(|| anyhow!("--x1 {} outside 0..{k}", a.x1))?;
    let x2 = CareLevel::new(a.x2, k).ok_or_else(|| anyhow!("--x2 {} outside 0..{k}", a.x2))?;
    let s = &l.samples;
    let mut sum = vec![0.0; k];
    for i in s.canonical_order() {
        let p = s.parameters(i);
        let mu = s.model.mean(&p.beta, x1.as_f64(), x2.as_f64())?;
        let sigma = p.sigma[l.sidecar.spec.sigma_structure().group(x1.get(), x2.get())];
        let probs = outcome_probabilities(mu, sigma, p.alpha, &p.thresholds)?;
        sum.iter_mut().zip(probs).for_each(|(acc, v)| *acc += v);
    }
    let probs: Vec<f64> = sum.iter().map(|v| v / s.len() as f64).collect();
    let mut rc = RunConfig::new(command);
    rc.spec = Some(&l.sidecar.spec);
    write_json(
        &l.out.join("predict.json"),
        &serde_json::json!({ "x1": a.x1, "x2": a.x2, "probabilities": probs, "run_config": rc.value() }),
    )?;
    let mut out = stdout();
    writeln!(out, "P(final = k | x1 = {}, x2 = {})", a.x1, a.x2)?;
    for (y, p) in probs.iter().enumerate() {
        writeln!(out, "  k={y}  {p:.4}")?;
    }
    Ok(())
}
