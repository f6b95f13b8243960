//! Command-line front end for `obsolib`.

mod grid;

use grid::{AgeGrid, ProbGrid};

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::PathBuf;
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand, ValueEnum};

use obsolib::fit::{compare_models, FitReport};
use obsolib::ingest::{parse_ages, write_histogram_csv};
use obsolib::report::{
    build_study, build_study_from_models, default_ages, default_probabilities, format_check,
    render_sections, FIT_CSV_HEADER,
};
use obsolib::simulate::{simulate_negbin, simulate_poisson, write_records_csv};
use obsolib::verify::{model_checks, run_all, Check};
use obsolib::{
    AgeSample, ConvergenceSpec, Error, IngestOptions, InputFormat, NegBinModel, RenderFormat,
    Sections, Strictness, StudyOptions, StudyReport,
};

#[derive(Parser)]
#[command(
    name = "obsolib",
    version,
    about = "Citation-age obsolescence modelling with the Poisson and negative binomial distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics per dataset
    Describe {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Parameter estimates and AIC per dataset
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Full Poisson vs negative binomial comparison per dataset
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Survival and mortality rates on an age grid
    Tails {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        grids: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// VaR and TVaR on a probability grid
    Risk {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        grids: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Everything: statistics, fits, tails, risk and model checks
    Report {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        grids: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Skip the per-model oracle checks
        #[arg(long)]
        no_verify: bool,
    },
    /// Draw synthetic citation ages and write them as CSV
    Simulate(SimulateArgs),
    /// Run the oracle-equivalence suite and print maximum deviations
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// Probabilities for the per-model TVaR checks
        #[arg(long, value_parser = grid::parse_probs)]
        probs: Option<ProbGrid>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Records,
    Histogram,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Level {
    Category,
    Journal,
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV; repeat to merge files, `-` or absent reads stdin
    #[arg(long, short = 'i')]
    input: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "records")]
    format: FormatArg,
    /// Largest accepted age
    #[arg(long, default_value_t = obsolib::ingest::DEFAULT_AGE_CAP)]
    age_cap: u64,
    /// Skip malformed rows instead of stopping at the first one
    #[arg(long)]
    lenient: bool,
    /// Aggregate by subject category or report each journal
    #[arg(long, value_enum, default_value = "category")]
    by: Level,
}

#[derive(Args)]
struct ModelArgs {
    /// Gamma shape of the mixing distribution
    #[arg(long)]
    alpha: Option<f64>,
    /// Gamma rate of the mixing distribution
    #[arg(long, requires = "alpha", conflicts_with = "mean")]
    beta: Option<f64>,
    /// Mean age; sets beta = alpha / mean
    #[arg(long, requires = "alpha")]
    mean: Option<f64>,
    /// Dataset id for a model given by parameters
    #[arg(long, default_value = "model", requires = "alpha")]
    id: String,
}

impl ModelArgs {
    fn model(&self) -> Result<Option<NegBinModel>, Failure> {
        let Some(alpha) = self.alpha else {
            return Ok(None);
        };
        let model = match (self.beta, self.mean) {
            (Some(beta), None) => NegBinModel::new(alpha, beta),
            (None, Some(mean)) => NegBinModel::with_mean(alpha, mean),
            _ => return Err(Failure::Usage("--alpha needs --beta or --mean".into())),
        };
        model.map(Some).map_err(Failure::from)
    }
}

/// A model from parameters, or datasets fitted from input.
#[derive(Args)]
struct SourceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct GridArgs {
    /// Ages as A..B:STEP or a comma list
    #[arg(long, value_parser = grid::parse_ages)]
    ages: Option<AgeGrid>,
    /// Comma list of tail probabilities
    #[arg(long, value_parser = grid::parse_probs)]
    probs: Option<ProbGrid>,
}

impl GridArgs {
    fn ages(&self) -> Vec<u64> {
        self.ages.clone().map(|g| g.0).unwrap_or_else(default_ages)
    }

    fn probs(&self) -> Vec<f64> {
        self.probs.clone().map(|g| g.0).unwrap_or_else(default_probabilities)
    }
}

#[derive(Args)]
#[group(multiple = false)]
struct RenderArgs {
    #[arg(long)]
    json: bool,
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct OutputArgs {
    #[command(flatten)]
    render: RenderArgs,
    /// Write to this file instead of stdout
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

impl OutputArgs {
    fn format(&self) -> RenderFormat {
        if self.render.json {
            RenderFormat::Json
        } else if self.render.csv {
            RenderFormat::Csv
        } else {
            RenderFormat::Table
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Gamma shape; draws negative binomial ages
    #[arg(long, required_unless_present = "theta", conflicts_with = "theta")]
    alpha: Option<f64>,
    #[arg(long, requires = "alpha", conflicts_with = "mean")]
    beta: Option<f64>,
    #[arg(long, requires = "alpha")]
    mean: Option<f64>,
    /// Poisson rate; draws Poisson ages instead
    #[arg(long)]
    theta: Option<f64>,
    /// Number of ages
    #[arg(long, short = 'n')]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "SIM")]
    journal: String,
    #[arg(long, default_value = "SIM")]
    category: String,
    /// Write one row per age or one row per distinct age with a count
    #[arg(long, value_enum, default_value = "records")]
    format: FormatArg,
    #[arg(long, short = 'o')]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            _ if e.is_numerical() => Failure::Numerical(msg),
            Error::InvalidParameter(_) | Error::InvalidGrid(_) => Failure::Usage(msg),
            _ => Failure::Data(msg),
        }
    }
}

/// Process streams, injectable so that commands can run in-process.
pub struct Io<'a> {
    /// `None` when stdin is a terminal.
    pub stdin: Option<&'a mut dyn Read>,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run_with<I, T>(args: I, io: &mut Io) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().ansi().to_string();
            let sink = if code == 0 { &mut *io.stdout } else { &mut *io.stderr };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    match check_env().and_then(|()| run(cli.command, io)) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(io.stderr, "obsolib: {}", f.message());
            f.code()
        }
    }
}

fn check_env() -> Result<(), Failure> {
    match std::env::var(ConvergenceSpec::MAX_ITERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(()),
            _ => Err(Failure::Usage(format!(
                "{} must be a positive integer, got `{v}`",
                ConvergenceSpec::MAX_ITERS_ENV
            ))),
        },
        Err(_) => Ok(()),
    }
}

fn run(command: Command, io: &mut Io) -> Result<(), Failure> {
    match command {
        Command::Describe { data, output } => {
            let samples = load(&data, io)?;
            let study = study_from_samples(&samples, &default_ages(), &default_probabilities(), false)?;
            let sections = Sections {
                stats: true,
                ..Sections::NONE
            };
            emit_study(&study, &output, sections, io)
        }
        Command::Fit { data, output } => {
            let samples = load(&data, io)?;
            let study = study_from_samples(&samples, &default_ages(), &default_probabilities(), false)?;
            let sections = Sections {
                fit: true,
                ..Sections::NONE
            };
            emit_study(&study, &output, sections, io)
        }
        Command::Compare { data, output } => compare(&data, &output, io),
        Command::Tails {
            source,
            grids,
            output,
        } => {
            let study = study_from_source(&source, &grids, false, io)?;
            let sections = Sections {
                tails: true,
                ..Sections::NONE
            };
            emit_study(&study, &output, sections, io)
        }
        Command::Risk {
            source,
            grids,
            output,
        } => {
            let study = study_from_source(&source, &grids, false, io)?;
            let sections = Sections {
                risk: true,
                ..Sections::NONE
            };
            emit_study(&study, &output, sections, io)
        }
        Command::Report {
            source,
            grids,
            output,
            no_verify,
        } => {
            let study = study_from_source(&source, &grids, !no_verify, io)?;
            emit_study(&study, &output, Sections::ALL, io)?;
            if study.all_checks_passed() {
                Ok(())
            } else {
                Err(Failure::Verification("model checks failed".into()))
            }
        }
        Command::Simulate(args) => simulate(&args, io),
        Command::Verify {
            model,
            probs,
            output,
        } => verify(&model, probs.map(|g| g.0), &output, io),
    }
}

fn ingest_options(data: &DataArgs) -> IngestOptions {
    IngestOptions {
        format: match data.format {
            FormatArg::Records => InputFormat::Records,
            FormatArg::Histogram => InputFormat::Histogram,
        },
        age_cap: data.age_cap,
        strictness: if data.lenient {
            Strictness::Lenient
        } else {
            Strictness::FailFast
        },
    }
}

/// Reads every input and merges samples that share an id.
fn load(data: &DataArgs, io: &mut Io) -> Result<Vec<AgeSample>, Failure> {
    let options = ingest_options(data);
    let stdin_only = [PathBuf::from("-")];
    let inputs: &[PathBuf] = if data.input.is_empty() {
        &stdin_only
    } else {
        &data.input
    };
    let mut merged: std::collections::BTreeMap<String, AgeSample> = Default::default();
    for path in inputs {
        let reader: Box<dyn Read + '_> = if path.as_os_str() == "-" {
            match io.stdin.as_deref_mut() {
                Some(stdin) => Box::new(stdin),
                None => {
                    return Err(Failure::Usage(
                        "no input: pass --input FILE or pipe CSV on stdin".into(),
                    ))
                }
            }
        } else {
            Box::new(File::open(path).map_err(|e| {
                Failure::Data(format!("cannot open {}: {e}", path.display()))
            })?)
        };
        let parsed = parse_ages(reader, &options).map_err(|e| match e {
            Error::Parse { .. } => Failure::Data(format!("{}: {e}", path.display())),
            e => Failure::from(e),
        })?;
        for r in &parsed.rejected {
            let _ = writeln!(
                io.stderr,
                "obsolib: skipped {} line {}, field `{}`: {}",
                path.display(),
                r.line,
                r.field,
                r.message
            );
        }
        let samples = match data.by {
            Level::Category => parsed.categories,
            Level::Journal => parsed.journals,
        };
        for s in samples {
            merged
                .entry(s.dataset_id().to_string())
                .and_modify(|m| m.merge(&s))
                .or_insert(s);
        }
    }
    if merged.is_empty() {
        return Err(Failure::Data("input contains no data rows".into()));
    }
    Ok(merged.into_values().collect())
}

fn study_from_samples(
    samples: &[AgeSample],
    ages: &[u64],
    probs: &[f64],
    verify: bool,
) -> Result<StudyReport, Failure> {
    Ok(build_study(samples, ages, probs, &StudyOptions { verify })?)
}

fn study_from_source(
    source: &SourceArgs,
    grids: &GridArgs,
    verify: bool,
    io: &mut Io,
) -> Result<StudyReport, Failure> {
    let (ages, probs) = (grids.ages(), grids.probs());
    match source.model.model()? {
        Some(model) => Ok(build_study_from_models(
            &[(source.model.id.clone(), model)],
            &ages,
            &probs,
            &StudyOptions { verify },
        )?),
        None => {
            let samples = load(&source.data, io)?;
            study_from_samples(&samples, &ages, &probs, verify)
        }
    }
}

/// Writes the selected sections, then turns skipped sections into an exit
/// status. Skips are part of the rendered output; they only fail the run
/// when caused by non-convergence or when no dataset produced anything.
fn emit_study(
    study: &StudyReport,
    output: &OutputArgs,
    sections: Sections,
    io: &mut Io,
) -> Result<(), Failure> {
    let bytes = render_sections(study, output.format(), sections);
    write_output(output.out.as_ref(), &bytes, io)?;

    let selected = |name: &str| match name {
        "stats" => sections.stats,
        "fit" => sections.fit,
        "tails" => sections.tails,
        "risk" => sections.risk,
        _ => false,
    };
    let skips: Vec<_> = study
        .datasets
        .iter()
        .flat_map(|d| d.skipped.iter().map(move |s| (&d.dataset_id, s)))
        .filter(|(_, s)| selected(&s.section))
        .collect();
    if let Some((id, s)) = skips.iter().find(|(_, s)| s.numerical) {
        return Err(Failure::Numerical(format!("{id}: {}", s.reason)));
    }
    let produced = study.datasets.iter().any(|d| {
        (sections.stats && d.stats.is_some())
            || (sections.fit && d.fit.is_some())
            || (sections.tails && d.tails.is_some())
            || (sections.risk && d.risk.is_some())
    });
    if !produced {
        return Err(Failure::Data("no dataset produced output".into()));
    }
    Ok(())
}

fn write_output(path: Option<&PathBuf>, bytes: &[u8], io: &mut Io) -> Result<(), Failure> {
    let result = match path {
        Some(p) => File::create(p).and_then(|f| {
            let mut w = BufWriter::new(f);
            w.write_all(bytes)?;
            w.flush()
        }),
        None => {
            let out = &mut *io.stdout;
            out.write_all(bytes).and_then(|()| out.flush())
        }
    };
    match result {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(Failure::Data(format!("cannot write output: {e}"))),
        Ok(()) => Ok(()),
    }
}

fn compare(data: &DataArgs, output: &OutputArgs, io: &mut Io) -> Result<(), Failure> {
    let samples = load(data, io)?;
    let mut reports: Vec<FitReport> = Vec::new();
    let mut first_error: Option<Failure> = None;
    for s in &samples {
        match compare_models(s, s.dataset_id()) {
            Ok(r) => reports.push(r),
            Err(e) => {
                let _ = writeln!(io.stderr, "obsolib: {}: {e}", s.dataset_id());
                let f = Failure::from(e);
                let worse = match &first_error {
                    None => true,
                    Some(prev) => matches!(f, Failure::Numerical(_)) && !matches!(prev, Failure::Numerical(_)),
                };
                if worse {
                    first_error = Some(f);
                }
            }
        }
    }
    let bytes = match output.format() {
        RenderFormat::Json => {
            let mut s = to_json(&reports);
            s.push('\n');
            s.into_bytes()
        }
        RenderFormat::Csv => compare_csv(&reports).into_bytes(),
        RenderFormat::Table => compare_table(&reports).into_bytes(),
    };
    write_output(output.out.as_ref(), &bytes, io)?;
    match first_error {
        Some(f @ Failure::Numerical(_)) => Err(f),
        Some(f) if reports.is_empty() => Err(f),
        _ => Ok(()),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn compare_csv(reports: &[FitReport]) -> String {
    // Same leading columns as `fit --csv`.
    let mut out = format!("{FIT_CSV_HEADER},loglik_ratio,negbin_iterations\n");
    for r in reports {
        let nb = r.negbin.as_ref();
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:?},{},{},{},{}\n",
            csv_field(&r.dataset_id),
            r.n_obs,
            r.poisson.model.theta(),
            r.poisson.loglik,
            r.poisson.aic,
            opt(nb.map(|m| m.model.alpha())),
            opt(nb.map(|m| m.model.beta())),
            opt(nb.map(|m| m.loglik)),
            opt(nb.map(|m| m.aic)),
            r.preferred,
            opt(r.aic_reduction_pct),
            csv_field(r.negbin_skip_reason.as_deref().unwrap_or("")),
            opt(nb.map(|m| 2.0 * (m.loglik - r.poisson.loglik))),
            r.negbin_iterations.map(|i| i.to_string()).unwrap_or_default(),
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn compare_table(reports: &[FitReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.dataset_id.chars().count())
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = format!(
        "{:<width$} {:>10} {:>16} {:>16} {:>14} {:>14} {:>10} {:>9} {:>6}\n",
        "dataset", "n", "logL(Poisson)", "logL(NB)", "AIC(Poisson)", "AIC(NB)", "AIC red.%", "preferred", "iters"
    );
    for r in reports {
        let dash = || "-".to_string();
        let nb = r.negbin.as_ref();
        out.push_str(&format!(
            "{:<width$} {:>10} {:>16.3} {:>16} {:>14.1} {:>14} {:>10} {:>9} {:>6}\n",
            r.dataset_id,
            r.n_obs,
            r.poisson.loglik,
            nb.map(|m| format!("{:.3}", m.loglik)).unwrap_or_else(dash),
            r.poisson.aic,
            nb.map(|m| format!("{:.1}", m.aic)).unwrap_or_else(dash),
            r.aic_reduction_pct
                .map(|p| format!("{p:.2}"))
                .unwrap_or_else(dash),
            format!("{:?}", r.preferred),
            r.negbin_iterations.map(|i| i.to_string()).unwrap_or_else(dash),
        ));
        if let Some(why) = &r.negbin_skip_reason {
            out.push_str(&format!("{:<width$}   negative binomial skipped: {why}\n", ""));
        }
    }
    out
}

fn simulate(args: &SimulateArgs, io: &mut Io) -> Result<(), Failure> {
    let ages = match (args.alpha, args.theta) {
        (Some(alpha), None) => {
            let model = match (args.beta, args.mean) {
                (Some(beta), None) => NegBinModel::new(alpha, beta)?,
                (None, Some(mean)) => NegBinModel::with_mean(alpha, mean)?,
                _ => return Err(Failure::Usage("--alpha needs --beta or --mean".into())),
            };
            simulate_negbin(model.alpha(), model.beta(), args.n, args.seed)?
        }
        (None, Some(theta)) => simulate_poisson(theta, args.n, args.seed)?,
        _ => return Err(Failure::Usage("give either --alpha or --theta".into())),
    };
    let mut buf = Vec::new();
    match args.format {
        FormatArg::Records => write_records_csv(&mut buf, &args.journal, &args.category, &ages)?,
        FormatArg::Histogram => {
            let sample = AgeSample::from_ages(args.journal.clone(), ages);
            write_histogram_csv(&mut buf, &args.journal, &args.category, &sample)?
        }
    }
    write_output(args.out.as_ref(), &buf, io)
}

fn verify(
    model: &ModelArgs,
    probs: Option<Vec<f64>>,
    output: &OutputArgs,
    io: &mut Io,
) -> Result<(), Failure> {
    let mut checks = run_all();
    if let Some(m) = model.model()? {
        let probs = probs.unwrap_or_else(default_probabilities);
        checks.extend(model_checks(&m, &probs).into_iter().map(|c| Check {
            name: format!("{} [{}]", c.name, model.id),
            ..c
        }));
    }
    let bytes = match output.format() {
        RenderFormat::Json => {
            let mut s = to_json(&checks);
            s.push('\n');
            s.into_bytes()
        }
        RenderFormat::Csv => {
            let mut s = String::from("check,max_deviation,tolerance,passed\n");
            for c in &checks {
                s.push_str(&format!(
                    "{},{:e},{},{}\n",
                    csv_field(&c.name),
                    c.max_deviation,
                    c.tolerance.map(|t| format!("{t:e}")).unwrap_or_default(),
                    c.passed
                ));
            }
            s.into_bytes()
        }
        RenderFormat::Table => {
            let mut s = String::new();
            for c in &checks {
                s.push_str(&format_check(c));
                s.push('\n');
            }
            s.into_bytes()
        }
    };
    write_output(output.out.as_ref(), &bytes, io)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{failed} check(s) exceeded tolerance")))
    }
}
