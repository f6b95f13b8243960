//! Study assembly and rendering.
//!
//! A study runs the full pipeline per dataset (descriptive statistics, both
//! fits, tail and percentile grids, verification) and renders it as JSON,
//! long-format CSV, or aligned text tables. Rendering is a pure function of
//! the report, so identical inputs give identical bytes.
//!
//! JSON layout:
//!
//! ```text
//! { "ages": [..], "probabilities": [..],
//!   "datasets": [ { "dataset_id", "stats", "fit", "tails", "risk",
//!                   "skipped": [{"section","reason"}], "verification": [..] } ] }
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dist::NegBinModel;
use crate::error::{Error, Result};
use crate::fit::{compare_models, FitReport};
use crate::ingest::{descriptive_stats, AgeSample, StatsReport};
use crate::tails::{risk_report, tail_report, RiskReport, TailReport};
use crate::verify::{model_checks, Check};

pub fn default_ages() -> Vec<u64> {
    (20..=100).step_by(10).collect()
}

pub fn default_probabilities() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 100.0).collect()
}

pub fn validate_ages(ages: &[u64]) -> Result<()> {
    if ages.is_empty() {
        return Err(Error::InvalidGrid("age grid is empty".into()));
    }
    if let Some(w) = ages.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "ages must be strictly increasing ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

pub fn validate_probabilities(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidGrid("probability grid is empty".into()));
    }
    if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::InvalidGrid(format!("probability {p} outside (0, 1)")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyOptions {
    /// Attach oracle checks to every dataset with a negative binomial model.
    pub verify: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions { verify: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub section: String,
    pub reason: String,
    /// The section failed because an iterative method did not converge.
    #[serde(default)]
    pub numerical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset_id: String,
    pub model: Option<NegBinModel>,
    pub stats: Option<StatsReport>,
    pub fit: Option<FitReport>,
    pub tails: Option<TailReport>,
    pub risk: Option<RiskReport>,
    pub skipped: Vec<Skip>,
    pub verification: Vec<Check>,
}

impl DatasetReport {
    fn new(id: &str) -> Self {
        DatasetReport {
            dataset_id: id.to_string(),
            model: None,
            stats: None,
            fit: None,
            tails: None,
            risk: None,
            skipped: Vec::new(),
            verification: Vec::new(),
        }
    }

    fn skip(&mut self, section: &str, reason: impl Into<String>) {
        self.skipped.push(Skip {
            section: section.to_string(),
            reason: reason.into(),
            numerical: false,
        });
    }

    fn skip_err(&mut self, section: &str, e: &Error) {
        self.skipped.push(Skip {
            section: section.to_string(),
            reason: e.to_string(),
            numerical: e.is_numerical(),
        });
    }

    fn fill_measures(&mut self, model: &NegBinModel, ages: &[u64], probs: &[f64], options: &StudyOptions) {
        self.model = Some(*model);
        match tail_report(&self.dataset_id, model, ages) {
            Ok(t) => self.tails = Some(t),
            Err(e) => self.skip_err("tails", &e),
        }
        match risk_report(&self.dataset_id, model, probs) {
            Ok(r) => self.risk = Some(r),
            Err(e) => self.skip_err("risk", &e),
        }
        if options.verify {
            self.verification = model_checks(model, probs);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub ages: Vec<u64>,
    pub probabilities: Vec<f64>,
    pub datasets: Vec<DatasetReport>,
}

impl StudyReport {
    /// True when some section was skipped because of non-convergence.
    pub fn has_numerical_failure(&self) -> bool {
        self.datasets
            .iter()
            .flat_map(|d| &d.skipped)
            .any(|s| s.numerical)
    }

    pub fn all_checks_passed(&self) -> bool {
        self.datasets
            .iter()
            .flat_map(|d| &d.verification)
            .all(|c| c.passed)
    }
}

/// Runs the pipeline on every sample. Datasets come out sorted by id.
pub fn build_study(
    samples: &[AgeSample],
    ages: &[u64],
    probs: &[f64],
    options: &StudyOptions,
) -> Result<StudyReport> {
    validate_ages(ages)?;
    validate_probabilities(probs)?;
    let mut sorted: Vec<&AgeSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.dataset_id().cmp(b.dataset_id()));

    let datasets = sorted
        .into_iter()
        .map(|sample| {
            let id = sample.dataset_id();
            let mut d = DatasetReport::new(id);
            match descriptive_stats(sample) {
                Ok(s) => d.stats = Some(s),
                Err(e) => d.skip_err("stats", &e),
            }
            match compare_models(sample, id) {
                Ok(fit) => {
                    match fit.negbin {
                        Some(nb) => d.fill_measures(&nb.model, ages, probs, options),
                        None => {
                            let why = fit
                                .negbin_skip_reason
                                .clone()
                                .unwrap_or_else(|| "negative binomial not fitted".into());
                            d.skip("tails", why.clone());
                            d.skip("risk", why);
                        }
                    }
                    d.fit = Some(fit);
                }
                Err(e) => {
                    d.skip_err("fit", &e);
                    d.skip_err("tails", &e);
                    d.skip_err("risk", &e);
                }
            }
            d
        })
        .collect();
    Ok(StudyReport {
        ages: ages.to_vec(),
        probabilities: probs.to_vec(),
        datasets,
    })
}

/// Study over given models, bypassing ingestion and fitting.
pub fn build_study_from_models(
    models: &[(String, NegBinModel)],
    ages: &[u64],
    probs: &[f64],
    options: &StudyOptions,
) -> Result<StudyReport> {
    validate_ages(ages)?;
    validate_probabilities(probs)?;
    let mut sorted: Vec<&(String, NegBinModel)> = models.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let datasets = sorted
        .into_iter()
        .map(|(id, model)| {
            let mut d = DatasetReport::new(id);
            d.skip("stats", "model parameters supplied directly");
            d.skip("fit", "model parameters supplied directly");
            d.fill_measures(model, ages, probs, options);
            d
        })
        .collect();
    Ok(StudyReport {
        ages: ages.to_vec(),
        probabilities: probs.to_vec(),
        datasets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Csv,
    Json,
    Table,
}

/// Which parts of a study to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sections {
    pub stats: bool,
    pub fit: bool,
    pub tails: bool,
    pub risk: bool,
    pub verification: bool,
}

impl Sections {
    pub const ALL: Sections = Sections {
        stats: true,
        fit: true,
        tails: true,
        risk: true,
        verification: true,
    };
    pub const NONE: Sections = Sections {
        stats: false,
        fit: false,
        tails: false,
        risk: false,
        verification: false,
    };

    fn includes(&self, section: &str) -> bool {
        match section {
            "stats" => self.stats,
            "fit" => self.fit,
            "tails" => self.tails,
            "risk" => self.risk,
            _ => true,
        }
    }
}

/// Probability-scale value: 4 decimals, or `X.XXE-N` below 1e-4.
pub fn fmt_probability(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:.2E}")
    } else {
        format!("{v:.4}")
    }
}

pub fn fmt_tvar(v: f64) -> String {
    format!("{v:.2}")
}

pub fn render(report: &StudyReport, format: RenderFormat) -> Vec<u8> {
    render_sections(report, format, Sections::ALL)
}

pub fn render_sections(report: &StudyReport, format: RenderFormat, sections: Sections) -> Vec<u8> {
    let filtered = filter(report, sections);
    match format {
        RenderFormat::Json => {
            let mut s = serde_json::to_string_pretty(&filtered).expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
        RenderFormat::Csv => render_csv(&filtered, sections).into_bytes(),
        RenderFormat::Table => render_table(&filtered, sections).into_bytes(),
    }
}

fn filter(report: &StudyReport, sections: Sections) -> StudyReport {
    let mut out = report.clone();
    for d in &mut out.datasets {
        if !sections.stats {
            d.stats = None;
        }
        if !sections.fit {
            d.fit = None;
        }
        if !sections.tails {
            d.tails = None;
        }
        if !sections.risk {
            d.risk = None;
        }
        if !sections.verification {
            d.verification.clear();
        }
        d.skipped.retain(|s| sections.includes(&s.section));
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

pub const STATS_CSV_HEADER: &str =
    "dataset_id,n_obs,mean,median,mode,min,max,variance,dispersion_index";
pub const FIT_CSV_HEADER: &str = "dataset_id,n_obs,theta,loglik_poisson,aic_poisson,alpha,beta,loglik_negbin,aic_negbin,preferred,aic_reduction_pct,negbin_skip_reason";
/// Long format: one row per dataset × age, one per dataset × probability,
/// one per skip record.
pub const MEASURES_CSV_HEADER: &str =
    "dataset_id,section,grid,survival,mortality,var,tvar,tvar_conditional,reason";
pub const VERIFICATION_CSV_HEADER: &str = "dataset_id,check,max_deviation,tolerance,passed";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// CSV blocks, one per selected section, separated by a blank line.
fn render_csv(report: &StudyReport, sections: Sections) -> String {
    let mut blocks = Vec::new();
    if sections.stats {
        let mut out = format!("{STATS_CSV_HEADER}\n");
        for s in report.datasets.iter().filter_map(|d| d.stats.as_ref()) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&s.dataset_id),
                s.n_obs,
                s.mean,
                s.median,
                s.mode,
                s.min,
                s.max,
                s.variance,
                s.dispersion_index
            );
        }
        blocks.push(out);
    }
    if sections.fit {
        let mut out = format!("{FIT_CSV_HEADER}\n");
        for f in report.datasets.iter().filter_map(|d| d.fit.as_ref()) {
            let nb = f.negbin.as_ref();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:?},{},{}",
                csv_field(&f.dataset_id),
                f.n_obs,
                f.poisson.model.theta(),
                f.poisson.loglik,
                f.poisson.aic,
                opt(nb.map(|m| m.model.alpha())),
                opt(nb.map(|m| m.model.beta())),
                opt(nb.map(|m| m.loglik)),
                opt(nb.map(|m| m.aic)),
                f.preferred,
                opt(f.aic_reduction_pct),
                csv_field(f.negbin_skip_reason.as_deref().unwrap_or(""))
            );
        }
        blocks.push(out);
    }
    if sections.tails || sections.risk || report.datasets.iter().any(|d| !d.skipped.is_empty()) {
        let mut out = format!("{MEASURES_CSV_HEADER}\n");
        for d in &report.datasets {
            let id = csv_field(&d.dataset_id);
            if let Some(t) = &d.tails {
                for ((age, s), m) in t.ages.iter().zip(&t.survival).zip(&t.mortality) {
                    let _ = writeln!(
                        out,
                        "{id},tails,{age},{},{},,,,",
                        fmt_probability(*s),
                        fmt_probability(*m)
                    );
                }
            }
            if let Some(r) = &d.risk {
                for (((p, v), t), c) in r
                    .probabilities
                    .iter()
                    .zip(&r.var)
                    .zip(&r.tvar)
                    .zip(&r.tvar_conditional)
                {
                    let _ = writeln!(out, "{id},risk,{p},,,{v},{},{},", fmt_tvar(*t), fmt_tvar(*c));
                }
            }
            for s in &d.skipped {
                let _ = writeln!(
                    out,
                    "{id},skip:{},,,,,,,{}",
                    csv_field(&s.section),
                    csv_field(&s.reason)
                );
            }
        }
        blocks.push(out);
    }
    if sections.verification && report.datasets.iter().any(|d| !d.verification.is_empty()) {
        let mut out = format!("{VERIFICATION_CSV_HEADER}\n");
        for d in &report.datasets {
            for c in &d.verification {
                let _ = writeln!(
                    out,
                    "{},{},{:e},{},{}",
                    csv_field(&d.dataset_id),
                    csv_field(&c.name),
                    c.max_deviation,
                    opt(c.tolerance.map(|t| format!("{t:e}"))),
                    c.passed
                );
            }
        }
        blocks.push(out);
    }
    blocks.join("\n")
}

fn render_table(report: &StudyReport, sections: Sections) -> String {
    let width = report
        .datasets
        .iter()
        .map(|d| d.dataset_id.chars().count())
        .max()
        .unwrap_or(0)
        .max(8);
    let mut blocks: Vec<String> = Vec::new();

    if sections.stats && report.datasets.iter().any(|d| d.stats.is_some()) {
        let mut out = String::from("Descriptive statistics\n");
        let _ = writeln!(
            out,
            "{:<width$} {:>10} {:>9} {:>9} {:>6} {:>5} {:>5} {:>9}",
            "dataset", "n", "mean", "median", "mode", "min", "max", "ID"
        );
        for s in report.datasets.iter().filter_map(|d| d.stats.as_ref()) {
            let _ = writeln!(
                out,
                "{:<width$} {:>10} {:>9.2} {:>9.1} {:>6} {:>5} {:>5} {:>9.2}",
                s.dataset_id, s.n_obs, s.mean, s.median, s.mode, s.min, s.max, s.dispersion_index
            );
        }
        blocks.push(out);
    }

    if sections.fit && report.datasets.iter().any(|d| d.fit.is_some()) {
        let mut out = String::from("Parameter estimates and AIC\n");
        let _ = writeln!(
            out,
            "{:<width$} {:>9} {:>14} {:>9} {:>9} {:>14} {:>10} {:>9}",
            "dataset", "theta", "AIC(Poisson)", "alpha", "beta", "AIC(NB)", "AIC red.%", "preferred"
        );
        for f in report.datasets.iter().filter_map(|d| d.fit.as_ref()) {
            let (a, b, aic_nb) = match &f.negbin {
                Some(nb) => (
                    format!("{:.4}", nb.model.alpha()),
                    format!("{:.4}", nb.model.beta()),
                    format!("{:.1}", nb.aic),
                ),
                None => ("-".into(), "-".into(), "-".into()),
            };
            let red = f
                .aic_reduction_pct
                .map(|r| format!("{r:.2}"))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<width$} {:>9.4} {:>14.1} {:>9} {:>9} {:>14} {:>10} {:>9}",
                f.dataset_id,
                f.poisson.model.theta(),
                f.poisson.aic,
                a,
                b,
                aic_nb,
                red,
                format!("{:?}", f.preferred)
            );
        }
        blocks.push(out);
    }

    if sections.tails && report.datasets.iter().any(|d| d.tails.is_some()) {
        let mut out = String::from("Survival rate (first row) and mortality rate (second row) by age\n");
        let _ = write!(out, "{:<width$}", "age");
        for a in &report.ages {
            let _ = write!(out, " {a:>9}");
        }
        out.push('\n');
        for d in &report.datasets {
            if let Some(t) = &d.tails {
                let _ = write!(out, "{:<width$}", d.dataset_id);
                for s in &t.survival {
                    let _ = write!(out, " {:>9}", fmt_probability(*s));
                }
                out.push('\n');
                let _ = write!(out, "{:<width$}", "");
                for m in &t.mortality {
                    let _ = write!(out, " {:>9}", fmt_probability(*m));
                }
                out.push('\n');
            }
        }
        blocks.push(out);
    }

    if sections.risk && report.datasets.iter().any(|d| d.risk.is_some()) {
        let mut out = String::from("VaR (first row) and TVaR (second row) by p\n");
        let _ = write!(out, "{:<width$}", "p");
        for p in &report.probabilities {
            let _ = write!(out, " {p:>7}");
        }
        out.push('\n');
        for d in &report.datasets {
            if let Some(r) = &d.risk {
                let _ = write!(out, "{:<width$}", d.dataset_id);
                for v in &r.var {
                    let _ = write!(out, " {v:>7}");
                }
                out.push('\n');
                let _ = write!(out, "{:<width$}", "");
                for t in &r.tvar {
                    let _ = write!(out, " {:>7}", fmt_tvar(*t));
                }
                out.push('\n');
            }
        }
        blocks.push(out);
    }

    let skipped: Vec<_> = report
        .datasets
        .iter()
        .flat_map(|d| d.skipped.iter().map(move |s| (&d.dataset_id, s)))
        .collect();
    if !skipped.is_empty() {
        let mut out = String::from("Skipped\n");
        for (id, s) in skipped {
            let _ = writeln!(out, "{id} [{}]: {}", s.section, s.reason);
        }
        blocks.push(out);
    }

    if sections.verification {
        let checks: Vec<_> = report
            .datasets
            .iter()
            .flat_map(|d| d.verification.iter().map(move |c| (&d.dataset_id, c)))
            .collect();
        if !checks.is_empty() {
            let mut out = String::from("Verification\n");
            for (id, c) in checks {
                let _ = writeln!(out, "{id}: {}", format_check(c));
            }
            blocks.push(out);
        }
    }
    blocks.join("\n")
}

/// `PASS name: max deviation 1.234e-13 (tolerance 1e-10)`.
pub fn format_check(c: &Check) -> String {
    let verdict = match (c.tolerance, c.passed) {
        (None, _) => "INFO",
        (Some(_), true) => "PASS",
        (Some(_), false) => "FAIL",
    };
    match c.tolerance {
        Some(t) => format!(
            "{verdict} {}: max deviation {:.3e} (tolerance {t:e})",
            c.name, c.max_deviation
        ),
        None => format!("{verdict} {}: {:.6e}", c.name, c.max_deviation),
    }
}
