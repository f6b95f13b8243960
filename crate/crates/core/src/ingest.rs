//! Loading and summarizing cited-reference age data.
//!
//! Two CSV layouts are accepted:
//!
//! * `records`: header `journal,subject_category,age`, one row per cited reference;
//! * `histogram`: header `journal,subject_category,age,count`.
//!
//! Every journal becomes one [`AgeSample`], and every subject category gets
//! an aggregate sample summing its journals.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_AGE_CAP: u64 = 150;

/// Histogram of cited-reference ages (years) for one journal or category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeSample {
    dataset_id: String,
    counts: BTreeMap<u64, u64>,
    n_obs: u64,
}

impl AgeSample {
    pub fn empty(dataset_id: impl Into<String>) -> Self {
        AgeSample {
            dataset_id: dataset_id.into(),
            counts: BTreeMap::new(),
            n_obs: 0,
        }
    }

    pub fn from_ages<I: IntoIterator<Item = u64>>(dataset_id: impl Into<String>, ages: I) -> Self {
        let mut s = AgeSample::empty(dataset_id);
        for a in ages {
            s.add(a, 1);
        }
        s
    }

    /// Builds a sample from `(age, count)` pairs; zero counts are rejected.
    pub fn from_counts<I: IntoIterator<Item = (u64, u64)>>(
        dataset_id: impl Into<String>,
        pairs: I,
    ) -> Result<Self> {
        let mut s = AgeSample::empty(dataset_id);
        for (age, count) in pairs {
            if count == 0 {
                return Err(Error::InvalidParameter(format!(
                    "count for age {age} must be >= 1"
                )));
            }
            s.add(age, count);
        }
        Ok(s)
    }

    fn add(&mut self, age: u64, count: u64) {
        *self.counts.entry(age).or_insert(0) += count;
        self.n_obs += count;
    }

    /// Adds every count of `other` into `self`.
    pub fn merge(&mut self, other: &AgeSample) {
        for (&age, &count) in &other.counts {
            self.add(age, count);
        }
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.dataset_id = id.into();
        self
    }

    pub fn counts(&self) -> &BTreeMap<u64, u64> {
        &self.counts
    }

    pub fn n_obs(&self) -> u64 {
        self.n_obs
    }

    pub fn is_empty(&self) -> bool {
        self.n_obs == 0
    }

    pub fn min_age(&self) -> Option<u64> {
        self.counts.keys().next().copied()
    }

    pub fn max_age(&self) -> Option<u64> {
        self.counts.keys().next_back().copied()
    }

    pub fn sum(&self) -> f64 {
        self.counts.iter().map(|(&a, &c)| a as f64 * c as f64).sum()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n_obs > 0).then(|| self.sum() / self.n_obs as f64)
    }

    /// Population variance.
    pub fn variance(&self) -> Option<f64> {
        let mean = self.mean()?;
        let ss: f64 = self
            .counts
            .iter()
            .map(|(&a, &c)| c as f64 * (a as f64 - mean).powi(2))
            .sum();
        Some(ss / self.n_obs as f64)
    }

    /// Age at 0-based rank `k` of the sorted expansion.
    fn age_at_rank(&self, k: u64) -> u64 {
        let mut seen = 0;
        for (&age, &count) in &self.counts {
            seen += count;
            if k < seen {
                return age;
            }
        }
        unreachable!("rank {k} beyond n_obs {}", self.n_obs)
    }

    /// Median; even counts average the two central values.
    pub fn median(&self) -> Option<f64> {
        if self.n_obs == 0 {
            return None;
        }
        let n = self.n_obs;
        if n % 2 == 1 {
            Some(self.age_at_rank(n / 2) as f64)
        } else {
            let lo = self.age_at_rank(n / 2 - 1) as f64;
            let hi = self.age_at_rank(n / 2) as f64;
            Some(0.5 * (lo + hi))
        }
    }

    /// Most frequent age; ties go to the smallest age.
    pub fn mode(&self) -> Option<u64> {
        let mut best: Option<(u64, u64)> = None;
        for (&age, &count) in &self.counts {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((age, count));
            }
        }
        best.map(|(a, _)| a)
    }

    /// `G[j]` = number of observations with age > j, for j in 0..max_age.
    pub fn exceedance_counts(&self) -> Vec<u64> {
        let Some(max) = self.max_age() else {
            return Vec::new();
        };
        let mut out = vec![0u64; max as usize];
        let mut above = self.n_obs;
        let mut iter = self.counts.iter().peekable();
        for (j, slot) in out.iter_mut().enumerate() {
            while let Some((&age, &count)) = iter.peek() {
                if age <= j as u64 {
                    above -= count;
                    iter.next();
                } else {
                    break;
                }
            }
            *slot = above;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputFormat {
    Records,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strictness {
    FailFast,
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub format: InputFormat,
    pub age_cap: u64,
    pub strictness: Strictness,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            format: InputFormat::Records,
            age_cap: DEFAULT_AGE_CAP,
            strictness: Strictness::FailFast,
        }
    }
}

/// A row skipped in lenient mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedAges {
    /// One sample per journal, ordered by id.
    pub journals: Vec<AgeSample>,
    /// One aggregate sample per subject category, ordered by id.
    pub categories: Vec<AgeSample>,
    /// Journal id → subject category, as first seen.
    pub journal_category: BTreeMap<String, String>,
    pub rejected: Vec<RowError>,
}

impl ParsedAges {
    /// Looks a dataset up by id, categories first.
    pub fn find(&self, id: &str) -> Option<&AgeSample> {
        self.categories
            .iter()
            .chain(self.journals.iter())
            .find(|s| s.dataset_id() == id)
    }
}

fn row_error(line: u64, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_count_field(raw: &str, line: u64, field: &str) -> Result<u64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(row_error(line, field, "missing value"));
    }
    match raw.parse::<i64>() {
        Ok(v) if v < 0 => Err(row_error(line, field, format!("negative value {v}"))),
        Ok(v) => Ok(v as u64),
        Err(_) if raw.parse::<f64>().is_ok() => {
            Err(row_error(line, field, format!("`{raw}` is not an integer")))
        }
        Err(_) => Err(row_error(line, field, format!("`{raw}` is not a number"))),
    }
}

struct Columns {
    journal: usize,
    category: usize,
    age: usize,
    count: Option<usize>,
}

fn locate_columns(headers: &csv::StringRecord, format: InputFormat) -> Result<Columns> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().trim_start_matches('\u{feff}') == name)
            .ok_or_else(|| row_error(1, name, "missing column in header"))
    };
    Ok(Columns {
        journal: find("journal")?,
        category: find("subject_category")?,
        age: find("age")?,
        count: match format {
            InputFormat::Histogram => Some(find("count")?),
            InputFormat::Records => None,
        },
    })
}

/// Parses an age CSV into per-journal and per-category samples.
pub fn parse_ages<R: Read>(input: R, options: &IngestOptions) -> Result<ParsedAges> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let cols = locate_columns(&headers, options.format)?;

    let mut journals: BTreeMap<String, AgeSample> = BTreeMap::new();
    let mut categories: BTreeMap<String, AgeSample> = BTreeMap::new();
    let mut journal_category: BTreeMap<String, String> = BTreeMap::new();
    let mut rejected = Vec::new();

    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, line, &cols, options.age_cap) {
            Ok((journal, category, age, count)) => {
                journals
                    .entry(journal.clone())
                    .or_insert_with(|| AgeSample::empty(journal.clone()))
                    .add(age, count);
                categories
                    .entry(category.clone())
                    .or_insert_with(|| AgeSample::empty(category.clone()))
                    .add(age, count);
                journal_category.entry(journal).or_insert(category);
            }
            Err(e) => match (options.strictness, e) {
                (Strictness::Lenient, Error::Parse { line, field, message }) => {
                    rejected.push(RowError { line, field, message })
                }
                (_, e) => return Err(e),
            },
        }
    }

    Ok(ParsedAges {
        journals: journals.into_values().collect(),
        categories: categories.into_values().collect(),
        journal_category,
        rejected,
    })
}

fn parse_row(
    record: &csv::StringRecord,
    line: u64,
    cols: &Columns,
    age_cap: u64,
) -> Result<(String, String, u64, u64)> {
    let text = |idx: usize, field: &str| -> Result<String> {
        match record.get(idx).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v.to_string()),
            _ => Err(row_error(line, field, "missing value")),
        }
    };
    let journal = text(cols.journal, "journal")?;
    let category = text(cols.category, "subject_category")?;
    let age_raw = record
        .get(cols.age)
        .ok_or_else(|| row_error(line, "age", "missing value"))?;
    let age = parse_count_field(age_raw, line, "age")?;
    if age > age_cap {
        return Err(row_error(
            line,
            "age",
            format!("age {age} exceeds the cap of {age_cap}"),
        ));
    }
    let count = match cols.count {
        None => 1,
        Some(idx) => {
            let raw = record
                .get(idx)
                .ok_or_else(|| row_error(line, "count", "missing value"))?;
            match parse_count_field(raw, line, "count")? {
                0 => return Err(row_error(line, "count", "count must be >= 1")),
                c => c,
            }
        }
    };
    Ok((journal, category, age, count))
}

/// Writes `sample` as histogram CSV rows under the given labels.
pub fn write_histogram_csv<W: Write>(
    out: W,
    journal: &str,
    category: &str,
    sample: &AgeSample,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["journal", "subject_category", "age", "count"])?;
    for (age, count) in sample.counts() {
        w.write_record([journal, category, &age.to_string(), &count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Table-1 style summary of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dataset_id: String,
    pub n_obs: u64,
    pub mean: f64,
    pub median: f64,
    pub mode: u64,
    pub min: u64,
    pub max: u64,
    pub variance: f64,
    pub dispersion_index: f64,
}

pub fn descriptive_stats(sample: &AgeSample) -> Result<StatsReport> {
    let id = sample.dataset_id().to_string();
    let (Some(mean), Some(variance), Some(median), Some(mode), Some(min), Some(max)) = (
        sample.mean(),
        sample.variance(),
        sample.median(),
        sample.mode(),
        sample.min_age(),
        sample.max_age(),
    ) else {
        return Err(Error::EmptySample(id));
    };
    if mean == 0.0 {
        return Err(Error::DegenerateSample(
            id,
            "mean age is 0, index of dispersion undefined".into(),
        ));
    }
    Ok(StatsReport {
        dataset_id: id,
        n_obs: sample.n_obs(),
        mean,
        median,
        mode,
        min,
        max,
        variance,
        dispersion_index: variance / mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, format: InputFormat) -> Result<ParsedAges> {
        parse_ages(
            text.as_bytes(),
            &IngestOptions {
                format,
                ..IngestOptions::default()
            },
        )
    }

    #[test]
    fn records_are_counted() {
        let p = parse(
            "journal,subject_category,age\nJ1,CAT1,3\nJ1,CAT1,3\nJ1,CAT1,0\n",
            InputFormat::Records,
        )
        .unwrap();
        assert_eq!(p.journals.len(), 1);
        let j1 = &p.journals[0];
        assert_eq!(j1.dataset_id(), "J1");
        assert_eq!(j1.counts(), &BTreeMap::from([(0, 1), (3, 2)]));
        assert_eq!(j1.n_obs(), 3);
        assert_eq!(p.categories[0].counts(), j1.counts());
        assert_eq!(p.journal_category["J1"], "CAT1");
    }

    #[test]
    fn crlf_and_reordered_columns() {
        let p = parse(
            "age,journal,subject_category\r\n5,J1,C\r\n7,J1,C\r\n",
            InputFormat::Records,
        )
        .unwrap();
        assert_eq!(p.journals[0].counts(), &BTreeMap::from([(5, 1), (7, 1)]));
    }

    #[test]
    fn age_cap_is_enforced_with_row_number() {
        let err = parse(
            "journal,subject_category,age,count\nJ1,CAT1,3,2\nJ1,CAT1,200,5\n",
            InputFormat::Histogram,
        )
        .unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn categories_aggregate_journals() {
        let p = parse(
            "journal,subject_category,age,count\nJ1,C,1,2\nJ1,C,4,1\nJ2,C,1,3\nJ2,C,9,1\nJ3,D,2,1\n",
            InputFormat::Histogram,
        )
        .unwrap();
        assert_eq!(p.journals.len(), 3);
        let c = p.find("C").unwrap();
        assert_eq!(c.counts(), &BTreeMap::from([(1, 5), (4, 1), (9, 1)]));
        assert_eq!(c.n_obs(), 7);
        assert_eq!(p.find("D").unwrap().n_obs(), 1);
    }

    #[test]
    fn malformed_rows_name_line_and_field() {
        let cases = [
            ("J1,C,-3", 2, "age"),
            ("J1,C,2.5", 2, "age"),
            ("J1,C,abc", 2, "age"),
            ("J1,C,", 2, "age"),
            (",C,3", 2, "journal"),
            ("J1,,3", 2, "subject_category"),
            ("J1,C,1000", 2, "age"),
        ];
        for (row, want_line, want_field) in cases {
            let text = format!("journal,subject_category,age\n{row}\n");
            match parse(&text, InputFormat::Records) {
                Err(Error::Parse { line, field, .. }) => {
                    assert_eq!((line, field.as_str()), (want_line, want_field), "row {row}")
                }
                other => panic!("row {row}: unexpected {other:?}"),
            }
        }
        for (row, want_field) in [("J1,C,3,0", "count"), ("J1,C,3,-1", "count"), ("J1,C,3,1.5", "count")] {
            let text = format!("journal,subject_category,age,count\n{row}\n");
            match parse(&text, InputFormat::Histogram) {
                Err(Error::Parse { field, .. }) => assert_eq!(field, want_field),
                other => panic!("row {row}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn missing_column_is_reported() {
        match parse("journal,age\nJ1,3\n", InputFormat::Records) {
            Err(Error::Parse { line: 1, field, .. }) => assert_eq!(field, "subject_category"),
            other => panic!("unexpected {other:?}"),
        }
        match parse("journal,subject_category,age\nJ1,C,3\n", InputFormat::Histogram) {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "count"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lenient_mode_skips_and_reports() {
        let p = parse_ages(
            "journal,subject_category,age\nJ1,C,3\nJ1,C,-1\nJ1,C,x\nJ1,C,4\n".as_bytes(),
            &IngestOptions {
                strictness: Strictness::Lenient,
                ..IngestOptions::default()
            },
        )
        .unwrap();
        assert_eq!(p.journals[0].n_obs(), 2);
        assert_eq!(p.rejected.len(), 2);
        assert_eq!(p.rejected[0].line, 3);
        assert_eq!(p.rejected[1].line, 4);
    }

    #[test]
    fn stats_small_samples() {
        let s = descriptive_stats(&AgeSample::from_ages("t", [2, 4, 6])).unwrap();
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.median, 4.0);
        assert!((s.dispersion_index - (8.0 / 3.0) / 4.0).abs() < 1e-15);

        let s = descriptive_stats(&AgeSample::from_ages("t", [0, 0, 1, 3])).unwrap();
        assert_eq!((s.mode, s.min, s.max), (0, 0, 3));
        assert_eq!(s.median, 0.5);
    }

    #[test]
    fn mode_ties_go_to_smallest_age() {
        let s = AgeSample::from_ages("t", [5, 5, 2, 2, 9]);
        assert_eq!(s.mode(), Some(2));
    }

    #[test]
    fn stats_errors() {
        assert!(matches!(
            descriptive_stats(&AgeSample::empty("e")),
            Err(Error::EmptySample(_))
        ));
        assert!(matches!(
            descriptive_stats(&AgeSample::from_ages("z", [0, 0])),
            Err(Error::DegenerateSample(..))
        ));
    }

    #[test]
    fn exceedance_counts_match_definition() {
        let s = AgeSample::from_ages("t", [0, 1, 1, 3, 7]);
        let g = s.exceedance_counts();
        assert_eq!(g.len(), 7);
        for (j, &gj) in g.iter().enumerate() {
            let want = [0u64, 1, 1, 3, 7].iter().filter(|&&a| a > j as u64).count() as u64;
            assert_eq!(gj, want, "j={j}");
        }
    }

    #[test]
    fn from_counts_rejects_zero() {
        assert!(AgeSample::from_counts("t", [(3, 0)]).is_err());
    }
}
