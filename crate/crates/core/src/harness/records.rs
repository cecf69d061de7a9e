//! Long-format result rows and their CSV form.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which parses
//! back to the identical `f64`. Empty `trial`, `lo` and `hi` fields mean
//! "aggregate row" and "no interval".

use std::cmp::Ordering;
use std::io::{self, Read, Write};
use std::path::Path;

use log::warn;

pub const HEADER: [&str; 10] = ["experiment", "n", "trial", "seed", "E", "eta", "metric", "value", "lo", "hi"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment: String,
    pub n: usize,
    /// `None` for rows aggregated over trials.
    pub trial: Option<u64>,
    pub seed: u64,
    pub energy: f64,
    pub eta: f64,
    pub metric: String,
    pub value: f64,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl ResultRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(experiment: &str, n: usize, trial: Option<u64>, seed: u64, energy: f64, eta: f64, metric: impl Into<String>, value: f64) -> Self {
        Self {
            experiment: experiment.to_string(),
            n,
            trial,
            seed,
            energy,
            eta,
            metric: metric.into(),
            value,
            lo: None,
            hi: None,
        }
    }

    pub fn with_interval(mut self, lo: f64, hi: f64) -> Self {
        self.lo = Some(lo);
        self.hi = Some(hi);
        self
    }

    /// Orders by `(experiment, n, trial, E, eta, metric)`, the unique key.
    pub fn key_cmp(&self, other: &Self) -> Ordering {
        self.experiment
            .cmp(&other.experiment)
            .then(self.n.cmp(&other.n))
            .then(self.trial.cmp(&other.trial))
            .then(self.energy.total_cmp(&other.energy))
            .then(self.eta.total_cmp(&other.eta))
            .then(self.metric.cmp(&other.metric))
    }

    fn fields(&self) -> [String; 10] {
        [
            self.experiment.clone(),
            self.n.to_string(),
            self.trial.map(|t| t.to_string()).unwrap_or_default(),
            self.seed.to_string(),
            fmt_f64(self.energy),
            fmt_f64(self.eta),
            self.metric.clone(),
            fmt_f64(self.value),
            self.lo.map(fmt_f64).unwrap_or_default(),
            self.hi.map(fmt_f64).unwrap_or_default(),
        ]
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| a.key_cmp(b));
}

/// First duplicated key, if any.
pub fn duplicate_key(records: &[ResultRecord]) -> Option<&ResultRecord> {
    let mut sorted: Vec<&ResultRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.key_cmp(b));
    sorted
        .windows(2)
        .find(|w| w[0].key_cmp(w[1]) == Ordering::Equal)
        .map(|w| w[1])
}

/// Appends rows to an open CSV stream, flushing after every batch.
pub struct RecordWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(w: W) -> io::Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, records: &[ResultRecord]) -> io::Result<()> {
        for r in records {
            self.inner.write_record(r.fields())?;
        }
        self.inner.flush()
    }
}

pub fn write_results<W: Write>(records: &[ResultRecord], w: W) -> io::Result<()> {
    RecordWriter::new(w)?.append(records)
}

pub fn write_results_file(records: &[ResultRecord], path: &Path) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    write_results(records, &mut w)?;
    w.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

/// Rows read back, and whether an incomplete last line was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub records: Vec<ResultRecord>,
    pub truncated_tail: bool,
}

fn parse_opt<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<Option<T>, ReadError> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| ReadError::Malformed {
        line,
        msg: format!("bad {what}: {s:?}"),
    })
}

fn parse_req<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, ReadError> {
    parse_opt(s, line, what)?.ok_or_else(|| ReadError::Malformed {
        line,
        msg: format!("missing {what}"),
    })
}

/// Parses the schema written by [`write_results`]. A last line without its
/// terminating newline is the mark of an interrupted run: it is dropped
/// with a warning and reported in [`ReadOutcome::truncated_tail`].
pub fn read_results<R: Read>(mut r: R) -> Result<ReadOutcome, ReadError> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let truncated_tail = !text.is_empty() && !text.ends_with('\n');
    let complete = if truncated_tail {
        let cut = text.rfind('\n').map_or(0, |i| i + 1);
        warn!("dropping incomplete trailing line: {:?}", &text[cut..]);
        &text[..cut]
    } else {
        &text[..]
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(complete.as_bytes());
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 1;
        let row = row.map_err(|e| ReadError::Malformed {
            line,
            msg: e.to_string(),
        })?;
        if idx == 0 {
            if row.iter().ne(HEADER.iter().copied()) {
                return Err(ReadError::Malformed {
                    line,
                    msg: "unexpected header".into(),
                });
            }
            continue;
        }
        if row.len() != HEADER.len() {
            return Err(ReadError::Malformed {
                line,
                msg: format!("expected {} fields, got {}", HEADER.len(), row.len()),
            });
        }
        records.push(ResultRecord {
            experiment: row[0].to_string(),
            n: parse_req(&row[1], line, "n")?,
            trial: parse_opt(&row[2], line, "trial")?,
            seed: parse_req(&row[3], line, "seed")?,
            energy: parse_req(&row[4], line, "E")?,
            eta: parse_req(&row[5], line, "eta")?,
            metric: row[6].to_string(),
            value: parse_req(&row[7], line, "value")?,
            lo: parse_opt(&row[8], line, "lo")?,
            hi: parse_opt(&row[9], line, "hi")?,
        });
    }
    Ok(ReadOutcome {
        records,
        truncated_tail,
    })
}

pub fn read_results_file(path: &Path) -> Result<ReadOutcome, ReadError> {
    read_results(std::fs::File::open(path)?)
}
