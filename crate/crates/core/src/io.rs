//! File formats: JSON model files, line-oriented observation and path files,
//! and CSV tables with a `#`-prefixed metadata header.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bounds::{BoundsReport, BoundsVerification, PositionClass};
use crate::error::{Error, Result};
use crate::inference::PosteriorTables;
use crate::model::{EmissionModel, ModelSpec, ObservationSequence, StatePath};
use crate::refine::{Metrics, RefinementTrace};

pub fn model_to_json(spec: &ModelSpec) -> Result<String> {
    Ok(serde_json::to_string_pretty(spec)?)
}

/// Parses and validates a model.
pub fn model_from_json(text: &str) -> Result<ModelSpec> {
    let spec: ModelSpec = serde_json::from_str(text)?;
    spec.ensure_valid()?;
    Ok(spec)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec> {
    model_from_json(&fs::read_to_string(path)?)
}

pub fn save_model(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_json(spec)? + "\n")?;
    Ok(())
}

/// Hex SHA-256 of the compact JSON encoding.
pub fn model_hash(spec: &ModelSpec) -> Result<String> {
    let bytes = serde_json::to_vec(spec)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One observation per non-empty line: a symbol name for table emissions,
/// a real number for Gaussian emissions. Lines starting with `#` are skipped.
pub fn parse_observations(text: &str, spec: &ModelSpec) -> Result<ObservationSequence> {
    let tokens = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match &spec.emission {
        EmissionModel::Gaussian { .. } => tokens
            .map(|(line, tok)| {
                tok.parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {line}: expected a real number, got {tok:?}"))
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(ObservationSequence::Reals),
        table => tokens
            .map(|(line, tok)| {
                table
                    .symbol_index(tok)
                    .ok_or_else(|| Error::Parse(format!("line {line}: unknown symbol {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(ObservationSequence::Symbols),
    }
}

pub fn load_observations(path: impl AsRef<Path>, spec: &ModelSpec) -> Result<ObservationSequence> {
    parse_observations(&fs::read_to_string(path)?, spec)
}

pub fn format_observations(obs: &ObservationSequence, spec: &ModelSpec) -> Result<String> {
    let mut out = String::new();
    match obs {
        ObservationSequence::Reals(xs) => {
            for x in xs {
                out.push_str(&format!("{x}\n"));
            }
        }
        ObservationSequence::Symbols(symbols) => {
            let alphabet = spec.emission.alphabet().ok_or_else(|| {
                Error::Unsupported("symbol observations need a table emission model".into())
            })?;
            for &a in symbols {
                let name = alphabet
                    .get(a)
                    .ok_or_else(|| Error::Parse(format!("symbol index {a} outside alphabet")))?;
                out.push_str(name);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// A state path as 1-based labels, whitespace separated.
pub fn parse_path(text: &str) -> Result<StatePath> {
    let labels = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| Error::Parse(format!("expected a state label, got {tok:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    StatePath::from_one_based(&labels)
}

pub fn load_path(path: impl AsRef<Path>) -> Result<StatePath> {
    parse_path(&fs::read_to_string(path)?)
}

/// Formats a float so that it parses back to the same value; `-inf`, `inf`
/// and `NaN` are spelled as Rust parses them.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// A CSV table preceded by `# key: value` metadata lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        CsvTable {
            metadata: Vec::new(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Adds a metadata entry. Newlines in the value are replaced by spaces.
    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((
            key.to_string(),
            value.to_string().replace(['\n', '\r'], " "),
        ));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut metadata = Vec::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim_start();
            let (k, v) = body.split_once(':').unwrap_or((body, ""));
            metadata.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let columns = reader.headers()?.iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(CsvTable {
            metadata,
            columns,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(fs::File::create(path)?)
    }
}

/// Long-format smoothing dump with 1-based `t` and `state`.
pub fn posterior_table(tables: &PosteriorTables) -> CsvTable {
    let mut table = CsvTable::new(["t", "state", "probability"]);
    for (t, row) in tables.smoothing.iter().enumerate() {
        for (s, &p) in row.iter().enumerate() {
            table.push(vec![(t + 1).to_string(), (s + 1).to_string(), fmt_f64(p)]);
        }
    }
    table
}

/// Viterbi and PMAP paths (1-based states) with their classification probabilities.
pub fn decode_table(
    tables: &PosteriorTables,
    viterbi: &StatePath,
    pmap: &StatePath,
) -> Result<CsvTable> {
    let rho_v = tables.classification_probabilities(viterbi)?;
    let rho_p = tables.classification_probabilities(pmap)?;
    let mut table = CsvTable::new(["t", "viterbi", "pmap", "rho_viterbi", "rho_pmap"]);
    for t in 0..viterbi.len() {
        table.push(vec![
            (t + 1).to_string(),
            (viterbi[t] + 1).to_string(),
            (pmap[t] + 1).to_string(),
            fmt_f64(rho_v[t]),
            fmt_f64(rho_p[t]),
        ]);
    }
    Ok(table)
}

fn metric_cells(metrics: &Metrics) -> [String; 5] {
    [
        fmt_opt(metrics.errors),
        fmt_opt_f64(metrics.expected_errors),
        fmt_opt_f64(metrics.rho_min_cond),
        fmt_f64(metrics.rho_min_uncond),
        fmt_f64(metrics.log_posterior),
    ]
}

/// One row per iteration, `m = 0` being the unrestricted Viterbi path.
pub fn trace_table(trace: &RefinementTrace) -> CsvTable {
    let mut table = CsvTable::new([
        "m",
        "t_m",
        "w_m",
        "errors",
        "expected_errors",
        "rho_min_cond",
        "rho_min_uncond",
        "log_posterior",
    ]);
    let mut row = vec!["0".to_string(), String::new(), String::new()];
    row.extend(metric_cells(&trace.initial_metrics));
    table.push(row);
    for (i, it) in trace.iterations.iter().enumerate() {
        let mut row = vec![
            (i + 1).to_string(),
            (it.time + 1).to_string(),
            (it.state + 1).to_string(),
        ];
        row.extend(metric_cells(&it.metrics));
        table.push(row);
    }
    table
}

/// One-row summary of a single alignment.
pub fn metrics_table(m: usize, admissible: bool, metrics: &Metrics) -> CsvTable {
    let mut table = CsvTable::new([
        "m",
        "admissible",
        "errors",
        "expected_errors",
        "rho_min_cond",
        "rho_min_uncond",
        "log_posterior",
        "expected_errors_uncond",
    ]);
    let mut row = vec![m.to_string(), admissible.to_string()];
    row.extend(metric_cells(metrics));
    row.push(fmt_f64(metrics.expected_errors_uncond));
    table.push(row);
    table
}

const BOUNDS_COLUMNS: [&str; 4] = ["position_class", "bound", "min_observed_rho", "margin"];

/// Bounds alone; the observed columns stay empty.
pub fn bounds_table(report: &BoundsReport, stationary_start: bool) -> CsvTable {
    let mut table = CsvTable::new(BOUNDS_COLUMNS);
    for class in [
        PositionClass::First,
        PositionClass::Interior,
        PositionClass::Last,
    ] {
        table.push(vec![
            class.label().into(),
            fmt_f64(report.bound_for(class, stationary_start)),
            String::new(),
            String::new(),
        ]);
    }
    table
}

pub fn bounds_verification_table(v: &BoundsVerification) -> CsvTable {
    let mut table = CsvTable::new(BOUNDS_COLUMNS);
    for c in &v.classes {
        table.push(vec![
            c.class.label().into(),
            fmt_f64(c.bound),
            fmt_f64(c.min_observed_rho),
            fmt_f64(c.margin),
        ]);
    }
    table
}
