//! File formats: the model file, time-series CSV, bare matrix files, and
//! the sensor-set file.
//!
//! Every writer emits a canonical form and every reader accepts it, so
//! write -> read -> write is byte-identical. Floats are printed with Rust's
//! shortest round-trip formatting and parsed back bit-exactly.
//!
//! Sensor and channel indices are 1-based in all files and messages; the
//! library works 0-based.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fracdyn_core::{FractionalOrders, SensorSet, SystemModel};
use nalgebra::DMatrix;

use crate::CliError;

pub const MODEL_HEADER: &str = "fracdyn-model v1";
pub const SENSORS_HEADER: &str = "fracdyn-sensors v1";

/// A parsed model file: the system plus its free-text provenance notes.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub model: SystemModel,
    pub schema_version: String,
    pub notes: String,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn read_to_lines(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn parse_float(path: &Path, line: usize, token: &str) -> Result<f64, CliError> {
    let value: f64 = token
        .parse()
        .map_err(|_| parse_err(path, line, format!("'{token}' is not a number")))?;
    if !value.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value '{token}'")));
    }
    Ok(value)
}

fn parse_count(path: &Path, line: usize, token: &str) -> Result<usize, CliError> {
    token
        .parse()
        .map_err(|_| parse_err(path, line, format!("'{token}' is not a count")))
}

/// Walks the meaningful (non-blank, non-comment) lines of a file.
struct LineCursor<'a> {
    path: &'a Path,
    lines: Vec<(usize, &'a str)>,
    next: usize,
    last_line: usize,
}

impl<'a> LineCursor<'a> {
    fn new(path: &'a Path, raw: &'a [String]) -> Self {
        let lines: Vec<(usize, &str)> = raw
            .iter()
            .enumerate()
            .map(|(i, l)| (i + 1, l.as_str()))
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .collect();
        LineCursor {
            path,
            lines,
            next: 0,
            last_line: raw.len().max(1),
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let item = self.lines.get(self.next).copied();
        self.next += 1;
        item
    }

    /// Next line, which must start with `keyword`; returns the rest.
    fn keyword(&mut self, keyword: &str) -> Result<(usize, Vec<String>), CliError> {
        let (line, content) = self
            .next()
            .ok_or_else(|| parse_err(self.path, self.last_line, format!("missing '{keyword}'")))?;
        let mut tokens = content.split_whitespace();
        let first = tokens.next().unwrap_or("");
        if first != keyword {
            return Err(parse_err(
                self.path,
                line,
                format!("expected '{keyword}', found '{first}'"),
            ));
        }
        Ok((line, tokens.map(str::to_string).collect()))
    }

    fn matrix_block(&mut self, keyword: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, CliError> {
        let (line_k, extra) = self.keyword(keyword)?;
        if !extra.is_empty() {
            return Err(parse_err(
                self.path,
                line_k,
                format!("'{keyword}' takes no values on its line"),
            ));
        }
        let mut entries = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (line_r, content) = self.next().ok_or_else(|| {
                parse_err(self.path, self.last_line, format!("{keyword}: missing matrix row"))
            })?;
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if tokens.len() != cols {
                return Err(parse_err(
                    self.path,
                    line_r,
                    format!("{keyword}: expected {cols} values in row, found {}", tokens.len()),
                ));
            }
            for token in tokens {
                entries.push(parse_float(self.path, line_r, token)?);
            }
        }
        Ok(DMatrix::from_row_slice(rows, cols, &entries))
    }
}

/// Reads a model file.
pub fn read_model(path: &Path) -> Result<ModelFile, CliError> {
    let raw = read_to_lines(path)?;
    let mut cursor = LineCursor::new(path, &raw);

    let (line, header) = cursor
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty model file"))?;
    let schema_version = match header.strip_prefix("fracdyn-model ") {
        Some(v) => v.trim().to_string(),
        None => return Err(parse_err(path, line, format!("expected '{MODEL_HEADER}' header"))),
    };
    if schema_version != "v1" {
        return Err(parse_err(
            path,
            line,
            format!("unsupported schema version '{schema_version}'"),
        ));
    }

    let (line_n, n_tokens) = cursor.keyword("n")?;
    if n_tokens.len() != 1 {
        return Err(parse_err(path, line_n, "expected 'n <count>'"));
    }
    let n = parse_count(path, line_n, &n_tokens[0])?;

    let (line_p, p_tokens) = cursor.keyword("p")?;
    if p_tokens.len() != 1 {
        return Err(parse_err(path, line_p, "expected 'p <count>'"));
    }
    let p = parse_count(path, line_p, &p_tokens[0])?;

    let (line_a, alpha_tokens) = cursor.keyword("alpha")?;
    if alpha_tokens.len() != n {
        return Err(parse_err(
            path,
            line_a,
            format!("expected {n} alpha values, found {}", alpha_tokens.len()),
        ));
    }
    let mut alpha = Vec::with_capacity(n);
    for token in &alpha_tokens {
        alpha.push(parse_float(path, line_a, token)?);
    }

    let a = cursor.matrix_block("A", n, n)?;
    let b = cursor.matrix_block("B", n, p)?;

    let notes = match cursor.next() {
        None => String::new(),
        Some((line, content)) => match content.strip_prefix("notes:") {
            Some(rest) => rest.trim().to_string(),
            None => {
                return Err(parse_err(path, line, "expected optional 'notes:' line or end of file"))
            }
        },
    };
    if let Some((line, _)) = cursor.next() {
        return Err(parse_err(path, line, "unexpected content after model"));
    }

    let orders = FractionalOrders::new_relaxed(alpha)
        .map_err(|e| parse_err(path, line_a, e.to_string()))?;
    let model = SystemModel::new(orders, a, b)
        .map_err(|e| parse_err(path, line_n, e.to_string()))?;
    Ok(ModelFile {
        model,
        schema_version,
        notes,
    })
}

fn push_row(out: &mut String, row: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
}

/// Writes a model file in canonical form.
pub fn write_model(path: &Path, model: &SystemModel, notes: &str) -> Result<(), CliError> {
    let mut out = String::new();
    let _ = writeln!(out, "{MODEL_HEADER}");
    let _ = writeln!(out, "n {}", model.n());
    let _ = writeln!(out, "p {}", model.p());
    out.push_str("alpha ");
    let mut first = true;
    for v in model.orders().as_vector().iter() {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{v}");
        first = false;
    }
    out.push('\n');
    out.push_str("A\n");
    for i in 0..model.n() {
        push_row(&mut out, model.a().row(i).iter().copied());
    }
    out.push_str("B\n");
    for i in 0..model.n() {
        push_row(&mut out, model.b().row(i).iter().copied());
    }
    let notes = notes.trim();
    if !notes.is_empty() {
        let _ = writeln!(out, "notes: {}", notes.replace('\n', " "));
    }
    write_file(path, &out)
}

/// A parsed time-series CSV: channel names, row-per-sample values, and an
/// optional sample rate carried as a leading comment.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub channels: Vec<String>,
    pub values: DMatrix<f64>,
    pub sample_rate: Option<f64>,
}

/// Reads a CSV with a header row of channel names. Leading `#` comments are
/// allowed; `# sample_rate=<hz>` is recognized.
pub fn read_csv(path: &Path) -> Result<TimeSeries, CliError> {
    let lines = read_to_lines(path)?;
    let mut sample_rate = None;
    let mut header: Option<(usize, Vec<String>)> = None;
    let mut rows: Vec<f64> = Vec::new();
    let mut nrows = 0usize;

    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.trim_start().starts_with('#') {
            if header.is_some() {
                return Err(parse_err(path, line_no, "comments are only allowed before the header"));
            }
            if let Some(rest) = line.trim_start().trim_start_matches('#').trim().strip_prefix("sample_rate=") {
                sample_rate = Some(parse_float(path, line_no, rest.trim())?);
            }
            continue;
        }
        match &header {
            None => {
                let names: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                if names.iter().any(String::is_empty) {
                    return Err(parse_err(path, line_no, "empty channel name in header"));
                }
                header = Some((line_no, names));
            }
            Some((_, names)) => {
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != names.len() {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("expected {} values, found {}", names.len(), cells.len()),
                    ));
                }
                for cell in cells {
                    rows.push(parse_float(path, line_no, cell.trim())?);
                }
                nrows += 1;
            }
        }
    }

    let (_, channels) = header.ok_or_else(|| parse_err(path, lines.len().max(1), "missing header row"))?;
    let values = DMatrix::from_row_slice(nrows, channels.len(), &rows);
    Ok(TimeSeries {
        channels,
        values,
        sample_rate,
    })
}

/// Writes a time-series CSV in canonical form.
pub fn write_csv(
    path: &Path,
    channels: &[String],
    values: &DMatrix<f64>,
    sample_rate: Option<f64>,
) -> Result<(), CliError> {
    let mut out = String::new();
    if let Some(hz) = sample_rate {
        let _ = writeln!(out, "# sample_rate={hz}");
    }
    out.push_str(&channels.join(","));
    out.push('\n');
    for i in 0..values.nrows() {
        let mut first = true;
        for v in values.row(i).iter() {
            if !first {
                out.push(',');
            }
            let _ = write!(out, "{v}");
            first = false;
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Default channel names `prefix1 .. prefixN`.
pub fn numbered_channels(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// Reads a bare whitespace-separated matrix file (`#` comments allowed).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let lines = read_to_lines(path)?;
    let mut entries = Vec::new();
    let mut nrows = 0usize;
    let mut ncols = None;
    for (idx, raw) in lines.iter().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match ncols {
            None => ncols = Some(tokens.len()),
            Some(c) if c != tokens.len() => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("ragged matrix: expected {c} values, found {}", tokens.len()),
                ));
            }
            _ => {}
        }
        for token in tokens {
            entries.push(parse_float(path, line_no, token)?);
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| parse_err(path, lines.len().max(1), "empty matrix file"))?;
    Ok(DMatrix::from_row_slice(nrows, ncols, &entries))
}

/// Writes a bare matrix file in canonical form.
pub fn write_matrix(path: &Path, values: &DMatrix<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..values.nrows() {
        push_row(&mut out, values.row(i).iter().copied());
    }
    write_file(path, &out)
}

/// Contents of a sensor-set file. Indices are 1-based on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorFile {
    pub indices: Vec<usize>, // 0-based in memory
    pub achieved_rank: usize,
    pub target_rank: usize,
    pub feasible: bool,
}

pub fn write_sensors(path: &Path, file: &SensorFile) -> Result<(), CliError> {
    let mut out = String::new();
    let _ = writeln!(out, "{SENSORS_HEADER}");
    out.push_str("indices");
    for i in &file.indices {
        let _ = write!(out, " {}", i + 1);
    }
    out.push('\n');
    let _ = writeln!(out, "achieved_rank {}", file.achieved_rank);
    let _ = writeln!(out, "target_rank {}", file.target_rank);
    let _ = writeln!(out, "feasible {}", file.feasible);
    write_file(path, &out)
}

pub fn read_sensors(path: &Path) -> Result<SensorFile, CliError> {
    let raw = read_to_lines(path)?;
    let mut cursor = LineCursor::new(path, &raw);

    let (line, header) = cursor
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty sensor file"))?;
    if header.trim() != SENSORS_HEADER {
        return Err(parse_err(path, line, format!("expected '{SENSORS_HEADER}' header")));
    }

    let (line_i, index_tokens) = cursor.keyword("indices")?;
    let mut indices = Vec::with_capacity(index_tokens.len());
    for token in &index_tokens {
        let one_based = parse_count(path, line_i, token)?;
        if one_based == 0 {
            return Err(parse_err(path, line_i, "sensor indices are 1-based"));
        }
        indices.push(one_based - 1);
    }
    let (line_a, tokens) = cursor.keyword("achieved_rank")?;
    if tokens.len() != 1 {
        return Err(parse_err(path, line_a, "expected 'achieved_rank <count>'"));
    }
    let achieved_rank = parse_count(path, line_a, &tokens[0])?;
    let (line_t, tokens) = cursor.keyword("target_rank")?;
    if tokens.len() != 1 {
        return Err(parse_err(path, line_t, "expected 'target_rank <count>'"));
    }
    let target_rank = parse_count(path, line_t, &tokens[0])?;
    let (line_f, tokens) = cursor.keyword("feasible")?;
    let feasible = match tokens.as_slice() {
        [t] if t == "true" => true,
        [t] if t == "false" => false,
        _ => return Err(parse_err(path, line_f, "expected 'feasible true|false'")),
    };
    Ok(SensorFile {
        indices,
        achieved_rank,
        target_rank,
        feasible,
    })
}

/// Parses a 1-based sensor list such as `1,3,5`, or `all`.
pub fn parse_sensor_spec(spec: &str, n: usize) -> Result<SensorSet, CliError> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(SensorSet::full(n));
    }
    let mut indices = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let one_based: usize = part
            .parse()
            .map_err(|_| CliError::Usage(format!("'{part}' is not a sensor index")))?;
        if one_based == 0 {
            return Err(CliError::Usage("sensor indices are 1-based".into()));
        }
        indices.push(one_based - 1);
    }
    SensorSet::new(indices, n).map_err(CliError::from)
}

/// Parses a comma-separated list of reals.
pub fn parse_float_list(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("'{part}' is not a number")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use fracdyn_core::FractionalOrders;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let mut dir = std::env::temp_dir();
        dir.push(format!("fracdyn-fmt-{}-{name}", std::process::id()));
        dir
    }

    fn sample_model() -> SystemModel {
        SystemModel::new(
            FractionalOrders::new(vec![0.5, 0.875]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.1, -0.25, 0.0, 0.5]),
            DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
        )
        .unwrap()
    }

    #[test]
    fn model_round_trip_is_byte_identical() {
        let path = temp_path("model");
        write_model(&path, &sample_model(), "round trip check").unwrap();
        let first = fs::read(&path).unwrap();
        let parsed = read_model(&path).unwrap();
        assert_eq!(parsed.notes, "round trip check");
        write_model(&path, &parsed.model, &parsed.notes).unwrap();
        let second = fs::read(&path).unwrap();
        assert_eq!(first, second);
        fs::remove_file(&path).ok();
    }

    #[test]
    fn model_parse_error_names_line() {
        let path = temp_path("badmodel");
        fs::write(&path, "fracdyn-model v1\nn 2\np 1\nalpha 0.5 oops\n").unwrap();
        match read_model(&path) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::remove_file(&path).ok();
    }

    #[test]
    fn csv_round_trip_with_sample_rate() {
        let path = temp_path("csv");
        let values = DMatrix::from_row_slice(3, 2, &[0.1, -2.0, 3.5, 0.0, 1e-9, 7.25]);
        let channels = numbered_channels("x", 2);
        write_csv(&path, &channels, &values, Some(160.0)).unwrap();
        let first = fs::read(&path).unwrap();
        let parsed = read_csv(&path).unwrap();
        assert_eq!(parsed.sample_rate, Some(160.0));
        assert_eq!(parsed.values, values);
        write_csv(&path, &parsed.channels, &parsed.values, parsed.sample_rate).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
        fs::remove_file(&path).ok();
    }

    #[test]
    fn csv_ragged_row_is_an_error_with_line() {
        let path = temp_path("badcsv");
        fs::write(&path, "a,b\n1.0,2.0\n3.0\n").unwrap();
        match read_csv(&path) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        fs::remove_file(&path).ok();
    }

    #[test]
    fn sensor_file_round_trip() {
        let path = temp_path("sensors");
        let file = SensorFile {
            indices: vec![0, 2, 5],
            achieved_rank: 7,
            target_rank: 7,
            feasible: true,
        };
        write_sensors(&path, &file).unwrap();
        let first = fs::read(&path).unwrap();
        let parsed = read_sensors(&path).unwrap();
        assert_eq!(parsed, file);
        write_sensors(&path, &parsed).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
        fs::remove_file(&path).ok();
    }

    #[test]
    fn sensor_spec_parsing() {
        assert_eq!(parse_sensor_spec("all", 3).unwrap().indices(), &[0, 1, 2]);
        assert_eq!(parse_sensor_spec("1,3", 3).unwrap().indices(), &[0, 2]);
        assert!(parse_sensor_spec("0", 3).is_err());
        assert!(parse_sensor_spec("4", 3).is_err());
        assert!(parse_sensor_spec("", 3).unwrap().is_empty());
    }

    mod round_trip_properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            /// Any finite values survive a CSV write/read/write unchanged,
            /// byte for byte.
            #[test]
            fn csv_is_bit_exact(values in proptest::collection::vec(
                prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
                2..24,
            )) {
                let rows = values.len() / 2;
                let m = DMatrix::from_row_slice(rows, 2, &values[..rows * 2]);
                let path = {
                    let mut p = std::env::temp_dir();
                    p.push(format!("fracdyn-prop-{}-{rows}.csv", std::process::id()));
                    p
                };
                write_csv(&path, &numbered_channels("c", 2), &m, None).unwrap();
                let first = fs::read(&path).unwrap();
                let parsed = read_csv(&path).unwrap();
                prop_assert_eq!(&parsed.values, &m);
                write_csv(&path, &parsed.channels, &parsed.values, parsed.sample_rate).unwrap();
                let second = fs::read(&path).unwrap();
                fs::remove_file(&path).ok();
                prop_assert_eq!(first, second);
            }
        }
    }
}
