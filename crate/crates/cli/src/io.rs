//! Signal CSV files and atomic writes.
//!
//! A signal file starts with `# rate_hz=<value>`, then a header line, then one
//! sample per row. Single signals use the header `value`; dataset records use
//! `clean,contaminated,mask`. Values are printed in Rust's shortest
//! round-trip form, so reading back is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use eegemd::signal::TimeSeries;
use eegemd::synth::DatasetRecord;
use eegemd::{Error, Result};
use serde::Serialize;

const RATE_PREFIX: &str = "# rate_hz=";
const SINGLE_HEADER: [&str; 1] = ["value"];
const RECORD_HEADER: [&str; 3] = ["clean", "contaminated", "mask"];

/// Write `bytes` to a sibling temporary file, then rename it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Pretty JSON, written atomically with a trailing newline.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// The columns of a parsed signal file.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalFile {
    Single(TimeSeries),
    Record {
        clean: TimeSeries,
        contaminated: TimeSeries,
        mask: Vec<u8>,
    },
}

impl SignalFile {
    /// The signal to process: the value column, or the contaminated column
    /// of a record.
    pub fn observed(&self) -> &TimeSeries {
        match self {
            Self::Single(ts) => ts,
            Self::Record { contaminated, .. } => contaminated,
        }
    }

    pub fn rate(&self) -> f64 {
        self.observed().rate()
    }

    pub fn len(&self) -> usize {
        self.observed().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_value(path: &Path, line: usize, field: &str, column: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("{column}: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("{column}: `{field}` is not finite")));
    }
    Ok(v)
}

pub fn parse_signal_csv(text: &str, path: &Path) -> Result<SignalFile> {
    let mut lines = text.splitn(2, '\n');
    let first = lines.next().unwrap_or("").trim_end_matches('\r');
    let rest = lines.next().unwrap_or("");
    let rate_text = first
        .strip_prefix(RATE_PREFIX)
        .ok_or_else(|| Error::MissingRateHeader { path: path.to_path_buf() })?;
    let rate: f64 = rate_text
        .trim()
        .parse()
        .map_err(|_| parse_error(path, 1, format!("rate `{rate_text}` is not a number")))?;
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(parse_error(path, 1, format!("rate must be positive and finite, got {rate}")));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(rest.as_bytes());
    // Line numbers below are 1-based in the whole file; the rate header is line 1.
    let header = reader
        .headers()
        .map_err(|e| parse_error(path, 2, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    let is_record = if names == SINGLE_HEADER {
        false
    } else if names == RECORD_HEADER {
        true
    } else {
        return Err(parse_error(
            path,
            2,
            format!(
                "unknown header `{}` (expected `{}` or `{}`)",
                names.join(","),
                SINGLE_HEADER.join(","),
                RECORD_HEADER.join(",")
            ),
        ));
    };

    let mut columns: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut mask = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize + 1).unwrap_or(0);
            parse_error(path, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line() as usize + 1).unwrap_or(0);
        if is_record {
            columns[0].push(parse_value(path, line, &row[0], "clean")?);
            columns[1].push(parse_value(path, line, &row[1], "contaminated")?);
            mask.push(match &row[2] {
                "0" => 0,
                "1" => 1,
                other => return Err(parse_error(path, line, format!("mask: `{other}` is not 0 or 1"))),
            });
        } else {
            columns[0].push(parse_value(path, line, &row[0], "value")?);
        }
    }
    let found = columns[0].len();
    if found < 2 {
        return Err(Error::TooShort { needed: 2, found });
    }
    let [first_col, second_col] = columns;
    if is_record {
        Ok(SignalFile::Record {
            clean: TimeSeries::new(first_col, rate)?,
            contaminated: TimeSeries::new(second_col, rate)?,
            mask,
        })
    } else {
        Ok(SignalFile::Single(TimeSeries::new(first_col, rate)?))
    }
}

pub fn read_signal_file(path: &Path) -> Result<SignalFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_signal_csv(&text, path)
}

/// The value column, or the contaminated column of a record file.
pub fn read_signal_csv(path: &Path) -> Result<TimeSeries> {
    Ok(read_signal_file(path)?.observed().clone())
}

/// A record file as a [`DatasetRecord`], checking its invariants.
pub fn read_record_csv(path: &Path, seed: u64) -> Result<DatasetRecord> {
    match read_signal_file(path)? {
        SignalFile::Record {
            clean,
            contaminated,
            mask,
        } => {
            let record = DatasetRecord {
                clean,
                contaminated,
                artifact_mask: mask,
                seed,
            };
            record.validate().map_err(|e| Error::CorruptFile {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            Ok(record)
        }
        SignalFile::Single(_) => Err(parse_error(path, 2, "expected a `clean,contaminated,mask` record file")),
    }
}

fn rate_line(rate: f64) -> String {
    format!("{RATE_PREFIX}{rate:?}\n")
}

pub fn signal_csv_string(ts: &TimeSeries) -> String {
    let mut out = rate_line(ts.rate());
    out.push_str(SINGLE_HEADER[0]);
    out.push('\n');
    for v in ts.samples() {
        let _ = writeln!(out, "{v:?}");
    }
    out
}

pub fn record_csv_string(record: &DatasetRecord) -> String {
    let mut out = rate_line(record.clean.rate());
    out.push_str(&RECORD_HEADER.join(","));
    out.push('\n');
    for ((c, x), m) in record
        .clean
        .samples()
        .iter()
        .zip(record.contaminated.samples())
        .zip(&record.artifact_mask)
    {
        let _ = writeln!(out, "{c:?},{x:?},{m}");
    }
    out
}

pub fn write_signal_csv(ts: &TimeSeries, path: &Path) -> Result<()> {
    write_atomic(path, signal_csv_string(ts).as_bytes())
}

pub fn write_record_csv(record: &DatasetRecord, path: &Path) -> Result<()> {
    write_atomic(path, record_csv_string(record).as_bytes())
}

/// `record_0007.csv` style file name.
pub fn record_file_name(index: usize) -> String {
    format!("record_{index:04}.csv")
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn single_round_trip() {
        let ts = TimeSeries::new(vec![0.1 + 0.2, -0.0, 1e-300, -7.25e12, 5e-324], 250.0).unwrap();
        let back = parse_signal_csv(&signal_csv_string(&ts), path()).unwrap();
        let SignalFile::Single(back) = back else { panic!("wrong kind") };
        assert_eq!(back.rate(), 250.0);
        for (a, b) in ts.samples().iter().zip(back.samples()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn record_round_trip() {
        let clean = TimeSeries::new(vec![1.0, 2.0, 3.0], 128.5).unwrap();
        let record = DatasetRecord {
            contaminated: clean.with_samples(vec![1.0, 2.5, 3.0]).unwrap(),
            clean,
            artifact_mask: vec![0, 1, 0],
            seed: 3,
        };
        let text = record_csv_string(&record);
        assert!(text.starts_with("# rate_hz=128.5\nclean,contaminated,mask\n"));
        let back = parse_signal_csv(&text, path()).unwrap();
        assert_eq!(
            back,
            SignalFile::Record {
                clean: record.clean.clone(),
                contaminated: record.contaminated.clone(),
                mask: vec![0, 1, 0],
            }
        );
        assert_eq!(back.observed(), &record.contaminated);
    }

    #[test]
    fn missing_header() {
        assert!(matches!(
            parse_signal_csv("value\n1\n2\n", path()),
            Err(Error::MissingRateHeader { .. })
        ));
        assert!(matches!(parse_signal_csv("", path()), Err(Error::MissingRateHeader { .. })));
    }

    #[test]
    fn empty_data_is_too_short() {
        assert!(matches!(
            parse_signal_csv("# rate_hz=250\nvalue\n", path()),
            Err(Error::TooShort { found: 0, .. })
        ));
    }

    #[test]
    fn bad_rows_report_their_line() {
        let err = parse_signal_csv("# rate_hz=250\nvalue\n1.0\n2.0\nabc\n", path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err}");
        let err = parse_signal_csv("# rate_hz=250\nvalue\n1.0\nNaN\n", path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_signal_csv("# rate_hz=250\nclean,contaminated,mask\n1,1,0\n1,1,2\n", path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_signal_csv("# rate_hz=250\nclean,contaminated,mask\n1,1,0\n1,1\n", path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let err = parse_signal_csv("# rate_hz=-3\nvalue\n1\n2\n", path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_signal_csv("# rate_hz=250\nvolts\n1\n2\n", path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn record_invariants_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "# rate_hz=250\nclean,contaminated,mask\n1,1,0\n1,2,0\n").unwrap();
        assert!(matches!(read_record_csv(&p, 0), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn atomic_write_replaces_and_cleans_up() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_json_atomic(&p, &vec![1, 2, 3]).unwrap();
        write_json_atomic(&p, &vec![4]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "[\n  4\n]\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
