//! Series and window data model plus CSV ingestion.
//!
//! A series is an epoch-ordered list of `d`-dimensional sample vectors.
//! Detectors consume epoch order only; the optional timestamp column is
//! carried along for reporting and never used in any computation.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub epoch: u64,
    pub timestamp: i64,
    pub values: Vec<f64>,
}

/// An immutable, validated series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    d: usize,
    points: Vec<SeriesPoint>,
}

/// A contiguous index range `[start, start + len)` into a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

impl Series {
    /// Build a series from points, validating dimension, finiteness and
    /// strictly increasing epochs.
    pub fn new(points: Vec<SeriesPoint>) -> Result<Self> {
        let d = match points.first() {
            Some(p) => p.values.len(),
            None => return Err(Error::Validation("series is empty".into())),
        };
        if d == 0 {
            return Err(Error::Validation("dimension must be at least 1".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.values.len() != d {
                return Err(Error::Validation(format!(
                    "point {i} has dimension {} (expected {d})",
                    p.values.len()
                )));
            }
            if let Some(j) = p.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "point {i} (epoch {}) has a non-finite value in column {}",
                    p.epoch,
                    j + 1
                )));
            }
            if i > 0 && points[i - 1].epoch >= p.epoch {
                return Err(Error::Validation(format!(
                    "epoch {} at point {i} does not increase",
                    p.epoch
                )));
            }
        }
        Ok(Self { d, points })
    }

    /// Series from bare vectors, with epochs `0..n` and timestamps equal to
    /// the epoch.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let points = rows
            .into_iter()
            .enumerate()
            .map(|(i, values)| SeriesPoint {
                epoch: i as u64,
                timestamp: i as i64,
                values,
            })
            .collect();
        Self::new(points)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SeriesPoint] {
        &self.points
    }

    /// The vectors inside `w`, in epoch order.
    pub fn window_view(&self, w: Window) -> Result<Vec<&[f64]>> {
        if w.end() > self.len() {
            return Err(Error::Range(format!(
                "window [{}, {}) exceeds series length {}",
                w.start,
                w.end(),
                self.len()
            )));
        }
        Ok(self.points[w.start..w.end()]
            .iter()
            .map(|p| p.values.as_slice())
            .collect())
    }

    /// Maximal run of non-overlapping consecutive windows of `block_len`
    /// points; the trailing remainder is dropped.
    pub fn split_blocks(&self, block_len: usize) -> Result<Vec<Window>> {
        split_blocks(self.len(), block_len)
    }

    /// Write the series as CSV (`epoch,timestamp,v1..vd` with a header).
    pub fn write_csv<W: Write>(&self, out: W, delimiter: u8) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
        let mut header = vec!["epoch".to_string(), "timestamp".to_string()];
        header.extend((1..=self.d).map(|j| format!("v{j}")));
        wr.write_record(&header).map_err(csv_io)?;
        for p in &self.points {
            let mut rec = vec![p.epoch.to_string(), p.timestamp.to_string()];
            rec.extend(p.values.iter().map(|v| format!("{v:?}")));
            wr.write_record(&rec).map_err(csv_io)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn split_blocks(series_len: usize, block_len: usize) -> Result<Vec<Window>> {
    if block_len < 2 {
        return arg(format!("block length must be at least 2, got {block_len}"));
    }
    Ok((0..series_len / block_len)
        .map(|k| Window::new(k * block_len, block_len))
        .collect())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Whether the first CSV row is a header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Treat the first row as a header when its first field is not an integer.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub header: HeaderMode,
    /// The second column is a timestamp rather than a value.
    pub has_timestamp: bool,
    /// Sort rows by epoch instead of rejecting out-of-order input.
    pub reorder_by_epoch: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            header: HeaderMode::Auto,
            has_timestamp: false,
            reorder_by_epoch: false,
        }
    }
}

/// Parse a series from CSV with columns `epoch[,timestamp],v1,...,vd`.
///
/// Line numbers in errors are 1-based data-file lines.
pub fn parse_series<R: Read>(input: R, opts: &CsvOptions) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let lead = if opts.has_timestamp { 2 } else { 1 };
    let mut points = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if idx == 0 {
            let first_is_int = rec.get(0).map(|f| f.parse::<u64>().is_ok()).unwrap_or(false);
            let skip = match opts.header {
                HeaderMode::Present => true,
                HeaderMode::Absent => false,
                HeaderMode::Auto => !first_is_int,
            };
            if skip {
                continue;
            }
        }
        if rec.len() <= lead {
            return Err(Error::Parse {
                line,
                message: format!("expected at least {} columns, found {}", lead + 1, rec.len()),
            });
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} columns, found {}", rec.len()),
                })
            }
            _ => {}
        }
        let epoch: u64 = rec[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("epoch `{}` is not a non-negative integer", &rec[0]),
        })?;
        let timestamp: i64 = if opts.has_timestamp {
            rec[1].parse().map_err(|_| Error::Parse {
                line,
                message: format!("timestamp `{}` is not an integer", &rec[1]),
            })?
        } else {
            epoch as i64
        };
        let values = rec
            .iter()
            .skip(lead)
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("value `{f}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("line {line}: non-finite value")));
        }
        points.push(SeriesPoint {
            epoch,
            timestamp,
            values,
        });
    }

    if opts.reorder_by_epoch {
        points.sort_by_key(|p| p.epoch);
        if let Some(w) = points.windows(2).find(|w| w[0].epoch == w[1].epoch) {
            return Err(Error::Validation(format!("duplicate epoch {}", w[0].epoch)));
        }
    } else if let Some(w) = points.windows(2).find(|w| w[0].epoch >= w[1].epoch) {
        let kind = if w[0].epoch == w[1].epoch {
            "duplicate"
        } else {
            "out-of-order"
        };
        return Err(Error::Validation(format!(
            "{kind} epoch {} (enable reorder-by-epoch to sort)",
            w[1].epoch
        )));
    }
    Series::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, opts: &CsvOptions) -> Result<Series> {
        parse_series(text.as_bytes(), opts)
    }

    #[test]
    fn parses_plain_rows() {
        let s = parse("0,1.0\n1,2.0\n2,3.0\n", &CsvOptions::default()).unwrap();
        assert_eq!(s.dim(), 1);
        assert_eq!(s.len(), 3);
        assert_eq!(s.points()[2].values, vec![3.0]);
    }

    #[test]
    fn header_and_timestamp() {
        let opts = CsvOptions {
            has_timestamp: true,
            ..Default::default()
        };
        let s = parse("epoch,ts,a,b\n0,100,1,2\n1,90,3,4\n", &opts).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.points()[1].timestamp, 90);
    }

    #[test]
    fn reorders_when_enabled() {
        let text = "2,3.0\n0,1.0\n1,2.0\n";
        assert!(matches!(
            parse(text, &CsvOptions::default()),
            Err(Error::Validation(_))
        ));
        let opts = CsvOptions {
            reorder_by_epoch: true,
            ..Default::default()
        };
        let s = parse(text, &opts).unwrap();
        let epochs: Vec<u64> = s.points().iter().map(|p| p.epoch).collect();
        assert_eq!(epochs, vec![0, 1, 2]);
        assert_eq!(s.points()[0].values, vec![1.0]);
    }

    #[test]
    fn rejects_bad_value_with_line() {
        match parse("0,abc\n", &CsvOptions { header: HeaderMode::Absent, ..Default::default() }) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_nan_and_duplicates() {
        assert!(matches!(
            parse("0,1\n1,NaN\n", &CsvOptions::default()),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            parse("0,1\n0,2\n", &CsvOptions::default()),
            Err(Error::Validation(_))
        ));
        let opts = CsvOptions {
            reorder_by_epoch: true,
            ..Default::default()
        };
        assert!(matches!(parse("1,1\n1,2\n", &opts), Err(Error::Validation(_))));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        match parse("0,1,2\n1,3\n", &CsvOptions::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn custom_delimiter() {
        let opts = CsvOptions {
            delimiter: b'\t',
            ..Default::default()
        };
        let s = parse("0\t1.5\t2\n1\t3\t4\n", &opts).unwrap();
        assert_eq!(s.dim(), 2);
    }

    #[test]
    fn windows() {
        let s = Series::from_rows((0..5).map(|i| vec![i as f64]).collect()).unwrap();
        let v = s.window_view(Window::new(1, 3)).unwrap();
        assert_eq!(v, vec![&[1.0][..], &[2.0][..], &[3.0][..]]);
        assert_eq!(s.window_view(Window::new(0, 5)).unwrap().len(), 5);
        assert!(matches!(s.window_view(Window::new(4, 3)), Err(Error::Range(_))));
    }

    #[test]
    fn blocks() {
        assert_eq!(split_blocks(5250, 250).unwrap().len(), 21);
        let b = split_blocks(10, 4).unwrap();
        assert_eq!(b, vec![Window::new(0, 4), Window::new(4, 4)]);
        assert!(split_blocks(3, 4).unwrap().is_empty());
        assert!(split_blocks(10, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = Series::from_rows(vec![vec![0.1, -2.5], vec![1e-300, 3.0]]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, b',').unwrap();
        let opts = CsvOptions {
            has_timestamp: true,
            ..Default::default()
        };
        let back = parse_series(buf.as_slice(), &opts).unwrap();
        assert_eq!(back, s);
    }
}
