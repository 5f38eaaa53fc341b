//! Table emission in CSV, TSV or JSON lines.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Tsv,
    Json,
}

impl Format {
    pub fn delimiter(self) -> u8 {
        match self {
            Format::Tsv => b'\t',
            _ => b',',
        }
    }
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

/// Write `records` as a table. Delimited formats keep only `columns`;
/// JSON lines keep every field.
pub fn write_table<W: Write>(out: W, format: Format, columns: &[&str], records: &[Value]) -> Result<()> {
    match format {
        Format::Json => {
            let mut out = out;
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        Format::Csv | Format::Tsv => {
            let mut w = csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(out);
            w.write_record(columns)?;
            for r in records {
                w.write_record(columns.iter().map(|c| cell(r.get(*c))))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Open `path` for writing, or stdout when absent.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn delimited_and_json() {
        let rows = vec![json!({"a": 1.5, "b": "x,y", "c": null}), json!({"a": 2, "b": "z"})];
        let mut buf = Vec::new();
        write_table(&mut buf, Format::Csv, &["a", "b", "c"], &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b,c\n1.5,\"x,y\",\n2,z,\n");
        let mut buf = Vec::new();
        write_table(&mut buf, Format::Tsv, &["b"], &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "b\nx,y\nz\n");
        let mut buf = Vec::new();
        write_table(&mut buf, Format::Json, &[], &rows[1..]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "{\"a\":2,\"b\":\"z\"}\n");
    }
}
