//! Sample ingestion and export, and mesh export.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::SamplePoints;
use crate::error::{Error, Result};
use crate::surface::LevelMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    Csv,
    Ndjson,
}

impl SampleFormat {
    /// `.ndjson` and `.jsonl` select NDJSON; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
        {
            Some(e) if e == "ndjson" || e == "jsonl" => SampleFormat::Ndjson,
            _ => SampleFormat::Csv,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NdjsonRow {
    x: Vec<f64>,
}

pub fn read_samples(path: &Path) -> Result<SamplePoints> {
    let file = File::open(path)?;
    match SampleFormat::from_path(path) {
        SampleFormat::Csv => read_csv(file),
        SampleFormat::Ndjson => read_ndjson(BufReader::new(file)),
    }
}

/// One point per row; a first row that does not parse as numbers is a header.
pub fn read_csv<R: Read>(reader: R) -> Result<SamplePoints> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("row {}: {e}", i + 1))),
        }
    }
    finish(rows)
}

pub fn read_ndjson<R: BufRead>(reader: R) -> Result<SamplePoints> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: NdjsonRow = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        rows.push(row.x);
    }
    finish(rows)
}

fn finish(rows: Vec<Vec<f64>>) -> Result<SamplePoints> {
    if rows.is_empty() {
        return Err(Error::InsufficientData(
            "sample file contains no points".into(),
        ));
    }
    SamplePoints::from_rows(&rows)
}

pub fn write_samples(path: &Path, s: &SamplePoints) -> Result<()> {
    let out = BufWriter::new(File::create(path)?);
    match SampleFormat::from_path(path) {
        SampleFormat::Csv => write_csv(out, s),
        SampleFormat::Ndjson => write_ndjson(out, s),
    }
}

pub fn write_csv<W: Write>(out: W, s: &SamplePoints) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (0..s.dim()).map(|a| format!("x{a}")).collect();
    w.write_record(&header).map_err(csv_err)?;
    for p in s.iter() {
        w.serialize(p).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ndjson<W: Write>(mut out: W, s: &SamplePoints) -> Result<()> {
    for p in s.iter() {
        serde_json::to_writer(&mut out, &NdjsonRow { x: p.to_vec() })
            .map_err(|e| Error::Parse(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        k => Error::Parse(format!("{k:?}")),
    }
}

/// OBJ for surfaces, CSV segment list (`x0,y0,x1,y1`) for curves.
pub fn write_mesh<W: Write>(mut out: W, m: &LevelMesh) -> Result<()> {
    if m.dim == 3 {
        writeln!(out, "# level {}", m.level)?;
        for v in &m.vertices {
            writeln!(out, "v {} {} {}", v[0], v[1], v[2])?;
        }
        for c in &m.cells {
            writeln!(out, "f {} {} {}", c[0] + 1, c[1] + 1, c[2] + 1)?;
        }
    } else {
        writeln!(out, "x0,y0,x1,y1")?;
        for c in &m.cells {
            let (a, b) = (m.vertices[c[0]], m.vertices[c[1]]);
            writeln!(out, "{},{},{},{}", a[0], a[1], b[0], b[1])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_mesh_file(path: &Path, m: &LevelMesh) -> Result<()> {
    write_mesh(BufWriter::new(File::create(path)?), m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_is_optional() {
        let with = read_csv("a,b\n1,2\n3.5,-4\n".as_bytes()).unwrap();
        let without = read_csv("1,2\n3.5,-4\n".as_bytes()).unwrap();
        assert_eq!(with, without);
        assert_eq!(with.point(1), &[3.5, -4.0]);
    }

    #[test]
    fn round_trips_both_formats() {
        let s = SamplePoints::new(3, vec![0.1, 0.2, 0.3, -1.0, 1e-9, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &s).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), s);
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &s).unwrap();
        assert_eq!(read_ndjson(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn rejects_ragged_and_empty_input() {
        assert!(read_csv("1,2\n3,4,5\n".as_bytes()).is_err());
        assert!(read_csv("x,y\n".as_bytes()).is_err());
        assert!(read_ndjson("{\"x\":[1]}\n{\"y\":2}\n".as_bytes()).is_err());
    }
}
