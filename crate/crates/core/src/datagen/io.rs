//! Newline-delimited JSON: a manifest line followed by one record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetManifest, LabeledExample};
use crate::nn::{HeterogeneousInput, Point3};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    points: Vec<Point3>,
    tabular: Vec<f64>,
    label: u8,
}

pub fn write_dataset_to<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    dataset.check_integrity()?;
    serde_json::to_writer(&mut out, &dataset.manifest)?;
    out.write_all(b"\n")?;
    for e in &dataset.examples {
        let rec = Record {
            points: e.input.cloud.points().to_vec(),
            tabular: e.input.tabular.values().to_vec(),
            label: e.label,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Refuses empty datasets.
pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.check_integrity()?;
    write_dataset_to(dataset, BufWriter::new(File::create(path)?))
}

/// A final line without its newline terminator is treated as truncation
/// (integrity error) rather than a syntax error.
pub fn read_dataset_from<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = BufReader::new(input);
    let mut manifest: Option<DatasetManifest> = None;
    let mut examples = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim_end_matches(['\n', '\r']);
        if text.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| {
            if !complete {
                Error::Integrity(format!("line {line_no}: truncated record ({e})"))
            } else {
                Error::Parse {
                    line: line_no,
                    message: format!("column {}: {e}", e.column()),
                }
            }
        };
        if manifest.is_none() {
            manifest = Some(serde_json::from_str(text).map_err(parse_err)?);
            continue;
        }
        let rec: Record = serde_json::from_str(text).map_err(parse_err)?;
        let input = HeterogeneousInput::from_parts(rec.points, rec.tabular).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if !complete {
            return Err(Error::Integrity(format!("line {line_no}: missing final newline")));
        }
        examples.push(LabeledExample { input, label: rec.label });
    }
    let manifest = manifest.ok_or_else(|| Error::Integrity("dataset file is empty".into()))?;
    let ds = Dataset { manifest, examples };
    ds.check_integrity()?;
    Ok(ds)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_dataset_from(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_hetero, generate_xi};
    use super::*;

    fn bytes(ds: &Dataset) -> Vec<u8> {
        let mut v = Vec::new();
        write_dataset_to(ds, &mut v).unwrap();
        v
    }

    #[test]
    fn round_trip_is_bitwise() {
        for ds in [generate_xi(9, 3, 0.05).unwrap(), generate_hetero(6, 5, 3, 1, 2).unwrap()] {
            let raw = bytes(&ds);
            let back = read_dataset_from(raw.as_slice()).unwrap();
            assert_eq!(back, ds);
            for (a, b) in back.examples.iter().zip(&ds.examples) {
                for (p, q) in a.input.cloud.points().iter().zip(b.input.cloud.points()) {
                    assert_eq!(p.map(f64::to_bits), q.map(f64::to_bits));
                }
            }
            assert_eq!(bytes(&back), raw);
        }
    }

    #[test]
    fn truncation_is_an_integrity_error() {
        let raw = bytes(&generate_xi(5, 1, 0.05).unwrap());
        let cut = &raw[..raw.len() - 40];
        assert!(matches!(read_dataset_from(cut), Err(Error::Integrity(_))));
        // dropping whole records is caught by the manifest count
        let text = String::from_utf8(raw).unwrap();
        let fewer: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_dataset_from(fewer.as_bytes()), Err(Error::Integrity(_))));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let raw = bytes(&generate_xi(3, 1, 0.05).unwrap());
        let mut lines: Vec<String> = String::from_utf8(raw).unwrap().lines().map(String::from).collect();
        lines[2] = "{\"points\": [[1,2]]}".into();
        let text = lines.join("\n") + "\n";
        match read_dataset_from(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(read_dataset_from(&b""[..]).is_err());
        let mut ds = generate_xi(2, 0, 0.0).unwrap();
        ds.examples.clear();
        ds.manifest.n_examples = 0;
        let mut sink = Vec::new();
        assert!(write_dataset_to(&ds, &mut sink).is_err());
        assert!(sink.is_empty());
    }
}
