//! Columnar text format for feature-vector datasets.
//!
//! CSV with a header row `id,camera,split,x0,x1,...,x{D-1}` and one sample per
//! line; `split` is one of `train`, `query`, `gallery`. Values are written in
//! shortest round-trip decimal form, so reading a written file reproduces the
//! dataset exactly.

use std::path::Path;

use super::{Dataset, Payload, Sample, Split};
use crate::error::{Error, Result};

pub fn write_dataset_table(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = [&dataset.train, &dataset.query, &dataset.gallery]
        .into_iter()
        .flatten()
        .next()
        .map(|s| match &s.payload {
            Payload::Features(v) => Ok(v.len()),
            Payload::Image(_) => Err(Error::invalid("only feature-vector datasets can be written as a table")),
        })
        .transpose()?
        .unwrap_or(0);

    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "camera".to_string(), "split".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for split in [Split::Train, Split::Query, Split::Gallery] {
        for s in dataset.split(split) {
            let Payload::Features(values) = &s.payload else {
                return Err(Error::invalid("only feature-vector datasets can be written as a table"));
            };
            if values.len() != dim {
                return Err(Error::ShapeMismatch {
                    context: "dataset table row",
                    expected: dim,
                    actual: values.len(),
                });
            }
            let mut row = vec![s.identity.to_string(), s.camera.to_string(), split.as_str().to_string()];
            row.extend(values.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_dataset_table(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingPath(path.to_path_buf()));
    }
    let fmt = |line: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        reason: format!("line {line}: {reason}"),
    };
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 4 || &header[0] != "id" || &header[1] != "camera" || &header[2] != "split" {
        return Err(fmt(1, "expected header id,camera,split,x0,...".into()));
    }
    let dim = header.len() - 3;
    let mut ds = Dataset::default();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != dim + 3 {
            return Err(fmt(line, format!("expected {} fields, got {}", dim + 3, rec.len())));
        }
        let identity = rec[0].parse().map_err(|e| fmt(line, format!("bad id: {e}")))?;
        let camera = rec[1].parse().map_err(|e| fmt(line, format!("bad camera: {e}")))?;
        let split: Split = rec[2].parse().map_err(|e: Error| fmt(line, e.to_string()))?;
        let values = rec
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| fmt(line, format!("bad value: {e}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(fmt(line, "non-finite feature value".into()));
        }
        let sample = Sample {
            payload: Payload::Features(values),
            identity,
            camera,
        };
        match split {
            Split::Train => ds.train.push(sample),
            Split::Query => ds.query.push(sample),
            Split::Gallery => ds.gallery.push(sample),
        }
    }
    Ok(ds)
}
