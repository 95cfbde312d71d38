//! CSV interchange: header `x0,...,x{N-1}[,label]`, one point per row,
//! coordinates written with 17 significant digits.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{GeometryError, PointCloud};

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(cloud: &PointCloud, out: W) -> Result<(), GeometryError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..cloud.dim()).map(|i| format!("x{i}")).collect();
    if cloud.labels().is_some() {
        header.push("label".to_string());
    }
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, p) in cloud.points().enumerate() {
        record.clear();
        record.extend(p.iter().map(|&v| format_f64(v)));
        if let Some(labels) = cloud.labels() {
            record.push(labels[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    write_csv(cloud, File::create(path)?)
}

pub fn read_csv<R: Read>(input: R) -> Result<PointCloud, GeometryError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let width = header.len();
    let has_label = header.iter().next_back().map(str::trim) == Some("label");
    let dim = if has_label { width - 1 } else { width };
    if dim == 0 {
        return Err(GeometryError::ZeroDimension);
    }
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != width {
            return Err(GeometryError::RaggedRow {
                row,
                expected: width,
                found: record.len(),
            });
        }
        for (column, field) in record.iter().enumerate() {
            let field = field.trim();
            if has_label && column == dim {
                let label = field.parse::<usize>().map_err(|_| GeometryError::NonNumeric {
                    row,
                    column,
                    value: field.to_string(),
                })?;
                labels.push(label);
            } else {
                let v = field.parse::<f64>().map_err(|_| GeometryError::NonNumeric {
                    row,
                    column,
                    value: field.to_string(),
                })?;
                coords.push(v);
            }
        }
    }
    if coords.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let cloud = PointCloud::new(dim, coords)?;
    if has_label {
        cloud.with_labels(labels)
    } else {
        Ok(cloud)
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<PointCloud, GeometryError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(read_csv(File::open(path)?)?.with_name(name))
}
