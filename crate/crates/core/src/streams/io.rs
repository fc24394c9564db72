//! Dataset ingestion: numeric CSV and the big-endian IDX layout of MNIST.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::StreamError;
use crate::models::LabelledExample;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StreamError + '_ {
    move |source| StreamError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_reader(path: &Path, has_header: bool) -> Result<csv::Reader<File>, StreamError> {
    let file = File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .quoting(false)
        .from_reader(file))
}

fn read_rows(path: &Path, has_header: bool) -> Result<Vec<(u64, csv::StringRecord)>, StreamError> {
    let mut rows = Vec::new();
    for record in csv_reader(path, has_header)?.records() {
        let record = record.map_err(|e| StreamError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        rows.push((row, record));
    }
    if rows.is_empty() {
        return Err(StreamError::EmptyDataset);
    }
    let expected = rows[0].1.len();
    if let Some((row, rec)) = rows.iter().find(|(_, r)| r.len() != expected) {
        return Err(StreamError::InconsistentColumns {
            row: *row,
            expected,
            found: rec.len(),
        });
    }
    Ok(rows)
}

fn parse_number(row: u64, column: usize, value: &str) -> Result<f64, StreamError> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| StreamError::Parse {
            row,
            column,
            value: value.to_string(),
        })
}

/// Comma-separated numeric rows with an integer label in `label_column`.
/// Rows are numbered from 1 in errors, counting any header line.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: usize,
    has_header: bool,
) -> Result<Vec<LabelledExample>, StreamError> {
    let path = path.as_ref();
    let rows = read_rows(path, has_header)?;
    let columns = rows[0].1.len();
    if label_column >= columns {
        return Err(StreamError::LabelColumnOutOfRange {
            column: label_column,
            columns,
        });
    }
    rows.iter()
        .map(|(row, rec)| {
            let raw = &rec[label_column];
            let label = raw
                .parse::<usize>()
                .map_err(|_| StreamError::NonIntegerLabel {
                    row: *row,
                    value: raw.to_string(),
                })?;
            let features = rec
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != label_column)
                .map(|(c, v)| parse_number(*row, c, v))
                .collect::<Result<_, _>>()?;
            Ok(LabelledExample::new(features, label))
        })
        .collect()
}

/// Unlabelled feature rows, every column numeric.
pub fn load_features_csv(
    path: impl AsRef<Path>,
    has_header: bool,
) -> Result<Vec<Vec<f64>>, StreamError> {
    let path = path.as_ref();
    read_rows(path, has_header)?
        .iter()
        .map(|(row, rec)| {
            rec.iter()
                .enumerate()
                .map(|(c, v)| parse_number(*row, c, v))
                .collect()
        })
        .collect()
}

/// Writes features followed by the label as the last column, no header.
pub fn write_csv(path: impl AsRef<Path>, data: &[LabelledExample]) -> Result<(), StreamError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for ex in data {
        for v in &ex.features {
            write!(out, "{v},").map_err(io_err(path))?;
        }
        writeln!(out, "{}", ex.label).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn write_features_csv(path: impl AsRef<Path>, rows: &[Vec<f64>]) -> Result<(), StreamError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for row in rows {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", line.join(",")).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn read_be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32, StreamError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| StreamError::Truncated {
            path: path.display().to_string(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), StreamError> {
    let found = read_be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(StreamError::BadMagic {
            path: path.display().to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<(), StreamError> {
    if bytes.len() < expected {
        return Err(StreamError::Truncated {
            path: path.display().to_string(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Reads an IDX image file and its label file. Pixels are scaled to `[0, 1]`
/// and flattened row-major.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Vec<LabelledExample>, StreamError> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let images = std::fs::read(images_path).map_err(io_err(images_path))?;
    let labels = std::fs::read(labels_path).map_err(io_err(labels_path))?;

    check_magic(&images, IDX_IMAGES_MAGIC, images_path)?;
    check_magic(&labels, IDX_LABELS_MAGIC, labels_path)?;
    let n_images = read_be_u32(&images, 4, images_path)? as usize;
    let rows = read_be_u32(&images, 8, images_path)? as usize;
    let cols = read_be_u32(&images, 12, images_path)? as usize;
    let n_labels = read_be_u32(&labels, 4, labels_path)? as usize;
    if n_images != n_labels {
        return Err(StreamError::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let pixels = rows * cols;
    check_len(&images, 16 + n_images * pixels, images_path)?;
    check_len(&labels, 8 + n_labels, labels_path)?;

    Ok(images[16..16 + n_images * pixels]
        .chunks_exact(pixels.max(1))
        .take(n_images)
        .zip(&labels[8..8 + n_labels])
        .map(|(img, &label)| {
            LabelledExample::new(
                img.iter().map(|&b| f64::from(b) / 255.0).collect(),
                usize::from(label),
            )
        })
        .collect())
}
