//! Datasets: manifest-backed ingestion, multi-annotator vote aggregation,
//! and the procedural two-domain shapes generator.
//!
//! A dataset holds one domain. Source samples always carry labels; target
//! samples may carry them (synthetic ground truth or a labeled test split),
//! but the batch types in [`batches`] expose labels only for the source
//! side, so a trainer cannot read target labels by construction — only
//! evaluation and the explicit supervised upper-bound path do.

pub mod batches;
pub mod synth;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array4};

use crate::error::DataError;
use crate::schema::{group_targets, AttributeSchema};

/// Which distribution a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

/// Train/test split tag; evaluation refuses nothing based on it, it is
/// bookkeeping for callers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// One image with optional attribute labels.
#[derive(Debug, Clone)]
pub struct Sample {
    /// `[channels, height, width]`, values in `[0, 1]`.
    pub image: Array3<f32>,
    /// Binary attribute vector of schema length; `None` for unlabeled rows.
    pub labels: Option<Vec<u8>>,
    pub domain: Domain,
    pub id: String,
}

/// An ordered, single-domain collection of samples plus the vocabulary they
/// are labeled against.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub schema: AttributeSchema,
    pub split: Split,
    pub domain: Domain,
}

impl Dataset {
    /// Build a dataset, checking the invariants: one domain, unique ids,
    /// uniform image shape, and valid labels wherever labels exist.
    pub fn new(
        samples: Vec<Sample>,
        schema: AttributeSchema,
        split: Split,
        domain: Domain,
    ) -> Result<Self, DataError> {
        let mut ids = HashSet::new();
        let mut shape: Option<(usize, usize, usize)> = None;
        for (row, s) in samples.iter().enumerate() {
            assert_eq!(s.domain, domain, "sample {} has the wrong domain tag", s.id);
            if !ids.insert(s.id.clone()) {
                return Err(DataError::DuplicateId {
                    path: "<memory>".into(),
                    row: row + 1,
                    id: s.id.clone(),
                });
            }
            let dim = s.image.dim();
            match shape {
                None => shape = Some(dim),
                Some(d) => assert_eq!(d, dim, "sample {} image shape differs", s.id),
            }
            if let Some(labels) = &s.labels {
                group_targets(&schema, labels).map_err(|source| DataError::RowSchema {
                    path: "<memory>".into(),
                    row: row + 1,
                    source,
                })?;
            } else if domain == Domain::Source {
                return Err(DataError::MissingSourceLabels {
                    path: "<memory>".into(),
                    row: row + 1,
                    id: s.id.clone(),
                });
            }
        }
        Ok(Dataset { samples, schema, split, domain })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `[channels, height, width]` of the samples, or `None` when empty.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.samples.first().map(|s| s.image.dim())
    }

    /// Stack the given samples into a `[B, C, H, W]` batch tensor.
    pub fn stack_images(&self, indices: &[usize]) -> Array4<f32> {
        let (c, h, w) = self.image_shape().expect("cannot stack from an empty dataset");
        let mut out = Array4::<f32>::zeros((indices.len(), c, h, w));
        for (b, &i) in indices.iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), b).assign(&self.samples[i].image);
        }
        out
    }

    /// True when every sample carries labels (evaluation precondition).
    pub fn fully_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.labels.is_some())
    }
}

/// Aggregate ≥3 binary annotation vectors: bit i is 1 iff strictly more
/// than half of the votes set it. Exact ties (possible with even vote
/// counts) resolve to 0 — absent is the conservative default for rare
/// attributes.
pub fn majority_vote(votes: &[Vec<u8>]) -> Result<Vec<u8>, DataError> {
    if votes.len() < 3 {
        return Err(DataError::TooFewVotes(votes.len()));
    }
    let n = votes[0].len();
    for v in votes {
        if v.len() != n {
            return Err(DataError::VoteLength { expected: n, got: v.len() });
        }
    }
    let half = votes.len();
    Ok((0..n)
        .map(|i| {
            let ones = votes.iter().filter(|v| v[i] != 0).count();
            u8::from(2 * ones > half)
        })
        .collect())
}

/// Votes grouped by sample id, in first-appearance order.
pub struct VoteTable {
    pub per_id: Vec<(String, Vec<Vec<u8>>)>,
}

/// Read a vote file: headerless CSV rows `id,annotator,bit_1,...,bit_N`.
pub fn load_votes(path: &Path, n_attributes: usize) -> Result<VoteTable, DataError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_or_csv(&display, e))?;
    let mut per_id: Vec<(String, Vec<Vec<u8>>)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        if record.len() != 2 + n_attributes {
            return Err(DataError::ColumnCount {
                path: display,
                row,
                expected: 2 + n_attributes,
                got: record.len(),
            });
        }
        let id = record[0].to_string();
        let mut bits = Vec::with_capacity(n_attributes);
        for cell in record.iter().skip(2) {
            match cell.trim() {
                "0" => bits.push(0),
                "1" => bits.push(1),
                other => {
                    return Err(DataError::BadLabelToken {
                        path: display,
                        row,
                        cell: other.to_string(),
                    })
                }
            }
        }
        match per_id.iter_mut().find(|(i, _)| *i == id) {
            Some((_, votes)) => votes.push(bits),
            None => per_id.push((id, vec![bits])),
        }
    }
    Ok(VoteTable { per_id })
}

/// Majority-vote every sample in the table; ids with fewer than 3 votes are
/// rejected by name.
pub fn aggregate_votes(table: &VoteTable) -> Result<Vec<(String, Vec<u8>)>, DataError> {
    let mut out = Vec::with_capacity(table.per_id.len());
    for (id, votes) in &table.per_id {
        if votes.len() < 3 {
            return Err(DataError::InsufficientVotes { id: id.clone(), got: votes.len() });
        }
        out.push((id.clone(), majority_vote(votes)?));
    }
    Ok(out)
}

fn io_or_csv(path: &str, e: csv::Error) -> DataError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => DataError::Io { path: path.to_string(), source },
            _ => unreachable!("is_io_error() guarantees an Io kind"),
        }
    } else {
        DataError::Csv(e)
    }
}

/// The manifest header for a schema: `id,path,label_<attr1>,...`.
pub fn manifest_header(schema: &AttributeSchema) -> String {
    let mut cols = vec!["id".to_string(), "path".to_string()];
    cols.extend(schema.attributes().iter().map(|a| format!("label_{a}")));
    cols.join(",")
}

/// Load a manifest CSV into a dataset, reading every referenced image.
/// Image paths are resolved relative to the manifest's directory. A row's
/// label cells must be all filled (labeled) or all empty (unlabeled).
pub fn load_manifest(
    path: &Path,
    schema: &AttributeSchema,
    domain: Domain,
    split: Split,
) -> Result<Dataset, DataError> {
    let display = path.display().to_string();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| io_or_csv(&display, e))?;

    let expected_header = manifest_header(schema);
    let got_header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if got_header != expected_header {
        return Err(DataError::HeaderMismatch {
            path: display,
            got: got_header,
            expected: expected_header,
        });
    }

    let n = schema.n_attributes();
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    let mut shape: Option<(usize, usize, usize)> = None;
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2; // header is row 1
        let record = record?;
        if record.len() != 2 + n {
            return Err(DataError::ColumnCount { path: display, row, expected: 2 + n, got: record.len() });
        }
        let id = record[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(DataError::DuplicateId { path: display, row, id });
        }
        let image_rel = record[1].to_string();

        let cells: Vec<&str> = record.iter().skip(2).map(str::trim).collect();
        let empties = cells.iter().filter(|c| c.is_empty()).count();
        let labels = if empties == n {
            None
        } else if empties == 0 {
            let mut bits = Vec::with_capacity(n);
            for cell in &cells {
                match *cell {
                    "0" => bits.push(0u8),
                    "1" => bits.push(1u8),
                    other => {
                        return Err(DataError::BadLabelToken {
                            path: display,
                            row,
                            cell: other.to_string(),
                        })
                    }
                }
            }
            group_targets(schema, &bits)
                .map_err(|source| DataError::RowSchema { path: display.clone(), row, source })?;
            Some(bits)
        } else {
            return Err(DataError::PartialLabels { path: display, row, id });
        };

        if domain == Domain::Source && labels.is_none() {
            return Err(DataError::MissingSourceLabels { path: display, row, id });
        }

        let image_path = base.join(&image_rel);
        let image = load_image(&image_path).map_err(|message| DataError::Image {
            path: display.clone(),
            row,
            image: image_rel.clone(),
            message,
        })?;
        match shape {
            None => shape = Some(image.dim()),
            Some(d) => {
                if d != image.dim() {
                    let (c, h, w) = image.dim();
                    return Err(DataError::ImageShape {
                        path: display,
                        row,
                        image: image_rel,
                        got: vec![c, h, w],
                        expected: vec![d.0, d.1, d.2],
                    });
                }
            }
        }
        samples.push(Sample { image, labels, domain, id });
    }

    Dataset::new(samples, schema.clone(), split, domain)
}

fn load_image(path: &Path) -> Result<Array3<f32>, String> {
    let img = image::open(path).map_err(|e| e.to_string())?;
    let gray = img.into_luma8();
    let (w, h) = gray.dimensions();
    let mut out = Array3::<f32>::zeros((1, h as usize, w as usize));
    for (x, y, pixel) in gray.enumerate_pixels() {
        out[[0, y as usize, x as usize]] = pixel.0[0] as f32 / 255.0;
    }
    Ok(out)
}

/// Write an image in `[0,1]` to an 8-bit grayscale PNG.
pub fn save_image(path: &Path, image: &Array3<f32>) -> Result<(), DataError> {
    let (c, h, w) = image.dim();
    assert_eq!(c, 1, "grayscale export expects a single channel");
    let mut buf = image::GrayImage::new(w as u32, h as u32);
    for (x, y, pixel) in buf.enumerate_pixels_mut() {
        let v = image[[0, y as usize, x as usize]].clamp(0.0, 1.0);
        pixel.0[0] = (v * 255.0).round() as u8;
    }
    buf.save(path)
        .map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })
}

/// One manifest row: id, image path relative to the manifest, labels.
pub struct ManifestRow {
    pub id: String,
    pub image_rel: String,
    pub labels: Option<Vec<u8>>,
}

/// Write a manifest CSV for the given rows.
pub fn write_manifest(path: &Path, schema: &AttributeSchema, rows: &[ManifestRow]) -> Result<(), DataError> {
    let mut text = manifest_header(schema);
    text.push('\n');
    let n = schema.n_attributes();
    for row in rows {
        text.push_str(&row.id);
        text.push(',');
        text.push_str(&row.image_rel);
        match &row.labels {
            Some(bits) => {
                assert_eq!(bits.len(), n, "row {} labels length", row.id);
                for b in bits {
                    text.push(',');
                    text.push(if *b != 0 { '1' } else { '0' });
                }
            }
            None => {
                for _ in 0..n {
                    text.push(',');
                }
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

/// Resolve a path against an optional root directory.
pub fn resolve_out(root: Option<&Path>, rel: &Path) -> PathBuf {
    match root {
        Some(r) if rel.is_relative() => r.join(rel),
        _ => rel.to_path_buf(),
    }
}
