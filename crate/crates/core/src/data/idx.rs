//! IDX binary format (MNIST-style): big-endian magic, dimension sizes, raw
//! unsigned-byte payload. Pixels are kept as their raw 0–255 values;
//! normalization is a separate, explicit step.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Dataset, Split};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'b> {
    bytes: &'b [u8],
    offset: usize,
}

impl<'b> Cursor<'b> {
    fn new(bytes: &'b [u8]) -> Self {
        Cursor { bytes, offset: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'b [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.offset as u64,
                message: format!(
                    "truncated file: need {n} bytes for {what}, {} left",
                    self.bytes.len() - self.offset
                ),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn parse_images(bytes: &[u8]) -> Result<Tensor> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32("magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let count = cur.read_u32("image count")? as usize;
    let rows = cur.read_u32("row count")? as usize;
    let cols = cur.read_u32("column count")? as usize;
    let pixels = cur.take(count * rows * cols, "pixel data")?;
    let data: Vec<f64> = pixels.iter().map(|&b| b as f64).collect();
    Tensor::new(vec![count, rows, cols, 1], data)
}

fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32("magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let count = cur.read_u32("label count")? as usize;
    let raw = cur.take(count, "label data")?;
    Ok(raw.iter().map(|&b| b as usize).collect())
}

/// Loads an image/label IDX file pair into one dataset.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    num_classes: usize,
    split: Split,
) -> Result<Dataset> {
    let images = parse_images(&std::fs::read(images_path)?)?;
    let labels = parse_labels(&std::fs::read(labels_path)?)?;
    if images.shape()[0] != labels.len() {
        return Err(Error::arg(format!(
            "idx pair mismatch: {} images vs {} labels",
            images.shape()[0],
            labels.len()
        )));
    }
    Dataset::new(images, labels, num_classes, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent fixture writer: assembles the byte stream by hand.
    fn write_images_fixture(images: &[[u8; 4]]) -> Vec<u8> {
        // 2×2 images.
        let mut out = Vec::new();
        out.extend_from_slice(&[0, 0, 8, 3]);
        out.extend_from_slice(&(images.len() as u32).to_be_bytes());
        out.extend_from_slice(&2u32.to_be_bytes());
        out.extend_from_slice(&2u32.to_be_bytes());
        for img in images {
            out.extend_from_slice(img);
        }
        out
    }

    fn write_labels_fixture(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&[0, 0, 8, 1]);
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    #[test]
    fn parses_hand_built_fixture() {
        let imgs = [[0u8, 1, 2, 3], [10, 20, 30, 40], [255, 0, 255, 0], [7, 7, 7, 7]];
        let images = parse_images(&write_images_fixture(&imgs)).unwrap();
        assert_eq!(images.shape(), &[4, 2, 2, 1]);
        assert_eq!(&images.data()[..4], &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(&images.data()[8..12], &[255.0, 0.0, 255.0, 0.0]);

        let labels = parse_labels(&write_labels_fixture(&[3, 1, 4, 1])).unwrap();
        assert_eq!(labels, vec![3, 1, 4, 1]);
    }

    #[test]
    fn wrong_magic_is_a_parse_error() {
        // An images payload handed to the labels parser.
        let bytes = write_images_fixture(&[[0, 0, 0, 0]]);
        let err = parse_labels(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"), "got {err}");
    }

    #[test]
    fn empty_file_reports_offset_zero() {
        let err = parse_images(&[]).unwrap_err();
        match err {
            Error::Parse { offset, .. } => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn truncated_pixels_report_offset() {
        let mut bytes = write_images_fixture(&[[1, 2, 3, 4]]);
        bytes.truncate(bytes.len() - 2);
        let err = parse_images(&bytes).unwrap_err();
        match err {
            Error::Parse { offset, message } => {
                assert_eq!(offset, 16);
                assert!(message.contains("truncated"));
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn load_idx_roundtrip_via_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("images");
        let lp = dir.path().join("labels");
        std::fs::write(&ip, write_images_fixture(&[[9, 8, 7, 6], [1, 2, 3, 4]])).unwrap();
        std::fs::write(&lp, write_labels_fixture(&[1, 0])).unwrap();
        let ds = load_idx(&ip, &lp, 2, Split::Train).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.images.shape(), &[2, 2, 2, 1]);
    }
}
