//! CIFAR binary record format: per record, one label byte (preceded by a
//! coarse-label byte in the 100-class variant) and 3072 pixel bytes stored
//! as three 1024-byte color planes of a 32×32 image. Images come out
//! channel-last as `[M, 32, 32, 3]` with raw 0–255 values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Dataset, Split};

const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    fn classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    fn record_len(self) -> usize {
        self.label_bytes() + 3 * PLANE
    }
}

fn parse(bytes: &[u8], variant: CifarVariant, split: Split) -> Result<Dataset> {
    let record = variant.record_len();
    if bytes.is_empty() || bytes.len() % record != 0 {
        return Err(Error::Parse {
            offset: (bytes.len() - bytes.len() % record) as u64,
            message: format!(
                "file length {} is not a positive multiple of the {record}-byte record",
                bytes.len()
            ),
        });
    }
    let count = bytes.len() / record;
    let mut labels = Vec::with_capacity(count);
    let mut data = vec![0.0f64; count * PLANE * 3];
    for r in 0..count {
        let base = r * record;
        // The fine label is the last label byte.
        let label = bytes[base + variant.label_bytes() - 1] as usize;
        if label >= variant.classes() {
            return Err(Error::Parse {
                offset: (base + variant.label_bytes() - 1) as u64,
                message: format!("label {label} out of range for {} classes", variant.classes()),
            });
        }
        labels.push(label);
        let pixels = &bytes[base + variant.label_bytes()..base + record];
        // Planar RGB → channel-last.
        for ch in 0..3 {
            for p in 0..PLANE {
                data[r * PLANE * 3 + p * 3 + ch] = pixels[ch * PLANE + p] as f64;
            }
        }
    }
    let images = Tensor::new(vec![count, SIDE, SIDE, 3], data)?;
    Dataset::new(images, labels, variant.classes(), split)
}

/// Loads one CIFAR binary batch file.
pub fn load_cifar_bin(
    path: impl AsRef<Path>,
    variant: CifarVariant,
    split: Split,
) -> Result<Dataset> {
    parse(&std::fs::read(path)?, variant, split)
}
