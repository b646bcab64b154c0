//! Dataset acquisition and preprocessing: binary parsers for the standard
//! image formats, a synthetic Gaussian-cluster task generator for fast
//! deterministic tests, task filtering for source→target transfer, and the
//! channel normalization / horizontal-flip pipeline.
//!
//! Files are read from a data directory the caller controls; nothing here
//! touches the network.

mod cifar;
mod idx;
mod preprocess;
mod synth;

pub use cifar::{load_cifar_bin, CifarVariant};
pub use idx::load_idx;
pub use preprocess::{augment_hflip, hflip_all, normalize_channels, split_random};
pub use synth::synth_task;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A labeled set of examples: images shaped `[M,H,W,ch]` or flat `[M,D]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
    /// Per-channel (mean, std) applied by normalization, when any.
    pub channel_stats: Option<Vec<(f64, f64)>>,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if images.shape()[0] != labels.len() {
            return Err(Error::dim(format!(
                "{} images vs {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::arg("dataset needs at least 2 classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::arg(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if !images.all_finite() {
            return Err(Error::Numeric("dataset contains non-finite pixels".into()));
        }
        Ok(Dataset {
            images,
            labels,
            num_classes,
            split,
            channel_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Flattened per-example feature width.
    pub fn example_dim(&self) -> usize {
        self.images.shape()[1..].iter().product()
    }

    pub fn is_image_shaped(&self) -> bool {
        self.images.ndim() == 4
    }

    /// Rows `indices` as an input batch plus one-hot labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let width = self.example_dim();
        let mut x = Vec::with_capacity(indices.len() * width);
        let mut y = Tensor::zeros(vec![indices.len(), self.num_classes]);
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(Error::arg(format!("example index {i} out of range")));
            }
            x.extend_from_slice(&self.images.data()[i * width..(i + 1) * width]);
            y.set2(row, self.labels[i], 1.0);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.images.shape()[1..]);
        Ok((Tensor::new(shape, x)?, y))
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> Result<(Tensor, Tensor)> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all)
    }

    /// New dataset holding the selected examples, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let (images, _) = self.batch(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok(Dataset {
            images,
            labels,
            num_classes: self.num_classes,
            split: self.split,
            channel_stats: self.channel_stats.clone(),
        })
    }

    /// Keeps only the listed classes and relabels them to `0..classes.len()`,
    /// e.g. digits 5–9 become classes 0–4 of the target task.
    pub fn filter_relabel(&self, classes: &[usize]) -> Result<Dataset> {
        if classes.len() < 2 {
            return Err(Error::arg("filter_relabel: need at least 2 classes"));
        }
        if classes.iter().any(|&c| c >= self.num_classes) {
            return Err(Error::arg("filter_relabel: class out of range"));
        }
        let indices: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        if indices.is_empty() {
            return Err(Error::arg("filter_relabel: no examples left"));
        }
        let mut out = self.select(&indices)?;
        out.labels = out
            .labels
            .iter()
            .map(|l| classes.iter().position(|c| c == l).unwrap())
            .collect();
        out.num_classes = classes.len();
        Ok(out)
    }

    /// Per-class example counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Train and test subsets of one task.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Dataset,
    pub test: Dataset,
}

/// A source task to pretrain on and a target task to adapt to.
#[derive(Debug, Clone)]
pub struct TaskSplit {
    pub source: TaskData,
    pub target: TaskData,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let images = Tensor::from_rows(&[
            vec![0.0, 1.0],
            vec![2.0, 3.0],
            vec![4.0, 5.0],
            vec![6.0, 7.0],
        ])
        .unwrap();
        Dataset::new(images, vec![0, 1, 2, 1], 3, Split::Train).unwrap()
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let images = Tensor::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(Dataset::new(images, vec![0, 5], 3, Split::Train).is_err());
    }

    #[test]
    fn batch_gathers_rows_and_one_hot() {
        let ds = toy();
        let (x, y) = ds.batch(&[2, 0]).unwrap();
        assert_eq!(x.data(), &[4.0, 5.0, 0.0, 1.0]);
        assert_eq!(y.get2(0, 2), 1.0);
        assert_eq!(y.get2(1, 0), 1.0);
    }

    #[test]
    fn filter_relabel_remaps() {
        let ds = toy();
        let sub = ds.filter_relabel(&[1, 2]).unwrap();
        assert_eq!(sub.len(), 3);
        assert_eq!(sub.labels, vec![0, 1, 0]);
        assert_eq!(sub.num_classes, 2);
    }
}
