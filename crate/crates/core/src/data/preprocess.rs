//! Channel normalization, horizontal-flip augmentation, and random
//! per-category train/test splitting.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::{Dataset, Split};

/// Per-channel (mean, population std) over every pixel of the dataset.
/// Image-shaped data has one channel per trailing axis entry; flat data is
/// treated as a single channel.
fn channel_statistics(ds: &Dataset) -> Vec<(f64, f64)> {
    let channels = if ds.is_image_shaped() {
        ds.images.shape()[3]
    } else {
        1
    };
    let data = ds.images.data();
    let mut sums = vec![0.0f64; channels];
    let mut sumsq = vec![0.0f64; channels];
    let mut counts = vec![0usize; channels];
    for (i, &v) in data.iter().enumerate() {
        let ch = i % channels;
        sums[ch] += v;
        sumsq[ch] += v * v;
        counts[ch] += 1;
    }
    (0..channels)
        .map(|ch| {
            let n = counts[ch] as f64;
            let mean = sums[ch] / n;
            let var = (sumsq[ch] / n - mean * mean).max(0.0);
            (mean, var.sqrt())
        })
        .collect()
}

/// Standardizes `apply_to` with channel statistics computed from `train`
/// only, so the test split never leaks into the normalizer.
pub fn normalize_channels(train: &Dataset, apply_to: &Dataset) -> Result<Dataset> {
    let stats = channel_statistics(train);
    if let Some((ch, _)) = stats.iter().enumerate().find(|(_, (_, s))| *s <= 1e-12) {
        return Err(Error::arg(format!(
            "normalize_channels: channel {ch} is degenerate (zero spread)"
        )));
    }
    let channels = stats.len();
    let data = apply_to
        .images
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (mean, std) = stats[i % channels];
            (v - mean) / std
        })
        .collect();
    let mut out = apply_to.clone();
    out.images = Tensor::new(apply_to.images.shape().to_vec(), data)?;
    out.channel_stats = Some(stats);
    Ok(out)
}

fn flip_rows(images: &Tensor, flip: &[bool]) -> Result<Tensor> {
    if images.ndim() != 4 {
        return Err(Error::arg("horizontal flip needs image-shaped data"));
    }
    let (m, h, w, ch) = (
        images.shape()[0],
        images.shape()[1],
        images.shape()[2],
        images.shape()[3],
    );
    let mut data = images.data().to_vec();
    for (i, &do_flip) in flip.iter().enumerate().take(m) {
        if !do_flip {
            continue;
        }
        for r in 0..h {
            for c in 0..w / 2 {
                for k in 0..ch {
                    let a = ((i * h + r) * w + c) * ch + k;
                    let b = ((i * h + r) * w + (w - 1 - c)) * ch + k;
                    data.swap(a, b);
                }
            }
        }
    }
    Tensor::new(images.shape().to_vec(), data)
}

/// Flips each image independently with probability `p`.
pub fn augment_hflip(images: &Tensor, rng: &mut SeededRng, p: f64) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("augment_hflip: p must be in [0,1], got {p}")));
    }
    let m = images.shape()[0];
    let flips: Vec<bool> = (0..m).map(|_| rng.bernoulli(p)).collect();
    flip_rows(images, &flips)
}

/// Mirrors every image; its own inverse.
pub fn hflip_all(images: &Tensor) -> Result<Tensor> {
    let m = images.shape()[0];
    flip_rows(images, &vec![true; m])
}

/// Splits a dataset into train and test by drawing each example into the
/// test subset with probability `p_test`, walking categories in label order
/// so the stream of draws is per-category.
pub fn split_random(ds: &Dataset, p_test: f64, rng: &mut SeededRng) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&p_test) {
        return Err(Error::arg(format!(
            "split_random: p_test must be in [0,1), got {p_test}"
        )));
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..ds.num_classes {
        for i in 0..ds.len() {
            if ds.labels[i] != class {
                continue;
            }
            if rng.bernoulli(p_test) {
                test_idx.push(i);
            } else {
                train_idx.push(i);
            }
        }
    }
    if train_idx.is_empty() {
        return Err(Error::arg("split_random: empty train subset"));
    }
    let mut train = ds.select(&train_idx)?;
    train.split = Split::Train;
    let mut test = if test_idx.is_empty() {
        let mut t = ds.select(&[])?;
        t.labels.clear();
        t
    } else {
        ds.select(&test_idx)?
    };
    test.split = Split::Test;
    Ok((train, test))
}
