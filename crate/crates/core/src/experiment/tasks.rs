//! Resolves a dataset reference string into normalized train/test subsets.
//!
//! Supported references:
//! - `synth:<id>` — deterministic Gaussian-cluster task; `<id>` selects the
//!   geometry, so `synth:0 → synth:1` is a genuine task switch.
//! - `mnist` or `mnist:<a>-<b>` — IDX files under `<data>/mnist/`, with an
//!   optional class range that is filtered and relabeled to `0..`.
//! - `cifar10`, `cifar100` — `train.bin`/`test.bin` under `<data>/<name>/`.
//!
//! Every task is channel-normalized with statistics from its own training
//! subset.

use std::path::Path;

use crate::data::{
    load_cifar_bin, load_idx, normalize_channels, synth_task, CifarVariant, Dataset, Split,
    TaskData,
};
use crate::error::{Error, Result};
use crate::experiment::config::ExperimentConfig;
use crate::rng::SeededRng;

fn normalized(train: Dataset, test: Dataset) -> Result<TaskData> {
    let norm_train = normalize_channels(&train, &train)?;
    let norm_test = normalize_channels(&train, &test)?;
    Ok(TaskData {
        train: norm_train,
        test: norm_test,
    })
}

fn synth_pair(cfg: &ExperimentConfig, id: u64) -> Result<TaskData> {
    // The task geometry depends only on the reference id, never on the run
    // seed: all seeds see the same task, as with a fixed on-disk dataset.
    let mut rng = SeededRng::new(0x5eed_0000).derive(id);
    let total = cfg.synth_examples + cfg.synth_test_examples;
    let all = synth_task(
        &mut rng,
        cfg.synth_classes,
        cfg.synth_dim,
        total,
        cfg.synth_difficulty,
        Split::Train,
    )?;
    let train_idx: Vec<usize> = (0..cfg.synth_examples).collect();
    let test_idx: Vec<usize> = (cfg.synth_examples..total).collect();
    let train = all.select(&train_idx)?;
    let mut test = all.select(&test_idx)?;
    test.split = Split::Test;
    normalized(train, test)
}

fn mnist_pair(data_dir: &Path, classes: Option<(usize, usize)>) -> Result<TaskData> {
    let dir = data_dir.join("mnist");
    let mut train = load_idx(
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
        10,
        Split::Train,
    )?;
    let mut test = load_idx(
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
        10,
        Split::Test,
    )?;
    if let Some((a, b)) = classes {
        let keep: Vec<usize> = (a..=b).collect();
        train = train.filter_relabel(&keep)?;
        test = test.filter_relabel(&keep)?;
    }
    normalized(train, test)
}

fn cifar_pair(data_dir: &Path, variant: CifarVariant) -> Result<TaskData> {
    let name = match variant {
        CifarVariant::Cifar10 => "cifar10",
        CifarVariant::Cifar100 => "cifar100",
    };
    let dir = data_dir.join(name);
    let train = load_cifar_bin(dir.join("train.bin"), variant, Split::Train)?;
    let test = load_cifar_bin(dir.join("test.bin"), variant, Split::Test)?;
    normalized(train, test)
}

fn parse_class_range(spec: &str) -> Result<(usize, usize)> {
    let (a, b) = spec
        .split_once('-')
        .ok_or_else(|| Error::Config(format!("bad class range '{spec}', expected a-b")))?;
    let lo: usize = a
        .parse()
        .map_err(|_| Error::Config(format!("bad class range '{spec}'")))?;
    let hi: usize = b
        .parse()
        .map_err(|_| Error::Config(format!("bad class range '{spec}'")))?;
    if hi <= lo {
        return Err(Error::Config(format!("class range '{spec}' is empty or single")));
    }
    Ok((lo, hi))
}

/// Loads and normalizes the task a reference names.
pub fn resolve_task(reference: &str, cfg: &ExperimentConfig) -> Result<TaskData> {
    let data_dir = cfg.data_dir();
    if let Some(id) = reference.strip_prefix("synth:") {
        let id: u64 = id
            .parse()
            .map_err(|_| Error::Config(format!("bad synth id in '{reference}'")))?;
        return synth_pair(cfg, id);
    }
    match reference {
        "mnist" => mnist_pair(&data_dir, None),
        "cifar10" => cifar_pair(&data_dir, CifarVariant::Cifar10),
        "cifar100" => cifar_pair(&data_dir, CifarVariant::Cifar100),
        other => {
            if let Some(range) = other.strip_prefix("mnist:") {
                let (a, b) = parse_class_range(range)?;
                if b >= 10 {
                    return Err(Error::Config(format!("mnist classes go up to 9, got {b}")));
                }
                return mnist_pair(&data_dir, Some((a, b)));
            }
            Err(Error::Config(format!("unknown dataset reference '{other}'")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_tasks_are_deterministic_and_distinct() {
        let cfg = ExperimentConfig {
            synth_examples: 100,
            synth_test_examples: 40,
            ..Default::default()
        };
        let a1 = resolve_task("synth:0", &cfg).unwrap();
        let a2 = resolve_task("synth:0", &cfg).unwrap();
        let b = resolve_task("synth:1", &cfg).unwrap();
        assert_eq!(a1.train.images, a2.train.images);
        assert_ne!(a1.train.images, b.train.images);
        assert_eq!(a1.train.len(), 100);
        assert_eq!(a1.test.len(), 40);
    }

    #[test]
    fn synth_train_is_self_normalized() {
        let cfg = ExperimentConfig {
            synth_examples: 200,
            synth_test_examples: 50,
            ..Default::default()
        };
        let task = resolve_task("synth:2", &cfg).unwrap();
        let s = task.train.images.reduce_stats().unwrap();
        assert!(s.mean.abs() < 1e-6);
        assert!((s.variance - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unknown_reference_is_a_config_error() {
        let cfg = ExperimentConfig::default();
        assert!(matches!(
            resolve_task("imagenet", &cfg),
            Err(Error::Config(_))
        ));
        assert!(resolve_task("synth:x", &cfg).is_err());
        assert!(resolve_task("mnist:7-3", &cfg).is_err());
    }
}
