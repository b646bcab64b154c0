//! Synthetic Gaussian-cluster classification tasks with controllable
//! separation, for fast deterministic experiments.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

use super::{Dataset, Split};

/// Balanced Gaussian clusters in `dim` dimensions. `difficulty` 0 places
/// the class centers far apart (linearly separable with unit-variance
/// noise); 1 pushes them into heavy overlap. Classes get `examples/classes`
/// members each (the remainder spreads over the first classes), and the
/// example order is shuffled.
pub fn synth_task(
    rng: &mut SeededRng,
    classes: usize,
    dim: usize,
    examples: usize,
    difficulty: f64,
    split: Split,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::arg(format!("synth_task: need ≥ 2 classes, got {classes}")));
    }
    if examples < classes {
        return Err(Error::arg(format!(
            "synth_task: {examples} examples cannot cover {classes} classes"
        )));
    }
    if dim == 0 {
        return Err(Error::arg("synth_task: dim must be ≥ 1"));
    }
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(Error::arg(format!(
            "synth_task: difficulty must be in [0,1], got {difficulty}"
        )));
    }
    let radius = 0.5 + 7.5 * (1.0 - difficulty);

    // Class centers: scaled axis directions when they fit, random unit
    // directions otherwise.
    let mut centers = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut center = vec![0.0; dim];
        if classes <= dim {
            center[c] = radius;
        } else {
            let dir = rng.normal_tensor(vec![dim], 0.0, 1.0)?;
            let norm = dir.data().iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            for (d, &v) in center.iter_mut().zip(dir.data()) {
                *d = radius * v / norm;
            }
        }
        centers.push(center);
    }

    let mut order: Vec<usize> = (0..examples).collect();
    rng.shuffle(&mut order);

    let mut data = vec![0.0; examples * dim];
    let mut labels = vec![0usize; examples];
    for (slot, &i) in order.iter().enumerate() {
        let class = i % classes;
        labels[slot] = class;
        let noise = rng.normal_tensor(vec![dim], 0.0, 1.0)?;
        for d in 0..dim {
            data[slot * dim + d] = centers[class][d] + noise.data()[d];
        }
    }
    Dataset::new(Tensor::new(vec![examples, dim], data)?, labels, classes, split)
}
