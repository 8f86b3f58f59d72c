//! Training and evaluation loops.
//!
//! Determinism contract: for a fixed model seed, data, and config, the
//! loss curve is bitwise reproducible. Each epoch derives its own RNG
//! from (seed, epoch); the shuffle is drawn first, then per-image
//! augmentation parameters in batch order.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::checkpoint;
use crate::data::augment::{augment_affine, augment_cifar, sample_affine};
use crate::data::{apply_normalization, channel_stats, ChannelStats, Dataset, LabeledImage};
use crate::error::{Error, Result};
use crate::model::{forward, Model};
use crate::optim::{Adam, AdamConfig, LrSchedule};
use crate::tape::{forward_backward, Graph};
use crate::tensor::{Shape, Tensor};

/// Images per forward pass during evaluation; a throughput/memory
/// trade-off with no effect on results.
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augmentation {
    /// Use samples as-is.
    None,
    /// Pad-4, random crop, horizontal flip. For 32x32 imagery.
    CropFlip,
    /// Small rotations, shifts, and scalings. For face imagery.
    Affine,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub augmentation: Augmentation,
    pub adam: AdamConfig,
    /// When set, receives history.csv, last.ckpt, and best.ckpt.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f32,
    pub train_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Accuracy after the last epoch.
    pub final_accuracy: f64,
    /// Highest test accuracy seen, and the (earliest) epoch that hit it.
    pub best_accuracy: f64,
    pub best_epoch: usize,
}

/// Classification results on one dataset.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    /// confusion[true_label][predicted_label].
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    pub fn class_total(&self, class: usize) -> usize {
        self.confusion[class].iter().sum()
    }

    /// Per-class recall; None for classes absent from the dataset.
    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        (0..self.confusion.len())
            .map(|c| {
                let total = self.class_total(c);
                (total > 0).then(|| self.confusion[c][c] as f64 / total as f64)
            })
            .collect()
    }
}

/// Stacks images into one (N, 3, H, W) tensor plus labels. All images
/// must share dimensions.
pub fn batch_tensor(images: &[&LabeledImage]) -> Result<(Tensor<f32>, Vec<usize>)> {
    let first = images
        .first()
        .ok_or_else(|| Error::Data("cannot batch zero images".into()))?;
    let (h, w) = (first.height(), first.width());
    let shape = Shape::new(images.len(), 3, h, w);
    let mut data = Vec::with_capacity(shape.count());
    let mut labels = Vec::with_capacity(images.len());
    for img in images {
        if img.height() != h || img.width() != w {
            return Err(Error::Data(format!(
                "mixed image sizes in batch: {}x{} and {}x{}",
                h,
                w,
                img.height(),
                img.width()
            )));
        }
        data.extend_from_slice(img.pixels.as_slice());
        labels.push(img.label);
    }
    Ok((Tensor::from_vec(shape, data)?, labels))
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha12Rng {
    // Distinct, stable stream per (seed, epoch).
    ChaCha12Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Augments (optionally) then normalizes each image, in batch order.
fn prepare_batch(
    images: &[&LabeledImage],
    augmentation: Augmentation,
    stats: &ChannelStats,
    rng: &mut impl Rng,
) -> Result<(Tensor<f32>, Vec<usize>)> {
    let mut prepared = Vec::with_capacity(images.len());
    for img in images {
        let mut img = match augmentation {
            Augmentation::None => (*img).clone(),
            Augmentation::CropFlip => augment_cifar(img, rng),
            Augmentation::Affine => augment_affine(img, &sample_affine(rng))?,
        };
        crate::data::normalize_image(&mut img, stats);
        prepared.push(img);
    }
    let refs: Vec<&LabeledImage> = prepared.iter().collect();
    batch_tensor(&refs)
}

/// Forward pass over a prepared (already normalized) dataset, batched
/// internally. Predictions are the argmax logit, first index on ties.
pub fn evaluate(model: &Model<f32>, ds: &Dataset) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let k = model.spec.num_classes;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for chunk in ds.images.chunks(EVAL_BATCH) {
        let refs: Vec<&LabeledImage> = chunk.iter().collect();
        let (x, labels) = batch_tensor(&refs)?;
        let mut g = Graph::new();
        let xid = g.input("batch", x)?;
        let pass = forward(&model.spec, &model.params, &mut g, xid)?;
        let logits = g.value(pass.logits);
        for (i, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::Data(format!(
                    "label {label} outside {k} classes"
                )));
            }
            let row = &logits.as_slice()[i * k..(i + 1) * k];
            let mut pred = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[pred] {
                    pred = j;
                }
            }
            confusion[label][pred] += 1;
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok(EvalReport {
        total: ds.len(),
        correct,
        confusion,
    })
}

fn write_history_csv(path: &std::path::Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,lr,train_loss,test_acc\n");
    for r in history {
        out.push_str(&format!("{},{},{},{}\n", r.epoch, r.lr, r.train_loss, r.test_acc));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Full training loop. Normalization statistics come from the raw
/// train split and are applied after augmentation; the test split is
/// normalized once with those same statistics.
///
/// When `out_dir` is set, every completed epoch rewrites history.csv
/// and last.ckpt, and improvements also write best.ckpt, so an abort
/// (including a numeric failure mid-epoch) leaves the last completed
/// epoch's snapshot on disk.
pub fn train(
    model: &mut Model<f32>,
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidSpec(format!(
            "epochs ({}) and batch size ({}) must be positive",
            cfg.epochs, cfg.batch_size
        )));
    }
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::Data("training needs non-empty train and test splits".into()));
    }
    if train_ds.num_classes != model.spec.num_classes {
        return Err(Error::Data(format!(
            "dataset has {} classes, model expects {}",
            train_ds.num_classes, model.spec.num_classes
        )));
    }
    let stats = channel_stats(train_ds)?;
    let mut prepared_test = test_ds.clone();
    apply_normalization(&mut prepared_test, &stats);

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut adam = Adam::new(&model.params, cfg.adam);
    let mut history: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64)> = None;

    for epoch in 1..=cfg.epochs {
        let lr = cfg.schedule.rate_for(epoch)?;
        let mut rng = epoch_rng(cfg.seed, epoch);
        let mut indices: Vec<usize> = (0..train_ds.len()).collect();
        indices.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        for chunk in indices.chunks(cfg.batch_size) {
            let refs: Vec<&LabeledImage> = chunk.iter().map(|&i| &train_ds.images[i]).collect();
            let (x, labels) = prepare_batch(&refs, cfg.augmentation, &stats, &mut rng)?;
            let mut g = Graph::new();
            let xid = g.input("batch", x)?;
            let pass = forward(&model.spec, &model.params, &mut g, xid)?;
            let loss = g.softmax_cross_entropy(pass.logits, labels)?;
            let loss_val = forward_backward(&g, loss, &pass.bindings, &mut model.params)?;
            adam.step(&mut model.params, lr)?;
            loss_sum += loss_val as f64 * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_ds.len() as f64;
        let test_acc = evaluate(model, &prepared_test)?.accuracy();
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            test_acc,
        });

        let improved = best.is_none_or(|(_, b)| test_acc > b);
        if improved {
            best = Some((epoch, test_acc));
        }
        if let Some(dir) = &cfg.out_dir {
            write_history_csv(&dir.join("history.csv"), &history)?;
            checkpoint::save(&model.params, &dir.join("last.ckpt"))?;
            if improved {
                checkpoint::save(&model.params, &dir.join("best.ckpt"))?;
            }
        }
    }

    let (best_epoch, best_accuracy) = best.expect("ran at least one epoch");
    Ok(TrainOutcome {
        final_accuracy: history.last().expect("ran at least one epoch").test_acc,
        best_accuracy,
        best_epoch,
        history,
    })
}

/// Repeated steps on one fixed batch with a constant rate; the
/// memorization probe. Returns the loss observed at each step's
/// forward pass, stopping early once below `stop_below`.
pub fn train_steps(
    model: &mut Model<f32>,
    x: &Tensor<f32>,
    labels: &[usize],
    steps: usize,
    lr: f32,
    stop_below: Option<f64>,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(&model.params, AdamConfig::default());
    let mut losses = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut g = Graph::new();
        let xid = g.input("batch", x.clone())?;
        let pass = forward(&model.spec, &model.params, &mut g, xid)?;
        let loss = g.softmax_cross_entropy(pass.logits, labels.to_vec())?;
        let loss_val = forward_backward(&g, loss, &pass.bindings, &mut model.params)? as f64;
        losses.push(loss_val);
        if stop_below.is_some_and(|t| loss_val < t) {
            return Ok(losses);
        }
        adam.step(&mut model.params, lr)?;
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::model::NetworkSpec;
    use crate::scheme::canonical_scheme_table;

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec::new(
            canonical_scheme_table("Logarithmic-8").unwrap(),
            10,
            (16, 16),
            true,
        )
        .unwrap()
    }

    fn tiny_image(i: usize, label: usize) -> LabeledImage {
        let pixels = Tensor::from_fn(Shape::new(1, 3, 16, 16), |_, c, h, w| {
            let phase = (i + 1) as f32 * 0.37 + c as f32;
            (0.5 + 0.45 * ((h as f32 * 0.8 + w as f32 * 0.31 + phase).sin())).clamp(0.0, 1.0)
        });
        LabeledImage::new(pixels, label).unwrap()
    }

    fn tiny_dataset(n: usize, split: Split) -> Dataset {
        let images = (0..n).map(|i| tiny_image(i, i % 10)).collect();
        Dataset::new(images, split, 10)
    }

    #[test]
    fn batch_tensor_stacks_rows() {
        let a = tiny_image(0, 3);
        let b = tiny_image(1, 7);
        let (x, labels) = batch_tensor(&[&a, &b]).unwrap();
        assert_eq!(x.shape(), Shape::new(2, 3, 16, 16));
        assert_eq!(labels, vec![3, 7]);
        assert_eq!(x.at(0, 1, 5, 5), a.pixels.at(0, 1, 5, 5));
        assert_eq!(x.at(1, 2, 9, 4), b.pixels.at(0, 2, 9, 4));
        assert!(batch_tensor(&[]).is_err());
    }

    #[test]
    fn evaluate_counts_are_consistent() {
        let model = Model::new(tiny_spec(), 11).unwrap();
        let ds = tiny_dataset(13, Split::Test);
        let report = evaluate(&model, &ds).unwrap();
        assert_eq!(report.total, 13);
        let trace: usize = (0..10).map(|c| report.confusion[c][c]).sum();
        assert_eq!(report.correct, trace);
        let cells: usize = report.confusion.iter().flatten().sum();
        assert_eq!(cells, 13);
        assert!((report.accuracy() - trace as f64 / 13.0).abs() < 1e-12);
        for c in 0..10 {
            let row_sum = report.class_total(c);
            let want = (0..13).filter(|i| i % 10 == c).count();
            assert_eq!(row_sum, want, "class {c}");
        }
        assert_eq!(report.per_class_accuracy().len(), 10);
    }

    #[test]
    fn evaluate_rejects_empty() {
        let model = Model::new(tiny_spec(), 1).unwrap();
        let ds = Dataset::new(Vec::new(), Split::Test, 10);
        assert!(matches!(evaluate(&model, &ds), Err(Error::Data(_))));
    }

    #[test]
    fn train_steps_descends_on_fixed_batch() {
        let mut model = Model::new(tiny_spec(), 5).unwrap();
        let images: Vec<LabeledImage> = (0..4).map(|i| tiny_image(i, i % 10)).collect();
        let refs: Vec<&LabeledImage> = images.iter().collect();
        let (x, labels) = batch_tensor(&refs).unwrap();
        let losses = train_steps(&mut model, &x, &labels, 60, 3e-3, Some(0.2)).unwrap();
        assert!(!losses.is_empty());
        let first = losses[0];
        let last = *losses.last().unwrap();
        assert!(
            last < 0.2 || last < first * 0.5,
            "no meaningful descent: first {first}, last {last}"
        );
    }

    #[test]
    fn train_writes_history_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let train_ds = tiny_dataset(8, Split::Train);
        let test_ds = tiny_dataset(4, Split::Test);
        let mut model = Model::new(tiny_spec(), 2).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            schedule: LrSchedule::constant(1e-3).unwrap(),
            seed: 42,
            augmentation: Augmentation::CropFlip,
            adam: AdamConfig::default(),
            out_dir: Some(dir.path().to_path_buf()),
        };
        let outcome = train(&mut model, &train_ds, &test_ds, &cfg).unwrap();
        assert_eq!(outcome.history.len(), 2);
        assert_eq!(outcome.final_accuracy, outcome.history[1].test_acc);
        assert!(outcome.best_accuracy >= outcome.final_accuracy);
        assert!(outcome.best_epoch >= 1 && outcome.best_epoch <= 2);

        let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,lr,train_loss,test_acc");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,0.001,"));
        assert!(lines[2].starts_with("2,0.001,"));

        let last = checkpoint::load(&dir.path().join("last.ckpt")).unwrap();
        assert_eq!(last.len(), model.params.len());
        // last.ckpt holds the final epoch's weights.
        for (name, entry) in model.params.iter() {
            assert_eq!(last.get(name).unwrap().value.as_slice(), entry.value.as_slice());
        }
        assert!(dir.path().join("best.ckpt").exists());
    }

    #[test]
    fn identical_runs_reproduce_bitwise() {
        let train_ds = tiny_dataset(8, Split::Train);
        let test_ds = tiny_dataset(4, Split::Test);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3, // deliberately uneven: keeps the partial batch in play
            schedule: LrSchedule::constant(1e-3).unwrap(),
            seed: 7,
            augmentation: Augmentation::CropFlip,
            adam: AdamConfig::default(),
            out_dir: None,
        };
        let run = || {
            let mut model = Model::new(tiny_spec(), 3).unwrap();
            train(&mut model, &train_ds, &test_ds, &cfg).map(|o| {
                let losses: Vec<u64> = o.history.iter().map(|r| r.train_loss.to_bits()).collect();
                let params: Vec<u32> = model
                    .params
                    .iter()
                    .flat_map(|(_, e)| e.value.as_slice().iter().map(|v| v.to_bits()))
                    .collect();
                (losses, params)
            })
        };
        let a = run().unwrap();
        let b = run().unwrap();
        assert_eq!(a.0, b.0, "loss curves diverged");
        assert_eq!(a.1, b.1, "final weights diverged");
    }

    #[test]
    fn exhausted_schedule_aborts_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let train_ds = tiny_dataset(4, Split::Train);
        let test_ds = tiny_dataset(2, Split::Test);
        let mut model = Model::new(tiny_spec(), 2).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            schedule: LrSchedule::new(vec![(1, 1e-3)]).unwrap(),
            seed: 1,
            augmentation: Augmentation::None,
            adam: AdamConfig::default(),
            out_dir: Some(dir.path().to_path_buf()),
        };
        match train(&mut model, &train_ds, &test_ds, &cfg) {
            Err(Error::ScheduleExhausted { epoch: 2, max: 1 }) => {}
            other => panic!("expected exhausted schedule, got {other:?}"),
        }
        // Epoch 1 completed, so its snapshot survived the abort.
        assert!(dir.path().join("last.ckpt").exists());
        let csv = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let train_ds = Dataset::new(vec![tiny_image(0, 0)], Split::Train, 6);
        let test_ds = Dataset::new(vec![tiny_image(1, 0)], Split::Test, 6);
        let mut model = Model::new(tiny_spec(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            schedule: LrSchedule::constant(1e-3).unwrap(),
            seed: 1,
            augmentation: Augmentation::None,
            adam: AdamConfig::default(),
            out_dir: None,
        };
        assert!(matches!(
            train(&mut model, &train_ds, &test_ds, &cfg),
            Err(Error::Data(_))
        ));
    }
}
