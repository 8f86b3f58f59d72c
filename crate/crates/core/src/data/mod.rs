//! Dataset ingestion, normalization, and augmentation.

pub mod augment;
pub mod cifar;
pub mod synthetic;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One RGB image with pixels in [0, 1] and its class label.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    /// Shape (1, 3, H, W).
    pub pixels: Tensor<f32>,
    pub label: usize,
}

impl LabeledImage {
    pub fn new(pixels: Tensor<f32>, label: usize) -> Result<Self> {
        let s = pixels.shape();
        if s.n != 1 || s.c != 3 {
            return Err(Error::Data(format!(
                "image must be shaped (1, 3, H, W), got {s}"
            )));
        }
        Ok(LabeledImage { pixels, label })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape().h
    }

    pub fn width(&self) -> usize {
        self.pixels.shape().w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Per-channel normalization statistics, computed on a train split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

/// An ordered collection of images. Iteration order is storage order;
/// shuffling is the training loop's seeded concern.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub split: Split,
    pub num_classes: usize,
    /// Stats applied to the pixels, if any.
    pub normalization: Option<ChannelStats>,
}

impl Dataset {
    pub fn new(images: Vec<LabeledImage>, split: Split, num_classes: usize) -> Self {
        Dataset {
            images,
            split,
            num_classes,
            normalization: None,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Population mean and standard deviation per channel, accumulated in
/// f64 over every pixel of every image.
pub fn channel_stats(ds: &Dataset) -> Result<ChannelStats> {
    if ds.is_empty() {
        return Err(Error::Data("cannot take statistics of an empty dataset".into()));
    }
    let mut sum = [0.0f64; 3];
    let mut count = [0usize; 3];
    for img in &ds.images {
        let s = img.pixels.shape();
        let hw = s.h * s.w;
        let data = img.pixels.as_slice();
        for c in 0..3 {
            for &v in &data[c * hw..(c + 1) * hw] {
                sum[c] += v as f64;
            }
            count[c] += hw;
        }
    }
    let mean = [sum[0] / count[0] as f64, sum[1] / count[1] as f64, sum[2] / count[2] as f64];
    let mut sq = [0.0f64; 3];
    for img in &ds.images {
        let s = img.pixels.shape();
        let hw = s.h * s.w;
        let data = img.pixels.as_slice();
        for c in 0..3 {
            for &v in &data[c * hw..(c + 1) * hw] {
                let d = v as f64 - mean[c];
                sq[c] += d * d;
            }
        }
    }
    let mut std = [0.0f32; 3];
    for c in 0..3 {
        let var = sq[c] / count[c] as f64;
        if var <= 0.0 {
            return Err(Error::DegenerateChannel { channel: c });
        }
        std[c] = var.sqrt() as f32;
    }
    Ok(ChannelStats {
        mean: [mean[0] as f32, mean[1] as f32, mean[2] as f32],
        std,
    })
}

/// `(x - mean) / std` per channel, in place.
pub fn normalize_image(img: &mut LabeledImage, stats: &ChannelStats) {
    let s = img.pixels.shape();
    let hw = s.h * s.w;
    let data = img.pixels.as_mut_slice();
    for c in 0..3 {
        let (m, sd) = (stats.mean[c], stats.std[c]);
        for v in &mut data[c * hw..(c + 1) * hw] {
            *v = (*v - m) / sd;
        }
    }
}

/// Normalizes every image in the dataset with `stats` (typically the
/// train split's) and records them on the dataset.
pub fn apply_normalization(ds: &mut Dataset, stats: &ChannelStats) {
    for img in &mut ds.images {
        normalize_image(img, stats);
    }
    ds.normalization = Some(*stats);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn tiny_dataset() -> Dataset {
        let images = (0..4)
            .map(|i| {
                let pixels = Tensor::from_fn(Shape::new(1, 3, 4, 4), |_, c, h, w| {
                    ((i + 1) * (c + 1)) as f32 * 0.05 + (h * 4 + w) as f32 * 0.01
                });
                LabeledImage::new(pixels, i % 2).unwrap()
            })
            .collect();
        Dataset::new(images, Split::Train, 2)
    }

    #[test]
    fn normalization_centers_and_scales() {
        let mut ds = tiny_dataset();
        let stats = channel_stats(&ds).unwrap();
        apply_normalization(&mut ds, &stats);
        let after = channel_stats_unchecked(&ds);
        for c in 0..3 {
            assert!(after.0[c].abs() < 1e-6, "channel {c} mean {}", after.0[c]);
            assert!((after.1[c] - 1.0).abs() < 1e-4, "channel {c} std {}", after.1[c]);
        }
        assert!(ds.normalization.is_some());
    }

    /// Mean/std without the degenerate-channel guard, for assertions.
    fn channel_stats_unchecked(ds: &Dataset) -> ([f64; 3], [f64; 3]) {
        let mut sum = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let mut count = 0usize;
        for img in &ds.images {
            let hw = img.height() * img.width();
            let data = img.pixels.as_slice();
            for c in 0..3 {
                for &v in &data[c * hw..(c + 1) * hw] {
                    sum[c] += v as f64;
                }
            }
            count += hw;
        }
        let mean = [sum[0] / count as f64, sum[1] / count as f64, sum[2] / count as f64];
        for img in &ds.images {
            let hw = img.height() * img.width();
            let data = img.pixels.as_slice();
            for c in 0..3 {
                for &v in &data[c * hw..(c + 1) * hw] {
                    let d = v as f64 - mean[c];
                    sq[c] += d * d;
                }
            }
        }
        let std = [
            (sq[0] / count as f64).sqrt(),
            (sq[1] / count as f64).sqrt(),
            (sq[2] / count as f64).sqrt(),
        ];
        (mean, std)
    }

    #[test]
    fn constant_channel_is_degenerate() {
        let images = vec![LabeledImage::new(
            Tensor::from_fn(Shape::new(1, 3, 2, 2), |_, c, h, w| {
                if c == 1 {
                    0.5
                } else {
                    (h + w) as f32 * 0.1
                }
            }),
            0,
        )
        .unwrap()];
        let ds = Dataset::new(images, Split::Train, 1);
        assert!(matches!(
            channel_stats(&ds),
            Err(Error::DegenerateChannel { channel: 1 })
        ));
    }

    #[test]
    fn image_shape_validated() {
        assert!(LabeledImage::new(Tensor::zeros(Shape::new(1, 1, 4, 4)), 0).is_err());
        assert!(LabeledImage::new(Tensor::zeros(Shape::new(2, 3, 4, 4)), 0).is_err());
        assert!(LabeledImage::new(Tensor::zeros(Shape::new(1, 3, 4, 4)), 0).is_ok());
    }
}
