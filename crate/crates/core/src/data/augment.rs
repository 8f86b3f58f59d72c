//! Training-time augmentation: pad-and-crop with horizontal flips for
//! 32x32 images, and small affine warps for face imagery.

use rand::Rng;

use crate::data::LabeledImage;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CROP_PAD: usize = 4;

/// Deterministic core of the pad-and-crop augmentation: zero-pad by 4
/// on every side, crop a window of the original size at offset
/// (oy, ox) in [0, 8], then optionally mirror left-right.
pub fn crop_flip(img: &LabeledImage, oy: usize, ox: usize, flip: bool) -> LabeledImage {
    let s = img.pixels.shape();
    debug_assert!(oy <= 2 * CROP_PAD && ox <= 2 * CROP_PAD);
    let pixels = Tensor::from_fn(s, |_, c, y, x| {
        let x = if flip { s.w - 1 - x } else { x };
        // Position in the padded canvas, shifted back into source coords.
        let sy = (oy + y) as isize - CROP_PAD as isize;
        let sx = (ox + x) as isize - CROP_PAD as isize;
        if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
            0.0
        } else {
            img.pixels.at(0, c, sy as usize, sx as usize)
        }
    });
    LabeledImage {
        pixels,
        label: img.label,
    }
}

/// Random pad-and-crop plus a fair-coin horizontal flip. Draw order is
/// fixed (row offset, column offset, flip) so a seeded stream replays.
pub fn augment_cifar(img: &LabeledImage, rng: &mut impl Rng) -> LabeledImage {
    let oy = rng.random_range(0..=2 * CROP_PAD);
    let ox = rng.random_range(0..=2 * CROP_PAD);
    let flip = rng.random_bool(0.5);
    crop_flip(img, oy, ox, flip)
}

pub const AFFINE_ROTATIONS_DEG: [f64; 8] = [-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0];
pub const AFFINE_TRANSLATE_MAX: i32 = 3;
pub const AFFINE_SCALES: [f64; 5] = [0.90, 0.95, 1.00, 1.05, 1.10];

/// One affine draw: rotate by a small angle, shift by whole pixels,
/// and scale about the image center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_deg: f64,
    /// (tx, ty) in pixels; positive moves content right/down.
    pub translate: (i32, i32),
    pub scale: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        rotation_deg: 0.0,
        translate: (0, 0),
        scale: 1.0,
    };
}

fn on_grid(value: f64, grid: &[f64]) -> bool {
    grid.iter().any(|g| (g - value).abs() < 1e-9)
}

/// Rejects parameters off the sanctioned grids. Zero rotation is the
/// identity case and always allowed.
pub fn validate_affine(p: &AffineParams) -> Result<()> {
    if p.rotation_deg != 0.0 && !on_grid(p.rotation_deg, &AFFINE_ROTATIONS_DEG) {
        return Err(Error::AugmentationConfig(format!(
            "rotation {} deg is not on the grid {AFFINE_ROTATIONS_DEG:?}",
            p.rotation_deg
        )));
    }
    for (axis, t) in [("x", p.translate.0), ("y", p.translate.1)] {
        if t.abs() > AFFINE_TRANSLATE_MAX {
            return Err(Error::AugmentationConfig(format!(
                "translation {t} px on {axis} exceeds +/-{AFFINE_TRANSLATE_MAX}"
            )));
        }
    }
    if !on_grid(p.scale, &AFFINE_SCALES) {
        return Err(Error::AugmentationConfig(format!(
            "scale {} is not on the grid {AFFINE_SCALES:?}",
            p.scale
        )));
    }
    Ok(())
}

/// Draws one parameter set from the training grids. Draw order is
/// fixed (rotation, tx, ty, scale).
pub fn sample_affine(rng: &mut impl Rng) -> AffineParams {
    let rotation_deg = AFFINE_ROTATIONS_DEG[rng.random_range(0..AFFINE_ROTATIONS_DEG.len())];
    let tx = rng.random_range(-AFFINE_TRANSLATE_MAX..=AFFINE_TRANSLATE_MAX);
    let ty = rng.random_range(-AFFINE_TRANSLATE_MAX..=AFFINE_TRANSLATE_MAX);
    let scale = AFFINE_SCALES[rng.random_range(0..AFFINE_SCALES.len())];
    AffineParams {
        rotation_deg,
        translate: (tx, ty),
        scale,
    }
}

/// Warps by inverse mapping: each output pixel pulls from
/// `src = center + R(-theta) * ((out - center - t) / s)`, sampled
/// bilinearly with zero fill outside the source.
pub fn augment_affine(img: &LabeledImage, p: &AffineParams) -> Result<LabeledImage> {
    validate_affine(p)?;
    let s = img.pixels.shape();
    let (cy, cx) = ((s.h - 1) as f64 / 2.0, (s.w - 1) as f64 / 2.0);
    let theta = p.rotation_deg.to_radians();
    // R(-theta) applied to column vectors (dx, dy).
    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    let (tx, ty) = (p.translate.0 as f64, p.translate.1 as f64);
    let pixels = Tensor::from_fn(s, |_, c, y, x| {
        let dx = (x as f64 - cx - tx) / p.scale;
        let dy = (y as f64 - cy - ty) / p.scale;
        let sx = cx + cos_t * dx + sin_t * dy;
        let sy = cy - sin_t * dx + cos_t * dy;
        bilinear(&img.pixels, c, sy, sx)
    });
    Ok(LabeledImage {
        pixels,
        label: img.label,
    })
}

/// Bilinear sample at fractional (sy, sx); out-of-range corners read 0.
fn bilinear(t: &Tensor<f32>, c: usize, sy: f64, sx: f64) -> f32 {
    let s = t.shape();
    let y0 = sy.floor();
    let x0 = sx.floor();
    let fy = (sy - y0) as f32;
    let fx = (sx - x0) as f32;
    let fetch = |yy: f64, xx: f64| -> f32 {
        if yy < 0.0 || xx < 0.0 || yy >= s.h as f64 || xx >= s.w as f64 {
            0.0
        } else {
            t.at(0, c, yy as usize, xx as usize)
        }
    };
    let v00 = fetch(y0, x0);
    let v01 = fetch(y0, x0 + 1.0);
    let v10 = fetch(y0 + 1.0, x0);
    let v11 = fetch(y0 + 1.0, x0 + 1.0);
    let top = v00 * (1.0 - fx) + v01 * fx;
    let bot = v10 * (1.0 - fx) + v11 * fx;
    top * (1.0 - fy) + bot * fy
}
