//! Grouped 2-D convolution: stride 1, "same" zero padding, odd kernels.
//!
//! Channels are partitioned contiguously by the group size arrays:
//! group `i` convolves input channels `[in_off_i, in_off_i + in_sizes[i])`
//! into output channels `[out_off_i, out_off_i + out_sizes[i])`. The
//! inner loop lowers each sample-group to an im2col matrix and one
//! GEMM; 1x1 kernels skip the lowering and multiply the channel slab
//! directly.
//!
//! Backward rules:
//! - d/dx is itself a grouped convolution of the output gradient with
//!   spatially flipped, in/out-transposed weights (exact for stride 1,
//!   odd kernels, same padding).
//! - d/dw accumulates `gout · cols^T` per sample in batch order.

use crate::error::{Error, Result};
use crate::ops::activation::relu_forward;
use crate::tensor::{gemm, Element, Shape, Tensor};

/// Static description of one grouped convolution layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvDesc {
    pub kh: usize,
    pub kw: usize,
    pub in_sizes: Vec<usize>,
    pub out_sizes: Vec<usize>,
}

impl ConvDesc {
    pub fn new(kh: usize, kw: usize, in_sizes: Vec<usize>, out_sizes: Vec<usize>) -> Result<Self> {
        if kh == 0 || kw == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::InvalidLayer(format!(
                "kernel {kh}x{kw} not supported: dims must be odd and positive"
            )));
        }
        if in_sizes.is_empty() || in_sizes.len() != out_sizes.len() {
            return Err(Error::InvalidLayer(format!(
                "group arrays must be non-empty and equal length, got {} and {}",
                in_sizes.len(),
                out_sizes.len()
            )));
        }
        if in_sizes.iter().chain(out_sizes.iter()).any(|&s| s == 0) {
            return Err(Error::InvalidLayer("empty group".into()));
        }
        Ok(ConvDesc {
            kh,
            kw,
            in_sizes,
            out_sizes,
        })
    }

    /// Ungrouped (single-group) convolution.
    pub fn full(kh: usize, kw: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        ConvDesc::new(kh, kw, vec![in_channels], vec![out_channels])
    }

    /// Square grouped convolution: in and out partitions both equal `sizes`.
    pub fn square(kh: usize, kw: usize, sizes: &[usize]) -> Result<Self> {
        ConvDesc::new(kh, kw, sizes.to_vec(), sizes.to_vec())
    }

    pub fn group_count(&self) -> usize {
        self.in_sizes.len()
    }

    pub fn in_channels(&self) -> usize {
        self.in_sizes.iter().sum()
    }

    pub fn out_channels(&self) -> usize {
        self.out_sizes.iter().sum()
    }

    /// Trainable weight elements: `kh*kw*Σ in_sizes[i]*out_sizes[i]`.
    pub fn weight_count(&self) -> usize {
        self.kh
            * self.kw
            * self
                .in_sizes
                .iter()
                .zip(&self.out_sizes)
                .map(|(&i, &o)| i * o)
                .sum::<usize>()
    }

    /// Shape of group `g`'s weight block: (out_g, in_g, kh, kw).
    pub fn weight_shape(&self, g: usize) -> Shape {
        Shape::new(self.out_sizes[g], self.in_sizes[g], self.kh, self.kw)
    }

    /// Descriptor of the gradient convolution: in/out partitions swapped.
    fn transposed(&self) -> ConvDesc {
        ConvDesc {
            kh: self.kh,
            kw: self.kw,
            in_sizes: self.out_sizes.clone(),
            out_sizes: self.in_sizes.clone(),
        }
    }

    fn check_input(&self, x: &Tensor<impl Element>) -> Result<()> {
        let s = x.shape();
        if s.c != self.in_channels() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, layer expects {}",
                s.c,
                self.in_channels()
            )));
        }
        Ok(())
    }

    fn check_weights(&self, weights: &[Tensor<impl Element>]) -> Result<()> {
        if weights.len() != self.group_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight blocks for {} groups",
                weights.len(),
                self.group_count()
            )));
        }
        for (g, w) in weights.iter().enumerate() {
            if w.shape() != self.weight_shape(g) {
                return Err(Error::ShapeMismatch(format!(
                    "weight block {g} is {}, expected {}",
                    w.shape(),
                    self.weight_shape(g)
                )));
            }
        }
        Ok(())
    }
}

/// Lowers one sample's channel slice `[c0, c0+cn)` to the im2col matrix
/// `out[(ci*kh + i)*kw + j, y*w + x] = x[c0+ci, y + i - ph, x + j - pw]`
/// with zeros outside the image.
fn im2col_group<E: Element>(
    sample: &[E],
    h: usize,
    w: usize,
    c0: usize,
    cn: usize,
    kh: usize,
    kw: usize,
    out: &mut [E],
) {
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let hw = h * w;
    debug_assert!(out.len() >= cn * kh * kw * hw);
    let wi = w as isize;
    for ci in 0..cn {
        let src_chan = (c0 + ci) * hw;
        for i in 0..kh {
            let dy = i as isize - ph as isize;
            for j in 0..kw {
                let dx = j as isize - pw as isize;
                let row = ((ci * kh + i) * kw + j) * hw;
                let lo = (-dx).max(0) as usize;
                let hi = (wi - dx).min(wi).max(0) as usize;
                for y in 0..h {
                    let dst = row + y * w;
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        out[dst..dst + w].fill(E::zero());
                        continue;
                    }
                    let src_row = src_chan + sy as usize * w;
                    out[dst..dst + lo].fill(E::zero());
                    if hi > lo {
                        let s0 = src_row + (lo as isize + dx) as usize;
                        out[dst + lo..dst + hi].copy_from_slice(&sample[s0..s0 + (hi - lo)]);
                    }
                    out[dst + hi..dst + w].fill(E::zero());
                }
            }
        }
    }
}

/// Forward grouped convolution. Output shape (N, out_channels, H, W).
pub fn grouped_conv_forward<E: Element>(
    desc: &ConvDesc,
    x: &Tensor<E>,
    weights: &[Tensor<E>],
) -> Result<Tensor<E>> {
    desc.check_input(x)?;
    desc.check_weights(weights)?;
    let s = x.shape();
    let (h, w) = (s.h, s.w);
    let hw = h * w;
    let in_c = desc.in_channels();
    let out_c = desc.out_channels();
    let mut out = Tensor::zeros(Shape::new(s.n, out_c, h, w));
    let xs = x.as_slice();
    let os = out.as_mut_slice();
    let one_by_one = desc.kh == 1 && desc.kw == 1;
    let mut cols = if one_by_one {
        Vec::new()
    } else {
        let max_kin = desc.in_sizes.iter().max().unwrap() * desc.kh * desc.kw;
        vec![E::zero(); max_kin * hw]
    };
    for n in 0..s.n {
        let sample = &xs[n * in_c * hw..(n + 1) * in_c * hw];
        let out_sample = &mut os[n * out_c * hw..(n + 1) * out_c * hw];
        let mut c0 = 0usize;
        let mut o0 = 0usize;
        for (g, (&cn, &on)) in desc.in_sizes.iter().zip(&desc.out_sizes).enumerate() {
            let dst = &mut out_sample[o0 * hw..(o0 + on) * hw];
            if one_by_one {
                let src = &sample[c0 * hw..(c0 + cn) * hw];
                gemm(on, cn, hw, E::one(), weights[g].as_slice(), false, src, false, E::zero(), dst);
            } else {
                let kin = cn * desc.kh * desc.kw;
                im2col_group(sample, h, w, c0, cn, desc.kh, desc.kw, &mut cols);
                gemm(
                    on,
                    kin,
                    hw,
                    E::one(),
                    weights[g].as_slice(),
                    false,
                    &cols[..kin * hw],
                    false,
                    E::zero(),
                    dst,
                );
            }
            c0 += cn;
            o0 += on;
        }
    }
    Ok(out)
}

/// Gradient w.r.t. the input: a grouped convolution of `gout` with
/// spatially flipped weights and the in/out partitions swapped.
pub fn grouped_conv_backward_input<E: Element>(
    desc: &ConvDesc,
    gout: &Tensor<E>,
    weights: &[Tensor<E>],
) -> Result<Tensor<E>> {
    desc.check_weights(weights)?;
    let t = desc.transposed();
    t.check_input(gout)?;
    let flipped: Vec<Tensor<E>> = (0..desc.group_count())
        .map(|g| {
            let src = &weights[g];
            Tensor::from_fn(t.weight_shape(g), |ic, oc, i, j| {
                src.at(oc, ic, desc.kh - 1 - i, desc.kw - 1 - j)
            })
        })
        .collect();
    grouped_conv_forward(&t, gout, &flipped)
}

/// Gradient w.r.t. the weights, one block per group, accumulated over
/// the batch in sample order.
pub fn grouped_conv_backward_weights<E: Element>(
    desc: &ConvDesc,
    x: &Tensor<E>,
    gout: &Tensor<E>,
) -> Result<Vec<Tensor<E>>> {
    desc.check_input(x)?;
    let s = x.shape();
    let (h, w) = (s.h, s.w);
    let hw = h * w;
    let expect = Shape::new(s.n, desc.out_channels(), h, w);
    if gout.shape() != expect {
        return Err(Error::ShapeMismatch(format!(
            "output gradient is {}, expected {expect}",
            gout.shape()
        )));
    }
    let in_c = desc.in_channels();
    let out_c = desc.out_channels();
    let mut grads: Vec<Tensor<E>> = (0..desc.group_count())
        .map(|g| Tensor::zeros(desc.weight_shape(g)))
        .collect();
    let xs = x.as_slice();
    let gs = gout.as_slice();
    let one_by_one = desc.kh == 1 && desc.kw == 1;
    let mut cols = if one_by_one {
        Vec::new()
    } else {
        let max_kin = desc.in_sizes.iter().max().unwrap() * desc.kh * desc.kw;
        vec![E::zero(); max_kin * hw]
    };
    for n in 0..s.n {
        let sample = &xs[n * in_c * hw..(n + 1) * in_c * hw];
        let gout_sample = &gs[n * out_c * hw..(n + 1) * out_c * hw];
        let mut c0 = 0usize;
        let mut o0 = 0usize;
        for (g, (&cn, &on)) in desc.in_sizes.iter().zip(&desc.out_sizes).enumerate() {
            let gslice = &gout_sample[o0 * hw..(o0 + on) * hw];
            let kin = cn * desc.kh * desc.kw;
            if one_by_one {
                let src = &sample[c0 * hw..(c0 + cn) * hw];
                gemm(
                    on,
                    hw,
                    cn,
                    E::one(),
                    gslice,
                    false,
                    src,
                    true,
                    E::one(),
                    grads[g].as_mut_slice(),
                );
            } else {
                im2col_group(sample, h, w, c0, cn, desc.kh, desc.kw, &mut cols);
                gemm(
                    on,
                    hw,
                    kin,
                    E::one(),
                    gslice,
                    false,
                    &cols[..kin * hw],
                    true,
                    E::one(),
                    grads[g].as_mut_slice(),
                );
            }
            c0 += cn;
            o0 += on;
        }
    }
    Ok(grads)
}

/// Errors unless the two layers form a valid 1xm / mx1 factorized pair
/// over the same group arrays.
pub fn check_factorized_pair(first: &ConvDesc, second: &ConvDesc) -> Result<()> {
    if first.kh != 1 || second.kw != 1 || first.kw != second.kh {
        return Err(Error::InvalidLayer(format!(
            "factorized pair must be 1xm then mx1, got {}x{} then {}x{}",
            first.kh, first.kw, second.kh, second.kw
        )));
    }
    if first.in_sizes != first.out_sizes
        || second.in_sizes != second.out_sizes
        || first.in_sizes != second.in_sizes
    {
        return Err(Error::InvalidLayer(
            "factorized pair must share one square group array".into(),
        ));
    }
    Ok(())
}

/// Factorized grouped convolution: `relu(conv_mx1(relu(conv_1xm(x))))`.
pub fn factorized_forward<E: Element>(
    x: &Tensor<E>,
    first: &ConvDesc,
    w_first: &[Tensor<E>],
    second: &ConvDesc,
    w_second: &[Tensor<E>],
) -> Result<Tensor<E>> {
    check_factorized_pair(first, second)?;
    let a = relu_forward(&grouped_conv_forward(first, x, w_first)?);
    let b = relu_forward(&grouped_conv_forward(second, &a, w_second)?);
    Ok(b)
}
