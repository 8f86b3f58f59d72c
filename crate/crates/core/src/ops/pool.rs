//! Max pooling (2x2, stride 2) and global average pooling.

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

/// 2x2 max pooling with stride 2. Returns the pooled tensor and the
/// argmax code per output element (0..4, row-major within the window,
/// first occurrence on ties) for the backward pass.
pub fn max_pool2_forward<E: Element>(x: &Tensor<E>) -> Result<(Tensor<E>, Vec<u8>)> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "2x2 max pooling needs even spatial dims, got {}x{}",
            s.h, s.w
        )));
    }
    let out_shape = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0u8; out_shape.count()];
    let mut k = 0usize;
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..out_shape.h {
                for ox in 0..out_shape.w {
                    let mut best = x.at(n, c, oy * 2, ox * 2);
                    let mut code = 0u8;
                    for (idx, (dy, dx)) in
                        [(0usize, 1usize), (1, 0), (1, 1)].iter().enumerate()
                    {
                        let v = x.at(n, c, oy * 2 + dy, ox * 2 + dx);
                        if v > best {
                            best = v;
                            code = idx as u8 + 1;
                        }
                    }
                    out.as_mut_slice()[k] = best;
                    argmax[k] = code;
                    k += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient to the window position recorded in
/// `argmax`; all other positions receive zero.
pub fn max_pool2_backward<E: Element>(
    gout: &Tensor<E>,
    argmax: &[u8],
    in_shape: Shape,
) -> Result<Tensor<E>> {
    let s = gout.shape();
    let expect = Shape::new(in_shape.n, in_shape.c, in_shape.h / 2, in_shape.w / 2);
    if s != expect || argmax.len() != s.count() {
        return Err(Error::ShapeMismatch(format!(
            "pool gradient is {s}, expected {expect}"
        )));
    }
    let mut dx = Tensor::zeros(in_shape);
    let mut k = 0usize;
    for n in 0..s.n {
        for c in 0..s.c {
            for oy in 0..s.h {
                for ox in 0..s.w {
                    let code = argmax[k] as usize;
                    let (dy, dxo) = (code / 2, code % 2);
                    *dx.at_mut(n, c, oy * 2 + dy, ox * 2 + dxo) = gout.as_slice()[k];
                    k += 1;
                }
            }
        }
    }
    Ok(dx)
}

/// Spatial mean per channel: (N, C, H, W) -> (N, C, 1, 1).
///
/// Summation runs in row-major spatial order (fixed reduction order).
pub fn global_avg_pool_forward<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    let s = x.shape();
    let hw = s.h * s.w;
    let inv = E::from_f64(1.0 / hw as f64);
    let xs = x.as_slice();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, 1));
    for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
        let base = i * hw;
        let mut acc = E::zero();
        for &v in &xs[base..base + hw] {
            acc = acc + v;
        }
        *o = acc * inv;
    }
    out
}

/// Distributes each channel gradient uniformly over H*W positions.
pub fn global_avg_pool_backward<E: Element>(gout: &Tensor<E>, in_shape: Shape) -> Result<Tensor<E>> {
    let s = gout.shape();
    if s != Shape::new(in_shape.n, in_shape.c, 1, 1) {
        return Err(Error::ShapeMismatch(format!(
            "pool gradient is {s}, input was {in_shape}"
        )));
    }
    let hw = in_shape.h * in_shape.w;
    let inv = E::from_f64(1.0 / hw as f64);
    let mut dx = Tensor::zeros(in_shape);
    for (i, &g) in gout.as_slice().iter().enumerate() {
        let v = g * inv;
        dx.as_mut_slice()[i * hw..(i + 1) * hw].fill(v);
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn single_window_max() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = max_pool2_forward(&x).unwrap();
        assert_eq!(y.as_slice(), [4.0]);
        assert_eq!(arg, [3]);
    }

    #[test]
    fn constant_input_pools_to_constant() {
        let x = Tensor::filled(Shape::new(2, 3, 4, 4), 0.5f32);
        let (y, arg) = max_pool2_forward(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 3, 2, 2));
        assert!(y.as_slice().iter().all(|&v| v == 0.5));
        // ties resolve to the first window position
        assert!(arg.iter().all(|&a| a == 0));
    }

    #[test]
    fn matches_naive_windowed_max() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let x = Tensor::from_fn(Shape::new(1, 1, 8, 8), |_, _, _, _| {
            rng.random_range(-1.0f64..1.0)
        });
        let (y, _) = max_pool2_forward(&x).unwrap();
        for oy in 0..4 {
            for ox in 0..4 {
                let want = x
                    .at(0, 0, oy * 2, ox * 2)
                    .max(x.at(0, 0, oy * 2, ox * 2 + 1))
                    .max(x.at(0, 0, oy * 2 + 1, ox * 2))
                    .max(x.at(0, 0, oy * 2 + 1, ox * 2 + 1));
                assert_eq!(y.at(0, 0, oy, ox), want);
            }
        }
    }

    #[test]
    fn odd_dims_rejected() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 3, 4));
        assert!(matches!(max_pool2_forward(&x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let x = Tensor::from_vec(
            Shape::new(1, 1, 2, 4),
            vec![1.0f64, 2.0, 7.0, 3.0, 5.0, 0.0, 1.0, 1.0],
        )
        .unwrap();
        let (y, arg) = max_pool2_forward(&x).unwrap();
        assert_eq!(y.as_slice(), [5.0, 7.0]);
        let g = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![10.0, 20.0]).unwrap();
        let dx = max_pool2_backward(&g, &arg, x.shape()).unwrap();
        assert_eq!(dx.as_slice(), [0.0, 0.0, 20.0, 0.0, 10.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn gap_constant_and_identity_cases() {
        let x = Tensor::filled(Shape::new(1, 2, 3, 3), 4.25f64);
        let y = global_avg_pool_forward(&x);
        assert_eq!(y.shape(), Shape::new(1, 2, 1, 1));
        assert!((y.as_slice()[0] - 4.25).abs() < 1e-12);

        let x = Tensor::from_vec(Shape::new(1, 3, 1, 1), vec![1.0f64, -2.0, 3.0]).unwrap();
        let y = global_avg_pool_forward(&x);
        assert_eq!(y.as_slice(), x.as_slice());
    }

    #[test]
    fn gap_matches_mean_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let x = Tensor::from_fn(Shape::new(2, 3, 5, 4), |_, _, _, _| {
            rng.random_range(-2.0f64..2.0)
        });
        let y = global_avg_pool_forward(&x);
        for n in 0..2 {
            for c in 0..3 {
                let mut sum = 0.0;
                for h in 0..5 {
                    for w in 0..4 {
                        sum += x.at(n, c, h, w);
                    }
                }
                assert!((y.at(n, c, 0, 0) - sum / 20.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gap_backward_spreads_uniformly() {
        let g = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![8.0f64, -4.0]).unwrap();
        let dx = global_avg_pool_backward(&g, Shape::new(1, 2, 2, 2)).unwrap();
        assert_eq!(dx.as_slice(), [2.0, 2.0, 2.0, 2.0, -1.0, -1.0, -1.0, -1.0]);
    }
}
