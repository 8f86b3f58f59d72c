//! ReLU activation. The subgradient at exactly 0 is taken as 0.

use crate::tensor::{Element, Tensor};

pub fn relu_forward<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    x.map(|v| if v > E::zero() { v } else { E::zero() })
}

/// `dx = gout` where the forward input was strictly positive, else 0.
pub fn relu_backward<E: Element>(gout: &Tensor<E>, x: &Tensor<E>) -> Tensor<E> {
    debug_assert_eq!(gout.shape(), x.shape());
    let mut dx = gout.clone();
    for (d, &v) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if v <= E::zero() {
            *d = E::zero();
        }
    }
    dx
}
