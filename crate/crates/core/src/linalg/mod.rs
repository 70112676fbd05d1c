//! Dense linear-algebra kernels the toolkit is built on.
//!
//! Everything here is deterministic: no randomized pivoting, no
//! platform-dependent dispatch, fixed tie-breaking. That is what makes
//! placements and reports bit-reproducible for a given input.

mod qr;
mod svd;

pub use qr::{pivoted_qr, PivotedQrFactors};
pub use svd::{thin_svd, PseudoInverse, ThinSvd};

use crate::scalar::Real;

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

pub(crate) fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_and_norm() {
        let a = [3.0f64, 4.0];
        assert_eq!(dot(&a, &a), 25.0);
        assert_eq!(norm2(&a), 5.0);
    }
}
