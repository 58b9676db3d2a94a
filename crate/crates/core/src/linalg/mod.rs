//! Vector kernels, sparse operators and the Krylov/Lanczos solvers built on
//! top of them.

mod dense;
mod krylov;
mod lanczos;
mod sparse;

pub use dense::{herm_eigen, sym_eigen};
pub use krylov::{propagate, KrylovSettings, KrylovStats};
pub use lanczos::{lowest_eigenpair, LanczosSettings};
pub use sparse::CsrMatrix;

use alloc::vec::Vec;
use num_complex::Complex64;

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

/// Anything that can apply itself to a complex vector.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `out = self * x`; `out` is overwritten.
    fn apply(&self, x: &[C64], out: &mut [C64]);
}

/// Hermitian inner product `<a|b>`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    C64::new(re, im)
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    libm::sqrt(norm_sqr(a))
}

/// `y += alpha * x`
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: C64, x: &mut [C64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

/// Normalizes in place and returns the previous norm.
pub fn normalize(x: &mut [C64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        let inv = 1.0 / n;
        for xi in x.iter_mut() {
            *xi *= inv;
        }
    }
    n
}

/// Deterministic, non-degenerate start vector for iterative solvers.
pub(crate) fn seed_vector(dim: usize) -> Vec<C64> {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut v: Vec<C64> = (0..dim)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            C64::new(0.5 + u, 0.0)
        })
        .collect();
    normalize(&mut v);
    v
}
