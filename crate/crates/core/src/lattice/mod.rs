//! Truncated-Fock lattice φ⁴ theory: geometry, Hamiltonian, ground and Gibbs
//! states, free propagators and an exact correlator oracle.

mod hamiltonian;
mod propagator;
mod spectrum;

pub use hamiltonian::{build_hamiltonian, build_site_operators, LatticeModel, SiteOperators};
pub use propagator::{
    free_propagator_exact, free_propagator_momentum, oracle_npoint, CorrelatorOracle,
};
pub use spectrum::{gibbs_state, ground_state, Spectrum};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LinearOperator, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Boundary {
    Periodic,
    Open,
}

/// One-dimensional lattice geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec {
    pub n_sites: usize,
    pub boundary: Boundary,
    pub spacing: f64,
}

impl LatticeSpec {
    pub fn new(n_sites: usize, boundary: Boundary, spacing: f64) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidParameter(format!(
                "lattice needs at least 2 sites, got {n_sites}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lattice spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            n_sites,
            boundary,
            spacing,
        })
    }

    pub fn periodic(n_sites: usize) -> Result<Self> {
        Self::new(n_sites, Boundary::Periodic, 1.0)
    }

    /// Forward-difference bonds `(x, x+1)`. A periodic lattice includes the
    /// wrap bond `(N-1, 0)`; for `N = 2` this repeats the single link, exactly
    /// as the forward-difference sum does.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let n = self.n_sites;
        match self.boundary {
            Boundary::Periodic => (0..n).map(|x| (x, (x + 1) % n)).collect(),
            Boundary::Open => (0..n - 1).map(|x| (x, x + 1)).collect(),
        }
    }

    /// Number of bond endpoints at each site.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = alloc::vec![0; self.n_sites];
        for (x, y) in self.bonds() {
            deg[x] += 1;
            deg[y] += 1;
        }
        deg
    }
}

/// Dimensionless bare couplings `m̃₀² = m₀²a²` and `λ̃ = λa²`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Couplings {
    pub m0sq: f64,
    pub lambda: f64,
}

impl Couplings {
    pub fn new(m0sq: f64, lambda: f64) -> Result<Self> {
        if !m0sq.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "m0sq must be finite, got {m0sq}"
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "quartic coupling must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { m0sq, lambda })
    }

    pub fn free(m0sq: f64) -> Result<Self> {
        Self::new(m0sq, 0.0)
    }

    /// Whether the untruncated spectrum is bounded below.
    pub fn bounded_below(&self) -> bool {
        self.lambda > 0.0 || self.m0sq > 0.0
    }
}

/// Per-site harmonic-oscillator basis truncated at `n_max` quanta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FockBasis {
    pub n_max: usize,
    pub local_freq: f64,
}

impl FockBasis {
    pub fn new(n_max: usize, local_freq: f64) -> Result<Self> {
        if !(local_freq > 0.0 && local_freq.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "local_freq must be positive, got {local_freq}"
            )));
        }
        Ok(Self { n_max, local_freq })
    }

    /// Basis matched to the diagonal of the quadratic form, `√(m̃₀² + 2)/a`.
    /// Falls back to `1/a` when that is not positive (strongly tachyonic
    /// bare mass).
    pub fn adapted(n_max: usize, spec: &LatticeSpec, couplings: &Couplings) -> Self {
        let w2 = couplings.m0sq + 2.0;
        let w = if w2 > 0.0 { libm::sqrt(w2) } else { 1.0 };
        Self {
            n_max,
            local_freq: w / spec.spacing,
        }
    }

    pub fn site_dim(&self) -> usize {
        self.n_max + 1
    }

    /// `(n_max+1)^n_sites`, or `None` on overflow.
    pub fn field_dim(&self, n_sites: usize) -> Option<usize> {
        let mut d: usize = 1;
        for _ in 0..n_sites {
            d = d.checked_mul(self.site_dim())?;
        }
        Some(d)
    }
}

/// Hard limits on Hilbert-space dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceCaps {
    /// Largest joint (field ⊗ sensors) dimension for sparse evolution.
    pub max_sparse_dim: usize,
    /// Largest field dimension for dense diagonalization.
    pub max_dense_dim: usize,
}

impl Default for ResourceCaps {
    fn default() -> Self {
        Self {
            max_sparse_dim: 2_000_000,
            max_dense_dim: 4096,
        }
    }
}

impl ResourceCaps {
    pub fn check_sparse(&self, what: &'static str, dim: usize) -> Result<()> {
        if dim > self.max_sparse_dim {
            return Err(Error::ResourceLimit {
                what,
                dim,
                cap: self.max_sparse_dim,
            });
        }
        Ok(())
    }

    pub fn check_dense(&self, what: &'static str, dim: usize) -> Result<()> {
        if dim > self.max_dense_dim {
            return Err(Error::ResourceLimit {
                what,
                dim,
                cap: self.max_dense_dim,
            });
        }
        Ok(())
    }
}

/// Sparse operator on the field Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOperator {
    matrix: CsrMatrix,
    hermitian: bool,
}

impl FieldOperator {
    /// Wraps a matrix; a `hermitian` claim is verified to 1e-12 relative norm.
    pub fn new(matrix: CsrMatrix, hermitian: bool) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::InvalidInput("field operator must be square".into()));
        }
        let op = Self { matrix, hermitian };
        if hermitian {
            let defect = op.hermiticity_defect();
            if defect > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "operator flagged hermitian has relative defect {defect:e}"
                )));
            }
        }
        Ok(op)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// `‖A − A†‖_F / ‖A‖_F` (0 for the zero operator).
    pub fn hermiticity_defect(&self) -> f64 {
        let norm = self.matrix.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        let diff = self.matrix.combine(
            C64::new(1.0, 0.0),
            &self.matrix.adjoint(),
            C64::new(-1.0, 0.0),
        );
        diff.frobenius_norm() / norm
    }

    pub fn is_real(&self) -> bool {
        self.matrix.is_real()
    }

    /// Dense real copy; `None` if any entry has an imaginary part.
    pub fn to_dense_real(&self) -> Option<nalgebra::DMatrix<f64>> {
        if !self.is_real() {
            return None;
        }
        let n = self.matrix.rows();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for r in 0..n {
            for (c, v) in self.matrix.row(r) {
                m[(r, c)] = v.re;
            }
        }
        Some(m)
    }

    /// `⟨ψ|A|ψ⟩` for a field-space vector.
    pub fn expectation(&self, psi: &[C64]) -> C64 {
        let mut out = alloc::vec![C64::new(0.0, 0.0); psi.len()];
        self.matrix.matvec(psi, &mut out);
        crate::linalg::dot(psi, &out)
    }
}

impl LinearOperator for FieldOperator {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, x: &[C64], out: &mut [C64]) {
        self.matrix.matvec(x, out);
    }
}

/// Applies a single-site matrix to site `site` of a field vector in which
/// site 0 is the most significant digit.
pub fn apply_local(local: &nalgebra::DMatrix<C64>, site: usize, n_sites: usize, v: &mut [C64]) {
    let d = local.nrows();
    debug_assert_eq!(local.ncols(), d);
    let stride = d.pow((n_sites - 1 - site) as u32);
    let outer = v.len() / (d * stride);
    let mut buf = alloc::vec![C64::new(0.0, 0.0); d];
    for o in 0..outer {
        let base = o * d * stride;
        for r in 0..stride {
            let start = base + r;
            if (0..d).all(|k| v[start + k * stride] == C64::new(0.0, 0.0)) {
                continue;
            }
            for (i, b) in buf.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..d {
                    acc += local[(i, k)] * v[start + k * stride];
                }
                *b = acc;
            }
            for (k, b) in buf.iter().enumerate() {
                v[start + k * stride] = *b;
            }
        }
    }
}

/// Embeds a single-site real matrix as a sparse operator on the full field.
pub fn embed_local(local: &nalgebra::DMatrix<f64>, site: usize, n_sites: usize) -> CsrMatrix {
    let d = local.nrows();
    let dim = d.pow(n_sites as u32);
    let stride = d.pow((n_sites - 1 - site) as u32);
    let mut trip = Vec::new();
    for col in 0..dim {
        let n = (col / stride) % d;
        for m in 0..d {
            let val = local[(m, n)];
            if val != 0.0 {
                let row = col + m * stride - n * stride;
                trip.push((row, col, C64::new(val, 0.0)));
            }
        }
    }
    CsrMatrix::from_triplets(dim, dim, trip)
}
