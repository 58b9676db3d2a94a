use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{embed_local, Couplings, FieldOperator, FockBasis, LatticeSpec, ResourceCaps};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, CsrMatrix, C64};

/// Single-site `φ` and `π` in the truncated ladder basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteOperators {
    pub phi: FieldOperator,
    pub pi: FieldOperator,
}

/// Real matrices of `φ` and `π/i` for one site, for spacing `a`:
/// `φ = (b + b†)/√(2aω)`, `π = i√(ω/2a)(b† − b)`.
fn ladder(basis: &FockBasis, a: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = basis.site_dim();
    let w = basis.local_freq;
    let xs = 1.0 / libm::sqrt(2.0 * a * w);
    let ps = libm::sqrt(w / (2.0 * a));
    let mut phi = DMatrix::zeros(d, d);
    let mut pi_im = DMatrix::zeros(d, d);
    for n in 1..d {
        let s = libm::sqrt(n as f64);
        // b|n> = √n |n-1>
        phi[(n - 1, n)] = xs * s;
        phi[(n, n - 1)] = xs * s;
        pi_im[(n, n - 1)] = ps * s;
        pi_im[(n - 1, n)] = -ps * s;
    }
    (phi, pi_im)
}

fn real_to_csr(m: &DMatrix<f64>, factor: C64) -> CsrMatrix {
    let mut trip = Vec::new();
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if m[(r, c)] != 0.0 {
                trip.push((r, c, factor * m[(r, c)]));
            }
        }
    }
    CsrMatrix::from_triplets(m.nrows(), m.ncols(), trip)
}

/// Single-site field and momentum operators in lattice units (`a = 1`).
pub fn build_site_operators(basis: &FockBasis) -> Result<SiteOperators> {
    if basis.n_max < 1 {
        return Err(Error::InvalidParameter(
            "site operators need n_max >= 1".into(),
        ));
    }
    if !(basis.local_freq > 0.0) {
        return Err(Error::InvalidParameter(
            "local_freq must be positive".into(),
        ));
    }
    let (phi, pi_im) = ladder(basis, 1.0);
    Ok(SiteOperators {
        phi: FieldOperator::new(real_to_csr(&phi, C64::new(1.0, 0.0)), true)?,
        pi: FieldOperator::new(real_to_csr(&pi_im, C64::new(0.0, 1.0)), true)?,
    })
}

/// Everything the protocol needs about one lattice model: the Hamiltonian,
/// per-site field operators and the local φ eigenbasis used for exact kicks.
#[derive(Debug, Clone)]
pub struct LatticeModel {
    pub spec: LatticeSpec,
    pub couplings: Couplings,
    pub basis: FockBasis,
    pub hamiltonian: FieldOperator,
    phi_local: DMatrix<f64>,
    phi_eigvals: Vec<f64>,
    phi_eigvecs: DMatrix<f64>,
}

impl LatticeModel {
    pub fn build(
        spec: LatticeSpec,
        couplings: Couplings,
        basis: FockBasis,
        caps: &ResourceCaps,
    ) -> Result<Self> {
        let hamiltonian = build_hamiltonian(&spec, &couplings, &basis, caps)?;
        let (phi_local, _) = ladder(&basis, spec.spacing);
        let (phi_eigvals, phi_eigvecs) = sym_eigen(&phi_local)?;
        Ok(Self {
            spec,
            couplings,
            basis,
            hamiltonian,
            phi_local,
            phi_eigvals,
            phi_eigvecs,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.spec.n_sites
    }

    pub fn field_dim(&self) -> usize {
        self.hamiltonian.matrix().rows()
    }

    pub fn site_dim(&self) -> usize {
        self.basis.site_dim()
    }

    /// Local `φ` matrix (one site, including the `1/√a` scaling).
    pub fn phi_local(&self) -> &DMatrix<f64> {
        &self.phi_local
    }

    /// `φ(x)` on the full field space.
    pub fn phi(&self, site: usize) -> FieldOperator {
        FieldOperator {
            matrix: embed_local(&self.phi_local, site, self.spec.n_sites),
            hermitian: true,
        }
    }

    /// Exact local unitary `exp(i c φ)`.
    pub fn kick_unitary(&self, c: f64) -> DMatrix<C64> {
        let d = self.phi_local.nrows();
        let v = &self.phi_eigvecs;
        DMatrix::from_fn(d, d, |i, j| {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..d {
                let ph = C64::new(0.0, c * self.phi_eigvals[k]).exp();
                acc += ph * (v[(i, k)] * v[(j, k)]);
            }
            acc
        })
    }
}

/// `H = Σ_x a[½π² + ½(∇φ)² + (m̃₀²/2a²)φ² + (λ̃/24a²)φ⁴]` with forward
/// differences `∇φ(x) = (φ(x+1) − φ(x))/a`.
///
/// The gradient term is expanded into on-site `deg(x)/(2a) φ(x)²` pieces and
/// bond products `−(1/a) φ(x)φ(x+1)`. On-site powers are compressions of the
/// untruncated operators onto the kept levels (formed in a basis two levels
/// larger), so the truncated `H` is a projection of the full one and `E₀` is
/// variational in `n_max`.
pub fn build_hamiltonian(
    spec: &LatticeSpec,
    couplings: &Couplings,
    basis: &FockBasis,
    caps: &ResourceCaps,
) -> Result<FieldOperator> {
    if !(basis.local_freq > 0.0) {
        return Err(Error::InvalidParameter(
            "local_freq must be positive".into(),
        ));
    }
    let n = spec.n_sites;
    let dim = basis.field_dim(n).ok_or(Error::ResourceLimit {
        what: "field Hilbert space",
        dim: usize::MAX,
        cap: caps.max_sparse_dim,
    })?;
    caps.check_sparse("field Hilbert space", dim)?;

    let a = spec.spacing;
    let msq = couplings.m0sq / (a * a);
    let lam = couplings.lambda / (a * a);
    let (phi, _) = ladder(basis, a);
    let d = basis.site_dim();
    let wide = FockBasis {
        n_max: basis.n_max + 2,
        ..*basis
    };
    let (phi_w, pi_w) = ladder(&wide, a);
    let phi2_w = &phi_w * &phi_w;
    let phi2 = phi2_w.view((0, 0), (d, d)).into_owned();
    let phi4 = (&phi2_w * &phi2_w).view((0, 0), (d, d)).into_owned();
    // π² = −(π/i)²
    let pi2 = (-(&pi_w * &pi_w)).view((0, 0), (d, d)).into_owned();

    let degrees = spec.degrees();
    let mut h = CsrMatrix::zeros(dim, dim);
    for (x, &deg) in degrees.iter().enumerate() {
        let local = &pi2 * (0.5 * a)
            + &phi2 * (0.5 * a * msq + deg as f64 / (2.0 * a))
            + &phi4 * (a * lam / 24.0);
        let term = embed_local(&local, x, n);
        h = h.combine(C64::new(1.0, 0.0), &term, C64::new(1.0, 0.0));
    }
    let phis: Vec<CsrMatrix> = (0..n).map(|x| embed_local(&phi, x, n)).collect();
    for (x, y) in spec.bonds() {
        let prod = phis[x].matmul(&phis[y]);
        h = h.combine(C64::new(1.0, 0.0), &prod, C64::new(-1.0 / a, 0.0));
    }
    h.prune(0.0);
    FieldOperator::new(h, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;

    fn commutator_defect(n_max: usize) -> f64 {
        let basis = FockBasis::new(n_max, 1.3).unwrap();
        let ops = build_site_operators(&basis).unwrap();
        let p = ops.phi.matrix().to_dense();
        let q = ops.pi.matrix().to_dense();
        let comm = &p * &q - &q * &p;
        let mut worst: f64 = 0.0;
        for i in 0..n_max {
            for j in 0..n_max {
                let target = if i == j {
                    C64::new(0.0, 1.0)
                } else {
                    C64::new(0.0, 0.0)
                };
                worst = worst.max((comm[(i, j)] - target).norm());
            }
        }
        worst
    }

    #[test]
    fn two_level_phi_is_scaled_pauli_x() {
        let ops = build_site_operators(&FockBasis::new(1, 1.0).unwrap()).unwrap();
        let p = ops.phi.matrix().to_dense();
        let s = 1.0 / libm::sqrt(2.0);
        assert!((p[(0, 1)].re - s).abs() < 1e-15 && (p[(1, 0)].re - s).abs() < 1e-15);
        assert_eq!(p[(0, 0)], C64::new(0.0, 0.0));
    }

    #[test]
    fn commutator_exact_below_cutoff() {
        assert!(commutator_defect(1) < 1e-14);
        assert!(commutator_defect(8) < 1e-12);
    }

    #[test]
    fn rejects_bad_basis() {
        assert!(FockBasis::new(4, 0.0).is_err());
        assert!(build_site_operators(&FockBasis {
            n_max: 0,
            local_freq: 1.0
        })
        .is_err());
    }

    #[test]
    fn zero_cutoff_hamiltonian_is_constant() {
        let spec = LatticeSpec::periodic(2).unwrap();
        let c = Couplings::new(1.0, 0.6).unwrap();
        let w = 1.7;
        let basis = FockBasis::new(0, w).unwrap();
        let h = build_hamiltonian(&spec, &c, &basis, &ResourceCaps::default()).unwrap();
        assert_eq!(h.matrix().rows(), 1);
        // vacuum moments: ⟨π²⟩ = ω/2, ⟨φ²⟩ = 1/2ω, ⟨φ⁴⟩ = 3/4ω²; degree 2 per site
        let site = 0.5 * w / 2.0 + (0.5 + 1.0) / (2.0 * w) + 0.6 / 24.0 * 3.0 / (4.0 * w * w);
        assert!((h.matrix().get(0, 0) - C64::new(2.0 * site, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn resource_cap_enforced() {
        let spec = LatticeSpec::periodic(6).unwrap();
        let c = Couplings::free(1.0).unwrap();
        let basis = FockBasis::new(9, 1.0).unwrap();
        let caps = ResourceCaps {
            max_sparse_dim: 1000,
            max_dense_dim: 10,
        };
        assert!(matches!(
            build_hamiltonian(&spec, &c, &basis, &caps),
            Err(Error::ResourceLimit { .. })
        ));
    }

    #[test]
    fn open_chain_hermitian_and_sparse() {
        let spec = LatticeSpec::new(3, Boundary::Open, 1.0).unwrap();
        let c = Couplings::new(0.7, 0.4).unwrap();
        let basis = FockBasis::adapted(5, &spec, &c);
        let h = build_hamiltonian(&spec, &c, &basis, &ResourceCaps::default()).unwrap();
        assert!(h.hermiticity_defect() < 1e-12);
        assert!(h.matrix().nnz() < 216 * 40);
    }

    #[test]
    fn kick_unitary_composes() {
        let spec = LatticeSpec::periodic(2).unwrap();
        let c = Couplings::free(1.0).unwrap();
        let m = LatticeModel::build(
            spec,
            c,
            FockBasis::adapted(6, &spec, &c),
            &ResourceCaps::default(),
        )
        .unwrap();
        let u = m.kick_unitary(0.3) * m.kick_unitary(-0.1);
        let w = m.kick_unitary(0.2);
        assert!((u - w).norm() < 1e-13);
    }
}
