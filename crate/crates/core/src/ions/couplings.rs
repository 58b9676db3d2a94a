use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::DMatrix;

use super::{parity, zeta_sum, EquilibriumPositions, IonCrystalConfig, Metric, SpringKernel};
use crate::error::{Error, Result};
use crate::lattice::Couplings;
use crate::linalg::sym_eigen;

/// Field-theory parameters at one site; only defined where `k̃ > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FieldParams {
    /// Sound velocity `c = a√(k̃/m)`.
    pub sound_velocity: f64,
    /// Luttinger parameter `K_L = a²√(k̃ m)`.
    pub luttinger: f64,
    pub m0sq: f64,
    pub lambda: f64,
    /// `m₀² a² / c`: the dimensionless mass once time is measured in units of `a/c`.
    pub m0sq_lattice: f64,
    /// `λ a² / c`.
    pub lambda_lattice: f64,
    /// `J = g / √K_L`.
    pub source_factor: f64,
    /// Maps the dipole-force amplitude `g` to the dimensionless source, `a²/(c√K_L)`.
    pub source_factor_lattice: f64,
}

impl FieldParams {
    fn from_springs(k: f64, u: f64, k_tilde: f64, a: f64, mass: f64) -> Option<Self> {
        if !(k_tilde > 0.0) {
            return None;
        }
        let c = a * libm::sqrt(k_tilde / mass);
        let kl = a * a * libm::sqrt(k_tilde * mass);
        let m0sq = k * a / kl;
        let lambda = 6.0 * u * a * a * a / (kl * kl);
        Some(Self {
            sound_velocity: c,
            luttinger: kl,
            m0sq,
            lambda,
            m0sq_lattice: m0sq * a * a / c,
            lambda_lattice: lambda * a * a / c,
            source_factor: 1.0 / libm::sqrt(kl),
            source_factor_lattice: a * a / (c * libm::sqrt(kl)),
        })
    }

    fn mean(items: &[FieldParams]) -> Self {
        let n = items.len() as f64;
        let avg = |f: fn(&FieldParams) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self {
            sound_velocity: avg(|p| p.sound_velocity),
            luttinger: avg(|p| p.luttinger),
            m0sq: avg(|p| p.m0sq),
            lambda: avg(|p| p.lambda),
            m0sq_lattice: avg(|p| p.m0sq_lattice),
            lambda_lattice: avg(|p| p.lambda_lattice),
            source_factor: avg(|p| p.source_factor),
            source_factor_lattice: avg(|p| p.source_factor_lattice),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiteCouplings {
    pub position: f64,
    pub zeta3: f64,
    pub zeta5: f64,
    /// Local spring constant.
    pub k: f64,
    /// Local quartic coefficient.
    pub u: f64,
    /// Spring constant between neighbouring displacements.
    pub k_tilde: f64,
    pub field: Option<FieldParams>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EffectiveCouplings {
    pub length_scale: f64,
    pub kappa: f64,
    pub sites: Vec<SiteCouplings>,
    /// Sites averaged into `bulk`: the central third of a linear chain, all
    /// sites of a periodic crystal.
    pub bulk_range: Range<usize>,
    /// `None` if any bulk site has `k̃ ≤ 0`.
    pub bulk: Option<FieldParams>,
    /// Sites with a non-positive gradient coefficient `k̃`.
    pub unstable_sites: Vec<usize>,
    pub quasi_1d: bool,
}

impl EffectiveCouplings {
    /// Bulk couplings in lattice units, ready for the lattice model.
    pub fn lattice_couplings(&self) -> Result<Couplings> {
        let b = self.bulk.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "gradient coefficient not positive on sites {:?}",
                self.unstable_sites
            ))
        })?;
        Couplings::new(b.m0sq_lattice, b.lambda_lattice)
    }

    pub fn min_k(&self) -> f64 {
        self.sites.iter().map(|s| s.k).fold(f64::INFINITY, f64::min)
    }
}

fn bulk_range(n: usize, metric: Metric) -> Range<usize> {
    if metric != Metric::Open || n < 3 {
        return 0..n;
    }
    n / 3..n - n / 3
}

pub fn effective_couplings(
    config: &IonCrystalConfig,
    positions: &EquilibriumPositions,
) -> Result<EffectiveCouplings> {
    config.validate()?;
    let n = positions.n();
    if n != config.n_ions {
        return Err(Error::InvalidInput(format!(
            "{n} positions for a crystal of {} ions",
            config.n_ions
        )));
    }
    let a = config.length_scale();
    let kappa = config.kappa();
    let spring = config.mass * config.omega[0] * config.omega[0];
    let mut sites = Vec::with_capacity(n);
    let mut unstable_sites = Vec::new();
    for i in 0..n {
        let zeta3 = zeta_sum(positions, i, 3)?;
        let zeta5 = zeta_sum(positions, i, 5)?;
        let mut kt = 0.0;
        for l in (0..n).filter(|&l| l != i) {
            let d = positions.distance(i, l);
            let d = match config.kernel {
                SpringKernel::Printed => d,
                SpringKernel::InverseCube => d * d * d,
            };
            kt += -parity(l) * parity(i) * kappa / (2.0 * d);
        }
        let k = spring * (1.0 - 0.5 * kappa * zeta3);
        let u = 0.75 / (a * a) * spring * kappa * zeta5;
        let k_tilde = spring * kt;
        let field = FieldParams::from_springs(k, u, k_tilde, a, config.mass);
        if field.is_none() {
            unstable_sites.push(i);
        }
        sites.push(SiteCouplings {
            position: positions.positions[i],
            zeta3,
            zeta5,
            k,
            u,
            k_tilde,
            field,
        });
    }
    let range = bulk_range(n, positions.metric);
    let bulk_fields: Option<Vec<FieldParams>> =
        sites[range.clone()].iter().map(|s| s.field).collect();
    Ok(EffectiveCouplings {
        length_scale: a,
        kappa,
        sites,
        bulk_range: range,
        bulk: bulk_fields.map(|f| FieldParams::mean(&f)),
        unstable_sites,
        quasi_1d: config.is_quasi_1d(),
    })
}

/// Lowest transverse normal mode of the crystal.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMode {
    /// Lowest eigenvalue of the transverse Hessian in units of `m ω_x²`.
    pub eigenvalue: f64,
    /// Squared angular frequency `eigenvalue · ω_x²`.
    pub omega_sq: f64,
    /// `|⟨v, s⟩|²` with the normalized staggered vector `s_i ∝ (−1)^i`.
    pub staggered_overlap: f64,
    pub mode: Vec<f64>,
}

/// Transverse Hessian in units of `m ω_x²`:
/// `K_ii = 1 − κ Σ_l 1/d³`, `K_il = κ/d³`.
fn transverse_hessian(kappa: f64, positions: &EquilibriumPositions) -> DMatrix<f64> {
    let n = positions.n();
    let mut k = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for l in (0..n).filter(|&l| l != i) {
            let d = positions.distance(i, l);
            let w = kappa / (d * d * d);
            k[(i, i)] -= w;
            k[(i, l)] = w;
        }
    }
    k
}

pub fn soft_mode_check(
    config: &IonCrystalConfig,
    positions: &EquilibriumPositions,
) -> Result<SoftMode> {
    config.validate()?;
    let n = positions.n();
    let (vals, vecs) = sym_eigen(&transverse_hessian(config.kappa(), positions))?;
    let mode: Vec<f64> = vecs.column(0).iter().copied().collect();
    let proj: f64 = mode
        .iter()
        .enumerate()
        .map(|(i, v)| parity(i) * v)
        .sum::<f64>();
    Ok(SoftMode {
        eigenvalue: vals[0],
        omega_sq: vals[0] * config.omega[0] * config.omega[0],
        staggered_overlap: proj * proj / n as f64,
        mode,
    })
}

/// Critical transverse frequencies of the linear-to-zigzag instability at
/// fixed positions, from the two criteria.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZigzagThresholds {
    /// `ω_x` below which `min_i k_i < 0`.
    pub local: f64,
    /// `ω_x` below which the transverse Hessian has a negative eigenvalue.
    pub hessian: f64,
}

/// Both criteria are linear in `κ ∝ 1/ω_x²` once the positions are fixed,
/// so the thresholds are closed-form.
pub fn zigzag_thresholds(
    config: &IonCrystalConfig,
    positions: &EquilibriumPositions,
) -> Result<ZigzagThresholds> {
    config.validate()?;
    let n = positions.n();
    let mut zmax = 0.0f64;
    for i in 0..n {
        zmax = zmax.max(zeta_sum(positions, i, 3)?);
    }
    // κ·ω_x² is independent of ω_x
    let kw = config.kappa() * config.omega[0] * config.omega[0];
    let coulomb = transverse_hessian(1.0, positions) - DMatrix::<f64>::identity(n, n);
    let (vals, _) = sym_eigen(&(-coulomb))?;
    let lmax = vals[n - 1];
    Ok(ZigzagThresholds {
        local: libm::sqrt(0.5 * kw * zmax),
        hessian: libm::sqrt(kw * lmax),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ions::{solve_equilibrium, Geometry};

    fn ring(n: usize, omega_x: f64) -> IonCrystalConfig {
        IonCrystalConfig {
            n_ions: n,
            geometry: Geometry::Ring { spacing: 1.0 },
            omega: [omega_x, 50.0, 1.0],
            mass: 1.0,
            e0_sq: 1.0,
            kernel: SpringKernel::Printed,
        }
    }

    fn chain(n: usize, omega_x: f64) -> IonCrystalConfig {
        IonCrystalConfig {
            geometry: Geometry::LinearChain,
            ..ring(n, omega_x)
        }
    }

    #[test]
    fn zero_coulomb_limit() {
        let c = IonCrystalConfig {
            e0_sq: 1e-12,
            ..ring(8, 2.0)
        };
        let p = solve_equilibrium(&c).unwrap();
        let e = effective_couplings(&c, &p).unwrap();
        for s in &e.sites {
            assert!((s.k - 4.0).abs() < 1e-9);
            assert!(s.u.abs() < 1e-9);
            assert!(s.field.unwrap().m0sq_lattice > 0.0);
        }
    }

    #[test]
    fn ring_is_homogeneous() {
        for kernel in [SpringKernel::Printed, SpringKernel::InverseCube] {
            for geometry in [
                Geometry::Ring { spacing: 1.3 },
                Geometry::Subwavelength { spacing: 0.7 },
            ] {
                let c = IonCrystalConfig {
                    kernel,
                    geometry,
                    ..ring(10, 0.8)
                };
                let p = solve_equilibrium(&c).unwrap();
                let e = effective_couplings(&c, &p).unwrap();
                let f0 = e.sites[0].field.unwrap();
                for s in &e.sites {
                    let f = s.field.unwrap();
                    assert!((s.k - e.sites[0].k).abs() < 1e-10);
                    assert!((f.m0sq_lattice - f0.m0sq_lattice).abs() < 1e-10);
                    assert!((f.lambda_lattice - f0.lambda_lattice).abs() < 1e-10);
                    assert!((f.luttinger - f0.luttinger).abs() < 1e-10);
                }
                assert_eq!(e.bulk_range, 0..10);
            }
        }
    }

    #[test]
    fn ring_staggered_mode_is_exact() {
        let c = ring(8, 1.5);
        let p = solve_equilibrium(&c).unwrap();
        let e = effective_couplings(&c, &p).unwrap();
        let s = soft_mode_check(&c, &p).unwrap();
        assert!((s.staggered_overlap - 1.0).abs() < 1e-10);
        assert!((s.eigenvalue * 2.25 - e.sites[0].k).abs() < 1e-10);
        let t = zigzag_thresholds(&c, &p).unwrap();
        assert!((t.local - t.hessian).abs() < 1e-10 * t.local);
    }

    #[test]
    fn two_ions_staggered() {
        let c = chain(2, 2.0);
        let p = solve_equilibrium(&c).unwrap();
        let s = soft_mode_check(&c, &p).unwrap();
        assert!((s.staggered_overlap - 1.0).abs() < 1e-12);
        // out-of-phase mode: 1 − 2κ/d³ with d³ = 2 and κ = 1/4
        assert!((s.eigenvalue - 0.75).abs() < 1e-10);
    }

    #[test]
    fn stiff_limit_is_stable() {
        let c = chain(10, 40.0);
        let p = solve_equilibrium(&c).unwrap();
        let s = soft_mode_check(&c, &p).unwrap();
        assert!(s.eigenvalue > 0.9);
    }

    #[test]
    fn thresholds_bracket_sign_changes() {
        let c = chain(10, 1.0);
        let p = solve_equilibrium(&c).unwrap();
        let t = zigzag_thresholds(&c, &p).unwrap();
        for (w, sign) in [(0.99, -1.0), (1.01, 1.0)] {
            let cl = c.with_omega_x(w * t.local);
            assert!(effective_couplings(&cl, &p).unwrap().min_k() * sign > 0.0);
            let ch = c.with_omega_x(w * t.hessian);
            assert!(soft_mode_check(&ch, &p).unwrap().eigenvalue * sign > 0.0);
        }
        assert!((t.local / t.hessian - 1.0).abs() < 0.05);
    }

    #[test]
    fn bulk_is_central_third() {
        let c = chain(9, 5.0);
        let p = solve_equilibrium(&c).unwrap();
        let e = effective_couplings(&c, &p).unwrap();
        assert_eq!(e.bulk_range, 3..6);
        assert!(e.quasi_1d);
        assert!(e.unstable_sites.is_empty());
        let lc = e.lattice_couplings().unwrap();
        assert_eq!(lc.m0sq, e.bulk.unwrap().m0sq_lattice);
    }

    #[test]
    fn unit_rescaling_leaves_dimensionless_outputs() {
        let base = IonCrystalConfig {
            e0_sq: 2.0,
            mass: 3.0,
            ..chain(8, 4.0)
        };
        // lengths × s, times × t, masses × t/s² keeps ħ = 1
        let (s, t) = (7.0, 0.3);
        let scaled = IonCrystalConfig {
            omega: base.omega.map(|w| w * t),
            mass: base.mass * s * s / t,
            e0_sq: base.e0_sq * t / s,
            ..base.clone()
        };
        let e1 = effective_couplings(&base, &solve_equilibrium(&base).unwrap()).unwrap();
        let e2 = effective_couplings(&scaled, &solve_equilibrium(&scaled).unwrap()).unwrap();
        assert!((e1.kappa - e2.kappa).abs() < 1e-12);
        for (a, b) in e1.sites.iter().zip(&e2.sites) {
            let (fa, fb) = (a.field.unwrap(), b.field.unwrap());
            assert!((fa.luttinger / fb.luttinger - 1.0).abs() < 1e-10);
            assert!((fa.m0sq_lattice / fb.m0sq_lattice - 1.0).abs() < 1e-10);
            assert!((fa.lambda_lattice / fb.lambda_lattice - 1.0).abs() < 1e-10);
        }
    }
}
