//! Trapped-ion crystals near the linear-to-zigzag instability, mapped onto
//! the lattice φ⁴ couplings.
//!
//! Positions are dimensionless (`r = a·r̃`). The chain is aligned with `z`,
//! the zigzag distortion lives along `x`, and `y` is the stiff transverse
//! axis. Units must be consistent with `ħ = 1`.

mod couplings;
mod equilibrium;

pub use couplings::{
    effective_couplings, soft_mode_check, zigzag_thresholds, EffectiveCouplings, FieldParams,
    SiteCouplings, SoftMode, ZigzagThresholds,
};
pub use equilibrium::{axial_energy, axial_gradient, axial_hessian, solve_equilibrium};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `ω_y` must exceed both other trap frequencies by this factor to count as
/// quasi one-dimensional.
pub const QUASI_1D_RATIO: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Geometry {
    /// Inhomogeneous chain in a linear Paul trap; `a = (e₀²/m ω_z²)^{1/3}`.
    LinearChain,
    /// Ions on a circle with uniform nearest-neighbour chord `spacing`.
    Ring { spacing: f64 },
    /// Uniform chain pinned by an optical lattice; treated as periodic with
    /// minimum-image distances.
    Subwavelength { spacing: f64 },
}

/// Distance power inside the `k̃` neighbour-spring sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SpringKernel {
    /// `κ / (2 d)`.
    #[default]
    Printed,
    /// `κ / (2 d³)`, for sensitivity studies.
    InverseCube,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IonCrystalConfig {
    pub n_ions: usize,
    pub geometry: Geometry,
    /// Trap frequencies `[ω_x, ω_y, ω_z]` (angular).
    pub omega: [f64; 3],
    pub mass: f64,
    /// Coulomb constant `e₀² = e²/4πε₀`.
    pub e0_sq: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub kernel: SpringKernel,
}

impl IonCrystalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ions < 2 {
            return Err(Error::InvalidParameter(format!(
                "crystal needs at least 2 ions, got {}",
                self.n_ions
            )));
        }
        for (name, v) in [
            ("omega_x", self.omega[0]),
            ("omega_y", self.omega[1]),
            ("omega_z", self.omega[2]),
            ("mass", self.mass),
            ("e0_sq", self.e0_sq),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        match self.geometry {
            Geometry::LinearChain => {}
            Geometry::Ring { spacing } | Geometry::Subwavelength { spacing } => {
                if !(spacing > 0.0 && spacing.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "spacing must be positive, got {spacing}"
                    )));
                }
                if self.n_ions % 2 != 0 {
                    return Err(Error::InvalidParameter(format!(
                        "periodic crystal needs an even number of ions for the staggered \
                         distortion, got {}",
                        self.n_ions
                    )));
                }
            }
        }
        Ok(())
    }

    /// Length scale `a` of the dimensionless positions.
    pub fn length_scale(&self) -> f64 {
        match self.geometry {
            Geometry::LinearChain => {
                libm::cbrt(self.e0_sq / (self.mass * self.omega[2] * self.omega[2]))
            }
            Geometry::Ring { spacing } | Geometry::Subwavelength { spacing } => spacing,
        }
    }

    /// `κ = e₀² / (m ω_x² a³)`.
    pub fn kappa(&self) -> f64 {
        let a = self.length_scale();
        self.e0_sq / (self.mass * self.omega[0] * self.omega[0] * a * a * a)
    }

    pub fn with_omega_x(&self, omega_x: f64) -> Self {
        let mut c = self.clone();
        c.omega[0] = omega_x;
        c
    }

    pub fn is_quasi_1d(&self) -> bool {
        self.omega[1] >= QUASI_1D_RATIO * self.omega[0].max(self.omega[2])
    }
}

/// How distances between dimensionless coordinates are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    Open,
    /// Chord length on a circle with unit nearest-neighbour chord.
    Ring,
    /// Minimum-image distance on a periodic line of length `N`.
    MinImage,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquilibriumPositions {
    /// Dimensionless coordinates, ascending.
    pub positions: Vec<f64>,
    /// Gradient norm of the axial potential at the returned point.
    pub residual: f64,
    pub metric: Metric,
}

impl EquilibriumPositions {
    /// Open-chain positions given directly, e.g. for hand checks.
    pub fn open(positions: Vec<f64>) -> Result<Self> {
        for w in positions.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidInput(
                    "positions must be strictly ascending".into(),
                ));
            }
        }
        Ok(Self {
            positions,
            residual: 0.0,
            metric: Metric::Open,
        })
    }

    pub fn uniform(n: usize, metric: Metric) -> Self {
        Self {
            positions: (0..n).map(|i| i as f64).collect(),
            residual: 0.0,
            metric,
        }
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn distance(&self, i: usize, l: usize) -> f64 {
        let n = self.n() as f64;
        let d = libm::fabs(self.positions[i] - self.positions[l]);
        match self.metric {
            Metric::Open => d,
            Metric::MinImage => d.min(n - d),
            Metric::Ring => {
                let s = core::f64::consts::PI / n;
                libm::sin(s * d) / libm::sin(s)
            }
        }
    }
}

fn parity(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `ζ_i(n) = Σ_{l≠i} [(−1)^i − (−1)^l]^{n−1} / |r̃_i − r̃_l|^n` for odd `n`.
pub fn zeta_sum(positions: &EquilibriumPositions, i: usize, n: u32) -> Result<f64> {
    if n != 3 && n != 5 {
        return Err(Error::InvalidParameter(format!(
            "zeta order must be 3 or 5, got {n}"
        )));
    }
    if i >= positions.n() {
        return Err(Error::InvalidParameter(format!(
            "site {i} outside crystal of {} ions",
            positions.n()
        )));
    }
    let mut acc = 0.0;
    for l in 0..positions.n() {
        if l == i {
            continue;
        }
        let d = positions.distance(i, l);
        if !(d > 0.0) {
            return Err(Error::InvalidInput(format!("ions {i} and {l} coincide")));
        }
        let w = libm::pow(parity(i) - parity(l), (n - 1) as f64);
        if w != 0.0 {
            acc += w / libm::pow(d, n as f64);
        }
    }
    Ok(acc)
}
