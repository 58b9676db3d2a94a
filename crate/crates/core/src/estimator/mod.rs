//! Source sets, finite-difference stencils over parity records, propagator
//! extraction, Richardson refinement and mass fits.
//!
//! Normalization used throughout: for `n` pulses the inclusion–exclusion
//! difference [`combine_general`] estimates `Re(e^{iθ} iⁿ G⁽ⁿ⁾)`, where `θ`
//! is the branch phase at readout. For `n = 2` the alternating sum
//! [`combine_two_point`] is its negative, `Re(e^{iθ} G)`.

mod mass;
mod pipeline;

pub use mass::{extract_mass, MassFit};
pub use pipeline::{readout_for_phase, EstimatorConfig, PropagatorEstimator};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::sensor::{CouplingForm, KickPulse, ParityRecord, SensorLayout, SourceSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum StencilVariant {
    /// GHZ sensors read out at two branch phases.
    GhzPhased,
    /// Balanced Néel sensors with staggered `σ³/2` sources: real part.
    DfsReal,
    /// Néel sensors in quadrature with projector sources: imaginary part.
    DfsImag,
}

/// The `n` source points, their strengths and the variant.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilPlan {
    /// `(t_i, site_i)`.
    pub points: Vec<(f64, usize)>,
    pub strengths: Vec<f64>,
    pub variant: StencilVariant,
    pub t0: f64,
    /// Earliest admissible readout; phase-locked readouts are the first
    /// matching times at or after it.
    pub readout_time: f64,
}

impl StencilPlan {
    /// Plan with uniform strength `j`, `t0 = min(0, min t_i)` and readout one
    /// unit after the latest point.
    pub fn uniform(points: Vec<(f64, usize)>, j: f64, variant: StencilVariant) -> Self {
        let tmax = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let tmin = points.iter().map(|p| p.0).fold(0.0, f64::min);
        let n = points.len();
        Self {
            points,
            strengths: alloc::vec![j; n],
            variant,
            t0: tmin,
            readout_time: tmax + 1.0,
        }
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// Same plan with every strength multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            strengths: self.strengths.iter().map(|j| j * factor).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 || n % 2 != 0 {
            return Err(Error::Unsupported(format!(
                "stencils need an even number of points >= 2, got {n}"
            )));
        }
        if n > 12 {
            return Err(Error::Unsupported(format!("{n}-point stencil (max 12)")));
        }
        if self.strengths.len() != n {
            return Err(Error::InvalidInput(
                "one strength per point required".into(),
            ));
        }
        if self.strengths.iter().any(|&j| !(j > 0.0 && j.is_finite())) {
            return Err(Error::InvalidParameter("strengths must be positive".into()));
        }
        if self
            .points
            .iter()
            .any(|p| !p.0.is_finite() || p.0 < self.t0)
        {
            return Err(Error::InvalidInput(
                "points must be finite and not before t0".into(),
            ));
        }
        let tmax = self
            .points
            .iter()
            .map(|p| p.0)
            .fold(f64::NEG_INFINITY, f64::max);
        if !(self.readout_time > tmax) {
            return Err(Error::InvalidInput(
                "readout time must follow every point".into(),
            ));
        }
        if self.variant != StencilVariant::GhzPhased {
            if n != 2 || self.points[0].1 == self.points[1].1 {
                return Err(Error::Unsupported(
                    "Néel variants are implemented for two points on distinct sites".into(),
                ));
            }
        }
        Ok(())
    }

    /// Distinct sites in order of first appearance; these carry the sensors.
    pub fn sensor_sites(&self) -> Vec<usize> {
        let mut sites = Vec::new();
        for &(_, x) in &self.points {
            if !sites.contains(&x) {
                sites.push(x);
            }
        }
        sites
    }

    pub fn layout(&self, omega0: f64, n_sites: usize) -> Result<SensorLayout> {
        SensorLayout::new(self.sensor_sites(), omega0, n_sites)
    }

    /// Whether point 1 is not earlier than point 2 (time-ordering of the
    /// two-point function).
    pub fn first_later(&self) -> bool {
        self.points[0].0 >= self.points[1].0
    }
}

/// Subset masks in reflected-binary order: for `n = 2` this is
/// `(0,0), (𝖩₁,0), (𝖩₁,𝖩₂), (0,𝖩₂)`.
pub fn subset_order(n: usize) -> Vec<u64> {
    (0..1u64 << n).map(|m| m ^ (m >> 1)).collect()
}

/// All `2ⁿ` on/off source configurations of a plan. Schedule `id` is the
/// subset mask (bit `i` set when pulse `i` is on).
pub fn build_source_sets(plan: &StencilPlan) -> Result<Vec<SourceSchedule>> {
    plan.validate()?;
    let n = plan.n();
    let mut out = Vec::with_capacity(1 << n);
    for mask in subset_order(n) {
        let mut pulses: Vec<KickPulse> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| {
                let (time, site) = plan.points[i];
                let (sign, coupling) = match plan.variant {
                    StencilVariant::GhzPhased | StencilVariant::DfsImag => {
                        (1, CouplingForm::RamseyP)
                    }
                    StencilVariant::DfsReal => {
                        (if i % 2 == 0 { 1 } else { -1 }, CouplingForm::DfsSz)
                    }
                };
                KickPulse {
                    site,
                    time,
                    strength: plan.strengths[i],
                    stagger_sign: sign,
                    coupling,
                }
            })
            .collect();
        pulses.sort_by(|a, b| a.time.total_cmp(&b.time));
        out.push(SourceSchedule {
            id: mask,
            t0: plan.t0,
            pulses,
            readout_time: plan.readout_time,
        });
    }
    Ok(out)
}

/// `Σ_{m=1}^{4} (−1)^m P[𝐉⁽ᵐ⁾] / (𝖩₁𝖩₂)` over the four two-point sets in
/// [`subset_order`]. Estimates `Re(e^{iθ} G⁽²⁾)`.
pub fn combine_two_point(records: &[ParityRecord], strengths: (f64, f64)) -> Result<f64> {
    let order = subset_order(2);
    if records.len() != 4 {
        return Err(Error::InvalidInput(format!(
            "expected 4 records, got {}",
            records.len()
        )));
    }
    for (r, &id) in records.iter().zip(&order) {
        if r.schedule_id != id {
            return Err(Error::InvalidInput(format!(
                "record for schedule {} where {id} was expected",
                r.schedule_id
            )));
        }
    }
    let sum: f64 = records
        .iter()
        .enumerate()
        .map(|(k, r)| if (k + 1) % 2 == 0 { r.value } else { -r.value })
        .sum();
    Ok(sum / (strengths.0 * strengths.1))
}

/// Inclusion–exclusion mixed difference `Σ_S (−1)^{n−|S|} P[𝐉_S] / Π_i 𝖩_i`.
/// Records may come in any order; each subset must appear exactly once.
pub fn combine_general(records: &[ParityRecord], strengths: &[f64]) -> Result<f64> {
    let n = strengths.len();
    if n == 0 || n > 20 {
        return Err(Error::InvalidInput("bad number of strengths".into()));
    }
    let size = 1usize << n;
    if records.len() != size {
        return Err(Error::InvalidInput(format!(
            "expected {size} records for {n} sources, got {}",
            records.len()
        )));
    }
    let mut seen = alloc::vec![false; size];
    let mut acc = 0.0;
    for r in records {
        let m = r.schedule_id as usize;
        if m >= size || seen[m] {
            return Err(Error::InvalidInput(format!(
                "unexpected or repeated schedule id {m}"
            )));
        }
        seen[m] = true;
        let sign = if (n - m.count_ones() as usize) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        acc += sign * r.value;
    }
    Ok(acc / strengths.iter().product::<f64>())
}

/// Which parts of a propagator an estimate determines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Parts {
    Both,
    RealOnly,
    ImagOnly,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PropagatorEstimate {
    pub value: C64,
    pub parts: Parts,
    /// Leading power of 𝖩 in the residual bias (2 raw, 4 after one
    /// Richardson step).
    pub bias_order: f64,
    pub strengths: Vec<f64>,
    /// Parity values that entered the estimate.
    pub diagnostics: Vec<f64>,
}

impl PropagatorEstimate {
    /// Joins a real-part and an imaginary-part estimate.
    pub fn join(real: &Self, imag: &Self) -> Result<Self> {
        if real.parts != Parts::RealOnly || imag.parts != Parts::ImagOnly {
            return Err(Error::InvalidInput(
                "join needs a real and an imaginary estimate".into(),
            ));
        }
        let mut diagnostics = real.diagnostics.clone();
        diagnostics.extend_from_slice(&imag.diagnostics);
        Ok(Self {
            value: C64::new(real.value.re, imag.value.im),
            parts: Parts::Both,
            bias_order: real.bias_order.min(imag.bias_order),
            strengths: real.strengths.clone(),
            diagnostics,
        })
    }
}

/// Stencil outputs to be turned into a propagator value.
#[derive(Debug, Clone, PartialEq)]
pub enum DerivativeData {
    /// `(θ, D(θ))` pairs from [`combine_general`] for an `n`-point stencil,
    /// `D(θ) = Re(e^{iθ} iⁿ G) = Re(w) cos θ − Im(w) sin θ`, `w = iⁿG`.
    Phased { n: usize, samples: Vec<(f64, f64)> },
    /// Staggered Néel stencil value `D ≈ −Re G`.
    DfsReal { value: f64 },
    /// Quadrature Néel stencil value `D ≈ −Im⟨φ₁φ₂⟩`; `first_later` is
    /// `t₁ ≥ t₂`.
    DfsImag { value: f64, first_later: bool },
}

/// Solves the stencil outputs for the propagator.
pub fn extract_propagator(data: &DerivativeData) -> Result<(C64, Parts)> {
    match data {
        DerivativeData::Phased { n, samples } => {
            if samples.len() != 2 {
                return Err(Error::InvalidInput(
                    "phased extraction needs two phases".into(),
                ));
            }
            let (t1, v1) = samples[0];
            let (t2, v2) = samples[1];
            let det = libm::sin(t1 - t2);
            if det.abs() < 1e-6 {
                return Err(Error::IllConditioned(format!(
                    "readout phases {t1} and {t2} coincide modulo π"
                )));
            }
            // [cos θ₁, −sin θ₁; cos θ₂, −sin θ₂] (Re w, Im w)ᵀ = (v₁, v₂)ᵀ
            let (c1, s1, c2, s2) = (libm::cos(t1), libm::sin(t1), libm::cos(t2), libm::sin(t2));
            let re = (-s2 * v1 + s1 * v2) / det;
            let im = (-c2 * v1 + c1 * v2) / det;
            let w = C64::new(re, im);
            Ok((w / C64::new(0.0, 1.0).powu(*n as u32), Parts::Both))
        }
        DerivativeData::DfsReal { value } => Ok((C64::new(-value, 0.0), Parts::RealOnly)),
        DerivativeData::DfsImag { value, first_later } => {
            let im = if *first_later { -value } else { *value };
            Ok((C64::new(0.0, im), Parts::ImagOnly))
        }
    }
}

/// `(4 E(𝖩/2) − E(𝖩))/3`; cancels the even `O(𝖩²)` bias.
pub fn richardson_extrapolate(
    coarse: &PropagatorEstimate,
    fine: &PropagatorEstimate,
) -> Result<PropagatorEstimate> {
    if coarse.parts != fine.parts {
        return Err(Error::InvalidInput(
            "estimates cover different parts".into(),
        ));
    }
    let mut diagnostics = coarse.diagnostics.clone();
    diagnostics.extend_from_slice(&fine.diagnostics);
    Ok(PropagatorEstimate {
        value: (fine.value * 4.0 - coarse.value) / 3.0,
        parts: fine.parts,
        bias_order: coarse.bias_order + 2.0,
        strengths: fine.strengths.clone(),
        diagnostics,
    })
}

/// Observed convergence order from estimates at `𝖩, 𝖩/2, 𝖩/4`.
pub fn observed_order(e1: C64, e2: C64, e4: C64) -> f64 {
    libm::log2((e1 - e2).norm() / (e2 - e4).norm())
}
