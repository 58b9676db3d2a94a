use alloc::format;
use alloc::vec::Vec;

use core::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::linalg::C64;

/// Result of a single damped-oscillation fit `A e^{−(iω+γ)t}`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MassFit {
    /// Fitted frequency ω, the physical gap.
    pub mass: f64,
    pub decay: f64,
    pub amplitude: C64,
    /// `‖y − fit‖ / ‖y‖`.
    pub relative_residual: f64,
    /// Periodogram frequency the fit started from.
    pub initial_frequency: f64,
}

struct Data {
    t: Vec<f64>,
    y: Vec<C64>,
}

impl Data {
    /// Best amplitude and residual for fixed `(ω, γ)`.
    fn project(&self, w: f64, g: f64) -> (C64, Vec<C64>) {
        let b: Vec<C64> = self
            .t
            .iter()
            .map(|&t| C64::new(-g * t, -w * t).exp())
            .collect();
        let bb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        let by: C64 = b.iter().zip(&self.y).map(|(bi, yi)| bi.conj() * yi).sum();
        let a = by / bb;
        let r = self.y.iter().zip(&b).map(|(yi, bi)| yi - a * bi).collect();
        (a, r)
    }

    fn cost(&self, w: f64, g: f64) -> f64 {
        self.project(w, g).1.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Dominant oscillation frequency of `Δ(t)` samples.
///
/// Times enter as `|t|` (for `x = 0` the propagator is even in `t`). The
/// frequency is initialized from the peak of the complex periodogram
/// `|Σ_k y_k e^{iωt_k}|²` and refined by variable-projection
/// Levenberg–Marquardt on `(ω, γ)`.
pub fn extract_mass(samples: &[(f64, C64)]) -> Result<MassFit> {
    if samples.len() < 8 {
        return Err(Error::Fit(format!(
            "need at least 8 samples, got {}",
            samples.len()
        )));
    }
    let mut pts: Vec<(f64, C64)> = samples.iter().map(|&(t, y)| (t.abs(), y)).collect();
    if pts
        .iter()
        .any(|(t, y)| !t.is_finite() || !y.re.is_finite() || !y.im.is_finite())
    {
        return Err(Error::Fit("non-finite sample".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t_first = pts[0].0;
    let data = Data {
        t: pts.iter().map(|p| p.0 - t_first).collect(),
        y: pts.iter().map(|p| p.1).collect(),
    };
    let window = *data.t.last().unwrap();
    let mut gaps: Vec<f64> = data
        .t
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&d| d > 0.0)
        .collect();
    if window <= 0.0 || gaps.is_empty() {
        return Err(Error::Fit("samples span no time window".into()));
    }
    gaps.sort_by(f64::total_cmp);
    let dt = gaps[gaps.len() / 2];

    let w_max = PI / dt;
    let step = 2.0 * PI / (window * 32.0);
    let mut best = (0.0, -1.0);
    let mut w = step;
    while w <= w_max {
        let s: C64 = data
            .t
            .iter()
            .zip(&data.y)
            .map(|(&t, &y)| y * C64::new(0.0, w * t).exp())
            .sum();
        if s.norm_sqr() > best.1 {
            best = (w, s.norm_sqr());
        }
        w += step;
    }
    let w0 = best.0;
    if w0 <= 0.0 || window < 2.0 * PI / w0 {
        return Err(Error::Fit(format!(
            "window {window} shorter than one period of the dominant frequency {w0}"
        )));
    }

    let (mut w, mut g) = (w0, 0.0);
    let mut cost = data.cost(w, g);
    let mut mu: f64 = 1e-3;
    for _ in 0..200 {
        let (_, r) = data.project(w, g);
        let h = 1e-7 * (1.0 + w.abs());
        let (_, rw) = data.project(w + h, g);
        let (_, rg) = data.project(w, g + h);
        let mut jtj = Matrix2::<f64>::zeros();
        let mut jtr = Vector2::<f64>::zeros();
        for k in 0..r.len() {
            let rows = [
                (r[k].re, (rw[k].re - r[k].re) / h, (rg[k].re - r[k].re) / h),
                (r[k].im, (rw[k].im - r[k].im) / h, (rg[k].im - r[k].im) / h),
            ];
            for (res, a, b) in rows {
                jtj[(0, 0)] += a * a;
                jtj[(0, 1)] += a * b;
                jtj[(1, 1)] += b * b;
                jtr[0] += a * res;
                jtr[1] += b * res;
            }
        }
        jtj[(1, 0)] = jtj[(0, 1)];
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            m[(0, 0)] *= 1.0 + mu;
            m[(1, 1)] *= 1.0 + mu;
            let Some(delta) = m.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let (nw, ng) = (w + delta[0], g + delta[1]);
            let nc = data.cost(nw, ng);
            if nc < cost {
                let small = delta.norm() < 1e-13 * (1.0 + w.abs());
                w = nw;
                g = ng;
                cost = nc;
                mu = (mu / 3.0).max(1e-12);
                improved = !small;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }

    let (a, r) = data.project(w, g);
    let ynorm: f64 = data.y.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let rnorm: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>();
    Ok(MassFit {
        mass: w,
        decay: g,
        amplitude: a * C64::new(g * t_first, w * t_first).exp(),
        relative_residual: libm::sqrt(rnorm / ynorm),
        initial_frequency: w0,
    })
}
