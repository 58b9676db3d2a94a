use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::{EquilibriumPositions, Geometry, IonCrystalConfig, Metric};
use crate::error::{Error, Result};

const GRADIENT_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;

/// Dimensionless axial potential `½Σũ_i² + Σ_{i<j} 1/|ũ_i − ũ_j|`.
pub fn axial_energy(u: &[f64]) -> f64 {
    let mut e = 0.5 * u.iter().map(|x| x * x).sum::<f64>();
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            e += 1.0 / libm::fabs(u[i] - u[j]);
        }
    }
    e
}

pub fn axial_gradient(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut g = u.to_vec();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = u[i] - u[j];
                g[i] -= d.signum() / (d * d);
            }
        }
    }
    g
}

pub fn axial_hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let d = libm::fabs(u[i] - u[j]);
                let w = 2.0 / (d * d * d);
                h[(i, i)] += w;
                h[(i, j)] -= w;
            }
        }
    }
    h
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Quantiles of a parabolic density on `[−L, L]`, the continuum profile of a
/// harmonically confined Coulomb chain.
fn initial_guess(n: usize) -> Vec<f64> {
    let nf = n as f64;
    let half = libm::cbrt(3.0 * nf * libm::log(nf)).max(0.75);
    let cdf = |s: f64| 0.5 + 0.25 * (3.0 * s - s * s * s);
    (0..n)
        .map(|i| {
            let target = (i as f64 + 0.5) / nf;
            let (mut lo, mut hi) = (-1.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            half * 0.5 * (lo + hi)
        })
        .collect()
}

fn ordered(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[1] > w[0])
}

/// Equilibrium of the crystal. Linear chains are solved by damped Newton
/// iteration on the axial potential; periodic geometries are uniform.
pub fn solve_equilibrium(config: &IonCrystalConfig) -> Result<EquilibriumPositions> {
    config.validate()?;
    let n = config.n_ions;
    match config.geometry {
        Geometry::Ring { .. } => return Ok(EquilibriumPositions::uniform(n, Metric::Ring)),
        Geometry::Subwavelength { .. } => {
            return Ok(EquilibriumPositions::uniform(n, Metric::MinImage))
        }
        Geometry::LinearChain => {}
    }

    let mut u = initial_guess(n);
    let mut g = axial_gradient(&u);
    let mut history = vec![norm(&g)];
    let mut energy = axial_energy(&u);
    for _ in 0..MAX_NEWTON {
        if *history.last().unwrap() < 0.01 * GRADIENT_TOL {
            break;
        }
        let h = axial_hessian(&u);
        let rhs = DVector::from_iterator(n, g.iter().map(|x| -x));
        let step = match h.cholesky() {
            Some(c) => c.solve(&rhs),
            None => rhs,
        };
        let slope: f64 = step.iter().zip(&g).map(|(s, gi)| s * gi).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x + t * s).collect();
            if ordered(&trial) {
                let e = axial_energy(&trial);
                if e <= energy + 1e-4 * t * slope
                    || norm(&axial_gradient(&trial)) < history[history.len() - 1]
                {
                    u = trial;
                    energy = e;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        g = axial_gradient(&u);
        history.push(norm(&g));
        if !accepted {
            break;
        }
    }
    let residual = *history.last().unwrap();
    if !(residual < GRADIENT_TOL) {
        return Err(Error::Solver { history });
    }
    Ok(EquilibriumPositions {
        positions: u,
        residual,
        metric: Metric::Open,
    })
}
