use alloc::vec;
use alloc::vec::Vec;

use super::{Block, PreparationKind, SensorLayout, SensorPreparation};
use crate::error::{Error, Result};
use crate::linalg::{herm_eigen, C64};
use crate::state::{Dims, Mixture, PureState, QuantumState};

/// Nonzero `(label, amplitude)` pairs of the prepared sensor register.
pub fn sensor_amplitudes(
    prep: &SensorPreparation,
    layout: &SensorLayout,
) -> Result<Vec<(usize, C64)>> {
    let n = layout.n();
    prep.validate(n)?;
    let h = core::f64::consts::FRAC_1_SQRT_2;
    let all = (1usize << n) - 1;
    Ok(match prep.kind {
        PreparationKind::Ghz => vec![(0, C64::new(h, 0.0)), (all, C64::new(h, 0.0))],
        PreparationKind::ProductDown => vec![(0, C64::new(1.0, 0.0))],
        kind => {
            let blocks = prep.blocks(n)?;
            let mask = |b: Block| {
                (0..n)
                    .filter(|&j| blocks[j] == b)
                    .fold(0usize, |m, j| m | layout.bit(j))
            };
            let odd_amp = match kind {
                PreparationKind::NeelDfsPlus => C64::new(h, 0.0),
                PreparationKind::NeelDfsMinus => C64::new(-h, 0.0),
                _ => C64::new(0.0, h),
            };
            vec![
                (mask(Block::Even), C64::new(h, 0.0)),
                (mask(Block::Odd), odd_amp),
            ]
        }
    })
}

fn tensor(sensor: &[(usize, C64)], field: &[C64], dims: Dims) -> Vec<C64> {
    let mut amps = vec![C64::new(0.0, 0.0); dims.total()];
    for &(s, a) in sensor {
        let off = s * dims.field;
        for (f, z) in field.iter().enumerate() {
            amps[off + f] = a * z;
        }
    }
    amps
}

/// `field ⊗ sensors` with the requested sensor preparation.
///
/// With `eps_prep > 0` the sensor register is `(1−ε)|χ⟩⟨χ| + ε 𝟙/2ⁿ`; the
/// result is then a mixture whose maximally mixed part is spelled out over
/// sensor basis states.
pub fn prepare_joint_state(
    field_state: &QuantumState,
    layout: &SensorLayout,
    prep: &SensorPreparation,
) -> Result<QuantumState> {
    let fdims = field_state.dims();
    if fdims.sensors != 0 {
        return Err(Error::InvalidInput(
            "field state already carries sensors".into(),
        ));
    }
    field_state.validate()?;
    let sensor = sensor_amplitudes(prep, layout)?;
    let dims = Dims {
        field: fdims.field,
        sensors: layout.n(),
    };

    let field_members: Vec<(f64, Vec<C64>)> = match field_state {
        QuantumState::Pure(p) => {
            if prep.eps_prep == 0.0 {
                return Ok(QuantumState::Pure(PureState::new(
                    dims,
                    tensor(&sensor, &p.amps, dims),
                )?));
            }
            vec![(1.0, p.amps.clone())]
        }
        QuantumState::Mixed(m) => m.members.clone(),
        QuantumState::Density(d) => {
            let (vals, vecs) = herm_eigen(&d.matrix)?;
            (0..vals.len())
                .filter(|&k| vals[k] > 1e-15)
                .map(|k| (vals[k], vecs.column(k).iter().copied().collect()))
                .collect()
        }
    };

    let eps = prep.eps_prep;
    let sdim = dims.sensor_dim();
    let mut members = Vec::new();
    for (w, v) in &field_members {
        members.push(((1.0 - eps) * w, tensor(&sensor, v, dims)));
        if eps > 0.0 {
            for s in 0..sdim {
                members.push((
                    eps * w / sdim as f64,
                    tensor(&[(s, C64::new(1.0, 0.0))], v, dims),
                ));
            }
        }
    }
    members.retain(|(w, _)| *w > 0.0);
    Ok(QuantumState::Mixed(Mixture {
        dims,
        members,
        coherence: None,
    }))
}
