//! Deterministic stand-in checkpoint with the full R3D-18 layout.
//!
//! Every value is a closed-form function of its record index and element
//! index (a splitmix64 hash mapped to a uniform double, then rounded once to
//! `f32`), so the same bytes can be produced by any language without sharing
//! an RNG implementation. The parity fixture under `tests/fixtures` was
//! generated by the reference framework from exactly these values.

use std::io::Write;

use crate::error::Result;
use crate::io::container::{write_container, ContainerKind, NamedArray};

use super::{parameter_layout, NetworkModel};

/// Preprocessing constants of the Kinetics-400 training pipeline.
pub const KINETICS_MEAN: [f32; 3] = [0.43216, 0.394666, 0.37645];
pub const KINETICS_STD: [f32; 3] = [0.22803, 0.22145, 0.216989];

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform `[0, 1)` value for element `index` of record `record`.
pub fn hashed_uniform(record: u64, index: u64) -> f64 {
    let h = splitmix64((record << 40) ^ index);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn value_range(name: &str, dims: &[usize]) -> (f64, f64) {
    if name.ends_with(".running_var") {
        (1.0, 0.3)
    } else if name.ends_with(".running_mean") {
        (0.0, 0.1)
    } else if name.contains(".bn") && name.ends_with(".weight") {
        (1.0, 0.2)
    } else if name.ends_with(".bias") {
        (0.0, 0.1)
    } else {
        let fan_in: usize = dims[1..].iter().product();
        (0.0, (6.0 / fan_in as f64).sqrt() * 0.5)
    }
}

/// All checkpoint records in canonical order.
pub fn checkpoint_records() -> Vec<NamedArray> {
    parameter_layout()
        .into_iter()
        .enumerate()
        .map(|(r, spec)| {
            let data = match spec.name.as_str() {
                "preproc.mean" => KINETICS_MEAN.to_vec(),
                "preproc.std" => KINETICS_STD.to_vec(),
                name => {
                    let (center, half) = value_range(name, &spec.dims);
                    let n: usize = spec.dims.iter().product();
                    (0..n as u64)
                        .map(|i| (center + half * (2.0 * hashed_uniform(r as u64, i) - 1.0)) as f32)
                        .collect()
                }
            };
            NamedArray {
                name: spec.name,
                dims: spec.dims,
                data,
            }
        })
        .collect()
}

pub fn write_checkpoint<W: Write>(writer: W) -> Result<()> {
    write_container(writer, ContainerKind::Weights, &checkpoint_records())
}

/// The synthetic checkpoint as a ready-to-use model.
pub fn model() -> NetworkModel {
    NetworkModel::from_records(checkpoint_records(), "synthetic r3d18").expect("synthetic checkpoint is valid")
}
