//! Binary checkpoint files for networks and optimizer states.
//!
//! Network file layout (all multi-byte values little-endian):
//!
//! ```text
//! magic   8 bytes  b"RORLNN01"
//! n       u32      number of layer sizes (layers + 1)
//! sizes   n x u32  layer sizes, input first
//! params  f64...   per layer: weight matrix row-major (fan_in x fan_out),
//!                  then bias vector (fan_out)
//! ```
//!
//! Optimizer file layout:
//!
//! ```text
//! magic   8 bytes  b"RORLAD01"
//! lr, beta1, beta2, epsilon   4 x f64
//! step_count                  u64
//! n, sizes                    as above
//! first_moment, second_moment f64... (each in the network parameter layout)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::adam::AdamState;
use super::mlp::{Mlp, MlpGrads};
use super::NnError;

const MLP_MAGIC: &[u8; 8] = b"RORLNN01";
const ADAM_MAGIC: &[u8; 8] = b"RORLAD01";

fn write_sizes<W: Write>(w: &mut W, sizes: &[usize]) -> Result<(), NnError> {
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    Ok(())
}

fn read_sizes<R: Read>(r: &mut R) -> Result<Vec<usize>, NnError> {
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let n = u32::from_le_bytes(buf4) as usize;
    if !(2..=64).contains(&n) {
        return Err(NnError::BadFormat(format!("implausible layer count {n}")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf4)?;
        sizes.push(u32::from_le_bytes(buf4) as usize);
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(NnError::BadFormat("zero layer size".into()));
    }
    Ok(sizes)
}

fn write_flat<W: Write>(w: &mut W, flat: &[f64]) -> Result<(), NnError> {
    for v in flat {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_flat<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>, NnError> {
    let mut buf = vec![0u8; len * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn n_params_of(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn grads_from_flat(sizes: &[usize], flat: &[f64]) -> MlpGrads {
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut k = 0;
    for win in sizes.windows(2) {
        let (fi, fo) = (win[0], win[1]);
        let w = Array2::from_shape_vec((fi, fo), flat[k..k + fi * fo].to_vec()).unwrap();
        k += fi * fo;
        let b = Array1::from_vec(flat[k..k + fo].to_vec());
        k += fo;
        weights.push(w);
        biases.push(b);
    }
    MlpGrads { weights, biases }
}

pub fn save_mlp(net: &Mlp, path: &Path) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MLP_MAGIC)?;
    write_sizes(&mut w, net.layer_sizes())?;
    write_flat(&mut w, &net.to_flat())?;
    w.flush()?;
    Ok(())
}

pub fn load_mlp(path: &Path) -> Result<Mlp, NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MLP_MAGIC {
        return Err(NnError::BadFormat("wrong network magic".into()));
    }
    let sizes = read_sizes(&mut r)?;
    let flat = read_flat(&mut r, n_params_of(&sizes))?;
    let bundle = grads_from_flat(&sizes, &flat);
    Ok(Mlp::from_parts(sizes, bundle.weights, bundle.biases))
}

pub fn save_adam(state: &AdamState, sizes: &[usize], path: &Path) -> Result<(), NnError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ADAM_MAGIC)?;
    for v in [state.learning_rate, state.beta1, state.beta2, state.epsilon] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&state.step_count.to_le_bytes())?;
    write_sizes(&mut w, sizes)?;
    write_flat(&mut w, &state.first_moment.to_flat())?;
    write_flat(&mut w, &state.second_moment.to_flat())?;
    w.flush()?;
    Ok(())
}

pub fn load_adam(path: &Path) -> Result<(AdamState, Vec<usize>), NnError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != ADAM_MAGIC {
        return Err(NnError::BadFormat("wrong optimizer magic".into()));
    }
    let mut scalars = [0.0f64; 4];
    let mut buf8 = [0u8; 8];
    for s in scalars.iter_mut() {
        r.read_exact(&mut buf8)?;
        *s = f64::from_le_bytes(buf8);
    }
    r.read_exact(&mut buf8)?;
    let step_count = u64::from_le_bytes(buf8);
    let sizes = read_sizes(&mut r)?;
    let n = n_params_of(&sizes);
    let first = grads_from_flat(&sizes, &read_flat(&mut r, n)?);
    let second = grads_from_flat(&sizes, &read_flat(&mut r, n)?);
    Ok((
        AdamState {
            learning_rate: scalars[0],
            beta1: scalars[1],
            beta2: scalars[2],
            epsilon: scalars[3],
            step_count,
            first_moment: first,
            second_moment: second,
        },
        sizes,
    ))
}
