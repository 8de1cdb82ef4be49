//! `EIKW` weight files.
//!
//! Layout (little-endian): magic `EIKW`, version u32, network count u32; per
//! network a layer count u32 and `(inputs, outputs)` u32 pairs; then every
//! network's parameters as f32 in layer order.

use std::path::Path;

use super::mlp::Dense;
use super::FieldParams;
use crate::error::{Error, Result};
use crate::refindex::LeReader;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"EIKW";
pub const WEIGHTS_VERSION: u32 = 1;

fn network_layers(params: &FieldParams) -> [Vec<Dense>; 3] {
    [params.coarse.layers(), params.fine.layers(), params.boundary.layers()]
}

pub fn encode_weights(params: &FieldParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    let nets = network_layers(params);
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for layers in &nets {
        out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
        for l in layers {
            out.extend_from_slice(&(l.inputs as u32).to_le_bytes());
            out.extend_from_slice(&(l.outputs as u32).to_le_bytes());
        }
    }
    for p in [&params.coarse.params, &params.fine.params, &params.boundary.params] {
        for &v in p.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Fills `params` (already shaped from its config) from an encoded file.
/// Layer shapes must match exactly.
pub fn decode_weights_into(bytes: &[u8], params: &mut FieldParams) -> Result<()> {
    let mut r = LeReader::new(bytes, "weights file");
    if r.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::format("weights file", "bad magic"));
    }
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::VersionMismatch {
            what: "weights file",
            found: version,
            expected: WEIGHTS_VERSION,
        });
    }
    let expected = network_layers(params);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::format("weights file", format!("{count} networks, expected 3")));
    }
    for (net, layers) in expected.iter().enumerate() {
        let n = r.u32()? as usize;
        if n != layers.len() {
            return Err(Error::format("weights file", format!("network {net}: {n} layers, expected {}", layers.len())));
        }
        for l in layers {
            let (i, o) = (r.u32()? as usize, r.u32()? as usize);
            if (i, o) != (l.inputs, l.outputs) {
                return Err(Error::format(
                    "weights file",
                    format!("network {net}: layer {i}x{o}, expected {}x{}", l.inputs, l.outputs),
                ));
            }
        }
    }
    for p in params.tensors_mut() {
        for v in p.iter_mut() {
            *v = r.f32()? as f64;
        }
    }
    if !r.is_done() {
        return Err(Error::format("weights file", "trailing bytes"));
    }
    Ok(())
}

pub fn save_weights(params: &FieldParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_weights(params)).map_err(|e| Error::io(path, e))
}

pub fn load_weights_into(path: &Path, params: &mut FieldParams) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights_into(&bytes, params)
}
