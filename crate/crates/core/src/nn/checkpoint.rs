//! CSIM model checkpoint format: the CSIT framing conventions applied to a
//! named-tensor table.
//!
//! ```text
//! bytes 0..4   magic "CSIM" (43 53 49 4D)
//! bytes 4..8   u32 version = 1
//! bytes 8..12  u32 tensor count
//! per tensor:  u16-len UTF-8 name, u8 rank, rank x u32 dims, f32 payload
//! ```
//!
//! Little-endian throughout. Tensors are written sorted by name, so
//! `write(read(stream))` reproduces a valid stream byte-for-byte.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::tensor::Tensor;

use super::net::Network;
use super::{NnError, Result};

pub const CSIM_MAGIC: [u8; 4] = *b"CSIM";
pub const CSIM_VERSION: u32 = 1;

fn err(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

/// Write a named-tensor table. Parameters and buffers of a network, or any
/// other tensor map.
pub fn write_checkpoint<W: Write>(tensors: &BTreeMap<String, Tensor>, mut sink: W) -> Result<u64> {
    let mut written = 0u64;
    let mut put = |w: &mut W, bytes: &[u8]| -> Result<()> {
        w.write_all(bytes).map_err(|e| err(format!("write: {e}")))?;
        written += bytes.len() as u64;
        Ok(())
    };
    put(&mut sink, &CSIM_MAGIC)?;
    put(&mut sink, &CSIM_VERSION.to_le_bytes())?;
    put(&mut sink, &(tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(err(format!("tensor name of {} bytes", name_bytes.len())));
        }
        if tensor.rank() > u8::MAX as usize {
            return Err(err(format!("tensor rank {}", tensor.rank())));
        }
        put(&mut sink, &(name_bytes.len() as u16).to_le_bytes())?;
        put(&mut sink, name_bytes)?;
        put(&mut sink, &[tensor.rank() as u8])?;
        for &d in tensor.shape() {
            put(&mut sink, &(d as u32).to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(tensor.size() * 4);
        for &v in tensor.data() {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        put(&mut sink, &payload)?;
    }
    sink.flush().map_err(|e| err(format!("flush: {e}")))?;
    Ok(written)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            err("truncated checkpoint stream")
        } else {
            err(format!("read: {e}"))
        }
    })
}

/// Parse a CSIM stream into a named-tensor table.
pub fn read_checkpoint<R: Read>(mut source: R) -> Result<BTreeMap<String, Tensor>> {
    let mut magic = [0u8; 4];
    read_exact(&mut source, &mut magic)?;
    if magic != CSIM_MAGIC {
        return Err(err("bad magic bytes (not a CSIM stream)"));
    }
    let mut v = [0u8; 4];
    read_exact(&mut source, &mut v)?;
    let version = u32::from_le_bytes(v);
    if version != CSIM_VERSION {
        return Err(err(format!("unsupported checkpoint version {version}")));
    }
    read_exact(&mut source, &mut v)?;
    let count = u32::from_le_bytes(v) as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let mut len2 = [0u8; 2];
        read_exact(&mut source, &mut len2)?;
        let mut name_bytes = vec![0u8; u16::from_le_bytes(len2) as usize];
        read_exact(&mut source, &mut name_bytes)?;
        let name = String::from_utf8(name_bytes).map_err(|_| err("tensor name not UTF-8"))?;
        let mut rank = [0u8; 1];
        read_exact(&mut source, &mut rank)?;
        let mut dims = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            read_exact(&mut source, &mut v)?;
            dims.push(u32::from_le_bytes(v) as usize);
        }
        let size: usize = dims.iter().product();
        let mut payload = vec![0u8; size * 4];
        read_exact(&mut source, &mut payload)?;
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|ch| f32::from_le_bytes([ch[0], ch[1], ch[2], ch[3]]) as f64)
            .collect();
        let tensor =
            Tensor::from_vec(&dims, data).map_err(|e| err(format!("tensor {name}: {e}")))?;
        out.insert(name, tensor);
    }
    Ok(out)
}

/// Save all parameters and buffers of a network.
pub fn save_checkpoint<W: Write>(net: &Network, sink: W) -> Result<u64> {
    let mut table = BTreeMap::new();
    for (name, t) in net.parameters().into_iter().chain(net.buffers()) {
        table.insert(name, t.clone());
    }
    write_checkpoint(&table, sink)
}

/// Assign a named-tensor table onto a structurally matching network.
/// Every parameter and buffer of the network must be present with the
/// right shape.
pub fn load_state(net: &mut Network, table: &BTreeMap<String, Tensor>) -> Result<()> {
    for (name, param) in net.parameters_mut() {
        let src = table
            .get(&name)
            .ok_or_else(|| err(format!("missing tensor {name}")))?;
        if src.shape() != param.shape() {
            return Err(err(format!(
                "tensor {name}: checkpoint shape {:?} vs network {:?}",
                src.shape(),
                param.shape()
            )));
        }
        *param = src.clone();
    }
    for (name, buffer) in net.buffers_mut() {
        let src = table
            .get(&name)
            .ok_or_else(|| err(format!("missing tensor {name}")))?;
        if src.shape() != buffer.shape() {
            return Err(err(format!(
                "tensor {name}: checkpoint shape {:?} vs network {:?}",
                src.shape(),
                buffer.shape()
            )));
        }
        *buffer = src.clone();
    }
    Ok(())
}
