//! Binary trace layout for aggregation packets.
//!
//! Each record is:
//!
//! ```text
//! magic    4 bytes  "INA\x01"
//! weight   8 bytes  f64, little-endian
//! length   8 bytes  u64, little-endian (d)
//! payload  4*d      f32, little-endian
//! ```
//!
//! Payloads are narrowed to `f32`; the trace is for inspection, not replay.

use std::io::Write;

use crate::error::{Error, Result};

use super::{EdgeMessage, LocalMessage};

pub const MAGIC: [u8; 4] = *b"INA\x01";
const HEADER_LEN: usize = 4 + 8 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TracePacket {
    pub weight: f64,
    pub payload: Vec<f32>,
}

impl From<&LocalMessage> for TracePacket {
    fn from(m: &LocalMessage) -> Self {
        TracePacket {
            weight: m.weight,
            payload: m.payload.iter().map(|&x| x as f32).collect(),
        }
    }
}

impl From<&EdgeMessage> for TracePacket {
    fn from(m: &EdgeMessage) -> Self {
        TracePacket {
            weight: m.weight,
            payload: m.mean.iter().map(|x| x.to_f64() as f32).collect(),
        }
    }
}

pub fn encode(packet: &TracePacket, out: &mut Vec<u8>) {
    out.reserve(HEADER_LEN + 4 * packet.payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&packet.weight.to_le_bytes());
    out.extend_from_slice(&(packet.payload.len() as u64).to_le_bytes());
    for x in &packet.payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn write_packet<W: Write>(writer: &mut W, packet: &TracePacket) -> std::io::Result<()> {
    let mut buf = Vec::new();
    encode(packet, &mut buf);
    writer.write_all(&buf)
}

/// Decodes one record from the front of `bytes`, returning it and the bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(TracePacket, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Wire(format!(
            "truncated header: {} bytes",
            bytes.len()
        )));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Wire(format!("bad magic {:02x?}", &bytes[..4])));
    }
    let weight = f64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| Error::Wire(format!("length {len} too large")))?;
    let end = len
        .checked_mul(4)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Wire(format!("length {len} too large")))?;
    if bytes.len() < end {
        return Err(Error::Wire(format!(
            "truncated payload: need {end} bytes, have {}",
            bytes.len()
        )));
    }
    let payload = bytes[HEADER_LEN..end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((TracePacket { weight, payload }, end))
}

/// Decodes a concatenation of records.
pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<TracePacket>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (p, used) = decode(bytes)?;
        out.push(p);
        bytes = &bytes[used..];
    }
    Ok(out)
}
