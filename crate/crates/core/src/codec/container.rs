//! `.pic` container:
//!
//! ```text
//! "PIC1" (0x50494331) | u8 version | u32 width | u32 height
//! | u32 frame_count | u8 base_qp | u64 model_digest
//! | frame_count × (u32 payload_len | payload)
//! ```
//!
//! Integer fields after the magic are little-endian. Payloads are range
//! coder streams.

use std::io::{Read, Write};

use super::params::ByteReader;
use super::CodecError;

pub const STREAM_MAGIC: &[u8; 4] = b"PIC1";
pub const STREAM_VERSION: u8 = 1;
pub const HEADER_BYTES: usize = 4 + 1 + 4 + 4 + 4 + 1 + 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamHeader {
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    pub base_qp: u8,
    pub model_digest: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: StreamHeader,
    pub payloads: Vec<Vec<u8>>,
}

impl Bitstream {
    pub fn payload_bytes(&self) -> usize {
        self.payloads.iter().map(Vec::len).sum()
    }

    pub fn container_bytes(&self) -> usize {
        HEADER_BYTES + self.payloads.iter().map(|p| 4 + p.len()).sum::<usize>()
    }

    /// Bits per luma sample, counting frame payload bytes only.
    pub fn bpp(&self) -> f64 {
        let samples =
            self.header.width as f64 * self.header.height as f64 * self.header.frame_count as f64;
        8.0 * self.payload_bytes() as f64 / samples
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(self.container_bytes());
        out.extend_from_slice(STREAM_MAGIC);
        out.push(STREAM_VERSION);
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&h.height.to_le_bytes());
        out.extend_from_slice(&h.frame_count.to_le_bytes());
        out.push(h.base_qp);
        out.extend_from_slice(&h.model_digest.to_le_bytes());
        for p in &self.payloads {
            out.extend_from_slice(&(p.len() as u32).to_le_bytes());
            out.extend_from_slice(p);
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), CodecError> {
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, CodecError> {
        let mut r = ByteReader::new(data);
        if r.take(4)? != STREAM_MAGIC {
            return Err(CodecError::BadMagic);
        }
        let version = r.u8()?;
        if version != STREAM_VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let header = StreamHeader {
            width: r.u32()?,
            height: r.u32()?,
            frame_count: r.u32()?,
            base_qp: r.u8()?,
            model_digest: r.u64()?,
        };
        if header.base_qp > 63 {
            return Err(CodecError::QpOutOfRange(header.base_qp as i64));
        }
        let mut payloads = Vec::new();
        for _ in 0..header.frame_count {
            let len = r.u32()? as usize;
            payloads.push(r.take(len)?.to_vec());
        }
        if !r.is_empty() {
            return Err(CodecError::TrailingData);
        }
        Ok(Bitstream { header, payloads })
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, CodecError> {
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        Self::from_bytes(&data)
    }
}
