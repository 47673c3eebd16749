//! Scene model parameters and their sidecar file format.
//!
//! Sidecar layout, all integers little-endian:
//!
//! ```text
//! "PICM" | u8 version | u32 width | u32 height | u32 id_len | id bytes
//! | u64 train_step | f32 arrays | u64 digest
//! ```
//!
//! The arrays follow in declared order: background Y, U, V, mix logits,
//! luma log-scales, chroma log-scales. The digest is FNV-1a 64 over the
//! width, height and the array bytes, so scene id and step count do not
//! affect it.

use std::io::{Read, Write};

use super::planes::{BlockGrid, Planes};
use super::CodecError;
use crate::video_io::Frame;

pub const PARAMS_MAGIC: &[u8; 4] = b"PICM";
pub const PARAMS_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    width: usize,
    height: usize,
    grid: BlockGrid,
    background: [Vec<f32>; 3],
    mix_logits: Vec<f32>,
    /// Luma grid, then the grid shared by both chroma planes.
    log_scales: [Vec<f32>; 2],
    scene_id: String,
    train_step: u64,
    digest: u64,
}

impl ModelParams {
    pub fn new(
        width: usize,
        height: usize,
        background: [Vec<f32>; 3],
        mix_logits: Vec<f32>,
        log_scales: [Vec<f32>; 2],
        scene_id: impl Into<String>,
        train_step: u64,
    ) -> Result<Self, CodecError> {
        // reuse Frame's geometry rules
        Frame::filled(width, height, 0, 0, 0).map_err(|e| CodecError::BadParams(e.to_string()))?;
        let grid = BlockGrid::for_frame(width, height);
        let luma = width * height;
        let expect = [
            ("background Y", background[0].len(), luma),
            ("background U", background[1].len(), luma / 4),
            ("background V", background[2].len(), luma / 4),
            ("mix logits", mix_logits.len(), grid.len()),
            ("luma log-scales", log_scales[0].len(), grid.len()),
            ("chroma log-scales", log_scales[1].len(), grid.len()),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(CodecError::BadParams(format!(
                    "{name}: {got} values, expected {want}"
                )));
            }
        }
        let all_finite = background
            .iter()
            .chain(&log_scales)
            .chain([&mix_logits])
            .all(|v| v.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(CodecError::BadParams("non-finite parameter".into()));
        }
        let mut params = ModelParams {
            width,
            height,
            grid,
            background,
            mix_logits,
            log_scales,
            scene_id: scene_id.into(),
            train_step,
            digest: 0,
        };
        params.digest = params.compute_digest();
        Ok(params)
    }

    /// Cold-start parameters: the given background, neutral mixing and a
    /// uniform residual scale.
    pub fn with_background(
        background: &Planes,
        log_scale: f32,
        scene_id: &str,
    ) -> Result<Self, CodecError> {
        let grid = BlockGrid::for_frame(background.width, background.height);
        ModelParams::new(
            background.width,
            background.height,
            background
                .data
                .clone()
                .map(|p| p.into_iter().map(|v| v as f32).collect()),
            vec![0.0; grid.len()],
            [vec![log_scale; grid.len()], vec![log_scale; grid.len()]],
            scene_id,
            0,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn grid(&self) -> BlockGrid {
        self.grid
    }

    pub fn background(&self) -> &[Vec<f32>; 3] {
        &self.background
    }

    pub fn background_planes(&self) -> Planes {
        Planes {
            width: self.width,
            height: self.height,
            data: self
                .background
                .clone()
                .map(|p| p.into_iter().map(f64::from).collect()),
        }
    }

    pub fn mix_logits(&self) -> &[f32] {
        &self.mix_logits
    }

    pub fn log_scales(&self) -> &[Vec<f32>; 2] {
        &self.log_scales
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn train_step(&self) -> u64 {
        self.train_step
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    pub fn verify_digest(&self) -> bool {
        self.compute_digest() == self.digest
    }

    pub fn into_parts(self) -> ([Vec<f32>; 3], Vec<f32>, [Vec<f32>; 2]) {
        (self.background, self.mix_logits, self.log_scales)
    }

    /// Same parameters with every background sample set to zero; the
    /// control case for measuring what the prior saves.
    pub fn zeroed_background(&self) -> ModelParams {
        let mut p = self.clone();
        for plane in &mut p.background {
            plane.iter_mut().for_each(|v| *v = 0.0);
        }
        p.digest = p.compute_digest();
        p
    }

    fn arrays(&self) -> impl Iterator<Item = &Vec<f32>> {
        self.background
            .iter()
            .chain(std::iter::once(&self.mix_logits))
            .chain(self.log_scales.iter())
    }

    fn compute_digest(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.update(&(self.width as u32).to_le_bytes());
        h.update(&(self.height as u32).to_le_bytes());
        for arr in self.arrays() {
            for v in arr {
                h.update(&v.to_le_bytes());
            }
        }
        h.finish()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), CodecError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(PARAMS_MAGIC);
        buf.push(PARAMS_VERSION);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&(self.scene_id.len() as u32).to_le_bytes());
        buf.extend_from_slice(self.scene_id.as_bytes());
        buf.extend_from_slice(&self.train_step.to_le_bytes());
        for arr in self.arrays() {
            for v in arr {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf.extend_from_slice(&self.digest.to_le_bytes());
        out.write_all(&buf)?;
        out.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, CodecError> {
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        Self::from_bytes(&data)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, CodecError> {
        let mut r = ByteReader::new(data);
        if r.take(4)? != PARAMS_MAGIC {
            return Err(CodecError::BadMagic);
        }
        let version = r.u8()?;
        if version != PARAMS_VERSION {
            return Err(CodecError::UnsupportedVersion(version));
        }
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let id_len = r.u32()? as usize;
        let scene_id = String::from_utf8(r.take(id_len)?.to_vec())
            .map_err(|_| CodecError::BadParams("scene id is not UTF-8".into()))?;
        let train_step = r.u64()?;
        if width.checked_mul(height).is_none_or(|n| n > data.len()) {
            return Err(CodecError::Truncated);
        }
        let grid = BlockGrid::for_frame(width, height);
        let luma = width * height;
        let mut f32s = |n: usize| -> Result<Vec<f32>, CodecError> {
            let bytes = r.take(n * 4)?;
            Ok(bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let background = [f32s(luma)?, f32s(luma / 4)?, f32s(luma / 4)?];
        let mix_logits = f32s(grid.len())?;
        let log_scales = [f32s(grid.len())?, f32s(grid.len())?];
        let stored = r.u64()?;
        if !r.is_empty() {
            return Err(CodecError::BadParams("trailing bytes after digest".into()));
        }
        let params = ModelParams::new(
            width, height, background, mix_logits, log_scales, scene_id, train_step,
        )?;
        if params.digest != stored {
            return Err(CodecError::DigestMismatch {
                expected: stored,
                found: params.digest,
            });
        }
        Ok(params)
    }
}

pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    pub(crate) fn new() -> Self {
        Fnv1a(Self::OFFSET)
    }

    pub(crate) fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(Self::PRIME);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

pub(crate) struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        ByteReader { data, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or(CodecError::Truncated)?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.data.len()
    }
}
