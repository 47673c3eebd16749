//! 8-bit YUV 4:2:0 frames, clips, and Y4M / raw planar I/O.

use std::io::{self, BufRead, Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported chroma format `{0}` (only 4:2:0 is supported)")]
    UnsupportedChroma(String),
    #[error("truncated frame {index}: expected {expected} bytes")]
    TruncatedFrame { index: usize, expected: usize },
    #[error("malformed frame marker at frame {0}")]
    MalformedFrameMarker(usize),
    #[error("clip is empty")]
    EmptyClip,
    #[error("clip has {available} frames, need {needed}")]
    ClipTooShort { available: usize, needed: usize },
    #[error("frame geometry must be even and at least 2x2, got {0}x{1}")]
    BadGeometry(usize, usize),
    #[error("plane size mismatch: {plane} has {got} samples, expected {expected}")]
    PlaneSize {
        plane: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("frame {index} is {got_w}x{got_h}, clip is {w}x{h}")]
    MixedGeometry {
        index: usize,
        got_w: usize,
        got_h: usize,
        w: usize,
        h: usize,
    },
    #[error("crop offsets and sizes must be even")]
    OddGeometry,
    #[error("crop rectangle {x},{y} {w}x{h} outside {fw}x{fh} frame")]
    OutOfBounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        fw: usize,
        fh: usize,
    },
    #[error("invalid frame rate {0}:{1}")]
    BadFrameRate(u32, u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One 8-bit 4:2:0 planar picture.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    y: Vec<u8>,
    u: Vec<u8>,
    v: Vec<u8>,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        y: Vec<u8>,
        u: Vec<u8>,
        v: Vec<u8>,
    ) -> Result<Self, VideoError> {
        check_geometry(width, height)?;
        let luma = width * height;
        let chroma = luma / 4;
        for (plane, got, expected) in [
            ("Y", y.len(), luma),
            ("U", u.len(), chroma),
            ("V", v.len(), chroma),
        ] {
            if got != expected {
                return Err(VideoError::PlaneSize {
                    plane,
                    got,
                    expected,
                });
            }
        }
        Ok(Frame {
            width,
            height,
            y,
            u,
            v,
        })
    }

    /// A frame with every sample of each plane set to the given value.
    pub fn filled(width: usize, height: usize, y: u8, u: u8, v: u8) -> Result<Self, VideoError> {
        check_geometry(width, height)?;
        let luma = width * height;
        Frame::new(
            width,
            height,
            vec![y; luma],
            vec![u; luma / 4],
            vec![v; luma / 4],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn chroma_width(&self) -> usize {
        self.width / 2
    }

    pub fn chroma_height(&self) -> usize {
        self.height / 2
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn u(&self) -> &[u8] {
        &self.u
    }

    pub fn v(&self) -> &[u8] {
        &self.v
    }

    /// Planes in Y, U, V order.
    pub fn planes(&self) -> [&[u8]; 3] {
        [&self.y, &self.u, &self.v]
    }

    pub fn byte_len(&self) -> usize {
        self.y.len() + self.u.len() + self.v.len()
    }

    pub fn same_geometry(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Sub-frame at luma offset (x, y); chroma is cut at half coordinates.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Frame, VideoError> {
        if [x, y, w, h].iter().any(|v| !v.is_multiple_of(2)) {
            return Err(VideoError::OddGeometry);
        }
        if w < 2 || h < 2 || x + w > self.width || y + h > self.height {
            return Err(VideoError::OutOfBounds {
                x,
                y,
                w,
                h,
                fw: self.width,
                fh: self.height,
            });
        }
        let cut = |plane: &[u8], stride: usize, x: usize, y: usize, w: usize, h: usize| {
            let mut out = Vec::with_capacity(w * h);
            for row in y..y + h {
                out.extend_from_slice(&plane[row * stride + x..row * stride + x + w]);
            }
            out
        };
        let cw = self.chroma_width();
        Frame::new(
            w,
            h,
            cut(&self.y, self.width, x, y, w, h),
            cut(&self.u, cw, x / 2, y / 2, w / 2, h / 2),
            cut(&self.v, cw, x / 2, y / 2, w / 2, h / 2),
        )
    }
}

fn check_geometry(width: usize, height: usize) -> Result<(), VideoError> {
    if width < 2 || height < 2 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(VideoError::BadGeometry(width, height));
    }
    Ok(())
}

/// An ordered, dimension-homogeneous run of frames with a rational frame rate.
///
/// Frames are reference counted so windows taken from a clip share storage
/// with it.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    frames: Vec<Arc<Frame>>,
    fps_num: u32,
    fps_den: u32,
}

impl VideoClip {
    pub fn new(frames: Vec<Frame>, fps_num: u32, fps_den: u32) -> Result<Self, VideoError> {
        Self::from_shared(frames.into_iter().map(Arc::new).collect(), fps_num, fps_den)
    }

    pub fn from_shared(
        frames: Vec<Arc<Frame>>,
        fps_num: u32,
        fps_den: u32,
    ) -> Result<Self, VideoError> {
        if fps_num == 0 || fps_den == 0 {
            return Err(VideoError::BadFrameRate(fps_num, fps_den));
        }
        let first = frames.first().ok_or(VideoError::EmptyClip)?;
        let (w, h) = (first.width(), first.height());
        for (index, f) in frames.iter().enumerate() {
            if f.width() != w || f.height() != h {
                return Err(VideoError::MixedGeometry {
                    index,
                    got_w: f.width(),
                    got_h: f.height(),
                    w,
                    h,
                });
            }
        }
        Ok(VideoClip {
            frames,
            fps_num,
            fps_den,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn fps(&self) -> (u32, u32) {
        (self.fps_num, self.fps_den)
    }

    pub fn frames(&self) -> &[Arc<Frame>] {
        &self.frames
    }

    pub fn frame(&self, index: usize) -> &Frame {
        &self.frames[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter().map(|f| f.as_ref())
    }

    /// Contiguous sub-range sharing frame storage with `self`.
    pub fn window(&self, start: usize, len: usize) -> Result<VideoClip, VideoError> {
        if len == 0 {
            return Err(VideoError::EmptyClip);
        }
        if start + len > self.len() {
            return Err(VideoError::ClipTooShort {
                available: self.len().saturating_sub(start),
                needed: len,
            });
        }
        Ok(VideoClip {
            frames: self.frames[start..start + len].to_vec(),
            fps_num: self.fps_num,
            fps_den: self.fps_den,
        })
    }

    /// A `length`-frame window whose start is drawn uniformly from
    /// `[0, len - length]` by a generator seeded with `seed`.
    pub fn sample_clip(&self, length: usize, seed: u64) -> Result<VideoClip, VideoError> {
        let start = self.sample_start(length, &mut ChaCha8Rng::seed_from_u64(seed))?;
        self.window(start, length)
    }

    pub(crate) fn sample_start<R: Rng>(
        &self,
        length: usize,
        rng: &mut R,
    ) -> Result<usize, VideoError> {
        if length == 0 {
            return Err(VideoError::EmptyClip);
        }
        if length > self.len() {
            return Err(VideoError::ClipTooShort {
                available: self.len(),
                needed: length,
            });
        }
        Ok(rng.random_range(0..=self.len() - length))
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<VideoClip, VideoError> {
        let frames = self
            .iter()
            .map(|f| f.crop(x, y, w, h))
            .collect::<Result<Vec<_>, _>>()?;
        VideoClip::new(frames, self.fps_num, self.fps_den)
    }
}

/// Stream header fields relevant to decoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Y4mHeader {
    pub width: usize,
    pub height: usize,
    pub fps_num: u32,
    pub fps_den: u32,
}

const Y4M_MAGIC: &str = "YUV4MPEG2";

/// Frame-by-frame Y4M reader.
pub struct Y4mReader<R> {
    inner: R,
    header: Y4mHeader,
    index: usize,
    done: bool,
}

impl<R: BufRead> Y4mReader<R> {
    pub fn new(mut inner: R) -> Result<Self, VideoError> {
        let mut line = Vec::new();
        inner.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(VideoError::MalformedHeader("missing header newline".into()));
        }
        line.pop();
        let text = std::str::from_utf8(&line)
            .map_err(|_| VideoError::MalformedHeader("header is not ASCII".into()))?;
        let header = parse_header(text)?;
        Ok(Y4mReader {
            inner,
            header,
            index: 0,
            done: false,
        })
    }

    pub fn header(&self) -> Y4mHeader {
        self.header
    }

    pub fn read_frame(&mut self) -> Result<Option<Frame>, VideoError> {
        if self.done {
            return Ok(None);
        }
        let mut marker = Vec::new();
        let n = self.inner.read_until(b'\n', &mut marker)?;
        if n == 0 {
            self.done = true;
            return Ok(None);
        }
        if !marker.starts_with(b"FRAME") || marker.last() != Some(&b'\n') {
            return Err(VideoError::MalformedFrameMarker(self.index));
        }
        let (w, h) = (self.header.width, self.header.height);
        let frame = read_planes(&mut self.inner, w, h, self.index)?;
        self.index += 1;
        Ok(Some(frame))
    }
}

impl<R: BufRead> Iterator for Y4mReader<R> {
    type Item = Result<Frame, VideoError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.read_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn parse_header(text: &str) -> Result<Y4mHeader, VideoError> {
    let mut tokens = text.split(' ');
    if tokens.next() != Some(Y4M_MAGIC) {
        return Err(VideoError::MalformedHeader(
            "missing YUV4MPEG2 magic".into(),
        ));
    }
    let (mut width, mut height) = (None, None);
    let (mut fps_num, mut fps_den) = (25, 1);
    for tok in tokens.filter(|t| !t.is_empty()) {
        let (tag, value) = tok.split_at(1);
        match tag {
            "W" => width = value.parse::<usize>().ok(),
            "H" => height = value.parse::<usize>().ok(),
            "F" => {
                let (n, d) = value
                    .split_once(':')
                    .and_then(|(n, d)| Some((n.parse().ok()?, d.parse().ok()?)))
                    .ok_or_else(|| {
                        VideoError::MalformedHeader(format!("bad frame rate `{tok}`"))
                    })?;
                fps_num = n;
                fps_den = d;
            }
            "C" if !value.starts_with("420")
                || value.starts_with("420p") && value != "420paldv" =>
            {
                return Err(VideoError::UnsupportedChroma(value.to_string()));
            }
            // interlace, aspect, extension and supported chroma tags are ignored
            _ => {}
        }
    }
    let width = width.ok_or_else(|| VideoError::MalformedHeader("missing W tag".into()))?;
    let height = height.ok_or_else(|| VideoError::MalformedHeader("missing H tag".into()))?;
    check_geometry(width, height).map_err(|e| VideoError::MalformedHeader(e.to_string()))?;
    if fps_num == 0 || fps_den == 0 {
        return Err(VideoError::BadFrameRate(fps_num, fps_den));
    }
    Ok(Y4mHeader {
        width,
        height,
        fps_num,
        fps_den,
    })
}

fn read_planes<R: Read>(
    inner: &mut R,
    width: usize,
    height: usize,
    index: usize,
) -> Result<Frame, VideoError> {
    let luma = width * height;
    let mut buf = vec![0u8; luma + luma / 2];
    read_full(inner, &mut buf).map_err(|e| match e {
        VideoError::Io(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            VideoError::TruncatedFrame {
                index,
                expected: luma + luma / 2,
            }
        }
        other => other,
    })?;
    let v = buf.split_off(luma + luma / 4);
    let u = buf.split_off(luma);
    Frame::new(width, height, buf, u, v)
}

fn read_full<R: Read>(inner: &mut R, buf: &mut [u8]) -> Result<(), VideoError> {
    inner.read_exact(buf).map_err(VideoError::Io)
}

/// Reads a whole Y4M stream into memory.
pub fn read_y4m<R: BufRead>(input: R) -> Result<VideoClip, VideoError> {
    let reader = Y4mReader::new(input)?;
    let header = reader.header();
    let frames = reader.collect::<Result<Vec<_>, _>>()?;
    VideoClip::new(frames, header.fps_num, header.fps_den)
}

/// Writes the canonical `YUV4MPEG2 W H F Ip A1:1 C420` form.
pub fn write_y4m<W: Write>(clip: &VideoClip, mut out: W) -> Result<(), VideoError> {
    if clip.is_empty() {
        return Err(VideoError::EmptyClip);
    }
    let (n, d) = clip.fps();
    writeln!(
        out,
        "{Y4M_MAGIC} W{} H{} F{n}:{d} Ip A1:1 C420",
        clip.width(),
        clip.height()
    )?;
    for frame in clip.iter() {
        out.write_all(b"FRAME\n")?;
        for plane in frame.planes() {
            out.write_all(plane)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads headerless planar 4:2:0 data with caller-supplied geometry.
pub fn read_raw_yuv<R: Read>(
    mut input: R,
    width: usize,
    height: usize,
    fps_num: u32,
    fps_den: u32,
) -> Result<VideoClip, VideoError> {
    check_geometry(width, height)?;
    let frame_len = width * height * 3 / 2;
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    if data.len() % frame_len != 0 {
        return Err(VideoError::TruncatedFrame {
            index: data.len() / frame_len,
            expected: frame_len,
        });
    }
    let frames = data
        .chunks_exact(frame_len)
        .enumerate()
        .map(|(i, chunk)| read_planes(&mut &chunk[..], width, height, i))
        .collect::<Result<Vec<_>, _>>()?;
    VideoClip::new(frames, fps_num, fps_den)
}

pub fn write_raw_yuv<W: Write>(clip: &VideoClip, mut out: W) -> Result<(), VideoError> {
    for frame in clip.iter() {
        for plane in frame.planes() {
            out.write_all(plane)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_frame(w: usize, h: usize, seed: u8) -> Frame {
        let y = (0..w * h).map(|i| (i as u8).wrapping_add(seed)).collect();
        let u = (0..w * h / 4).map(|i| (i as u8).wrapping_mul(3)).collect();
        let v = (0..w * h / 4).map(|i| 255 - i as u8).collect();
        Frame::new(w, h, y, u, v).unwrap()
    }

    #[test]
    fn smallest_legal_frame() {
        let mut data = b"YUV4MPEG2 W4 H4 F25:1\nFRAME\n".to_vec();
        data.extend(0..24u8);
        let clip = read_y4m(&data[..]).unwrap();
        assert_eq!(clip.len(), 1);
        assert_eq!((clip.width(), clip.height()), (4, 4));
        assert_eq!(clip.fps(), (25, 1));
        assert_eq!(clip.frame(0).u(), &[16, 17, 18, 19]);
    }

    #[test]
    fn non_420_chroma_rejected() {
        for tag in ["C422", "C444", "C420p10", "Cmono"] {
            let data = format!("YUV4MPEG2 W4 H4 F25:1 {tag}\n");
            match read_y4m(data.as_bytes()) {
                Err(VideoError::UnsupportedChroma(_)) => {}
                other => panic!("{tag}: {other:?}"),
            }
        }
        for tag in ["C420", "C420jpeg", "C420mpeg2", "C420paldv"] {
            let mut data = format!("YUV4MPEG2 W2 H2 F25:1 {tag}\nFRAME\n").into_bytes();
            data.extend([0u8; 6]);
            assert!(read_y4m(&data[..]).is_ok(), "{tag}");
        }
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(
            read_y4m(&b"YUV4MPEG W4 H4\n"[..]),
            Err(VideoError::MalformedHeader(_))
        ));
        assert!(matches!(
            read_y4m(&b"YUV4MPEG2 W4 F25:1\n"[..]),
            Err(VideoError::MalformedHeader(_))
        ));
    }

    #[test]
    fn trailing_partial_frame_is_error() {
        let mut data = b"YUV4MPEG2 W4 H4 F25:1\nFRAME\n".to_vec();
        data.extend([0u8; 24]);
        data.extend(b"FRAME\n");
        data.extend([0u8; 10]);
        assert!(matches!(
            read_y4m(&data[..]),
            Err(VideoError::TruncatedFrame { index: 1, .. })
        ));
    }

    #[test]
    fn write_canonical_header_and_payload() {
        let clip = VideoClip::new(vec![ramp_frame(4, 4, 0)], 30000, 1001).unwrap();
        let mut out = Vec::new();
        write_y4m(&clip, &mut out).unwrap();
        let header = b"YUV4MPEG2 W4 H4 F30000:1001 Ip A1:1 C420\nFRAME\n";
        assert_eq!(&out[..header.len()], header);
        assert_eq!(out.len() - header.len(), 24);
        assert_eq!(read_y4m(&out[..]).unwrap(), clip);
    }

    #[test]
    fn empty_clip_rejected() {
        assert!(matches!(
            VideoClip::new(vec![], 25, 1),
            Err(VideoError::EmptyClip)
        ));
    }

    #[test]
    fn raw_yuv_round_trip() {
        let clip = VideoClip::new(vec![ramp_frame(6, 4, 1), ramp_frame(6, 4, 9)], 25, 1).unwrap();
        let mut raw = Vec::new();
        write_raw_yuv(&clip, &mut raw).unwrap();
        assert_eq!(raw.len(), 2 * 36);
        assert_eq!(read_raw_yuv(&raw[..], 6, 4, 25, 1).unwrap(), clip);
        assert!(read_raw_yuv(&raw[..40], 6, 4, 25, 1).is_err());
    }

    #[test]
    fn crop_identity_and_chroma_offsets() {
        let f = ramp_frame(8, 8, 0);
        assert_eq!(f.crop(0, 0, 8, 8).unwrap(), f);
        let c = f.crop(2, 2, 4, 4).unwrap();
        assert_eq!((c.width(), c.height()), (4, 4));
        assert_eq!(c.y()[0], f.y()[2 * 8 + 2]);
        // chroma origin (1,1) in a 4-wide chroma plane
        assert_eq!(c.u(), &[f.u()[5], f.u()[6], f.u()[9], f.u()[10]]);
        assert_eq!(c.v(), &[f.v()[5], f.v()[6], f.v()[9], f.v()[10]]);
    }

    #[test]
    fn crop_errors() {
        let f = ramp_frame(8, 8, 0);
        assert!(matches!(f.crop(1, 0, 4, 4), Err(VideoError::OddGeometry)));
        assert!(matches!(f.crop(0, 0, 3, 4), Err(VideoError::OddGeometry)));
        assert!(matches!(
            f.crop(6, 0, 4, 4),
            Err(VideoError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn crop_composes() {
        let f = ramp_frame(16, 12, 3);
        let a = f.crop(2, 4, 10, 8).unwrap().crop(4, 2, 6, 4).unwrap();
        assert_eq!(a, f.crop(6, 6, 6, 4).unwrap());
    }

    fn numbered_clip(n: usize) -> VideoClip {
        let frames = (0..n)
            .map(|i| Frame::filled(2, 2, i as u8, 0, 0).unwrap())
            .collect();
        VideoClip::new(frames, 25, 1).unwrap()
    }

    #[test]
    fn sample_whole_clip() {
        let clip = numbered_clip(10);
        for seed in [0, 1, 99] {
            assert_eq!(clip.sample_clip(10, seed).unwrap(), clip);
        }
        assert!(matches!(
            clip.sample_clip(11, 0),
            Err(VideoError::ClipTooShort { .. })
        ));
    }

    #[test]
    fn sample_is_deterministic_and_shares_frames() {
        let clip = numbered_clip(50);
        let a = clip.sample_clip(8, 42).unwrap();
        let b = clip.sample_clip(8, 42).unwrap();
        assert_eq!(a, b);
        let start = a.frame(0).y()[0] as usize;
        for (i, f) in a.frames().iter().enumerate() {
            assert!(Arc::ptr_eq(f, &clip.frames()[start + i]));
        }
    }

    #[test]
    fn sample_start_covers_uniform_support() {
        // every admissible start index appears over 10^4 draws, and counts stay
        // near the uniform expectation of 10^4 / 69
        let clip = numbered_clip(100);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 69];
        for _ in 0..10_000 {
            counts[clip.sample_start(32, &mut rng).unwrap()] += 1;
        }
        let expected = 10_000.0 / 69.0;
        for (i, &c) in counts.iter().enumerate() {
            assert!(c > 0, "start {i} never drawn");
            assert!(
                (c as f64 - expected).abs() < 6.0 * expected.sqrt(),
                "{i}: {c}"
            );
        }
    }
}
