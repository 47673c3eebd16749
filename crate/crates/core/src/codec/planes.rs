use crate::video_io::Frame;

pub const BLOCK: usize = 16;
pub const CHROMA_BLOCK: usize = BLOCK / 2;

/// Real-valued 4:2:0 picture used for predictions and reconstructions.
#[derive(Clone, Debug, PartialEq)]
pub struct Planes {
    pub width: usize,
    pub height: usize,
    /// Y, U, V sample arrays.
    pub data: [Vec<f64>; 3],
}

impl Planes {
    pub fn zeros(width: usize, height: usize) -> Self {
        let luma = width * height;
        Planes {
            width,
            height,
            data: [vec![0.0; luma], vec![0.0; luma / 4], vec![0.0; luma / 4]],
        }
    }

    pub fn from_frame(frame: &Frame) -> Self {
        Planes {
            width: frame.width(),
            height: frame.height(),
            data: frame
                .planes()
                .map(|p| p.iter().map(|&v| v as f64).collect()),
        }
    }

    /// Rounds to nearest and clamps to 8 bits.
    pub fn to_frame(&self) -> Frame {
        let conv = |p: &Vec<f64>| {
            p.iter()
                .map(|&v| v.round().clamp(0.0, 255.0) as u8)
                .collect()
        };
        let [y, u, v] = &self.data;
        Frame::new(self.width, self.height, conv(y), conv(u), conv(v))
            .expect("planes always carry valid 4:2:0 geometry")
    }

    pub fn plane_width(&self, plane: usize) -> usize {
        if plane == 0 {
            self.width
        } else {
            self.width / 2
        }
    }

    pub fn same_geometry(&self, width: usize, height: usize) -> bool {
        self.width == width && self.height == height
    }
}

/// Layout of the 16×16 luma parameter blocks; chroma uses co-located 8×8
/// blocks of the half-resolution planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockGrid {
    pub cols: usize,
    pub rows: usize,
}

impl BlockGrid {
    pub fn for_frame(width: usize, height: usize) -> Self {
        BlockGrid {
            cols: width.div_ceil(BLOCK),
            rows: height.div_ceil(BLOCK),
        }
    }

    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Block index for every sample of `plane`, in raster order.
    pub fn sample_blocks(&self, plane: usize, width: usize, height: usize) -> Vec<u32> {
        let (w, h, b) = if plane == 0 {
            (width, height, BLOCK)
        } else {
            (width / 2, height / 2, CHROMA_BLOCK)
        };
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            let row = (y / b) * self.cols;
            for x in 0..w {
                out.push((row + x / b) as u32);
            }
        }
        out
    }
}
