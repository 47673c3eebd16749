//! Procedural static-camera scenes: a fixed textured background, a few
//! small moving sprites and Gaussian sensor noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::video_io::{Frame, VideoClip, VideoError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene needs 1 to 3 sprites, got {0}")]
    SpriteCount(usize),
    #[error("sprite area {0:.4} of the frame exceeds the 0.05 limit")]
    SpriteArea(f64),
    #[error("noise sigma {0} must be finite and non-negative")]
    BadNoise(f64),
    #[error(transparent)]
    Video(#[from] VideoError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub sprites: usize,
    /// Total sprite area as a fraction of the frame.
    pub sprite_area: f64,
    pub noise_sigma: f64,
    pub fps: (u32, u32),
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 256,
            height: 256,
            sprites: 2,
            sprite_area: 0.04,
            noise_sigma: 2.0,
            fps: (25, 1),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Sprite {
    w: f64,
    h: f64,
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
    color: [f64; 3],
    round: bool,
}

impl Sprite {
    /// Top-left corner at frame `t`, bouncing inside the frame.
    fn position(&self, t: usize, width: usize, height: usize) -> (f64, f64) {
        let bounce = |start: f64, v: f64, span: f64| {
            if span <= 0.0 {
                return 0.0;
            }
            let p = (start + v * t as f64).rem_euclid(2.0 * span);
            if p > span {
                2.0 * span - p
            } else {
                p
            }
        };
        (
            bounce(self.x0, self.vx, width as f64 - self.w),
            bounce(self.y0, self.vy, height as f64 - self.h),
        )
    }

    fn covers(&self, px: f64, py: f64, x: f64, y: f64) -> bool {
        let (dx, dy) = (px - x, py - y);
        if dx < 0.0 || dy < 0.0 || dx >= self.w || dy >= self.h {
            return false;
        }
        if !self.round {
            return true;
        }
        let (nx, ny) = (2.0 * dx / self.w - 1.0, 2.0 * dy / self.h - 1.0);
        nx * nx + ny * ny <= 1.0
    }
}

/// A deterministic scene; frame `t` is a pure function of the spec and `t`.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    spec: SceneSpec,
    background: [Vec<f64>; 3],
    sprites: Vec<Sprite>,
}

fn texture(w: usize, h: usize, rng: &mut ChaCha8Rng, base: f64, amp: f64) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.02..0.35),
                rng.random_range(0.02..0.35),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let norm: f64 = waves.iter().map(|w| w.3).sum();
    let blocks: Vec<(usize, usize, usize, usize, f64)> = (0..10)
        .map(|_| {
            let bw = rng.random_range(w / 10..w / 3);
            let bh = rng.random_range(h / 10..h / 3);
            (
                rng.random_range(0..w - bw),
                rng.random_range(0..h - bh),
                bw,
                bh,
                rng.random_range(-0.5..0.5),
            )
        })
        .collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let mut v: f64 = waves
                .iter()
                .map(|&(a, b, ph, k)| k * (a * fx + b * fy + ph).sin())
                .sum::<f64>()
                / norm;
            for &(bx, by, bw, bh, level) in &blocks {
                if x >= bx && x < bx + bw && y >= by && y < by + bh {
                    v += level;
                }
            }
            out[y * w + x] = (base + amp * v).clamp(16.0, 235.0);
        }
    }
    out
}

impl SyntheticScene {
    pub fn new(spec: SceneSpec) -> Result<Self, SynthError> {
        if !(1..=3).contains(&spec.sprites) {
            return Err(SynthError::SpriteCount(spec.sprites));
        }
        if !(spec.sprite_area >= 0.0 && spec.sprite_area <= 0.05) {
            return Err(SynthError::SpriteArea(spec.sprite_area));
        }
        if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
            return Err(SynthError::BadNoise(spec.noise_sigma));
        }
        Frame::filled(spec.width, spec.height, 0, 0, 0)?;
        let (w, h) = (spec.width, spec.height);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let background = [
            texture(w, h, &mut rng, 120.0, 70.0),
            texture(w / 2, h / 2, &mut rng, 118.0, 25.0),
            texture(w / 2, h / 2, &mut rng, 136.0, 25.0),
        ];
        let each = spec.sprite_area * (w * h) as f64 / spec.sprites as f64;
        let sprites = (0..spec.sprites)
            .map(|_| {
                let aspect: f64 = rng.random_range(0.6..1.6);
                // ellipses cover π/4 of their box, so boxes are sized to the area bound
                let side = each.sqrt();
                let (sw, sh) = (
                    (side * aspect.sqrt()).max(2.0),
                    (side / aspect.sqrt()).max(2.0),
                );
                let speed = rng.random_range(0.7..2.5);
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                Sprite {
                    w: sw.min(w as f64),
                    h: sh.min(h as f64),
                    x0: rng.random_range(0.0..w as f64),
                    y0: rng.random_range(0.0..h as f64),
                    vx: speed * f64::cos(angle),
                    vy: speed * f64::sin(angle),
                    color: [
                        rng.random_range(20.0..235.0),
                        rng.random_range(40.0..215.0),
                        rng.random_range(40.0..215.0),
                    ],
                    round: rng.random_bool(0.5),
                }
            })
            .collect();
        Ok(SyntheticScene {
            spec,
            background,
            sprites,
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    /// The noiseless, sprite-free background.
    pub fn clean_background(&self) -> Frame {
        self.compose(None, None)
    }

    /// Frame `t` with sprites and sensor noise.
    pub fn frame(&self, t: usize) -> Frame {
        self.compose(Some(t), Some(t))
    }

    /// Frame `t`'s sensor noise over the bare background.
    pub fn sprite_free_frame(&self, t: usize) -> Frame {
        self.compose(None, Some(t))
    }

    pub fn clip(&self, start: usize, len: usize) -> Result<VideoClip, SynthError> {
        let frames = (start..start + len).map(|t| self.frame(t)).collect();
        Ok(VideoClip::new(frames, self.spec.fps.0, self.spec.fps.1)?)
    }

    /// Fraction of luma samples covered by sprites in frame `t`.
    pub fn sprite_coverage(&self, t: usize) -> f64 {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut covered = 0usize;
        let pos: Vec<_> = self.sprites.iter().map(|s| s.position(t, w, h)).collect();
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                covered += self
                    .sprites
                    .iter()
                    .zip(&pos)
                    .any(|(s, &(sx, sy))| s.covers(px, py, sx, sy))
                    as usize;
            }
        }
        covered as f64 / (w * h) as f64
    }

    fn compose(&self, sprites_at: Option<usize>, noise_at: Option<usize>) -> Frame {
        let (w, h) = (self.spec.width, self.spec.height);
        let mut planes = self.background.clone();
        if let Some(t) = sprites_at {
            for s in &self.sprites {
                let (sx, sy) = s.position(t, w, h);
                for (p, plane) in planes.iter_mut().enumerate() {
                    let scale = if p == 0 { 1.0 } else { 0.5 };
                    let pw = if p == 0 { w } else { w / 2 };
                    let y_end = ((sy + s.h) * scale).ceil() as usize;
                    let x_end = ((sx + s.w) * scale).ceil() as usize;
                    for y in (sy * scale) as usize..y_end.min(plane.len() / pw) {
                        for x in (sx * scale) as usize..x_end.min(pw) {
                            let (px, py) = ((x as f64 + 0.5) / scale, (y as f64 + 0.5) / scale);
                            if s.covers(px, py, sx, sy) {
                                plane[y * pw + x] = s.color[p];
                            }
                        }
                    }
                }
            }
        }
        if let Some(t) = noise_at {
            if self.spec.noise_sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ 0x6e01_5e00);
                rng.set_stream(t as u64);
                let normal =
                    Normal::new(0.0, self.spec.noise_sigma).expect("sigma checked at construction");
                for plane in &mut planes {
                    plane.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
                }
            }
        }
        let [y, u, v] = planes.map(|p| {
            p.into_iter()
                .map(|v| v.round().clamp(0.0, 255.0) as u8)
                .collect()
        });
        Frame::new(w, h, y, u, v).expect("scene geometry checked at construction")
    }
}

/// A clip whose frames are independent uniform noise.
pub fn noise_clip(
    width: usize,
    height: usize,
    frames: usize,
    seed: u64,
) -> Result<VideoClip, VideoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plane = |n: usize| (0..n).map(|_| rng.random::<u8>()).collect::<Vec<u8>>();
    let frames = (0..frames)
        .map(|_| {
            let y = plane(width * height);
            let u = plane(width * height / 4);
            let v = plane(width * height / 4);
            Frame::new(width, height, y, u, v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    VideoClip::new(frames, 25, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::plane_mse;

    fn small() -> SyntheticScene {
        SyntheticScene::new(SceneSpec {
            width: 64,
            height: 64,
            sprites: 3,
            sprite_area: 0.05,
            ..SceneSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn frames_are_deterministic() {
        let s = small();
        assert_eq!(s.frame(17), small().frame(17));
        assert_ne!(s.frame(17), s.frame(18));
    }

    #[test]
    fn sprites_stay_within_area_bound() {
        let s = small();
        for t in (0..400).step_by(13) {
            let c = s.sprite_coverage(t);
            assert!(c > 0.0 && c <= 0.05, "frame {t}: {c}");
        }
    }

    #[test]
    fn sprite_free_frames_only_carry_noise() {
        let s = small();
        let clean = s.clean_background();
        let f = s.sprite_free_frame(5);
        let mse = plane_mse(clean.y(), f.y());
        // σ = 2 before rounding
        assert!((mse - 4.0).abs() < 0.6, "{mse}");
    }

    #[test]
    fn sprites_move() {
        let s = small();
        let (a, b) = (s.frame(0), s.frame(30));
        let bg = s.clean_background();
        let changed = |f: &Frame| {
            f.y()
                .iter()
                .zip(bg.y())
                .filter(|(x, y)| (**x as i32 - **y as i32).abs() > 12)
                .count()
        };
        assert!(changed(&a) > 0 && changed(&b) > 0);
        assert!(
            plane_mse(a.y(), b.y())
                > plane_mse(s.sprite_free_frame(0).y(), s.sprite_free_frame(30).y())
        );
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = |f: fn(&mut SceneSpec)| {
            let mut spec = SceneSpec::default();
            f(&mut spec);
            SyntheticScene::new(spec).is_err()
        };
        assert!(bad(|s| s.sprites = 0));
        assert!(bad(|s| s.sprites = 4));
        assert!(bad(|s| s.sprite_area = 0.2));
        assert!(bad(|s| s.noise_sigma = -1.0));
        assert!(bad(|s| s.width = 7));
    }
}
