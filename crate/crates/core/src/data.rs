//! Synthetic video: bouncing shapes and drifting scalar fields.
//!
//! Scenes are defined in continuous time, so a frame can be rendered at any
//! real `t`. Integer times reproduce the generated clip exactly.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::seed;
use crate::tensor::{read_tensor_from, write_tensor_to, DType, Tensor};

/// An observation window: frames `[C, T, H, W]` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoClip {
    frames: Tensor,
    /// Time between consecutive frames.
    pub dt: f64,
    /// Time of frame 0.
    pub origin_time: f64,
}

impl VideoClip {
    pub fn new(frames: Tensor, dt: f64, origin_time: f64) -> Result<Self> {
        if frames.rank() != 4 {
            return invalid(format!("clip must be [C,T,H,W], got {:?}", frames.shape()));
        }
        if let Some(v) = frames.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return invalid(format!("pixel value {v} outside [0, 1]"));
        }
        if !(dt > 0.0) || !origin_time.is_finite() {
            return invalid(format!("bad clip timing dt={dt} origin={origin_time}"));
        }
        Ok(Self {
            frames,
            dt,
            origin_time,
        })
    }

    /// Builds a clip from `[C, H, W]` frames.
    pub fn from_frames(frames: &[Tensor], dt: f64, origin_time: f64) -> Result<Self> {
        let first = match frames.first() {
            Some(f) if f.rank() == 3 => f,
            _ => return invalid("clip needs at least one [C,H,W] frame"),
        };
        let (c, h, w) = (first.shape()[0], first.shape()[1], first.shape()[2]);
        let t = frames.len();
        let plane = h * w;
        let mut data = vec![0.0; c * t * plane];
        for (ti, f) in frames.iter().enumerate() {
            if f.shape() != first.shape() {
                return invalid(format!("frame {ti} has shape {:?}", f.shape()));
            }
            for ch in 0..c {
                data[(ch * t + ti) * plane..][..plane]
                    .copy_from_slice(&f.data()[ch * plane..][..plane]);
            }
        }
        Self::new(Tensor::new(&[c, t, h, w], data)?, dt, origin_time)
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn channels(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn height(&self) -> usize {
        self.frames.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[3]
    }

    /// Frame `i` as `[C, H, W]`.
    pub fn frame(&self, i: usize) -> Tensor {
        let f = self.frames.narrow(1, i, 1).expect("frame index in range");
        f.reshape(&[self.channels(), self.height(), self.width()])
            .expect("same element count")
    }

    pub fn frame_list(&self) -> Vec<Tensor> {
        (0..self.len()).map(|i| self.frame(i)).collect()
    }

    /// Frames `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<VideoClip> {
        let frames = self.frames.narrow(1, start, len)?;
        Ok(VideoClip {
            frames,
            dt: self.dt,
            origin_time: self.origin_time + start as f64 * self.dt,
        })
    }

    /// Keeps frames `0, rate, 2 * rate, ...` and scales `dt` by `rate`.
    pub fn subsample(&self, rate: usize) -> Result<VideoClip> {
        if rate == 0 {
            return invalid("sub-sampling rate must be at least 1");
        }
        let keep: Vec<Tensor> = (0..self.len())
            .step_by(rate)
            .map(|i| self.frame(i))
            .collect();
        VideoClip::from_frames(&keep, self.dt * rate as f64, self.origin_time)
    }

    pub fn save(&self, path: impl AsRef<Path>, seed: Option<u64>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        writeln!(
            w,
            "taylorcast-clip dt={:?} origin_time={:?} seed={seed}",
            self.dt, self.origin_time
        )?;
        write_tensor_to(&mut w, &self.frames, DType::F64)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a clip file; returns the clip and the recorded seed, if any.
    pub fn load(path: impl AsRef<Path>) -> Result<(VideoClip, Option<u64>)> {
        let mut r = BufReader::new(File::open(path)?);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let bad = |d: &str| Error::Format {
            what: "clip",
            detail: d.to_string(),
        };
        let mut fields = line.trim_end().split(' ');
        if fields.next() != Some("taylorcast-clip") {
            return Err(bad("missing taylorcast-clip header"));
        }
        let (mut dt, mut origin, mut seed) = (None, None, None);
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| bad(f))?;
            match k {
                "dt" => dt = v.parse::<f64>().ok(),
                "origin_time" => origin = v.parse::<f64>().ok(),
                "seed" => seed = v.parse::<u64>().ok(),
                _ => return Err(bad(&format!("unknown field {k}"))),
            }
        }
        let frames = read_tensor_from(&mut r)?;
        let clip = VideoClip::new(
            frames,
            dt.ok_or_else(|| bad("dt"))?,
            origin.ok_or_else(|| bad("origin_time"))?,
        )?;
        Ok((clip, seed))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Disc,
    Square,
    Cross,
}

/// One moving shape. Coordinates are `(row, col)` in pixels; pixel `(r, c)`
/// covers `[r, r + 1) x [c, c + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    /// Disc radius, or half side length for squares and crosses.
    pub size: f64,
    pub start: (f64, f64),
    /// Pixels per unit time.
    pub velocity: (f64, f64),
}

impl Shape {
    fn contains(&self, dy: f64, dx: f64) -> bool {
        let r = self.size;
        match self.kind {
            ShapeKind::Disc => dy * dy + dx * dx <= r * r,
            ShapeKind::Square => dy.abs() <= r && dx.abs() <= r,
            ShapeKind::Cross => {
                let arm = r / 3.0;
                (dy.abs() <= r && dx.abs() <= arm) || (dx.abs() <= r && dy.abs() <= arm)
            }
        }
    }
}

/// Folds `p` into `[lo, hi]` by mirror reflection at the walls.
fn reflect(p: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let u = (p - lo).rem_euclid(2.0 * span);
    if u > span {
        lo + 2.0 * span - u
    } else {
        lo + u
    }
}

/// Ranges used to draw random scenes.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRanges {
    pub n_shapes: usize,
    pub size: (f64, f64),
    pub speed: (f64, f64),
    pub kinds: Vec<ShapeKind>,
}

impl SceneRanges {
    /// Defaults scaled to the grid: sizes about a tenth of the side.
    pub fn for_grid(grid: (usize, usize)) -> Self {
        let side = grid.0.min(grid.1) as f64;
        Self {
            n_shapes: 2,
            size: (side * 0.1, side * 0.16),
            speed: (side / 32.0, side / 16.0),
            kinds: vec![ShapeKind::Disc, ShapeKind::Square, ShapeKind::Cross],
        }
    }
}

/// A continuous-time scene of shapes bouncing elastically inside a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeSceneSpec {
    pub grid: (usize, usize),
    pub shapes: Vec<Shape>,
    pub seed: u64,
}

/// Sub-samples per pixel side used for area coverage.
const SUPERSAMPLE: usize = 8;

impl ShapeSceneSpec {
    pub fn random(grid: (usize, usize), ranges: &SceneRanges, seed: u64) -> Result<Self> {
        if ranges.n_shapes == 0 || ranges.kinds.is_empty() {
            return invalid("scene needs at least one shape and one kind");
        }
        let mut rng = seed::rng(seed, "scene", 0);
        let (h, w) = (grid.0 as f64, grid.1 as f64);
        let shapes = (0..ranges.n_shapes)
            .map(|_| {
                let kind = ranges.kinds[rng.gen_range(0..ranges.kinds.len())];
                let size = if ranges.size.0 < ranges.size.1 {
                    rng.gen_range(ranges.size.0..ranges.size.1)
                } else {
                    ranges.size.0
                };
                let row = rng.gen_range(size..=(h - size).max(size));
                let col = rng.gen_range(size..=(w - size).max(size));
                let speed = if ranges.speed.0 < ranges.speed.1 {
                    rng.gen_range(ranges.speed.0..ranges.speed.1)
                } else {
                    ranges.speed.0
                };
                let angle = rng.gen_range(0.0..2.0 * PI);
                Shape {
                    kind,
                    size,
                    start: (row, col),
                    velocity: (speed * angle.sin(), speed * angle.cos()),
                }
            })
            .collect();
        let spec = Self { grid, shapes, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.grid.0 as f64, self.grid.1 as f64);
        if self.shapes.is_empty() {
            return invalid("scene has no shapes");
        }
        for (i, s) in self.shapes.iter().enumerate() {
            if !(s.size > 0.0) || 2.0 * s.size > h || 2.0 * s.size > w {
                return invalid(format!(
                    "shape {i} of size {} does not fit {:?}",
                    s.size, self.grid
                ));
            }
            let finite = [s.start.0, s.start.1, s.velocity.0, s.velocity.1]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return invalid(format!("shape {i} has non-finite motion"));
            }
        }
        Ok(())
    }

    /// Center of shape `i` at time `t`: `p0 + v t` folded back into the grid.
    pub fn position(&self, i: usize, t: f64) -> (f64, f64) {
        let s = &self.shapes[i];
        let (h, w) = (self.grid.0 as f64, self.grid.1 as f64);
        (
            reflect(s.start.0 + s.velocity.0 * t, s.size, h - s.size),
            reflect(s.start.1 + s.velocity.1 * t, s.size, w - s.size),
        )
    }

    /// Anti-aliased frame `[1, H, W]` at real time `t`.
    pub fn render(&self, t: f64) -> Tensor {
        let (h, w) = self.grid;
        let mut img = vec![0.0; h * w];
        let step = 1.0 / SUPERSAMPLE as f64;
        let norm = 1.0 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
        for (i, s) in self.shapes.iter().enumerate() {
            let (cy, cx) = self.position(i, t);
            let r0 = ((cy - s.size).floor().max(0.0)) as usize;
            let r1 = ((cy + s.size).ceil() as usize).min(h);
            let c0 = ((cx - s.size).floor().max(0.0)) as usize;
            let c1 = ((cx + s.size).ceil() as usize).min(w);
            for r in r0..r1 {
                for c in c0..c1 {
                    let mut hits = 0usize;
                    for a in 0..SUPERSAMPLE {
                        let dy = r as f64 + (a as f64 + 0.5) * step - cy;
                        for b in 0..SUPERSAMPLE {
                            let dx = c as f64 + (b as f64 + 0.5) * step - cx;
                            hits += usize::from(s.contains(dy, dx));
                        }
                    }
                    let px = &mut img[r * w + c];
                    *px = f64::max(*px, hits as f64 * norm);
                }
            }
        }
        Tensor::new(&[1, h, w], img).expect("grid extents are positive")
    }
}

/// Clip of frames at integer times `0..frames`.
pub fn generate_moving_shapes(spec: &ShapeSceneSpec, frames: usize) -> Result<VideoClip> {
    spec.validate()?;
    if frames == 0 {
        return invalid("clip needs at least one frame");
    }
    let list: Vec<Tensor> = (0..frames).map(|t| spec.render(t as f64)).collect();
    VideoClip::from_frames(&list, 1.0, 0.0)
}

/// Frame of the continuous scene at real time `t >= 0`.
pub fn fractional_ground_truth(spec: &ShapeSceneSpec, t: f64) -> Result<Tensor> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("time must be finite and non-negative, got {t}"));
    }
    spec.validate()?;
    Ok(spec.render(t))
}

/// Smooth scalar field: drifting Gaussian bumps with slowly varying amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFieldSpec {
    pub grid: (usize, usize),
    blobs: Vec<Blob>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
struct Blob {
    start: (f64, f64),
    velocity: (f64, f64),
    sigma: f64,
    amp_phase: f64,
    amp_freq: f64,
}

impl ScalarFieldSpec {
    pub fn random(grid: (usize, usize), n_blobs: usize, seed: u64) -> Result<Self> {
        if n_blobs == 0 {
            return invalid("scalar field needs at least one blob");
        }
        let mut rng = seed::rng(seed, "field", 0);
        let side = grid.0.min(grid.1) as f64;
        let blobs = (0..n_blobs)
            .map(|_| {
                let angle = rng.gen_range(0.0..2.0 * PI);
                let speed = rng.gen_range(0.02..0.06) * side;
                Blob {
                    start: (
                        rng.gen_range(0.0..grid.0 as f64),
                        rng.gen_range(0.0..grid.1 as f64),
                    ),
                    velocity: (speed * angle.sin(), speed * angle.cos()),
                    sigma: rng.gen_range(0.12..0.25) * side,
                    amp_phase: rng.gen_range(0.0..2.0 * PI),
                    amp_freq: rng.gen_range(0.05..0.2),
                }
            })
            .collect();
        Ok(Self { grid, blobs, seed })
    }

    pub fn render(&self, t: f64) -> Tensor {
        let (h, w) = self.grid;
        let n = self.blobs.len() as f64;
        let mut img = vec![0.0; h * w];
        for b in &self.blobs {
            let cy = reflect(b.start.0 + b.velocity.0 * t, 0.0, h as f64);
            let cx = reflect(b.start.1 + b.velocity.1 * t, 0.0, w as f64);
            let amp = (0.6 + 0.4 * (b.amp_freq * t + b.amp_phase).sin()) / n;
            let inv = 1.0 / (2.0 * b.sigma * b.sigma);
            for r in 0..h {
                let dy = r as f64 + 0.5 - cy;
                for c in 0..w {
                    let dx = c as f64 + 0.5 - cx;
                    img[r * w + c] += amp * (-(dy * dy + dx * dx) * inv).exp();
                }
            }
        }
        for v in &mut img {
            *v = v.clamp(0.0, 1.0);
        }
        Tensor::new(&[1, h, w], img).expect("grid extents are positive")
    }

    pub fn generate(&self, frames: usize) -> Result<VideoClip> {
        if frames == 0 {
            return invalid("clip needs at least one frame");
        }
        let list: Vec<Tensor> = (0..frames).map(|t| self.render(t as f64)).collect();
        VideoClip::from_frames(&list, 1.0, 0.0)
    }
}

/// Endless supply of `(observed, future)` clip pairs, addressed by index.
pub trait ClipSource {
    fn sample(&self, index: u64) -> Result<(VideoClip, VideoClip)>;
}

/// Random moving-shape scenes split into observed and future frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapesSource {
    pub grid: (usize, usize),
    pub ranges: SceneRanges,
    pub observed: usize,
    pub future: usize,
    pub seed: u64,
}

impl ShapesSource {
    pub fn new(grid: (usize, usize), observed: usize, future: usize, seed: u64) -> Self {
        Self {
            grid,
            ranges: SceneRanges::for_grid(grid),
            observed,
            future,
            seed,
        }
    }

    pub fn scene(&self, index: u64) -> Result<ShapeSceneSpec> {
        ShapeSceneSpec::random(
            self.grid,
            &self.ranges,
            seed::derive(self.seed, "shapes", index),
        )
    }
}

impl ClipSource for ShapesSource {
    fn sample(&self, index: u64) -> Result<(VideoClip, VideoClip)> {
        let clip = generate_moving_shapes(&self.scene(index)?, self.observed + self.future)?;
        split(&clip, self.observed)
    }
}

/// Random scalar-field sequences split into observed and future frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSource {
    pub grid: (usize, usize),
    pub blobs: usize,
    pub observed: usize,
    pub future: usize,
    pub seed: u64,
}

impl ClipSource for FieldSource {
    fn sample(&self, index: u64) -> Result<(VideoClip, VideoClip)> {
        let spec = ScalarFieldSpec::random(
            self.grid,
            self.blobs,
            seed::derive(self.seed, "field", index),
        )?;
        split(&spec.generate(self.observed + self.future)?, self.observed)
    }
}

/// Splits a clip into its first `observed` frames and the rest.
pub fn split(clip: &VideoClip, observed: usize) -> Result<(VideoClip, VideoClip)> {
    if observed == 0 || observed >= clip.len() {
        return invalid(format!(
            "cannot split {} frames after {observed}",
            clip.len()
        ));
    }
    Ok((
        clip.window(0, observed)?,
        clip.window(observed, clip.len() - observed)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc_scene(start: (f64, f64), velocity: (f64, f64)) -> ShapeSceneSpec {
        ShapeSceneSpec {
            grid: (16, 16),
            shapes: vec![Shape {
                kind: ShapeKind::Disc,
                size: 2.5,
                start,
                velocity,
            }],
            seed: 0,
        }
    }

    fn centroid(f: &Tensor, w: usize) -> (f64, f64) {
        let mass: f64 = f.sum();
        let (mut r, mut c) = (0.0, 0.0);
        for (i, v) in f.data().iter().enumerate() {
            r += v * ((i / w) as f64 + 0.5);
            c += v * ((i % w) as f64 + 0.5);
        }
        (r / mass, c / mass)
    }

    #[test]
    fn zero_velocity_is_static() {
        let clip = generate_moving_shapes(&disc_scene((8.0, 8.0), (0.0, 0.0)), 5).unwrap();
        let f0 = clip.frame(0);
        assert!((1..5).all(|i| clip.frame(i) == f0));
    }

    #[test]
    fn unit_velocity_shifts_one_pixel_per_frame() {
        let clip = generate_moving_shapes(&disc_scene((8.0, 4.0), (0.0, 1.0)), 6).unwrap();
        for i in 0..5 {
            let (a, b) = (clip.frame(i), clip.frame(i + 1));
            for r in 0..16 {
                for c in 0..15 {
                    assert_eq!(a.data()[r * 16 + c], b.data()[r * 16 + c + 1], "frame {i}");
                }
            }
        }
    }

    #[test]
    fn half_time_step_moves_centroid_one_pixel() {
        let spec = disc_scene((8.0, 5.0), (0.0, 2.0));
        let f0 = fractional_ground_truth(&spec, 0.0).unwrap();
        let f1 = fractional_ground_truth(&spec, 0.5).unwrap();
        let (a, b) = (centroid(&f0, 16), centroid(&f1, 16));
        assert!((b.1 - a.1 - 1.0).abs() < 1e-9 && (b.0 - a.0).abs() < 1e-9);
    }

    #[test]
    fn integer_time_matches_generated_frame() {
        let spec = ShapeSceneSpec::random((16, 16), &SceneRanges::for_grid((16, 16)), 9).unwrap();
        let clip = generate_moving_shapes(&spec, 8).unwrap();
        for t in 0..8 {
            assert_eq!(
                fractional_ground_truth(&spec, t as f64).unwrap(),
                clip.frame(t)
            );
        }
    }

    #[test]
    fn positions_stay_inside_grid() {
        let spec = ShapeSceneSpec::random((16, 16), &SceneRanges::for_grid((16, 16)), 4).unwrap();
        for k in 0..2000 {
            let t = k as f64 * 0.37;
            for (i, s) in spec.shapes.iter().enumerate() {
                let (r, c) = spec.position(i, t);
                assert!(r >= s.size - 1e-9 && r <= 16.0 - s.size + 1e-9);
                assert!(c >= s.size - 1e-9 && c <= 16.0 - s.size + 1e-9);
            }
        }
    }

    #[test]
    fn bounce_preserves_speed() {
        let spec = disc_scene((8.0, 13.0), (0.0, 1.0));
        // wall at col 13.5: 14 folds to 13, 15 folds to 12
        let (_, c1) = spec.position(0, 1.0);
        let (_, c2) = spec.position(0, 2.0);
        assert!(
            (c1 - 13.0).abs() < 1e-12 && (c2 - 12.0).abs() < 1e-12,
            "{c1} {c2}"
        );
    }

    #[test]
    fn infeasible_scene_rejected() {
        let mut spec = disc_scene((8.0, 8.0), (0.0, 0.0));
        spec.shapes[0].size = 9.0;
        assert!(generate_moving_shapes(&spec, 3).is_err());
    }

    #[test]
    fn same_seed_same_clip() {
        let r = SceneRanges::for_grid((16, 16));
        let a = generate_moving_shapes(&ShapeSceneSpec::random((16, 16), &r, 11).unwrap(), 6);
        let b = generate_moving_shapes(&ShapeSceneSpec::random((16, 16), &r, 11).unwrap(), 6);
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn subsample_rules() {
        let spec = ShapeSceneSpec::random((16, 16), &SceneRanges::for_grid((16, 16)), 2).unwrap();
        let clip = generate_moving_shapes(&spec, 20).unwrap();
        assert_eq!(clip.subsample(1).unwrap(), clip);
        let half = clip.subsample(2).unwrap();
        assert_eq!(half.len(), 10);
        assert_eq!(half.dt, 2.0);
        assert_eq!(half.frame(3), clip.frame(6));
        let quarter = clip.subsample(4).unwrap();
        let twice = half.subsample(2).unwrap();
        assert_eq!(quarter.frames(), twice.frames());
        assert!(clip.subsample(0).is_err());
    }

    #[test]
    fn area_conserved_away_from_walls() {
        let spec = disc_scene((8.0, 4.0), (0.3, 0.7));
        let a0 = spec.render(0.0).sum();
        for k in 1..8 {
            let a = spec.render(k as f64 * 0.9).sum();
            assert!((a - a0).abs() / a0 < 0.02);
        }
    }

    #[test]
    fn scalar_field_in_range_and_smooth() {
        let f = ScalarFieldSpec::random((16, 16), 3, 5).unwrap();
        let clip = f.generate(6).unwrap();
        assert!(clip.frames().data().iter().all(|v| (0.0..=1.0).contains(v)));
        let d = f.render(1.0).max_abs_diff(&f.render(1.01)).unwrap();
        assert!(d < 0.01);
    }

    #[test]
    fn clip_values_validated() {
        let t = Tensor::full(&[1, 2, 2, 2], 1.5);
        assert!(VideoClip::new(t, 1.0, 0.0).is_err());
    }
}
