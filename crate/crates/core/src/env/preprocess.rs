use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use super::EnvError;
use crate::nn::Tensor;

pub const OBS_SIZE: usize = 84;
pub const STACK_DEPTH: usize = 4;
pub const BINARIZE_THRESHOLD: f64 = 0.5;

/// Row-major intensity grid with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, pixels: vec![value; width * height] }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, EnvError> {
        if pixels.len() != width * height {
            return Err(EnvError::FrameSize { width, height, len: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.width + col] = value;
    }

    /// Paints rows `r0..r1` and columns `c0..c1`, clipped to the frame.
    pub fn fill_rect(&mut self, r0: i64, r1: i64, c0: i64, c1: i64, value: f64) {
        let clip = |v: i64, hi: usize| v.clamp(0, hi as i64) as usize;
        let (r0, r1) = (clip(r0, self.height), clip(r1, self.height));
        let (c0, c1) = (clip(c0, self.width), clip(c1, self.width));
        for r in r0..r1 {
            self.pixels[r * self.width + c0..r * self.width + c1].fill(value);
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Frame {
        Frame { width: self.width, height: self.height, pixels: self.pixels.iter().map(|&v| f(v)).collect() }
    }
}

/// 1 where the pixel is at least `threshold`, else 0.
pub fn binarize(frame: &Frame, threshold: f64) -> Frame {
    frame.map(|v| if v >= threshold { 1.0 } else { 0.0 })
}

pub fn invert(frame: &Frame) -> Frame {
    frame.map(|v| 1.0 - v)
}

/// Binary 3×3 morphology; pixels beyond the border count as 0.
fn morph(frame: &Frame, keep_if_all: bool) -> Frame {
    let (w, h) = (frame.width, frame.height);
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let mut all = true;
            let mut any = false;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                    let on = rr >= 0
                        && cc >= 0
                        && (rr as usize) < h
                        && (cc as usize) < w
                        && frame.pixels[rr as usize * w + cc as usize] >= 0.5;
                    all &= on;
                    any |= on;
                }
            }
            let on = if keep_if_all { all } else { any };
            out[r * w + c] = if on { 1.0 } else { 0.0 };
        }
    }
    Frame { width: w, height: h, pixels: out }
}

/// A pixel survives only if its whole 3×3 neighbourhood is on.
pub fn erode(frame: &Frame) -> Frame {
    morph(frame, true)
}

/// A pixel turns on if any pixel of its 3×3 neighbourhood is on.
pub fn dilate(frame: &Frame) -> Frame {
    morph(frame, false)
}

/// Erosion followed by dilation.
pub fn open(frame: &Frame) -> Frame {
    dilate(&erode(frame))
}

/// Nearest-neighbour resize: output `(r, c)` samples source `(⌊r·H/h⌋, ⌊c·W/w⌋)`.
pub fn resize_nearest(frame: &Frame, width: usize, height: usize) -> Frame {
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let sr = r * frame.height / height;
        for c in 0..width {
            out.push(frame.pixels[sr * frame.width + c * frame.width / width]);
        }
    }
    Frame { width, height, pixels: out }
}

/// Binarize, invert (objects bright on dark), open, then resize to 84×84.
///
/// Equal to `resize_nearest(&open(&invert(&binarize(f, 0.5))), 84, 84)`; the
/// dilation is evaluated only at the pixels the resize samples.
pub fn preprocess(frame: &Frame) -> Frame {
    let (w, h) = (frame.width, frame.height);
    let on: Vec<u8> = frame.pixels.iter().map(|&v| u8::from(!(v >= BINARIZE_THRESHOLD))).collect();
    // 3-wide horizontal AND, then 3-tall vertical AND: the 3×3 erosion
    let mut row_and = vec![0u8; w * h];
    for r in 0..h {
        let line = &on[r * w..(r + 1) * w];
        for c in 1..w.saturating_sub(1) {
            row_and[r * w + c] = line[c - 1] & line[c] & line[c + 1];
        }
    }
    let mut eroded = vec![0u8; w * h];
    for r in 1..h.saturating_sub(1) {
        for c in 0..w {
            eroded[r * w + c] = row_and[(r - 1) * w + c] & row_and[r * w + c] & row_and[(r + 1) * w + c];
        }
    }
    let mut out = Vec::with_capacity(OBS_SIZE * OBS_SIZE);
    for i in 0..OBS_SIZE {
        let sr = i * h / OBS_SIZE;
        for j in 0..OBS_SIZE {
            let sc = j * w / OBS_SIZE;
            let mut any = 0u8;
            for r in sr.saturating_sub(1)..(sr + 2).min(h) {
                for c in sc.saturating_sub(1)..(sc + 2).min(w) {
                    any |= eroded[r * w + c];
                }
            }
            out.push(f64::from(any));
        }
    }
    Frame { width: OBS_SIZE, height: OBS_SIZE, pixels: out }
}

/// Reference composition of the individual stages.
pub fn preprocess_reference(frame: &Frame) -> Frame {
    let inverted = invert(&binarize(frame, BINARIZE_THRESHOLD));
    resize_nearest(&open(&inverted), OBS_SIZE, OBS_SIZE)
}

/// The last four preprocessed frames, newest last.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameStack {
    frames: VecDeque<Frame>,
}

impl FrameStack {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops history and fills all four slots with `frame`.
    pub fn reset(&mut self, frame: Frame) {
        self.frames.clear();
        for _ in 0..STACK_DEPTH {
            self.frames.push_back(frame.clone());
        }
    }

    pub fn push(&mut self, frame: Frame) {
        if self.frames.is_empty() {
            self.reset(frame);
            return;
        }
        while self.frames.len() < STACK_DEPTH {
            let oldest = self.frames.front().expect("nonempty").clone();
            self.frames.push_front(oldest);
        }
        self.frames.pop_front();
        self.frames.push_back(frame);
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter()
    }

    /// `[4 × H × W]` tensor; fewer than four frames pads by replicating the oldest.
    pub fn observation(&self) -> Tensor {
        let first = self.frames.front().expect("stack holds at least one frame");
        let (w, h) = (first.width, first.height);
        let pad = STACK_DEPTH.saturating_sub(self.frames.len());
        let mut data = Vec::with_capacity(STACK_DEPTH * w * h);
        for _ in 0..pad {
            data.extend_from_slice(&first.pixels);
        }
        for f in &self.frames {
            data.extend_from_slice(&f.pixels);
        }
        Tensor::new(vec![STACK_DEPTH, h, w], data).expect("frames share one size")
    }

    #[cfg(test)]
    pub(crate) fn from_frames(frames: Vec<Frame>) -> Self {
        Self { frames: frames.into() }
    }
}

/// Binary PGM (`P5`, maxval 255).
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<(), EnvError> {
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    bytes.extend(frame.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(|e| EnvError::Io(e.to_string()))
}
