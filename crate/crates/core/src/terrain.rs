//! One-dimensional height fields for the planar world and the height scan
//! observation.
//!
//! Every generated field starts with a flat spawn zone of [`SPAWN_ZONE`]
//! metres. Difficulty scales heights linearly while the random layout for a
//! seed stays fixed, so amplitude never shrinks as difficulty grows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLE_SPACING: f64 = 0.02;
pub const SPAWN_ZONE: f64 = 2.0;
pub const SCAN_POINTS: usize = 11;
pub const SCAN_STEP: f64 = 0.1;

pub const STAIR_RUN: f64 = 0.30;
pub const WAVE_PERIOD: f64 = 1.5;
pub const STONE_WIDTH: f64 = 0.35;
pub const MAX_STONE_GAP: f64 = 0.10;
pub const GAP_DEPTH: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    UniformNoise,
    Wave,
    SteppingStones,
    Slope,
    Stairs,
    Obstacles,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 7] = [
        TerrainKind::Flat,
        TerrainKind::UniformNoise,
        TerrainKind::Wave,
        TerrainKind::SteppingStones,
        TerrainKind::Slope,
        TerrainKind::Stairs,
        TerrainKind::Obstacles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TerrainKind::Flat => "flat",
            TerrainKind::UniformNoise => "uniform_noise",
            TerrainKind::Wave => "wave",
            TerrainKind::SteppingStones => "stepping_stones",
            TerrainKind::Slope => "slope",
            TerrainKind::Stairs => "stairs",
            TerrainKind::Obstacles => "obstacles",
        }
    }
}

impl fmt::Display for TerrainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TerrainKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown terrain kind `{s}`")))
    }
}

pub fn noise_amplitude(difficulty: f64) -> f64 {
    0.03 + 0.07 * difficulty
}

pub fn wave_amplitude(difficulty: f64) -> f64 {
    0.05 + 0.10 * difficulty
}

pub fn stair_rise(difficulty: f64) -> f64 {
    0.05 + 0.10 * difficulty
}

pub fn obstacle_height(difficulty: f64) -> f64 {
    0.05 + 0.10 * difficulty
}

/// Rise over run of the slope terrain.
pub fn slope_grade(difficulty: f64) -> f64 {
    0.05 + 0.25 * difficulty
}

pub fn stone_gap(difficulty: f64) -> f64 {
    (0.02 + 0.08 * difficulty).min(MAX_STONE_GAP)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    spacing: f64,
    samples: Vec<f64>,
    pub kind: TerrainKind,
    pub difficulty: f64,
    pub seed: u64,
}

impl HeightField {
    /// Samples start at x = 0.
    pub fn from_samples(spacing: f64, samples: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || samples.is_empty() {
            return Err(Error::Config("height field needs spacing > 0 and samples".into()));
        }
        if samples.iter().any(|h| !h.is_finite()) {
            return Err(Error::Numeric("non-finite terrain sample".into()));
        }
        Ok(HeightField { spacing, samples, kind: TerrainKind::Flat, difficulty: 0.0, seed: 0 })
    }

    pub fn flat(length: f64) -> Self {
        generate_terrain(TerrainKind::Flat, 0.0, 0, length).expect("flat terrain is always valid")
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn length(&self) -> f64 {
        self.spacing * (self.samples.len() - 1) as f64
    }

    pub fn height_at(&self, x: f64) -> f64 {
        height_at(self, x)
    }

    /// dh/dx of the interpolant; zero outside the grid.
    pub fn slope_at(&self, x: f64) -> f64 {
        let n = self.samples.len();
        if n < 2 || !(x > 0.0) || x >= self.length() {
            return 0.0;
        }
        let i = ((x / self.spacing) as usize).min(n - 2);
        (self.samples[i + 1] - self.samples[i]) / self.spacing
    }

    pub fn max_abs_height(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, h| m.max(h.abs()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,height")?;
        for (i, h) in self.samples.iter().enumerate() {
            writeln!(w, "{},{}", i as f64 * self.spacing, h)?;
        }
        Ok(())
    }
}

/// Piecewise-linear lookup, clamped to the end samples.
pub fn height_at(field: &HeightField, x: f64) -> f64 {
    let s = &field.samples;
    if !(x > 0.0) {
        return s[0];
    }
    let u = x / field.spacing;
    let i = u.floor() as usize;
    if i + 1 >= s.len() {
        return s[s.len() - 1];
    }
    let t = u - i as f64;
    s[i] + t * (s[i + 1] - s[i])
}

/// Heights of the base above the terrain at `base_x - 0.5 .. base_x + 0.5`.
pub fn height_scan(field: &HeightField, base_x: f64, base_z: f64) -> [f64; SCAN_POINTS] {
    let mut out = [0.0; SCAN_POINTS];
    let half = (SCAN_POINTS / 2) as f64;
    for (k, v) in out.iter_mut().enumerate() {
        let x = base_x + (k as f64 - half) * SCAN_STEP;
        *v = base_z - height_at(field, x);
    }
    out
}

pub fn generate_terrain(kind: TerrainKind, difficulty: f64, seed: u64, length: f64) -> Result<HeightField> {
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(Error::Config(format!("difficulty {difficulty} outside [0, 1]")));
    }
    if !(length > 0.0) {
        return Err(Error::Config("terrain length must be positive".into()));
    }
    let n = (length / SAMPLE_SPACING).ceil() as usize + 1;
    let xs = (0..n).map(|i| i as f64 * SAMPLE_SPACING);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = difficulty;
    let samples: Vec<f64> = match kind {
        TerrainKind::Flat => vec![0.0; n],
        TerrainKind::UniformNoise => {
            // one random level per 0.1 m cell, fixed per seed
            let cells = (length / 0.1).ceil() as usize + 2;
            let unit: Vec<f64> = (0..cells).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let a = noise_amplitude(d);
            xs.map(|x| if x < SPAWN_ZONE { 0.0 } else { a * unit[((x - SPAWN_ZONE) / 0.1) as usize] })
                .collect()
        }
        TerrainKind::Wave => {
            let a = wave_amplitude(d);
            xs.map(|x| {
                if x < SPAWN_ZONE {
                    0.0
                } else {
                    a * (std::f64::consts::TAU * (x - SPAWN_ZONE) / WAVE_PERIOD).sin()
                }
            })
            .collect()
        }
        TerrainKind::SteppingStones => {
            let gap = stone_gap(d);
            let pitch = STONE_WIDTH + gap;
            let jitter: Vec<f64> = (0..(length / pitch) as usize + 2)
                .map(|_| rng.gen_range(-0.01..0.01))
                .collect();
            xs.map(|x| {
                if x < SPAWN_ZONE {
                    return 0.0;
                }
                let k = ((x - SPAWN_ZONE) / pitch) as usize;
                let local = x - SPAWN_ZONE - k as f64 * pitch;
                if local < STONE_WIDTH {
                    jitter[k] * d
                } else {
                    -GAP_DEPTH
                }
            })
            .collect()
        }
        TerrainKind::Slope => {
            let grade = slope_grade(d);
            let leg = 3.0;
            xs.map(|x| {
                if x < SPAWN_ZONE {
                    return 0.0;
                }
                // triangle profile: up for `leg` metres, then down
                let u = (x - SPAWN_ZONE) % (2.0 * leg);
                grade * if u < leg { u } else { 2.0 * leg - u }
            })
            .collect()
        }
        TerrainKind::Stairs => {
            let rise = stair_rise(d);
            let flight = 8usize;
            xs.map(|x| {
                if x < SPAWN_ZONE {
                    return 0.0;
                }
                let k = ((x - SPAWN_ZONE) / STAIR_RUN).floor() as usize;
                let cycle = k % (2 * flight);
                let level = if cycle < flight { cycle + 1 } else { 2 * flight - cycle - 1 };
                rise * level as f64
            })
            .collect()
        }
        TerrainKind::Obstacles => {
            let hmax = obstacle_height(d);
            let mut blocks = Vec::new();
            let mut x = SPAWN_ZONE + rng.gen_range(0.2..0.8);
            while x < length {
                let width = rng.gen_range(0.2..0.5);
                let unit = rng.gen_range(0.2..1.0);
                blocks.push((x, x + width, unit));
                x += width + rng.gen_range(0.5..1.5);
            }
            xs.map(|x| {
                blocks
                    .iter()
                    .find(|(a, b, _)| x >= *a && x < *b)
                    .map_or(0.0, |(_, _, u)| u * hmax)
            })
            .collect()
        }
    };
    Ok(HeightField { spacing: SAMPLE_SPACING, samples, kind, difficulty, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_is_zero_everywhere() {
        for d in [0.0, 0.5, 1.0] {
            let f = generate_terrain(TerrainKind::Flat, d, 3, 10.0).unwrap();
            assert!(f.samples().iter().all(|h| *h == 0.0));
            assert_eq!(height_at(&f, -4.0), 0.0);
            assert_eq!(height_at(&f, 3.33), 0.0);
        }
    }

    #[test]
    fn linear_interpolation_and_clamp() {
        let f = HeightField::from_samples(0.1, vec![0.0, 0.1]).unwrap();
        assert!((height_at(&f, 0.05) - 0.05).abs() < 1e-15);
        assert_eq!(height_at(&f, 7.0), 0.1);
        assert_eq!(height_at(&f, -1.0), 0.0);
    }

    #[test]
    fn stairs_have_declared_rise_and_run() {
        for d in [0.0, 0.3, 1.0] {
            let f = generate_terrain(TerrainKind::Stairs, d, 1, 12.0).unwrap();
            let rise = stair_rise(d);
            // sample the middle of each tread on the way up
            for k in 0..8 {
                let x = SPAWN_ZONE + (k as f64 + 0.5) * STAIR_RUN;
                let h = height_at(&f, x);
                assert!((h - rise * (k + 1) as f64).abs() < 1e-12, "d={d} k={k} h={h}");
            }
            // tread length: height constant across the tread interior
            let x0 = SPAWN_ZONE + 2.0 * STAIR_RUN + 0.03;
            let x1 = SPAWN_ZONE + 3.0 * STAIR_RUN - 0.03;
            assert_eq!(height_at(&f, x0), height_at(&f, x1));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in TerrainKind::ALL {
            let a = generate_terrain(kind, 0.7, 42, 15.0).unwrap();
            let b = generate_terrain(kind, 0.7, 42, 15.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn amplitude_monotone_in_difficulty() {
        for kind in TerrainKind::ALL {
            let mut prev = -1.0;
            for i in 0..=10 {
                let f = generate_terrain(kind, i as f64 / 10.0, 9, 20.0).unwrap();
                let amp = f.max_abs_height();
                assert!(amp + 1e-12 >= prev, "{kind}: {amp} < {prev}");
                prev = amp;
            }
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        assert!(generate_terrain(TerrainKind::Wave, 1.5, 0, 10.0).is_err());
        assert!(generate_terrain(TerrainKind::Wave, 0.5, 0, 0.0).is_err());
        assert!("lava".parse::<TerrainKind>().is_err());
        assert_eq!("stairs".parse::<TerrainKind>().unwrap(), TerrainKind::Stairs);
    }

    #[test]
    fn flat_scan_is_base_height() {
        let f = HeightField::flat(10.0);
        assert_eq!(height_scan(&f, 3.0, 0.4), [0.4; SCAN_POINTS]);
    }

    #[test]
    fn scan_sees_step_ahead() {
        // step of 0.1 m at x = 1.25, base at x = 1.0
        let samples = (0..301).map(|i| if i as f64 * 0.01 >= 1.25 { 0.1 } else { 0.0 }).collect();
        let f = HeightField::from_samples(0.01, samples).unwrap();
        let scan = height_scan(&f, 1.0, 0.4);
        for (k, v) in scan.iter().enumerate() {
            let expect = if k >= 8 { 0.3 } else { 0.4 };
            assert!((v - expect).abs() < 1e-12, "entry {k}: {v}");
        }
    }

    #[test]
    fn scan_is_translation_covariant() {
        let base: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin() * 0.05).collect();
        let f = HeightField::from_samples(0.02, base.clone()).unwrap();
        let shifted: Vec<f64> = std::iter::repeat_n(0.0, 50).chain(base.iter().map(|h| h + 0.2)).collect();
        let g = HeightField::from_samples(0.02, shifted).unwrap();
        let a = height_scan(&f, 3.0, 0.5);
        let b = height_scan(&g, 4.0, 0.7);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_export_has_one_row_per_sample() {
        let f = generate_terrain(TerrainKind::Wave, 0.5, 1, 4.0).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), f.samples().len() + 1);
    }
}
