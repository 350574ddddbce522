//! Small generated datasets for smoke tests and desk-scale training.

use fut_core::{Error, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::images::ImageSample;
use crate::windows::WindowSample;

/// Windows of standard normal features whose target is a fixed linear
/// functional of the window plus Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearWindows {
    pub samples: usize,
    pub window: usize,
    pub features: usize,
    pub outputs: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_noise() -> f64 {
    0.05
}

impl LinearWindows {
    /// `(window * features, outputs)` weights, scaled so each target has unit
    /// variance before noise.
    pub fn weights(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_ba5e);
        let d = self.window * self.features;
        let raw: Vec<f64> = (0..d * self.outputs).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut w = raw.clone();
        for o in 0..self.outputs {
            let norm = (0..d).map(|i| raw[i * self.outputs + o].powi(2)).sum::<f64>().sqrt();
            for i in 0..d {
                w[i * self.outputs + o] = raw[i * self.outputs + o] / norm;
            }
        }
        w
    }

    pub fn generate(&self, seed: u64) -> Result<Vec<WindowSample>> {
        if self.samples == 0 || self.window == 0 || self.features == 0 || self.outputs == 0 {
            return Err(Error::Config("synthetic windows need non-zero sizes".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        let w = self.weights(seed);
        let d = self.window * self.features;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.samples)
            .map(|start| {
                let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let y: Vec<f64> = (0..self.outputs)
                    .map(|o| {
                        let clean: f64 = x.iter().enumerate().map(|(i, v)| v * w[i * self.outputs + o]).sum();
                        clean + self.noise * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                    })
                    .collect();
                Ok(WindowSample {
                    start,
                    x: Tensor::new([self.window, self.features], x)?,
                    y: Tensor::new([1, self.outputs], y)?,
                })
            })
            .collect()
    }
}

const PALETTE: [[f64; 3]; 4] = [[0.9, 0.1, 0.1], [0.1, 0.9, 0.1], [0.1, 0.1, 0.9], [0.9, 0.9, 0.1]];
const BACKGROUND: f64 = 0.2;

/// Images where class `c` lights quadrant `c` (row-major) in its own colour
/// over a grey background, with uniform pixel noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadrantImages {
    pub samples: usize,
    pub size: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_classes() -> usize {
    4
}

impl QuadrantImages {
    pub fn generate(&self, seed: u64) -> Result<Vec<ImageSample>> {
        if !(1..=4).contains(&self.classes) || self.size < 2 || self.samples == 0 {
            return Err(Error::Config(format!(
                "quadrant images need 1 to 4 classes, size ≥ 2 and samples ≥ 1 (got {}, {}, {})",
                self.classes, self.size, self.samples
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.size;
        let half = s / 2;
        (0..self.samples)
            .map(|i| {
                let label = i % self.classes;
                let (qr, qc) = (label / 2, label % 2);
                let mut data = Vec::with_capacity(s * s * 3);
                for r in 0..s {
                    for c in 0..s {
                        let lit = (r >= half) as usize == qr && (c >= half) as usize == qc;
                        for &tint in &PALETTE[label] {
                            let base = if lit { tint } else { BACKGROUND };
                            let jitter = if self.noise > 0.0 {
                                rng.gen_range(-self.noise..self.noise)
                            } else {
                                0.0
                            };
                            data.push((base + jitter).clamp(0.0, 1.0));
                        }
                    }
                }
                Ok(ImageSample {
                    pixels: Tensor::new([s, s, 3], data)?,
                    label,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_targets_follow_the_weights() {
        let task = LinearWindows {
            samples: 50,
            window: 3,
            features: 2,
            outputs: 2,
            noise: 0.0,
        };
        let w = task.weights(7);
        for s in task.generate(7).unwrap() {
            for o in 0..2 {
                let expected: f64 = s.x.data().iter().enumerate().map(|(i, v)| v * w[i * 2 + o]).sum();
                assert!((s.y.data()[o] - expected).abs() < 1e-12);
            }
        }
        assert_eq!(task.generate(7).unwrap(), task.generate(7).unwrap());
    }

    #[test]
    fn quadrant_images_are_balanced_and_in_range() {
        let imgs = QuadrantImages {
            samples: 12,
            size: 8,
            classes: 4,
            noise: 0.05,
        }
        .generate(1)
        .unwrap();
        for class in 0..4 {
            assert_eq!(imgs.iter().filter(|s| s.label == class).count(), 3);
        }
        for s in &imgs {
            assert_eq!(s.pixels.dims(), &[8, 8, 3]);
            assert!(s.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        // class 3 lights the bottom-right quadrant yellow
        let px = imgs[3].pixels.get(&[6, 6, 0]).unwrap();
        assert!(px > 0.8);
        assert!(imgs[3].pixels.get(&[1, 1, 0]).unwrap() < 0.3);
    }
}
