//! Shaded bumpy surfaces with gloss, lighting and relief attributes and a
//! graded gloss rating, for linear-probe evaluation.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::formats::{load_tensor, save_tensor, write_csv, Table};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PROBE_IMAGES_FILE: &str = "probe_images.jtns";
pub const PROBE_ATTRS_FILE: &str = "probe_attributes.csv";
pub const LIGHTINGS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeAttributes {
    /// High (true) or low gloss.
    pub gloss: bool,
    /// Light azimuth index in `0..6`.
    pub lighting: usize,
    /// Bump height.
    pub relief: f64,
    /// Graded gloss rating in `[1, 6]`.
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    /// `N×1×S×S`.
    pub images: Tensor,
    pub attributes: Vec<ProbeAttributes>,
}

impl ProbeSet {
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn gloss_labels(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| usize::from(a.gloss)).collect()
    }

    pub fn lighting_labels(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.lighting).collect()
    }

    pub fn reliefs(&self) -> Vec<f64> {
        self.attributes.iter().map(|a| a.relief).collect()
    }

    pub fn ratings(&self) -> Vec<f64> {
        self.attributes.iter().map(|a| a.rating).collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let ip = dir.join(PROBE_IMAGES_FILE);
        save_tensor(&ip, &self.images)?;
        let ap = dir.join(PROBE_ATTRS_FILE);
        write_csv(
            &ap,
            &["stimulus_id", "gloss", "lighting", "relief", "rating"],
            self.attributes.iter().enumerate().map(|(i, a)| {
                vec![i.to_string(), u8::from(a.gloss).to_string(), a.lighting.to_string(), a.relief.to_string(), a.rating.to_string()]
            }),
        )?;
        Ok(vec![ip, ap])
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let images = load_tensor(dir.join(PROBE_IMAGES_FILE))?;
        let t = Table::read(dir.join(PROBE_ATTRS_FILE))?;
        let gloss: Vec<u8> = t.parse_column("gloss")?;
        let lighting: Vec<usize> = t.parse_column("lighting")?;
        let relief: Vec<f64> = t.parse_column("relief")?;
        let rating: Vec<f64> = t.parse_column("rating")?;
        if images.rows() != t.len() {
            return Err(Error::Dimension(format!("{} probe images but {} attribute rows", images.rows(), t.len())));
        }
        let attributes = (0..t.len())
            .map(|i| ProbeAttributes { gloss: gloss[i] != 0, lighting: lighting[i], relief: relief[i], rating: rating[i] })
            .collect();
        Ok(Self { images, attributes })
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn render<R: Rng + ?Sized>(size: usize, gloss: f64, lighting: usize, relief: f64, rng: &mut R) -> Vec<f64> {
    let s = size as f64;
    let bumps: Vec<(f64, f64, f64)> =
        (0..3).map(|_| (rng.random_range(0.2..0.8) * s, rng.random_range(0.2..0.8) * s, rng.random_range(0.12..0.25) * s)).collect();
    let height = |y: f64, x: f64| -> f64 {
        relief * s * 0.15 * bumps.iter().map(|(by, bx, w)| (-((y - by).powi(2) + (x - bx).powi(2)) / (2.0 * w * w)).exp()).sum::<f64>()
    };
    let az = std::f64::consts::TAU * lighting as f64 / LIGHTINGS as f64;
    let light = normalize([az.cos(), az.sin(), 1.0]);
    let half = normalize([light[0], light[1], light[2] + 1.0]);
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
            let dx = (height(y, x + 0.5) - height(y, x - 0.5)).clamp(-5.0, 5.0);
            let dy = (height(y + 0.5, x) - height(y - 0.5, x)).clamp(-5.0, 5.0);
            let n = normalize([-dx, -dy, 1.0]);
            let diffuse = dot(n, light).max(0.0);
            let specular = gloss * dot(n, half).max(0.0).powi(24);
            out.push(2.0 * (0.7 * diffuse + specular).clamp(0.0, 1.0) - 1.0);
        }
    }
    out
}

/// `n` stimuli of `size × size` pixels. The rating is a noisy monotone
/// function of the latent gloss strength.
pub fn gen_probeset(n: usize, size: usize, seed: u64) -> Result<ProbeSet> {
    if n < 2 || size < 4 {
        return Err(Error::Config("probe set needs at least 2 stimuli of size 4 or more".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * size * size);
    let mut attributes = Vec::with_capacity(n);
    for _ in 0..n {
        let g: f64 = rng.random();
        let lighting = rng.random_range(0..LIGHTINGS);
        let relief = rng.random_range(0.2..1.0);
        data.extend(render(size, g, lighting, relief, &mut rng));
        let noise: f64 = rng.sample(StandardNormal);
        let rating = (1.0 + 5.0 * g + 0.3 * noise).clamp(1.0, 6.0);
        attributes.push(ProbeAttributes { gloss: g > 0.5, lighting, relief, rating });
    }
    Ok(ProbeSet { images: Tensor::new(vec![n, 1, size, size], data)?, attributes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attributes_in_range() {
        let p = gen_probeset(50, 16, 3).unwrap();
        assert!(p.attributes.iter().all(|a| a.lighting < LIGHTINGS && (1.0..=6.0).contains(&a.rating)));
        assert!(p.images.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(p, gen_probeset(50, 16, 3).unwrap());
    }

    #[test]
    fn gloss_brightens_highlights() {
        let mut r1 = ChaCha8Rng::seed_from_u64(0);
        let mut r2 = ChaCha8Rng::seed_from_u64(0);
        let dull = render(16, 0.0, 0, 0.8, &mut r1);
        let shiny = render(16, 1.0, 0, 0.8, &mut r2);
        assert!(shiny.iter().sum::<f64>() > dull.iter().sum::<f64>());
    }
}
