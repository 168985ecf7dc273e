//! Smooth reference patches with graded noise and blur distortions.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::formats::{load_tensor, save_tensor, write_csv, Table};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const REFS_FILE: &str = "refs.jtns";
pub const TRIPLET_A_FILE: &str = "triplet_a.jtns";
pub const TRIPLET_B_FILE: &str = "triplet_b.jtns";
pub const TRIPLETS_FILE: &str = "triplets.csv";
pub const PAIRS_IMAGES_FILE: &str = "pairs.jtns";
pub const PAIRS_FILE: &str = "pairs.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distortion {
    /// Additive Gaussian noise with std equal to the magnitude.
    Noise,
    /// Gaussian blur with sigma equal to twice the magnitude, in pixels.
    Blur,
}

impl Distortion {
    pub fn name(self) -> &'static str {
        match self {
            Distortion::Noise => "noise",
            Distortion::Blur => "blur",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "noise" => Some(Distortion::Noise),
            "blur" => Some(Distortion::Blur),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub reference: usize,
    pub kind: Distortion,
    pub magnitude_a: f64,
    pub magnitude_b: f64,
    /// 0 when candidate A is closer to the reference, 1 for B.
    pub choice: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair {
    pub reference: usize,
    pub kind: Distortion,
    pub magnitude: f64,
    pub same: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualSet {
    /// `R×1×S×S`.
    pub refs: Tensor,
    pub triplets: Vec<Triplet>,
    /// Candidate images, `T×1×S×S` each.
    pub triplet_a: Tensor,
    pub triplet_b: Tensor,
    pub pairs: Vec<Pair>,
    /// Distorted image of each pair, `P×1×S×S`.
    pub pair_images: Tensor,
}

/// Configuration beyond the reference count and distortion levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualConfig {
    pub size: usize,
    pub triplets_per_ref: usize,
    /// Pairs whose magnitude is below this are labeled "same".
    pub same_threshold: f64,
}

impl Default for PerceptualConfig {
    fn default() -> Self {
        Self { size: 16, triplets_per_ref: 4, same_threshold: 0.15 }
    }
}

fn smooth_patch<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let fx = rng.random_range(0.5..2.5);
            let fy = rng.random_range(0.5..2.5);
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(0.2..0.5);
            (fx, fy, ph, amp)
        })
        .collect();
    let s = size as f64;
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (y, x) = (i as f64 / s, j as f64 / s);
            let v: f64 = waves.iter().map(|(fx, fy, ph, a)| a * (std::f64::consts::TAU * (fx * x + fy * y) + ph).sin()).sum();
            out.push(v.clamp(-1.0, 1.0));
        }
    }
    out
}

fn gaussian_blur(img: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return img.to_vec();
    }
    let r = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for i in 0..size {
            for j in 0..size {
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (k, w) in kernel.iter().enumerate() {
                    let d = k as i64 - r;
                    let (ii, jj) = if horizontal { (i as i64, j as i64 + d) } else { (i as i64 + d, j as i64) };
                    if ii >= 0 && jj >= 0 && (ii as usize) < size && (jj as usize) < size {
                        acc += w * src[ii as usize * size + jj as usize];
                        wsum += w;
                    }
                }
                dst[i * size + j] = acc / wsum;
            }
        }
        dst
    };
    pass(&pass(img, true), false)
}

/// Applies one distortion; magnitude 0 returns the input unchanged.
pub fn distort<R: Rng + ?Sized>(img: &[f64], size: usize, kind: Distortion, magnitude: f64, rng: &mut R) -> Vec<f64> {
    if magnitude == 0.0 {
        return img.to_vec();
    }
    match kind {
        Distortion::Noise => {
            img.iter().map(|v| (v + magnitude * rng.sample::<f64, _>(StandardNormal)).clamp(-1.0, 1.0)).collect()
        }
        Distortion::Blur => gaussian_blur(img, size, 2.0 * magnitude),
    }
}

pub fn gen_perceptual(refs: usize, levels: &[f64], seed: u64) -> Result<PerceptualSet> {
    gen_perceptual_with(refs, levels, &PerceptualConfig::default(), seed)
}

/// Per reference: `triplets_per_ref` triplets over two distinct levels (in
/// random A/B order) and one pair per level.
pub fn gen_perceptual_with(refs: usize, levels: &[f64], cfg: &PerceptualConfig, seed: u64) -> Result<PerceptualSet> {
    if levels.len() < 2 {
        return Err(Error::Config("need at least two distortion levels".into()));
    }
    if levels.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        return Err(Error::Config("distortion levels must be finite and non-negative".into()));
    }
    let distinct: Vec<(usize, usize)> = (0..levels.len())
        .flat_map(|a| (a + 1..levels.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| levels[a] != levels[b])
        .collect();
    if distinct.is_empty() {
        return Err(Error::Config("distortion levels must not all be equal".into()));
    }
    if refs == 0 || cfg.size < 4 {
        return Err(Error::Config("need at least one reference of size 4 or more".into()));
    }
    let size = cfg.size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ref_data = Vec::new();
    let (mut a_data, mut b_data, mut p_data) = (Vec::new(), Vec::new(), Vec::new());
    let (mut triplets, mut pairs) = (Vec::new(), Vec::new());
    for r in 0..refs {
        let patch = smooth_patch(size, &mut rng);
        for _ in 0..cfg.triplets_per_ref {
            let kind = if rng.random::<bool>() { Distortion::Noise } else { Distortion::Blur };
            let (la, lb) = distinct[rng.random_range(0..distinct.len())];
            let (ma, mb) = if rng.random::<bool>() { (levels[la], levels[lb]) } else { (levels[lb], levels[la]) };
            a_data.extend(distort(&patch, size, kind, ma, &mut rng));
            b_data.extend(distort(&patch, size, kind, mb, &mut rng));
            triplets.push(Triplet { reference: r, kind, magnitude_a: ma, magnitude_b: mb, choice: usize::from(mb < ma) });
        }
        for &m in levels {
            let kind = if rng.random::<bool>() { Distortion::Noise } else { Distortion::Blur };
            p_data.extend(distort(&patch, size, kind, m, &mut rng));
            pairs.push(Pair { reference: r, kind, magnitude: m, same: m < cfg.same_threshold });
        }
        ref_data.extend(patch);
    }
    let shape = |n: usize| vec![n, 1, size, size];
    Ok(PerceptualSet {
        refs: Tensor::new(shape(refs), ref_data)?,
        triplet_a: Tensor::new(shape(triplets.len()), a_data)?,
        triplet_b: Tensor::new(shape(triplets.len()), b_data)?,
        triplets,
        pair_images: Tensor::new(shape(pairs.len()), p_data)?,
        pairs,
    })
}

impl PerceptualSet {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let mut out = Vec::new();
        for (name, t) in [
            (REFS_FILE, &self.refs),
            (TRIPLET_A_FILE, &self.triplet_a),
            (TRIPLET_B_FILE, &self.triplet_b),
            (PAIRS_IMAGES_FILE, &self.pair_images),
        ] {
            let p = dir.join(name);
            save_tensor(&p, t)?;
            out.push(p);
        }
        let tp = dir.join(TRIPLETS_FILE);
        write_csv(
            &tp,
            &["triplet_id", "ref_id", "kind", "magnitude_a", "magnitude_b", "choice"],
            self.triplets.iter().enumerate().map(|(i, t)| {
                vec![
                    i.to_string(),
                    t.reference.to_string(),
                    t.kind.name().to_string(),
                    t.magnitude_a.to_string(),
                    t.magnitude_b.to_string(),
                    t.choice.to_string(),
                ]
            }),
        )?;
        let pp = dir.join(PAIRS_FILE);
        write_csv(
            &pp,
            &["pair_id", "ref_id", "kind", "magnitude", "same"],
            self.pairs.iter().enumerate().map(|(i, p)| {
                vec![i.to_string(), p.reference.to_string(), p.kind.name().to_string(), p.magnitude.to_string(), u8::from(p.same).to_string()]
            }),
        )?;
        out.push(tp);
        out.push(pp);
        Ok(out)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let refs = load_tensor(dir.join(REFS_FILE))?;
        let triplet_a = load_tensor(dir.join(TRIPLET_A_FILE))?;
        let triplet_b = load_tensor(dir.join(TRIPLET_B_FILE))?;
        let pair_images = load_tensor(dir.join(PAIRS_IMAGES_FILE))?;
        let kind_of = |t: &Table, r: usize, c: usize| -> Result<Distortion> {
            let raw: String = t.get(r, c)?;
            Distortion::parse(&raw).ok_or_else(|| t.row_error(r, format!("unknown distortion `{raw}`")))
        };
        let t = Table::read(dir.join(TRIPLETS_FILE))?;
        let (rc, kc) = (t.column("ref_id")?, t.column("kind")?);
        let (ac, bc, cc) = (t.column("magnitude_a")?, t.column("magnitude_b")?, t.column("choice")?);
        let mut triplets = Vec::with_capacity(t.len());
        for r in 0..t.len() {
            let choice: usize = t.get(r, cc)?;
            if choice > 1 {
                return Err(t.row_error(r, "choice must be 0 or 1"));
            }
            triplets.push(Triplet {
                reference: t.get(r, rc)?,
                kind: kind_of(&t, r, kc)?,
                magnitude_a: t.get(r, ac)?,
                magnitude_b: t.get(r, bc)?,
                choice,
            });
        }
        let t = Table::read(dir.join(PAIRS_FILE))?;
        let (rc, kc, mc, sc) = (t.column("ref_id")?, t.column("kind")?, t.column("magnitude")?, t.column("same")?);
        let mut pairs = Vec::with_capacity(t.len());
        for r in 0..t.len() {
            let same: u8 = t.get(r, sc)?;
            pairs.push(Pair { reference: t.get(r, rc)?, kind: kind_of(&t, r, kc)?, magnitude: t.get(r, mc)?, same: same != 0 });
        }
        let set = Self { refs, triplets, triplet_a, triplet_b, pairs, pair_images };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let nr = self.refs.rows();
        if self.triplet_a.rows() != self.triplets.len() || self.triplet_b.rows() != self.triplets.len() {
            return Err(Error::Dimension("triplet images do not match the triplet table".into()));
        }
        if self.pair_images.rows() != self.pairs.len() {
            return Err(Error::Dimension("pair images do not match the pair table".into()));
        }
        for t in [&self.triplet_a, &self.triplet_b, &self.pair_images] {
            if t.shape()[1..] != self.refs.shape()[1..] {
                return Err(Error::Dimension("perceptual images differ in shape".into()));
            }
        }
        if self.triplets.iter().map(|t| t.reference).chain(self.pairs.iter().map(|p| p.reference)).any(|r| r >= nr) {
            return Err(Error::Format("reference id out of range".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_level_is_identity() {
        let s = gen_perceptual(3, &[0.0, 0.3], 1).unwrap();
        for (i, p) in s.pairs.iter().enumerate() {
            if p.magnitude == 0.0 {
                assert_eq!(s.pair_images.row(i), s.refs.row(p.reference));
                assert!(p.same);
            }
        }
    }

    #[test]
    fn smaller_magnitude_is_ground_truth() {
        let s = gen_perceptual(5, &[0.1, 0.5], 2).unwrap();
        for t in &s.triplets {
            let expect = if t.magnitude_a < t.magnitude_b { 0 } else { 1 };
            assert_eq!(t.choice, expect);
        }
        assert!(s.triplets.iter().any(|t| t.choice == 0) && s.triplets.iter().any(|t| t.choice == 1));
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = gen_perceptual(2, &[0.0, 0.2, 0.6], 7).unwrap();
        assert_eq!(a, gen_perceptual(2, &[0.0, 0.2, 0.6], 7).unwrap());
        assert!(a.triplet_a.data().iter().chain(a.pair_images.data()).all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn needs_two_levels() {
        assert!(gen_perceptual(2, &[0.1], 0).is_err());
        assert!(gen_perceptual(2, &[0.1, 0.1], 0).is_err());
    }

    #[test]
    fn blur_preserves_constant_image() {
        let img = vec![0.3; 64];
        let out = gaussian_blur(&img, 8, 1.5);
        assert!(out.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }
}
