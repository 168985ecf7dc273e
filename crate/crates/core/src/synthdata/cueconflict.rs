//! Grayscale images whose outline comes from one class and whose surface
//! texture comes from another.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::formats::{load_tensor, save_tensor, write_csv, Table};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_FILE: &str = "images.jtns";
pub const LABELS_FILE: &str = "labels.csv";
pub const IMPORTANCE_FILE: &str = "importance.jtns";

pub const SHAPE_NAMES: [&str; 6] = ["disk", "square", "triangle", "cross", "ring", "diamond"];
pub const TEXTURE_NAMES: [&str; 6] = ["hstripes", "vstripes", "checker", "dots", "diagonal", "antidiagonal"];

const BACKGROUND: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CueConflictSet {
    /// `N×1×H×W`, values in `[-1, 1]`.
    pub images: Tensor,
    pub shape_labels: Vec<usize>,
    pub texture_labels: Vec<usize>,
    pub congruent: Vec<bool>,
    /// `N×H×W` reference importance: the outline band of each shape.
    pub importance: Tensor,
    pub num_classes: usize,
}

impl CueConflictSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.shape_labels.len();
        if self.images.ndim() != 4 || self.images.rows() != n || self.images.shape()[1] != 1 {
            return Err(Error::Dimension(format!("cue-conflict images must be N×1×H×W, got {:?}", self.images.shape())));
        }
        let (h, w) = (self.images.shape()[2], self.images.shape()[3]);
        if self.importance.shape() != [n, h, w] {
            return Err(Error::Dimension(format!("importance maps {:?} do not match images", self.importance.shape())));
        }
        if self.texture_labels.len() != n || self.congruent.len() != n {
            return Err(Error::Dimension("label columns differ in length".into()));
        }
        for i in 0..n {
            let (s, t) = (self.shape_labels[i], self.texture_labels[i]);
            if s >= self.num_classes || t >= self.num_classes {
                return Err(Error::Label { label: s.max(t), classes: self.num_classes });
            }
            if self.congruent[i] != (s == t) {
                return Err(Error::Format(format!("image {i}: congruency flag disagrees with its labels")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.shape_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape_labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.images.shape()[2]
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            images: self.images.select_rows(idx),
            shape_labels: idx.iter().map(|&i| self.shape_labels[i]).collect(),
            texture_labels: idx.iter().map(|&i| self.texture_labels[i]).collect(),
            congruent: idx.iter().map(|&i| self.congruent[i]).collect(),
            importance: self.importance.select_rows(idx),
            num_classes: self.num_classes,
        }
    }

    pub fn congruent_subset(&self) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.congruent[i]).collect();
        self.select(&idx)
    }

    pub fn conflict_subset(&self) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| !self.congruent[i]).collect();
        self.select(&idx)
    }

    /// Congruent images as a labeled training set.
    pub fn training_set(&self) -> Result<Dataset> {
        let c = self.congruent_subset();
        Dataset::new(c.images, c.shape_labels, self.num_classes)
    }

    /// Writes `images.jtns`, `importance.jtns` and `labels.csv`
    /// (`image_id,shape_label,texture_label,congruent`).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let ip = dir.join(IMAGES_FILE);
        save_tensor(&ip, &self.images)?;
        let mp = dir.join(IMPORTANCE_FILE);
        save_tensor(&mp, &self.importance)?;
        let lp = dir.join(LABELS_FILE);
        let rows = (0..self.len()).map(|i| {
            vec![
                i.to_string(),
                self.shape_labels[i].to_string(),
                self.texture_labels[i].to_string(),
                u8::from(self.congruent[i]).to_string(),
            ]
        });
        write_csv(&lp, &["image_id", "shape_label", "texture_label", "congruent"], rows)?;
        Ok(vec![ip, mp, lp])
    }

    /// Loads a saved set. The class count is the largest label plus one
    /// unless `num_classes` is given.
    pub fn load(dir: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Self> {
        let dir = dir.as_ref();
        let images = load_tensor(dir.join(IMAGES_FILE))?;
        let importance = load_tensor(dir.join(IMPORTANCE_FILE))?;
        let t = Table::read(dir.join(LABELS_FILE))?;
        let id_col = t.column("image_id")?;
        for r in 0..t.len() {
            let id: usize = t.get(r, id_col)?;
            if id != r {
                return Err(t.row_error(r, format!("expected image_id {r}, found {id}")));
            }
        }
        let shape_labels: Vec<usize> = t.parse_column("shape_label")?;
        let texture_labels: Vec<usize> = t.parse_column("texture_label")?;
        let flags: Vec<u8> = t.parse_column("congruent")?;
        let inferred = shape_labels.iter().chain(&texture_labels).max().map_or(0, |m| m + 1);
        let set = Self {
            images,
            shape_labels,
            texture_labels,
            congruent: flags.iter().map(|&f| f != 0).collect(),
            importance,
            num_classes: num_classes.unwrap_or(inferred),
        };
        set.validate()?;
        Ok(set)
    }
}

/// Membership test for shape `k` in coordinates normalized to the shape's
/// bounding radius.
fn inside(k: usize, u: f64, v: f64) -> bool {
    match k {
        0 => u * u + v * v <= 1.0,
        1 => u.abs().max(v.abs()) <= 0.8,
        2 => (-0.8..=0.8).contains(&v) && u.abs() <= 0.55 * (v + 0.8),
        3 => (u.abs() <= 0.3 && v.abs() <= 0.95) || (v.abs() <= 0.3 && u.abs() <= 0.95),
        4 => {
            let r2 = u * u + v * v;
            (0.3..=1.0).contains(&r2)
        }
        _ => u.abs() + v.abs() <= 1.0,
    }
}

fn texture_on(k: usize, i: usize, j: usize, phase: (usize, usize)) -> bool {
    let (a, b) = (i + phase.0, j + phase.1);
    match k {
        0 => (a / 2) % 2 == 0,
        1 => (b / 2) % 2 == 0,
        2 => ((a / 2) + (b / 2)) % 2 == 0,
        3 => a % 4 < 2 && b % 4 < 2 && (a % 4 == 0 || b % 4 == 0),
        4 => ((a + b) / 2) % 2 == 0,
        _ => ((a + 64 - b % 64) / 2) % 2 == 0,
    }
}

struct Rendered {
    pixels: Vec<f64>,
    importance: Vec<f64>,
}

fn render<R: Rng + ?Sized>(shape: usize, texture: usize, size: usize, rng: &mut R) -> Rendered {
    let s = size as f64;
    let radius = s * rng.random_range(0.36..0.44);
    let cx = s / 2.0 + rng.random_range(-0.06..0.06) * s;
    let cy = s / 2.0 + rng.random_range(-0.06..0.06) * s;
    let phase = (rng.random_range(0..4), rng.random_range(0..4));
    let mut mask = vec![false; size * size];
    for i in 0..size {
        for j in 0..size {
            let v = (i as f64 + 0.5 - cy) / radius;
            let u = (j as f64 + 0.5 - cx) / radius;
            mask[i * size + j] = inside(shape, u, v);
        }
    }
    let mut pixels = vec![BACKGROUND; size * size];
    for i in 0..size {
        for j in 0..size {
            if mask[i * size + j] {
                let base = if texture_on(texture, i, j, phase) { 0.9 } else { 0.1 };
                pixels[i * size + j] = base + rng.random_range(-0.1..0.1);
            }
        }
    }
    let mut importance = vec![0.0; size * size];
    for i in 0..size {
        for j in 0..size {
            let m = mask[i * size + j];
            let mut edge = false;
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                let nm = ni >= 0 && nj >= 0 && (ni as usize) < size && (nj as usize) < size && mask[ni as usize * size + nj as usize];
                edge |= nm != m;
            }
            importance[i * size + j] = if edge { 1.0 } else if m { 0.2 } else { 0.0 };
        }
    }
    Rendered { pixels, importance }
}

/// `n_congruent` images cycling through `(i, i)` and `n_conflict` images
/// cycling through the ordered pairs `(i, j)`, `i != j`.
pub fn gen_cue_conflict(classes: usize, size: usize, n_congruent: usize, n_conflict: usize, seed: u64) -> Result<CueConflictSet> {
    if !(3..=6).contains(&classes) {
        return Err(Error::Config(format!("cue-conflict sets support 3 to 6 classes, got {classes}")));
    }
    if size < 16 {
        return Err(Error::Config(format!("image size must be at least 16, got {size}")));
    }
    let pairs: Vec<(usize, usize)> =
        (0..classes).flat_map(|i| (0..classes).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_congruent + n_conflict;
    let mut images = Vec::with_capacity(n * size * size);
    let mut importance = Vec::with_capacity(n * size * size);
    let (mut shape_labels, mut texture_labels, mut congruent) = (Vec::new(), Vec::new(), Vec::new());
    for idx in 0..n {
        let (s, t) = if idx < n_congruent { (idx % classes, idx % classes) } else { pairs[(idx - n_congruent) % pairs.len()] };
        let r = render(s, t, size, &mut rng);
        images.extend(r.pixels);
        importance.extend(r.importance);
        shape_labels.push(s);
        texture_labels.push(t);
        congruent.push(s == t);
    }
    if n == 0 {
        return Err(Error::Config("cue-conflict set needs at least one image".into()));
    }
    let set = CueConflictSet {
        images: Tensor::new(vec![n, 1, size, size], images)?,
        shape_labels,
        texture_labels,
        congruent,
        importance: Tensor::new(vec![n, size, size], importance)?,
        num_classes: classes,
    };
    set.validate()?;
    Ok(set)
}
