//! Simulated observers. Soft labels are multinomial draws from the exact
//! Bayes posterior; categorical responses come from noisy Bayes classifiers.
//! Both are stand-ins in the shape of real multi-observer data, and say
//! nothing about real people.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::formats::{load_tensor, save_tensor, write_csv, Table};
use super::mixture::{LabeledPoints2D, MixtureSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SOFT_LABELS_FILE: &str = "soft_labels.csv";
pub const POSTERIOR_FILE: &str = "posterior.csv";
pub const STIMULI_FILE: &str = "stimuli.csv";
pub const STIMULI_INPUTS_FILE: &str = "stimuli.jtns";
pub const RESPONSES_FILE: &str = "responses.csv";

/// Per-stimulus response counts over `K` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelSet {
    pub ids: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
    /// Exact posterior rows when known.
    pub posterior: Option<Tensor>,
}

impl SoftLabelSet {
    pub fn new(ids: Vec<usize>, counts: Vec<Vec<u64>>, posterior: Option<Tensor>) -> Result<Self> {
        let s = Self { ids, counts, posterior };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() {
            return Err(Error::Format("soft-label set is empty".into()));
        }
        if self.ids.len() != self.counts.len() {
            return Err(Error::Dimension(format!("{} ids for {} count rows", self.ids.len(), self.counts.len())));
        }
        let k = self.counts[0].len();
        for (i, row) in self.counts.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Dimension(format!("count row {i} has {} classes, expected {k}", row.len())));
            }
            if row.iter().sum::<u64>() == 0 {
                return Err(Error::Undefined(format!("stimulus {} has no responses", self.ids[i])));
            }
        }
        if let Some(p) = &self.posterior {
            if p.shape() != [self.counts.len(), k] {
                return Err(Error::Dimension(format!("posterior shape {:?} does not match counts", p.shape())));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    /// Count rows normalized to distributions.
    pub fn distributions(&self) -> Tensor {
        let rows: Vec<Vec<f64>> = self
            .counts
            .iter()
            .map(|r| {
                let s = r.iter().sum::<u64>() as f64;
                r.iter().map(|&c| c as f64 / s).collect()
            })
            .collect();
        Tensor::from_rows(&rows).expect("count rows")
    }

    /// Writes `soft_labels.csv` and, if present, `posterior.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let k = self.num_classes();
        let mut header = vec!["stimulus_id".to_string()];
        header.extend((0..k).map(|c| format!("count_{c}")));
        let path = dir.join(SOFT_LABELS_FILE);
        let rows = self.ids.iter().zip(&self.counts).map(|(id, r)| {
            std::iter::once(id.to_string()).chain(r.iter().map(u64::to_string)).collect()
        });
        write_csv(&path, &header, rows)?;
        let mut out = vec![path];
        if let Some(p) = &self.posterior {
            let mut header = vec!["stimulus_id".to_string()];
            header.extend((0..k).map(|c| format!("p_{c}")));
            let path = dir.join(POSTERIOR_FILE);
            let rows = self.ids.iter().enumerate().map(|(i, id)| {
                std::iter::once(id.to_string()).chain(p.row(i).iter().map(f64::to_string)).collect()
            });
            write_csv(&path, &header, rows)?;
            out.push(path);
        }
        Ok(out)
    }

    /// Reads `soft_labels.csv`, plus `posterior.csv` when it exists.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let (ids, counts) = load_soft_labels(dir.join(SOFT_LABELS_FILE))?;
        let post_path = dir.join(POSTERIOR_FILE);
        let posterior = if post_path.exists() {
            let t = Table::read(&post_path)?;
            let id_col = t.column("stimulus_id")?;
            let cols = t.indexed_columns("p_")?;
            let mut rows = Vec::with_capacity(t.len());
            for r in 0..t.len() {
                let id: usize = t.get(r, id_col)?;
                if ids.get(r) != Some(&id) {
                    return Err(t.row_error(r, format!("stimulus {id} does not match the soft-label rows")));
                }
                rows.push(cols.iter().map(|&c| t.get(r, c)).collect::<Result<Vec<f64>>>()?);
            }
            Some(Tensor::from_rows(&rows)?)
        } else {
            None
        };
        Self::new(ids, counts, posterior)
    }
}

/// Reads a `stimulus_id,count_0..count_{K-1}` CSV.
pub fn load_soft_labels(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<Vec<u64>>)> {
    let t = Table::read(path)?;
    let ids: Vec<usize> = t.parse_column("stimulus_id")?;
    let cols = t.indexed_columns("count_")?;
    let mut counts = Vec::with_capacity(t.len());
    for r in 0..t.len() {
        counts.push(cols.iter().map(|&c| t.get(r, c)).collect::<Result<Vec<u64>>>()?);
    }
    Ok((ids, counts))
}

fn draw_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

/// `observers` independent posterior draws per point.
pub fn gen_soft_labels(points: &LabeledPoints2D, observers: usize, seed: u64) -> Result<SoftLabelSet> {
    if observers == 0 {
        return Err(Error::Config("need at least one observer".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = points.num_classes();
    let posterior = points.posteriors();
    let counts = (0..points.len())
        .map(|i| {
            let mut row = vec![0u64; k];
            for _ in 0..observers {
                row[draw_categorical(posterior.row(i), &mut rng)] += 1;
            }
            row
        })
        .collect();
    SoftLabelSet::new((0..points.len()).collect(), counts, Some(posterior))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stimulus {
    pub id: usize,
    pub condition: usize,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Response {
    pub observer: usize,
    pub stimulus: usize,
    pub response: usize,
}

/// Categorical responses of several observers to labeled stimuli grouped
/// into conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverResponses {
    pub stimuli: Vec<Stimulus>,
    pub responses: Vec<Response>,
}

impl ObserverResponses {
    pub fn new(stimuli: Vec<Stimulus>, responses: Vec<Response>) -> Result<Self> {
        let s = Self { stimuli, responses };
        s.validate()?;
        Ok(s)
    }

    /// Each observer answers each stimulus of a condition exactly once, or
    /// none of that condition.
    pub fn validate(&self) -> Result<()> {
        let mut by_id = BTreeMap::new();
        for s in &self.stimuli {
            if by_id.insert(s.id, s.condition).is_some() {
                return Err(Error::Alignment(format!("stimulus {} listed twice", s.id)));
            }
        }
        let mut per_condition: BTreeMap<usize, usize> = BTreeMap::new();
        for s in &self.stimuli {
            *per_condition.entry(s.condition).or_default() += 1;
        }
        let mut seen = BTreeSet::new();
        let mut answered: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for r in &self.responses {
            let cond = *by_id
                .get(&r.stimulus)
                .ok_or_else(|| Error::Alignment(format!("response to unknown stimulus {}", r.stimulus)))?;
            if !seen.insert((r.observer, r.stimulus)) {
                return Err(Error::Alignment(format!("observer {} answered stimulus {} twice", r.observer, r.stimulus)));
            }
            *answered.entry((r.observer, cond)).or_default() += 1;
        }
        for ((obs, cond), n) in answered {
            if n != per_condition[&cond] {
                return Err(Error::Alignment(format!(
                    "observer {obs} answered {n} of {} stimuli in condition {cond}",
                    per_condition[&cond]
                )));
            }
        }
        Ok(())
    }

    pub fn observers(&self) -> Vec<usize> {
        self.responses.iter().map(|r| r.observer).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn conditions(&self) -> Vec<usize> {
        self.stimuli.iter().map(|s| s.condition).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Writes `stimuli.csv` and `responses.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        let sp = dir.join(STIMULI_FILE);
        write_csv(
            &sp,
            &["stimulus_id", "condition", "label"],
            self.stimuli.iter().map(|s| vec![s.id.to_string(), s.condition.to_string(), s.label.to_string()]),
        )?;
        let rp = dir.join(RESPONSES_FILE);
        write_csv(
            &rp,
            &["observer_id", "stimulus_id", "response"],
            self.responses.iter().map(|r| vec![r.observer.to_string(), r.stimulus.to_string(), r.response.to_string()]),
        )?;
        Ok(vec![sp, rp])
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let t = Table::read(dir.join(STIMULI_FILE))?;
        let (id, cond, label) = (t.column("stimulus_id")?, t.column("condition")?, t.column("label")?);
        let stimuli = (0..t.len())
            .map(|r| Ok(Stimulus { id: t.get(r, id)?, condition: t.get(r, cond)?, label: t.get(r, label)? }))
            .collect::<Result<Vec<_>>>()?;
        let t = Table::read(dir.join(RESPONSES_FILE))?;
        let (obs, stim, resp) = (t.column("observer_id")?, t.column("stimulus_id")?, t.column("response")?);
        let responses = (0..t.len())
            .map(|r| Ok(Response { observer: t.get(r, obs)?, stimulus: t.get(r, stim)?, response: t.get(r, resp)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(stimuli, responses)
    }
}

/// Observer experiment on a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub per_condition: usize,
    /// Std of the Gaussian perturbation applied to stimuli, one per condition.
    pub condition_noise: Vec<f64>,
    pub observers: usize,
    /// Private per-observer, per-trial input noise before the Bayes decision.
    pub sensory_noise: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self { per_condition: 200, condition_noise: vec![0.0, 0.5, 1.0], observers: 4, sensory_noise: 0.5 }
    }
}

/// Generates perturbed stimuli and noisy-Bayes responses. Returns the
/// responses and the stimulus inputs (`N×2`, row `i` is stimulus id `i`).
pub fn gen_observers(spec: &MixtureSpec, cfg: &ObserverConfig, seed: u64) -> Result<(ObserverResponses, Tensor)> {
    spec.validate()?;
    if cfg.per_condition == 0 || cfg.observers == 0 || cfg.condition_noise.is_empty() {
        return Err(Error::Config("observer experiment needs stimuli, observers and conditions".into()));
    }
    if cfg.condition_noise.iter().chain([&cfg.sensory_noise]).any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::Config("noise levels must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stimuli = Vec::new();
    let mut data = Vec::new();
    for (c, &noise) in cfg.condition_noise.iter().enumerate() {
        let (x, y) = spec.sample(cfg.per_condition, &mut rng);
        for i in 0..cfg.per_condition {
            for v in x.row(i) {
                let e: f64 = rng.sample(StandardNormal);
                data.push(v + noise * e);
            }
            stimuli.push(Stimulus { id: stimuli.len(), condition: c, label: y[i] });
        }
    }
    let inputs = Tensor::new(vec![stimuli.len(), 2], data)?;
    let mut responses = Vec::with_capacity(stimuli.len() * cfg.observers);
    for obs in 0..cfg.observers {
        for s in &stimuli {
            let x = inputs.row(s.id);
            let seen: Vec<f64> = x.iter().map(|v| v + cfg.sensory_noise * rng.sample::<f64, _>(StandardNormal)).collect();
            responses.push(Response { observer: obs, stimulus: s.id, response: spec.bayes_predict(&seen) });
        }
    }
    Ok((ObserverResponses::new(stimuli, responses)?, inputs))
}

pub fn save_stimulus_inputs(dir: impl AsRef<Path>, inputs: &Tensor) -> Result<PathBuf> {
    let p = dir.as_ref().join(STIMULI_INPUTS_FILE);
    save_tensor(&p, inputs)?;
    Ok(p)
}

pub fn load_stimulus_inputs(dir: impl AsRef<Path>) -> Result<Tensor> {
    load_tensor(dir.as_ref().join(STIMULI_INPUTS_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_sum_to_observers() {
        let pts = crate::synthdata::mixture::gen_mixture2d(3, 50, 2.0, 0).unwrap();
        let s = gen_soft_labels(&pts, 17, 1).unwrap();
        assert!(s.counts.iter().all(|r| r.iter().sum::<u64>() == 17));
    }

    #[test]
    fn separated_centers_are_unanimous() {
        let spec = MixtureSpec::on_circle(3, 50.0, 1.0);
        let pts = LabeledPoints2D {
            points: Tensor::from_rows(&spec.means.iter().map(|m| m.to_vec()).collect::<Vec<_>>()).unwrap(),
            labels: vec![0, 1, 2],
            spec,
        };
        let s = gen_soft_labels(&pts, 40, 3).unwrap();
        assert_eq!(s.counts, vec![vec![40, 0, 0], vec![0, 40, 0], vec![0, 0, 40]]);
    }

    #[test]
    fn equidistant_point_has_even_posterior() {
        let spec = MixtureSpec { means: vec![[-1.0, 0.0], [1.0, 0.0]], std: 1.0 };
        let p = spec.posterior(&[0.0, 3.0]);
        assert!(p.iter().all(|v| (v - 0.5).abs() < 1e-15));
        let pts = LabeledPoints2D { points: Tensor::from_rows(&[vec![0.0, 3.0]]).unwrap(), labels: vec![0], spec };
        let n = 10_000u64;
        let s = gen_soft_labels(&pts, n as usize, 8).unwrap();
        let bound = 3.0 * (n as f64 * 0.25).sqrt();
        assert!((s.counts[0][0] as f64 - n as f64 / 2.0).abs() < bound);
    }

    #[test]
    fn observer_design_is_complete() {
        let spec = MixtureSpec::on_circle(3, 2.0, 1.0);
        let (r, x) = gen_observers(&spec, &ObserverConfig::default(), 5).unwrap();
        assert_eq!(x.rows(), 600);
        assert_eq!(r.responses.len(), 2400);
        assert_eq!(r.observers(), vec![0, 1, 2, 3]);
        let mut broken = r.clone();
        broken.responses.pop();
        assert!(matches!(broken.validate(), Err(Error::Alignment(_))));
    }
}
