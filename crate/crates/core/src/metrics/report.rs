//! Named scalar results keyed by (α, seed, dataset, metric).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::formats::{csv_string, Table};

/// Human agreement ceiling on two-alternative forced-choice similarity.
pub const TWO_AFC_CEILING: f64 = 0.83;
/// Human inter-rater error consistency.
pub const KAPPA_CEILING: f64 = 0.39;
/// Human shape bias on cue-conflict images.
pub const SHAPE_BIAS_REFERENCE: f64 = 0.96;
/// Human cross-entropy ceiling on soft labels, in nats.
pub const SOFT_LABEL_CE_CEILING: f64 = 0.55;

/// Reference value annotated next to a metric, when one exists.
pub fn reference_for(metric: &str) -> Option<f64> {
    match metric {
        "two_afc" => Some(TWO_AFC_CEILING),
        "error_consistency" => Some(KAPPA_CEILING),
        "shape_bias" | "shape_bias_all" => Some(SHAPE_BIAS_REFERENCE),
        "soft_label_ce" => Some(SOFT_LABEL_CE_CEILING),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "lowercase")]
pub enum Status {
    Ok,
    Undefined(String),
    Failed(String),
}

impl Status {
    fn label(&self) -> String {
        match self {
            Status::Ok => "ok".into(),
            Status::Undefined(r) => format!("undefined: {r}"),
            Status::Failed(r) => format!("failed: {r}"),
        }
    }

    fn parse(s: &str) -> Self {
        if let Some(r) = s.strip_prefix("undefined: ") {
            Status::Undefined(r.to_string())
        } else if let Some(r) = s.strip_prefix("failed: ") {
            Status::Failed(r.to_string())
        } else {
            Status::Ok
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub alpha: f64,
    pub seed: u64,
    pub dataset: String,
    pub metric: String,
    /// `None` unless the status is `Ok`.
    pub value: Option<f64>,
    pub status: Status,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

pub const REPORT_HEADER: [&str; 7] = ["alpha", "seed", "dataset", "metric", "value", "status", "reference"];

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a metric outcome. `Undefined` errors become undefined rows,
    /// other errors and non-finite values become failed rows.
    pub fn record(&mut self, alpha: f64, seed: u64, dataset: &str, metric: &str, outcome: Result<f64>) {
        let (value, status) = match outcome {
            Ok(v) if v.is_finite() => (Some(v), Status::Ok),
            Ok(v) => (None, Status::Failed(format!("non-finite value {v}"))),
            Err(Error::Undefined(r)) => (None, Status::Undefined(r)),
            Err(e) => (None, Status::Failed(e.to_string())),
        };
        self.rows.push(MetricRow {
            alpha,
            seed,
            dataset: dataset.to_string(),
            metric: metric.to_string(),
            value,
            status,
            reference: reference_for(metric),
        });
    }

    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
    }

    pub fn get(&self, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn value(&self, metric: &str) -> Option<f64> {
        self.get(metric).and_then(|r| r.value)
    }

    pub fn to_csv(&self) -> Result<String> {
        let rows = self.rows.iter().map(|r| {
            vec![
                r.alpha.to_string(),
                r.seed.to_string(),
                r.dataset.clone(),
                r.metric.clone(),
                r.value.map_or_else(String::new, |v| v.to_string()),
                r.status.label(),
                r.reference.map_or_else(String::new, |v| v.to_string()),
            ]
        });
        csv_string(&REPORT_HEADER, rows)
    }

    pub fn from_csv(text: &str, source: &str) -> Result<Self> {
        let t = Table::parse(text, source)?;
        let cols: Vec<usize> = REPORT_HEADER.iter().map(|c| t.column(c)).collect::<Result<_>>()?;
        let opt = |r: usize, c: usize| -> Result<Option<f64>> {
            let raw: String = t.get(r, c)?;
            if raw.is_empty() {
                Ok(None)
            } else {
                t.get(r, c).map(Some)
            }
        };
        let mut rows = Vec::with_capacity(t.len());
        for r in 0..t.len() {
            rows.push(MetricRow {
                alpha: t.get(r, cols[0])?,
                seed: t.get(r, cols[1])?,
                dataset: t.get(r, cols[2])?,
                metric: t.get(r, cols[3])?,
                value: opt(r, cols[4])?,
                status: Status::parse(&t.get::<String>(r, cols[5])?),
                reference: opt(r, cols[6])?,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json()? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_undefined_rows() {
        let mut r = MetricsReport::new();
        r.record(0.5, 1, "cue", "shape_bias", Ok(0.75));
        r.record(0.5, 1, "cue", "shape_bias_all", Err(Error::Undefined("no cue decisions".into())));
        r.record(0.5, 1, "mix", "accuracy", Ok(f64::NAN));
        let text = r.to_csv().unwrap();
        assert!(text.starts_with("alpha,seed,dataset,metric,value,status,reference\n"));
        let back = MetricsReport::from_csv(&text, "mem").unwrap();
        assert_eq!(back, r);
        assert_eq!(r.get("shape_bias").unwrap().reference, Some(0.96));
        assert!(matches!(r.rows[2].status, Status::Failed(_)));
    }

    #[test]
    fn json_round_trip() {
        let mut r = MetricsReport::new();
        r.record(0.0, 3, "soft", "soft_label_ce", Ok(0.3));
        let back: MetricsReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
