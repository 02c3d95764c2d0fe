//! Named sensitivity-index collections and their canonical JSON form.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::subset::Subset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Sobol,
    TotalSobol,
    Skewness,
    TotalSkewness,
    ExtremumSobol,
    ExtremumTotalSobol,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub subset: Subset,
    pub label: String,
    pub value: f64,
    /// Spread over repeated trials, when the report aggregates several.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub estimator: String,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub kind: ReportKind,
    pub entries: Vec<ReportEntry>,
    pub metadata: ReportMetadata,
}

impl SensitivityReport {
    pub fn new(kind: ReportKind, metadata: ReportMetadata) -> Self {
        SensitivityReport { kind, entries: Vec::new(), metadata }
    }

    pub fn push(&mut self, subset: Subset, value: f64) {
        self.entries.push(ReportEntry { subset, label: subset.to_string(), value, sd: None });
    }

    pub fn get(&self, subset: Subset) -> Option<f64> {
        self.entries.iter().find(|e| e.subset == subset).map(|e| e.value)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.value).sum()
    }

    /// Renames entry labels with variable names instead of 1-based positions.
    pub fn relabel(&mut self, names: &[String]) {
        for e in &mut self.entries {
            e.label = e.subset.label_with(names);
        }
    }

    /// Mean and sample standard deviation across reports with identical
    /// entry layout.
    pub fn aggregate(reports: &[SensitivityReport]) -> Option<SensitivityReport> {
        let first = reports.first()?;
        let t = reports.len() as f64;
        let mut out = first.clone();
        out.metadata.trials = Some(reports.len());
        for (k, e) in out.entries.iter_mut().enumerate() {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.entries.get(k)).map(|x| x.value).collect();
            if vals.len() != reports.len() {
                return None;
            }
            let mean = vals.iter().sum::<f64>() / t;
            let sd = if reports.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)).sqrt()
            } else {
                0.0
            };
            e.value = mean;
            e.sd = Some(sd);
        }
        Some(out)
    }

    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("report is serializable");
        canonical_json(&v)
    }
}

/// Serializes a JSON value with sorted keys and every non-integer number
/// written with 17 significant digits, so equal values give equal bytes.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.push_str(&n.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(indent + 1, out);
                write_value(item, indent + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(indent + 1, out);
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_value(&map[*k], indent + 1, out);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(indent, out);
            out.push('}');
        }
    }
}

fn pad(indent: usize, out: &mut String) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form_is_stable_and_parses_back() {
        let mut r = SensitivityReport::new(
            ReportKind::Sobol,
            ReportMetadata { estimator: "pce".into(), samples: 100, seed: Some(3), ..Default::default() },
        );
        r.push(Subset::of(&[0]), 5.0 / 9.0);
        r.push(Subset::of(&[1]), 4.0 / 9.0);
        let a = r.to_canonical_json();
        assert_eq!(a, r.to_canonical_json());
        assert!(a.contains("5.5555555555555558e-1"));
        let back: SensitivityReport = serde_json::from_str(&a).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn aggregate_mean_and_sd() {
        let mk = |v: f64| {
            let mut r = SensitivityReport::new(ReportKind::TotalSobol, ReportMetadata::default());
            r.push(Subset::single(0), v);
            r
        };
        let agg = SensitivityReport::aggregate(&[mk(1.0), mk(3.0)]).unwrap();
        assert_eq!(agg.entries[0].value, 2.0);
        assert!((agg.entries[0].sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
