//! Table-style reports: per-group ToF summary and per-variant prediction accuracy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stats::{
    group_separability, iqr_outliers, mae_std, mean, r_squared, std_dev, PairedSample, Separability,
};

/// `"0.26 ± 0.29 m/s"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2} m/s")
}

/// `"R² = 0.79"`.
pub fn format_r2(r2: f64) -> String {
    format!("R² = {r2:.2}")
}

/// `"18.58%"`.
pub fn format_percent(p: f64) -> String {
    format!("{p:.2}%")
}

/// Conventions that the numbers depend on, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub quartile_convention: String,
    pub outlier_rule: String,
    pub group_pairing: String,
    pub alpha: f64,
}

impl Default for ReportMetadata {
    fn default() -> Self {
        Self {
            quartile_convention: "linear interpolation of order statistics (type 7)".into(),
            outlier_rule: "|x - median| > 1.5 * (Q3 - Q1), per group".into(),
            group_pairing: "repetition index".into(),
            alpha: 0.05,
        }
    }
}

/// One group of per-sequence ToF velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub mean: f64,
    pub std: f64,
    pub outlier_percent: f64,
    pub count: usize,
}

impl GroupRow {
    pub fn from_values(group: impl Into<String>, values: &[f64]) -> Result<Self> {
        Ok(Self {
            group: group.into(),
            mean: mean(values),
            std: std_dev(values),
            outlier_percent: iqr_outliers(values)?.percentage,
            count: values.len(),
        })
    }
}

/// Velocity summary per elasticity group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub rows: Vec<GroupRow>,
    pub separability: Option<Separability>,
    pub metadata: ReportMetadata,
}

impl GroupReport {
    /// `groups` holds `(name, velocities)`; separability is computed when all
    /// groups have the same length.
    pub fn build(groups: &[(String, Vec<f64>)], metadata: ReportMetadata) -> Result<Self> {
        let rows = groups
            .iter()
            .map(|(name, v)| GroupRow::from_values(name.clone(), v))
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<Vec<f64>> = groups.iter().map(|(_, v)| v.clone()).collect();
        let separability = if values.len() >= 2 && values.iter().all(|v| v.len() == values[0].len()) {
            Some(group_separability(&values, metadata.alpha)?)
        } else {
            None
        };
        Ok(Self {
            rows,
            separability,
            metadata,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = self.rows.iter().map(|r| r.group.chars().count()).max().unwrap_or(0).max(16);
        let _ = writeln!(out, "{:<w$}  {:<20}  {:>12}", "Elasticity group", "c_ToF ± std", "Outliers [%]");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<w$}  {:<20}  {:>12}",
                r.group,
                format_mean_std(r.mean, r.std),
                format!("{:.2}", r.outlier_percent)
            );
        }
        if let Some(sep) = &self.separability {
            let _ = writeln!(out);
            for p in &sep.pairs {
                let _ = writeln!(
                    out,
                    "{} vs {}: p = {:.4}{}",
                    self.rows[p.first].group,
                    self.rows[p.second].group,
                    p.p_value,
                    if p.significant { " (significant)" } else { "" }
                );
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("group,mean_m_s,std_m_s,outlier_percent,count\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.4},{}",
                csv_field(&r.group),
                r.mean,
                r.std,
                r.outlier_percent,
                r.count
            );
        }
        out
    }
}

/// Prediction accuracy for one pre-processing variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    /// Display label, e.g. `"(d)"`.
    pub label: String,
    pub mae: f64,
    pub std: f64,
    /// `None` when the references have zero variance.
    pub r_squared: Option<f64>,
    pub outlier_percent: f64,
    pub count: usize,
}

impl VariantRow {
    /// Outliers are counted per group of predictions and pooled.
    pub fn build(label: impl Into<String>, sample: &PairedSample, groups: &[usize]) -> Result<Self> {
        let (mae, std) = mae_std(sample);
        let r2 = r_squared(sample).ok();
        let mut by_group: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for (&g, &p) in groups.iter().zip(sample.predictions()) {
            by_group.entry(g).or_default().push(p);
        }
        let mut outliers = 0usize;
        for values in by_group.values() {
            if values.len() >= 4 {
                outliers += iqr_outliers(values)?.indices.len();
            }
        }
        Ok(Self {
            label: label.into(),
            mae,
            std,
            r_squared: r2,
            outlier_percent: 100.0 * outliers as f64 / sample.len() as f64,
            count: sample.len(),
        })
    }

    /// `"(d) 0.26 ± 0.29 m/s, 0.92, 0.88"`.
    pub fn summary_line(&self) -> String {
        format!(
            "{} {}, {}, {:.2}",
            self.label,
            format_mean_std(self.mae, self.std),
            self.r_squared.map_or_else(|| "n/a".to_string(), |r| format!("{r:.2}")),
            self.outlier_percent
        )
    }
}

/// Per-variant accuracy table plus per-variant group separability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<VariantRow>,
    /// `(variant label, separability of predictions across groups)`.
    pub separability: Vec<(String, Separability)>,
    pub metadata: ReportMetadata,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10}  {:<20}  {:>6}  {:>12}", "Data type", "MAE ± std", "R²", "Outliers [%]");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10}  {:<20}  {:>6}  {:>12}",
                r.label,
                format_mean_std(r.mae, r.std),
                r.r_squared.map_or_else(|| "n/a".into(), |v| format!("{v:.2}")),
                format!("{:.2}", r.outlier_percent)
            );
        }
        for (label, sep) in &self.separability {
            let sig = sep.pairs.iter().filter(|p| p.significant).count();
            let _ = writeln!(
                out,
                "{label}: {sig}/{} group pairs significant at alpha = {}",
                sep.pairs.len(),
                sep.alpha
            );
        }
        let _ = writeln!(out, "quartiles: {}", self.metadata.quartile_convention);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,mae_m_s,std_m_s,r_squared,outlier_percent,count\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{},{:.4},{}",
                csv_field(&r.label),
                r.mae,
                r.std,
                r.r_squared.map_or_else(String::new, |v| format!("{v:.6}")),
                r.outlier_percent,
                r.count
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
