use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Campaign, CampaignResult, Metadata, Summary, Violation};
use crate::error::Result;
use crate::propagator::Trajectory;

/// Per-sample data for external plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    /// Columns: `t, survival, survival_bound`, then `distance[β]`,
    /// `rhs_integral[β]` per policy.
    pub fn from_trajectory<F>(traj: &Trajectory, bound: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<f64>,
    {
        let mut header = vec!["t".to_string(), "survival".into(), "survival_bound".into()];
        for tr in &traj.traces {
            header.push(format!("distance[{}]", tr.policy.label()));
            header.push(format!("rhs_integral[{}]", tr.policy.label()));
        }
        let mut rows = Vec::with_capacity(traj.len());
        for k in 0..traj.len() {
            let t = traj.times[k];
            let mut row = vec![t, traj.survival[k], bound(t)?];
            for tr in &traj.traces {
                row.push(tr.distances[k]);
                row.push(tr.rhs_integrals[k]);
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|x| format!("{x:.12e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub campaign: Campaign,
    pub config_hash: String,
    pub summary: Summary,
    pub violations: Vec<Violation>,
    pub metadata: Metadata,
}

impl SummaryFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Everything except the metadata and worker count, for reproducibility
    /// comparisons.
    pub fn comparable(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("summary serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("metadata");
            if let Some(c) = obj.get_mut("campaign").and_then(|c| c.as_object_mut()) {
                c.remove("workers");
            }
        }
        v
    }
}

/// File-name-safe form of a provenance key.
pub fn file_stem(key: &str) -> String {
    key.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.=".contains(c) { c } else { '_' })
        .collect()
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

impl CampaignResult {
    pub fn summary_file(&self) -> SummaryFile {
        SummaryFile {
            campaign: self.campaign.clone(),
            config_hash: self.config_hash.clone(),
            summary: self.summary.clone(),
            violations: self.violations.clone(),
            metadata: self.metadata.clone(),
        }
    }

    /// Writes `reports/<key>.json`, `runs.csv`, `summary.csv`, `summary.json`
    /// and, when kept, `series/<key>.csv`. Returns the summary path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let reports = dir.join("reports");
        fs::create_dir_all(&reports)?;
        for r in &self.records {
            let stem = file_stem(&r.provenance.key);
            let mut f = BufWriter::new(File::create(reports.join(format!("{stem}.json")))?);
            serde_json::to_writer_pretty(&mut f, r)?;
            writeln!(f)?;
            if let Some(series) = &r.series {
                let sdir = dir.join("series");
                fs::create_dir_all(&sdir)?;
                series.write_csv(File::create(sdir.join(format!("{stem}.csv")))?)?;
            }
        }
        self.write_runs_csv(File::create(dir.join("runs.csv"))?)?;
        self.write_summary_csv(File::create(dir.join("summary.csv"))?)?;
        let path = dir.join("summary.json");
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, &self.summary_file())?;
        writeln!(f)?;
        Ok(path)
    }

    /// One row per run.
    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut diag_keys: Vec<&String> = self.records.iter().flat_map(|r| r.diagnostics.keys()).collect();
        diag_keys.sort();
        diag_keys.dedup();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "key", "seed", "instance", "context", "energy", "spread", "t_any", "t_orth",
            "measured_orth", "measured_antipodal", "min_margin", "violations",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(diag_keys.iter().map(|k| k.to_string()));
        w.write_record(&header)?;
        for r in &self.records {
            let rep = &r.report;
            let min_margin = rep.margins.iter().filter_map(|m| m.margin).fold(None, |acc: Option<f64>, x| {
                Some(acc.map_or(x, |a| a.min(x)))
            });
            let mut row = vec![
                r.provenance.key.clone(),
                r.provenance.seed.map(|s| s.to_string()).unwrap_or_default(),
                r.provenance.instance.clone().unwrap_or_default(),
                serde_json::to_value(rep.context).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                cell(Some(rep.moments.energy)),
                cell(Some(rep.moments.spread)),
                rep.characteristic_times.t_any.to_string(),
                rep.characteristic_times.t_orth.to_string(),
                cell(rep.measured_orth_time()),
                cell(rep.measured_antipodal_time()),
                cell(min_margin),
                r.violations().len().to_string(),
            ];
            row.extend(diag_keys.iter().map(|k| cell(r.diagnostics.get(*k).copied())));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per margin family with its quantiles.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["margin", "count", "not_triggered", "min", "p05", "median", "p95", "max"])?;
        for (name, q) in &self.summary.margin_quantiles {
            w.write_record([
                name.clone(),
                q.count.to_string(),
                q.not_triggered.to_string(),
                cell(q.min),
                cell(q.p05),
                cell(q.median),
                cell(q.p95),
                cell(q.max),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
