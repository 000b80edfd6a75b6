use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IntegratorConfig, Trajectory};
use crate::error::Result;

/// JSON sidecar written next to a trajectory CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub label: String,
    pub seed: Option<u64>,
    pub method: String,
    pub dt: f64,
    pub steps: usize,
    pub horizon: f64,
    pub hbar: f64,
    pub beta_policies: Vec<String>,
    pub max_norm_drift: f64,
}

impl RunMetadata {
    pub fn for_trajectory(label: impl Into<String>, seed: Option<u64>, traj: &Trajectory) -> Self {
        let cfg: &IntegratorConfig = &traj.config;
        Self {
            label: label.into(),
            seed,
            method: cfg.method.label().to_string(),
            dt: traj.dt,
            steps: traj.len().saturating_sub(1),
            horizon: traj.horizon(),
            hbar: cfg.hbar,
            beta_policies: traj.traces.iter().map(|t| t.policy.label()).collect(),
            max_norm_drift: traj.max_norm_drift,
        }
    }
}

impl Trajectory {
    /// Columns: `t, re_overlap, im_overlap, survival`, then `distance[β]` and
    /// `rhs_integral[β]` for each recorded policy.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "t".to_string(),
            "re_overlap".to_string(),
            "im_overlap".to_string(),
            "survival".to_string(),
        ];
        for tr in &self.traces {
            header.push(format!("distance[{}]", tr.policy.label()));
            header.push(format!("rhs_integral[{}]", tr.policy.label()));
        }
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![
                fmt(self.times[k]),
                fmt(self.overlaps[k].re),
                fmt(self.overlaps[k].im),
                fmt(self.survival[k]),
            ];
            for tr in &self.traces {
                row.push(fmt(tr.distances[k]));
                row.push(fmt(tr.rhs_integrals[k]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn export(&self, dir: &Path, stem: &str, meta: &RunMetadata) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(File::create(dir.join(format!("{stem}.csv")))?)?;
        let mut f = File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(&mut f, meta)?;
        writeln!(f)?;
        Ok(())
    }
}

pub(crate) fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}
