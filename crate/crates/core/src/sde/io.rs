use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::accum::MomentSummary;
use crate::error::Result;

use super::batch::TrajectoryBatch;
use super::path::Trajectory;

/// CSV dump of a trajectory: `t,x1..xd,alive`. A killed path ends with one
/// `alive = 0` row at the lifetime holding the exit point.
pub struct TrajectoryCsv<'a>(pub &'a Trajectory);

impl TrajectoryCsv<'_> {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let tr = self.0;
        let d = tr.states.first().map_or(0, Vec::len);
        let mut header = String::from("t");
        for i in 1..=d {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(w, "{header},alive")?;
        let row = |w: &mut W, t: f64, x: &[f64], alive: u8| -> std::io::Result<()> {
            write!(w, "{t:e}")?;
            for v in x {
                write!(w, ",{v:e}")?;
            }
            writeln!(w, ",{alive}")
        };
        for (t, x) in tr.times.iter().zip(&tr.states) {
            row(&mut w, *t, x, 1)?;
        }
        if let Some(x) = &tr.exit_point {
            row(&mut w, tr.lifetime, x, 0)?;
        }
        Ok(())
    }
}

impl std::fmt::Display for TrajectoryCsv<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|_| std::fmt::Error)?;
        f.write_str(std::str::from_utf8(&buf).map_err(|_| std::fmt::Error)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStatsJson {
    pub horizon: f64,
    pub time_alive: MomentSummary,
    pub terminal_coords: Vec<MomentSummary>,
    pub functionals: Vec<MomentSummary>,
}

/// JSON summary record of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummaryJson {
    pub n: usize,
    pub seed: u64,
    pub survival_frac: f64,
    pub truncated_frac: f64,
    pub stats: BatchStatsJson,
}

impl From<&TrajectoryBatch> for BatchSummaryJson {
    fn from(b: &TrajectoryBatch) -> Self {
        Self {
            n: b.n(),
            seed: b.seed,
            survival_frac: b.survival_frac(),
            truncated_frac: b.truncated_frac(),
            stats: BatchStatsJson {
                horizon: b.horizon,
                time_alive: b.stats.time_alive.summary(),
                terminal_coords: b.stats.coords.iter().map(|m| m.summary()).collect(),
                functionals: b.stats.values.iter().map(|m| m.summary()).collect(),
            },
        }
    }
}
