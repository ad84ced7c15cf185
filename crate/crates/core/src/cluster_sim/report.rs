use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use super::SimParams;
use crate::error::Result;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Traffic accounted to one UTC calendar day. Repairs are attributed to the
/// day their stripe first lost a block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayStats {
    pub day: String,
    pub unavailable_machines: u64,
    pub blocks_repaired: u64,
    pub stripes_repaired: u64,
    pub rs_bytes: u64,
    /// Piggybacked-RS bytes under the implemented code's per-block costs.
    pub pb_bytes: u64,
    pub savings_bytes: u64,
    /// Bytes under the flat single-failure savings reference model.
    pub flat_pb_bytes: u64,
    pub flat_savings_bytes: u64,
}

/// Medians over days and savings over the whole run. Byte figures in TB (10^12).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub days: usize,
    pub median_unavailable_machines: f64,
    pub median_blocks_repaired: f64,
    pub median_rs_tb: f64,
    pub median_pb_tb: f64,
    pub median_savings_tb: f64,
    pub median_flat_pb_tb: f64,
    pub median_flat_savings_tb: f64,
    /// Total savings over total RS traffic, percent, implemented code.
    pub savings_pct: f64,
    /// Same under the flat-savings reference model.
    pub flat_savings_pct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub k: usize,
    pub r: usize,
    pub block_bytes: u64,
    pub weight: u64,
    pub flag_threshold_secs: i64,
    pub repair_window_secs: i64,
    pub multi_failure_rule: String,
    pub pb_model: String,
    pub flat_model: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub format_version: u32,
    pub model: ModelInfo,
    pub days: Vec<DayStats>,
    /// Stripes repaired, keyed by how many of their blocks were missing.
    pub missing_histogram: BTreeMap<usize, u64>,
    pub summary: ReportSummary,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

const TB: f64 = 1e12;

impl ReportSummary {
    pub fn from_days(days: &[DayStats]) -> Self {
        let col = |f: fn(&DayStats) -> u64| median(days.iter().map(|d| f(d) as f64).collect());
        let rs: u64 = days.iter().map(|d| d.rs_bytes).sum();
        let saved: u64 = days.iter().map(|d| d.savings_bytes).sum();
        let flat_saved: u64 = days.iter().map(|d| d.flat_savings_bytes).sum();
        ReportSummary {
            days: days.len(),
            median_unavailable_machines: col(|d| d.unavailable_machines),
            median_blocks_repaired: col(|d| d.blocks_repaired),
            median_rs_tb: col(|d| d.rs_bytes) / TB,
            median_pb_tb: col(|d| d.pb_bytes) / TB,
            median_savings_tb: col(|d| d.savings_bytes) / TB,
            median_flat_pb_tb: col(|d| d.flat_pb_bytes) / TB,
            median_flat_savings_tb: col(|d| d.flat_savings_bytes) / TB,
            savings_pct: pct(saved, rs),
            flat_savings_pct: pct(flat_saved, rs),
        }
    }
}

impl TrafficReport {
    pub(super) fn new(days: Vec<DayStats>, missing_histogram: BTreeMap<usize, u64>, sim: &SimParams) -> Self {
        let summary = ReportSummary::from_days(&days);
        let p = sim.cost.params();
        TrafficReport {
            format_version: REPORT_FORMAT_VERSION,
            model: ModelInfo {
                k: p.k(),
                r: p.r(),
                block_bytes: sim.cost.block_bytes(),
                weight: sim.weight,
                flag_threshold_secs: sim.flag_threshold_secs,
                repair_window_secs: sim.repair_window_secs,
                multi_failure_rule: "a stripe with two or more missing blocks costs k blocks once under every model"
                    .into(),
                pb_model:
                    "implemented Piggybacked-RS: (k+|g|)/2 blocks for a data block in group g, k blocks otherwise"
                        .into(),
                flat_model: format!(
                    "flat reference: single-block repairs read {} of the RS bytes",
                    sim.cost.flat_single_bytes() as f64 / sim.cost.rs_bytes() as f64
                ),
            },
            days,
            missing_histogram,
            summary,
        }
    }

    pub fn write_json(&self, sink: impl io::Write) -> Result<()> {
        serde_json::to_writer_pretty(sink, self)?;
        Ok(())
    }

    pub fn read_json(source: impl io::Read) -> Result<Self> {
        Ok(serde_json::from_reader(source)?)
    }

    /// `day,unavailable_machines,blocks_repaired,rs_bytes,pb_bytes,savings_bytes`.
    pub fn write_csv(&self, sink: impl io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record([
            "day",
            "unavailable_machines",
            "blocks_repaired",
            "rs_bytes",
            "pb_bytes",
            "savings_bytes",
        ])
        .map_err(io::Error::from)?;
        for d in &self.days {
            w.write_record([
                d.day.clone(),
                d.unavailable_machines.to_string(),
                d.blocks_repaired.to_string(),
                d.rs_bytes.to_string(),
                d.pb_bytes.to_string(),
                d.savings_bytes.to_string(),
            ])
            .map_err(io::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Share of repaired stripes that had one, two, or three or more blocks missing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissingDistribution {
    pub one: f64,
    pub two: f64,
    pub three_plus: f64,
}

pub fn summarize_missing_distribution(report: &TrafficReport) -> MissingDistribution {
    let total: u64 = report.missing_histogram.values().sum();
    let bucket = |lo: usize, hi: usize| -> u64 { report.missing_histogram.range(lo..=hi).map(|(_, c)| *c).sum() };
    MissingDistribution {
        one: pct(bucket(1, 1), total),
        two: pct(bucket(2, 2), total),
        three_plus: pct(bucket(3, usize::MAX), total),
    }
}
