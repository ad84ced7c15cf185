use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{
    generate_trace, place_stripes, simulate, ClusterTopology, CostModel, FailureEvent, Placement, SimParams,
    TraceGenConfig, TrafficReport,
};
use crate::error::{Error, Result};
use crate::piggyback::{default_partition, GroupPartition};
use crate::rs_code::CodeParams;

/// Calibration shipped with the library: 3000 nodes with 1910 blocks each and
/// a median of 50 flagged machines a day, which gives about 95,500 block
/// repairs a day.
pub const CALIBRATION_JSON: &str = include_str!("calibration.json");

/// Everything needed to reproduce one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub racks: usize,
    pub nodes_per_rack: usize,
    pub node_capacity: u64,
    /// Mean simulated blocks per node; sets the stripe count.
    pub blocks_per_node: usize,
    pub k: usize,
    pub r: usize,
    /// Piggyback groups; `None` picks the default partition.
    pub partition: Option<Vec<Vec<usize>>>,
    pub block_size: u64,
    /// Mean fraction of `block_size` a repaired block actually holds.
    pub block_fill: f64,
    pub days: usize,
    pub median_daily_failures: usize,
    pub daily_spread: f64,
    pub blips_per_day: usize,
    pub flag_threshold_secs: i64,
    pub max_down_secs: i64,
    pub repair_window_secs: i64,
    /// Single-failure savings of the flat reference model, in percent.
    pub flat_savings_pct: u64,
    pub start: i64,
    pub trace_seed: u64,
    pub placement_seed: u64,
    /// Real blocks represented by each simulated block.
    pub weight: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        serde_json::from_str(CALIBRATION_JSON).expect("bundled calibration parses")
    }
}

/// Savings percentages of a full run next to a down-scaled one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeskScaleComparison {
    pub factor: u64,
    pub full: TrafficReport,
    pub desk: TrafficReport,
}

impl DeskScaleComparison {
    pub fn flat_pct_gap(&self) -> f64 {
        (self.full.summary.flat_savings_pct - self.desk.summary.flat_savings_pct).abs()
    }

    pub fn pct_gap(&self) -> f64 {
        (self.full.summary.savings_pct - self.desk.summary.savings_pct).abs()
    }
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimulationConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.block_fill > 0.0 && self.block_fill <= 1.0) {
            return Err(Error::Config(format!("block_fill {} outside (0, 1]", self.block_fill)));
        }
        if self.flat_savings_pct > 100 {
            return Err(Error::Config("flat_savings_pct above 100".into()));
        }
        if self.weight == 0 {
            return Err(Error::Config("weight must be positive".into()));
        }
        if self.repair_window_secs <= 0 {
            return Err(Error::Config("repair_window_secs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.daily_spread) {
            return Err(Error::Config("daily_spread outside [0, 1]".into()));
        }
        self.partition()?;
        Ok(())
    }

    pub fn params(&self) -> Result<CodeParams> {
        CodeParams::new(self.k, self.r)
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        let params = self.params()?;
        match &self.partition {
            Some(groups) => GroupPartition::new(params, groups.clone()),
            None => default_partition(params),
        }
    }

    pub fn topology(&self) -> ClusterTopology {
        ClusterTopology {
            racks: self.racks,
            nodes_per_rack: self.nodes_per_rack,
            node_capacity: self.node_capacity,
        }
    }

    pub fn stripe_count(&self) -> Result<usize> {
        Ok(self.topology().node_count() * self.blocks_per_node / self.params()?.n())
    }

    /// Bytes a repaired block carries, rounded to an even count.
    pub fn effective_block_bytes(&self) -> u64 {
        let b = (self.block_size as f64 * self.block_fill).round() as u64;
        (b + 1) & !1
    }

    pub fn trace_config(&self) -> TraceGenConfig {
        TraceGenConfig {
            days: self.days,
            median_daily_failures: self.median_daily_failures,
            nodes: self.topology().node_count(),
            seed: self.trace_seed,
            start: self.start,
            daily_spread: self.daily_spread,
            blips_per_day: self.blips_per_day,
            flag_threshold_secs: self.flag_threshold_secs,
            max_down_secs: self.max_down_secs,
        }
    }

    pub fn sim_params(&self) -> Result<SimParams> {
        let params = self.params()?;
        Ok(SimParams {
            cost: CostModel::new(
                params,
                self.effective_block_bytes(),
                Some(self.partition()?),
                Ratio::new(self.flat_savings_pct, 100),
            )?,
            flag_threshold_secs: self.flag_threshold_secs,
            repair_window_secs: self.repair_window_secs,
            weight: self.weight,
        })
    }

    pub fn placement(&self) -> Result<Placement> {
        place_stripes(
            &self.topology(),
            self.stripe_count()?,
            self.params()?,
            self.placement_seed,
        )
    }

    /// Generates the synthetic trace and simulates it.
    pub fn run(&self) -> Result<TrafficReport> {
        self.validate()?;
        let events = generate_trace(&self.trace_config())?;
        self.run_with_trace(&events)
    }

    pub fn run_with_trace(&self, events: &[FailureEvent]) -> Result<TrafficReport> {
        self.validate()?;
        simulate(&self.topology(), &self.placement()?, events, &self.sim_params()?)
    }

    /// Same cluster and trace with `factor` times fewer simulated blocks per
    /// node, each standing for `factor` real ones.
    pub fn desk_scale(&self, factor: u64) -> Result<Self> {
        if factor == 0 || factor as usize > self.blocks_per_node {
            return Err(Error::Config(format!(
                "scale factor {factor} must be in 1..={}",
                self.blocks_per_node
            )));
        }
        Ok(SimulationConfig {
            blocks_per_node: self.blocks_per_node / factor as usize,
            weight: self.weight * factor,
            ..self.clone()
        })
    }

    pub fn compare_desk_scale(&self, factor: u64) -> Result<DeskScaleComparison> {
        let desk_cfg = self.desk_scale(factor)?;
        let events = generate_trace(&self.trace_config())?;
        let (full, desk) = crate::par::join(|| self.run_with_trace(&events), || desk_cfg.run_with_trace(&events));
        Ok(DeskScaleComparison {
            factor,
            full: full?,
            desk: desk?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_calibration_is_valid() {
        let cfg = SimulationConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.topology().node_count(), 3000);
        assert_eq!(cfg.effective_block_bytes() % 2, 0);
        assert_eq!(cfg.partition().unwrap().groups().len(), 3);
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(CALIBRATION_JSON).unwrap();
        v["bogus"] = 1.into();
        assert!(SimulationConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn desk_scale_keeps_total_blocks() {
        let cfg = SimulationConfig::default();
        let d = cfg.desk_scale(100).unwrap();
        assert_eq!(d.blocks_per_node, 19);
        assert_eq!(d.weight, 100);
        assert!(cfg.desk_scale(0).is_err());
    }
}
