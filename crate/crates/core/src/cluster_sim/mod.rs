//! Trace-driven model of cross-rack repair traffic.
//!
//! Every block of a stripe sits on a different rack, so every repair read
//! crosses a top-of-rack switch. A machine that stays down past the flag
//! threshold has all of its blocks repaired; blocks of one stripe that go
//! missing within a repair window of each other are repaired together.

mod calibration;
mod report;
mod trace;

use std::collections::BTreeSet;

use num_rational::Ratio;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::piggyback::GroupPartition;
use crate::rs_code::CodeParams;

pub use calibration::{DeskScaleComparison, SimulationConfig, CALIBRATION_JSON};
pub use report::{summarize_missing_distribution, DayStats, MissingDistribution, ReportSummary, TrafficReport};
pub use trace::{
    daily_failure_counts, flag_unavailability, format_timestamp, generate_trace, ingest_trace, write_trace, EventKind,
    FailureEvent, Flag, TraceGenConfig, DEFAULT_FLAG_THRESHOLD_SECS, SECS_PER_DAY,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterTopology {
    pub racks: usize,
    pub nodes_per_rack: usize,
    /// Bytes per node.
    pub node_capacity: u64,
}

impl ClusterTopology {
    pub fn node_count(&self) -> usize {
        self.racks * self.nodes_per_rack
    }

    /// Nodes are numbered rack-major.
    pub fn rack_of(&self, node: u32) -> usize {
        node as usize / self.nodes_per_rack
    }
}

/// Where every block of every stripe lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    width: usize,
    /// `width` node ids per stripe, indexed by block position.
    nodes: Vec<u32>,
    /// `(stripe, position)` pairs hosted by each node.
    hosted: Vec<Vec<(u32, u8)>>,
}

impl Placement {
    pub fn stripe_count(&self) -> usize {
        self.nodes.len() / self.width.max(1)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn stripe_nodes(&self, stripe: usize) -> &[u32] {
        &self.nodes[stripe * self.width..(stripe + 1) * self.width]
    }

    pub fn hosted(&self, node: u32) -> &[(u32, u8)] {
        &self.hosted[node as usize]
    }

    pub fn node_count(&self) -> usize {
        self.hosted.len()
    }

    pub fn max_blocks_per_node(&self) -> usize {
        self.hosted.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Places each stripe's `k + r` blocks on distinct, uniformly chosen racks,
/// one uniformly chosen node per rack. Deterministic in `seed`.
pub fn place_stripes(topology: &ClusterTopology, stripes: usize, params: CodeParams, seed: u64) -> Result<Placement> {
    let width = params.n();
    if topology.racks < width {
        return Err(Error::PlacementInfeasible {
            racks: topology.racks,
            width,
        });
    }
    if topology.nodes_per_rack == 0 {
        return Err(Error::Config("racks must hold at least one node".into()));
    }
    if stripes > u32::MAX as usize {
        return Err(Error::Config(format!("{stripes} stripes exceed the supported count")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(stripes * width);
    let mut hosted = vec![Vec::new(); topology.node_count()];
    for s in 0..stripes {
        for (pos, rack) in sample(&mut rng, topology.racks, width).into_iter().enumerate() {
            let node = (rack * topology.nodes_per_rack + rng.gen_range(0..topology.nodes_per_rack)) as u32;
            nodes.push(node);
            hosted[node as usize].push((s as u32, pos as u8));
        }
    }
    Ok(Placement { width, nodes, hosted })
}

/// Byte costs of repairing one stripe under each model.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    params: CodeParams,
    /// Bytes per (effective) block; even.
    block_bytes: u64,
    partition: Option<GroupPartition>,
    /// Flat single-failure savings fraction of the reference model.
    flat_savings: Ratio<u64>,
}

impl CostModel {
    pub fn new(
        params: CodeParams,
        block_bytes: u64,
        partition: Option<GroupPartition>,
        flat_savings: Ratio<u64>,
    ) -> Result<Self> {
        if !block_bytes.is_multiple_of(2) {
            return Err(Error::Config(format!("block bytes must be even, got {block_bytes}")));
        }
        if flat_savings > Ratio::from_integer(1) {
            return Err(Error::Config("flat savings fraction above 1".into()));
        }
        if let Some(p) = &partition {
            if p.params() != params {
                return Err(Error::InvalidPartition(
                    "partition built for different parameters".into(),
                ));
            }
        }
        Ok(CostModel {
            params,
            block_bytes,
            partition,
            flat_savings,
        })
    }

    pub fn params(&self) -> CodeParams {
        self.params
    }

    pub fn block_bytes(&self) -> u64 {
        self.block_bytes
    }

    /// `k * block` for any RS repair, and for any multi-block repair.
    pub fn rs_bytes(&self) -> u64 {
        self.params.k() as u64 * self.block_bytes
    }

    /// Single-block repair of `position` under Piggybacked-RS.
    pub fn pb_single_bytes(&self, position: usize) -> u64 {
        let half = self.block_bytes / 2;
        let k = self.params.k() as u64;
        match self
            .partition
            .as_ref()
            .and_then(|p| p.groups().iter().find(|g| g.contains(&position)))
        {
            Some(g) if position < self.params.k() => (k + g.len() as u64) * half,
            _ => 2 * k * half,
        }
    }

    /// Single-block repair under the flat-savings reference model.
    pub fn flat_single_bytes(&self) -> u64 {
        let rs = self.rs_bytes() as u128;
        let saved = rs * *self.flat_savings.numer() as u128 / *self.flat_savings.denom() as u128;
        (rs - saved) as u64
    }
}

/// Knobs of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub cost: CostModel,
    pub flag_threshold_secs: i64,
    /// Blocks of one stripe lost within this many seconds of each other are
    /// repaired together.
    pub repair_window_secs: i64,
    /// Real blocks represented by each simulated block.
    pub weight: u64,
}

struct Episode {
    opened_at: i64,
    end: i64,
    missing: Vec<u8>,
}

#[derive(Default)]
struct DayAcc {
    machines: BTreeSet<u32>,
    blocks: u64,
    stripes: u64,
    rs: u64,
    pb: u64,
    flat: u64,
}

/// Runs the trace against the placement and accounts every repair.
pub fn simulate(
    topology: &ClusterTopology,
    placement: &Placement,
    events: &[FailureEvent],
    sim: &SimParams,
) -> Result<TrafficReport> {
    let params = sim.cost.params();
    if placement.width() != params.n() {
        return Err(Error::Config(format!(
            "placement has stripes of {} blocks, code has {}",
            placement.width(),
            params.n()
        )));
    }
    if placement.node_count() != topology.node_count() {
        return Err(Error::Config("placement was built for a different topology".into()));
    }
    let real_per_node = placement.max_blocks_per_node() as u64 * sim.weight;
    if real_per_node.saturating_mul(sim.cost.block_bytes()) > topology.node_capacity {
        return Err(Error::CapacityExceeded(format!(
            "{real_per_node} blocks of {} bytes on a {}-byte node",
            sim.cost.block_bytes(),
            topology.node_capacity
        )));
    }
    if sim.weight == 0 || sim.repair_window_secs <= 0 {
        return Err(Error::Config("weight and repair window must be positive".into()));
    }
    if let Some(e) = events.iter().find(|e| e.node as usize >= topology.node_count()) {
        return Err(Error::UnknownNode(e.node));
    }

    let flags = flag_unavailability(events, sim.flag_threshold_secs);
    // days are spanned by outage starts and flags; later recoveries add nothing
    let downs = events
        .iter()
        .filter(|e| e.kind == EventKind::Down)
        .map(|e| e.timestamp)
        .chain(flags.iter().map(|f| f.flagged_at));
    let (first_day, n_days) = match (downs.clone().min(), downs.max()) {
        (Some(f), Some(l)) => {
            let first = f.div_euclid(SECS_PER_DAY);
            (first, (l.div_euclid(SECS_PER_DAY) - first + 1) as usize)
        }
        _ => (0, 0),
    };
    let mut days: Vec<DayAcc> = (0..n_days).map(|_| DayAcc::default()).collect();
    let day_index = |ts: i64| (ts.div_euclid(SECS_PER_DAY) - first_day) as usize;
    let mut histogram = std::collections::BTreeMap::<usize, u64>::new();
    let w = sim.weight;

    let close = |ep: Episode, days: &mut Vec<DayAcc>, histogram: &mut std::collections::BTreeMap<usize, u64>| {
        let acc = &mut days[day_index(ep.opened_at)];
        let m = ep.missing.len();
        acc.blocks += m as u64 * w;
        acc.stripes += w;
        acc.rs += sim.cost.rs_bytes() * w;
        if m == 1 {
            acc.pb += sim.cost.pb_single_bytes(ep.missing[0] as usize) * w;
            acc.flat += sim.cost.flat_single_bytes() * w;
        } else {
            acc.pb += sim.cost.rs_bytes() * w;
            acc.flat += sim.cost.rs_bytes() * w;
        }
        *histogram.entry(m).or_default() += w;
    };

    let mut open: Vec<Option<Episode>> = (0..placement.stripe_count()).map(|_| None).collect();
    for flag in flags {
        let t = flag.flagged_at;
        days[day_index(t)].machines.insert(flag.node);
        for &(stripe, pos) in placement.hosted(flag.node) {
            let slot = &mut open[stripe as usize];
            match slot {
                Some(ep) if ep.end > t => {
                    if !ep.missing.contains(&pos) {
                        ep.missing.push(pos);
                    }
                    ep.end = ep.end.max(t + sim.repair_window_secs);
                }
                _ => {
                    let fresh = Episode {
                        opened_at: t,
                        end: t + sim.repair_window_secs,
                        missing: vec![pos],
                    };
                    if let Some(old) = slot.replace(fresh) {
                        close(old, &mut days, &mut histogram);
                    }
                }
            }
        }
    }
    for ep in open.into_iter().flatten() {
        close(ep, &mut days, &mut histogram);
    }

    let days = days
        .into_iter()
        .enumerate()
        .map(|(i, acc)| DayStats {
            day: format_timestamp((first_day + i as i64) * SECS_PER_DAY)[..10].to_string(),
            unavailable_machines: acc.machines.len() as u64,
            blocks_repaired: acc.blocks,
            stripes_repaired: acc.stripes,
            rs_bytes: acc.rs,
            pb_bytes: acc.pb,
            savings_bytes: acc.rs - acc.pb,
            flat_pb_bytes: acc.flat,
            flat_savings_bytes: acc.rs - acc.flat,
        })
        .collect();
    Ok(TrafficReport::new(days, histogram, sim))
}
