//! Machine-unavailability traces: CSV ingestion, repair-trigger flagging and a
//! seeded synthetic generator.

use std::collections::BTreeMap;
use std::io;

use chrono::{DateTime, SecondsFormat, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cluster default wait before an unreachable machine is flagged unavailable.
pub const DEFAULT_FLAG_THRESHOLD_SECS: i64 = 15 * 60;

pub const SECS_PER_DAY: i64 = 86_400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Down,
    Up,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FailureEvent {
    /// UTC seconds since the Unix epoch.
    pub timestamp: i64,
    pub node: u32,
    pub kind: EventKind,
}

#[derive(Deserialize)]
struct Row {
    timestamp: String,
    node_id: String,
    event: String,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads a `timestamp,node_id,event` CSV (`event` is `down` or `up`,
/// timestamps ISO-8601). Events come back sorted by time; per node they must
/// alternate starting with `down`.
pub fn ingest_trace(source: impl io::Read) -> Result<Vec<FailureEvent>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let expected = ["timestamp", "node_id", "event"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_error(1, format!("expected header {}", expected.join(","))));
    }
    // (event, source line)
    let mut events: Vec<(FailureEvent, usize)> = Vec::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| parse_error(line, e.to_string()))?;
        let timestamp = DateTime::parse_from_rfc3339(&row.timestamp)
            .map_err(|e| parse_error(line, format!("bad timestamp {:?}: {e}", row.timestamp)))?
            .with_timezone(&Utc)
            .timestamp();
        let node = row
            .node_id
            .parse::<u32>()
            .map_err(|e| parse_error(line, format!("bad node_id {:?}: {e}", row.node_id)))?;
        let kind = match row.event.as_str() {
            "down" => EventKind::Down,
            "up" => EventKind::Up,
            other => return Err(parse_error(line, format!("unknown event {other:?}"))),
        };
        events.push((FailureEvent { timestamp, node, kind }, line));
    }
    events.sort_by_key(|(e, _)| e.timestamp);
    let mut state: BTreeMap<u32, EventKind> = BTreeMap::new();
    for (e, line) in &events {
        let prev = state.insert(e.node, e.kind);
        let ok = match (prev, e.kind) {
            (None, EventKind::Down) => true,
            (Some(p), k) => p != k,
            (None, EventKind::Up) => false,
        };
        if !ok {
            return Err(Error::TraceInconsistent {
                node: e.node,
                line: *line,
                message: format!("{:?} does not alternate with the previous event", e.kind),
            });
        }
    }
    Ok(events.into_iter().map(|(e, _)| e).collect())
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .expect("timestamp in range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn write_trace(events: &[FailureEvent], sink: impl io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["timestamp", "node_id", "event"])
        .map_err(io::Error::from)?;
    for e in events {
        let kind = match e.kind {
            EventKind::Down => "down",
            EventKind::Up => "up",
        };
        w.write_record([format_timestamp(e.timestamp).as_str(), &e.node.to_string(), kind])
            .map_err(io::Error::from)?;
    }
    w.flush()?;
    Ok(())
}

/// A machine that stayed down long enough to trigger repair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Flag {
    pub flagged_at: i64,
    pub node: u32,
    pub down_at: i64,
}

/// Outages lasting at least `threshold` seconds, flagged at `down + threshold`.
/// An outage with no recovery in the trace counts as long enough.
pub fn flag_unavailability(events: &[FailureEvent], threshold: i64) -> Vec<Flag> {
    let mut down_since: BTreeMap<u32, i64> = BTreeMap::new();
    let mut flags = Vec::new();
    for e in events {
        match e.kind {
            EventKind::Down => {
                down_since.insert(e.node, e.timestamp);
            }
            EventKind::Up => {
                if let Some(t) = down_since.remove(&e.node) {
                    if e.timestamp - t >= threshold {
                        flags.push(Flag {
                            flagged_at: t + threshold,
                            node: e.node,
                            down_at: t,
                        });
                    }
                }
            }
        }
    }
    flags.extend(down_since.into_iter().map(|(node, t)| Flag {
        flagged_at: t + threshold,
        node,
        down_at: t,
    }));
    flags.sort();
    flags
}

/// Parameters of the synthetic trace generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceGenConfig {
    pub days: usize,
    /// Median number of machines flagged unavailable per day.
    pub median_daily_failures: usize,
    pub nodes: usize,
    pub seed: u64,
    /// UTC seconds of the first day's midnight.
    pub start: i64,
    /// Daily failure counts spread evenly over `median * (1 +- spread)`.
    pub daily_spread: f64,
    /// Short outages per day that recover before being flagged.
    pub blips_per_day: usize,
    pub flag_threshold_secs: i64,
    pub max_down_secs: i64,
}

impl TraceGenConfig {
    pub fn new(days: usize, median_daily_failures: usize, nodes: usize, seed: u64) -> Self {
        TraceGenConfig {
            days,
            median_daily_failures,
            nodes,
            seed,
            // 2013-02-01T00:00:00Z
            start: 1_359_676_800,
            daily_spread: 0.2,
            blips_per_day: 10,
            flag_threshold_secs: DEFAULT_FLAG_THRESHOLD_SECS,
            max_down_secs: 6 * 3600,
        }
    }
}

/// Daily flagged-failure counts: evenly spaced around the median, shuffled.
/// The median of the returned counts is exactly `median` for an odd number of
/// days, and the mean of the two middle counts is `median` for an even number.
pub fn daily_failure_counts(cfg: &TraceGenConfig, rng: &mut impl Rng) -> Vec<usize> {
    let m = cfg.median_daily_failures as f64;
    let mut counts: Vec<usize> = (0..cfg.days)
        .map(|d| {
            let off = if cfg.days <= 1 {
                0.0
            } else {
                cfg.daily_spread * m * (2.0 * d as f64 / (cfg.days - 1) as f64 - 1.0)
            };
            // symmetric rounding keeps the multiset symmetric around the median
            let off = off.abs().round() * off.signum();
            (m + off).max(0.0) as usize
        })
        .collect();
    counts.shuffle(rng);
    counts
}

/// Generates a time-ordered trace.
pub fn generate_trace(cfg: &TraceGenConfig) -> Result<Vec<FailureEvent>> {
    if cfg.nodes == 0 && cfg.days > 0 {
        return Err(Error::Config("trace generator needs at least one node".into()));
    }
    if cfg.max_down_secs <= cfg.flag_threshold_secs {
        return Err(Error::Config("max_down_secs must exceed the flag threshold".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let counts = daily_failure_counts(cfg, &mut rng);
    let mut busy_until = vec![i64::MIN; cfg.nodes];
    let mut events = Vec::new();
    for (day, &count) in counts.iter().enumerate() {
        let day_start = cfg.start + day as i64 * SECS_PER_DAY;
        // (time, long outage?)
        let mut starts: Vec<(i64, bool)> = Vec::with_capacity(count + cfg.blips_per_day);
        for _ in 0..count {
            // keep the flag inside the same day
            starts.push((
                day_start + rng.gen_range(0..SECS_PER_DAY - cfg.flag_threshold_secs),
                true,
            ));
        }
        for _ in 0..cfg.blips_per_day {
            starts.push((day_start + rng.gen_range(0..SECS_PER_DAY), false));
        }
        starts.sort_unstable();
        // a machine is flagged at most once a day
        let mut flagged_today = vec![false; cfg.nodes];
        for (t, long) in starts {
            let free: Vec<usize> = (0..cfg.nodes)
                .filter(|&n| busy_until[n] < t && !(long && flagged_today[n]))
                .collect();
            let Some(&node) = free.choose(&mut rng) else {
                continue;
            };
            let duration = if long {
                rng.gen_range(cfg.flag_threshold_secs..=cfg.max_down_secs)
            } else {
                rng.gen_range(60..cfg.flag_threshold_secs)
            };
            busy_until[node] = t + duration;
            flagged_today[node] |= long;
            events.push(FailureEvent {
                timestamp: t,
                node: node as u32,
                kind: EventKind::Down,
            });
            events.push(FailureEvent {
                timestamp: t + duration,
                node: node as u32,
                kind: EventKind::Up,
            });
        }
    }
    events.sort_by_key(|e| (e.timestamp, e.node, e.kind));
    Ok(events)
}
