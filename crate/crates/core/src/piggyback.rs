//! Piggybacked-RS: two byte-level RS substripes `a` and `b` encoded together,
//! with group sums of `a`'s data added onto parities `1..r` of `b`.
//!
//! Losing data node `i` in group `g` then costs `k + |g|` symbol downloads
//! instead of `2k`: decode `b` from the other data nodes plus the clean parity 0,
//! strip `p_{g+1}(b)` off the piggybacked parity to expose the group's a-sum,
//! and peel off the other members' a-symbols.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf256::Gf;
use crate::plan::{Read, RecipeStep, RepairPlan, Substripe};
use crate::rs_code::{CodeParams, RsCode};

/// Disjoint groups of data positions. Group `g` rides on parity `g + 1`;
/// parity 0 never carries a piggyback.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    params: CodeParams,
    groups: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn new(params: CodeParams, groups: Vec<Vec<usize>>) -> Result<Self> {
        if !groups.is_empty() && params.r() < 2 {
            return Err(Error::NoPiggybackParity(params.r()));
        }
        if groups.len() > params.r() - 1 {
            return Err(Error::InvalidPartition(format!(
                "{} groups but only {} piggyback parities",
                groups.len(),
                params.r() - 1
            )));
        }
        let mut seen = BTreeSet::new();
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidPartition(format!("group {g} is empty")));
            }
            for &m in members {
                if m >= params.k() {
                    return Err(Error::InvalidPartition(format!(
                        "group {g} names position {m}, which is not a data position"
                    )));
                }
                if !seen.insert(m) {
                    return Err(Error::InvalidPartition(format!("position {m} is in two groups")));
                }
            }
        }
        Ok(GroupPartition { params, groups })
    }

    /// No piggybacks at all; the pair degenerates to two RS stripes.
    pub fn empty(params: CodeParams) -> Self {
        GroupPartition {
            params,
            groups: Vec::new(),
        }
    }

    pub fn params(&self) -> CodeParams {
        self.params
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Group index holding data position `i`.
    pub fn group_of(&self, i: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&i))
    }

    /// True when every data position is in some group.
    pub fn is_covering(&self) -> bool {
        self.groups.iter().map(Vec::len).sum::<usize>() == self.params.k()
    }
}

/// Splits the data positions into `r - 1` contiguous groups whose sizes differ
/// by at most one, larger groups first. This minimizes `sum |g|^2`, and with it
/// the average data-node repair cost.
pub fn default_partition(params: CodeParams) -> Result<GroupPartition> {
    if params.r() < 2 {
        return Err(Error::NoPiggybackParity(params.r()));
    }
    let parts = (params.r() - 1).min(params.k());
    let (base, extra) = (params.k() / parts, params.k() % parts);
    let mut groups = Vec::with_capacity(parts);
    let mut next = 0;
    for g in 0..parts {
        let size = base + usize::from(g < extra);
        groups.push((next..next + size).collect());
        next += size;
    }
    GroupPartition::new(params, groups)
}

/// Contents of all `k + r` nodes for one pair of substripes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StripePair {
    a: Vec<Gf>,
    b: Vec<Gf>,
}

impl StripePair {
    pub fn from_parts(a: Vec<Gf>, b: Vec<Gf>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch("substripes differ in length".into()));
        }
        Ok(StripePair { a, b })
    }

    pub fn a(&self) -> &[Gf] {
        &self.a
    }

    pub fn b(&self) -> &[Gf] {
        &self.b
    }

    /// `(a, b)` symbols held by a node.
    pub fn node(&self, position: usize) -> (Gf, Gf) {
        (self.a[position], self.b[position])
    }

    pub fn get(&self, position: usize, sub: Substripe) -> Gf {
        match sub {
            Substripe::A => self.a[position],
            Substripe::B => self.b[position],
        }
    }

    /// Symbols stored across all nodes.
    pub fn stored_symbols(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

/// Which parity equation of which substripe fails.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParityViolation {
    pub substripe: Substripe,
    pub parity: usize,
}

/// Per-node repair costs and their averages, in symbol-units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostSummary {
    /// Cost of repairing each node when all others are alive.
    pub per_node: Vec<usize>,
    /// `2k`: RS repair of both substripes.
    pub rs_cost: usize,
    pub data_average: Ratio<u64>,
    pub all_average: Ratio<u64>,
}

impl CostSummary {
    /// Fraction of download saved over RS, averaged over data nodes.
    pub fn data_savings(&self) -> Ratio<u64> {
        Ratio::from_integer(1) - self.data_average / self.rs_cost as u64
    }

    /// Fraction saved with every node equally likely to fail.
    pub fn all_savings(&self) -> Ratio<u64> {
        Ratio::from_integer(1) - self.all_average / self.rs_cost as u64
    }
}

/// Piggybacked-RS codec.
#[derive(Clone, Debug)]
pub struct PiggybackCode {
    rs: RsCode,
    partition: GroupPartition,
}

impl PiggybackCode {
    pub fn new(rs: RsCode, partition: GroupPartition) -> Result<Self> {
        if rs.params() != partition.params() {
            return Err(Error::InvalidPartition(
                "partition built for different parameters".into(),
            ));
        }
        Ok(PiggybackCode { rs, partition })
    }

    /// Codec with [`default_partition`].
    pub fn with_default_partition(params: CodeParams) -> Result<Self> {
        let partition = default_partition(params)?;
        PiggybackCode::new(RsCode::new(params)?, partition)
    }

    pub fn params(&self) -> CodeParams {
        self.rs.params()
    }

    pub fn rs(&self) -> &RsCode {
        &self.rs
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    fn k(&self) -> usize {
        self.rs.params().k()
    }

    fn n(&self) -> usize {
        self.rs.params().n()
    }

    /// Piggyback carried by parity `j` of substripe b, given a's data.
    pub fn piggyback(&self, parity: usize, a_data: &[Gf]) -> Gf {
        if parity == 0 {
            return Gf::ZERO;
        }
        self.partition
            .groups()
            .get(parity - 1)
            .map_or(Gf::ZERO, |g| g.iter().map(|&i| a_data[i]).sum())
    }

    pub fn encode(&self, a_data: &[Gf], b_data: &[Gf]) -> Result<StripePair> {
        let a = self.rs.encode(a_data)?;
        let b = self.rs.encode(b_data)?;
        let mut b = b.symbols().to_vec();
        for j in 1..self.params().r() {
            b[self.k() + j] += self.piggyback(j, a_data);
        }
        Ok(StripePair {
            a: a.symbols().to_vec(),
            b,
        })
    }

    /// Every failing parity equation of a pair.
    pub fn violations(&self, pair: &StripePair) -> Vec<ParityViolation> {
        let k = self.k();
        let mut out: Vec<ParityViolation> = self
            .rs
            .violated_parities(pair.a())
            .into_iter()
            .map(|parity| ParityViolation {
                substripe: Substripe::A,
                parity,
            })
            .collect();
        let a_data = &pair.a()[..k];
        let b_data = &pair.b()[..k];
        for j in 0..self.params().r() {
            let expect = self.rs.parity_symbol(j, b_data) + self.piggyback(j, a_data);
            if expect != pair.b()[k + j] {
                out.push(ParityViolation {
                    substripe: Substripe::B,
                    parity: j,
                });
            }
        }
        out
    }

    /// Recovers both data vectors from any `k` or more nodes (lowest `k` used).
    pub fn decode(&self, available: &BTreeMap<usize, (Gf, Gf)>) -> Result<(Vec<Gf>, Vec<Gf>)> {
        let k = self.k();
        let from = self.rs.choose_positions(available.keys().copied())?;
        let a_vals: Vec<Gf> = from.iter().map(|p| available[p].0).collect();
        let a_data = self.rs.decode_from(&from, &a_vals)?;
        let b_vals: Vec<Gf> = from
            .iter()
            .map(|&p| {
                let raw = available[&p].1;
                if p >= k {
                    raw - self.piggyback(p - k, &a_data)
                } else {
                    raw
                }
            })
            .collect();
        let b_data = self.rs.decode_from(&from, &b_vals)?;
        Ok((a_data, b_data))
    }

    /// Repair of data node `i` with every other node alive.
    pub fn repair_data_node(&self, i: usize) -> Result<RepairPlan> {
        if i >= self.k() {
            return Err(Error::InvalidParams(format!("{i} is not a data position")));
        }
        match self.partition.group_of(i) {
            Some(g) => Ok(self.piggyback_repair(i, g)),
            None => Ok(self.fallback_plan(i, (0..self.n()).filter(|&p| p != i).take(self.k()).collect())),
        }
    }

    /// Repair of parity `j` (stripe position `k + j`) from all data nodes.
    pub fn repair_parity_node(&self, j: usize) -> Result<RepairPlan> {
        if j >= self.params().r() {
            return Err(Error::InvalidParams(format!("parity index {j} out of range")));
        }
        Ok(self.fallback_plan(self.k() + j, (0..self.k()).collect()))
    }

    /// Plan for rebuilding `missing` given the alive positions. Uses the
    /// reduced-download plans when only `missing` is lost; otherwise decodes
    /// both substripes from the lowest `k` alive nodes.
    pub fn repair_plan(&self, missing: usize, alive: &BTreeSet<usize>) -> Result<RepairPlan> {
        let n = self.n();
        if missing >= n {
            return Err(Error::InvalidParams(format!(
                "position {missing} outside stripe of {n}"
            )));
        }
        if alive.contains(&missing) {
            return Err(Error::InvalidPlan(format!("position {missing} is listed as alive")));
        }
        let usable: Vec<usize> = alive.iter().copied().filter(|&p| p < n).collect();
        if usable.len() < self.k() {
            return Err(Error::Unrecoverable {
                alive: usable.len(),
                needed: self.k(),
            });
        }
        if usable.len() == n - 1 {
            return if missing < self.k() {
                self.repair_data_node(missing)
            } else {
                self.repair_parity_node(missing - self.k())
            };
        }
        Ok(self.fallback_plan(missing, usable.into_iter().take(self.k()).collect()))
    }

    fn piggyback_repair(&self, i: usize, g: usize) -> RepairPlan {
        let k = self.k();
        let carrier = k + g + 1;
        let mut from: Vec<usize> = (0..k).filter(|&p| p != i).collect();
        from.push(k);
        let mut reads: Vec<Read> = from
            .iter()
            .map(|&node| Read {
                node,
                substripe: Substripe::B,
                count: 1,
            })
            .collect();
        reads.push(Read {
            node: carrier,
            substripe: Substripe::B,
            count: 1,
        });
        reads.extend(
            self.partition.groups()[g]
                .iter()
                .filter(|&&m| m != i)
                .map(|&node| Read {
                    node,
                    substripe: Substripe::A,
                    count: 1,
                }),
        );
        let recipe = vec![
            RecipeStep::Decode {
                substripe: Substripe::B,
                from,
            },
            RecipeStep::ExposeGroupSum { parity: g + 1 },
            RecipeStep::PeelGroup { group: g, target: i },
        ];
        RepairPlan::new(i, reads, recipe)
    }

    fn fallback_plan(&self, target: usize, from: Vec<usize>) -> RepairPlan {
        let k = self.k();
        let reads = from
            .iter()
            .flat_map(|&node| {
                [Substripe::A, Substripe::B].map(|substripe| Read {
                    node,
                    substripe,
                    count: 1,
                })
            })
            .collect();
        let mut recipe = vec![RecipeStep::Decode {
            substripe: Substripe::A,
            from: from.clone(),
        }];
        if from.iter().any(|&p| p > k) {
            recipe.push(RecipeStep::StripPiggybacks { from: from.clone() });
        }
        recipe.push(RecipeStep::Decode {
            substripe: Substripe::B,
            from,
        });
        if target >= k {
            for substripe in [Substripe::A, Substripe::B] {
                recipe.push(RecipeStep::Reencode {
                    substripe,
                    parity: target - k,
                });
            }
        }
        RepairPlan::new(target, reads, recipe)
    }

    /// Costs of every single-node repair, measured by building the plans.
    pub fn average_repair_cost(&self) -> Result<CostSummary> {
        let k = self.k();
        let per_node = (0..self.n())
            .map(|p| {
                let alive = (0..self.n()).filter(|&q| q != p).collect();
                self.repair_plan(p, &alive).map(|plan| plan.cost())
            })
            .collect::<Result<Vec<usize>>>()?;
        let data_sum: usize = per_node[..k].iter().sum();
        let all_sum: usize = per_node.iter().sum();
        Ok(CostSummary {
            rs_cost: 2 * k,
            data_average: Ratio::new(data_sum as u64, k as u64),
            all_average: Ratio::new(all_sum as u64, self.n() as u64),
            per_node,
        })
    }
}

/// Closed-form average data-node repair cost: `k + |g|` for members of group
/// `g`, `2k` for uncovered positions. Equals `k + sum |g|^2 / k` for a covering
/// partition.
pub fn closed_form_data_average(partition: &GroupPartition) -> Ratio<u64> {
    let k = partition.params().k() as u64;
    let covered: u64 = partition.groups().iter().map(|g| g.len() as u64).sum();
    let grouped: u64 = partition
        .groups()
        .iter()
        .map(|g| g.len() as u64 * (k + g.len() as u64))
        .sum();
    Ratio::new(grouped + (k - covered) * 2 * k, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{execute, PlanContext};

    fn params(k: usize, r: usize) -> CodeParams {
        CodeParams::new(k, r).unwrap()
    }

    fn toy() -> PiggybackCode {
        let p = params(2, 2);
        let part = GroupPartition::new(p, vec![vec![0]]).unwrap();
        PiggybackCode::new(RsCode::new(p).unwrap(), part).unwrap()
    }

    #[test]
    fn default_partitions() {
        let p = default_partition(params(10, 4)).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]]);
        let p = default_partition(params(2, 2)).unwrap();
        assert_eq!(p.groups(), &[vec![0, 1]]);
        assert!(matches!(
            default_partition(params(5, 1)),
            Err(Error::NoPiggybackParity(1))
        ));
        // more piggyback parities than data positions
        let p = default_partition(params(2, 5)).unwrap();
        assert_eq!(p.groups(), &[vec![0], vec![1]]);
    }

    #[test]
    fn partition_validation() {
        let p = params(4, 3);
        assert!(GroupPartition::new(p, vec![vec![0, 1], vec![1]]).is_err());
        assert!(GroupPartition::new(p, vec![vec![0], vec![1], vec![2]]).is_err());
        assert!(GroupPartition::new(p, vec![vec![4]]).is_err());
        assert!(GroupPartition::new(p, vec![vec![]]).is_err());
        assert!(matches!(
            GroupPartition::new(params(4, 1), vec![vec![0]]),
            Err(Error::NoPiggybackParity(1))
        ));
        assert!(GroupPartition::new(params(4, 1), vec![]).is_ok());
    }

    #[test]
    fn toy_layout() {
        let c = toy();
        let (a1, a2, b1, b2) = (Gf(0x21), Gf(0x9C), Gf(0x47), Gf(0xE3));
        let pair = c.encode(&[a1, a2], &[b1, b2]).unwrap();
        assert_eq!(pair.node(0), (a1, b1));
        assert_eq!(pair.node(1), (a2, b2));
        assert_eq!(pair.node(2), (a1 + a2, b1 + b2));
        assert_eq!(pair.node(3), (a1 + Gf(2) * a2, b1 + Gf(2) * b2 + a1));
        assert_eq!(pair.stored_symbols(), 8);
        assert!(c.violations(&pair).is_empty());
    }

    #[test]
    fn zero_a_gives_plain_b() {
        let c = PiggybackCode::with_default_partition(params(10, 4)).unwrap();
        let b: Vec<Gf> = (1..=10).map(Gf).collect();
        let pair = c.encode(&[Gf::ZERO; 10], &b).unwrap();
        assert_eq!(pair.b(), c.rs().encode(&b).unwrap().symbols());
    }

    #[test]
    fn toy_repair_node0() {
        let c = toy();
        let plan = c.repair_data_node(0).unwrap();
        assert_eq!(plan.cost(), 3);
        let reads: Vec<(usize, Substripe)> = plan.reads().iter().map(|r| (r.node, r.substripe)).collect();
        assert_eq!(reads, vec![(1, Substripe::B), (2, Substripe::B), (3, Substripe::B)]);
    }

    #[test]
    fn toy_costs() {
        let s = toy().average_repair_cost().unwrap();
        assert_eq!(s.per_node, vec![3, 4, 4, 4]);
        assert_eq!(s.rs_cost, 4);
    }

    #[test]
    fn ten_four_costs() {
        let c = PiggybackCode::with_default_partition(params(10, 4)).unwrap();
        assert_eq!(c.repair_data_node(0).unwrap().cost(), 14);
        assert_eq!(c.repair_data_node(9).unwrap().cost(), 13);
        assert_eq!(c.repair_parity_node(0).unwrap().cost(), 20);
        assert_eq!(c.repair_parity_node(3).unwrap().cost(), 20);
        let s = c.average_repair_cost().unwrap();
        assert_eq!(s.data_average, Ratio::new(134, 10));
        assert_eq!(s.data_savings(), Ratio::new(33, 100));
        assert_eq!(s.all_average, Ratio::new(214, 14));
        assert_eq!(closed_form_data_average(c.partition()), s.data_average);
    }

    #[test]
    fn parity_repair_reencodes_piggyback() {
        let c = toy();
        let (a1, a2, b1, b2) = (Gf(5), Gf(0x80), Gf(0x33), Gf(0xF1));
        let pair = c.encode(&[a1, a2], &[b1, b2]).unwrap();
        let plan = c.repair_parity_node(1).unwrap();
        assert_eq!(plan.cost(), 4);
        let ctx = PlanContext::piggybacked(c.rs(), c.partition());
        let out = execute(&plan, &ctx, |n, s| Some(pair.get(n, s))).unwrap();
        assert_eq!(out.b, Some(b1 + Gf(2) * b2 + a1));
        assert_eq!(out.a, a1 + Gf(2) * a2);
    }

    #[test]
    fn decode_from_parities_only() {
        let c = toy();
        let (a1, a2, b1, b2) = (Gf(0x10), Gf(0x20), Gf(0x30), Gf(0x40));
        let pair = c.encode(&[a1, a2], &[b1, b2]).unwrap();
        let avail: BTreeMap<usize, (Gf, Gf)> = [(2, pair.node(2)), (3, pair.node(3))].into();
        assert_eq!(c.decode(&avail).unwrap(), (vec![a1, a2], vec![b1, b2]));
        let one: BTreeMap<usize, (Gf, Gf)> = [(3, pair.node(3))].into();
        assert!(matches!(c.decode(&one), Err(Error::InsufficientSymbols { .. })));
    }

    #[test]
    fn multi_failure_falls_back() {
        let c = PiggybackCode::with_default_partition(params(10, 4)).unwrap();
        let alive: BTreeSet<usize> = (0..14).filter(|&p| p != 0 && p != 11).collect();
        let plan = c.repair_plan(0, &alive).unwrap();
        assert_eq!(plan.cost(), 20);
        let alive: BTreeSet<usize> = (0..9).collect();
        assert!(matches!(
            c.repair_plan(12, &alive),
            Err(Error::Unrecoverable { alive: 9, needed: 10 })
        ));
    }
}
