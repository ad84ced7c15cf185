//! Repair plans: an explicit read set, a recipe over the symbols read, and the
//! total download cost. Plans are produced by the RS and piggybacked codecs and
//! run by [`execute`], which only ever sees the symbols named in the read set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf256::Gf;
use crate::piggyback::GroupPartition;
use crate::rs_code::RsCode;

/// Which of the two coupled byte-level substripes a symbol belongs to.
/// Plain RS stripes only use `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Substripe {
    A,
    B,
}

/// One download: `count` symbol-units of `substripe` from stripe position `node`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Read {
    pub node: usize,
    pub substripe: Substripe,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum RecipeStep {
    /// Decode all data symbols of `substripe` from the clean symbols at `from`
    /// (exactly `k` positions).
    Decode { substripe: Substripe, from: Vec<usize> },
    /// Remove the piggybacks from the substripe-b parity symbols at `from`;
    /// needs the substripe-a data of every affected group.
    StripPiggybacks { from: Vec<usize> },
    /// Subtract `p_parity(b)` from the piggybacked b-symbol of that parity,
    /// leaving the a-sum of the group it carries.
    ExposeGroupSum { parity: usize },
    /// Subtract the other members' a-symbols from the group sum to isolate
    /// `a_target`.
    PeelGroup { group: usize, target: usize },
    /// Recompute a parity symbol of `substripe` (with its piggyback for `b`).
    Reencode { substripe: Substripe, parity: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairPlan {
    target: usize,
    reads: Vec<Read>,
    recipe: Vec<RecipeStep>,
    cost: usize,
}

impl RepairPlan {
    pub(crate) fn new(target: usize, reads: Vec<Read>, recipe: Vec<RecipeStep>) -> Self {
        let cost = reads.iter().map(|r| r.count).sum();
        RepairPlan {
            target,
            reads,
            recipe,
            cost,
        }
    }

    /// Stripe position being rebuilt.
    pub fn target(&self) -> usize {
        self.target
    }

    pub fn reads(&self) -> &[Read] {
        &self.reads
    }

    pub fn recipe(&self) -> &[RecipeStep] {
        &self.recipe
    }

    /// Total symbol-units downloaded.
    pub fn cost(&self) -> usize {
        self.cost
    }

    /// Number of symbol-units read from each substripe.
    pub fn cost_by_substripe(&self) -> (usize, usize) {
        self.reads.iter().fold((0, 0), |(a, b), r| match r.substripe {
            Substripe::A => (a + r.count, b),
            Substripe::B => (a, b + r.count),
        })
    }

    /// True when the plan downloads only the substripe-a symbol of each source,
    /// i.e. it is a plain single-substripe RS plan.
    pub fn touches_b(&self) -> bool {
        self.reads.iter().any(|r| r.substripe == Substripe::B)
    }

    /// Each output symbol is a linear function of the downloaded symbols.
    /// Returns those coefficients, one per entry of [`RepairPlan::reads`].
    pub fn linear_form(&self, ctx: &PlanContext<'_>) -> Result<LinearRepair> {
        let n = self.reads.len();
        let mut a = vec![Gf::ZERO; n];
        let mut b = None;
        for (j, read) in self.reads.iter().enumerate() {
            let key = (read.node, read.substripe);
            let out = execute(self, ctx, |node, sub| {
                Some(if (node, sub) == key { Gf::ONE } else { Gf::ZERO })
            })?;
            a[j] = out.a;
            if let Some(bv) = out.b {
                b.get_or_insert_with(|| vec![Gf::ZERO; n])[j] = bv;
            }
        }
        Ok(LinearRepair { a, b })
    }
}

/// Coefficients expressing the repaired symbols in terms of the plan's reads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearRepair {
    pub a: Vec<Gf>,
    pub b: Option<Vec<Gf>>,
}

/// Code context a plan is executed against.
#[derive(Clone, Copy, Debug)]
pub struct PlanContext<'a> {
    pub code: &'a RsCode,
    pub partition: Option<&'a GroupPartition>,
}

impl<'a> PlanContext<'a> {
    pub fn rs(code: &'a RsCode) -> Self {
        PlanContext { code, partition: None }
    }

    pub fn piggybacked(code: &'a RsCode, partition: &'a GroupPartition) -> Self {
        PlanContext {
            code,
            partition: Some(partition),
        }
    }

    fn group_of_parity(&self, parity: usize) -> Option<&'a [usize]> {
        let p = self.partition?;
        if parity == 0 {
            return None;
        }
        p.groups().get(parity - 1).map(|g| g.as_slice())
    }
}

/// Result of running a plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepairOutput {
    /// Repaired symbol of substripe a (the only substripe for plain RS).
    pub a: Gf,
    /// Repaired symbol of substripe b, for piggybacked plans.
    pub b: Option<Gf>,
    /// Distinct downloaded symbols the recipe actually consumed.
    pub consumed: usize,
}

struct Machine<'a, 'c> {
    ctx: &'a PlanContext<'c>,
    fetched: BTreeMap<(usize, Substripe), Gf>,
    used: BTreeSet<(usize, Substripe)>,
    stripped: BTreeMap<usize, Gf>,
    a_data: Vec<Option<Gf>>,
    b_data: Vec<Option<Gf>>,
    group_sums: BTreeMap<usize, Gf>,
    a_out: Option<Gf>,
    b_out: Option<Gf>,
}

impl<'a, 'c> Machine<'a, 'c> {
    fn k(&self) -> usize {
        self.ctx.code.params().k()
    }

    fn take(&mut self, node: usize, sub: Substripe) -> Result<Gf> {
        let v = *self.fetched.get(&(node, sub)).ok_or_else(|| {
            Error::InvalidPlan(format!("recipe needs {sub:?} symbol of node {node}, which is not read"))
        })?;
        self.used.insert((node, sub));
        Ok(v)
    }

    fn clean(&mut self, node: usize, sub: Substripe) -> Result<Gf> {
        let k = self.k();
        if sub == Substripe::B && node > k && self.ctx.group_of_parity(node - k).is_some() {
            return self.stripped.get(&node).copied().ok_or_else(|| {
                Error::InvalidPlan(format!("b-symbol of parity node {node} still carries its piggyback"))
            });
        }
        self.take(node, sub)
    }

    fn data(&self, sub: Substripe) -> &[Option<Gf>] {
        match sub {
            Substripe::A => &self.a_data,
            Substripe::B => &self.b_data,
        }
    }

    fn full_data(&self, sub: Substripe) -> Result<Vec<Gf>> {
        self.data(sub)
            .iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::InvalidPlan(format!("{sub:?} data {i} unknown"))))
            .collect()
    }

    fn group_a_sum(&self, group: &[usize]) -> Result<Gf> {
        group
            .iter()
            .map(|&i| self.a_data[i].ok_or_else(|| Error::InvalidPlan(format!("a data {i} unknown"))))
            .sum()
    }

    fn step(&mut self, step: &RecipeStep) -> Result<()> {
        let code = self.ctx.code;
        let k = self.k();
        match step {
            RecipeStep::Decode { substripe, from } => {
                let values = from
                    .iter()
                    .map(|&n| self.clean(n, *substripe))
                    .collect::<Result<Vec<Gf>>>()?;
                let data = code.decode_from(from, &values)?;
                let slot = match substripe {
                    Substripe::A => &mut self.a_data,
                    Substripe::B => &mut self.b_data,
                };
                for (dst, v) in slot.iter_mut().zip(data) {
                    *dst = Some(v);
                }
            }
            RecipeStep::StripPiggybacks { from } => {
                for &node in from {
                    if node <= k {
                        continue;
                    }
                    if let Some(group) = self.ctx.group_of_parity(node - k) {
                        let pig = self.group_a_sum(group)?;
                        let raw = self.take(node, Substripe::B)?;
                        self.stripped.insert(node, raw - pig);
                    }
                }
            }
            RecipeStep::ExposeGroupSum { parity } => {
                if self.ctx.group_of_parity(*parity).is_none() {
                    return Err(Error::InvalidPlan(format!("parity {parity} carries no piggyback")));
                }
                let b = self.full_data(Substripe::B)?;
                let raw = self.take(k + parity, Substripe::B)?;
                let sum = raw - code.parity_symbol(*parity, &b);
                self.group_sums.insert(parity - 1, sum);
            }
            RecipeStep::PeelGroup { group, target } => {
                let members = self
                    .ctx
                    .partition
                    .and_then(|p| p.groups().get(*group))
                    .ok_or_else(|| Error::InvalidPlan(format!("no group {group}")))?;
                let mut v = *self
                    .group_sums
                    .get(group)
                    .ok_or_else(|| Error::InvalidPlan(format!("group {group} sum not exposed")))?;
                for &m in members.iter().filter(|&&m| m != *target) {
                    v -= self.take(m, Substripe::A)?;
                }
                self.a_data[*target] = Some(v);
            }
            RecipeStep::Reencode { substripe, parity } => {
                let data = self.full_data(*substripe)?;
                let mut v = code.parity_symbol(*parity, &data);
                if *substripe == Substripe::B {
                    if let Some(group) = self.ctx.group_of_parity(*parity) {
                        v += self.group_a_sum(group)?;
                    }
                }
                match substripe {
                    Substripe::A => self.a_out = Some(v),
                    Substripe::B => self.b_out = Some(v),
                }
            }
        }
        Ok(())
    }
}

/// Runs `plan`. `fetch` is asked once for every entry of the read set and for
/// nothing else; a `None` answer means the source is unavailable.
pub fn execute<F>(plan: &RepairPlan, ctx: &PlanContext<'_>, mut fetch: F) -> Result<RepairOutput>
where
    F: FnMut(usize, Substripe) -> Option<Gf>,
{
    let k = ctx.code.params().k();
    let mut fetched = BTreeMap::new();
    for read in &plan.reads {
        let v = fetch(read.node, read.substripe).ok_or(Error::Unrecoverable {
            alive: fetched.len(),
            needed: plan.reads.len(),
        })?;
        fetched.insert((read.node, read.substripe), v);
    }
    let mut m = Machine {
        ctx,
        fetched,
        used: BTreeSet::new(),
        stripped: BTreeMap::new(),
        a_data: vec![None; k],
        b_data: vec![None; k],
        group_sums: BTreeMap::new(),
        a_out: None,
        b_out: None,
    };
    for step in &plan.recipe {
        m.step(step)?;
    }
    let target = plan.target;
    let (a, b) = if target < k {
        (m.a_data[target], m.b_data[target])
    } else {
        (m.a_out, m.b_out)
    };
    let a = a.ok_or_else(|| Error::InvalidPlan(format!("recipe never produced node {target}")))?;
    if ctx.partition.is_some() && b.is_none() {
        return Err(Error::InvalidPlan(format!(
            "recipe never produced the b-symbol of node {target}"
        )));
    }
    Ok(RepairOutput {
        a,
        b: if ctx.partition.is_some() { b } else { None },
        consumed: m.used.len(),
    })
}
