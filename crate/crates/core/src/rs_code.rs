//! Baseline systematic (k, r) Reed-Solomon codec with erasure decoding and
//! single-unit repair planning.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf256::{mul_acc, Gf};
use crate::linalg::GeneratorMatrix;
use crate::plan::{Read, RecipeStep, RepairPlan, Substripe};

/// Code dimensions: `k` data units and `r` parity units per stripe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct CodeParams {
    k: usize,
    r: usize,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    k: usize,
    r: usize,
}

impl TryFrom<RawParams> for CodeParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        CodeParams::new(raw.k, raw.r)
    }
}

impl From<CodeParams> for RawParams {
    fn from(p: CodeParams) -> Self {
        RawParams { k: p.k, r: p.r }
    }
}

impl CodeParams {
    pub fn new(k: usize, r: usize) -> Result<Self> {
        if k == 0 || r == 0 || k + r > 256 {
            return Err(Error::InvalidParams(format!(
                "need k >= 1, r >= 1, k + r <= 256; got k={k}, r={r}"
            )));
        }
        Ok(CodeParams { k, r })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Stripe width `k + r`.
    pub fn n(&self) -> usize {
        self.k + self.r
    }

    pub fn is_data(&self, position: usize) -> bool {
        position < self.k
    }

    /// Storage overhead `(k + r) / k`.
    pub fn overhead(&self) -> f64 {
        self.n() as f64 / self.k as f64
    }
}

/// One codeword: positions `0..k` are data, `k..k+r` parity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stripe {
    params: CodeParams,
    symbols: Vec<Gf>,
}

impl Stripe {
    pub fn params(&self) -> CodeParams {
        self.params
    }

    pub fn symbols(&self) -> &[Gf] {
        &self.symbols
    }

    pub fn data(&self) -> &[Gf] {
        &self.symbols[..self.params.k]
    }

    pub fn parity(&self) -> &[Gf] {
        &self.symbols[self.params.k..]
    }

    pub fn symbol(&self, position: usize) -> Gf {
        self.symbols[position]
    }
}

/// Reed-Solomon codec bound to one generator matrix.
#[derive(Clone, Debug)]
pub struct RsCode {
    params: CodeParams,
    generator: GeneratorMatrix,
}

impl RsCode {
    pub fn new(params: CodeParams) -> Result<Self> {
        let generator = GeneratorMatrix::for_code(params.k, params.r)?;
        Ok(RsCode { params, generator })
    }

    /// Uses a caller-supplied generator; it must be systematic with matching dimensions.
    pub fn with_generator(params: CodeParams, generator: GeneratorMatrix) -> Result<Self> {
        if generator.k() != params.k || generator.r() != params.r || !generator.is_systematic() {
            return Err(Error::InvalidParams(
                "generator does not match code parameters or is not systematic".into(),
            ));
        }
        Ok(RsCode { params, generator })
    }

    pub fn params(&self) -> CodeParams {
        self.params
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    /// Parity function `p_j` applied to `data`.
    pub fn parity_symbol(&self, j: usize, data: &[Gf]) -> Gf {
        self.generator
            .parity_row(j)
            .iter()
            .zip(data)
            .map(|(&c, &d)| c * d)
            .sum()
    }

    pub fn encode(&self, data: &[Gf]) -> Result<Stripe> {
        self.check_data_len(data)?;
        let mut symbols = Vec::with_capacity(self.params.n());
        symbols.extend_from_slice(data);
        symbols.extend((0..self.params.r).map(|j| self.parity_symbol(j, data)));
        Ok(Stripe {
            params: self.params,
            symbols,
        })
    }

    /// Wraps raw symbols as a stripe after checking every parity equation.
    pub fn stripe_from_symbols(&self, symbols: Vec<Gf>) -> Result<Stripe> {
        if symbols.len() != self.params.n() {
            return Err(Error::DimensionMismatch(format!(
                "stripe of {} symbols for n = {}",
                symbols.len(),
                self.params.n()
            )));
        }
        let stripe = Stripe {
            params: self.params,
            symbols,
        };
        if self.violated_parities(stripe.symbols()).is_empty() {
            Ok(stripe)
        } else {
            Err(Error::CorruptStripe)
        }
    }

    /// Parity indices whose equation fails for `symbols` (length `k + r`).
    pub fn violated_parities(&self, symbols: &[Gf]) -> Vec<usize> {
        let data = &symbols[..self.params.k];
        (0..self.params.r)
            .filter(|&j| self.parity_symbol(j, data) != symbols[self.params.k + j])
            .collect()
    }

    /// Recovers the data from any `k` or more positions, using the lowest `k`.
    pub fn decode(&self, available: &BTreeMap<usize, Gf>) -> Result<Vec<Gf>> {
        let chosen = self.choose_positions(available.keys().copied())?;
        let values: Vec<Gf> = chosen.iter().map(|p| available[p]).collect();
        self.decode_from(&chosen, &values)
    }

    /// Like [`RsCode::decode`], then re-encodes and checks every supplied symbol.
    pub fn decode_checked(&self, available: &BTreeMap<usize, Gf>) -> Result<Vec<Gf>> {
        let data = self.decode(available)?;
        let stripe = self.encode(&data)?;
        if available.iter().all(|(&p, &v)| stripe.symbol(p) == v) {
            Ok(data)
        } else {
            Err(Error::CorruptStripe)
        }
    }

    /// Decodes from exactly `k` (position, value) pairs.
    pub fn decode_from(&self, positions: &[usize], values: &[Gf]) -> Result<Vec<Gf>> {
        let k = self.params.k;
        if positions.len() != k || values.len() != k {
            return Err(Error::InsufficientSymbols {
                needed: k,
                available: positions.len().min(values.len()),
            });
        }
        if positions.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(values.to_vec());
        }
        self.generator.decode_matrix(positions)?.mul_vec(values)
    }

    /// Lowest `k` distinct valid positions.
    pub(crate) fn choose_positions(&self, positions: impl Iterator<Item = usize>) -> Result<Vec<usize>> {
        let set: BTreeSet<usize> = positions.filter(|&p| p < self.params.n()).collect();
        if set.len() < self.params.k {
            return Err(Error::InsufficientSymbols {
                needed: self.params.k,
                available: set.len(),
            });
        }
        Ok(set.into_iter().take(self.params.k).collect())
    }

    /// Plan for rebuilding `missing` from `alive`: read the lowest `k` alive
    /// positions, decode, and re-encode if the missing unit is a parity.
    /// The cost is always `k` symbol-units.
    pub fn repair_plan(&self, missing: usize, alive: &BTreeSet<usize>) -> Result<RepairPlan> {
        let n = self.params.n();
        if missing >= n {
            return Err(Error::InvalidParams(format!(
                "position {missing} outside stripe of {n}"
            )));
        }
        if alive.contains(&missing) {
            return Err(Error::InvalidPlan(format!("position {missing} is listed as alive")));
        }
        let usable = alive.iter().filter(|&&p| p < n).count();
        if usable < self.params.k {
            return Err(Error::Unrecoverable {
                alive: usable,
                needed: self.params.k,
            });
        }
        let from = self.choose_positions(alive.iter().copied())?;
        let reads = from
            .iter()
            .map(|&node| Read {
                node,
                substripe: Substripe::A,
                count: 1,
            })
            .collect();
        let mut recipe = vec![RecipeStep::Decode {
            substripe: Substripe::A,
            from,
        }];
        if !self.params.is_data(missing) {
            recipe.push(RecipeStep::Reencode {
                substripe: Substripe::A,
                parity: missing - self.params.k,
            });
        }
        Ok(RepairPlan::new(missing, reads, recipe))
    }

    /// Byte-slice encoder: `parity[j][t] = p_j(data[..][t])`.
    pub fn encode_slices(&self, data: &[&[u8]], parity: &mut [&mut [u8]]) -> Result<()> {
        if data.len() != self.params.k || parity.len() != self.params.r {
            return Err(Error::DimensionMismatch(format!(
                "{} data / {} parity slices for ({}, {})",
                data.len(),
                parity.len(),
                self.params.k,
                self.params.r
            )));
        }
        let len = data.first().map_or(0, |d| d.len());
        if data.iter().any(|d| d.len() != len) || parity.iter().any(|p| p.len() != len) {
            return Err(Error::DimensionMismatch("slices differ in length".into()));
        }
        for (j, out) in parity.iter_mut().enumerate() {
            out.fill(0);
            for (src, &c) in data.iter().zip(self.generator.parity_row(j)) {
                mul_acc(out, src, c);
            }
        }
        Ok(())
    }

    fn check_data_len(&self, data: &[Gf]) -> Result<()> {
        if data.len() != self.params.k {
            return Err(Error::DimensionMismatch(format!(
                "expected {} data symbols, got {}",
                self.params.k,
                data.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{execute, PlanContext};

    fn code(k: usize, r: usize) -> RsCode {
        RsCode::new(CodeParams::new(k, r).unwrap()).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(CodeParams::new(0, 1).is_err());
        assert!(CodeParams::new(1, 0).is_err());
        assert!(CodeParams::new(250, 7).is_err());
        assert!(CodeParams::new(250, 6).is_ok());
        assert!((CodeParams::new(10, 4).unwrap().overhead() - 1.4).abs() < 1e-12);
        assert!(serde_json::from_str::<CodeParams>(r#"{"k":0,"r":2}"#).is_err());
    }

    #[test]
    fn toy_parities() {
        let c = code(2, 2);
        let (a1, a2) = (Gf(0x37), Gf(0xC9));
        let s = c.encode(&[a1, a2]).unwrap();
        assert_eq!(s.parity(), &[a1 + a2, a1 + Gf(2) * a2]);
    }

    #[test]
    fn zero_data_zero_stripe() {
        for (k, r) in [(1, 1), (2, 2), (10, 4), (6, 3)] {
            let s = code(k, r).encode(&vec![Gf::ZERO; k]).unwrap();
            assert!(s.symbols().iter().all(|g| g.is_zero()));
        }
    }

    #[test]
    fn encode_wrong_length() {
        assert!(matches!(code(2, 2).encode(&[Gf(1)]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn decode_paths() {
        let c = code(2, 2);
        let (a1, a2) = (Gf(0x11), Gf(0x92));
        let s = c.encode(&[a1, a2]).unwrap();
        let all_data: BTreeMap<_, _> = [(0, a1), (1, a2)].into();
        assert_eq!(c.decode(&all_data).unwrap(), vec![a1, a2]);
        let fig1: BTreeMap<_, _> = [(1, a2), (2, a1 + a2)].into();
        assert_eq!(c.decode(&fig1).unwrap(), vec![a1, a2]);
        let one: BTreeMap<_, _> = [(3, s.symbol(3))].into();
        assert!(matches!(
            c.decode(&one),
            Err(Error::InsufficientSymbols {
                needed: 2,
                available: 1
            })
        ));
        let mut bad: BTreeMap<_, _> = (0..4).map(|p| (p, s.symbol(p))).collect();
        assert_eq!(c.decode_checked(&bad).unwrap(), vec![a1, a2]);
        bad.insert(3, s.symbol(3) + Gf(1));
        assert!(matches!(c.decode_checked(&bad), Err(Error::CorruptStripe)));
    }

    #[test]
    fn repair_plan_examples() {
        let c = code(2, 2);
        let plan = c.repair_plan(0, &[1, 2, 3].into()).unwrap();
        assert_eq!(plan.cost(), 2);
        let nodes: Vec<usize> = plan.reads().iter().map(|r| r.node).collect();
        assert_eq!(nodes, vec![1, 2]);
        assert!(matches!(
            c.repair_plan(0, &[1].into()),
            Err(Error::Unrecoverable { alive: 1, needed: 2 })
        ));

        let c = code(10, 4);
        let alive: BTreeSet<usize> = (0..14).filter(|&p| p != 5).collect();
        assert_eq!(c.repair_plan(5, &alive).unwrap().cost(), 10);
    }

    #[test]
    fn every_single_repair_of_a_10_4_stripe() {
        let c = code(10, 4);
        let data: Vec<Gf> = (0..10u8).map(|i| Gf(i.wrapping_mul(37).wrapping_add(11))).collect();
        let s = c.encode(&data).unwrap();
        let ctx = PlanContext::rs(&c);
        for missing in 0..14 {
            let alive: BTreeSet<usize> = (0..14).filter(|&p| p != missing).collect();
            let plan = c.repair_plan(missing, &alive).unwrap();
            assert_eq!(plan.cost(), 10);
            let out = execute(&plan, &ctx, |node, _| Some(s.symbol(node))).unwrap();
            assert_eq!(out.a, s.symbol(missing));
            assert_eq!(out.consumed, plan.cost());
        }
    }

    #[test]
    fn encode_slices_matches_scalar() {
        let c = code(4, 3);
        let data: Vec<Vec<u8>> = (0..4)
            .map(|i| (0..50).map(|t| (t * 7 + i * 13) as u8).collect())
            .collect();
        let refs: Vec<&[u8]> = data.iter().map(|d| d.as_slice()).collect();
        let mut parity = vec![vec![0u8; 50]; 3];
        let mut prefs: Vec<&mut [u8]> = parity.iter_mut().map(|p| p.as_mut_slice()).collect();
        c.encode_slices(&refs, &mut prefs).unwrap();
        for t in 0..50 {
            let col: Vec<Gf> = data.iter().map(|d| Gf(d[t])).collect();
            let s = c.encode(&col).unwrap();
            for (p, want) in parity.iter().zip(s.parity()) {
                assert_eq!(Gf(p[t]), *want);
            }
        }
    }
}
