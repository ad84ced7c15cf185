//! Block layer: files are cut into fixed-size blocks, blocks are grouped into
//! sets of `k`, and each set is encoded byte-position by byte-position into `r`
//! parity blocks. For Piggybacked-RS, even offsets of every block form
//! substripe `a` and odd offsets substripe `b`.
//!
//! On disk a stripe is `k + r` files named `<stripe-id>.<index>.blk` plus a
//! `<stripe-id>.manifest.json`; a file additionally gets `<name>.index.json`
//! listing its stripes in order.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Read as IoRead, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf256::{mul_acc, Gf};
use crate::par::{self, Parallelism};
use crate::piggyback::{GroupPartition, PiggybackCode};
use crate::plan::{PlanContext, RepairPlan, Substripe};
use crate::rs_code::{CodeParams, RsCode};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// 256 MiB.
pub const DEFAULT_BLOCK_SIZE: usize = 256 * 1024 * 1024;

const CHUNK: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Codec {
    Rs,
    PiggybackedRs,
}

/// How a set of `k` data blocks is encoded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockSetLayout {
    block_size: usize,
    params: CodeParams,
    codec: Codec,
    partition: Option<GroupPartition>,
}

impl BlockSetLayout {
    pub fn rs(params: CodeParams, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Config("block size must be positive".into()));
        }
        Ok(BlockSetLayout {
            block_size,
            params,
            codec: Codec::Rs,
            partition: None,
        })
    }

    pub fn piggybacked(params: CodeParams, block_size: usize, partition: GroupPartition) -> Result<Self> {
        if block_size == 0 || !block_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "piggybacked layouts need a positive even block size, got {block_size}"
            )));
        }
        if partition.params() != params {
            return Err(Error::InvalidPartition(
                "partition built for different parameters".into(),
            ));
        }
        Ok(BlockSetLayout {
            block_size,
            params,
            codec: Codec::PiggybackedRs,
            partition: Some(partition),
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn params(&self) -> CodeParams {
        self.params
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn partition(&self) -> Option<&GroupPartition> {
        self.partition.as_ref()
    }

    /// Bytes in one symbol-unit: a whole block for RS, half a block otherwise.
    pub fn symbol_bytes(&self) -> usize {
        match self.codec {
            Codec::Rs => self.block_size,
            Codec::PiggybackedRs => self.block_size / 2,
        }
    }

    fn block_codec(&self) -> Result<BlockCodec> {
        let rs = RsCode::new(self.params)?;
        Ok(match &self.partition {
            None => BlockCodec::Rs(rs),
            Some(p) => BlockCodec::Piggybacked(PiggybackCode::new(rs, p.clone())?),
        })
    }
}

enum BlockCodec {
    Rs(RsCode),
    Piggybacked(PiggybackCode),
}

impl BlockCodec {
    fn rs(&self) -> &RsCode {
        match self {
            BlockCodec::Rs(rs) => rs,
            BlockCodec::Piggybacked(pb) => pb.rs(),
        }
    }

    fn context(&self) -> PlanContext<'_> {
        match self {
            BlockCodec::Rs(rs) => PlanContext::rs(rs),
            BlockCodec::Piggybacked(pb) => PlanContext::piggybacked(pb.rs(), pb.partition()),
        }
    }

    fn repair_plan(&self, missing: usize, alive: &BTreeSet<usize>) -> Result<RepairPlan> {
        match self {
            BlockCodec::Rs(rs) => rs.repair_plan(missing, alive),
            BlockCodec::Piggybacked(pb) => pb.repair_plan(missing, alive),
        }
    }

    /// Parity bytes for one aligned chunk of the data blocks.
    fn encode_chunk(&self, data: &[&[u8]]) -> Vec<Vec<u8>> {
        let params = self.rs().params();
        let len = data[0].len();
        match self {
            BlockCodec::Rs(rs) => {
                let mut parity = vec![vec![0u8; len]; params.r()];
                let mut refs: Vec<&mut [u8]> = parity.iter_mut().map(|p| p.as_mut_slice()).collect();
                rs.encode_slices(data, &mut refs)
                    .expect("chunk dimensions checked by caller");
                parity
            }
            BlockCodec::Piggybacked(pb) => {
                let halves: Vec<(Vec<u8>, Vec<u8>)> = data.iter().map(|d| deinterleave(d)).collect();
                let a: Vec<&[u8]> = halves.iter().map(|h| h.0.as_slice()).collect();
                let b: Vec<&[u8]> = halves.iter().map(|h| h.1.as_slice()).collect();
                let mut pa = vec![vec![0u8; len / 2]; params.r()];
                let mut pbuf = vec![vec![0u8; len / 2]; params.r()];
                {
                    let mut refs: Vec<&mut [u8]> = pa.iter_mut().map(|p| p.as_mut_slice()).collect();
                    pb.rs()
                        .encode_slices(&a, &mut refs)
                        .expect("chunk dimensions checked by caller");
                    let mut refs: Vec<&mut [u8]> = pbuf.iter_mut().map(|p| p.as_mut_slice()).collect();
                    pb.rs()
                        .encode_slices(&b, &mut refs)
                        .expect("chunk dimensions checked by caller");
                }
                for (g, members) in pb.partition().groups().iter().enumerate() {
                    for &m in members {
                        mul_acc(&mut pbuf[g + 1], a[m], Gf::ONE);
                    }
                }
                pa.iter().zip(&pbuf).map(|(x, y)| interleave(x, y)).collect()
            }
        }
    }

    fn encode_parity(&self, data: &[&[u8]], mode: Parallelism) -> Vec<Vec<u8>> {
        let r = self.rs().params().r();
        let len = data.first().map_or(0, |d| d.len());
        let starts: Vec<usize> = (0..len).step_by(CHUNK).collect();
        let chunks = par::map_with(mode, starts, |start| {
            let end = (start + CHUNK).min(len);
            let slices: Vec<&[u8]> = data.iter().map(|d| &d[start..end]).collect();
            self.encode_chunk(&slices)
        });
        let mut parity = vec![Vec::with_capacity(len); r];
        for chunk in chunks {
            for (dst, src) in parity.iter_mut().zip(chunk) {
                dst.extend_from_slice(&src);
            }
        }
        parity
    }
}

/// Splits even and odd offsets.
pub fn deinterleave(block: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let a = block.iter().step_by(2).copied().collect();
    let b = block.iter().skip(1).step_by(2).copied().collect();
    (a, b)
}

/// Inverse of [`deinterleave`] for equal-length halves.
pub fn interleave(a: &[u8], b: &[u8]) -> Vec<u8> {
    debug_assert_eq!(a.len(), b.len());
    let mut out = Vec::with_capacity(a.len() * 2);
    for (x, y) in a.iter().zip(b) {
        out.push(*x);
        out.push(*y);
    }
    out
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockRole {
    Data,
    Parity,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub index: usize,
    pub role: BlockRole,
    pub crc32: u32,
    /// File name relative to the manifest's directory.
    pub path: String,
}

/// Metadata for one stripe of `k + r` blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripeManifest {
    pub format_version: u32,
    pub stripe_id: String,
    pub codec: Codec,
    pub k: usize,
    pub r: usize,
    pub block_size: usize,
    /// Zero bytes appended after the stripe's payload.
    pub pad_len: u64,
    pub partition: Option<Vec<Vec<usize>>>,
    pub blocks: Vec<BlockEntry>,
}

impl StripeManifest {
    pub fn layout(&self) -> Result<BlockSetLayout> {
        let params = CodeParams::new(self.k, self.r)?;
        match self.codec {
            Codec::Rs => BlockSetLayout::rs(params, self.block_size),
            Codec::PiggybackedRs => {
                let groups = self
                    .partition
                    .clone()
                    .ok_or_else(|| Error::Config("piggybacked manifest without partition".into()))?;
                BlockSetLayout::piggybacked(params, self.block_size, GroupPartition::new(params, groups)?)
            }
        }
    }

    /// Structural checks: version, `k` data and `r` parity entries, indices `0..k+r` once each.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest format_version {}",
                self.format_version
            )));
        }
        self.layout()?;
        let n = self.k + self.r;
        if self.blocks.len() != n {
            return Err(Error::Config(format!(
                "{} block entries for n = {n}",
                self.blocks.len()
            )));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let role = if i < self.k { BlockRole::Data } else { BlockRole::Parity };
            if b.index != i || b.role != role {
                return Err(Error::Config(format!("block entry {i} out of order or mislabelled")));
            }
        }
        Ok(())
    }

    pub fn block_file_name(stripe_id: &str, index: usize) -> String {
        format!("{stripe_id}.{index}.blk")
    }

    pub fn file_name(stripe_id: &str) -> String {
        format!("{stripe_id}.manifest.json")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: StripeManifest = serde_json::from_slice(&fs::read(path)?)?;
        m.validate()?;
        Ok(m)
    }

    /// Writes `<dir>/<stripe-id>.manifest.json` via a temporary file and rename.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.stripe_id));
        write_atomic(&path, &serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Output of [`encode_blockset`].
#[derive(Clone, Debug)]
pub struct EncodedBlockSet {
    /// The `k` data blocks after padding.
    pub data: Vec<Vec<u8>>,
    pub parity: Vec<Vec<u8>>,
    pub manifest: StripeManifest,
}

impl EncodedBlockSet {
    pub fn block(&self, index: usize) -> &[u8] {
        let k = self.data.len();
        if index < k {
            &self.data[index]
        } else {
            &self.parity[index - k]
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[u8]> {
        self.data.iter().chain(&self.parity).map(|b| b.as_slice())
    }
}

/// Encodes `k` data blocks into `r` parity blocks.
///
/// Without `pad`, every block must be exactly `block_size` bytes. With `pad`,
/// the payload may stop early (a short block followed only by empty ones) and
/// is zero-filled to full blocks; the fill length goes into the manifest.
pub fn encode_blockset(
    stripe_id: &str,
    blocks: &[&[u8]],
    layout: &BlockSetLayout,
    pad: bool,
) -> Result<EncodedBlockSet> {
    encode_blockset_with(stripe_id, blocks, layout, pad, Parallelism::default())
}

pub fn encode_blockset_with(
    stripe_id: &str,
    blocks: &[&[u8]],
    layout: &BlockSetLayout,
    pad: bool,
    mode: Parallelism,
) -> Result<EncodedBlockSet> {
    let params = layout.params();
    let bs = layout.block_size();
    if blocks.len() != params.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} data blocks for k = {}",
            blocks.len(),
            params.k()
        )));
    }
    let mut pad_len = 0u64;
    let mut data = Vec::with_capacity(params.k());
    let mut ended = false;
    for (i, b) in blocks.iter().enumerate() {
        if b.len() > bs {
            return Err(Error::DimensionMismatch(format!(
                "block {i} has {} bytes, block size is {bs}",
                b.len()
            )));
        }
        if b.len() < bs {
            if !pad {
                return Err(Error::DimensionMismatch(format!(
                    "block {i} has {} bytes, expected {bs} (no padding requested)",
                    b.len()
                )));
            }
            if ended && !b.is_empty() {
                return Err(Error::DimensionMismatch(format!(
                    "block {i} follows a short block; only the tail may be padded"
                )));
            }
            ended = true;
        }
        let mut owned = b.to_vec();
        pad_len += (bs - owned.len()) as u64;
        owned.resize(bs, 0);
        data.push(owned);
    }
    let codec = layout.block_codec()?;
    let refs: Vec<&[u8]> = data.iter().map(|d| d.as_slice()).collect();
    let parity = codec.encode_parity(&refs, mode);
    let entries = data
        .iter()
        .chain(&parity)
        .enumerate()
        .map(|(index, bytes)| BlockEntry {
            index,
            role: if index < params.k() {
                BlockRole::Data
            } else {
                BlockRole::Parity
            },
            crc32: crc32(bytes),
            path: StripeManifest::block_file_name(stripe_id, index),
        })
        .collect();
    let manifest = StripeManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        stripe_id: stripe_id.to_string(),
        codec: layout.codec(),
        k: params.k(),
        r: params.r(),
        block_size: bs,
        pad_len,
        partition: layout.partition().map(|p| p.groups().to_vec()),
        blocks: entries,
    };
    Ok(EncodedBlockSet { data, parity, manifest })
}

/// What part of a block a read asks for. Serialized as `full`, `half-a` or `half-b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ReadRange {
    Full,
    /// Every other byte: even offsets for `a`, odd for `b`.
    Half(Substripe),
}

impl ReadRange {
    pub fn len(self, block_size: usize) -> usize {
        match self {
            ReadRange::Full => block_size,
            ReadRange::Half(_) => block_size / 2,
        }
    }
}

impl From<ReadRange> for String {
    fn from(r: ReadRange) -> String {
        match r {
            ReadRange::Full => "full",
            ReadRange::Half(Substripe::A) => "half-a",
            ReadRange::Half(Substripe::B) => "half-b",
        }
        .to_string()
    }
}

impl TryFrom<String> for ReadRange {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.as_str() {
            "full" => Ok(ReadRange::Full),
            "half-a" => Ok(ReadRange::Half(Substripe::A)),
            "half-b" => Ok(ReadRange::Half(Substripe::B)),
            other => Err(format!("unknown read range {other:?}")),
        }
    }
}

/// Source of stripe blocks. Implementations may be called concurrently.
pub trait BlockReader: Sync {
    fn is_available(&self, index: usize) -> bool;
    fn read(&self, index: usize, range: ReadRange) -> io::Result<Vec<u8>>;
}

/// Extracts a range from a full block held in memory.
pub fn slice_range(block: &[u8], range: ReadRange) -> Vec<u8> {
    match range {
        ReadRange::Full => block.to_vec(),
        ReadRange::Half(Substripe::A) => block.iter().step_by(2).copied().collect(),
        ReadRange::Half(Substripe::B) => block.iter().skip(1).step_by(2).copied().collect(),
    }
}

/// Blocks stored next to their manifest.
pub struct DirBlockReader<'a> {
    dir: PathBuf,
    manifest: &'a StripeManifest,
}

impl<'a> DirBlockReader<'a> {
    pub fn new(dir: impl Into<PathBuf>, manifest: &'a StripeManifest) -> Self {
        DirBlockReader {
            dir: dir.into(),
            manifest,
        }
    }

    pub fn path(&self, index: usize) -> PathBuf {
        self.dir.join(&self.manifest.blocks[index].path)
    }
}

impl BlockReader for DirBlockReader<'_> {
    fn is_available(&self, index: usize) -> bool {
        index < self.manifest.blocks.len()
            && fs::metadata(self.path(index)).is_ok_and(|m| m.len() == self.manifest.block_size as u64)
    }

    fn read(&self, index: usize, range: ReadRange) -> io::Result<Vec<u8>> {
        let full = fs::read(self.path(index))?;
        Ok(slice_range(&full, range))
    }
}

/// One source read recorded during a repair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub source: usize,
    pub range: ReadRange,
    pub bytes: u64,
}

/// Bytes downloaded by one block repair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferLedger {
    pub entries: Vec<LedgerEntry>,
    pub total_bytes: u64,
    /// `k * block_size`: what a plain RS repair reads.
    pub rs_baseline_bytes: u64,
    pub ratio_vs_rs: f64,
}

impl TransferLedger {
    fn new(entries: Vec<LedgerEntry>, rs_baseline_bytes: u64) -> Self {
        let total_bytes = entries.iter().map(|e| e.bytes).sum();
        TransferLedger {
            entries,
            total_bytes,
            rs_baseline_bytes,
            ratio_vs_rs: total_bytes as f64 / rs_baseline_bytes as f64,
        }
    }
}

type Halves = (Vec<u8>, Vec<u8>);

/// Which reads a plan needs, merged per source block.
pub fn plan_reads(plan: &RepairPlan, codec: Codec) -> Vec<(usize, ReadRange)> {
    let mut per_node: Vec<(usize, Vec<Substripe>)> = Vec::new();
    for r in plan.reads() {
        match per_node.iter_mut().find(|(n, _)| *n == r.node) {
            Some((_, subs)) => subs.push(r.substripe),
            None => per_node.push((r.node, vec![r.substripe])),
        }
    }
    per_node
        .into_iter()
        .map(|(node, subs)| {
            let range = match codec {
                Codec::Rs => ReadRange::Full,
                Codec::PiggybackedRs if subs.len() == 2 => ReadRange::Full,
                Codec::PiggybackedRs => ReadRange::Half(subs[0]),
            };
            (node, range)
        })
        .collect()
}

/// Rebuilds block `missing` from whatever `reader` reports as available and
/// checks it against the manifest CRC.
pub fn repair_block(
    manifest: &StripeManifest,
    missing: usize,
    reader: &dyn BlockReader,
) -> Result<(Vec<u8>, TransferLedger)> {
    repair_block_with(manifest, missing, reader, Parallelism::default())
}

pub fn repair_block_with(
    manifest: &StripeManifest,
    missing: usize,
    reader: &dyn BlockReader,
    mode: Parallelism,
) -> Result<(Vec<u8>, TransferLedger)> {
    manifest.validate()?;
    let layout = manifest.layout()?;
    let params = layout.params();
    let bs = layout.block_size();
    if missing >= params.n() {
        return Err(Error::InvalidParams(format!("block index {missing} out of range")));
    }
    let alive: BTreeSet<usize> = (0..params.n())
        .filter(|&i| i != missing && reader.is_available(i))
        .collect();
    let codec = layout.block_codec()?;
    let plan = codec.repair_plan(missing, &alive)?;
    let linear = plan.linear_form(&codec.context())?;

    let reads = plan_reads(&plan, layout.codec());
    let fetched = par::map_with(mode, reads.clone(), |(node, range)| {
        reader.read(node, range).map(|bytes| (node, range, bytes))
    })
    .into_iter()
    .collect::<io::Result<Vec<_>>>()?;

    let mut entries = Vec::with_capacity(fetched.len());
    for (node, range, bytes) in &fetched {
        if bytes.len() != range.len(bs) {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!("block {node}: read {} bytes, expected {}", bytes.len(), range.len(bs)),
            )));
        }
        entries.push(LedgerEntry {
            source: *node,
            range: *range,
            bytes: bytes.len() as u64,
        });
    }
    let ledger = TransferLedger::new(entries, (params.k() * bs) as u64);

    // One source slice per plan read, in plan order.
    // full reads of piggybacked blocks are split into their (a, b) halves
    let split: Vec<(usize, Option<Halves>)> = fetched
        .iter()
        .map(|(node, range, bytes)| {
            let halves = match (layout.codec(), range) {
                (Codec::PiggybackedRs, ReadRange::Full) => Some(deinterleave(bytes)),
                _ => None,
            };
            (*node, halves)
        })
        .collect();
    let source = |node: usize, sub: Substripe| -> &[u8] {
        let idx = fetched.iter().position(|(n, _, _)| *n == node).expect("read present");
        match &split[idx].1 {
            Some((a, b)) => match sub {
                Substripe::A => a,
                Substripe::B => b,
            },
            None => &fetched[idx].2,
        }
    };

    let combine = |coefs: &[Gf], len: usize| -> Vec<u8> {
        let srcs: Vec<&[u8]> = plan.reads().iter().map(|r| source(r.node, r.substripe)).collect();
        let mut out = vec![0u8; len];
        par::for_each_chunk_mut(mode, &mut out, CHUNK, |offset, chunk| {
            let end = offset + chunk.len();
            for (src, &c) in srcs.iter().zip(coefs) {
                mul_acc(chunk, &src[offset..end], c);
            }
        });
        out
    };

    let block = match layout.codec() {
        Codec::Rs => combine(&linear.a, bs),
        Codec::PiggybackedRs => {
            let a = combine(&linear.a, bs / 2);
            let b_coefs = linear
                .b
                .as_ref()
                .ok_or_else(|| Error::InvalidPlan("piggybacked plan without b output".into()))?;
            let b = combine(b_coefs, bs / 2);
            interleave(&a, &b)
        }
    };
    let expected = manifest.blocks[missing].crc32;
    let actual = crc32(&block);
    if actual != expected {
        return Err(Error::CorruptSource {
            index: missing,
            expected,
            actual,
        });
    }
    Ok((block, ledger))
}

/// A failing parity equation at one byte-level stripe position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PositionViolation {
    /// Byte offset for RS; pair index (byte offsets `2t`, `2t+1`) for Piggybacked-RS.
    pub position: usize,
    pub substripe: Substripe,
    pub parity: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub positions_checked: usize,
    pub crc_mismatches: Vec<usize>,
    pub violations: Vec<PositionViolation>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.crc_mismatches.is_empty() && self.violations.is_empty()
    }
}

/// Which positions [`verify_stripe`] checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyScope {
    Exhaustive,
    Sample { count: usize, seed: u64 },
}

/// Checks every parity equation (or a seeded sample of positions).
pub fn verify_stripe(manifest: &StripeManifest, reader: &dyn BlockReader, scope: VerifyScope) -> Result<VerifyReport> {
    manifest.validate()?;
    let layout = manifest.layout()?;
    let params = layout.params();
    let bs = layout.block_size();
    let blocks = (0..params.n())
        .map(|i| reader.read(i, ReadRange::Full))
        .collect::<io::Result<Vec<Vec<u8>>>>()?;
    if let Some(i) = blocks.iter().position(|b| b.len() != bs) {
        return Err(Error::DimensionMismatch(format!("block {i} is not {bs} bytes")));
    }
    let crc_mismatches = blocks
        .iter()
        .zip(&manifest.blocks)
        .filter(|(b, e)| crc32(b) != e.crc32)
        .map(|(_, e)| e.index)
        .collect();
    let codec = layout.block_codec()?;
    let k = params.k();
    let positions = match layout.codec() {
        Codec::Rs => bs,
        Codec::PiggybackedRs => bs / 2,
    };

    let mut violations = Vec::new();
    let positions_checked = match scope {
        VerifyScope::Exhaustive => {
            let refs: Vec<&[u8]> = blocks[..k].iter().map(|b| b.as_slice()).collect();
            let parity = codec.encode_parity(&refs, Parallelism::default());
            for (j, (want, have)) in parity.iter().zip(&blocks[k..]).enumerate() {
                for (off, (x, y)) in want.iter().zip(have).enumerate() {
                    if x != y {
                        violations.push(offset_violation(layout.codec(), off, j));
                    }
                }
            }
            positions
        }
        VerifyScope::Sample { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let count = count.min(positions);
            let mut picked: Vec<usize> = sample(&mut rng, positions, count).into_vec();
            picked.sort_unstable();
            let width = match layout.codec() {
                Codec::Rs => 1,
                Codec::PiggybackedRs => 2,
            };
            for t in picked {
                let start = t * width;
                let slices: Vec<&[u8]> = blocks[..k].iter().map(|b| &b[start..start + width]).collect();
                let parity = codec.encode_chunk(&slices);
                for (j, want) in parity.iter().enumerate() {
                    for (w, x) in want.iter().enumerate() {
                        if *x != blocks[k + j][start + w] {
                            violations.push(offset_violation(layout.codec(), start + w, j));
                        }
                    }
                }
            }
            count
        }
    };
    violations.sort_unstable();
    Ok(VerifyReport {
        positions_checked,
        crc_mismatches,
        violations,
    })
}

fn offset_violation(codec: Codec, offset: usize, parity: usize) -> PositionViolation {
    match codec {
        Codec::Rs => PositionViolation {
            position: offset,
            substripe: Substripe::A,
            parity,
        },
        Codec::PiggybackedRs => PositionViolation {
            position: offset / 2,
            substripe: if offset.is_multiple_of(2) {
                Substripe::A
            } else {
                Substripe::B
            },
            parity,
        },
    }
}

/// Top-level record for an encoded file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileIndex {
    pub format_version: u32,
    pub name: String,
    pub file_len: u64,
    pub codec: Codec,
    pub k: usize,
    pub r: usize,
    pub block_size: usize,
    pub stripes: Vec<String>,
}

impl FileIndex {
    pub fn file_name(name: &str) -> String {
        format!("{name}.index.json")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let idx: FileIndex = serde_json::from_slice(&fs::read(path)?)?;
        if idx.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported index format_version {}",
                idx.format_version
            )));
        }
        Ok(idx)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.name));
        write_atomic(&path, &serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }

    /// Storage overhead `(k + r) / k`.
    pub fn overhead(&self) -> f64 {
        (self.k + self.r) as f64 / self.k as f64
    }
}

fn read_up_to(reader: &mut impl IoRead, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Streams `input` into stripes under `out_dir`, writing blocks, manifests
/// and the file index.
pub fn encode_file(input: &mut impl IoRead, layout: &BlockSetLayout, out_dir: &Path, name: &str) -> Result<FileIndex> {
    let params = layout.params();
    let bs = layout.block_size();
    fs::create_dir_all(out_dir)?;
    let mut buf = vec![0u8; params.k() * bs];
    let mut stripes = Vec::new();
    let mut file_len = 0u64;
    loop {
        let got = read_up_to(input, &mut buf)?;
        if got == 0 {
            break;
        }
        file_len += got as u64;
        let stripe_id = format!("{name}-{:06}", stripes.len());
        let blocks: Vec<&[u8]> = (0..params.k())
            .map(|i| {
                let start = (i * bs).min(got);
                let end = ((i + 1) * bs).min(got);
                &buf[start..end]
            })
            .collect();
        let set = encode_blockset(&stripe_id, &blocks, layout, true)?;
        for (index, block) in set.blocks().enumerate() {
            write_atomic(&out_dir.join(&set.manifest.blocks[index].path), block)?;
        }
        set.manifest.write(out_dir)?;
        stripes.push(stripe_id);
        if got < buf.len() {
            break;
        }
    }
    let index = FileIndex {
        format_version: MANIFEST_FORMAT_VERSION,
        name: name.to_string(),
        file_len,
        codec: layout.codec(),
        k: params.k(),
        r: params.r(),
        block_size: bs,
        stripes,
    };
    index.write(out_dir)?;
    Ok(index)
}

/// Reassembles the file, rebuilding any unavailable data block on the fly.
pub fn decode_file(dir: &Path, index: &FileIndex) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(index.file_len as usize);
    for stripe_id in &index.stripes {
        let manifest = StripeManifest::read(&dir.join(StripeManifest::file_name(stripe_id)))?;
        let reader = DirBlockReader::new(dir, &manifest);
        let payload = (manifest.k * manifest.block_size) as u64 - manifest.pad_len;
        let mut stripe = Vec::with_capacity(manifest.k * manifest.block_size);
        for i in 0..manifest.k {
            let block = if reader.is_available(i) {
                let b = reader.read(i, ReadRange::Full)?;
                if crc32(&b) == manifest.blocks[i].crc32 {
                    b
                } else {
                    repair_excluding(&manifest, i, &reader)?
                }
            } else {
                repair_block(&manifest, i, &reader)?.0
            };
            stripe.extend_from_slice(&block);
        }
        stripe.truncate(payload as usize);
        out.extend_from_slice(&stripe);
    }
    if out.len() as u64 != index.file_len {
        return Err(Error::Config(format!(
            "reassembled {} bytes, index records {}",
            out.len(),
            index.file_len
        )));
    }
    Ok(out)
}

fn repair_excluding(manifest: &StripeManifest, index: usize, reader: &DirBlockReader<'_>) -> Result<Vec<u8>> {
    Ok(repair_block(manifest, index, &ExcludingReader::new(reader, [index]))?.0)
}

/// Hides some blocks of another reader, e.g. ones known to be stale.
pub struct ExcludingReader<'r, R: BlockReader + ?Sized> {
    inner: &'r R,
    hidden: Vec<usize>,
}

impl<'r, R: BlockReader + ?Sized> ExcludingReader<'r, R> {
    pub fn new(inner: &'r R, hidden: impl IntoIterator<Item = usize>) -> Self {
        ExcludingReader {
            inner,
            hidden: hidden.into_iter().collect(),
        }
    }
}

impl<R: BlockReader + ?Sized> BlockReader for ExcludingReader<'_, R> {
    fn is_available(&self, index: usize) -> bool {
        !self.hidden.contains(&index) && self.inner.is_available(index)
    }

    fn read(&self, index: usize, range: ReadRange) -> io::Result<Vec<u8>> {
        if self.hidden.contains(&index) {
            return Err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("block {index} excluded"),
            ));
        }
        self.inner.read(index, range)
    }
}

/// Blocks held in memory, for tests and benchmarks.
pub struct MemBlockReader<'a> {
    blocks: Vec<Option<&'a [u8]>>,
}

impl<'a> MemBlockReader<'a> {
    pub fn new(blocks: impl IntoIterator<Item = &'a [u8]>) -> Self {
        MemBlockReader {
            blocks: blocks.into_iter().map(Some).collect(),
        }
    }

    pub fn without(mut self, missing: impl IntoIterator<Item = usize>) -> Self {
        for i in missing {
            self.blocks[i] = None;
        }
        self
    }
}

impl BlockReader for MemBlockReader<'_> {
    fn is_available(&self, index: usize) -> bool {
        self.blocks.get(index).is_some_and(|b| b.is_some())
    }

    fn read(&self, index: usize, range: ReadRange) -> io::Result<Vec<u8>> {
        match self.blocks.get(index).copied().flatten() {
            Some(b) => Ok(slice_range(b, range)),
            None => Err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("block {index} unavailable"),
            )),
        }
    }
}
