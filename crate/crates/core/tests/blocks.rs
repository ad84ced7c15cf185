use std::collections::BTreeMap;
use std::io;
use std::sync::Mutex;

use pbrs::par::Parallelism;
use pbrs::stripe_io::{
    decode_file, encode_blockset, encode_blockset_with, encode_file, repair_block, repair_block_with, BlockReader,
    BlockSetLayout, DirBlockReader, FileIndex, MemBlockReader, ReadRange, StripeManifest, VerifyScope,
};
use pbrs::{default_partition, CodeParams, Error};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BS: usize = 64 * 1024;

fn params() -> CodeParams {
    CodeParams::new(10, 4).unwrap()
}

fn pb_layout(bs: usize) -> BlockSetLayout {
    BlockSetLayout::piggybacked(params(), bs, default_partition(params()).unwrap()).unwrap()
}

fn random_blocks(seed: u64, k: usize, bs: usize) -> Vec<Vec<u8>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            let mut b = vec![0u8; bs];
            rng.fill_bytes(&mut b);
            b
        })
        .collect()
}

/// Records every byte handed out, per source block.
struct CountingReader<'a> {
    inner: MemBlockReader<'a>,
    served: Mutex<BTreeMap<usize, u64>>,
}

impl BlockReader for CountingReader<'_> {
    fn is_available(&self, index: usize) -> bool {
        self.inner.is_available(index)
    }

    fn read(&self, index: usize, range: ReadRange) -> io::Result<Vec<u8>> {
        let bytes = self.inner.read(index, range)?;
        *self.served.lock().unwrap().entry(index).or_default() += bytes.len() as u64;
        Ok(bytes)
    }
}

#[test]
fn ledger_matches_bytes_actually_read() {
    let data = random_blocks(1, 10, BS);
    let refs: Vec<&[u8]> = data.iter().map(|b| b.as_slice()).collect();
    for layout in [pb_layout(BS), BlockSetLayout::rs(params(), BS).unwrap()] {
        let set = encode_blockset("s", &refs, &layout, false).unwrap();
        for missing in 0..14 {
            let reader = CountingReader {
                inner: MemBlockReader::new(set.blocks()).without([missing]),
                served: Mutex::new(BTreeMap::new()),
            };
            let (block, ledger) = repair_block(&set.manifest, missing, &reader).unwrap();
            assert_eq!(block, set.block(missing));
            let served = reader.served.into_inner().unwrap();
            let from_ledger: BTreeMap<usize, u64> = ledger.entries.iter().map(|e| (e.source, e.bytes)).collect();
            assert_eq!(served, from_ledger);
            assert_eq!(ledger.total_bytes, served.values().sum::<u64>());
            assert_eq!(ledger.rs_baseline_bytes, 10 * BS as u64);
        }
    }
}

#[test]
fn piggybacked_ledger_ratios() {
    let data = random_blocks(2, 10, BS);
    let refs: Vec<&[u8]> = data.iter().map(|b| b.as_slice()).collect();
    let set = encode_blockset("s", &refs, &pb_layout(BS), false).unwrap();
    let half = BS as u64 / 2;
    let expected = [14, 14, 14, 14, 13, 13, 13, 13, 13, 13, 20, 20, 20, 20];
    for (missing, units) in expected.into_iter().enumerate() {
        let reader = MemBlockReader::new(set.blocks()).without([missing]);
        let (_, ledger) = repair_block(&set.manifest, missing, &reader).unwrap();
        assert_eq!(ledger.total_bytes, units * half, "block {missing}");
    }
    let reader = MemBlockReader::new(set.blocks()).without([0]);
    let (_, ledger) = repair_block(&set.manifest, 0, &reader).unwrap();
    assert!((ledger.ratio_vs_rs - 0.70).abs() < 1e-12);
}

#[test]
fn sequential_and_parallel_agree() {
    let data = random_blocks(3, 10, BS);
    let refs: Vec<&[u8]> = data.iter().map(|b| b.as_slice()).collect();
    let layout = pb_layout(BS);
    let seq = encode_blockset_with("s", &refs, &layout, false, Parallelism::Sequential).unwrap();
    let par = encode_blockset_with("s", &refs, &layout, false, Parallelism::Parallel).unwrap();
    assert_eq!(seq.parity, par.parity);
    assert_eq!(seq.manifest, par.manifest);
    let reader = MemBlockReader::new(seq.blocks()).without([5]);
    let a = repair_block_with(&seq.manifest, 5, &reader, Parallelism::Sequential).unwrap();
    let b = repair_block_with(&seq.manifest, 5, &reader, Parallelism::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn corrupt_source_is_detected() {
    let data = random_blocks(4, 10, BS);
    let refs: Vec<&[u8]> = data.iter().map(|b| b.as_slice()).collect();
    let set = encode_blockset("s", &refs, &pb_layout(BS), false).unwrap();
    let mut blocks: Vec<Vec<u8>> = set.blocks().map(|b| b.to_vec()).collect();
    blocks[1][10] ^= 0x40;
    let reader = MemBlockReader::new(blocks.iter().map(|b| b.as_slice())).without([0]);
    assert!(matches!(
        repair_block(&set.manifest, 0, &reader),
        Err(Error::CorruptSource { .. })
    ));
}

#[test]
fn too_few_blocks_is_unrecoverable() {
    let data = random_blocks(5, 10, 256);
    let refs: Vec<&[u8]> = data.iter().map(|b| b.as_slice()).collect();
    let set = encode_blockset("s", &refs, &pb_layout(256), false).unwrap();
    let reader = MemBlockReader::new(set.blocks()).without([0, 1, 2, 3, 4]);
    assert!(matches!(
        repair_block(&set.manifest, 0, &reader),
        Err(Error::Unrecoverable { .. })
    ));
}

#[test]
fn verify_flags_every_flipped_byte() {
    let data = random_blocks(6, 10, 512);
    let refs: Vec<&[u8]> = data.iter().map(|b| b.as_slice()).collect();
    let layout = pb_layout(512);
    let set = encode_blockset("s", &refs, &layout, false).unwrap();
    let clean = pbrs::stripe_io::verify_stripe(
        &set.manifest,
        &MemBlockReader::new(set.blocks()),
        VerifyScope::Exhaustive,
    )
    .unwrap();
    assert!(clean.is_ok());
    assert_eq!(clean.positions_checked, 256);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..40 {
        let mut blocks: Vec<Vec<u8>> = set.blocks().map(|b| b.to_vec()).collect();
        let (i, off) = (rng.gen_range(0..14), rng.gen_range(0..512));
        blocks[i][off] ^= rng.gen_range(1..=255u8);
        let report = pbrs::stripe_io::verify_stripe(
            &set.manifest,
            &MemBlockReader::new(blocks.iter().map(|b| b.as_slice())),
            VerifyScope::Exhaustive,
        )
        .unwrap();
        assert_eq!(report.crc_mismatches, vec![i]);
        assert!(report.violations.iter().all(|v| v.position == off / 2));
        assert!(!report.violations.is_empty());
    }
}

#[test]
fn file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut content = vec![0u8; 1 << 20];
    rng.fill_bytes(&mut content);
    let layout = pb_layout(BS);
    let index = encode_file(&mut content.as_slice(), &layout, dir.path(), "one-mib").unwrap();
    assert_eq!(index.stripes.len(), 2);
    assert!((index.overhead() - 1.4).abs() < 1e-12);
    let reread = FileIndex::read(&dir.path().join(FileIndex::file_name("one-mib"))).unwrap();
    assert_eq!(reread, index);

    let second = StripeManifest::read(&dir.path().join(StripeManifest::file_name(&index.stripes[1]))).unwrap();
    assert_eq!(second.pad_len, (20 * BS - (1 << 20)) as u64);

    // lose one block from each stripe and corrupt another
    for id in &index.stripes {
        let m = StripeManifest::read(&dir.path().join(StripeManifest::file_name(id))).unwrap();
        let reader = DirBlockReader::new(dir.path(), &m);
        std::fs::remove_file(reader.path(3)).unwrap();
        let mut b = std::fs::read(reader.path(7)).unwrap();
        b[0] ^= 1;
        std::fs::write(reader.path(7), b).unwrap();
    }
    assert_eq!(decode_file(dir.path(), &index).unwrap(), content);
}

#[test]
fn empty_file_has_no_stripes() {
    let dir = tempfile::tempdir().unwrap();
    let index = encode_file(&mut io::empty(), &pb_layout(BS), dir.path(), "empty").unwrap();
    assert!(index.stripes.is_empty());
    assert_eq!(index.file_len, 0);
    assert!(decode_file(dir.path(), &index).unwrap().is_empty());
}
