//! Epoch pipeline: packing blocks into super-blocks, sealing epochs
//! into droplets, tiered re-encoding and storage accounting.
//!
//! Once a run of k super-blocks is buried deeply enough (tau blocks of
//! chain on top), a node seals it: it encodes s droplets and drops the
//! raw blocks, keeping only droplets, the header chain and the unsealed
//! tail. Packing and sealing are pure functions of (chain, config,
//! seed), so every node derives identical super-block boundaries, and a
//! node's droplet for slot j uses identical degree and neighbor choices
//! in every epoch (the slot's stream is seeded independently of the
//! epoch index).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{decode, encode_droplet, DecodeOptions, Droplet, EpochView};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::hashchain::{Block, Chain, Header, HEADER_LEN};

#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct EpochConfig {
    /// Super-blocks per epoch.
    pub k: usize,
    /// Droplets a node stores per sealed epoch.
    pub s: usize,
    /// Confirmation depth: an epoch seals only once tau blocks sit
    /// above its last block.
    pub tau: usize,
    /// Super-block target size in bytes. `None` disables concatenation
    /// entirely (every block becomes its own super-block), which is the
    /// padding-only baseline.
    pub l_super: Option<u64>,
}

impl EpochConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("epoch k must be >= 1"));
        }
        if self.s < 1 {
            return Err(Error::config("epoch s must be >= 1"));
        }
        Ok(())
    }

    /// Nominal per-node storage savings, k/s.
    pub fn gamma_target(&self) -> f64 {
        self.k as f64 / self.s as f64
    }
}

/// Greedy packing of consecutive blocks into super-blocks: keep
/// appending while the running size stays within `l_super`. Returns
/// block index ranges. Only header-derived sizes are consulted, so the
/// decoder side (which has no block bodies) computes identical
/// boundaries from the header chain alone.
pub fn partition_blocks(headers: &[Header], l_super: Option<u64>) -> Result<Vec<Range<usize>>> {
    let Some(ls) = l_super else {
        return Ok((0..headers.len()).map(|i| i..i + 1).collect());
    };
    let mut ranges = Vec::new();
    let mut start = 0usize;
    let mut acc = 0u64;
    for (i, h) in headers.iter().enumerate() {
        let size = h.serialized_block_len();
        if size > ls {
            return Err(Error::config(format!(
                "block {i} is {size} bytes serialized, larger than the super-block target {ls}"
            )));
        }
        if acc > 0 && acc + size > ls {
            ranges.push(start..i);
            start = i;
            acc = 0;
        }
        acc += size;
    }
    if acc > 0 {
        ranges.push(start..headers.len());
    }
    Ok(ranges)
}

fn make_view(chain: &Chain, ranges: &[Range<usize>]) -> Result<EpochView> {
    let super_blocks = ranges
        .iter()
        .map(|r| {
            let mut bytes = Vec::new();
            for b in &chain.blocks[r.clone()] {
                bytes.extend_from_slice(&b.to_bytes());
            }
            bytes
        })
        .collect();
    let groups = ranges
        .iter()
        .map(|r| chain.blocks[r.clone()].iter().map(|b| b.header).collect())
        .collect();
    EpochView::new(super_blocks, groups)
}

/// Builds the views of every epoch currently sealable under `cfg`
/// (full runs of k super-blocks with tau blocks of cover), plus the
/// index of the first block past the sealed region (start of the
/// uncoded tail).
pub fn build_epoch_views(chain: &Chain, cfg: &EpochConfig) -> Result<(Vec<EpochView>, usize)> {
    cfg.validate()?;
    let headers = chain.headers();
    let ranges = partition_blocks(&headers, cfg.l_super)?;
    let mut views = Vec::new();
    let mut next = 0usize;
    while next + cfg.k <= ranges.len() {
        let end_block = ranges[next + cfg.k - 1].end;
        if chain.height() < end_block + cfg.tau {
            break;
        }
        views.push(make_view(chain, &ranges[next..next + cfg.k])?);
        next += cfg.k;
    }
    let tail_start = if next == 0 { 0 } else { ranges[next - 1].end };
    Ok((views, tail_start))
}

/// Encodes the s droplet slots of one epoch for a node. Slot j's
/// generator is seeded from (node seed, j) only, never the epoch, so
/// re-running this for successive epochs reuses the same degree and
/// neighbor choices per slot.
pub fn node_slot_droplets(
    view: &EpochView,
    epoch_index: u32,
    s: usize,
    node_seed: u64,
    pmf: &crate::soliton::DegreePmf,
) -> Vec<Droplet> {
    (0..s)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(node_seed, "slot", j as u64));
            encode_droplet(view, epoch_index, pmf, &mut rng)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SealedEpoch {
    /// First super-block index this epoch covers.
    pub start_group: usize,
    /// Number of super-blocks covered (the epoch's k, which differs
    /// from the config k after tier re-encoding).
    pub k: usize,
    pub droplets: Vec<Droplet>,
}

/// Everything one droplet node persists: droplets per sealed epoch,
/// its copy of the header chain, and the raw blocks not yet sealed.
#[derive(Clone, Debug)]
pub struct NodeStore {
    pub node_id: u64,
    pub rng_seed: u64,
    pub cfg: EpochConfig,
    pub sealed: Vec<SealedEpoch>,
    pub headers: Vec<Header>,
    pub tail: Vec<Block>,
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub struct SavingsReport {
    /// Sealed-region chain bytes over droplet payload bytes. Neighbor
    /// vectors, the header chain and the tail are excluded here; they
    /// are the side information the scheme's accounting treats as
    /// negligible at production block sizes.
    pub coded: f64,
    /// Whole-chain bytes over *all* stored bytes (droplets, vectors,
    /// headers, tail).
    pub all_inclusive: f64,
    pub chain_bytes_sealed: u64,
    pub droplet_bytes: u64,
}

impl NodeStore {
    pub fn new(node_id: u64, rng_seed: u64, cfg: EpochConfig) -> Result<NodeStore> {
        cfg.validate()?;
        Ok(NodeStore {
            node_id,
            rng_seed,
            cfg,
            sealed: Vec::new(),
            headers: Vec::new(),
            tail: Vec::new(),
        })
    }

    /// First super-block index not yet covered by a sealed epoch.
    pub fn next_group(&self) -> usize {
        self.sealed.last().map_or(0, |e| e.start_group + e.k)
    }

    /// Seals the next epoch if it is buried tau deep, replacing its raw
    /// blocks with s freshly encoded droplets and refreshing the header
    /// copy and tail.
    pub fn seal_next_epoch(
        &mut self,
        chain: &Chain,
        pmf: &crate::soliton::DegreePmf,
    ) -> Result<u32> {
        if pmf.k() != self.cfg.k {
            return Err(Error::config(format!(
                "degree pmf is over k = {}, epoch config says {}",
                pmf.k(),
                self.cfg.k
            )));
        }
        let headers = chain.headers();
        let ranges = partition_blocks(&headers, self.cfg.l_super)?;
        let start = self.next_group();
        let need = start + self.cfg.k;
        if ranges.len() < need {
            // Lower bound: at least one block per missing super-block,
            // plus the confirmation depth.
            let needed =
                ranges.last().map_or(0, |r| r.end) + (need - ranges.len()) + self.cfg.tau;
            return Err(Error::NotFinalized { needed, height: chain.height() });
        }
        let end_block = ranges[need - 1].end;
        if chain.height() < end_block + self.cfg.tau {
            return Err(Error::NotFinalized {
                needed: end_block + self.cfg.tau,
                height: chain.height(),
            });
        }
        let view = make_view(chain, &ranges[start..need])?;
        let epoch_index = self.sealed.len() as u32;
        let droplets =
            node_slot_droplets(&view, epoch_index, self.cfg.s, self.rng_seed, pmf);
        self.sealed.push(SealedEpoch { start_group: start, k: self.cfg.k, droplets });
        self.headers = headers;
        self.tail = chain.blocks[end_block..].to_vec();
        Ok(epoch_index)
    }

    /// Seals every epoch currently sealable; returns how many were.
    pub fn seal_all(
        &mut self,
        chain: &Chain,
        pmf: &crate::soliton::DegreePmf,
    ) -> Result<usize> {
        let mut n = 0;
        loop {
            match self.seal_next_epoch(chain, pmf) {
                Ok(_) => n += 1,
                Err(Error::NotFinalized { .. }) => return Ok(n),
                Err(e) => return Err(e),
            }
        }
    }

    /// Collapses the oldest `big_k / cfg.k` sealed epochs into one long
    /// epoch of k2 = `big_k` super-blocks encoded at `big_s` droplets.
    /// The node's own droplets cannot reconstruct those epochs, so the
    /// caller supplies droplets gathered from the network, one batch
    /// per small epoch, and this node decodes them like a bootstrapping
    /// node would before re-encoding.
    pub fn reencode_tier(
        &mut self,
        epoch_droplets: &[Vec<Droplet>],
        big_k: usize,
        big_s: usize,
        big_pmf: &crate::soliton::DegreePmf,
    ) -> Result<()> {
        let small_k = self.cfg.k;
        if big_k == 0 || big_k % small_k != 0 {
            return Err(Error::config(format!(
                "long-epoch k = {big_k} is not a multiple of the small-epoch k = {small_k}"
            )));
        }
        if big_pmf.k() != big_k {
            return Err(Error::config("long-epoch pmf k mismatch"));
        }
        if big_s < 1 {
            return Err(Error::config("long-epoch s must be >= 1"));
        }
        let r = big_k / small_k;
        if epoch_droplets.len() != r {
            return Err(Error::config(format!(
                "need droplet batches for {r} epochs, got {}",
                epoch_droplets.len()
            )));
        }
        let covered: usize = self.sealed.iter().take(r).map(|e| e.k).sum();
        if self.sealed.len() < r
            || covered != big_k
            || self.sealed[0].start_group != 0
            || self.sealed.iter().take(r).any(|e| e.k != small_k)
        {
            return Err(Error::config(
                "store's oldest sealed epochs do not line up with the long epoch",
            ));
        }

        let ranges = partition_blocks(&self.headers, self.cfg.l_super)?;
        let mut super_blocks = Vec::with_capacity(big_k);
        let mut groups: Vec<Vec<Header>> = Vec::with_capacity(big_k);
        for (i, batch) in epoch_droplets.iter().enumerate() {
            let slice: Vec<Vec<Header>> = ranges[i * small_k..(i + 1) * small_k]
                .iter()
                .map(|rg| self.headers[rg.clone()].to_vec())
                .collect();
            let outcome = decode(batch, &slice, DecodeOptions::default())?;
            match outcome {
                crate::codec::DecodeOutcome::Success(state) => {
                    super_blocks.extend(state.into_blocks().unwrap());
                    groups.extend(slice);
                }
                crate::codec::DecodeOutcome::NeedMore(_) => {
                    return Err(Error::InsufficientDroplets { epoch: i as u32 });
                }
            }
        }
        let view = EpochView::new(super_blocks, groups)?;
        let long_index = 0u32; // first long epoch starts at super-block 0
        let droplets = node_slot_droplets(&view, long_index, big_s, self.rng_seed, big_pmf);
        self.sealed
            .splice(0..r, [SealedEpoch { start_group: 0, k: big_k, droplets }]);
        Ok(())
    }

    /// Storage savings achieved so far. Requires at least one sealed
    /// epoch.
    pub fn storage_savings(&self, chain: &Chain) -> Result<SavingsReport> {
        if self.sealed.is_empty() {
            return Err(Error::config("no sealed epochs to account for"));
        }
        let ranges = partition_blocks(&self.headers, self.cfg.l_super)?;
        let covered = self.next_group();
        let end_block = ranges[covered - 1].end;
        let chain_bytes_sealed: u64 = chain.blocks[..end_block]
            .iter()
            .map(|b| b.serialized_len() as u64)
            .sum();
        let droplet_bytes: u64 = self
            .sealed
            .iter()
            .flat_map(|e| &e.droplets)
            .map(|d| d.data.len() as u64)
            .sum();
        let vector_bytes: u64 = self
            .sealed
            .iter()
            .flat_map(|e| &e.droplets)
            .map(|d| d.neighbors.byte_len() as u64)
            .sum();
        let header_bytes = (self.headers.len() * HEADER_LEN) as u64;
        let tail_bytes: u64 = self.tail.iter().map(|b| b.serialized_len() as u64).sum();
        let total_chain = chain.serialized_len();
        Ok(SavingsReport {
            coded: chain_bytes_sealed as f64 / droplet_bytes as f64,
            all_inclusive: total_chain as f64
                / (droplet_bytes + vector_bytes + header_bytes + tail_bytes) as f64,
            chain_bytes_sealed,
            droplet_bytes,
        })
    }

    /// Writes the store snapshot: magic, a JSON manifest (identity,
    /// config, per-epoch droplet counts), raw headers, tail blocks,
    /// then droplet records in wire format.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(SNAPSHOT_MAGIC)?;
        let manifest = Manifest {
            node_id: self.node_id,
            rng_seed: self.rng_seed,
            cfg: self.cfg,
            epochs: self
                .sealed
                .iter()
                .map(|e| ManifestEpoch {
                    start_group: e.start_group,
                    k: e.k,
                    droplets: e.droplets.len(),
                })
                .collect(),
            header_count: self.headers.len(),
            tail_count: self.tail.len(),
        };
        let json = serde_json::to_vec(&manifest)
            .map_err(|e| Error::config(format!("manifest serialization failed: {e}")))?;
        w.write_all(&(json.len() as u32).to_be_bytes())?;
        w.write_all(&json)?;
        for h in &self.headers {
            w.write_all(&h.to_bytes())?;
        }
        for b in &self.tail {
            w.write_all(&b.to_bytes())?;
        }
        for e in &self.sealed {
            for d in &e.droplets {
                d.write(&mut w)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<NodeStore> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::parse("truncated snapshot at magic"))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::parse("not a node snapshot (bad magic)"));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)
            .map_err(|_| Error::parse("truncated snapshot at manifest length"))?;
        let mut json = vec![0u8; u32::from_be_bytes(len) as usize];
        r.read_exact(&mut json)
            .map_err(|_| Error::parse("truncated snapshot in manifest"))?;
        let manifest: Manifest = serde_json::from_slice(&json)
            .map_err(|e| Error::parse(format!("bad snapshot manifest: {e}")))?;
        let mut headers = Vec::with_capacity(manifest.header_count);
        for _ in 0..manifest.header_count {
            let mut buf = [0u8; HEADER_LEN];
            r.read_exact(&mut buf)
                .map_err(|_| Error::parse("truncated snapshot in headers"))?;
            headers.push(Header::from_bytes(&buf));
        }
        let mut tail = Vec::with_capacity(manifest.tail_count);
        for _ in 0..manifest.tail_count {
            let mut buf = [0u8; HEADER_LEN];
            r.read_exact(&mut buf)
                .map_err(|_| Error::parse("truncated snapshot in tail header"))?;
            let header = Header::from_bytes(&buf);
            let mut payload = vec![0u8; header.payload_size as usize];
            r.read_exact(&mut payload)
                .map_err(|_| Error::parse("truncated snapshot in tail payload"))?;
            tail.push(Block { header, txs: Block::parse_payload(&payload)? });
        }
        let mut sealed = Vec::with_capacity(manifest.epochs.len());
        for me in &manifest.epochs {
            let mut droplets = Vec::with_capacity(me.droplets);
            for _ in 0..me.droplets {
                droplets.push(Droplet::read(&mut r)?);
            }
            sealed.push(SealedEpoch { start_group: me.start_group, k: me.k, droplets });
        }
        Ok(NodeStore {
            node_id: manifest.node_id,
            rng_seed: manifest.rng_seed,
            cfg: manifest.cfg,
            sealed,
            headers,
            tail,
        })
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"SEFNODE\0";

#[derive(Serialize, Deserialize)]
struct Manifest {
    node_id: u64,
    rng_seed: u64,
    cfg: EpochConfig,
    epochs: Vec<ManifestEpoch>,
    header_count: usize,
    tail_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ManifestEpoch {
    start_group: usize,
    k: usize,
    droplets: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashchain::{generate_chain, ChainGenConfig, SizeModel, TxCountModel};
    use crate::soliton::{robust_soliton, SolitonParams};

    fn fixed_chain(n: usize, payload: u64, seed: u64) -> Chain {
        generate_chain(&ChainGenConfig {
            n_blocks: n,
            size_model: SizeModel::Fixed { payload },
            tx_count: TxCountModel::Fixed { count: 2 },
            rng_seed: seed,
        })
        .unwrap()
    }

    fn pmf(k: usize) -> crate::soliton::DegreePmf {
        robust_soliton(SolitonParams { k, c: 0.3, delta: 0.5 }).unwrap()
    }

    #[test]
    fn partition_respects_target_and_is_exhaustive() {
        let chain = generate_chain(&ChainGenConfig {
            n_blocks: 40,
            size_model: SizeModel::Uniform { lo: 20, hi: 200 },
            tx_count: TxCountModel::Fixed { count: 1 },
            rng_seed: 5,
        })
        .unwrap();
        let headers = chain.headers();
        let ls = 600u64;
        let ranges = partition_blocks(&headers, Some(ls)).unwrap();
        // Exhaustive, in order, no overlaps.
        assert_eq!(ranges[0].start, 0);
        assert_eq!(ranges.last().unwrap().end, 40);
        for w in ranges.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        let max_block = headers
            .iter()
            .map(|h| h.serialized_block_len())
            .max()
            .unwrap();
        for (i, r) in ranges.iter().enumerate() {
            let size: u64 = headers[r.clone()]
                .iter()
                .map(|h| h.serialized_block_len())
                .sum();
            assert!(size <= ls);
            // Greedy fills until the next block would overflow, so all
            // but the final (possibly short) group exceed ls - max.
            if i + 1 < ranges.len() {
                assert!(size > ls - max_block, "group {i} only {size} bytes");
            }
        }
    }

    #[test]
    fn partition_concatenation_preserves_bytes() {
        let chain = generate_chain(&ChainGenConfig {
            n_blocks: 25,
            size_model: SizeModel::Uniform { lo: 9, hi: 150 },
            tx_count: TxCountModel::Uniform { lo: 1, hi: 3 },
            rng_seed: 8,
        })
        .unwrap();
        let ranges = partition_blocks(&chain.headers(), Some(500)).unwrap();
        let view = make_view(&chain, &ranges).unwrap();
        let rejoined: Vec<u8> = view.super_blocks().concat();
        let original: Vec<u8> = chain.blocks.iter().flat_map(|b| b.to_bytes()).collect();
        assert_eq!(rejoined, original);
    }

    #[test]
    fn oversized_block_is_config_error() {
        let chain = fixed_chain(3, 600, 1);
        assert!(matches!(
            partition_blocks(&chain.headers(), Some(500)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn no_concatenation_means_one_block_per_group() {
        let chain = fixed_chain(7, 64, 2);
        let ranges = partition_blocks(&chain.headers(), None).unwrap();
        assert_eq!(ranges.len(), 7);
        assert!(ranges.iter().enumerate().all(|(i, r)| *r == (i..i + 1)));
    }

    fn store(cfg: EpochConfig, seed: u64) -> NodeStore {
        NodeStore::new(1, seed, cfg).unwrap()
    }

    #[test]
    fn fixed_size_savings_hit_target_exactly() {
        let cfg = EpochConfig { k: 10, s: 1, tau: 0, l_super: None };
        let chain = fixed_chain(10, 256, 3);
        let mut st = store(cfg, 7);
        assert_eq!(st.seal_all(&chain, &pmf(10)).unwrap(), 1);
        let report = st.storage_savings(&chain).unwrap();
        assert_eq!(report.coded, 10.0);
        // Stored bytes: one 344-byte droplet, a 2-byte neighbor vector,
        // ten 88-byte headers, no tail.
        assert_eq!(report.chain_bytes_sealed, 3440);
        assert_eq!(report.droplet_bytes, 344);
        assert_eq!(report.all_inclusive, 3440.0 / 1226.0);
    }

    #[test]
    fn premature_seal_is_not_finalized() {
        let cfg = EpochConfig { k: 10, s: 1, tau: 0, l_super: None };
        let chain = fixed_chain(9, 64, 3);
        let mut st = store(cfg, 7);
        assert!(matches!(
            st.seal_next_epoch(&chain, &pmf(10)),
            Err(Error::NotFinalized { .. })
        ));

        // With tau, the epoch needs cover on top.
        let cfg = EpochConfig { k: 10, s: 1, tau: 5, l_super: None };
        let mut st = store(cfg, 7);
        let short = fixed_chain(14, 64, 3);
        match st.seal_next_epoch(&short, &pmf(10)) {
            Err(Error::NotFinalized { needed, height }) => {
                assert_eq!(needed, 15);
                assert_eq!(height, 14);
            }
            other => panic!("expected NotFinalized, got {:?}", other.map(|_| ())),
        }
        let enough = fixed_chain(15, 64, 3);
        st.seal_next_epoch(&enough, &pmf(10)).unwrap();
        assert_eq!(st.tail.len(), 5);
        assert_eq!(st.headers.len(), 15);
    }

    #[test]
    fn sealing_is_deterministic_and_seed_sensitive() {
        let cfg = EpochConfig { k: 8, s: 3, tau: 0, l_super: None };
        let chain = fixed_chain(8, 64, 4);
        let mut a = store(cfg, 42);
        let mut b = store(cfg, 42);
        let mut c = store(cfg, 43);
        a.seal_all(&chain, &pmf(8)).unwrap();
        b.seal_all(&chain, &pmf(8)).unwrap();
        c.seal_all(&chain, &pmf(8)).unwrap();
        assert_eq!(a.sealed[0].droplets, b.sealed[0].droplets);
        assert_ne!(a.sealed[0].droplets, c.sealed[0].droplets);
    }

    #[test]
    fn slot_choices_repeat_across_epochs() {
        let cfg = EpochConfig { k: 6, s: 4, tau: 0, l_super: None };
        let chain = fixed_chain(12, 64, 9);
        let mut st = store(cfg, 11);
        assert_eq!(st.seal_all(&chain, &pmf(6)).unwrap(), 2);
        for j in 0..4 {
            assert_eq!(
                st.sealed[0].droplets[j].neighbors,
                st.sealed[1].droplets[j].neighbors,
                "slot {j} drew different neighbors in epoch 1"
            );
            assert_eq!(st.sealed[0].droplets[j].epoch, 0);
            assert_eq!(st.sealed[1].droplets[j].epoch, 1);
        }
    }

    #[test]
    fn reencode_collapses_small_epochs() {
        let cfg = EpochConfig { k: 4, s: 2, tau: 0, l_super: None };
        let chain = fixed_chain(8, 64, 6);
        let mut st = store(cfg, 21);
        assert_eq!(st.seal_all(&chain, &pmf(4)).unwrap(), 2);

        // Droplet batches a bootstrapping node might have gathered.
        let (views, _) = build_epoch_views(&chain, &cfg).unwrap();
        let batches: Vec<Vec<Droplet>> = views
            .iter()
            .enumerate()
            .map(|(e, v)| {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + e as u64);
                (0..20)
                    .map(|_| encode_droplet(v, e as u32, &pmf(4), &mut rng))
                    .collect()
            })
            .collect();

        let big_pmf = pmf(8);
        st.reencode_tier(&batches, 8, 1, &big_pmf).unwrap();
        assert_eq!(st.sealed.len(), 1);
        assert_eq!(st.sealed[0].k, 8);
        assert_eq!(st.sealed[0].droplets.len(), 1);

        // The long droplet must be a true XOR over the 8 super-blocks.
        let long_cfg = EpochConfig { k: 8, s: 1, tau: 0, l_super: None };
        let (long_views, _) = build_epoch_views(&chain, &long_cfg).unwrap();
        let d = &st.sealed[0].droplets[0];
        let mut want = Vec::new();
        for m in d.neighbors.iter_ones() {
            crate::codec::xor_into(&mut want, &long_views[0].super_blocks()[m]);
        }
        assert_eq!(d.data, want);
    }

    #[test]
    fn reencode_rejects_bad_shapes_and_starved_batches() {
        let cfg = EpochConfig { k: 4, s: 2, tau: 0, l_super: None };
        let chain = fixed_chain(8, 64, 6);
        let mut st = store(cfg, 21);
        st.seal_all(&chain, &pmf(4)).unwrap();

        assert!(matches!(
            st.reencode_tier(&[Vec::new()], 6, 1, &pmf(6)),
            Err(Error::Config(_))
        ));

        // One droplet cannot decode a 4-super-block epoch.
        let (views, _) = build_epoch_views(&chain, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let starved = vec![
            vec![encode_droplet(&views[0], 0, &pmf(4), &mut rng)],
            vec![encode_droplet(&views[1], 1, &pmf(4), &mut rng)],
        ];
        assert!(matches!(
            st.reencode_tier(&starved, 8, 1, &pmf(8)),
            Err(Error::InsufficientDroplets { epoch: 0 })
        ));
    }

    #[test]
    fn snapshot_roundtrip_and_rewrite_identical() {
        let cfg = EpochConfig { k: 6, s: 2, tau: 3, l_super: Some(400) };
        let chain = generate_chain(&ChainGenConfig {
            n_blocks: 30,
            size_model: SizeModel::Uniform { lo: 30, hi: 280 },
            tx_count: TxCountModel::Uniform { lo: 1, hi: 4 },
            rng_seed: 14,
        })
        .unwrap();
        let mut st = store(cfg, 33);
        st.seal_all(&chain, &pmf(6)).unwrap();
        assert!(!st.sealed.is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("node.snap");
        st.write_snapshot(&path).unwrap();
        let back = NodeStore::read_snapshot(&path).unwrap();
        assert_eq!(back.node_id, st.node_id);
        assert_eq!(back.rng_seed, st.rng_seed);
        assert_eq!(back.cfg, st.cfg);
        assert_eq!(back.headers, st.headers);
        assert_eq!(back.tail, st.tail);
        assert_eq!(back.sealed.len(), st.sealed.len());
        for (a, b) in back.sealed.iter().zip(&st.sealed) {
            assert_eq!(a.droplets, b.droplets);
        }

        let path2 = dir.path().join("node2.snap");
        back.write_snapshot(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn savings_requires_a_sealed_epoch() {
        let cfg = EpochConfig { k: 4, s: 1, tau: 0, l_super: None };
        let chain = fixed_chain(3, 64, 2);
        let st = store(cfg, 1);
        assert!(st.storage_savings(&chain).is_err());
    }
}
