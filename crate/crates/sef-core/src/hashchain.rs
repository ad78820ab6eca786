//! Headers, blocks and chains, plus deterministic chain generation and
//! the on-disk chain dump format.
//!
//! The byte layouts here are load-bearing for everything downstream:
//! droplets are XORs of *serialized* blocks, and the decoder re-splits
//! recovered byte runs using only the `payload_size` fields of headers
//! it already trusts. Changing any layout breaks decode compatibility,
//! not just persistence.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

pub const DIGEST_LEN: usize = 32;
pub const METADATA_LEN: usize = 16;
/// Serialized header width: merkle_root (32) || prev_header_hash (32)
/// || payload_size (8, big-endian) || metadata (16).
pub const HEADER_LEN: usize = 64 + 8 + METADATA_LEN;

/// SHA-256 digest newtype. The all-zero digest is reserved as the
/// genesis back-link sentinel and never collides with a real hash in
/// practice.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", hex::encode(self.0))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// SHA-256 of a byte string.
pub fn hash(data: &[u8]) -> Digest {
    let out = Sha256::digest(data);
    let mut bytes = [0u8; DIGEST_LEN];
    bytes.copy_from_slice(&out);
    Digest(bytes)
}

/// Block header. Commits to the transaction set (Merkle root), the
/// predecessor header (hash link) and the exact serialized payload
/// length.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Header {
    pub merkle_root: Digest,
    pub prev_header_hash: Digest,
    /// Length in bytes of the serialized payload that follows this
    /// header in the block's canonical byte form.
    pub payload_size: u64,
    pub metadata: [u8; METADATA_LEN],
}

impl Header {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..32].copy_from_slice(&self.merkle_root.0);
        out[32..64].copy_from_slice(&self.prev_header_hash.0);
        out[64..72].copy_from_slice(&self.payload_size.to_be_bytes());
        out[72..].copy_from_slice(&self.metadata);
        out
    }

    pub fn from_bytes(bytes: &[u8; HEADER_LEN]) -> Header {
        let mut merkle_root = [0u8; DIGEST_LEN];
        merkle_root.copy_from_slice(&bytes[..32]);
        let mut prev = [0u8; DIGEST_LEN];
        prev.copy_from_slice(&bytes[32..64]);
        let mut size = [0u8; 8];
        size.copy_from_slice(&bytes[64..72]);
        let mut metadata = [0u8; METADATA_LEN];
        metadata.copy_from_slice(&bytes[72..]);
        Header {
            merkle_root: Digest(merkle_root),
            prev_header_hash: Digest(prev),
            payload_size: u64::from_be_bytes(size),
            metadata,
        }
    }

    /// Hash of the serialized header, used as the successor's back-link.
    pub fn hash(&self) -> Digest {
        hash(&self.to_bytes())
    }

    /// Total serialized block length implied by this header.
    pub fn serialized_block_len(&self) -> u64 {
        HEADER_LEN as u64 + self.payload_size
    }
}

/// A block: header plus its transactions, each an opaque byte string.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub header: Header,
    pub txs: Vec<Vec<u8>>,
}

impl Block {
    /// Canonical payload bytes: tx count (u32 BE), then per transaction
    /// its length (u32 BE) and raw bytes. `payload_size` in the header
    /// is the length of exactly this encoding.
    pub fn payload_bytes(txs: &[Vec<u8>]) -> Vec<u8> {
        let total: usize = 4 + txs.iter().map(|t| 4 + t.len()).sum::<usize>();
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(&(txs.len() as u32).to_be_bytes());
        for tx in txs {
            out.extend_from_slice(&(tx.len() as u32).to_be_bytes());
            out.extend_from_slice(tx);
        }
        out
    }

    /// Parses payload bytes back into transactions. The encoding must
    /// consume `bytes` exactly; anything else is malformed.
    pub fn parse_payload(bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
        if bytes.len() < 4 {
            return Err(Error::parse("payload shorter than its count field"));
        }
        let count = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        let mut txs = Vec::with_capacity(count.min(1024));
        let mut off = 4;
        for _ in 0..count {
            if bytes.len() - off < 4 {
                return Err(Error::parse("payload truncated at a tx length field"));
            }
            let len = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
            off += 4;
            if bytes.len() - off < len {
                return Err(Error::parse("payload truncated inside a tx"));
            }
            txs.push(bytes[off..off + len].to_vec());
            off += len;
        }
        if off != bytes.len() {
            return Err(Error::parse("trailing bytes after the last tx"));
        }
        Ok(txs)
    }

    /// Canonical block bytes: serialized header followed by the payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&Block::payload_bytes(&self.txs));
        out
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.header.payload_size as usize
    }
}

/// Merkle root over a transaction list: leaves are `hash(tx)`, a level
/// with an odd node count duplicates its last node, and parents are
/// `hash(left || right)`. Empty lists have no root.
pub fn merkle_root<T: AsRef<[u8]>>(txs: &[T]) -> Result<Digest> {
    if txs.is_empty() {
        return Err(Error::EmptyPayload);
    }
    let mut level: Vec<Digest> = txs.iter().map(|t| hash(t.as_ref())).collect();
    while level.len() > 1 {
        if level.len() % 2 == 1 {
            level.push(*level.last().unwrap());
        }
        level = level
            .chunks(2)
            .map(|pair| {
                let mut buf = [0u8; 64];
                buf[..32].copy_from_slice(&pair[0].0);
                buf[32..].copy_from_slice(&pair[1].0);
                hash(&buf)
            })
            .collect();
    }
    Ok(level[0])
}

/// An ordered run of blocks starting at genesis.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Chain {
    pub blocks: Vec<Block>,
}

impl Chain {
    pub fn height(&self) -> usize {
        self.blocks.len()
    }

    pub fn headers(&self) -> Vec<Header> {
        self.blocks.iter().map(|b| b.header).collect()
    }

    /// Sum of canonical serialized block lengths.
    pub fn serialized_len(&self) -> u64 {
        self.blocks.iter().map(|b| b.serialized_len() as u64).sum()
    }

    /// Full structural check: header linkage, Merkle roots and payload
    /// sizes all consistent with the block contents.
    pub fn validate(&self) -> Result<()> {
        if !validate_header_chain(&self.headers()) {
            return Err(Error::integrity("broken header linkage"));
        }
        for (i, block) in self.blocks.iter().enumerate() {
            let payload = Block::payload_bytes(&block.txs);
            if payload.len() as u64 != block.header.payload_size {
                return Err(Error::integrity(format!(
                    "block {i}: payload_size {} != actual {}",
                    block.header.payload_size,
                    payload.len()
                )));
            }
            if merkle_root(&block.txs)? != block.header.merkle_root {
                return Err(Error::integrity(format!("block {i}: merkle root mismatch")));
            }
        }
        Ok(())
    }
}

/// True iff the back-links hold: the first header points at the zero
/// digest and every later one points at the hash of its predecessor.
/// An empty list is vacuously valid.
pub fn validate_header_chain(headers: &[Header]) -> bool {
    let mut prev = Digest::ZERO;
    for h in headers {
        if h.prev_header_hash != prev {
            return false;
        }
        prev = h.hash();
    }
    true
}

/// Picks the longest valid chain among candidates, ties broken by first
/// occurrence. This is the sybil filter a joining node applies to the
/// header chains its random peers offer.
pub fn longest_valid_header_chain(candidates: &[Vec<Header>]) -> Result<&[Header]> {
    let mut best: Option<&[Header]> = None;
    for cand in candidates {
        if validate_header_chain(cand) && best.map_or(true, |b| cand.len() > b.len()) {
            best = Some(cand);
        }
    }
    best.ok_or(Error::NoValidChain)
}

/// Payload size model for generated chains.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeModel {
    /// Every payload exactly `payload` bytes.
    Fixed { payload: u64 },
    /// Payload sizes uniform over `lo..=hi`.
    Uniform { lo: u64, hi: u64 },
    /// Weighted draw over fixed size bins, for replaying a measured
    /// block-size distribution.
    Empirical { bins: Vec<SizeBin> },
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct SizeBin {
    pub size: u64,
    pub weight: f64,
}

/// Smallest legal payload: a count field plus one empty transaction.
pub const MIN_PAYLOAD: u64 = 8;

impl SizeModel {
    /// Largest payload this model can emit.
    pub fn max_payload(&self) -> u64 {
        match self {
            SizeModel::Fixed { payload } => *payload,
            SizeModel::Uniform { hi, .. } => *hi,
            SizeModel::Empirical { bins } => bins.iter().map(|b| b.size).max().unwrap_or(0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            SizeModel::Fixed { payload } => *payload >= MIN_PAYLOAD,
            SizeModel::Uniform { lo, hi } => *lo >= MIN_PAYLOAD && lo <= hi,
            SizeModel::Empirical { bins } => {
                !bins.is_empty()
                    && bins
                        .iter()
                        .all(|b| b.size >= MIN_PAYLOAD && b.weight > 0.0 && b.weight.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("bad size model: {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            SizeModel::Fixed { payload } => *payload,
            SizeModel::Uniform { lo, hi } => rng.gen_range(*lo..=*hi),
            SizeModel::Empirical { bins } => {
                // Weights were validated positive and finite.
                let idx = WeightedIndex::new(bins.iter().map(|b| b.weight))
                    .expect("validated weights")
                    .sample(rng);
                bins[idx].size
            }
        }
    }
}

/// Transactions-per-block model.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TxCountModel {
    Fixed { count: u32 },
    Uniform { lo: u32, hi: u32 },
}

impl TxCountModel {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            TxCountModel::Fixed { count } => *count >= 1,
            TxCountModel::Uniform { lo, hi } => *lo >= 1 && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("bad tx count model: {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        match self {
            TxCountModel::Fixed { count } => *count,
            TxCountModel::Uniform { lo, hi } => rng.gen_range(*lo..=*hi),
        }
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ChainGenConfig {
    pub n_blocks: usize,
    pub size_model: SizeModel,
    pub tx_count: TxCountModel,
    pub rng_seed: u64,
}

impl ChainGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::config("n_blocks must be >= 1"));
        }
        self.size_model.validate()?;
        self.tx_count.validate()
    }
}

/// Generates a well-formed chain deterministically from the seed. Each
/// block's payload is exactly the sampled size: the tx count is clamped
/// down if its framing alone would overflow the target, and the data
/// bytes are spread evenly across transactions.
pub fn generate_chain(cfg: &ChainGenConfig) -> Result<Chain> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut blocks = Vec::with_capacity(cfg.n_blocks);
    let mut prev = Digest::ZERO;
    for height in 0..cfg.n_blocks {
        let payload_size = cfg.size_model.sample(&mut rng);
        let want = cfg.tx_count.sample(&mut rng) as u64;
        // Framing needs 4 bytes for the count and 4 per tx.
        let n_txs = want.clamp(1, (payload_size - 4) / 4) as usize;
        let data_total = payload_size as usize - 4 - 4 * n_txs;
        let base = data_total / n_txs;
        let extra = data_total % n_txs;
        let mut txs = Vec::with_capacity(n_txs);
        for i in 0..n_txs {
            let len = base + usize::from(i < extra);
            let mut tx = vec![0u8; len];
            rng.fill(tx.as_mut_slice());
            txs.push(tx);
        }
        let mut metadata = [0u8; METADATA_LEN];
        metadata[..8].copy_from_slice(&(height as u64).to_be_bytes());
        let header = Header {
            merkle_root: merkle_root(&txs)?,
            prev_header_hash: prev,
            payload_size,
            metadata,
        };
        prev = header.hash();
        blocks.push(Block { header, txs });
    }
    Ok(Chain { blocks })
}

const CHAIN_MAGIC: &[u8; 8] = b"SEFCHAIN";
const CHAIN_VERSION: u16 = 1;

/// Writes a chain dump: magic "SEFCHAIN", version (u16 BE), block count
/// (u64 BE), then each block as header bytes, tx count (u32 BE) and per
/// tx a length (u32 BE) plus raw bytes.
pub fn store_chain(path: &Path, chain: &Chain) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHAIN_MAGIC)?;
    w.write_all(&CHAIN_VERSION.to_be_bytes())?;
    w.write_all(&(chain.blocks.len() as u64).to_be_bytes())?;
    for block in &chain.blocks {
        w.write_all(&block.to_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a chain dump and re-validates it structurally. Framing damage
/// surfaces as `Parse`, content damage (linkage or Merkle) as
/// `Integrity`.
pub fn load_chain(path: &Path) -> Result<Chain> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != CHAIN_MAGIC {
        return Err(Error::parse("not a chain dump (bad magic)"));
    }
    let mut ver = [0u8; 2];
    read_exact(&mut r, &mut ver, "version")?;
    if u16::from_be_bytes(ver) != CHAIN_VERSION {
        return Err(Error::parse(format!(
            "unsupported chain dump version {}",
            u16::from_be_bytes(ver)
        )));
    }
    let mut count = [0u8; 8];
    read_exact(&mut r, &mut count, "block count")?;
    let count = u64::from_be_bytes(count);
    let mut blocks = Vec::new();
    for _ in 0..count {
        let mut hdr = [0u8; HEADER_LEN];
        read_exact(&mut r, &mut hdr, "header")?;
        let header = Header::from_bytes(&hdr);
        let mut payload = vec![0u8; header.payload_size as usize];
        read_exact(&mut r, &mut payload, "payload")?;
        let txs = Block::parse_payload(&payload)?;
        blocks.push(Block { header, txs });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::parse("trailing bytes after the last block"));
    }
    let chain = Chain { blocks };
    chain.validate()?;
    Ok(chain)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::parse(format!("truncated chain dump at {what}")))
}
