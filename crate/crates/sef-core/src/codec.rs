//! Droplet encoding and the verifying peeling decoder.
//!
//! A droplet is the XOR of a random subset of an epoch's super-blocks,
//! tagged with the subset as a k-bit vector. Decoding peels: find a
//! droplet with exactly one unresolved neighbor, check its residual
//! bytes against the trusted header chain, and only then XOR it out of
//! every other droplet that covers the same slot. Droplets that fail
//! the check are deleted instead of contaminating the graph, which is
//! the whole difference between this and classical LT peeling.
//!
//! The decoder also supports withholding droplet payloads until the
//! moment a droplet is chosen as a singleton ([`Step::NeedData`]), so a
//! bandwidth-conscious caller can download neighbor vectors first and
//! fetch data for the few droplets that actually get used.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::hashchain::{merkle_root, Block, Header, HEADER_LEN};
use crate::soliton::DegreePmf;

/// Fixed-width neighbor set over block slots 0..k. Bit m lives in byte
/// m/8, most significant bit first, which is exactly the wire layout.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NeighborVec {
    k: usize,
    bits: Vec<u8>,
}

impl NeighborVec {
    pub fn new(k: usize) -> NeighborVec {
        NeighborVec { k, bits: vec![0u8; k.div_ceil(8)] }
    }

    pub fn from_indices(k: usize, indices: &[usize]) -> NeighborVec {
        let mut v = NeighborVec::new(k);
        for &i in indices {
            v.set(i);
        }
        v
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn byte_len(&self) -> usize {
        self.bits.len()
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.k);
        self.bits[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.k);
        self.bits[i / 8] |= 0x80 >> (i % 8);
    }

    pub fn clear(&mut self, i: usize) {
        debug_assert!(i < self.k);
        self.bits[i / 8] &= !(0x80 >> (i % 8));
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().flat_map(|(byte, &b)| {
            (0..8).filter_map(move |bit| {
                if b & (0x80 >> bit) != 0 {
                    Some(byte * 8 + bit)
                } else {
                    None
                }
            })
        })
    }

    pub fn first_one(&self) -> Option<usize> {
        self.bits
            .iter()
            .position(|&b| b != 0)
            .map(|byte| byte * 8 + self.bits[byte].leading_zeros() as usize)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }

    /// Rebuilds a vector from wire bytes. The tail bits past k must be
    /// zero; anything else is a malformed record.
    pub fn from_bytes(k: usize, bytes: &[u8]) -> Result<NeighborVec> {
        if bytes.len() != k.div_ceil(8) {
            return Err(Error::parse("neighbor vector length does not match k"));
        }
        if k % 8 != 0 {
            let tail_mask = 0xFFu8 >> (k % 8);
            if bytes[bytes.len() - 1] & tail_mask != 0 {
                return Err(Error::parse("neighbor vector has bits set past k"));
            }
        }
        Ok(NeighborVec { k, bits: bytes.to_vec() })
    }
}

/// XORs `other` into `acc`, growing `acc` with zeros first if `other`
/// is longer. Zero-extension makes XOR well defined across blocks of
/// different lengths.
pub fn xor_into(acc: &mut Vec<u8>, other: &[u8]) {
    if other.len() > acc.len() {
        acc.resize(other.len(), 0);
    }
    for (a, b) in acc.iter_mut().zip(other) {
        *a ^= b;
    }
}

/// XOR of two byte strings at the length of the longer one.
pub fn xor_padded(a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut out = a.to_vec();
    xor_into(&mut out, b);
    out
}

/// One stored droplet: which epoch it encodes, which super-block slots
/// it covers, and the XOR of those super-blocks (zero-extended to the
/// longest of them).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Droplet {
    pub epoch: u32,
    pub neighbors: NeighborVec,
    pub data: Vec<u8>,
}

/// Cap on the droplet payload length accepted off the wire, a
/// plausibility guard against allocating on a corrupt length field.
const MAX_WIRE_DATA: u64 = 1 << 30;

impl Droplet {
    pub fn degree(&self) -> usize {
        self.neighbors.count_ones()
    }

    /// Serialized record length: epoch (4) + k (4) + vector + data
    /// length (8) + data.
    pub fn wire_len(&self) -> usize {
        4 + 4 + self.neighbors.byte_len() + 8 + self.data.len()
    }

    /// Length of just the metadata prefix (epoch, k, neighbor vector),
    /// which is what a vectors-first bootstrap downloads up front.
    pub fn vector_wire_len(&self) -> usize {
        4 + 4 + self.neighbors.byte_len()
    }

    /// Writes the wire record: epoch (u32 BE), k (u32 BE), neighbor
    /// bitvector (ceil(k/8) bytes), data length (u64 BE), data.
    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.epoch.to_be_bytes())?;
        w.write_all(&(self.neighbors.k() as u32).to_be_bytes())?;
        w.write_all(self.neighbors.as_bytes())?;
        w.write_all(&(self.data.len() as u64).to_be_bytes())?;
        w.write_all(&self.data)
    }

    pub fn read(r: &mut impl Read) -> Result<Droplet> {
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)
            .map_err(|_| Error::parse("truncated droplet record at epoch"))?;
        let epoch = u32::from_be_bytes(u32buf);
        r.read_exact(&mut u32buf)
            .map_err(|_| Error::parse("truncated droplet record at k"))?;
        let k = u32::from_be_bytes(u32buf) as usize;
        let mut bits = vec![0u8; k.div_ceil(8)];
        r.read_exact(&mut bits)
            .map_err(|_| Error::parse("truncated droplet record in vector"))?;
        let neighbors = NeighborVec::from_bytes(k, &bits)?;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)
            .map_err(|_| Error::parse("truncated droplet record at data length"))?;
        let len = u64::from_be_bytes(u64buf);
        if len > MAX_WIRE_DATA {
            return Err(Error::parse(format!("droplet data length {len} implausible")));
        }
        let mut data = vec![0u8; len as usize];
        r.read_exact(&mut data)
            .map_err(|_| Error::parse("truncated droplet record in data"))?;
        Ok(Droplet { epoch, neighbors, data })
    }
}

/// Encoder-side view of one epoch: the k serialized super-blocks and,
/// per slot, the headers of the blocks concatenated into it.
#[derive(Clone, Debug)]
pub struct EpochView {
    super_blocks: Vec<Vec<u8>>,
    header_groups: Vec<Vec<Header>>,
}

impl EpochView {
    pub fn new(super_blocks: Vec<Vec<u8>>, header_groups: Vec<Vec<Header>>) -> Result<EpochView> {
        if super_blocks.len() != header_groups.len() || super_blocks.is_empty() {
            return Err(Error::config("epoch view slot counts do not line up"));
        }
        for (sb, group) in super_blocks.iter().zip(&header_groups) {
            if sb.len() as u64 != group_len(group) {
                return Err(Error::config(
                    "super-block bytes disagree with the header group lengths",
                ));
            }
        }
        Ok(EpochView { super_blocks, header_groups })
    }

    pub fn k(&self) -> usize {
        self.super_blocks.len()
    }

    pub fn super_blocks(&self) -> &[Vec<u8>] {
        &self.super_blocks
    }

    pub fn header_groups(&self) -> &[Vec<Header>] {
        &self.header_groups
    }
}

/// Serialized length a header group implies: per block, a header plus
/// its declared payload.
pub fn group_len(group: &[Header]) -> u64 {
    group.iter().map(|h| h.serialized_block_len()).sum()
}

/// Draws a degree from the pmf, picks that many distinct slots
/// uniformly, and XORs the corresponding super-blocks together.
pub fn encode_droplet(
    view: &EpochView,
    epoch: u32,
    pmf: &DegreePmf,
    rng: &mut impl Rng,
) -> Droplet {
    debug_assert_eq!(pmf.k(), view.k());
    let d = pmf.sample_degree(rng);
    let indices = rand::seq::index::sample(rng, view.k(), d);
    let mut neighbors = NeighborVec::new(view.k());
    let mut data = Vec::new();
    for i in indices {
        neighbors.set(i);
        xor_into(&mut data, &view.super_blocks[i]);
    }
    Droplet { epoch, neighbors, data }
}

/// Checks a candidate super-block against the headers it should
/// contain. The candidate is carved into (header, payload) pieces using
/// the *expected* payload sizes; every carved header must byte-match
/// the expected one, every payload must parse and hash to the Merkle
/// root that header committed to, and any padding past the expected
/// total length must be zero.
pub fn verify_singleton(data: &[u8], expected: &[Header]) -> bool {
    if expected.is_empty() {
        return false;
    }
    let total = group_len(expected);
    if (data.len() as u64) < total {
        return false;
    }
    let mut off = 0usize;
    for h in expected {
        let want = h.to_bytes();
        if data[off..off + HEADER_LEN] != want {
            return false;
        }
        off += HEADER_LEN;
        let payload = &data[off..off + h.payload_size as usize];
        let txs = match Block::parse_payload(payload) {
            Ok(txs) => txs,
            Err(_) => return false,
        };
        match merkle_root(&txs) {
            Ok(root) if root == h.merkle_root => {}
            _ => return false,
        }
        off += h.payload_size as usize;
    }
    data[off..].iter().all(|&b| b == 0)
}

#[derive(Clone, Copy, Debug)]
pub struct DecodeOptions {
    /// When false the decoder runs classical peeling: every chosen
    /// singleton is accepted unchecked. Only useful as a baseline;
    /// adversarial droplets then corrupt the output.
    pub verify: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { verify: true }
    }
}

/// One decoder event, as produced by [`DecoderState::step`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Step {
    /// A singleton passed verification; its slot is now decoded.
    Accepted { droplet: u32, block: usize },
    /// A singleton failed verification and was deleted.
    Rejected { droplet: u32 },
    /// The chosen singleton's payload was added vector-only; supply it
    /// via [`DecoderState::supply_data`] and step again.
    NeedData { droplet: u32 },
    /// No singleton exists and slots remain undecoded.
    Stalled,
    /// Every slot is decoded.
    Complete,
}

enum Payload {
    Present(Vec<u8>),
    /// Data not downloaded yet; fetched when the droplet is selected.
    Deferred,
}

struct Slot {
    original: NeighborVec,
    residual: NeighborVec,
    degree: usize,
    payload: Payload,
    alive: bool,
}

/// Incremental peeling decoder for one epoch.
///
/// Singleton selection order is deterministic: among current
/// singletons, lowest block index first, ties by droplet arrival
/// order. Every accept/reject below is reproducible from the droplet
/// arrival sequence alone.
pub struct DecoderState {
    header_groups: Vec<Vec<Header>>,
    group_lens: Vec<u64>,
    verify: bool,
    decoded: Vec<Option<Vec<u8>>>,
    n_decoded: usize,
    droplets: Vec<Slot>,
    /// block -> droplet ids that arrived with an edge to it; pruned
    /// lazily (dead entries are skipped during peeling).
    block_adj: Vec<Vec<u32>>,
    /// (block, droplet id) pairs for droplets whose residual degree is
    /// exactly 1. BTreeSet order is the selection rule.
    singletons: BTreeSet<(u32, u32)>,
    accepted_log: Vec<(u32, usize)>,
    rejected_log: Vec<u32>,
    xor_ops: u64,
}

impl DecoderState {
    pub fn new(header_groups: Vec<Vec<Header>>, options: DecodeOptions) -> Result<DecoderState> {
        if header_groups.is_empty() {
            return Err(Error::config("decoder needs at least one slot"));
        }
        if header_groups.iter().any(|g| g.is_empty()) {
            return Err(Error::config("every slot needs at least one expected header"));
        }
        let k = header_groups.len();
        let group_lens = header_groups.iter().map(|g| group_len(g)).collect();
        Ok(DecoderState {
            header_groups,
            group_lens,
            verify: options.verify,
            decoded: vec![None; k],
            n_decoded: 0,
            droplets: Vec::new(),
            block_adj: vec![Vec::new(); k],
            singletons: BTreeSet::new(),
            accepted_log: Vec::new(),
            rejected_log: Vec::new(),
            xor_ops: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.decoded.len()
    }

    /// Inserts a droplet with payload attached. Contributions of
    /// already-decoded slots are stripped immediately; a droplet whose
    /// neighbors are all decoded is dropped as redundant.
    pub fn add_droplet(&mut self, droplet: &Droplet) -> Result<u32> {
        self.insert(
            droplet.neighbors.clone(),
            Payload::Present(droplet.data.clone()),
        )
    }

    /// Inserts a droplet by its neighbor vector only; the payload is
    /// fetched on demand when the droplet is chosen as a singleton.
    pub fn add_vector_only(&mut self, neighbors: &NeighborVec) -> Result<u32> {
        self.insert(neighbors.clone(), Payload::Deferred)
    }

    fn insert(&mut self, original: NeighborVec, mut payload: Payload) -> Result<u32> {
        if original.k() != self.k() {
            return Err(Error::config(format!(
                "droplet vector is over k = {}, decoder expects {}",
                original.k(),
                self.k()
            )));
        }
        let id = self.droplets.len() as u32;
        let mut residual = original.clone();
        for m in original.iter_ones() {
            if let Some(block) = &self.decoded[m] {
                residual.clear(m);
                if let Payload::Present(data) = &mut payload {
                    xor_into(data, block);
                    self.xor_ops += 1;
                }
            }
        }
        let degree = residual.count_ones();
        let alive = degree > 0;
        if alive {
            for m in residual.iter_ones() {
                self.block_adj[m].push(id);
            }
            if degree == 1 {
                let m = residual.first_one().unwrap();
                self.singletons.insert((m as u32, id));
            }
        }
        self.droplets.push(Slot { original, residual, degree, payload, alive });
        Ok(id)
    }

    /// Supplies the payload for a vector-only droplet. Contributions of
    /// slots decoded since it was added are stripped here, which is
    /// where deferred droplets pay the XOR cost eager ones paid during
    /// peeling.
    pub fn supply_data(&mut self, id: u32, mut data: Vec<u8>) {
        let slot = &mut self.droplets[id as usize];
        assert!(
            matches!(slot.payload, Payload::Deferred),
            "droplet {id} already has data"
        );
        let mut ops = 0;
        for m in slot.original.iter_ones() {
            if !slot.residual.get(m) {
                let block = self.decoded[m]
                    .as_ref()
                    .expect("stripped neighbor must be decoded");
                xor_into(&mut data, block);
                ops += 1;
            }
        }
        self.xor_ops += ops;
        self.droplets[id as usize].payload = Payload::Present(data);
    }

    /// Advances by one event. `Accepted`/`Rejected` mean progress was
    /// made; the other three are resting states.
    pub fn step(&mut self) -> Step {
        if self.n_decoded == self.k() {
            return Step::Complete;
        }
        let Some(&(block, id)) = self.singletons.first() else {
            return Step::Stalled;
        };
        let block = block as usize;
        let slot = &self.droplets[id as usize];
        debug_assert!(slot.alive && slot.degree == 1);
        match &slot.payload {
            Payload::Deferred => Step::NeedData { droplet: id },
            Payload::Present(_) => {
                let ok = !self.verify
                    || verify_singleton(
                        match &self.droplets[id as usize].payload {
                            Payload::Present(d) => d,
                            Payload::Deferred => unreachable!(),
                        },
                        &self.header_groups[block],
                    );
                self.singletons.remove(&(block as u32, id));
                if ok {
                    self.accept(id, block);
                    Step::Accepted { droplet: id, block }
                } else {
                    self.droplets[id as usize].alive = false;
                    self.droplets[id as usize].payload = Payload::Deferred;
                    self.rejected_log.push(id);
                    Step::Rejected { droplet: id }
                }
            }
        }
    }

    fn accept(&mut self, id: u32, block: usize) {
        let slot = &mut self.droplets[id as usize];
        slot.alive = false;
        let data = match std::mem::replace(&mut slot.payload, Payload::Deferred) {
            Payload::Present(data) => data,
            Payload::Deferred => unreachable!("accept requires data"),
        };
        // The droplet may be zero-padded past the slot's true length.
        let mut decoded = data;
        decoded.resize(self.group_lens[block] as usize, 0);
        self.decoded[block] = Some(decoded);
        self.n_decoded += 1;
        self.accepted_log.push((id, block));

        // Peel the decoded slot out of every droplet still covering it.
        let adjacent = std::mem::take(&mut self.block_adj[block]);
        for other in adjacent {
            let slot = &mut self.droplets[other as usize];
            if !slot.alive || !slot.residual.get(block) {
                continue;
            }
            if slot.degree == 1 {
                // A rival singleton for the same slot; it is now fully
                // explained and leaves the graph unjudged.
                self.singletons.remove(&(block as u32, other));
            }
            slot.residual.clear(block);
            slot.degree -= 1;
            if let Payload::Present(data) = &mut slot.payload {
                xor_into(data, self.decoded[block].as_ref().unwrap());
                self.xor_ops += 1;
            }
            if slot.degree == 0 {
                slot.alive = false;
                slot.payload = Payload::Deferred;
            } else if slot.degree == 1 {
                let m = slot.residual.first_one().unwrap();
                self.singletons.insert((m as u32, other));
            }
        }
    }

    /// Runs until a resting state and returns it (`Complete`, `Stalled`
    /// or `NeedData`).
    pub fn run(&mut self) -> Step {
        loop {
            match self.step() {
                Step::Accepted { .. } | Step::Rejected { .. } => continue,
                rest => return rest,
            }
        }
    }

    pub fn is_complete(&self) -> bool {
        self.n_decoded == self.k()
    }

    pub fn n_decoded(&self) -> usize {
        self.n_decoded
    }

    /// Decoded super-blocks, available once complete.
    pub fn into_blocks(self) -> Option<Vec<Vec<u8>>> {
        if self.n_decoded == self.k() {
            Some(self.decoded.into_iter().map(Option::unwrap).collect())
        } else {
            None
        }
    }

    pub fn decoded_block(&self, m: usize) -> Option<&[u8]> {
        self.decoded[m].as_deref()
    }

    pub fn accepted(&self) -> usize {
        self.accepted_log.len()
    }

    pub fn rejected(&self) -> usize {
        self.rejected_log.len()
    }

    /// Droplets still in the graph awaiting resolution.
    pub fn pending(&self) -> usize {
        self.droplets.iter().filter(|s| s.alive).count()
    }

    /// Count of block-level XOR applications so far (encode-side
    /// stripping plus peeling updates).
    pub fn xor_ops(&self) -> u64 {
        self.xor_ops
    }

    /// (droplet id, block) pairs in acceptance order.
    pub fn accepted_log(&self) -> &[(u32, usize)] {
        &self.accepted_log
    }

    /// Droplet ids in rejection order.
    pub fn rejected_log(&self) -> &[u32] {
        &self.rejected_log
    }
}

/// Outcome of a batch decode: either every slot verified and decoded,
/// or the peeling stalled and the caller should fetch more droplets and
/// continue via [`add_droplets`].
pub enum DecodeOutcome {
    Success(DecoderState),
    NeedMore(DecoderState),
}

impl DecodeOutcome {
    pub fn state(&self) -> &DecoderState {
        match self {
            DecodeOutcome::Success(s) | DecodeOutcome::NeedMore(s) => s,
        }
    }

    pub fn into_state(self) -> DecoderState {
        match self {
            DecodeOutcome::Success(s) | DecodeOutcome::NeedMore(s) => s,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, DecodeOutcome::Success(_))
    }
}

/// Decodes a batch of candidate droplets against the trusted header
/// groups of one epoch.
pub fn decode(
    droplets: &[Droplet],
    header_groups: &[Vec<Header>],
    options: DecodeOptions,
) -> Result<DecodeOutcome> {
    let mut state = DecoderState::new(header_groups.to_vec(), options)?;
    for d in droplets {
        state.add_droplet(d)?;
    }
    Ok(finish(state))
}

/// Feeds additional droplets into a stalled decode and resumes peeling.
pub fn add_droplets(mut state: DecoderState, droplets: &[Droplet]) -> Result<DecodeOutcome> {
    for d in droplets {
        state.add_droplet(d)?;
    }
    Ok(finish(state))
}

fn finish(mut state: DecoderState) -> DecodeOutcome {
    match state.run() {
        Step::Complete => DecodeOutcome::Success(state),
        Step::Stalled => DecodeOutcome::NeedMore(state),
        Step::NeedData { .. } => unreachable!("batch decode has all payloads present"),
        Step::Accepted { .. } | Step::Rejected { .. } => unreachable!("run returns resting states"),
    }
}
