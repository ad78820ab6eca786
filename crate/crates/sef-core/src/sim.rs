//! Network bootstrap simulation: droplet nodes (honest and otherwise),
//! a bucket node that bootstraps from them, and the measurement
//! harness behind the cost/bandwidth experiments.
//!
//! A network is N droplet nodes over one ground-truth chain. Honest
//! nodes store what the epoch pipeline prescribes; silent nodes answer
//! nothing; murky nodes serve droplets whose data does not match their
//! claimed neighbor vector (plus corrupted headers and tail); opaque
//! nodes serve internally consistent but maximally redundant droplets
//! (every one a copy of the epoch's first super-block). A bribery
//! attacker instead silences honest nodes that hold singletons.
//!
//! Bootstrap contacts nodes in uniformly random order: first a header
//! phase (query min(25, N) nodes, keep the longest valid header
//! chain), then a droplet phase batched by `n_hat`, feeding the
//! verifying peeling decoder until every sealed epoch decodes, then a
//! tail fetch validated against the trusted headers. Every trial is
//! rebuilt from per-trial seeds, so runs are independent and exactly
//! reproducible.
//!
//! Byte accounting: `bytes_downloaded` covers droplet records (data or
//! vector-only, per mode), deferred data fetches, and tail blocks.
//! Header-chain traffic every client pays regardless of scheme is
//! metered separately as `bytes_headers` and excluded from the
//! overhead ratio.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{DecodeOptions, DecoderState, Droplet, EpochView, NeighborVec, Step};
use crate::derive_seed;
use crate::epoch::{build_epoch_views, partition_blocks, EpochConfig};
use crate::error::{Error, Result};
use crate::hashchain::{
    generate_chain, merkle_root, validate_header_chain, Block, Chain, ChainGenConfig, Header,
    SizeModel, TxCountModel, HEADER_LEN,
};
use crate::soliton::{robust_soliton, DegreePmf, SolitonParams};

/// How the bucket node downloads droplets.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Download full droplet records from every contacted node.
    Bulk,
    /// Download neighbor vectors only; fetch a droplet's data when the
    /// decoder actually selects it.
    AsNeeded,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Bulk => "bulk",
            Mode::AsNeeded => "as_needed",
        }
    }
}

/// What honest nodes store.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Fountain-coded droplets drawn from the robust soliton pmf.
    Sef,
    /// Uncoded baseline: s distinct blocks chosen uniformly at random
    /// per epoch (each stored as a degree-1 droplet).
    RandomSampling,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Sef => "sef",
            Scheme::RandomSampling => "random_sampling",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    Honest,
    Silent,
    Murky,
    Opaque,
}

/// Weights splitting the adversarial fraction among behaviors. Must be
/// non-negative and sum to 1 whenever sigma > 0. The bribery share is
/// not a stored behavior: those slots are spent after honest stores
/// are built, silencing the top singleton holders.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct AdversaryMix {
    pub silent: f64,
    pub murky: f64,
    pub opaque: f64,
    pub bribery: f64,
}

impl Default for AdversaryMix {
    fn default() -> AdversaryMix {
        AdversaryMix { silent: 1.0, murky: 0.0, opaque: 0.0, bribery: 0.0 }
    }
}

impl AdversaryMix {
    fn weights(&self) -> [f64; 4] {
        [self.silent, self.murky, self.opaque, self.bribery]
    }

    fn validate(&self) -> Result<()> {
        let w = self.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::config("adversary mix weights must be non-negative"));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("adversary mix weights must sum to 1"));
        }
        Ok(())
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_nodes: usize,
    /// Adversarial fraction; round(sigma * n_nodes) nodes misbehave.
    pub sigma: f64,
    pub adversary_mix: AdversaryMix,
    pub epoch: EpochConfig,
    /// Degree distribution parameters; `soliton.k` must equal
    /// `epoch.k`. Ignored by the random-sampling scheme.
    pub soliton: SolitonParams,
    pub scheme: Scheme,
    /// Nodes contacted per droplet-phase batch; decoding is attempted
    /// after each batch.
    pub n_hat: usize,
    pub trials: usize,
    pub rng_seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::config("network needs at least one node"));
        }
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(Error::config("sigma must lie in [0, 1)"));
        }
        if self.sigma > 0.0 {
            self.adversary_mix.validate()?;
        }
        self.epoch.validate()?;
        if self.scheme == Scheme::Sef && self.soliton.k != self.epoch.k {
            return Err(Error::config("soliton k must match epoch k"));
        }
        if self.scheme == Scheme::RandomSampling && self.epoch.s > self.epoch.k {
            return Err(Error::config("random sampling needs s <= k"));
        }
        if self.n_hat == 0 {
            return Err(Error::config("n_hat must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimNode {
    pub behavior: Behavior,
    /// Stored droplets across all sealed epochs, in epoch order.
    pub droplets: Vec<Droplet>,
}

/// One instantiated network over a ground-truth chain. Nodes share the
/// chain, its epoch views and the (single) corrupted header/tail copy
/// murky nodes serve; per-node state is droplets plus behavior.
#[derive(Clone, Debug)]
pub struct Network {
    pub cfg: NetworkConfig,
    pub chain: Chain,
    pub views: Vec<EpochView>,
    pub tail_start: usize,
    pub nodes: Vec<SimNode>,
    headers: Vec<Header>,
    tail: Vec<Block>,
    murky_headers: Vec<Header>,
    murky_tail: Vec<Block>,
}

/// Largest-remainder split of `total` into four non-negative parts
/// proportional to `weights` (assumed normalized). Ties go to the
/// earlier slot.
fn apportion(total: usize, weights: [f64; 4]) -> [usize; 4] {
    let mut out = [0usize; 4];
    let mut rema: Vec<(usize, f64)> = Vec::with_capacity(4);
    let mut used = 0;
    for (i, w) in weights.iter().enumerate() {
        let share = w * total as f64;
        out[i] = share.floor() as usize;
        used += out[i];
        rema.push((i, share - share.floor()));
    }
    rema.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in rema.iter().take(total - used) {
        out[i] += 1;
    }
    out
}

/// Corrupts one byte of one block so its Merkle root no longer matches
/// (or, failing a non-empty transaction, its header no longer matches
/// the real chain).
fn corrupt_blocks(blocks: &mut [Block]) {
    for b in blocks.iter_mut() {
        if let Some(tx) = b.txs.iter_mut().find(|t| !t.is_empty()) {
            tx[0] ^= 0x5A;
            return;
        }
    }
    if let Some(b) = blocks.first_mut() {
        b.header.metadata[0] ^= 0x5A;
    }
}

fn honest_droplets(
    views: &[EpochView],
    cfg: &EpochConfig,
    scheme: Scheme,
    node_seed: u64,
    pmf: &DegreePmf,
) -> Vec<Droplet> {
    let mut out = Vec::with_capacity(views.len() * cfg.s);
    match scheme {
        Scheme::Sef => {
            for (e, view) in views.iter().enumerate() {
                out.extend(crate::epoch::node_slot_droplets(
                    view,
                    e as u32,
                    cfg.s,
                    node_seed,
                    pmf,
                ));
            }
        }
        Scheme::RandomSampling => {
            for (e, view) in views.iter().enumerate() {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(node_seed, "sample", e as u64));
                let picks = rand::seq::index::sample(&mut rng, cfg.k, cfg.s);
                for m in picks.iter() {
                    out.push(Droplet {
                        epoch: e as u32,
                        neighbors: NeighborVec::from_indices(cfg.k, &[m]),
                        data: view.super_blocks()[m].clone(),
                    });
                }
            }
        }
    }
    out
}

/// XOR of the super-blocks a droplet claims, for checking c = vB.
fn claimed_xor(view: &EpochView, neighbors: &NeighborVec) -> Vec<u8> {
    let mut acc = Vec::new();
    for m in neighbors.iter_ones() {
        crate::codec::xor_into(&mut acc, &view.super_blocks()[m]);
    }
    acc
}

/// Corrupts a node's droplets in place: flip data bytes with
/// probability 1/2, resample the neighbor vector, or both; then force
/// the inconsistency constructively in the astronomically unlikely
/// event the corruption landed back on the truth.
fn murkify(droplets: &mut [Droplet], views: &[EpochView], pmf: &DegreePmf, rng: &mut ChaCha8Rng) {
    for d in droplets.iter_mut() {
        let view = &views[d.epoch as usize];
        let kind = rng.gen_range(0..3u8);
        if kind != 1 {
            for byte in d.data.iter_mut() {
                if rng.gen_bool(0.5) {
                    *byte ^= rng.gen::<u8>();
                }
            }
        }
        if kind != 0 {
            let degree = pmf.sample_degree(rng);
            let picks = rand::seq::index::sample(rng, view.k(), degree);
            d.neighbors = NeighborVec::from_indices(view.k(), &picks.into_vec());
        }
        if d.data == claimed_xor(view, &d.neighbors) {
            if d.data.is_empty() {
                d.data.push(0x5A);
            } else {
                d.data[0] ^= 0x5A;
            }
        }
    }
}

/// Builds the N droplet nodes over `chain`. Honest nodes come first,
/// then the silent / murky / opaque blocks (contact order is random at
/// bootstrap time, so placement is immaterial); bribery slots from the
/// mix are applied last, against the finished honest stores.
pub fn build_network(chain: &Chain, cfg: &NetworkConfig) -> Result<Network> {
    cfg.validate()?;
    let (views, tail_start) = build_epoch_views(chain, &cfg.epoch)?;
    if views.is_empty() {
        return Err(Error::config("chain too short to seal a single epoch"));
    }
    let pmf = match cfg.scheme {
        Scheme::Sef => robust_soliton(cfg.soliton)?,
        // Unused by the baseline's storage; any valid pmf over k does.
        Scheme::RandomSampling => crate::soliton::ideal_soliton(cfg.epoch.k)?,
    };

    let n_adv = (cfg.sigma * cfg.n_nodes as f64).round() as usize;
    let [n_silent, n_murky, n_opaque, n_bribe] = if n_adv == 0 {
        [0; 4]
    } else {
        apportion(n_adv, cfg.adversary_mix.weights())
    };
    let n_honest = cfg.n_nodes - n_silent - n_murky - n_opaque;

    let mut nodes = Vec::with_capacity(cfg.n_nodes);
    for i in 0..cfg.n_nodes {
        let behavior = if i < n_honest {
            Behavior::Honest
        } else if i < n_honest + n_silent {
            Behavior::Silent
        } else if i < n_honest + n_silent + n_murky {
            Behavior::Murky
        } else {
            Behavior::Opaque
        };
        let node_seed = derive_seed(cfg.rng_seed, "node", i as u64);
        let droplets = match behavior {
            Behavior::Silent => Vec::new(),
            Behavior::Honest => honest_droplets(&views, &cfg.epoch, cfg.scheme, node_seed, &pmf),
            Behavior::Murky => {
                let mut ds =
                    honest_droplets(&views, &cfg.epoch, cfg.scheme, node_seed, &pmf);
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(node_seed, "murky", 0));
                murkify(&mut ds, &views, &pmf, &mut rng);
                ds
            }
            Behavior::Opaque => views
                .iter()
                .enumerate()
                .flat_map(|(e, view)| {
                    let copy = Droplet {
                        epoch: e as u32,
                        neighbors: NeighborVec::from_indices(cfg.epoch.k, &[0]),
                        data: view.super_blocks()[0].clone(),
                    };
                    std::iter::repeat(copy).take(cfg.epoch.s)
                })
                .collect(),
        };
        nodes.push(SimNode { behavior, droplets });
    }

    let headers = chain.headers();
    let tail = chain.blocks[tail_start..].to_vec();
    let mut murky_headers = headers.clone();
    if !murky_headers.is_empty() {
        let mid = murky_headers.len() / 2;
        murky_headers[mid].prev_header_hash.0[0] ^= 0x5A;
    }
    let mut murky_tail = tail.clone();
    corrupt_blocks(&mut murky_tail);

    let mut net = Network {
        cfg: cfg.clone(),
        chain: chain.clone(),
        views,
        tail_start,
        nodes,
        headers,
        tail,
        murky_headers,
        murky_tail,
    };
    bribery_attack(&mut net, n_bribe);
    Ok(net)
}

/// Silences up to `budget` honest nodes, highest count of stored
/// degree-1 droplets first (ties by node index). Nodes holding no
/// singleton are never converted; the attacker reads stores, so this
/// models the non-oblivious adversary.
pub fn bribery_attack(net: &mut Network, budget: usize) {
    let mut ranked: Vec<(usize, usize)> = net
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.behavior == Behavior::Honest)
        .map(|(i, n)| {
            (i, n.droplets.iter().filter(|d| d.neighbors.count_ones() == 1).count())
        })
        .filter(|&(_, count)| count > 0)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    for &(i, _) in ranked.iter().take(budget) {
        net.nodes[i].behavior = Behavior::Silent;
    }
}

fn serve_headers(net: &Network, node: usize) -> Option<&[Header]> {
    match net.nodes[node].behavior {
        Behavior::Silent => None,
        Behavior::Murky => Some(&net.murky_headers),
        _ => Some(&net.headers),
    }
}

fn serve_tail(net: &Network, node: usize) -> Option<&[Block]> {
    match net.nodes[node].behavior {
        Behavior::Silent => None,
        Behavior::Murky => Some(&net.murky_tail),
        _ => Some(&net.tail),
    }
}

/// Order in which the bucket contacts nodes.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ContactPolicy {
    /// Fresh uniformly random permutation of all nodes (the protocol's
    /// assumption, and what every experiment uses).
    Random,
    /// Explicit order, for deterministic fixtures.
    Fixed(Vec<usize>),
}

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct BootstrapResult {
    pub success: bool,
    /// True iff the reassembled chain is byte-identical to the source.
    pub byte_exact: bool,
    /// Droplet-phase contacts (header queries are metered separately).
    pub nodes_contacted: usize,
    pub honest_contacted: usize,
    /// Droplet data payloads downloaded (bulk: every stored droplet of
    /// every responsive contact; as-needed: only fetched singletons).
    pub droplets_downloaded: usize,
    pub bytes_downloaded: u64,
    pub bytes_headers: u64,
    pub bytes_blockchain: u64,
    pub rejections: usize,
    pub xor_ops: u64,
    pub mode: Mode,
}

impl BootstrapResult {
    /// Download overhead relative to shipping the raw chain.
    pub fn overhead(&self) -> f64 {
        (self.bytes_downloaded as f64 - self.bytes_blockchain as f64)
            / self.bytes_blockchain as f64
    }
}

/// Per-epoch decoder plus the origin (node, droplet index) of every
/// inserted droplet, so deferred fetches know where data lives.
struct EpochRun {
    state: DecoderState,
    origin: Vec<(usize, usize)>,
}

fn tail_matches(blocks: &[Block], expected: &[Header]) -> bool {
    blocks.len() == expected.len()
        && blocks.iter().zip(expected).all(|(b, h)| {
            b.header == *h
                && Block::payload_bytes(&b.txs).len() as u64 == h.payload_size
                && merkle_root(&b.txs).is_ok_and(|r| r == h.merkle_root)
        })
}

/// Runs one bootstrap against the network: header phase over the first
/// min(25, N) nodes of the contact order, droplet phase in batches of
/// n_hat until every sealed epoch decodes, then a tail fetch validated
/// against the trusted headers (asked of already-contacted nodes
/// first). `seed` drives the random contact order and nothing else.
pub fn bootstrap(
    net: &Network,
    policy: &ContactPolicy,
    mode: Mode,
    seed: u64,
) -> Result<BootstrapResult> {
    let n = net.nodes.len();
    let order: Vec<usize> = match policy {
        ContactPolicy::Random => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order
        }
        ContactPolicy::Fixed(order) => {
            if order.iter().any(|&i| i >= n) {
                return Err(Error::config("fixed contact order names a missing node"));
            }
            order.clone()
        }
    };

    let bytes_blockchain = net.chain.serialized_len();
    let mut result = BootstrapResult {
        success: false,
        byte_exact: false,
        nodes_contacted: 0,
        honest_contacted: 0,
        droplets_downloaded: 0,
        bytes_downloaded: 0,
        bytes_headers: 0,
        bytes_blockchain,
        rejections: 0,
        xor_ops: 0,
        mode,
    };

    // Header phase.
    let mut trusted: Option<&[Header]> = None;
    for &i in order.iter().take(25.min(order.len())) {
        if let Some(hs) = serve_headers(net, i) {
            result.bytes_headers += (hs.len() * HEADER_LEN) as u64;
            if validate_header_chain(hs) && trusted.map_or(true, |t| hs.len() > t.len()) {
                trusted = Some(hs);
            }
        }
    }
    let Some(trusted) = trusted else {
        return Ok(result);
    };

    // Epoch layout per the trusted headers (equal to ground truth once
    // an honest chain won the header phase).
    let ranges = partition_blocks(trusted, net.cfg.epoch.l_super)?;
    let k = net.cfg.epoch.k;
    let mut runs: Vec<EpochRun> = Vec::new();
    let mut next = 0usize;
    while next + k <= ranges.len() {
        let end = ranges[next + k - 1].end;
        if trusted.len() < end + net.cfg.epoch.tau {
            break;
        }
        let groups: Vec<Vec<Header>> = ranges[next..next + k]
            .iter()
            .map(|r| trusted[r.clone()].to_vec())
            .collect();
        runs.push(EpochRun {
            state: DecoderState::new(groups, DecodeOptions::default())?,
            origin: Vec::new(),
        });
        next += k;
    }
    if runs.is_empty() {
        return Ok(result);
    }
    let tail_start = ranges[next - 1].end;
    let n_epochs = runs.len();

    // Droplet phase.
    let mut contacted_upto = 0usize;
    'contact: for batch in order.chunks(net.cfg.n_hat) {
        if runs.iter().all(|r| r.state.is_complete()) {
            break 'contact;
        }
        for &i in batch {
            result.nodes_contacted += 1;
            contacted_upto += 1;
            let node = &net.nodes[i];
            if node.behavior == Behavior::Honest {
                result.honest_contacted += 1;
            }
            if node.behavior == Behavior::Silent {
                continue;
            }
            for (j, d) in node.droplets.iter().enumerate() {
                let e = d.epoch as usize;
                if e >= n_epochs {
                    continue;
                }
                let run = &mut runs[e];
                let id = match mode {
                    Mode::Bulk => {
                        result.bytes_downloaded += d.wire_len() as u64;
                        result.droplets_downloaded += 1;
                        run.state.add_droplet(d)?
                    }
                    Mode::AsNeeded => {
                        result.bytes_downloaded += d.vector_wire_len() as u64;
                        run.state.add_vector_only(&d.neighbors)?
                    }
                };
                debug_assert_eq!(id as usize, run.origin.len());
                run.origin.push((i, j));
            }
        }
        for run in runs.iter_mut() {
            while let Step::NeedData { droplet } = run.state.run() {
                let (ni, dj) = run.origin[droplet as usize];
                let data = net.nodes[ni].droplets[dj].data.clone();
                result.bytes_downloaded += 8 + data.len() as u64;
                result.droplets_downloaded += 1;
                run.state.supply_data(droplet, data);
            }
        }
    }

    result.rejections = runs.iter().map(|r| r.state.rejected()).sum();
    result.xor_ops = runs.iter().map(|r| r.state.xor_ops()).sum();
    if !runs.iter().all(|r| r.state.is_complete()) {
        return Ok(result);
    }

    // Tail fetch: already-contacted nodes first, then the rest of the
    // order (those count as fresh contacts).
    let expected_tail = &trusted[tail_start..];
    let mut tail_blocks: Vec<Block> = Vec::new();
    let mut tail_ok = expected_tail.is_empty();
    if !tail_ok {
        for (pos, &i) in order.iter().enumerate() {
            if pos >= contacted_upto {
                result.nodes_contacted += 1;
                if net.nodes[i].behavior == Behavior::Honest {
                    result.honest_contacted += 1;
                }
            }
            if let Some(tb) = serve_tail(net, i) {
                result.bytes_downloaded +=
                    tb.iter().map(|b| b.serialized_len() as u64).sum::<u64>();
                if tail_matches(tb, expected_tail) {
                    tail_blocks = tb.to_vec();
                    tail_ok = true;
                    break;
                }
            }
        }
    }
    if !tail_ok {
        return Ok(result);
    }

    result.success = true;
    let mut recovered: Vec<u8> = Vec::new();
    for run in &runs {
        for m in 0..k {
            recovered.extend_from_slice(run.state.decoded_block(m).expect("complete"));
        }
    }
    for b in &tail_blocks {
        recovered.extend_from_slice(&b.to_bytes());
    }
    let mut truth: Vec<u8> = Vec::with_capacity(recovered.len());
    for b in &net.chain.blocks {
        truth.extend_from_slice(&b.to_bytes());
    }
    result.byte_exact = recovered == truth;
    Ok(result)
}

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct CostReport {
    pub target_prob: f64,
    pub trials: usize,
    pub successes: usize,
    /// Empirical target_prob-quantile of honest nodes contacted at
    /// first success; `None` when too many trials failed for the
    /// quantile to exist (failures sort as infinity).
    pub k_hat: Option<usize>,
    /// Honest-contact statistics over successful trials.
    pub mean_cost: f64,
    pub min_cost: usize,
    pub max_cost: usize,
    /// Mean total nodes contacted over successful trials.
    pub mean_total: f64,
    pub mean_overhead: f64,
    pub results: Vec<BootstrapResult>,
}

/// Runs `cfg.trials` independent bootstraps (parallel) with random
/// contact order, each over a freshly built network seeded from the
/// trial index.
pub fn measure_bootstrap_cost(
    chain: &Chain,
    cfg: &NetworkConfig,
    mode: Mode,
    target_prob: f64,
) -> Result<CostReport> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&target_prob) {
        return Err(Error::config("target probability must lie in [0, 1]"));
    }
    let results: Vec<BootstrapResult> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut trial_cfg = cfg.clone();
            trial_cfg.rng_seed = derive_seed(cfg.rng_seed, "trial-net", t as u64);
            let net = build_network(chain, &trial_cfg)?;
            bootstrap(
                &net,
                &ContactPolicy::Random,
                mode,
                derive_seed(cfg.rng_seed, "trial-boot", t as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut honest: Vec<usize> = results
        .iter()
        .map(|r| if r.success { r.honest_contacted } else { usize::MAX })
        .collect();
    honest.sort_unstable();
    let idx = ((target_prob * cfg.trials as f64).ceil() as usize).clamp(1, cfg.trials) - 1;
    let k_hat = (honest[idx] != usize::MAX).then_some(honest[idx]);

    let ok: Vec<&BootstrapResult> = results.iter().filter(|r| r.success).collect();
    let successes = ok.len();
    let report = CostReport {
        target_prob,
        trials: cfg.trials,
        successes,
        k_hat,
        mean_cost: mean(ok.iter().map(|r| r.honest_contacted as f64)),
        min_cost: ok.iter().map(|r| r.honest_contacted).min().unwrap_or(0),
        max_cost: ok.iter().map(|r| r.honest_contacted).max().unwrap_or(0),
        mean_total: mean(ok.iter().map(|r| r.nodes_contacted as f64)),
        mean_overhead: mean(ok.iter().map(|r| r.overhead())),
        results,
    };
    Ok(report)
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in it {
        sum += x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct KsPair {
    pub k: usize,
    pub s: usize,
}

/// Grid experiment over (k, s) pairs, soliton parameters and
/// adversarial fractions. Each cell generates a fixed-size chain of
/// exactly k blocks (one block per super-block, no tail), sizes the
/// network as ceil(node_factor * k / (s * (1 - sigma))), and runs
/// `measure_bootstrap_cost`.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub pairs: Vec<KsPair>,
    /// Robust-soliton c grid; ignored by the random-sampling scheme.
    pub cs: Vec<f64>,
    /// Robust-soliton delta grid; ignored by the random-sampling
    /// scheme.
    pub deltas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub scheme: Scheme,
    pub mode: Mode,
    pub adversary_mix: AdversaryMix,
    pub trials: usize,
    pub n_hat: usize,
    pub node_factor: f64,
    pub target_prob: f64,
    pub payload_size: u64,
    pub txs_per_block: u32,
    pub rng_seed: u64,
}

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct CellSummary {
    pub experiment_id: String,
    pub k: usize,
    pub s: usize,
    pub c: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: f64,
    pub scheme: Scheme,
    pub mode: Mode,
    pub n_nodes: usize,
    pub trials: usize,
    pub gamma_target: f64,
    /// Mean per-node storage savings actually measured on honest
    /// stores (coded ratio).
    pub gamma_measured: f64,
    /// Optimal bootstrap cost, ceil(gamma).
    pub optimal_bound: usize,
    pub k_hat: Option<usize>,
    pub mean_cost: f64,
    pub min_cost: usize,
    pub max_cost: usize,
    pub mean_total: f64,
    pub mean_overhead: f64,
    pub success_rate: f64,
    /// True for the (c, delta) with the lowest k_hat (ties by mean
    /// cost) within its (k, s, sigma) group.
    pub best: bool,
}

#[derive(Clone, PartialEq, Debug, Serialize)]
pub struct SweepReport {
    pub cells: Vec<CellSummary>,
    /// One row per trial, ready for plotting.
    pub trial_csv: String,
    /// One row per cell.
    pub summary_csv: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

/// Runs the grid. Soliton parameter combinations that are invalid for
/// a given k (spike degree outside [1, k]) are skipped rather than
/// reported, since no pmf exists to measure.
pub fn sweep(spec: &SweepSpec) -> Result<SweepReport> {
    if spec.pairs.is_empty() {
        return Err(Error::config("sweep grid has no (k, s) pairs"));
    }
    if spec.node_factor <= 0.0 || !spec.node_factor.is_finite() {
        return Err(Error::config("node_factor must be positive"));
    }
    let mut cells: Vec<CellSummary> = Vec::new();
    let mut trial_csv = String::from(
        "experiment_id,k,s,c,delta,sigma,mode,trial,nodes_contacted,honest_contacted,bytes_down,overhead,success\n",
    );

    for pair in &spec.pairs {
        let epoch = EpochConfig { k: pair.k, s: pair.s, tau: 0, l_super: None };
        epoch.validate()?;
        let chain = generate_chain(&ChainGenConfig {
            n_blocks: pair.k,
            size_model: SizeModel::Fixed { payload: spec.payload_size },
            tx_count: TxCountModel::Fixed { count: spec.txs_per_block },
            rng_seed: derive_seed(spec.rng_seed, "chain", pair.k as u64),
        })?;
        for &sigma in &spec.sigmas {
            let n_nodes = (spec.node_factor * pair.k as f64
                / (pair.s as f64 * (1.0 - sigma)))
                .ceil() as usize;
            let variants: Vec<(Option<f64>, Option<f64>)> = match spec.scheme {
                Scheme::RandomSampling => vec![(None, None)],
                Scheme::Sef => spec
                    .cs
                    .iter()
                    .flat_map(|&c| spec.deltas.iter().map(move |&d| (Some(c), Some(d))))
                    .collect(),
            };
            let group_start = cells.len();
            for (c, delta) in variants {
                let soliton = SolitonParams {
                    k: pair.k,
                    c: c.unwrap_or(0.1),
                    delta: delta.unwrap_or(0.5),
                };
                if spec.scheme == Scheme::Sef && robust_soliton(soliton).is_err() {
                    continue;
                }
                let experiment_id = match spec.scheme {
                    Scheme::Sef => format!(
                        "sef-k{}-s{}-c{}-d{}-sig{}-{}",
                        pair.k,
                        pair.s,
                        c.unwrap(),
                        delta.unwrap(),
                        sigma,
                        spec.mode.label()
                    ),
                    Scheme::RandomSampling => format!(
                        "rs-k{}-s{}-sig{}-{}",
                        pair.k,
                        pair.s,
                        sigma,
                        spec.mode.label()
                    ),
                };
                let cfg = NetworkConfig {
                    n_nodes,
                    sigma,
                    adversary_mix: spec.adversary_mix,
                    epoch,
                    soliton,
                    scheme: spec.scheme,
                    n_hat: spec.n_hat,
                    trials: spec.trials,
                    rng_seed: derive_seed(spec.rng_seed, &experiment_id, 0),
                };
                let report = measure_bootstrap_cost(&chain, &cfg, spec.mode, spec.target_prob)?;
                let gamma_measured = measure_gamma(&chain, &cfg)?;
                for (t, r) in report.results.iter().enumerate() {
                    trial_csv.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{},{:.6},{}\n",
                        experiment_id,
                        pair.k,
                        pair.s,
                        fmt_opt(c),
                        fmt_opt(delta),
                        sigma,
                        spec.mode.label(),
                        t,
                        r.nodes_contacted,
                        r.honest_contacted,
                        r.bytes_downloaded,
                        r.overhead(),
                        u8::from(r.success),
                    ));
                }
                let gamma_target = epoch.gamma_target();
                cells.push(CellSummary {
                    experiment_id,
                    k: pair.k,
                    s: pair.s,
                    c,
                    delta,
                    sigma,
                    scheme: spec.scheme,
                    mode: spec.mode,
                    n_nodes,
                    trials: spec.trials,
                    gamma_target,
                    gamma_measured,
                    optimal_bound: gamma_target.ceil() as usize,
                    k_hat: report.k_hat,
                    mean_cost: report.mean_cost,
                    min_cost: report.min_cost,
                    max_cost: report.max_cost,
                    mean_total: report.mean_total,
                    mean_overhead: report.mean_overhead,
                    success_rate: report.successes as f64 / report.trials as f64,
                    best: false,
                });
            }
            // Mark the best (c, delta) of this (k, s, sigma) group.
            let group = &mut cells[group_start..];
            if let Some(best_idx) = (0..group.len()).min_by(|&a, &b| {
                let ka = group[a].k_hat.unwrap_or(usize::MAX);
                let kb = group[b].k_hat.unwrap_or(usize::MAX);
                ka.cmp(&kb).then(
                    group[a]
                        .mean_cost
                        .partial_cmp(&group[b].mean_cost)
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
            }) {
                group[best_idx].best = true;
            }
        }
    }

    let mut summary_csv = String::from(
        "experiment_id,k,s,c,delta,sigma,scheme,mode,n_nodes,trials,gamma_target,gamma_measured,optimal_bound,k_hat,mean_cost,min_cost,max_cost,mean_total,mean_overhead,success_rate,best\n",
    );
    for cell in &cells {
        summary_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:.4},{:.4},{},{},{:.2},{},{},{:.2},{:.6},{:.4},{}\n",
            cell.experiment_id,
            cell.k,
            cell.s,
            fmt_opt(cell.c),
            fmt_opt(cell.delta),
            cell.sigma,
            cell.scheme.label(),
            cell.mode.label(),
            cell.n_nodes,
            cell.trials,
            cell.gamma_target,
            cell.gamma_measured,
            cell.optimal_bound,
            cell.k_hat.map_or(String::new(), |k| k.to_string()),
            cell.mean_cost,
            cell.min_cost,
            cell.max_cost,
            cell.mean_total,
            cell.mean_overhead,
            cell.success_rate,
            u8::from(cell.best),
        ));
    }
    Ok(SweepReport { cells, trial_csv, summary_csv })
}

/// Mean coded storage-savings ratio over the honest nodes of a probe
/// network built from trial 0's seed.
fn measure_gamma(chain: &Chain, cfg: &NetworkConfig) -> Result<f64> {
    let mut probe_cfg = cfg.clone();
    probe_cfg.rng_seed = derive_seed(cfg.rng_seed, "trial-net", 0);
    let net = build_network(chain, &probe_cfg)?;
    let ranges = partition_blocks(&net.headers, cfg.epoch.l_super)?;
    let covered = net.views.len() * cfg.epoch.k;
    let end_block = ranges[covered - 1].end;
    let sealed_bytes: u64 = net.chain.blocks[..end_block]
        .iter()
        .map(|b| b.serialized_len() as u64)
        .sum();
    let ratios: Vec<f64> = net
        .nodes
        .iter()
        .filter(|n| n.behavior == Behavior::Honest)
        .map(|n| {
            let stored: u64 = n.droplets.iter().map(|d| d.data.len() as u64).sum();
            sealed_bytes as f64 / stored as f64
        })
        .collect();
    Ok(mean(ratios.into_iter()))
}

/// The six-block, nine-droplet hand example as a network: one droplet
/// per node, nodes 1 and 5 (zero-based) murky. Contacting nodes in
/// index order reproduces the canonical decode: all six blocks
/// recovered with exactly two rejections.
pub fn toy_network() -> Network {
    let chain = generate_chain(&ChainGenConfig {
        n_blocks: 6,
        size_model: SizeModel::Fixed { payload: 64 },
        tx_count: TxCountModel::Fixed { count: 2 },
        rng_seed: 4242,
    })
    .unwrap();
    let cfg = NetworkConfig {
        n_nodes: 9,
        sigma: 2.0 / 9.0,
        adversary_mix: AdversaryMix { silent: 0.0, murky: 1.0, opaque: 0.0, bribery: 0.0 },
        epoch: EpochConfig { k: 6, s: 1, tau: 0, l_super: None },
        soliton: SolitonParams { k: 6, c: 0.05, delta: 0.5 },
        scheme: Scheme::Sef,
        n_hat: 1,
        trials: 1,
        rng_seed: 0,
    };
    let (views, tail_start) = build_epoch_views(&chain, &cfg.epoch).unwrap();
    let adjacency: [&[usize]; 9] = [
        &[2, 5, 4],
        &[2, 0, 1],
        &[0, 3],
        &[2],
        &[5, 0],
        &[2, 5],
        &[1, 4],
        &[2, 5],
        &[3, 1],
    ];
    let murky = [1usize, 5];
    let nodes: Vec<SimNode> = adjacency
        .iter()
        .enumerate()
        .map(|(i, neigh)| {
            let neighbors = NeighborVec::from_indices(6, neigh);
            let mut data = claimed_xor(&views[0], &neighbors);
            let behavior = if murky.contains(&i) {
                data[100 + i] ^= 0x5A;
                Behavior::Murky
            } else {
                Behavior::Honest
            };
            SimNode { behavior, droplets: vec![Droplet { epoch: 0, neighbors, data }] }
        })
        .collect();
    let headers = chain.headers();
    let mut murky_headers = headers.clone();
    murky_headers[3].prev_header_hash.0[0] ^= 0x5A;
    Network {
        cfg,
        chain,
        views,
        tail_start,
        nodes,
        headers,
        tail: Vec::new(),
        murky_headers,
        murky_tail: Vec::new(),
    }
}
