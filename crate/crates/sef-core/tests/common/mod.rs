//! Independent reference implementations used to cross-check the
//! library: a from-scratch SHA-256 whose round constants are derived
//! arithmetically (not transcribed), a dense GF(2) solver, degree
//! distributions evaluated straight from their defining formulas, and
//! fixture builders that assemble droplets by raw XOR rather than
//! through the encoder under test.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sef_core::codec::{Droplet, NeighborVec};
use sef_core::hashchain::{generate_chain, ChainGenConfig, Header, SizeModel, TxCountModel};
use sef_core::soliton::{ideal_soliton, robust_soliton, SolitonParams};
use std::collections::BTreeSet;

// ---------------------------------------------------------------------------
// SHA-256, written independently of the `sha2` crate.
//
// The initial hash words are the first 32 fractional bits of sqrt(p)
// and the round constants those of cbrt(p), for the first primes p.
// Both are computed here with exact integer root extraction so that a
// transcription typo is impossible.

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut cand = 2u64;
    while primes.len() < n {
        if primes.iter().all(|&p| cand % p != 0) {
            primes.push(cand);
        }
        cand += 1;
    }
    primes
}

/// floor(sqrt(n)) by bisection.
fn isqrt(n: u128) -> u128 {
    let (mut lo, mut hi) = (0u128, 1u128 << 64);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if mid.checked_mul(mid).is_some_and(|sq| sq <= n) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// floor(cbrt(n)) by bisection.
fn icbrt(n: u128) -> u128 {
    let (mut lo, mut hi) = (0u128, 1u128 << 43);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        let cube = mid.checked_mul(mid).and_then(|sq| sq.checked_mul(mid));
        if cube.is_some_and(|c| c <= n) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn sha_constants() -> ([u32; 8], [u32; 64]) {
    let primes = first_primes(64);
    let mut h = [0u32; 8];
    for (i, &p) in primes.iter().take(8).enumerate() {
        // frac(sqrt(p)) * 2^32 = floor(sqrt(p * 2^64)) mod 2^32.
        h[i] = (isqrt((p as u128) << 64) & 0xFFFF_FFFF) as u32;
    }
    let mut k = [0u32; 64];
    for (i, &p) in primes.iter().enumerate() {
        // frac(cbrt(p)) * 2^32 = floor(cbrt(p * 2^96)) mod 2^32.
        k[i] = (icbrt((p as u128) << 96) & 0xFFFF_FFFF) as u32;
    }
    (h, k)
}

pub fn ref_sha256(msg: &[u8]) -> [u8; 32] {
    let (mut h, k) = sha_constants();

    let mut data = msg.to_vec();
    let bit_len = (msg.len() as u64) * 8;
    data.push(0x80);
    while data.len() % 64 != 56 {
        data.push(0);
    }
    data.extend_from_slice(&bit_len.to_be_bytes());

    for chunk in data.chunks_exact(64) {
        let mut w = [0u32; 64];
        for (t, word) in chunk.chunks_exact(4).enumerate() {
            w[t] = u32::from_be_bytes(word.try_into().unwrap());
        }
        for t in 16..64 {
            let s0 = w[t - 15].rotate_right(7) ^ w[t - 15].rotate_right(18) ^ (w[t - 15] >> 3);
            let s1 = w[t - 2].rotate_right(17) ^ w[t - 2].rotate_right(19) ^ (w[t - 2] >> 10);
            w[t] = w[t - 16]
                .wrapping_add(s0)
                .wrapping_add(w[t - 7])
                .wrapping_add(s1);
        }
        let [mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh] = h;
        for t in 0..64 {
            let sigma1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
            let ch = (e & f) ^ (!e & g);
            let t1 = hh
                .wrapping_add(sigma1)
                .wrapping_add(ch)
                .wrapping_add(k[t])
                .wrapping_add(w[t]);
            let sigma0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
            let maj = (a & b) ^ (a & c) ^ (b & c);
            let t2 = sigma0.wrapping_add(maj);
            hh = g;
            g = f;
            f = e;
            e = d.wrapping_add(t1);
            d = c;
            c = b;
            b = a;
            a = t1.wrapping_add(t2);
        }
        for (slot, v) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
            *slot = slot.wrapping_add(v);
        }
    }

    let mut out = [0u8; 32];
    for (i, word) in h.iter().enumerate() {
        out[i * 4..i * 4 + 4].copy_from_slice(&word.to_be_bytes());
    }
    out
}

// ---------------------------------------------------------------------------
// GF(2) linear algebra.

/// XOR `other` into `acc`, zero-extending `acc` first if shorter.
pub fn xor_acc(acc: &mut Vec<u8>, other: &[u8]) {
    if acc.len() < other.len() {
        acc.resize(other.len(), 0);
    }
    for (a, b) in acc.iter_mut().zip(other) {
        *a ^= b;
    }
}

/// Gauss-Jordan elimination over GF(2) for systems of XOR equations in
/// at most 64 unknown blocks. Each row is (mask, payload) where bit i
/// of the mask marks block i as a summand. Returns the unique solution
/// (one byte vector per block, zero-padded to the row widths seen)
/// when the mask matrix has full column rank, `None` otherwise.
pub fn gf2_solve(k: usize, rows: &[(u64, Vec<u8>)]) -> Option<Vec<Vec<u8>>> {
    assert!(k <= 64, "dense solver handles at most 64 blocks");
    let mut m: Vec<(u64, Vec<u8>)> = rows.to_vec();
    // Column col pivots on row col: every column must yield a pivot or
    // the system is rank-deficient, so pivots land in row order.
    for col in 0..k {
        let bit = 1u64 << col;
        let sel = (col..m.len()).find(|&r| m[r].0 & bit != 0)?;
        m.swap(col, sel);
        let (pivot_mask, pivot_data) = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col && row.0 & bit != 0 {
                row.0 ^= pivot_mask;
                xor_acc(&mut row.1, &pivot_data);
            }
        }
    }
    Some(
        m.into_iter()
            .take(k)
            .map(|(mask, data)| {
                debug_assert_eq!(mask.count_ones(), 1);
                data
            })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Degree distributions straight from their defining formulas.

/// Ideal soliton: probs[i] = P(degree = i+1).
pub fn ref_ideal_soliton(k: usize) -> Vec<f64> {
    let mut probs = vec![0.0; k];
    probs[0] = 1.0 / k as f64;
    for d in 2..=k {
        probs[d - 1] = 1.0 / (d as f64 * (d as f64 - 1.0));
    }
    probs
}

/// Robust soliton and its R: rho + tau normalized by beta, with the
/// extra mass R/(dk) below the spike round(k/R) and (R/k) ln(R/delta)
/// on it. probs[i] = P(degree = i+1).
pub fn ref_robust_soliton(k: usize, c: f64, delta: f64) -> (Vec<f64>, f64) {
    let kf = k as f64;
    let r = c * kf.sqrt() * (kf / delta).ln();
    let spike = (kf / r).round() as usize;
    assert!((1..=k).contains(&spike), "spike degree out of range");
    let mut terms = ref_ideal_soliton(k);
    for (i, t) in terms.iter_mut().enumerate() {
        let d = (i + 1) as f64;
        if i + 1 < spike {
            *t += r / (d * kf);
        } else if i + 1 == spike {
            *t += (r / kf) * (r / delta).ln();
        }
    }
    let beta: f64 = terms.iter().sum();
    for t in &mut terms {
        *t /= beta;
    }
    (terms, r)
}

// ---------------------------------------------------------------------------
// Fixtures.

/// A decode problem assembled outside the encoder: trusted per-block
/// header groups, the serialized source blocks, candidate droplets,
/// and the ids of the deliberately corrupted ones.
pub struct Fixture {
    pub header_groups: Vec<Vec<Header>>,
    pub blocks: Vec<Vec<u8>>,
    pub droplets: Vec<Droplet>,
    pub corrupt: BTreeSet<u32>,
}

fn raw_droplet(k: usize, indices: &[usize], blocks: &[Vec<u8>]) -> Droplet {
    let mut data = Vec::new();
    for &i in indices {
        xor_acc(&mut data, &blocks[i]);
    }
    Droplet {
        epoch: 0,
        neighbors: NeighborVec::from_indices(k, indices),
        data,
    }
}

/// The hand-traceable decode example: six blocks, nine droplets, two
/// of them corrupted. Droplet 1 claims blocks {2,0,1} but a payload
/// byte is flipped; droplet 5 claims {2,5} but a header byte is
/// flipped. Error-resilient peeling decodes all six blocks and rejects
/// exactly those two.
pub fn toy_fixture() -> Fixture {
    let chain = generate_chain(&ChainGenConfig {
        n_blocks: 6,
        size_model: SizeModel::Fixed { payload: 64 },
        tx_count: TxCountModel::Fixed { count: 2 },
        rng_seed: 4242,
    })
    .unwrap();
    let headers = chain.headers();
    let header_groups: Vec<Vec<Header>> = headers.iter().map(|h| vec![*h]).collect();
    let blocks: Vec<Vec<u8>> = chain.blocks.iter().map(|b| b.to_bytes()).collect();

    let adjacency: [&[usize]; 9] = [
        &[2, 5, 4],
        &[2, 0, 1],
        &[3, 0],
        &[2],
        &[0, 5],
        &[2, 5],
        &[1, 4],
        &[2, 5],
        &[1, 3],
    ];
    let mut droplets: Vec<Droplet> =
        adjacency.iter().map(|idx| raw_droplet(6, idx, &blocks)).collect();
    // Droplet 1: flip one payload byte, so the Merkle check fails once
    // it peels down to a singleton.
    droplets[1].data[sef_core::hashchain::HEADER_LEN + 10] ^= 0xA5;
    // Droplet 5: flip one header byte, so the header comparison fails.
    droplets[5].data[3] ^= 0xFF;

    Fixture {
        header_groups,
        blocks,
        droplets,
        corrupt: BTreeSet::from([1, 5]),
    }
}

/// Randomized decode problem: `k` single-block groups with payload
/// sizes drawn from a small range, and enough droplets that the clear
/// subset usually completes. A `sigma` fraction of droplets is
/// corrupted — a quarter opaque (degree-1 claim whose data is block
/// 0), the rest murky (flipped data byte or re-sampled vector).
pub fn fuzz_fixture(k: usize, sigma: f64, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = generate_chain(&ChainGenConfig {
        n_blocks: k,
        size_model: SizeModel::Uniform { lo: 16, hi: 220 },
        tx_count: TxCountModel::Fixed { count: 2 },
        rng_seed: rng.gen(),
    })
    .unwrap();
    let headers = chain.headers();
    let header_groups: Vec<Vec<Header>> = headers.iter().map(|h| vec![*h]).collect();
    let blocks: Vec<Vec<u8>> = chain.blocks.iter().map(|b| b.to_bytes()).collect();

    let n = ((1.8 * k as f64) / (1.0 - sigma).max(0.5)).ceil() as usize;
    let n_corrupt = (sigma * n as f64).round() as usize;
    // The robust spike round(k/R) leaves 1..=k for very small k;
    // fall back to the ideal soliton there.
    let pmf = robust_soliton(SolitonParams { k, c: 0.1, delta: 0.5 })
        .unwrap_or_else(|_| ideal_soliton(k).unwrap());

    let mut droplets = Vec::with_capacity(n);
    for _ in 0..n {
        let d = pmf.sample_degree(&mut rng);
        let indices = rand::seq::index::sample(&mut rng, k, d).into_vec();
        droplets.push(raw_droplet(k, &indices, &blocks));
    }

    // Corrupt the first n_corrupt droplets, then shuffle.
    for droplet in droplets.iter_mut().take(n_corrupt) {
        let style = rng.gen_range(0..4u8);
        match style {
            0 => {
                // Opaque: claim one block, serve block 0's bytes.
                let claim = rng.gen_range(1..k);
                droplet.neighbors = NeighborVec::from_indices(k, &[claim]);
                droplet.data = blocks[0].clone();
            }
            1 => {
                // Murky: flip a data byte.
                let pos = rng.gen_range(0..droplet.data.len());
                droplet.data[pos] ^= rng.gen_range(1..=255u8);
            }
            _ => {
                // Murky: keep the data, claim a different neighbor set.
                loop {
                    let d = pmf.sample_degree(&mut rng);
                    let indices = rand::seq::index::sample(&mut rng, k, d).into_vec();
                    let fresh = NeighborVec::from_indices(k, &indices);
                    if fresh != droplet.neighbors {
                        droplet.neighbors = fresh;
                        break;
                    }
                }
            }
        }
    }
    droplets.shuffle(&mut rng);

    // Ids follow add order, so recompute which entries are corrupt by
    // content: a droplet is corrupt iff its data differs from the XOR
    // of the blocks its vector claims.
    let mut corrupt = BTreeSet::new();
    for (id, droplet) in droplets.iter().enumerate() {
        let honest = {
            let indices: Vec<usize> = droplet.neighbors.iter_ones().collect();
            let mut data = Vec::new();
            for &i in &indices {
                xor_acc(&mut data, &blocks[i]);
            }
            data.resize(droplet.data.len().max(data.len()), 0);
            data
        };
        let mut served = droplet.data.clone();
        served.resize(honest.len().max(served.len()), 0);
        if served != honest {
            corrupt.insert(id as u32);
        }
    }

    Fixture { header_groups, blocks, droplets, corrupt }
}
