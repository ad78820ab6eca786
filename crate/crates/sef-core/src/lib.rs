//! Fountain-coded blockchain storage.
//!
//! Full nodes keep an entire chain; this library lets a network of
//! lightweight "droplet nodes" collectively keep it instead. Each node
//! stores a few random XOR combinations of the blocks in a sealed epoch
//! plus the header chain, and a joining node reassembles the epoch by
//! collecting droplets from random peers and peeling them apart,
//! verifying every recovered block against the header chain as it goes.
//! Malicious droplets are detected and discarded during decoding rather
//! than poisoning the result.
//!
//! Module map:
//! - [`hashchain`]: headers, blocks, Merkle roots, chain generation and
//!   the on-disk chain format.
//! - [`soliton`]: degree distributions for the encoder (ideal/robust
//!   soliton and the all-at-once point mass).
//! - [`codec`]: droplet encoding and the verifying peeling decoder.
//! - [`epoch`]: super-block concatenation, epoch sealing, per-node
//!   storage and storage-savings accounting.
//! - [`sim`]: network bootstrap simulation, adversaries, cost/bandwidth
//!   measurement and parameter sweeps.

pub mod codec;
pub mod epoch;
mod error;
pub mod hashchain;
pub mod sim;
pub mod soliton;

pub use error::{Error, Result};

use sha2::{Digest as _, Sha256};

/// Derives an independent 64-bit seed from a base seed, a domain label
/// and an index: `base ^ first8(SHA-256(domain || index_be))`.
///
/// Every randomized subsystem (per-node stores, per-trial networks,
/// per-droplet-slot streams) seeds its own generator through this, so
/// streams never alias across domains and any one of them can be
/// reproduced in isolation.
pub fn derive_seed(base: u64, domain: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(domain.as_bytes());
    h.update(index.to_be_bytes());
    let out = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&out[..8]);
    base ^ u64::from_be_bytes(first)
}
