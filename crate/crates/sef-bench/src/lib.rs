//! Deterministic fixtures shared by the criterion benches: a
//! fixed-size chain, its single-epoch header groups and view, and
//! pre-encoded droplet sets sized so a decode run has enough to finish.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sef_core::codec::{encode_droplet, Droplet, EpochView};
use sef_core::epoch::{build_epoch_views, EpochConfig};
use sef_core::hashchain::{generate_chain, ChainGenConfig, Header, SizeModel, TxCountModel};
use sef_core::soliton::DegreePmf;

/// One sealed epoch over a fixed-size chain: k blocks of `payload`
/// bytes each, one block per super-block.
pub fn epoch_fixture(k: usize, payload: u64) -> (Vec<Vec<Header>>, EpochView) {
    let chain = generate_chain(&ChainGenConfig {
        n_blocks: k,
        size_model: SizeModel::Fixed { payload },
        tx_count: TxCountModel::Fixed { count: 2 },
        rng_seed: 9090,
    })
    .expect("chain");
    let cfg = EpochConfig { k, s: 1, tau: 0, l_super: None };
    let (mut views, _) = build_epoch_views(&chain, &cfg).expect("views");
    let groups = chain.headers().into_iter().map(|h| vec![h]).collect();
    (groups, views.remove(0))
}

/// `n` droplets drawn from `pmf` over the given view.
pub fn droplet_batch(view: &EpochView, pmf: &DegreePmf, n: usize) -> Vec<Droplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(2424);
    (0..n).map(|_| encode_droplet(view, 0, pmf, &mut rng)).collect()
}
