//! `sef` — experiment driver for fountain-coded blockchain storage.
//!
//! Four subcommands cover the pipeline end to end: `gen-chain` writes a
//! synthetic chain dump, `encode` turns a chain dump into one node's
//! droplet snapshot, `bootstrap` measures chain recovery against a
//! simulated network, and `sweep` runs the (k, s) × (c, δ) × σ
//! parameter grid.
//!
//! Every run loads a JSON [`ExperimentSpec`] (`--config`), applies flag
//! overrides, and echoes the resolved spec into each artifact it
//! writes (inline for JSON outputs, as a `meta.json` sidecar for binary
//! and CSV outputs), so artifacts are self-describing and reruns with
//! the same spec produce byte-identical files.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 integrity
//! error (damaged or inconsistent inputs), 3 decode exhausted (no
//! bootstrap trial recovered the chain).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sef_core::epoch::{EpochConfig, NodeStore};
use sef_core::hashchain::{generate_chain, load_chain, store_chain, ChainGenConfig};
use sef_core::sim::{
    self, BootstrapResult, ContactPolicy, CostReport, Mode, NetworkConfig, Scheme, SweepSpec,
};
use sef_core::soliton::{robust_soliton, SolitonParams};
use sef_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sef", version, about = "Fountain-coded blockchain storage experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic chain and write it as a chain dump.
    GenChain(CommonArgs),
    /// Encode a chain dump into one node's droplet snapshot.
    Encode(CommonArgs),
    /// Run bootstrap trials against a simulated droplet-node network.
    Bootstrap(CommonArgs),
    /// Run the (k, s) × (c, δ) × σ grid and emit plot-ready CSVs.
    Sweep(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON experiment spec; flags below override matching fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the spec's RNG seed (chain seed, node seed, or trial
    /// seed, per subcommand).
    #[arg(long)]
    seed: Option<u64>,
    /// Output path: a file for gen-chain/encode, a directory for
    /// bootstrap/sweep.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the trial count (bootstrap, sweep).
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the droplet download mode (bootstrap, sweep).
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides the storage scheme (bootstrap, sweep).
    #[arg(long, value_enum)]
    baseline: Option<BaselineArg>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum ModeArg {
    Bulk,
    AsNeeded,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Bulk => Mode::Bulk,
            ModeArg::AsNeeded => Mode::AsNeeded,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
enum BaselineArg {
    Sef,
    RandomSampling,
}

impl From<BaselineArg> for Scheme {
    fn from(b: BaselineArg) -> Scheme {
        match b {
            BaselineArg::Sef => Scheme::Sef,
            BaselineArg::RandomSampling => Scheme::RandomSampling,
        }
    }
}

/// On-disk experiment spec: one optional section per subcommand plus a
/// global seed and output path. Flags override their fields, the
/// operative seed is written back to `seed`, and the resolved copy is
/// embedded in every artifact.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentSpec {
    seed: Option<u64>,
    out: Option<PathBuf>,
    gen_chain: Option<ChainGenConfig>,
    encode: Option<EncodeSpec>,
    bootstrap: Option<BootstrapSpec>,
    sweep: Option<SweepSpec>,
}

/// Inputs for `encode`: which chain dump to read, the epoch layout and
/// degree distribution, and the node identity whose seed drives its
/// droplet draws.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct EncodeSpec {
    chain: PathBuf,
    epoch: EpochConfig,
    soliton: SolitonParams,
    node_id: u64,
    node_seed: u64,
}

/// Inputs for `bootstrap`: the network to stand up, the download mode,
/// and the success-probability level for the reported quantile cost.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct BootstrapSpec {
    source: BootstrapSource,
    mode: Mode,
    target_prob: f64,
}

/// Where the bootstrap network comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum BootstrapSource {
    /// Fresh chain and per-trial networks from the embedded configs.
    Generated { chain: ChainGenConfig, network: NetworkConfig },
    /// The canonical six-block hand example: nine single-droplet
    /// nodes, two of them murky, contacted in index order.
    ToyTrace,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::GenChain(args) => cmd_gen_chain(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Bootstrap(args) => cmd_bootstrap(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match run {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_class(&e))
        }
    }
}

/// Maps error variants onto the documented exit codes.
fn exit_class(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::NotFinalized { .. } => 1,
        Error::EmptyPayload | Error::NoValidChain | Error::Parse(_) | Error::Integrity(_) => 2,
        Error::InsufficientDroplets { .. } => 3,
    }
}

fn load_spec(args: &CommonArgs) -> Result<ExperimentSpec> {
    let mut spec: ExperimentSpec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad spec {}: {e}", path.display())))?
        }
        None => ExperimentSpec::default(),
    };
    if args.seed.is_some() {
        spec.seed = args.seed;
    }
    if let Some(out) = &args.out {
        spec.out = Some(out.clone());
    }
    Ok(spec)
}

fn require_out(spec: &ExperimentSpec) -> Result<PathBuf> {
    spec.out
        .clone()
        .ok_or_else(|| Error::Config("no output path: pass --out or set \"out\" in the spec".into()))
}

fn pretty(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("artifact serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Sidecar path for a binary artifact: `<out>.meta.json`.
fn meta_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.meta.json", out.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

fn cmd_gen_chain(args: &CommonArgs) -> Result<u8> {
    let mut spec = load_spec(args)?;
    let mut cfg = spec
        .gen_chain
        .clone()
        .ok_or_else(|| Error::Config("spec has no gen_chain section".into()))?;
    if let Some(seed) = spec.seed {
        cfg.rng_seed = seed;
    }
    spec.seed = Some(cfg.rng_seed);
    spec.gen_chain = Some(cfg.clone());
    let out = require_out(&spec)?;

    let chain = generate_chain(&cfg)?;
    store_chain(&out, &chain)?;
    fs::write(meta_path(&out), pretty(&spec)?)?;
    println!(
        "chain: {} blocks, {} bytes -> {}",
        chain.height(),
        chain.serialized_len(),
        out.display()
    );
    Ok(0)
}

fn cmd_encode(args: &CommonArgs) -> Result<u8> {
    let mut spec = load_spec(args)?;
    let mut enc = spec
        .encode
        .clone()
        .ok_or_else(|| Error::Config("spec has no encode section".into()))?;
    if let Some(seed) = spec.seed {
        enc.node_seed = seed;
    }
    spec.seed = Some(enc.node_seed);
    spec.encode = Some(enc.clone());
    let out = require_out(&spec)?;

    if enc.soliton.k != enc.epoch.k {
        return Err(Error::Config("soliton k must match epoch k".into()));
    }
    let chain = load_chain(&enc.chain)?;
    let pmf = robust_soliton(enc.soliton)?;
    let mut store = NodeStore::new(enc.node_id, enc.node_seed, enc.epoch)?;
    let sealed = store.seal_all(&chain, &pmf)?;
    let savings = store.storage_savings(&chain)?;
    store.write_snapshot(&out)?;
    fs::write(meta_path(&out), pretty(&spec)?)?;
    println!(
        "sealed {} epoch(s) covering {} super-blocks, tail {} blocks",
        sealed,
        store.next_group(),
        store.tail.len()
    );
    println!("γ={:.2}", savings.coded);
    println!(
        "all-inclusive savings {:.2} -> {}",
        savings.all_inclusive,
        out.display()
    );
    Ok(0)
}

/// Wraps a single fixed-order trial in the same report shape the
/// multi-trial path produces.
fn single_trial_report(target_prob: f64, r: BootstrapResult) -> CostReport {
    let ok = r.success;
    CostReport {
        target_prob,
        trials: 1,
        successes: usize::from(ok),
        k_hat: ok.then_some(r.honest_contacted),
        mean_cost: if ok { r.honest_contacted as f64 } else { f64::NAN },
        min_cost: if ok { r.honest_contacted } else { 0 },
        max_cost: if ok { r.honest_contacted } else { 0 },
        mean_total: if ok { r.nodes_contacted as f64 } else { f64::NAN },
        mean_overhead: if ok { r.overhead() } else { f64::NAN },
        results: vec![r],
    }
}

const TRIAL_CSV_HEADER: &str = "experiment_id,k,s,c,delta,sigma,mode,trial,nodes_contacted,honest_contacted,bytes_down,overhead,success\n";

/// Per-run constant columns of the trial CSV.
struct TrialKey<'a> {
    id: &'a str,
    k: usize,
    s: usize,
    c: Option<f64>,
    delta: Option<f64>,
    sigma: f64,
    mode: Mode,
}

fn append_trial_rows(csv: &mut String, key: &TrialKey, results: &[BootstrapResult]) {
    for (t, r) in results.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.6},{}\n",
            key.id,
            key.k,
            key.s,
            fmt_opt(key.c),
            fmt_opt(key.delta),
            key.sigma,
            key.mode.label(),
            t,
            r.nodes_contacted,
            r.honest_contacted,
            r.bytes_downloaded,
            r.overhead(),
            u8::from(r.success),
        ));
    }
}

#[derive(Serialize)]
struct BootstrapArtifact<'a> {
    spec: &'a ExperimentSpec,
    report: &'a CostReport,
}

fn cmd_bootstrap(args: &CommonArgs) -> Result<u8> {
    let mut spec = load_spec(args)?;
    let mut boot = spec
        .bootstrap
        .clone()
        .ok_or_else(|| Error::Config("spec has no bootstrap section".into()))?;
    if let Some(mode) = args.mode {
        boot.mode = mode.into();
    }
    match &mut boot.source {
        BootstrapSource::Generated { network, .. } => {
            if let Some(seed) = spec.seed {
                network.rng_seed = seed;
            }
            if let Some(trials) = args.trials {
                network.trials = trials;
            }
            if let Some(baseline) = args.baseline {
                network.scheme = baseline.into();
            }
            spec.seed = Some(network.rng_seed);
        }
        BootstrapSource::ToyTrace => {
            spec.seed = Some(spec.seed.unwrap_or(0));
        }
    }
    spec.bootstrap = Some(boot.clone());
    let out = require_out(&spec)?;
    fs::create_dir_all(&out)?;

    let mut csv = String::from(TRIAL_CSV_HEADER);
    let report = match &boot.source {
        BootstrapSource::Generated { chain, network } => {
            let chain = generate_chain(chain)?;
            let report = sim::measure_bootstrap_cost(&chain, network, boot.mode, boot.target_prob)?;
            let (c, delta) = match network.scheme {
                Scheme::Sef => (Some(network.soliton.c), Some(network.soliton.delta)),
                Scheme::RandomSampling => (None, None),
            };
            let id = format!(
                "boot-k{}-s{}-sig{}-{}",
                network.epoch.k,
                network.epoch.s,
                network.sigma,
                boot.mode.label()
            );
            let key = TrialKey {
                id: &id,
                k: network.epoch.k,
                s: network.epoch.s,
                c,
                delta,
                sigma: network.sigma,
                mode: boot.mode,
            };
            append_trial_rows(&mut csv, &key, &report.results);
            report
        }
        BootstrapSource::ToyTrace => {
            let net = sim::toy_network();
            let order = ContactPolicy::Fixed((0..net.nodes.len()).collect());
            let result = sim::bootstrap(&net, &order, boot.mode, spec.seed.unwrap_or(0))?;
            let report = single_trial_report(boot.target_prob, result);
            let key = TrialKey {
                id: "toy-trace",
                k: net.cfg.epoch.k,
                s: net.cfg.epoch.s,
                c: Some(net.cfg.soliton.c),
                delta: Some(net.cfg.soliton.delta),
                sigma: net.cfg.sigma,
                mode: boot.mode,
            };
            append_trial_rows(&mut csv, &key, &report.results);
            report
        }
    };

    fs::write(out.join("bootstrap.json"), pretty(&BootstrapArtifact { spec: &spec, report: &report })?)?;
    fs::write(out.join("trials.csv"), &csv)?;

    let rejections: usize = report.results.iter().map(|r| r.rejections).sum();
    println!(
        "bootstrap: trials={} successes={} rejections={}",
        report.trials, report.successes, rejections
    );
    println!(
        "cost: k_hat={} mean_honest={:.2} mean_total={:.2} mean_overhead={:.4}",
        report.k_hat.map_or_else(|| "-".into(), |k| k.to_string()),
        report.mean_cost,
        report.mean_total,
        report.mean_overhead
    );
    println!("artifacts -> {}", out.display());
    if report.successes == 0 {
        eprintln!(
            "decode exhausted: 0/{} trials recovered the chain",
            report.trials
        );
        return Ok(3);
    }
    Ok(0)
}

fn cmd_sweep(args: &CommonArgs) -> Result<u8> {
    let mut spec = load_spec(args)?;
    let mut sw = spec
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("spec has no sweep section".into()))?;
    if let Some(seed) = spec.seed {
        sw.rng_seed = seed;
    }
    if let Some(trials) = args.trials {
        sw.trials = trials;
    }
    if let Some(mode) = args.mode {
        sw.mode = mode.into();
    }
    if let Some(baseline) = args.baseline {
        sw.scheme = baseline.into();
    }
    spec.seed = Some(sw.rng_seed);
    spec.sweep = Some(sw.clone());
    let out = require_out(&spec)?;
    fs::create_dir_all(&out)?;

    let report = sim::sweep(&sw)?;
    fs::write(out.join("trials.csv"), &report.trial_csv)?;
    fs::write(out.join("summary.csv"), &report.summary_csv)?;
    fs::write(out.join("meta.json"), pretty(&spec)?)?;

    for cell in report.cells.iter().filter(|c| c.best) {
        println!(
            "best (c, delta) for k={} s={} sigma={}: c={} delta={} k_hat={} mean_cost={:.2} optimal_bound={}",
            cell.k,
            cell.s,
            cell.sigma,
            if cell.c.is_some() { fmt_opt(cell.c) } else { "-".into() },
            if cell.delta.is_some() { fmt_opt(cell.delta) } else { "-".into() },
            cell.k_hat.map_or_else(|| "-".into(), |k| k.to_string()),
            cell.mean_cost,
            cell.optimal_bound
        );
    }
    println!("sweep: {} cells -> {}", report.cells.len(), out.display());
    Ok(0)
}
