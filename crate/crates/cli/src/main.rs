use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use streampca::format::{load_stream, truth_path, write_stream};
use streampca::generators::{partial_duplicate_default_n, shuffle_rows, Sidecar, StreamSpec};
use streampca::harness::{
    self, check_growth, check_matsample_fuzz, check_matsample_tight, check_maxa_fuzz,
    check_mergeable_band, check_movement, check_partial_duplicate_band, check_prodab_fuzz,
    run_algorithm, run_sweep, Algo, CheckReport, EtaChoice, MonitorSetup, RunConfig, SweepConfig,
    DEFAULT_SIGMA1_FACTOR,
};
use streampca::lemmas::{stat_check, StatClaim};
use streampca::{Error, Prng};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

/// Keeps the permutation stream apart from the generator's own draws.
const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4500;

#[derive(Parser)]
#[command(
    name = "streampca",
    version,
    about = "Single-pass PCA experiments on stored streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stream file and its ground-truth sidecar.
    Gen(GenArgs),
    /// Run one algorithm on a stream file and report against the oracle.
    Run(RunArgs),
    /// Run a lemma or Monte-Carlo check.
    Check(CheckArgs),
    /// Run a parameter sweep described by a TOML file and print CSV.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Spiked,
    Commutative,
    EndRotation,
    Pdup,
    Mergeable,
    Matsample,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Spiked: λ₁/λ₂ of the covariance, with λ₂ = 1.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Commutative: comma-separated multiplicity per basis vector.
    #[arg(long, value_delimiter = ',')]
    counts: Vec<usize>,
    #[arg(long)]
    n_bulk: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Permute the rows uniformly at random (seeded by --seed).
    #[arg(long)]
    shuffle: bool,
    /// Output stream file; the sidecar goes next to it. Without it the
    /// stream is written to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    algo: Algo,
    #[arg(long)]
    input: PathBuf,
    /// Learning rate for oja, or `auto` for the oracle-assisted choice.
    #[arg(long)]
    eta: Option<String>,
    /// With `--eta auto`: target σ₁ = factor · ln d.
    #[arg(long, default_value_t = DEFAULT_SIGMA1_FACTOR)]
    sigma1_factor: f64,
    /// Bit bound for grid; prescanned when omitted.
    #[arg(long)]
    b: Option<u32>,
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long, default_value_t = 52)]
    bits: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record wall time; reports are then no longer byte-reproducible.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Lemma {
    Growth,
    Movement,
    Matsample,
    Prodab,
    Maxa,
    Stat,
    Dp,
    Pdup,
}

#[derive(Clone, Copy, ValueEnum)]
enum Claim {
    Gaussianvecnorm,
    Subgamma,
    Rudelson,
}

#[derive(clap::Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    lemma: Lemma,
    /// matsample: check the tight matrix instead of random ones.
    #[arg(long)]
    tight: bool,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    fuzz: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 52)]
    bits: u32,
    /// movement: random step pairs per trace, on top of all adjacent pairs.
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, value_enum)]
    claim: Option<Claim>,
    #[arg(long)]
    delta: Option<f64>,
    /// Fraction of trials that must meet a Monte-Carlo band.
    #[arg(long, default_value_t = 0.9)]
    band: f64,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required for this kind")))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> CliResult<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Data(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn gen(a: GenArgs) -> CliResult<()> {
    let spec = match a.kind {
        Kind::Spiked => {
            let (l1, l2) = match (a.ratio, a.lambda1, a.lambda2) {
                (Some(r), None, None) => (r, 1.0),
                (None, Some(l1), Some(l2)) => (l1, l2),
                _ => {
                    return Err(Failure::Usage(
                        "spiked needs --ratio or both --lambda1 and --lambda2".into(),
                    ))
                }
            };
            StreamSpec::Spiked {
                d: required(a.d, "d")?,
                n: required(a.n, "n")?,
                lambda1_over_n: l1,
                lambda2_over_n: l2,
                seed: a.seed,
            }
        }
        Kind::Commutative => StreamSpec::Commutative {
            d: required(a.d, "d")?,
            counts: a.counts.clone(),
        },
        Kind::EndRotation => StreamSpec::EndRotation {
            d: required(a.d, "d")?,
            n_bulk: required(a.n_bulk, "n-bulk")?,
            eta: required(a.eta, "eta")?,
            sigma2_target: required(a.sigma2, "sigma2")?,
            seed: a.seed,
        },
        Kind::Pdup => {
            let d = required(a.d, "d")?;
            let k = required(a.k, "k")?;
            if k == 0 {
                return Err(Failure::Usage("--k must be at least 1".into()));
            }
            StreamSpec::PartialDuplicate {
                d,
                n: a.n.unwrap_or_else(|| partial_duplicate_default_n(d, k)),
                k,
                seed: a.seed,
            }
        }
        Kind::Mergeable => StreamSpec::MergeableHard {
            d: required(a.d, "d")?,
            p: required(a.p, "p")?,
            seed: a.seed,
        },
        Kind::Matsample => StreamSpec::MatsampleTight {
            n: required(a.n, "n")?,
        },
    };
    let (mut x, truth) = spec.generate()?;
    let shuffled = a.shuffle.then_some(a.seed ^ SHUFFLE_SALT);
    if let Some(s) = shuffled {
        x = shuffle_rows(&x, s).0;
    }
    let mut w = output(a.out.as_deref())?;
    write_stream(&mut w, &x)?;
    w.flush()?;
    if let Some(out) = &a.out {
        let car = Sidecar {
            spec,
            truth,
            shuffled,
        };
        let text = serde_json::to_string_pretty(&car).map_err(|e| Failure::Data(e.to_string()))?;
        std::fs::write(truth_path(out), text + "\n")?;
        eprintln!(
            "wrote {} rows of dimension {} to {}",
            x.n(),
            x.d(),
            out.display()
        );
    }
    Ok(())
}

fn run(a: RunArgs) -> CliResult<()> {
    let x = load_stream(&a.input)?;
    let spec = std::fs::read_to_string(truth_path(&a.input))
        .ok()
        .and_then(|t| serde_json::from_str::<Sidecar>(&t).ok())
        .map(|c| c.spec);
    let mut cfg = RunConfig::new(a.algo);
    cfg.eta = match a.eta.as_deref() {
        None => None,
        Some("auto") => Some(EtaChoice::OracleAssisted {
            sigma1_target: a.sigma1_factor * (x.d() as f64).ln(),
        }),
        Some(v) => Some(EtaChoice::Fixed(v.parse().map_err(|_| {
            Failure::Usage(format!("--eta must be a number or auto, got {v:?}"))
        })?)),
    };
    if a.algo == Algo::Oja && cfg.eta.is_none() {
        return Err(Failure::Usage("oja needs --eta".into()));
    }
    if a.algo == Algo::Fd && a.ell.is_none() {
        return Err(Failure::Usage("fd needs --ell".into()));
    }
    if !(1..=52).contains(&a.bits) {
        return Err(Failure::Usage("--bits must be in 1..=52".into()));
    }
    cfg.b = a.b;
    cfg.ell = a.ell;
    cfg.mantissa_bits = a.bits;
    cfg.seed = a.seed;
    cfg.timing = a.timing;
    let report = run_algorithm(&x, &cfg, spec)?;
    emit_json(&report, a.out.as_deref())
}

fn check(a: CheckArgs) -> CliResult<bool> {
    let report = match a.lemma {
        Lemma::Growth | Lemma::Movement => {
            let base = MonitorSetup::default();
            let setup = MonitorSetup {
                d: a.d.unwrap_or(base.d),
                n: a.n.unwrap_or(base.n),
                ratio: a.ratio.unwrap_or(base.ratio),
                mantissa_bits: a.bits,
                ..base
            };
            let trials = a.trials.unwrap_or(100);
            let batch = match a.lemma {
                Lemma::Growth => check_growth(setup, trials, a.seed)?,
                _ => check_movement(setup, trials, a.seed, a.pairs)?,
            };
            let name = if matches!(a.lemma, Lemma::Growth) {
                "growth"
            } else {
                "movement"
            };
            CheckReport::new(name, batch.passed, &batch)?
        }
        Lemma::Matsample if a.tight => {
            let r = check_matsample_tight(a.n.unwrap_or(256))?;
            CheckReport::new("matsample", r.passed, &r)?
        }
        Lemma::Matsample => {
            let r = check_matsample_fuzz(
                a.trials.or(a.fuzz).unwrap_or(100),
                a.n.unwrap_or(256),
                a.d.unwrap_or(64),
                a.seed,
            )?;
            CheckReport::new("matsample", r.passed, &r)?
        }
        Lemma::Prodab => {
            let r = check_prodab_fuzz(a.fuzz.unwrap_or(1000), a.seed)?;
            CheckReport::new("prodab", r.passed, &r)?
        }
        Lemma::Maxa => {
            let r = check_maxa_fuzz(a.fuzz.unwrap_or(1000), a.seed)?;
            CheckReport::new("maxa", r.passed, &r)?
        }
        Lemma::Stat => {
            let claim = match a.claim {
                None => return Err(Failure::Usage("stat needs --claim".into())),
                Some(Claim::Gaussianvecnorm) => {
                    let d = a.d.unwrap_or(1);
                    let mut u = vec![0.0; d.max(1)];
                    u[0] = 1.0;
                    StatClaim::GaussianVecNorm {
                        v: vec![0.0; u.len()],
                        u,
                        delta: a.delta.unwrap_or(0.1),
                    }
                }
                Some(Claim::Subgamma) => StatClaim::SubgammaSum {
                    n: a.n.unwrap_or(256),
                    d: a.d.unwrap_or(64),
                    delta: a.delta.unwrap_or(0.05),
                },
                Some(Claim::Rudelson) => {
                    let n = a.n.unwrap_or(256);
                    StatClaim::RudelsonOpnorm {
                        rows: n,
                        cols: a.d.unwrap_or(n),
                        multiplier: 3.0,
                        delta: a.delta.unwrap_or(0.05),
                    }
                }
            };
            let default_trials = if matches!(claim, StatClaim::GaussianVecNorm { .. }) {
                10_000
            } else {
                100
            };
            let r = stat_check(
                &claim,
                a.trials.unwrap_or(default_trials),
                &mut Prng::new(a.seed),
            )?;
            CheckReport::new("stat", r.passed, &r)?
        }
        Lemma::Dp => {
            let bands = check_mergeable_band(
                a.d.unwrap_or(512),
                a.p.unwrap_or(16),
                a.trials.unwrap_or(50),
                a.seed,
                a.band,
            )?;
            CheckReport::new("dp", bands[0].passed, &bands)?
        }
        Lemma::Pdup => {
            let bands = check_partial_duplicate_band(
                a.d.unwrap_or(4096),
                a.k.unwrap_or(20),
                a.n,
                a.trials.unwrap_or(50),
                a.seed,
                a.band,
            )?;
            let passed = bands.iter().all(|b| b.passed);
            CheckReport::new("pdup", passed, &bands)?
        }
    };
    emit_json(&report, None)?;
    Ok(report.passed)
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.config.display())))?;
    let cfg = SweepConfig::from_toml(&text)?;
    let rows = run_sweep(&cfg)?;
    let mut w = output(a.out.as_deref())?;
    w.write_all(harness::to_csv(&rows).as_bytes())?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = harness::init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let outcome = match cli.command {
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Run(a) => run(a).map(|_| true),
        Command::Check(a) => check(a),
        Command::Sweep(a) => sweep(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
