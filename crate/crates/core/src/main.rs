use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use reid::attacks::{
    estimate_site_popularity, hamming_attack, matching_assignment, weighted_hamming_attack, AssignmentRule, AttackKind,
    AttackScoreMatrix, WeightedHamming,
};
use reid::bounds::{
    check_k_anonymity, check_ldp, fano_bound, kanon_accuracy_bound, ldp_accuracy_bound, matching_accuracy_bound,
    max_accuracy_bound, optimal_full_info_rule, partial_info_bound, BoundKind, BoundReport, LdpParams,
};
use reid::harness::{
    emit_accuracy_curve, ingest_song_dataset, run_matching_experiment, run_matrix_random_user, run_song_experiment,
    timed, topics_mi_validation, write_curve_csv, ExperimentReport, SimulationConfig, SongSampling, TopicsExperiment,
};
use reid::io::{
    read_matrix, read_prior, read_sequences_csv, site_records, sites_from_records, write_predictions_csv,
    write_sequences_csv, PredictionRecord,
};
use reid::rng::{Purpose, StreamLabel};
use reid::topics::{simulate_two_sites, SITE_1, SITE_2};
use reid::{ObservationVector, ReidError, Result, SeedSpec};

#[derive(Parser)]
#[command(
    name = "reid",
    version,
    about = "Re-identification risk bounds, simulation and attacks"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, global = true, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundName {
    Max,
    Matching,
    Partial,
    Ldp,
    Kanon,
    Fano,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SettingArg {
    RandomUser,
    Matching,
}

#[derive(Subcommand)]
enum Command {
    /// Accuracy bounds for a representation matrix.
    Bound {
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long = "bound", value_enum, value_delimiter = ',', default_values_t = [BoundName::Max, BoundName::Matching])]
        bounds: Vec<BoundName>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Finite prior over matrices, for the partial-information bound.
        #[arg(long)]
        prior: Option<PathBuf>,
        /// Observed representation per user, for the partial-information bound.
        #[arg(long, value_delimiter = ',')]
        observations: Vec<usize>,
        /// Mutual information in nats, for the Fano bound.
        #[arg(long)]
        mi_nats: Option<f64>,
        /// Number of users for the Fano bound (defaults to the matrix's n).
        #[arg(long)]
        users: Option<f64>,
    },
    /// Privacy-notion checks.
    Check {
        #[command(subcommand)]
        notion: Notion,
    },
    /// Simulates two sites and dumps their topic sequences as CSV.
    Simulate,
    /// Runs an attack on a sequence dump and writes per-trial predictions.
    Attack {
        #[arg(long)]
        method: AttackKind,
        /// Sequence dump produced by `simulate`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Monte Carlo re-identification experiment.
    Experiment {
        /// Use an explicit matrix instead of the Topics simulator.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SettingArg::RandomUser)]
        setting: SettingArg,
        #[arg(long, value_delimiter = ',', default_values_t = [AttackKind::Hamming, AttackKind::Weighted])]
        methods: Vec<AttackKind>,
        /// Epoch counts to evaluate (defaults to the configured epochs).
        #[arg(long, value_delimiter = ',')]
        epochs: Vec<usize>,
        #[arg(long)]
        trials: Option<u64>,
        /// Record wall time in reports. Makes output non-reproducible.
        #[arg(long)]
        wall_time: bool,
    },
    /// Plug-in mutual information on simulated data.
    Mi,
    /// Song-sampling attack on taste-profile triplets.
    Songs {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [4])]
        r: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long)]
        without_replacement: bool,
        #[arg(long)]
        skip_malformed: bool,
    },
}

#[derive(Subcommand)]
enum Notion {
    /// Minimal delta for the given epsilon.
    Ldp {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        epsilon: f64,
    },
    /// Largest k (0 when rows are not one-hot).
    Kanon {
        #[arg(long)]
        matrix: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("REID_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| ReidError::InvalidArgument(format!("REID_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| ReidError::InvalidArgument(e.to_string()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize + ?Sized>(value: &T, out: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn load_config(global: &Global) -> Result<SimulationConfig> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| ReidError::InvalidArgument("--config is required".into()))?;
    let mut cfg: SimulationConfig = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    v.as_deref()
        .ok_or_else(|| ReidError::InvalidArgument(format!("--{flag} is required")))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Bound {
            matrix,
            bounds,
            epsilon,
            delta,
            prior,
            observations,
            mi_nats,
            users,
        } => {
            let p = matrix.as_deref().map(read_matrix).transpose()?;
            let need_p = || {
                p.as_ref()
                    .ok_or_else(|| ReidError::InvalidArgument("--matrix is required".into()))
            };
            let mut reports = Vec::new();
            for b in bounds {
                reports.push(match b {
                    BoundName::Max => BoundReport::new(max_accuracy_bound(need_p()?), BoundKind::Exact, "max_accuracy"),
                    BoundName::Matching => {
                        BoundReport::new(matching_accuracy_bound(need_p()?), BoundKind::UpperBound, "matching")
                    }
                    BoundName::Partial => {
                        let prior = read_prior(required(prior, "prior")?)?;
                        let w = ObservationVector::new(observations.clone(), prior.shape().1)?;
                        BoundReport::new(partial_info_bound(&prior, &w)?, BoundKind::Exact, "partial_information")
                    }
                    BoundName::Ldp => {
                        let p = need_p()?;
                        let eps = epsilon.ok_or_else(|| ReidError::InvalidArgument("--epsilon is required".into()))?;
                        let d = match delta {
                            Some(d) => *d,
                            None => check_ldp(p, eps)?,
                        };
                        let raw = ldp_accuracy_bound(LdpParams::new(eps, d)?, p.n(), p.m())?;
                        BoundReport::new(raw, BoundKind::UpperBound, "ldp")
                            .with_note(format!("epsilon={eps}, delta={d}"))
                    }
                    BoundName::Kanon => {
                        let k = check_k_anonymity(need_p()?);
                        if k == 0 {
                            BoundReport::new(1.0, BoundKind::UpperBound, "k_anonymity")
                                .with_note("rows are not one-hot; no k-anonymity bound applies")
                        } else {
                            BoundReport::new(kanon_accuracy_bound(k)?, BoundKind::UpperBound, "k_anonymity")
                                .with_note(format!("k={k}"))
                        }
                    }
                    BoundName::Fano => {
                        let mi = mi_nats.ok_or_else(|| ReidError::InvalidArgument("--mi-nats is required".into()))?;
                        let n = match users {
                            Some(n) => *n,
                            None => need_p()?.n() as f64,
                        };
                        BoundReport::new(fano_bound(mi, n)?, BoundKind::UpperBound, "fano")
                    }
                });
            }
            write_json(&reports, &mut *output(g.out.as_deref())?)
        }
        Command::Check { notion } => {
            let value = match notion {
                Notion::Ldp { matrix, epsilon } => {
                    let p = read_matrix(matrix)?;
                    serde_json::json!({ "epsilon": epsilon, "delta": check_ldp(&p, *epsilon)? })
                }
                Notion::Kanon { matrix } => {
                    let p = read_matrix(matrix)?;
                    serde_json::json!({ "k": check_k_anonymity(&p) })
                }
            };
            write_json(&value, &mut *output(g.out.as_deref())?)
        }
        Command::Simulate => {
            let cfg = load_config(g)?;
            let sim = simulate_two_sites(cfg.users, &cfg.topics, &cfg.population, &SeedSpec::new(cfg.seed))?;
            let mut records = site_records(SITE_1, &sim.site1);
            records.extend(site_records(SITE_2, &sim.site2));
            let mut out = output(g.out.as_deref())?;
            match g.format {
                Format::Csv => write_sequences_csv(&records, &mut out),
                Format::Json => write_json(&records, &mut *out),
            }
        }
        Command::Attack { method, input } => {
            let cfg = load_config(g)?;
            let records = read_sequences_csv(BufReader::new(File::open(input)?))?;
            let sites = sites_from_records(&records)?;
            let [(_, site1), (_, site2)] = <[_; 2]>::try_from(sites).map_err(|s| {
                ReidError::InvalidArgument(format!("dump must contain exactly two sites, found {}", s.len()))
            })?;
            if site1.n() != site2.n() || site1.epochs() != site2.epochs() {
                return Err(ReidError::InvalidArgument(
                    "the two sites cover different users or epochs".into(),
                ));
            }
            let topics = cfg.topics.with_epochs(site1.epochs());
            let est = estimate_site_popularity(&site1, &topics, cfg.delta, cfg.pooled_popularity)?;
            let model = WeightedHamming::new(&est, &topics);
            let guesses: Vec<usize> = match method {
                AttackKind::Hamming => (0..site2.n())
                    .into_par_iter()
                    .map(|u| hamming_attack(&site1, site2.sequence(u)))
                    .collect::<Result<_>>()?,
                AttackKind::Weighted => (0..site2.n())
                    .into_par_iter()
                    .map(|u| weighted_hamming_attack(&site1, site2.sequence(u), &model))
                    .collect::<Result<_>>()?,
                AttackKind::Assignment => {
                    let scores = AttackScoreMatrix::from_weighted(&site2, &site1, &model)?;
                    let mut tie = SeedSpec::new(cfg.seed).stream(StreamLabel::new(Purpose::TieBreak));
                    matching_assignment(&scores, &mut tie)?
                }
                AttackKind::Likelihood => {
                    return Err(ReidError::InvalidArgument(
                        "likelihood attack needs the true top sets; use hamming, weighted or assignment".into(),
                    ))
                }
            };
            let preds: Vec<PredictionRecord> = guesses
                .into_iter()
                .enumerate()
                .map(|(u, g)| PredictionRecord {
                    trial: u as u64,
                    true_user: u,
                    predicted_user: g,
                    correct: g == u,
                })
                .collect();
            write_predictions_csv(&preds, output(g.out.as_deref())?)
        }
        Command::Experiment {
            matrix,
            setting,
            methods,
            epochs,
            trials,
            wall_time,
        } => {
            let reports = if let Some(path) = matrix {
                let p = read_matrix(path)?;
                let seeds = SeedSpec::new(g.seed.unwrap_or(0));
                let trials = trials.unwrap_or(10_000);
                let rep = match setting {
                    SettingArg::RandomUser => {
                        let a = optimal_full_info_rule(&p);
                        maybe_timed(*wall_time, || run_matrix_random_user(&p, &a, trials, &seeds))?
                    }
                    SettingArg::Matching => {
                        let rule = AssignmentRule::new(p.clone());
                        maybe_timed(*wall_time, || {
                            run_matching_experiment(&p, &rule, "assignment", trials, &seeds)
                        })?
                    }
                };
                vec![rep]
            } else {
                let cfg = load_config(g)?;
                let exp = TopicsExperiment::prepare(&cfg)?;
                let trials = trials.unwrap_or(cfg.trials);
                let rs = if epochs.is_empty() {
                    vec![cfg.topics.epochs]
                } else {
                    epochs.clone()
                };
                let mut out = Vec::new();
                for &r in &rs {
                    for &m in methods {
                        out.push(maybe_timed(*wall_time, || match setting {
                            SettingArg::RandomUser => exp.run_random_user(m, r, trials),
                            SettingArg::Matching => exp.run_matching(m, r, trials),
                        })?);
                    }
                }
                out
            };
            let mut out = output(g.out.as_deref())?;
            match g.format {
                Format::Json => write_json(&reports, &mut *out),
                Format::Csv => write_curve_csv(&emit_accuracy_curve(&reports), out),
            }
        }
        Command::Mi => {
            let cfg = load_config(g)?;
            write_json(&topics_mi_validation(&cfg)?, &mut *output(g.out.as_deref())?)
        }
        Command::Songs {
            input,
            r,
            trials,
            without_replacement,
            skip_malformed,
        } => {
            let ds = ingest_song_dataset(input, *skip_malformed)?;
            let sampling = if *without_replacement {
                SongSampling::WithoutReplacement
            } else {
                SongSampling::WithReplacement
            };
            let seeds = SeedSpec::new(g.seed.unwrap_or(0));
            let reports = r
                .iter()
                .map(|&r| run_song_experiment(&ds, r, *trials, &seeds, sampling))
                .collect::<Result<Vec<_>>>()?;
            let mut out = output(g.out.as_deref())?;
            match g.format {
                Format::Json => write_json(&reports, &mut *out),
                Format::Csv => write_curve_csv(&emit_accuracy_curve(&reports), out),
            }
        }
    }
}

fn maybe_timed<F>(on: bool, f: F) -> Result<ExperimentReport>
where
    F: FnOnce() -> Result<ExperimentReport>,
{
    if on {
        timed(f)
    } else {
        f()
    }
}
