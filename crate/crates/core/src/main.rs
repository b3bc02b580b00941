use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hmmseg::bounds::{has_stationary_start, verify_bounds, viterbi_bounds};
use hmmseg::error::{Error, Result};
use hmmseg::experiments::{
    counterexample_small_prob, q_table, run_gaussian_experiment, run_protein_experiment,
    small_prob_model, unsuccessful_peeping_report, CounterexampleS4Config, ProteinSchedule,
    DEFAULT_SCHEDULE, PROTEIN_INADMISSIBLE_SEED,
};
use hmmseg::io::{self, fmt_f64, CsvTable};
use hmmseg::{
    BunchSelection, ModelSpec, PinSet, RefinementConfig, Refiner, ReplacementMode, StatePath,
};

#[derive(Parser)]
#[command(
    name = "hmmseg",
    version,
    about = "HMM segmentation and Viterbi refinement"
)]
struct Cli {
    /// Write the CSV here instead of stdout.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Observation file, one observation per line.
    #[arg(long)]
    obs: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pmap,
    Peep,
}

impl From<Mode> for ReplacementMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Pmap => ReplacementMode::PmapReplacement,
            Mode::Peep => ReplacementMode::Peeping,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Viterbi and PMAP paths, or the full smoothing table.
    Decode {
        #[command(flatten)]
        inputs: Inputs,
        /// Emit the long-format smoothing table (t, state, probability).
        #[arg(long)]
        smoothing: bool,
    },
    /// Iterative refinement; emits the per-iteration trace.
    Refine {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        max_iter: usize,
        #[arg(long, value_enum, default_value = "pmap")]
        mode: Mode,
        /// True path (1-based labels). Required for peeping.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Accept thresholds of at least 1/K.
        #[arg(long)]
        allow_large_delta: bool,
        /// Also write the final path here.
        #[arg(long)]
        path_out: Option<PathBuf>,
    },
    /// Pin all selected positions at once.
    Bunch {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, conflicts_with = "count", required_unless_present = "count")]
        delta: Option<f64>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, value_enum, default_value = "pmap")]
        mode: Mode,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        path_out: Option<PathBuf>,
    },
    /// Lower bounds on Viterbi classification probabilities.
    Bounds {
        #[arg(long)]
        model: PathBuf,
        /// Check the bounds on this observation sequence.
        #[arg(long)]
        verify: Option<PathBuf>,
    },
    /// Deterministic counterexample reproducers.
    Counterexample {
        #[command(subcommand)]
        which: Counterexample,
    },
    /// Seeded simulation studies.
    Simulate {
        #[command(subcommand)]
        which: Simulation,
    },
}

#[derive(Subcommand)]
enum Counterexample {
    /// Four-state model with a vanishing Viterbi classification probability.
    S2 {
        #[arg(long)]
        m: usize,
    },
    /// Three-state model where peeping lowers the expected accuracy.
    S4 {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
    },
}

#[derive(Subcommand)]
enum Simulation {
    Protein {
        #[arg(long, default_value_t = PROTEIN_INADMISSIBLE_SEED)]
        seed: u64,
        /// Replacement counts to tabulate.
        #[arg(long, value_delimiter = ',', conflicts_with = "deltas")]
        counts: Option<Vec<usize>>,
        /// A single threshold instead of a count schedule.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "pmap,peep")]
        modes: Vec<Mode>,
    },
    Gaussian {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.25,0.3")]
        deltas: Vec<f64>,
        /// Also write per-replicate results here.
        #[arg(long)]
        per_replicate: Option<PathBuf>,
    },
}

fn load(inputs: &Inputs) -> Result<(ModelSpec, hmmseg::ObservationSequence)> {
    let spec = io::load_model(&inputs.model)?;
    let obs = io::load_observations(&inputs.obs, &spec)?;
    Ok((spec, obs))
}

/// Model hash and seed entries shared by every model-file command.
fn header(spec: &ModelSpec) -> Result<Vec<(String, String)>> {
    Ok(vec![
        ("model_hash".into(), io::model_hash(spec)?),
        ("seed".into(), "none".into()),
    ])
}

fn prepend(meta: Vec<(String, String)>, mut table: CsvTable) -> CsvTable {
    let mut all = meta;
    all.append(&mut table.metadata);
    table.metadata = all;
    table
}

fn write_path(path: &StatePath, file: &PathBuf) -> Result<()> {
    let labels: Vec<String> = path.to_one_based().iter().map(|s| s.to_string()).collect();
    std::fs::write(file, labels.join("\n") + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<CsvTable> {
    match cli.command {
        Command::Decode { inputs, smoothing } => {
            let (spec, obs) = load(&inputs)?;
            let decoder = hmmseg::Decoder::new(&spec, &obs)?;
            let pins = PinSet::new();
            let tables = decoder.forward_backward(&pins)?;
            let body = if smoothing {
                io::posterior_table(&tables)
            } else {
                io::decode_table(&tables, &decoder.viterbi(&pins)?, &tables.pmap())?
            };
            Ok(prepend(header(&spec)?, body).meta(
                "config",
                format!(
                    "n={} log_likelihood={}",
                    obs.len(),
                    fmt_f64(tables.log_likelihood)
                ),
            ))
        }
        Command::Refine {
            inputs,
            delta,
            max_iter,
            mode,
            truth,
            allow_large_delta,
            path_out,
        } => {
            let (spec, obs) = load(&inputs)?;
            let truth = truth.map(io::load_path).transpose()?;
            let mut config = match (mode, truth) {
                (Mode::Pmap, t) => {
                    let c = RefinementConfig::pmap(delta, max_iter);
                    match t {
                        Some(t) => c.with_truth(t),
                        None => c,
                    }
                }
                (Mode::Peep, Some(t)) => RefinementConfig::peeping(delta, max_iter, t),
                (Mode::Peep, None) => {
                    return Err(Error::Config("peeping mode requires --truth".into()))
                }
            };
            if allow_large_delta {
                config = config.with_large_delta();
            }
            let (path, trace) = Refiner::new(&spec, &obs)?.iterative(&config)?;
            if let Some(file) = path_out {
                write_path(&path, &file)?;
            }
            let config_desc = format!(
                "delta={} max_iter={} mode={} exit={:?}",
                delta,
                max_iter,
                ReplacementMode::from(mode).label(),
                trace.exit
            );
            Ok(prepend(header(&spec)?, io::trace_table(&trace)).meta("config", config_desc))
        }
        Command::Bunch {
            inputs,
            delta,
            count,
            mode,
            truth,
            path_out,
        } => {
            let (spec, obs) = load(&inputs)?;
            let truth = truth.map(io::load_path).transpose()?;
            let selection = match (delta, count) {
                (Some(d), _) => BunchSelection::Threshold(d),
                (None, Some(c)) => BunchSelection::Count(c),
                (None, None) => {
                    return Err(Error::Config(
                        "one of --delta or --count is required".into(),
                    ))
                }
            };
            let out = Refiner::new(&spec, &obs)?.bunch(selection, mode.into(), truth.as_ref())?;
            if let Some(file) = path_out {
                write_path(&out.path, &file)?;
            }
            let pinned: Vec<String> = out
                .pins
                .iter()
                .map(|&(t, s)| format!("{}:{}", t + 1, s + 1))
                .collect();
            Ok(prepend(
                header(&spec)?,
                io::metrics_table(out.pins.len(), out.admissible, &out.metrics),
            )
            .meta(
                "config",
                format!(
                    "selection={selection:?} mode={}",
                    ReplacementMode::from(mode).label()
                ),
            )
            .meta("pins", pinned.join(" ")))
        }
        Command::Bounds { model, verify } => {
            let spec = io::load_model(&model)?;
            let header = header(&spec)?;
            match verify {
                Some(obs_file) => {
                    let obs = io::load_observations(obs_file, &spec)?;
                    let v = verify_bounds(&spec, &obs)?;
                    Ok(prepend(header, io::bounds_verification_table(&v))
                        .meta(
                            "config",
                            format!("stationary_start={} n={}", v.stationary_start, obs.len()),
                        )
                        .meta("violations", v.violations))
                }
                None => {
                    let stationary = has_stationary_start(&spec);
                    let report = viterbi_bounds(&spec, stationary)?;
                    Ok(prepend(header, io::bounds_table(&report, stationary))
                        .meta("config", format!("stationary_start={stationary}"))
                        .meta("sigma1", fmt_f64(report.sigma.sigma1))
                        .meta("sigma2", fmt_f64(report.sigma.sigma2)))
                }
            }
        }
        Command::Counterexample { which } => match which {
            Counterexample::S2 { m } => {
                let r = counterexample_small_prob(m)?;
                let mut table = CsvTable::new([
                    "m",
                    "viterbi_at_m",
                    "viterbi_at_n",
                    "probability",
                    "closed_form",
                ]);
                table.push(vec![
                    m.to_string(),
                    (r.viterbi[m - 1] + 1).to_string(),
                    (r.viterbi[m] + 1).to_string(),
                    fmt_f64(r.probability),
                    fmt_f64(r.closed_form),
                ]);
                Ok(prepend(header(&small_prob_model())?, table).meta("config", format!("m={m}")))
            }
            Counterexample::S4 { m, eps, delta } => {
                let config = CounterexampleS4Config::new(m, eps, delta)?;
                let q = q_table(&config)?;
                let r = unsuccessful_peeping_report(&config)?;
                let mut table = CsvTable::new(["t", "q1", "q2", "q3"]);
                for (t, row) in q.rows.iter().enumerate() {
                    table.push(vec![
                        (t + 1).to_string(),
                        fmt_f64(row[0]),
                        fmt_f64(row[1]),
                        fmt_f64(row[2]),
                    ]);
                }
                Ok(prepend(header(&config.model())?, table)
                    .meta("config", format!("m={m} eps={eps} delta={delta}"))
                    .meta("lhs", fmt_f64(r.lhs))
                    .meta("rhs", fmt_f64(r.rhs))
                    .meta("peeping_harmful", r.peeping_harmful)
                    .meta("viterbi_all_ones", r.viterbi_all_ones)
                    .meta("restricted_as_expected", r.restricted_as_expected)
                    .meta("pin_probability", fmt_f64(r.pin_probability))
                    .meta("pin_probability_limit", fmt_f64(r.pin_probability_limit))
                    .meta("accuracy_gap", fmt_f64(r.gap))
                    .meta("accuracy_gap_from_q", fmt_f64(r.gap_from_q)))
            }
        },
        Command::Simulate { which } => match which {
            Simulation::Protein {
                seed,
                counts,
                deltas,
                modes,
            } => {
                let schedule = match (counts, deltas) {
                    (_, Some(d)) if d.len() == 1 => ProteinSchedule::Threshold(d[0]),
                    (_, Some(_)) => {
                        return Err(Error::Config(
                            "the protein experiment takes a single --deltas value".into(),
                        ))
                    }
                    (Some(c), None) => ProteinSchedule::Counts(c),
                    (None, None) => ProteinSchedule::Counts(DEFAULT_SCHEDULE.to_vec()),
                };
                let modes: Vec<ReplacementMode> = modes.into_iter().map(Into::into).collect();
                run_protein_experiment(seed, &schedule, &modes)?.to_csv(&schedule)
            }
            Simulation::Gaussian {
                seed,
                replicates,
                n,
                deltas,
                per_replicate,
            } => {
                let result = run_gaussian_experiment(replicates, n, &deltas, seed)?;
                if let Some(file) = per_replicate {
                    result.replicates_csv()?.save(file)?;
                }
                result.summary_csv()
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    let result = run(cli).and_then(|table| match out {
        Some(path) => table.save(path),
        None => table.write_to(std::io::stdout().lock()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 1,
                _ => 2,
            })
        }
    }
}
