use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hankelwave::classifiers::crc_precompute;
use hankelwave::ingest::{
    braking_experiment, load_labeled_trace, load_trace, random_posture_script, synthesize_braking_trace,
    synthesize_posture, write_labeled_trace, BrakingState, PostureSynthParams, POSTURE_CLASS_NAMES,
};
use hankelwave::stream_pipeline::{
    emit_plot_data, evaluate, fuse_orientation, labels_of, run_stream, train, PipelineConfig, WARMUP_LABEL,
};
use hankelwave::subspace_trainer::{read_dictionary, write_dictionary, write_sidecar};
use hankelwave::{Error, Result};

#[derive(Parser)]
#[command(
    name = "hankelwave",
    version,
    about = "Ride-state classification from IMU streams"
)]
struct Cli {
    /// Pipeline config (JSON). Without it the `--preset` defaults apply.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Braking)]
    preset: Preset,
    /// Sampling rate, Hz.
    #[arg(long, global = true)]
    fs: Option<f64>,
    /// Window width, samples.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// CRC ridge weight.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Seeds the generator and the clustering restarts.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Braking,
    Posture,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stop {
    Normal,
    Sudden,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labeled synthetic trace.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Index into the config's `scenarios`.
        #[arg(long, conflicts_with = "experiment")]
        scenario: Option<usize>,
        /// Cruise interleaved with one kind of stop.
        #[arg(long, value_enum)]
        experiment: Option<Stop>,
        /// Minimum experiment length, s.
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        /// Posture script, comma separated (posture configs only).
        #[arg(long, value_delimiter = ',', conflicts_with = "changes")]
        postures: Option<Vec<usize>>,
        /// Random posture script with this many changes.
        #[arg(long)]
        changes: Option<usize>,
    },
    /// Fuse orientation and write plot data.
    Filter {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Label column from this dictionary's stream output instead of the trace.
        #[arg(long)]
        dict: Option<PathBuf>,
    },
    /// Distill a dictionary from the config's `training` traces.
    Train {
        #[arg(long)]
        out: PathBuf,
    },
    /// Label every full window of a trace.
    Classify {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Decisions CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score decisions against a labeled trace.
    Evaluate {
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Report JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else {
        3
    }
}

fn thread_count(v: &str) -> Result<usize> {
    v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "HANKELWAVE_THREADS must be a positive integer, got `{v}`"
        ))
    })
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("HANKELWAVE_THREADS") else {
        return Ok(());
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(&v)?)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    let (cfg, base) = load_config(&cli)?;
    match cli.command {
        Command::Simulate {
            out,
            scenario,
            experiment,
            duration,
            postures,
            changes,
        } => {
            let labeled = if is_posture(&cfg) {
                let script =
                    postures.unwrap_or_else(|| random_posture_script(changes.unwrap_or(6), cli.seed));
                let params = PostureSynthParams {
                    fs: cfg.fs,
                    ..PostureSynthParams::default()
                };
                synthesize_posture(&script, cli.seed, &params)?
            } else {
                let script = match (scenario, experiment) {
                    (Some(i), _) => cfg.scenarios.get(i).cloned().ok_or_else(|| {
                        Error::Config(format!(
                            "scenario {i} not in config ({} defined)",
                            cfg.scenarios.len()
                        ))
                    })?,
                    (None, Some(stop)) => {
                        let stop = match stop {
                            Stop::Normal => BrakingState::Normal,
                            Stop::Sudden => BrakingState::Sudden,
                        };
                        braking_experiment(stop, cli.seed, duration)
                    }
                    (None, None) => {
                        return Err(Error::Config("simulate needs --scenario or --experiment".into()))
                    }
                };
                synthesize_braking_trace(&script, cli.seed, cfg.fs)?
            };
            write_labeled_trace(&out, &labeled)
        }
        Command::Filter { input, out, dict } => {
            let trace = load_trace(&input, cfg.fs)?;
            let labels: Vec<i64> = match dict {
                Some(path) => {
                    let d = read_dictionary(path)?;
                    let op = crc_precompute(&d, cfg.crc_lambda)?;
                    labels_of(&run_stream(&trace, &d, &op, &cfg)?)
                }
                None => match load_labeled_trace(&input, cfg.fs) {
                    Ok(lt) => lt.labels.iter().map(|&l| l as i64).collect(),
                    Err(_) => vec![WARMUP_LABEL; trace.len()],
                },
            };
            let fused = fuse_orientation(&trace, &cfg.fusion().gains())?;
            emit_plot_data(&out, &trace, &fused, &labels)
        }
        Command::Train { out } => {
            if cfg.training.is_empty() {
                return Err(Error::Config("config lists no training traces".into()));
            }
            let mut runs = Vec::with_capacity(cfg.training.len());
            for spec in &cfg.training {
                runs.push((load_trace(base.join(&spec.trace), cfg.fs)?, spec.schedule.clone()));
            }
            let model = train(&runs, &cfg)?;
            for (i, r) in model.report.runs.iter().enumerate() {
                for p in &r.passes {
                    log::info!(
                        "run {i} depth {}: {} columns -> {:?} (OSC converged: {})",
                        p.depth,
                        p.columns,
                        p.sizes,
                        p.osc_converged
                    );
                    for w in &p.warnings {
                        log::warn!("run {i}: {w}");
                    }
                }
            }
            write_dictionary(&out, &model.dictionary)?;
            write_sidecar(&out, &model.provenance)
        }
        Command::Classify { dict, input, out } => {
            let d = read_dictionary(dict)?;
            let op = crc_precompute(&d, cfg.crc_lambda)?;
            let trace = load_trace(&input, cfg.fs)?;
            let decisions = run_stream(&trace, &d, &op, &cfg)?;
            let sink: Box<dyn Write> = match &out {
                Some(p) => Box::new(File::create(p).map_err(|e| io_error(p, e))?),
                None => Box::new(io::stdout().lock()),
            };
            let path = out.unwrap_or_else(|| PathBuf::from("<stdout>"));
            let mut w = csv::Writer::from_writer(BufWriter::new(sink));
            let mut header = vec!["t_end".to_string(), "label".to_string()];
            header.extend((0..d.num_classes()).map(|k| format!("r_{k}")));
            header.extend(["margin", "converged"].map(String::from));
            w.write_record(&header).map_err(|e| csv_error(&path, e))?;
            for dec in &decisions {
                let Some(r) = &dec.result else { continue };
                let mut rec = vec![dec.t.to_string(), dec.label.to_string()];
                rec.extend(r.residuals.iter().map(|v| v.to_string()));
                rec.push(r.margin.to_string());
                rec.push(r.converged.to_string());
                w.write_record(&rec).map_err(|e| csv_error(&path, e))?;
            }
            w.flush().map_err(|e| io_error(&path, e))
        }
        Command::Evaluate {
            decisions,
            truth,
            out,
        } => {
            let lt = load_labeled_trace(&truth, cfg.fs)?;
            let predicted = read_decisions(
                &decisions,
                &lt.trace.samples().iter().map(|s| s.t).collect::<Vec<_>>(),
                cfg.fs,
            )?;
            let report = evaluate(
                &predicted,
                &lt.labels,
                cfg.class_names.len(),
                true,
                cfg.boundary(),
            )?;
            eprintln!(
                "{} decisions: strict {:.4}, lenient {:.4} (band ±{})",
                report.total, report.accuracy, report.lenient_accuracy, report.boundary
            );
            let text = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| io_error(&p, e)),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<(PipelineConfig, PathBuf)> {
    let (mut cfg, base) = match &cli.config {
        Some(p) => (
            PipelineConfig::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (
            match cli.preset {
                Preset::Braking => PipelineConfig::braking(),
                Preset::Posture => PipelineConfig::posture(),
            },
            PathBuf::new(),
        ),
    };
    if let Some(fs) = cli.fs {
        cfg.fs = fs;
    }
    if let Some(w) = cli.window {
        cfg.window = w;
    }
    if let Some(l) = cli.lambda {
        cfg.crc_lambda = l;
    }
    cfg.distill.seed = cli.seed;
    cfg.validate()?;
    Ok((cfg, base))
}

fn is_posture(cfg: &PipelineConfig) -> bool {
    cfg.class_names.iter().map(String::as_str).eq(POSTURE_CLASS_NAMES)
}

/// Per-sample predictions aligned to `times` by each row's `t_end`; samples
/// without a row stay at the warm-up label.
fn read_decisions(path: &Path, times: &[f64], fs: f64) -> Result<Vec<i64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut predicted = vec![WARMUP_LABEL; times.len()];
    let t0 = times.first().copied().unwrap_or(0.0);
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Format {
            row,
            message: e.to_string(),
        })?;
        let field = |k: usize| -> Result<&str> {
            rec.get(k).ok_or_else(|| Error::Format {
                row,
                message: format!("missing column {}", k + 1),
            })
        };
        let bad = |what: &str| Error::Format {
            row,
            message: format!("{what} is not a number"),
        };
        let t: f64 = field(0)?.trim().parse().map_err(|_| bad("t_end"))?;
        let label: i64 = field(1)?.trim().parse().map_err(|_| bad("label"))?;
        let idx = ((t - t0) * fs).round();
        let hit = (idx >= 0.0 && (idx as usize) < times.len())
            .then_some(idx as usize)
            .filter(|&k| (times[k] - t).abs() < 0.5 / fs);
        let k = hit.ok_or_else(|| Error::Format {
            row,
            message: format!("t_end {t} matches no sample of the truth trace"),
        })?;
        predicted[k] = label;
    }
    Ok(predicted)
}

fn io_error(path: &Path, e: io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_error(path, io),
        other => Error::Format {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}
