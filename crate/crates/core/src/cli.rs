//! Command-line front end.
//!
//! Exit codes: 0 success, 1 domain or validation failure, 2 usage error.
//! Every output is a function of the flags and input files alone; all
//! randomness flows from `--seed`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{audio_only_compress, random_prune};
use crate::config::RunConfig;
use crate::efficiency::{self, reports_to_csv, BackboneSpec, FlopsReport};
use crate::error::{Error, Result};
use crate::pipeline::compress_stream;
use crate::stream::{
    compressed_stream, generate_synthetic, load_labels, load_stream, save_labels, save_stream,
    ChunkedStream, CompressedChunk, PlantedLabels, StreamShape,
};
use crate::trainer::{self, Labeled};
use crate::vgas::gradcheck::{self, GRADCHECK_TOLERANCE};
use crate::vgas::{
    init_params, load_params, save_params, Guidance, SelectorConfig, SelectorParams,
};

#[derive(Debug, Parser)]
#[command(
    name = "avprune",
    version,
    about = "Chunked audio-video token compression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// key = value configuration file.
    #[arg(long, alias = "spec")]
    cfg: Option<PathBuf>,
    /// Override a configuration key (repeatable): --set key=value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted synthetic stream and its labels.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Labels path; defaults to the stream path with extension `otl`.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Check a stream (and optionally its labels) for structural problems.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Compress a stream and write a per-chunk report.
    Compress {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Use a comparator instead of the vision-guided selector.
        #[arg(long, value_parser = ["random", "audio_only"])]
        baseline: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train the selector on a labelled stream.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        holdout: Option<PathBuf>,
        #[arg(long)]
        holdout_labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-step history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Retained-informative recall of a checkpoint against the baselines.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Checkpoint trained with audio-only guidance.
        #[arg(long)]
        audio_params: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic FLOPs of the selector and the backbone prefill.
    Flops {
        #[command(flatten)]
        common: Common,
        /// Take the stream shape from this file.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the selector's gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the CLI with process stdout/stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut out = std::io::stdout().lock();
    let mut err = std::io::stderr().lock();
    run_with(argv, &mut out, &mut err)
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Failed(msg)) => {
            let _ = writeln!(err, "{msg}");
            1
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

enum Outcome {
    Success,
    /// The command ran but its check did not pass.
    Failed(String),
}

fn load_cfg(common: &Common, required: &[&str]) -> Result<RunConfig> {
    let mut cfg = match &common.cfg {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &common.overrides {
        cfg.set_pair(pair)?;
    }
    cfg.require(required)?;
    Ok(cfg)
}

/// A path from its flag, else from the config key.
fn path(flag: Option<PathBuf>, cfg: &RunConfig, key: &str) -> Option<PathBuf> {
    flag.or_else(|| cfg.get(key).map(PathBuf::from))
}

fn need(p: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.ok_or_else(|| Error::Config(format!("no {what} given (flag or config key)")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn labeled_inputs(
    input: Option<PathBuf>,
    labels: Option<PathBuf>,
    cfg: &RunConfig,
) -> Result<(ChunkedStream, PlantedLabels)> {
    let stream = load_stream(need(path(input, cfg, "stream"), "input stream")?)?;
    let labels = load_labels(need(path(labels, cfg, "labels"), "labels")?)?;
    labels.check_against(&stream)?;
    Ok((stream, labels))
}

/// Checkpoint from `--params`/`params`, or a fresh initialisation from `seed`.
fn selector(
    params: Option<PathBuf>,
    cfg: &RunConfig,
    dim: usize,
    seed: u64,
) -> Result<(SelectorParams, SelectorConfig)> {
    match path(params, cfg, "params") {
        Some(p) => {
            let (params, scfg) = load_params(&p)?;
            if scfg.dim != dim {
                return Err(Error::Shape(format!(
                    "{}: checkpoint width {} does not match stream width {dim}",
                    p.display(),
                    scfg.dim
                )));
            }
            Ok((params, scfg))
        }
        None => {
            let scfg = cfg.selector(dim)?;
            Ok((init_params(&scfg, seed)?, scfg))
        }
    }
}

const COMPRESS_HEADER: &str =
    "chunk,full_tokens,kept_tokens,kept_per_frame,kept_audio,retained_ratio";

fn compress_report(stream: &ChunkedStream, chunks: &[CompressedChunk]) -> String {
    let full = stream.shape().tokens_per_chunk();
    let mut csv = format!("{COMPRESS_HEADER}\n");
    for c in chunks {
        let kept = c.tokens.rows();
        let _ = writeln!(
            csv,
            "{},{full},{kept},{},{},{:.6}",
            c.index,
            c.kept_per_frame(),
            c.kept_audio.len(),
            kept as f64 / full as f64
        );
    }
    csv
}

fn kept_hits(kept: &[usize], informative: &[usize]) -> usize {
    informative.iter().filter(|j| kept.contains(j)).count()
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<Outcome> {
    let say = |out: &mut dyn Write, text: String| -> Result<()> {
        out.write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    };
    match command {
        Command::Gen {
            common,
            out: path_out,
            labels,
        } => {
            let cfg = load_cfg(
                &common,
                &["chunks", "tokens_per_frame", "audio_tokens", "dim"],
            )?;
            let spec = cfg.synthetic()?;
            let (stream, planted) = generate_synthetic(&spec, common.seed)?;
            let labels_path = labels.unwrap_or_else(|| path_out.with_extension("otl"));
            save_stream(&stream, &path_out)?;
            save_labels(&planted, &labels_path)?;
            say(
                out,
                format!(
                    "wrote {} chunks to {} and labels to {}\n",
                    stream.len(),
                    path_out.display(),
                    labels_path.display()
                ),
            )?;
        }
        Command::Validate {
            common,
            input,
            labels,
        } => {
            let cfg = load_cfg(&common, &[])?;
            let input = need(path(input, &cfg, "stream"), "input stream")?;
            let stream = load_stream(&input)?;
            let report = stream.validate();
            if !report.is_ok() {
                return Ok(Outcome::Failed(format!(
                    "{}: invalid stream\n{report}",
                    input.display()
                )));
            }
            if let Some(lp) = path(labels, &cfg, "labels") {
                load_labels(&lp)?.check_against(&stream)?;
            }
            let shape = stream.shape();
            say(
                out,
                format!(
                    "ok: {} chunks, n_p = {}, n_a = {}, D = {}\n",
                    shape.chunks, shape.tokens_per_frame, shape.audio_tokens, shape.dim
                ),
            )?;
        }
        Command::Compress {
            common,
            input,
            params,
            baseline,
            out: path_out,
            report,
        } => {
            let cfg = load_cfg(&common, &["rho_v", "rho_a"])?;
            let ccfg = cfg.compression()?;
            let input = need(path(input, &cfg, "stream"), "input stream")?;
            let stream = load_stream(&input)?;
            let chunks: Vec<CompressedChunk> = match baseline.as_deref() {
                Some("random") => stream
                    .chunks
                    .iter()
                    .map(|c| random_prune(c, &ccfg, common.seed))
                    .collect::<Result<_>>()?,
                Some(_) => {
                    let (p, scfg) = selector(params, &cfg, stream.dim, common.seed)?;
                    stream
                        .chunks
                        .iter()
                        .map(|c| audio_only_compress(c, &p, &scfg, &ccfg))
                        .collect::<Result<_>>()?
                }
                None => {
                    let (p, scfg) = selector(params, &cfg, stream.dim, common.seed)?;
                    compress_stream(&stream, &p, &scfg, &ccfg)?
                        .into_iter()
                        .map(|c| c.compressed)
                        .collect()
                }
            };
            save_stream(&compressed_stream(stream.dim, &chunks)?, &path_out)?;
            let csv = compress_report(&stream, &chunks);
            if let Some(r) = report {
                write_file(&r, &csv)?;
            }
            let kept: usize = chunks.iter().map(|c| c.tokens.rows()).sum();
            say(
                out,
                format!(
                    "kept {kept} of {} tokens ({:.4})\n",
                    stream.shape().total_tokens(),
                    kept as f64 / stream.shape().total_tokens() as f64
                ),
            )?;
        }
        Command::Train {
            common,
            input,
            labels,
            holdout,
            holdout_labels,
            out: path_out,
            history,
        } => {
            let cfg = load_cfg(&common, &["rho_v", "rho_a", "steps", "learning_rate"])?;
            let ccfg = cfg.compression()?;
            let tcfg = cfg.train(common.seed)?;
            let (stream, planted) = labeled_inputs(input, labels, &cfg)?;
            let scfg = cfg.selector(stream.dim)?;
            let held = match (
                path(holdout, &cfg, "holdout_stream"),
                path(holdout_labels, &cfg, "holdout_labels"),
            ) {
                (Some(s), Some(l)) => {
                    let (s, l) = (load_stream(s)?, load_labels(l)?);
                    l.check_against(&s)?;
                    Some((s, l))
                }
                (None, None) => None,
                _ => {
                    return Err(Error::Config(
                        "holdout stream and labels must be given together".into(),
                    ))
                }
            };
            let data = Labeled::new(&stream, &planted)?;
            let holdout = match &held {
                Some((s, l)) => Some(Labeled::new(s, l)?),
                None => None,
            };
            let (params, hist) = trainer::train(data, holdout, &tcfg, &scfg, &ccfg)?;
            save_params(&params, &scfg, &path_out)?;
            if let Some(h) = history {
                write_file(&h, &hist.to_csv())?;
            }
            let last = hist.last().expect("steps >= 1");
            say(
                out,
                format!(
                    "{} steps: loss {:.6}, recall {:.4}; wrote {}\n",
                    hist.len(),
                    last.loss,
                    last.recall,
                    path_out.display()
                ),
            )?;
        }
        Command::Eval {
            common,
            input,
            labels,
            params,
            audio_params,
            out: path_out,
        } => {
            let cfg = load_cfg(&common, &["rho_v", "rho_a"])?;
            let ccfg = cfg.compression()?;
            let (stream, planted) = labeled_inputs(input, labels, &cfg)?;
            let data = Labeled::new(&stream, &planted)?;
            let (p, scfg) = selector(params, &cfg, stream.dim, common.seed)?;
            let guidance = cfg.guidance()?;
            let main = trainer::evaluate_recall(&p, data, &scfg, &ccfg, guidance)?;
            let main_kept: Vec<Vec<usize>> = match guidance {
                Guidance::Vision => compress_stream(&stream, &p, &scfg, &ccfg)?
                    .into_iter()
                    .map(|c| c.audio.kept_audio)
                    .collect(),
                Guidance::AudioOnly => stream
                    .chunks
                    .iter()
                    .map(|c| crate::baselines::audio_only_select(c, &p, &scfg, &ccfg))
                    .collect::<Result<_>>()?,
            };
            let random_kept: Vec<Vec<usize>> = stream
                .chunks
                .iter()
                .map(|c| random_prune(c, &ccfg, common.seed).map(|r| r.kept_audio))
                .collect::<Result<_>>()?;
            let (random_recall, _, _) =
                trainer::recall_of(random_kept.iter().map(Vec::as_slice), &planted);
            let audio_only = match path(audio_params, &cfg, "audio_params") {
                Some(ap) => {
                    let (a, acfg) = load_params(&ap)?;
                    let kept: Vec<Vec<usize>> = stream
                        .chunks
                        .iter()
                        .map(|c| crate::baselines::audio_only_select(c, &a, &acfg, &ccfg))
                        .collect::<Result<_>>()?;
                    Some(kept)
                }
                None => None,
            };

            let mut csv = String::from("chunk,informative,selector_hits,random_hits");
            if audio_only.is_some() {
                csv.push_str(",audio_only_hits");
            }
            csv.push('\n');
            for (t, l) in planted.chunks.iter().enumerate() {
                let inf = &l.informative_audio;
                let _ = write!(
                    csv,
                    "{t},{},{},{}",
                    inf.len(),
                    kept_hits(&main_kept[t], inf),
                    kept_hits(&random_kept[t], inf)
                );
                if let Some(a) = &audio_only {
                    let _ = write!(csv, ",{}", kept_hits(&a[t], inf));
                }
                csv.push('\n');
            }
            if let Some(o) = path_out {
                write_file(&o, &csv)?;
            }
            let mut summary = format!(
                "selector recall {:.4} precision {:.4} retained {:.4}\nrandom recall {random_recall:.4}\n",
                main.recall, main.precision, main.retained_ratio
            );
            if let Some(a) = &audio_only {
                let (r, _, _) = trainer::recall_of(a.iter().map(Vec::as_slice), &planted);
                let _ = writeln!(summary, "audio_only recall {r:.4}");
            }
            say(out, summary)?;
        }
        Command::Flops {
            common,
            input,
            out: path_out,
        } => {
            let reports: Vec<FlopsReport> =
                if common.cfg.is_none() && common.overrides.is_empty() && input.is_none() {
                    let shape = efficiency::omni_7b_shape();
                    let scfg = SelectorConfig::standard(shape.dim);
                    let spec = BackboneSpec::omni_7b();
                    efficiency::budget_presets()
                        .iter()
                        .map(|(_, c)| efficiency::report(&shape, c, &scfg, &spec))
                        .collect::<Result<_>>()?
                } else {
                    let cfg = load_cfg(&common, &["rho_v", "rho_a"])?;
                    let shape = match path(input, &cfg, "stream") {
                        Some(p) => load_stream(p)?.shape(),
                        None => {
                            cfg.require(&["chunks", "tokens_per_frame", "audio_tokens", "dim"])?;
                            let s = cfg.synthetic()?;
                            StreamShape {
                                chunks: s.chunks,
                                tokens_per_frame: s.tokens_per_frame,
                                audio_tokens: s.audio_tokens,
                                dim: s.dim,
                            }
                        }
                    };
                    let scfg = cfg.selector(shape.dim)?;
                    let spec = cfg.backbone()?;
                    let full =
                        crate::stream::CompressionConfig::with_layers(0.0, 0.0, scfg.layers)?;
                    vec![
                        efficiency::report(&shape, &full, &scfg, &spec)?,
                        efficiency::report(&shape, &cfg.compression()?, &scfg, &spec)?,
                    ]
                };
            let csv = reports_to_csv(&reports);
            if let Some(o) = path_out {
                write_file(&o, &csv)?;
            }
            say(out, format!("{}\n{csv}", efficiency::CLOSED_FORM))?;
        }
        Command::Gradcheck {
            common,
            out: path_out,
        } => {
            load_cfg(&common, &[])?;
            let reports = gradcheck::standard_checks(common.seed)?;
            let mut csv = String::from("check,index,analytic,numeric,rel_error\n");
            let mut summary = String::new();
            let mut failed = None;
            for (i, r) in reports.iter().enumerate() {
                for e in &r.entries {
                    let _ = writeln!(
                        csv,
                        "{i},{},{:.12e},{:.12e},{:.6e}",
                        e.index, e.analytic, e.numeric, e.rel_error
                    );
                }
                let w = r.worst().expect("selector has parameters");
                let line = format!(
                    "{:?} layers={} heads={}: {} parameters, worst {} [{}] rel error {:.3e}",
                    r.guidance,
                    r.layers,
                    r.heads,
                    r.entries.len(),
                    w.tensor,
                    w.index,
                    w.rel_error
                );
                let _ = writeln!(summary, "{line}");
                if !r.passed() && failed.is_none() {
                    failed = Some(line);
                }
            }
            if let Some(o) = path_out {
                write_file(&o, &csv)?;
            }
            say(out, summary)?;
            if let Some(line) = failed {
                return Ok(Outcome::Failed(format!(
                    "gradient check failed (tolerance {GRADCHECK_TOLERANCE:e}): {line}"
                )));
            }
        }
    }
    Ok(Outcome::Success)
}
