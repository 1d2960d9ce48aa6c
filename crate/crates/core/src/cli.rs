//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 gradient
//! check above tolerance. All randomness comes from explicit `--seed` flags
//! and every numeric value is printed with 6 significant digits.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::align::{align_pair, AlignParams};
use crate::analysis::{cerr, weight_summary, SummaryScope};
use crate::diff::check::{random_check, GradTarget, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::feat::{FeatureMatrix, StreamSource};
use crate::fusion::{FusionConfig, FusionParams, FusionVariant, Gating};
use crate::rng::SplitMix64;
use crate::spectral::{extract_fbank, SpectralConfig};
use crate::ssl_source::{load_features, ssl_frame_count, synth_features, SslSourceConfig};
use crate::toytask::checkpoint;
use crate::toytask::{
    evaluate, make_dataset, train, Informative, ModelConfig, ToyDatasetSpec, ToyModel, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "frontfuse", version, about = "Spectral/SSL front-end fusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log Mel-filterbank features from a PCM16 mono WAV.
    ExtractFbank {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 80)]
        num_mel_bins: usize,
        #[arg(long, default_value_t = 0.97)]
        preemph: f64,
    },
    /// Seeded Gaussian stand-in for SSL features.
    SynthSsl {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = crate::ssl_source::DEFAULT_SSL_DIM)]
        dim: usize,
        /// Frame count; alternatively derived from `--wav`.
        #[arg(long, required_unless_present = "wav", conflicts_with = "wav")]
        frames: Option<usize>,
        /// Size the output to match this audio file.
        #[arg(long)]
        wav: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bring spectral and SSL features to a common `T × D` grid.
    Align {
        #[arg(long)]
        sf: PathBuf,
        #[arg(long)]
        ssl: PathBuf,
        #[arg(long)]
        out_sf: PathBuf,
        #[arg(long)]
        out_ssl: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Fuse two aligned streams with freshly initialised parameters.
    Fuse {
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long)]
        sf: PathBuf,
        #[arg(long)]
        ssl: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Finite-difference check of analytic gradients on a random case.
    Gradcheck {
        /// linear, conv, coattention, moe, align or head.
        #[arg(long)]
        variant: GradTarget,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Train a toy classifier on synthetic two-stream data.
    TrainToy {
        #[command(flatten)]
        fusion: FusionArgs,
        #[arg(long)]
        informative: Informative,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 5.0)]
        snr: f64,
        #[arg(long, default_value_t = 64)]
        n_utts: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        /// Also write the training utterances as FEAT pairs into this directory.
        #[arg(long)]
        dump_data: Option<PathBuf>,
    },
    /// Per-utterance or corpus gate-weight statistics as CSV.
    AnalyzeGates {
        #[arg(long)]
        model: PathBuf,
        /// Directory of `<id>.sf.feat` / `<id>.ssl.feat` pairs.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "corpus")]
        per: SummaryScope,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Character error reduction rate between two systems.
    Cerr {
        #[arg(long)]
        base: f64,
        #[arg(long)]
        ssl: f64,
    },
}

#[derive(Debug, Args)]
struct FusionArgs {
    #[arg(long)]
    variant: FusionVariant,
    #[arg(long, default_value = "logsoftmax")]
    theta: Gating,
    #[arg(long, default_value_t = 5)]
    kernel_size: usize,
    #[arg(long)]
    no_bias: bool,
}

impl FusionArgs {
    fn config(&self, dim: usize) -> FusionConfig {
        FusionConfig {
            variant: self.variant,
            dim,
            theta: self.theta,
            kernel_size: self.kernel_size,
            bias: !self.no_bias,
        }
    }
}

/// Formats with 6 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        format!("{x:.5e}")
    } else {
        format!("{:.*}", (5 - mag).max(0) as usize, x)
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parses `argv` (including the program name) and runs one subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::ExtractFbank { input, out, num_mel_bins, preemph } => {
            let wave = crate::wav::read(&input)?;
            let cfg = SpectralConfig {
                n_mels: num_mel_bins,
                pre_emphasis: preemph,
                sample_rate: wave.sample_rate(),
                ..Default::default()
            };
            let feats = extract_fbank(&wave, &cfg)?;
            feats.save(&out)?;
            println!("frames={} dim={}", feats.frames(), feats.dim());
        }
        Command::SynthSsl { seed, dim, frames, wav, out } => {
            let frames = match (frames, wav) {
                (Some(n), _) => n,
                (None, Some(path)) => ssl_frame_count(crate::wav::read(path)?.len()),
                (None, None) => unreachable!("clap enforces one of --frames/--wav"),
            };
            let feats = synth_features(&SslSourceConfig::synthetic(seed, dim), frames, None)?;
            feats.save(&out)?;
            println!("frames={} dim={}", feats.frames(), feats.dim());
        }
        Command::Align { sf, ssl, out_sf, out_ssl, seed } => {
            let f_sf = FeatureMatrix::load(&sf)?;
            let f_ssl = load_features(&ssl)?;
            let cfg = SslSourceConfig::synthetic(seed, f_ssl.dim());
            if let Some(w) = cfg.dim_warning(f_sf.dim()) {
                eprintln!("warning: {w}");
            }
            let params = AlignParams::init(f_ssl.dim(), f_sf.dim(), &mut SplitMix64::new(seed));
            let (a, b) = align_pair(&f_sf, &f_ssl, &params)?;
            a.save(&out_sf)?;
            b.save(&out_ssl)?;
            println!("frames={} dim={}", a.frames(), a.dim());
        }
        Command::Fuse { fusion, sf, ssl, out, seed } => {
            let f_sf = FeatureMatrix::load(&sf)?;
            let f_ssl = FeatureMatrix::load(&ssl)?;
            let params = FusionParams::init(&fusion.config(f_sf.dim()), &mut SplitMix64::new(seed))?;
            let y = params.forward(f_sf.data.view(), f_ssl.data.view())?;
            let fused = FeatureMatrix::new(y, f_sf.frame_shift_ms, StreamSource::Fused)?;
            fused.save(&out)?;
            println!("frames={} dim={}", fused.frames(), fused.dim());
        }
        Command::Gradcheck { variant, seed, eps, tol } => {
            let report = random_check(variant, seed, eps)?;
            for (name, err) in &report.per_tensor {
                println!("{name} {}", fmt_num(*err));
            }
            println!("max_rel_error {}", fmt_num(report.max_rel_error));
            if !report.passes(tol) {
                eprintln!("gradient check failed: tolerance {}", fmt_num(tol));
                return Ok(EXIT_TOLERANCE);
            }
        }
        Command::TrainToy {
            fusion, informative, seed, out, epochs, lr, snr, n_utts, dim, dump_data,
        } => {
            let data = make_dataset(&ToyDatasetSpec {
                n_utts,
                dim,
                informative,
                snr,
                seed,
                ..Default::default()
            })?;
            let cfg = ModelConfig {
                fusion: fusion.config(dim),
                n_classes: data.n_classes,
                align_ssl_dim: None,
            };
            let model = ToyModel::init(&cfg, seed)?;
            let tcfg = TrainConfig { epochs, learning_rate: lr, seed, ..Default::default() };
            let (model, curve) = train(&model, &data, &tcfg)?;
            checkpoint::save(&out, &cfg, &model)?;
            if let Some(dir) = dump_data {
                fs::create_dir_all(&dir)?;
                for (i, u) in data.utterances.iter().enumerate() {
                    FeatureMatrix::new(u.f_sf.clone(), 10.0, StreamSource::Sf)?
                        .save(dir.join(format!("utt{i:04}.sf.feat")))?;
                    FeatureMatrix::new(u.f_ssl.clone(), 20.0, StreamSource::Ssl)?
                        .save(dir.join(format!("utt{i:04}.ssl.feat")))?;
                }
            }
            if let (Some(first), Some(last)) = (curve.first(), curve.last()) {
                println!("initial_loss {}", fmt_num(*first));
                println!("final_loss {}", fmt_num(*last));
            }
            println!("train_accuracy {}", fmt_num(evaluate(&model, &data)?));
        }
        Command::AnalyzeGates { model, data, per, out } => {
            let (_, model) = checkpoint::load(&model)?;
            let pairs = feature_pairs(&data)?;
            let mut gates = Vec::with_capacity(pairs.len());
            for (_, sf, ssl) in &pairs {
                let f_sf = FeatureMatrix::load(sf)?;
                let f_ssl = FeatureMatrix::load(ssl)?;
                gates.push(model.gates(f_sf.data.view(), f_ssl.data.view())?);
            }
            let stats = weight_summary(&gates, per)?;
            let mut csv = String::from("utt_id,mean_w_sf,mean_w_ssl,var\n");
            let ids: Vec<&str> = match per {
                SummaryScope::Corpus => vec!["corpus"],
                SummaryScope::Utterance => pairs
                    .iter()
                    .zip(&gates)
                    .filter(|(_, g)| g.frames() > 0)
                    .map(|((id, _, _), _)| id.as_str())
                    .collect(),
            };
            for (id, s) in ids.iter().zip(&stats) {
                csv.push_str(&format!(
                    "{id},{},{},{}\n",
                    fmt_num(s.mean_w_sf),
                    fmt_num(s.mean_w_ssl),
                    fmt_num(s.var_w_ssl)
                ));
            }
            match out {
                Some(p) => fs::write(p, csv)?,
                None => std::io::stdout().write_all(csv.as_bytes())?,
            }
        }
        Command::Cerr { base, ssl } => {
            let c = cerr(base, ssl)?;
            println!("{} {c}", fmt_num(c.raw));
        }
    }
    Ok(EXIT_OK)
}

/// Sorted `(id, sf_path, ssl_path)` triples from a data directory.
fn feature_pairs(dir: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(id) = name.strip_suffix(".sf.feat") {
            let ssl = dir.join(format!("{id}.ssl.feat"));
            if !ssl.exists() {
                return Err(Error::InvalidInput(format!("missing SSL features for '{id}'")));
            }
            out.push((id.to_string(), path.clone(), ssl));
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no *.sf.feat files in {}",
            dir.display()
        )));
    }
    out.sort();
    Ok(out)
}
