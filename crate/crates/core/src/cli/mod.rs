//! The `pse` command line: `synth-data`, `train`, `evaluate`, `suite`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
//! Logging verbosity comes from the `PSE_LOG` environment variable
//! (`error`, `info`, `debug`).

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    format_manifest, generate_synthetic_corpus, load_manifest_corpus, save_wav, Corpus, CorpusRole, ManifestEntry,
};
use crate::error::{Error, Result};
use crate::evaluation::{check_disjoint, evaluate, format_csv, EvalSpec};
use crate::neural::{load_checkpoint, GruConfig};
use crate::training::{
    run_configuration_suite, run_training, Init, SuiteCell, SuiteConfig, TrainConfig, TrainCorpora, TrainMode,
};

pub use config::{RunConfig, DEFAULT_EVAL_HOLDOUT, KNOWN_KEYS};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.cfg";
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "pse", version, about = "Personalized speech enhancement without clean speaker data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic speaker and noise corpora with manifests.
    SynthData(SynthDataArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Evaluate a mask-estimator checkpoint on held-out mixtures.
    Evaluate(EvaluateArgs),
    /// Run every configuration for every speaker and model size.
    Suite(SuiteArgs),
}

#[derive(Args, Debug)]
pub struct SynthDataArgs {
    #[arg(long)]
    pub speakers: usize,
    #[arg(long)]
    pub clips_per_speaker: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Clip length in samples at 16 kHz.
    #[arg(long, default_value_t = 48_000)]
    pub clip_length: usize,
    /// Clips in each noise corpus.
    #[arg(long, default_value_t = 12)]
    pub noise_clips: usize,
    /// Extra speakers written as dedicated generalist manifests.
    #[arg(long, default_value_t = 0)]
    pub generalist_speakers: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_mode)]
    pub mode: TrainMode,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `steps` from the config.
    #[arg(long)]
    pub steps: Option<usize>,
    /// SNR predictor checkpoint, required by the purification modes.
    #[arg(long)]
    pub snr_predictor: Option<PathBuf>,
    /// SE checkpoint to fine-tune, required by the warm-started modes.
    #[arg(long)]
    pub se_checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `num_mixtures` from the config.
    #[arg(long)]
    pub num_mixtures: Option<usize>,
    /// Configuration label written to the CSV.
    #[arg(long, default_value = "model")]
    pub label: String,
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Reuse cells whose checkpoint and report already exist.
    #[arg(long)]
    pub resume: bool,
    /// Upper bound on concurrently running cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn parse_mode(s: &str) -> std::result::Result<TrainMode, String> {
    TrainMode::parse(s).map_err(|e| e.to_string())
}

/// Exit code for an error: validation problems are usage errors.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("PSE_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::SynthData(a) => synth_data(a).map(|_| EXIT_OK),
        Command::Train(a) => train(a).map(|_| EXIT_OK),
        Command::Evaluate(a) => evaluate_cmd(a).map(|_| EXIT_OK),
        Command::Suite(a) => suite(a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_corpus(corpus: &Corpus, dir: &Path, rel_dir: &str, id: &str) -> Result<Vec<ManifestEntry>> {
    create_dir(dir)?;
    corpus
        .clips()
        .iter()
        .map(|clip| {
            save_wav(dir.join(format!("{}.wav", clip.id)), &clip.wave)?;
            Ok(ManifestEntry {
                path: format!("../{rel_dir}/{}.wav", clip.id),
                id: id.to_string(),
            })
        })
        .collect()
}

/// Writes `speakers/`, `noise/premix/`, `noise/train/`, one manifest per
/// corpus under `manifests/`, and a starter `pse.cfg`.
pub fn synth_data(a: &SynthDataArgs) -> Result<()> {
    if a.speakers == 0 || a.clips_per_speaker == 0 || a.noise_clips == 0 {
        return Err(Error::invalid("--speakers, --clips-per-speaker and --noise-clips must be positive"));
    }
    let manifests = a.out.join("manifests");
    create_dir(&manifests)?;
    let mut speaker_manifests = Vec::new();
    let mut generalist_manifests = Vec::new();
    for s in 0..a.speakers + a.generalist_speakers {
        let is_generalist = s >= a.speakers;
        let corpus = generate_synthetic_corpus(
            CorpusRole::SpeakerSpeech,
            a.clips_per_speaker,
            a.clip_length,
            Some(s as u32),
            a.seed,
        )?;
        let id = format!("spk{s:02}");
        let rel = if is_generalist {
            format!("generalist/{id}")
        } else {
            format!("speakers/{id}")
        };
        let entries = write_corpus(&corpus, &a.out.join(&rel), &rel, &id)?;
        let name = if is_generalist {
            format!("generalist_{id}.tsv")
        } else {
            format!("{id}.tsv")
        };
        write_file(&manifests.join(&name), format_manifest(&entries))?;
        if is_generalist {
            generalist_manifests.push(format!("manifests/{name}"));
        } else {
            speaker_manifests.push(format!("manifests/{name}"));
        }
    }
    for (role, rel, name, id) in [
        (CorpusRole::PremixtureNoise, "noise/premix", "premix_noise.tsv", "premix"),
        (CorpusRole::TrainingNoise, "noise/train", "train_noise.tsv", "noise"),
    ] {
        let corpus = generate_synthetic_corpus(role, a.noise_clips, a.clip_length, None, a.seed)?;
        let entries = write_corpus(&corpus, &a.out.join(rel), rel, id)?;
        write_file(&manifests.join(name), format_manifest(&entries))?;
    }
    let mut cfg = format!(
        "# written by synth-data (seed {})\nspeaker_manifests = {}\nspeaker_manifest = {}\npremix_noise_manifest = manifests/premix_noise.tsv\ntrain_noise_manifest = manifests/train_noise.tsv\n",
        a.seed,
        speaker_manifests.join(","),
        speaker_manifests[0]
    );
    if !generalist_manifests.is_empty() {
        cfg.push_str(&format!("generalist_manifests = {}\n", generalist_manifests.join(",")));
    }
    write_file(&a.out.join("pse.cfg"), cfg)?;
    log::info!(
        "wrote {} speakers, {} generalist speakers and 2 noise corpora under {}",
        a.speakers,
        a.generalist_speakers,
        a.out.display()
    );
    Ok(())
}

/// Training and evaluation corpora resolved from a run config.
struct Resolved {
    speaker_train: Option<Corpus>,
    speaker_eval: Option<Corpus>,
    generalist: Option<Corpus>,
    premix_noise: Option<Corpus>,
    train_noise: Corpus,
    eval_noise: Option<Corpus>,
}

fn split(corpus: Corpus, holdout: f64) -> Result<(Corpus, Option<Corpus>)> {
    if holdout == 0.0 {
        return Ok((corpus, None));
    }
    let (train, held) = corpus
        .split_holdout(holdout)
        .map_err(|e| Error::config(format!("eval_holdout: {e}")))?;
    Ok((train, Some(held)))
}

fn speaker_train_part(path: &Path, holdout: f64) -> Result<Corpus> {
    Ok(split(load_manifest_corpus(path, CorpusRole::SpeakerSpeech)?, holdout)?.0)
}

/// Generalist speech: the configured generalist manifests, or else every
/// listed speaker except `exclude` (training parts only).
fn generalist_corpus(cfg: &RunConfig, exclude: Option<&Path>, holdout: f64) -> Result<Option<Corpus>> {
    let dedicated = cfg.path_list("generalist_manifests")?;
    let parts = if !dedicated.is_empty() {
        dedicated
            .iter()
            .map(|p| load_manifest_corpus(p, CorpusRole::GeneralistSpeech))
            .collect::<Result<Vec<_>>>()?
    } else {
        cfg.path_list("speaker_manifests")?
            .iter()
            .filter(|p| exclude.is_none_or(|e| !same_file(p, e)))
            .map(|p| speaker_train_part(p, holdout))
            .collect::<Result<Vec<_>>>()?
    };
    if parts.is_empty() {
        return Ok(None);
    }
    Ok(Some(Corpus::merge(CorpusRole::GeneralistSpeech, parts.iter())?))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn resolve(cfg: &RunConfig) -> Result<Resolved> {
    let holdout = cfg.eval_holdout()?;
    let speaker_path = cfg.existing_path("speaker_manifest")?;
    let (speaker_train, speaker_eval) = match &speaker_path {
        Some(p) => {
            let (t, e) = split(load_manifest_corpus(p, CorpusRole::SpeakerSpeech)?, holdout)?;
            (Some(t), e)
        }
        None => (None, None),
    };
    let speaker_eval = match cfg.existing_path("eval_speaker_manifest")? {
        Some(p) => Some(load_manifest_corpus(&p, CorpusRole::SpeakerSpeech)?),
        None => speaker_eval,
    };
    let (train_noise, eval_noise) = split(
        load_manifest_corpus(&cfg.required_path("train_noise_manifest")?, CorpusRole::TrainingNoise)?,
        holdout,
    )?;
    let eval_noise = match cfg.existing_path("eval_noise_manifest")? {
        Some(p) => Some(load_manifest_corpus(&p, CorpusRole::TrainingNoise)?),
        None => eval_noise,
    };
    let premix_noise = cfg
        .existing_path("premix_noise_manifest")?
        .map(|p| load_manifest_corpus(&p, CorpusRole::PremixtureNoise))
        .transpose()?;
    Ok(Resolved {
        speaker_train,
        speaker_eval,
        generalist: generalist_corpus(cfg, speaker_path.as_deref(), holdout)?,
        premix_noise,
        train_noise,
        eval_noise,
    })
}

fn require_file(flag: &str, path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::config(format!("{flag}: {} does not exist", path.display())));
    }
    Ok(())
}

/// Fills in effective values so the written config fully describes the run.
fn record_effective(cfg: &mut RunConfig, config: &TrainConfig) -> Result<()> {
    cfg.set("steps", config.steps)?;
    cfg.set("batch_size", config.batch_size)?;
    cfg.set("lr", format!("{:?}", config.lr))?;
    cfg.set("segment_length", config.mix.segment_length)?;
    cfg.set("premix_snr_low", format!("{:?}", config.mix.premix_snr.low))?;
    cfg.set("premix_snr_high", format!("{:?}", config.mix.premix_snr.high))?;
    cfg.set("mix_snr_low", format!("{:?}", config.mix.mix_snr.low))?;
    cfg.set("mix_snr_high", format!("{:?}", config.mix.mix_snr.high))?;
    cfg.set("eval_holdout", format!("{:?}", cfg.eval_holdout()?))?;
    if config.mode == TrainMode::SnrPredictor {
        cfg.set("predictor_hidden_dim", config.model.hidden_dim)?;
        cfg.set("predictor_num_layers", config.model.num_layers)?;
    } else {
        cfg.set("hidden_dim", config.model.hidden_dim)?;
        cfg.set("num_layers", config.model.num_layers)?;
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    if a.mode.uses_purification() && a.snr_predictor.is_none() {
        return Err(Error::config(format!("--mode {} requires --snr-predictor <checkpoint>", a.mode)));
    }
    if a.mode.warm_starts_from_se() && a.se_checkpoint.is_none() {
        return Err(Error::config(format!("--mode {} requires --se-checkpoint <checkpoint>", a.mode)));
    }
    if let Some(p) = &a.snr_predictor {
        require_file("--snr-predictor", p)?;
    }
    if let Some(p) = &a.se_checkpoint {
        require_file("--se-checkpoint", p)?;
    }
    let mut cfg = RunConfig::load(&a.config)?;
    let model = if a.mode == TrainMode::SnrPredictor {
        GruConfig::snr_predictor(cfg.predictor_hidden_dim()?, cfg.predictor_num_layers()?)
    } else {
        let mut m = GruConfig::mask_estimator(cfg.hidden_dim()?);
        m.num_layers = cfg.num_layers()?;
        m
    };
    let mut config = TrainConfig::new(a.mode, model, a.seed);
    config.steps = match a.steps {
        Some(s) => s,
        None if a.mode == TrainMode::SnrPredictor => cfg.predictor_steps()?,
        None => cfg.steps()?,
    };
    config.batch_size = cfg.batch_size()?;
    config.lr = cfg.lr()?;
    config.mix = cfg.mix_spec()?;
    config.snr_predictor_checkpoint = a.snr_predictor.clone();
    if a.mode.warm_starts_from_se() {
        config.init = Init::FromCheckpoint(a.se_checkpoint.clone().expect("checked above"));
    }
    config.validate()?;
    let data = resolve(&cfg)?;
    let corpora = TrainCorpora {
        generalist: data.generalist.as_ref(),
        speaker: data.speaker_train.as_ref(),
        premix_noise: data.premix_noise.as_ref(),
        train_noise: Some(&data.train_noise),
    };
    record_effective(&mut cfg, &config)?;
    let report = run_training(&config, corpora, &a.out)?.report;
    let header = format!(
        "# pse train --mode {} --seed {}{}{}\n",
        a.mode,
        a.seed,
        a.snr_predictor
            .as_ref()
            .map(|p| format!(" --snr-predictor {}", p.display()))
            .unwrap_or_default(),
        a.se_checkpoint
            .as_ref()
            .map(|p| format!(" --se-checkpoint {}", p.display()))
            .unwrap_or_default(),
    );
    write_file(&a.out.join(RESOLVED_CONFIG_FILE), header + &cfg.resolved_text())?;
    println!(
        "trained {} for {} steps; checkpoint {}",
        a.mode,
        report.steps(),
        a.out.join("model.psec").display()
    );
    Ok(())
}

pub fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    require_file("--checkpoint", &a.checkpoint)?;
    let mut cfg = RunConfig::load(&a.config)?;
    let data = resolve(&cfg)?;
    let speech = data
        .speaker_eval
        .as_ref()
        .ok_or_else(|| Error::config("no evaluation speech: set speaker_manifest with eval_holdout > 0, or eval_speaker_manifest"))?;
    let noise = data
        .eval_noise
        .as_ref()
        .ok_or_else(|| Error::config("no evaluation noise: set eval_holdout > 0 or eval_noise_manifest"))?;
    let mut train_sets: Vec<&Corpus> = vec![&data.train_noise];
    train_sets.extend(data.speaker_train.as_ref());
    train_sets.extend(data.generalist.as_ref());
    check_disjoint(&train_sets, &[speech, noise])?;
    let params = load_checkpoint(&a.checkpoint)?;
    let spec = EvalSpec {
        num_mixtures: match a.num_mixtures {
            Some(n) => n,
            None => cfg.num_mixtures()?,
        },
        mix: cfg.mix_spec()?,
        seed: a.seed,
        speaker_id: speech.speaker_id().unwrap_or("unknown").to_string(),
        config: a.label.clone(),
        hidden_dim: params.config().hidden_dim,
    };
    if spec.num_mixtures == 0 {
        return Err(Error::invalid("--num-mixtures must be positive"));
    }
    let result = evaluate(&params, speech, noise, &spec)?;
    create_dir(&a.out)?;
    write_file(&a.out.join("results.csv"), format_csv(std::slice::from_ref(&result))?)?;
    cfg.set("num_mixtures", spec.num_mixtures)?;
    write_file(
        &a.out.join(RESOLVED_CONFIG_FILE),
        format!(
            "# pse evaluate --checkpoint {} --seed {} --label {}\n{}",
            a.checkpoint.display(),
            a.seed,
            a.label,
            cfg.resolved_text()
        ),
    )?;
    println!(
        "{}: mean SI-SDR improvement {:.4} dB over {} mixtures",
        result.speaker_id,
        result.mean_improvement(),
        result.mixtures.len()
    );
    Ok(())
}

pub fn suite(a: &SuiteArgs) -> Result<i32> {
    let cfg = RunConfig::load(&a.config)?;
    let holdout = cfg.eval_holdout()?;
    if holdout == 0.0 {
        return Err(Error::config("the suite needs eval_holdout > 0 to hold out evaluation clips"));
    }
    let speaker_paths = cfg.path_list("speaker_manifests")?;
    if speaker_paths.is_empty() {
        return Err(Error::config("config is missing speaker_manifests"));
    }
    let dedicated = !cfg.path_list("generalist_manifests")?.is_empty();
    let mut cells = Vec::new();
    for p in &speaker_paths {
        let (train, eval) = split(load_manifest_corpus(p, CorpusRole::SpeakerSpeech)?, holdout)?;
        let speaker_id = train.speaker_id().expect("speaker corpora carry an id").to_string();
        let generalist = generalist_corpus(&cfg, Some(p), holdout)?.ok_or_else(|| {
            Error::config("generalist speech is empty: list generalist_manifests or more than one speaker")
        })?;
        cells.push(SuiteCell {
            generalist_key: if dedicated {
                "shared".to_string()
            } else {
                format!("without-{speaker_id}")
            },
            speaker_id,
            train,
            eval: eval.expect("holdout is positive"),
            generalist,
        });
    }
    let (train_noise, eval_noise) = split(
        load_manifest_corpus(&cfg.required_path("train_noise_manifest")?, CorpusRole::TrainingNoise)?,
        holdout,
    )?;
    let premix_noise = load_manifest_corpus(&cfg.required_path("premix_noise_manifest")?, CorpusRole::PremixtureNoise)?;
    let suite_cfg = SuiteConfig {
        cells,
        premix_noise,
        train_noise,
        eval_noise: eval_noise.expect("holdout is positive"),
        hidden_dims: cfg.hidden_dims()?,
        modes: cfg.modes()?,
        steps: cfg.steps()?,
        batch_size: cfg.batch_size()?,
        lr: cfg.lr()?,
        mix: cfg.mix_spec()?,
        predictor: GruConfig::snr_predictor(cfg.predictor_hidden_dim()?, cfg.predictor_num_layers()?),
        predictor_steps: cfg.predictor_steps()?,
        num_mixtures: cfg.num_mixtures()?,
        seed: a.seed,
        out_dir: a.out.clone(),
        resume: a.resume,
        jobs: a.jobs,
    };
    let report = run_configuration_suite(&suite_cfg)?;
    write_file(
        &a.out.join(RESOLVED_CONFIG_FILE),
        format!("# pse suite --seed {}\n{}", a.seed, cfg.resolved_text()),
    )?;
    print!("{}", report.summary);
    let failures = report.failures();
    for f in &failures {
        eprintln!(
            "cell {} h{} {} failed: {}",
            f.speaker_id,
            f.hidden_dim,
            f.mode,
            f.result.as_ref().err().map(String::as_str).unwrap_or("")
        );
    }
    println!("results: {}", report.csv_path.display());
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_FAILURE })
}
