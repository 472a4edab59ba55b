//! The configuration grid: every speaker and model size through the five
//! enhancement modes, with matched seeds, followed by evaluation.
//!
//! Output layout under the suite directory:
//!
//! ```text
//! predictors/<generalist>/model.psec, report.txt
//! cells/<speaker>/h<hidden>/<mode>/model.psec, report.txt
//! results.csv
//! summary.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::run::{CHECKPOINT_FILE, REPORT_FILE};
use super::{run_training, Init, TrainConfig, TrainCorpora, TrainMode, TrainReport};
use crate::data::{derive_seed, Corpus, MixSpec};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_suite, evaluate, format_csv, EvalResult, EvalSpec};
use crate::neural::{load_checkpoint, GruConfig, ModelParams};

/// Enhancement modes in presentation order.
pub const SUITE_MODES: [TrainMode; 5] = [
    TrainMode::Se,
    TrainMode::Pse,
    TrainMode::PseDp,
    TrainMode::SeToPse,
    TrainMode::SeToPseDp,
];

/// One test-time speaker's data.
#[derive(Clone, Debug)]
pub struct SuiteCell {
    pub speaker_id: String,
    /// The speaker's noisy-premixture training clips.
    pub train: Corpus,
    /// Held-out clean utterances for evaluation.
    pub eval: Corpus,
    /// Speech from other speakers for SE and the SNR predictor.
    pub generalist: Corpus,
    /// Cells sharing a key share one SNR predictor.
    pub generalist_key: String,
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub cells: Vec<SuiteCell>,
    pub premix_noise: Corpus,
    pub train_noise: Corpus,
    pub eval_noise: Corpus,
    pub hidden_dims: Vec<usize>,
    pub modes: Vec<TrainMode>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub mix: MixSpec,
    pub predictor: GruConfig,
    pub predictor_steps: usize,
    pub num_mixtures: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub resume: bool,
    pub jobs: usize,
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub speaker_id: String,
    pub hidden_dim: usize,
    pub mode: TrainMode,
    pub result: std::result::Result<EvalResult, String>,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub outcomes: Vec<CellOutcome>,
    pub csv_path: PathBuf,
    pub summary: String,
}

impl SuiteReport {
    pub fn failures(&self) -> Vec<&CellOutcome> {
        self.outcomes.iter().filter(|o| o.result.is_err()).collect()
    }
}

fn completed(dir: &Path) -> bool {
    dir.join(CHECKPOINT_FILE).is_file() && TrainReport::read(dir.join(REPORT_FILE)).is_ok()
}

/// Trains into `dir` unless a resumable result is already there.
fn train_or_resume(
    config: &TrainConfig,
    corpora: TrainCorpora,
    dir: &Path,
    resume: bool,
) -> Result<ModelParams> {
    if resume && completed(dir) {
        log::info!("resuming: reusing {}", dir.display());
        return load_checkpoint(dir.join(CHECKPOINT_FILE));
    }
    Ok(run_training(config, corpora, dir)?.params)
}

fn label_dir(mode: TrainMode) -> &'static str {
    mode.name()
}

/// Runs the grid. Cell failures are collected, not propagated; only
/// problems with the suite itself (bad config, unwritable output) are errors.
pub fn run_configuration_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    if cfg.cells.is_empty() || cfg.hidden_dims.is_empty() || cfg.modes.is_empty() {
        return Err(Error::config("suite needs at least one speaker, model size and mode"));
    }
    if let Some(m) = cfg.modes.iter().find(|m| !SUITE_MODES.contains(m)) {
        return Err(Error::config(format!("mode {m} cannot be part of a suite")));
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| run_grid(cfg))
}

fn run_grid(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let modes: Vec<TrainMode> = SUITE_MODES.into_iter().filter(|m| cfg.modes.contains(m)).collect();
    let needs_predictor = modes.iter().any(|m| m.uses_purification());
    let needs_se = modes.iter().any(|m| *m == TrainMode::Se || m.warm_starts_from_se());

    // stage 1: one SNR predictor per generalist pool
    let mut pools: BTreeMap<&str, &Corpus> = BTreeMap::new();
    for c in &cfg.cells {
        pools.entry(c.generalist_key.as_str()).or_insert(&c.generalist);
    }
    let predictors: BTreeMap<&str, std::result::Result<PathBuf, String>> = if needs_predictor {
        pools
            .par_iter()
            .map(|(key, generalist)| {
                let dir = cfg.out_dir.join("predictors").join(key);
                let mut tc = TrainConfig::new(TrainMode::SnrPredictor, cfg.predictor.clone(), cfg.seed);
                tc.steps = cfg.predictor_steps;
                tc.batch_size = cfg.batch_size;
                tc.lr = cfg.lr;
                tc.mix = cfg.mix.clone();
                let corpora = TrainCorpora {
                    generalist: Some(generalist),
                    train_noise: Some(&cfg.train_noise),
                    ..Default::default()
                };
                let r = train_or_resume(&tc, corpora, &dir, cfg.resume)
                    .map(|_| dir.join(CHECKPOINT_FILE))
                    .map_err(|e| format!("SNR predictor {key}: {e}"));
                (*key, r)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    } else {
        BTreeMap::new()
    };

    // stage 2 trains modes without dependencies on other cells; stage 3 the
    // warm-started ones, which read the stage-2 SE checkpoint
    let grid: Vec<(usize, usize)> = (0..cfg.cells.len())
        .flat_map(|c| cfg.hidden_dims.iter().map(move |&h| (c, h)))
        .collect();
    let cell_dir = |c: usize, h: usize| {
        cfg.out_dir
            .join("cells")
            .join(&cfg.cells[c].speaker_id)
            .join(format!("h{h}"))
    };
    let run_cell = |c: usize, h: usize, mode: TrainMode| -> std::result::Result<EvalResult, String> {
        let cell = &cfg.cells[c];
        let seed = derive_seed(cfg.seed, &[c as u64]);
        let mut tc = TrainConfig::new(mode, GruConfig::mask_estimator(h), seed);
        tc.steps = cfg.steps;
        tc.batch_size = cfg.batch_size;
        tc.lr = cfg.lr;
        tc.mix = cfg.mix.clone();
        if mode.uses_purification() {
            let p = predictors
                .get(cell.generalist_key.as_str())
                .ok_or("SNR predictor was not trained")?;
            tc.snr_predictor_checkpoint = Some(p.clone().map_err(|e| format!("dependency failed: {e}"))?);
        }
        if mode.warm_starts_from_se() {
            let se = cell_dir(c, h).join(label_dir(TrainMode::Se));
            if !completed(&se) {
                return Err("dependency failed: SE checkpoint is missing".into());
            }
            tc.init = Init::FromCheckpoint(se.join(CHECKPOINT_FILE));
        }
        let corpora = TrainCorpora {
            generalist: Some(&cell.generalist),
            speaker: Some(&cell.train),
            premix_noise: Some(&cfg.premix_noise),
            train_noise: Some(&cfg.train_noise),
        };
        let dir = cell_dir(c, h).join(label_dir(mode));
        let params = train_or_resume(&tc, corpora, &dir, cfg.resume).map_err(|e| e.to_string())?;
        let spec = EvalSpec {
            num_mixtures: cfg.num_mixtures,
            mix: cfg.mix.clone(),
            seed,
            speaker_id: cell.speaker_id.clone(),
            config: mode.label().to_string(),
            hidden_dim: h,
        };
        evaluate(&params, &cell.eval, &cfg.eval_noise, &spec).map_err(|e| e.to_string())
    };

    let needs_se_first = |m: &TrainMode| m.warm_starts_from_se();
    let mut stage2: Vec<TrainMode> = modes.iter().copied().filter(|m| !needs_se_first(m)).collect();
    if needs_se && !stage2.contains(&TrainMode::Se) {
        stage2.insert(0, TrainMode::Se);
    }
    let stage3: Vec<TrainMode> = modes.iter().copied().filter(needs_se_first).collect();
    let mut results: BTreeMap<(usize, usize, TrainMode), std::result::Result<EvalResult, String>> = BTreeMap::new();
    for stage in [stage2, stage3] {
        let jobs: Vec<(usize, usize, TrainMode)> = grid
            .iter()
            .flat_map(|&(c, h)| stage.iter().map(move |&m| (c, h, m)))
            .collect();
        let done: Vec<_> = jobs
            .par_iter()
            .map(|&(c, h, m)| ((c, h, m), run_cell(c, h, m)))
            .collect();
        results.extend(done);
    }

    let mut outcomes = Vec::new();
    for &(c, h) in &grid {
        for &m in &modes {
            let result = results.remove(&(c, h, m)).expect("every job ran");
            if let Err(e) = &result {
                log::error!("cell {} h{} {}: {e}", cfg.cells[c].speaker_id, h, m);
            }
            outcomes.push(CellOutcome {
                speaker_id: cfg.cells[c].speaker_id.clone(),
                hidden_dim: h,
                mode: m,
                result,
            });
        }
    }
    // mode-major order so the CSV lists configurations in presentation order
    let mut ok: Vec<(usize, &EvalResult)> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|r| (SUITE_MODES.iter().position(|m| *m == o.mode).unwrap(), r)))
        .collect();
    ok.sort_by_key(|(rank, r)| (*rank, r.hidden_dim));
    let ok: Vec<EvalResult> = ok.into_iter().map(|(_, r)| r.clone()).collect();
    let csv_path = cfg.out_dir.join("results.csv");
    let csv = if ok.is_empty() {
        format!("{}\n", crate::evaluation::CSV_HEADER)
    } else {
        format_csv(&ok)?
    };
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let summary = summary_table(&ok, &outcomes, &modes, &cfg.hidden_dims)?;
    let summary_path = cfg.out_dir.join("summary.txt");
    fs::write(&summary_path, &summary).map_err(|e| Error::io(&summary_path, e))?;
    Ok(SuiteReport {
        outcomes,
        csv_path,
        summary,
    })
}

fn summary_table(
    ok: &[EvalResult],
    outcomes: &[CellOutcome],
    modes: &[TrainMode],
    hidden_dims: &[usize],
) -> Result<String> {
    let aggregates = if ok.is_empty() { Vec::new() } else { aggregate_suite(ok)? };
    let mut out = String::new();
    writeln!(
        out,
        "{:<12} {:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>7}",
        "mode", "hidden", "mean", "median", "q1", "q3", "speakers", "failed"
    )
    .expect("string write");
    for &h in hidden_dims {
        for &m in modes {
            let failed = outcomes
                .iter()
                .filter(|o| o.mode == m && o.hidden_dim == h && o.result.is_err())
                .count();
            match aggregates.iter().find(|a| a.config == m.label() && a.hidden_dim == h) {
                Some(a) => writeln!(
                    out,
                    "{:<12} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8} {:>7}",
                    m.label(),
                    h,
                    a.per_speaker.mean,
                    a.per_speaker.median,
                    a.per_speaker.q1,
                    a.per_speaker.q3,
                    a.per_speaker.n,
                    failed
                ),
                None => writeln!(
                    out,
                    "{:<12} {:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>7}",
                    m.label(),
                    h,
                    "-",
                    "-",
                    "-",
                    "-",
                    0,
                    failed
                ),
            }
            .expect("string write");
        }
    }
    Ok(out)
}
