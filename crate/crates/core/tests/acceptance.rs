//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pse::data::{derive_seed, CorpusRole, ExampleStream, MixSpec, PseExample, SnrRange, TrainingPair};
use pse::dsp::{frame_count, istft, stft, SegmentalConfig, Waveform};
use pse::evaluation::{check_disjoint, evaluate, EvalSpec};
use pse::metrics::{segmental_mse, segmental_snr, si_sdr};
use pse::neural::{
    encode_checkpoint, forward_snr, mask_loss_and_gradients, regression_loss_and_gradients, Gradients, GruConfig,
    ModelParams, WaveformLoss,
};
use pse::training::{
    initial_params, train_pse_from_source, train_pse_weighted, train_se, train_snr_predictor, validate_snr_predictor,
    TrainConfig, TrainMode, Weighting,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{desk_corpora, path_str, random_wave, run_cli, speaker_split, DeskCorpora};

type Check = fn(&mut Shared) -> Result<String, String>;

/// State carried between criteria (the predictor is reused by the ordering
/// experiment).
#[derive(Default)]
struct Shared {
    corpora: Option<DeskCorpora>,
    predictor: Option<(ModelParams, Duration)>,
}

impl Shared {
    fn corpora(&mut self) -> &DeskCorpora {
        self.corpora.get_or_insert_with(desk_corpora)
    }
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// 1
fn dsp_round_trip(_: &mut Shared) -> Result<String, String> {
    let start = Instant::now();
    let framing = SegmentalConfig::standard();
    let n = framing.frame_size();
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let x = random_wave(16_000, 1000 + seed, 1.0);
        let y = istft(&stft(&x, &framing).unwrap(), x.len()).unwrap();
        let (a, b) = (&x.samples()[n..x.len() - n], &y.samples()[n..x.len() - n]);
        let err: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
        let norm: f64 = a.iter().map(|u| u * u).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-6 && secs < 10.0,
        format!("worst interior relative L2 error {worst:.2e} (< 1e-6), {secs:.2}s (< 10s)"),
    )
}

// 2
fn frame_count_anchor(_: &mut Shared) -> Result<String, String> {
    let framing = SegmentalConfig::standard();
    let x = random_wave(16_000, 2, 0.5);
    let counts = [
        frame_count(16_000, &framing).unwrap(),
        stft(&x, &framing).unwrap().frames(),
        segmental_snr(&x, &x, &framing).unwrap().len(),
    ];
    ensure(counts.iter().all(|&j| j == 63), format!("J = {counts:?} (expected 63)"))
}

// 3
fn parameter_count_anchor(_: &mut Shared) -> Result<String, String> {
    let mut parts = Vec::new();
    let mut ok = true;
    for (hidden, reference) in [(64usize, 169_000f64), (128, 412_000.0)] {
        let config = GruConfig::mask_estimator(hidden);
        let reported = ModelParams::init(config.clone(), 0).unwrap().parameter_count();
        // per layer: three gates of input and recurrent weights plus two biases
        let (f, h) = (config.input_dim, hidden);
        let independent = 3 * h * (f + h) + 6 * h + 3 * h * (h + h) + 6 * h + h * config.output_dim + config.output_dim;
        let dev = (reported as f64 - reference).abs() / reference;
        ok &= reported == independent && dev < 0.05;
        parts.push(format!(
            "h{hidden}: {reported} (independent {independent}, reference {reference}, off {:.2}%)",
            100.0 * dev
        ));
    }
    ensure(ok, parts.join("; "))
}

/// Worst per-tensor relative error between the analytic gradient and central
/// differences.
fn fd_error<F: Fn(&ModelParams) -> f64>(params: &ModelParams, analytic: &Gradients, loss: F) -> f64 {
    // fourth-order stencil; the predictor loss is in dB^2, so small steps lose
    // the difference to cancellation
    let eps = 1e-3;
    let mut worst = 0.0f64;
    for slot in 0..params.tensors().len() {
        let mut num = Vec::new();
        for i in 0..params.tensors()[slot].len() {
            let bumped = |delta: f64| {
                let mut tensors = params.tensors().to_vec();
                tensors[slot].as_slice_mut().unwrap()[i] += delta;
                loss(&ModelParams::from_tensors(params.config().clone(), tensors).unwrap())
            };
            num.push((8.0 * (bumped(eps) - bumped(-eps)) - (bumped(2.0 * eps) - bumped(-2.0 * eps))) / (12.0 * eps));
        }
        let ana = analytic.get(slot).as_slice().unwrap();
        let diff = ana.iter().zip(&num).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|a| a * a).sum::<f64>().sqrt();
        let scale = norm(&mut ana.iter().copied()).max(norm(&mut num.iter().copied()));
        worst = worst.max(if scale > 0.0 { diff / scale } else { f64::INFINITY });
    }
    worst
}

// 4
fn gradient_correctness(_: &mut Shared) -> Result<String, String> {
    let start = Instant::now();
    let framing = SegmentalConfig::standard();
    // 768 samples: three frames of the standard framing
    let x = [random_wave(768, 41, 0.5), random_wave(768, 42, 0.5)];
    let s = [random_wave(768, 43, 0.3), random_wave(768, 44, 0.3)];
    let xr: Vec<&Waveform> = x.iter().collect();
    let sr: Vec<&Waveform> = s.iter().collect();
    let mask = ModelParams::init(GruConfig::mask_estimator(4), 45).unwrap();
    let mut errors = Vec::new();
    for loss in [
        WaveformLoss::TimeDomain,
        WaveformLoss::Segmental(ndarray::array![[0.9, 0.2, 0.5], [0.1, 0.7, 0.99]]),
    ] {
        let (_, g) = mask_loss_and_gradients(&mask, &xr, &sr, &loss, &framing).unwrap();
        errors.push(fd_error(&mask, &g, |p| {
            mask_loss_and_gradients(p, &xr, &sr, &loss, &framing).unwrap().0
        }));
    }
    let predictor = ModelParams::init(GruConfig::snr_predictor(4, 2), 46).unwrap();
    let labels: [&[f64]; 2] = [&[3.0, -10.0, 25.0], &[0.5, 1.5, -2.0]];
    let (_, g) = regression_loss_and_gradients(&predictor, &xr, &labels, &framing).unwrap();
    errors.push(fd_error(&predictor, &g, |p| {
        regression_loss_and_gradients(p, &xr, &labels, &framing).unwrap().0
    }));
    let secs = start.elapsed().as_secs_f64();
    let worst = errors.iter().fold(0.0f64, |m, &e| m.max(e));
    ensure(
        worst < 1e-4 && secs < 60.0,
        format!(
            "worst relative error mask/time {:.1e}, mask/segmental {:.1e}, predictor {:.1e} (< 1e-4), {secs:.1}s (< 60s)",
            errors[0], errors[1], errors[2]
        ),
    )
}

/// Zero-padded windowed frame, written out independently of the library.
fn oracle_frame(x: &[f64], j: usize, n: usize, hop: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos();
            w * x.get(j * hop + k).copied().unwrap_or(0.0)
        })
        .collect()
}

fn oracle_segsnr(s: &[f64], y: &[f64], n: usize, hop: usize) -> Vec<f64> {
    let frames = s.len().div_ceil(hop);
    (0..frames)
        .map(|j| {
            let fs = oracle_frame(s, j, n, hop);
            let fy = oracle_frame(y, j, n, hop);
            let sig: f64 = fs.iter().map(|v| v * v).sum();
            let res: f64 = fs.iter().zip(&fy).map(|(a, b)| (a - b) * (a - b)).sum();
            if sig < 1e-12 && res < 1e-12 {
                0.0
            } else if res < 1e-12 {
                30.0
            } else {
                (10.0 * (sig / res).log10()).clamp(-30.0, 30.0)
            }
        })
        .collect()
}

fn oracle_segmse(s: &[f64], y: &[f64], p: &[f64], n: usize, hop: usize) -> f64 {
    let total: f64 = p
        .iter()
        .enumerate()
        .map(|(j, pj)| {
            let fs = oracle_frame(s, j, n, hop);
            let fy = oracle_frame(y, j, n, hop);
            pj * fs.iter().zip(&fy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
        })
        .sum();
    total / p.len() as f64
}

fn oracle_si_sdr(s: &[f64], y: &[f64]) -> f64 {
    let alpha = s.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / s.iter().map(|a| a * a).sum::<f64>();
    let target: Vec<f64> = s.iter().map(|a| alpha * a).collect();
    let err: Vec<f64> = y.iter().zip(&target).map(|(b, t)| b - t).collect();
    let db = 10.0 * (target.iter().map(|v| v * v).sum::<f64>() / err.iter().map(|v| v * v).sum::<f64>()).log10();
    db.clamp(-60.0, 60.0)
}

// 5
fn metric_oracles(_: &mut Shared) -> Result<String, String> {
    let framing = SegmentalConfig::standard();
    let (n, hop) = (framing.frame_size(), framing.hop());
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut snr_err, mut mse_err, mut sdr_err, mut uniform_err) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
    for pair in 0..50u64 {
        let len = rng.gen_range(2_000..20_000);
        let s = random_wave(len, 500 + pair, 1.0);
        // estimates from nearly exact to mostly noise so both clamps are exercised
        let noise_amp = 10f64.powf(rng.gen_range(-3.0..1.5));
        let noise = random_wave(len, 600 + pair, noise_amp);
        let y = s.add(&noise).unwrap();
        let (sv, yv) = (s.samples(), y.samples());

        let lib = segmental_snr(&s, &y, &framing).unwrap();
        for (a, b) in lib.values().iter().zip(oracle_segsnr(sv, yv, n, hop)) {
            snr_err = snr_err.max(rel(*a, b));
        }
        let p: Vec<f64> = (0..lib.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        mse_err = mse_err.max(rel(
            segmental_mse(&s, &y, &p, &framing).unwrap(),
            oracle_segmse(sv, yv, &p, n, hop),
        ));
        sdr_err = sdr_err.max(rel(si_sdr(&s, &y).unwrap(), oracle_si_sdr(sv, yv)));

        let frames = lib.len();
        let frame_mses: Vec<f64> = (0..frames)
            .map(|j| {
                let (fs, fy) = (oracle_frame(sv, j, n, hop), oracle_frame(yv, j, n, hop));
                fs.iter().zip(&fy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
            })
            .collect();
        let mean_frame_mse = frame_mses.iter().sum::<f64>() / frames as f64;
        let uniform = segmental_mse(&s, &y, &vec![1.0; frames], &framing).unwrap();
        uniform_err = uniform_err.max(rel(uniform, mean_frame_mse));
    }
    ensure(
        snr_err < 1e-9 && mse_err < 1e-9 && sdr_err < 1e-9 && uniform_err < 1e-9,
        format!(
            "max relative error SegSNR {snr_err:.1e}, SegMSE {mse_err:.1e}, SI-SDR {sdr_err:.1e}, uniform SegMSE {uniform_err:.1e} (< 1e-9)"
        ),
    )
}

const PREDICTOR_HIDDEN: usize = 32;
const PREDICTOR_STEPS: usize = 1500;
const BATCH: usize = 8;

fn trained_predictor(shared: &mut Shared) -> (ModelParams, Vec<f64>, Duration) {
    let start = Instant::now();
    let c = shared.corpora();
    let mut config = TrainConfig::new(TrainMode::SnrPredictor, GruConfig::snr_predictor(PREDICTOR_HIDDEN, 2), 5);
    config.steps = PREDICTOR_STEPS;
    config.batch_size = BATCH;
    let outcome = train_snr_predictor(&config, &c.generalist, &c.train_noise).unwrap();
    let baseline = outcome.frame_target_means.unwrap();
    let elapsed = start.elapsed();
    shared.predictor = Some((outcome.params.clone(), elapsed));
    (outcome.params, baseline, elapsed)
}

// 6
fn predictor_utility(shared: &mut Shared) -> Result<String, String> {
    let (params, baseline, elapsed) = trained_predictor(shared);
    let c = shared.corpora();
    let v = validate_snr_predictor(&params, &c.unseen_speech, &c.eval_noise, &MixSpec::default(), 64, 99, &baseline)
        .unwrap();
    let secs = elapsed.as_secs_f64();
    ensure(
        v.ratio() < 0.7 && secs < 600.0,
        format!(
            "validation MSE {:.2} vs best constant {:.2}: ratio {:.3} (< 0.7) on an unseen speaker and held-out noise, trained in {secs:.0}s (< 600s)",
            v.mse,
            v.baseline_mse,
            v.ratio()
        ),
    )
}

const MASK_HIDDEN: usize = 32;
const PSE_STEPS: usize = 600;
const REPETITIONS: u64 = 5;
const EVAL_MIXTURES: usize = 32;

// 7
fn purification_ordering(shared: &mut Shared) -> Result<String, String> {
    let start = Instant::now();
    if shared.predictor.is_none() {
        trained_predictor(shared);
    }
    let (predictor, predictor_time) = shared.predictor.clone().unwrap();
    let c = shared.corpora();
    let mut totals = [0.0f64; 3];
    let mut runs = 0.0;
    for speaker in 0..3u32 {
        let (train, test) = speaker_split(speaker);
        check_disjoint(&[&train], &[&test]).map_err(|e| e.to_string())?;
        for rep in 0..REPETITIONS {
            let seed = derive_seed(700, &[speaker as u64, rep]);
            let mut config = TrainConfig::new(TrainMode::Pse, GruConfig::mask_estimator(MASK_HIDDEN), seed);
            config.steps = PSE_STEPS;
            config.batch_size = BATCH;
            assert_eq!(config.mix.premix_snr, SnrRange::new(0.0, 15.0).unwrap());
            let init = initial_params(&config).unwrap();
            let weightings = [Weighting::TimeDomain, Weighting::Predictor(&predictor), Weighting::Oracle];
            for (slot, weighting) in weightings.into_iter().enumerate() {
                let mut run = config.clone();
                if slot > 0 {
                    run.mode = TrainMode::PseDp;
                }
                let out = train_pse_weighted(&run, &train, &c.premix_noise, &c.train_noise, init.clone(), weighting)
                    .unwrap();
                let result = evaluate(&out.params, &test, &c.eval_noise, &EvalSpec::new(EVAL_MIXTURES, seed)).unwrap();
                totals[slot] += result.mean_improvement();
            }
            runs += 1.0;
        }
    }
    let [pse, dp, oracle] = totals.map(|t| t / runs);
    let secs = (start.elapsed() + predictor_time).as_secs_f64();
    ensure(
        dp >= pse && oracle - pse > 0.2 && secs < 3600.0,
        format!(
            "mean SI-SDRi over {runs} runs: PSE {pse:.3} dB, PSE+DP {dp:.3} dB (>= PSE), oracle weights {oracle:.3} dB (PSE + {:.3} > 0.2), {secs:.0}s incl. predictor (< 3600s)",
            oracle - pse
        ),
    )
}

// 8
fn degenerate_limits(_: &mut Shared) -> Result<String, String> {
    let (speech, premix, noise) = common::tiny_corpora();
    let mut config = TrainConfig::new(TrainMode::PseDp, GruConfig::mask_estimator(16), 81);
    config.steps = 40;
    config.batch_size = 4;
    let init = initial_params(&config).unwrap();
    let saturated = train_pse_weighted(&config, &speech, &premix, &noise, init.clone(), Weighting::ConstantLogit(30.0))
        .unwrap();
    let uniform = train_pse_weighted(&config, &speech, &premix, &noise, init, Weighting::Uniform).unwrap();
    let worst_uniform = saturated
        .report
        .loss_trace
        .iter()
        .zip(&uniform.report.loss_trace)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0f64, f64::max);

    // matched seeds and the same speech, so each step draws the same clips,
    // training noise and mixture SNR in both runs
    let mut pse = TrainConfig::new(TrainMode::Pse, GruConfig::mask_estimator(16), 82);
    pse.steps = 100;
    pse.batch_size = 4;
    pse.mix.premix_snr = SnrRange::fixed(60.0);
    let mut se = pse.clone();
    se.mode = TrainMode::Se;
    let init = initial_params(&pse).unwrap();
    let p = train_pse_weighted(&pse, &speech, &premix, &noise, init.clone(), Weighting::TimeDomain).unwrap();
    let s = train_se(&se, &speech.clone().with_role(CorpusRole::GeneralistSpeech).unwrap(), &noise, init).unwrap();
    let worst_se = p
        .report
        .loss_trace
        .iter()
        .zip(&s.report.loss_trace)
        .map(|(a, b)| (a - b).abs() / b.abs())
        .fold(0.0f64, f64::max);
    ensure(
        worst_uniform < 1e-6 && worst_se < 0.1,
        format!(
            "+30 dB constant vs uniform: worst per-step relative loss gap {worst_uniform:.1e} (< 1e-6); +60 dB premixtures vs SE: {:.2}% (< 10%)",
            100.0 * worst_se
        ),
    )
}

// 9
fn determinism(_: &mut Shared) -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::cli_dataset(dir.path());
    let cfg = path_str(&cfg).to_string();
    let run_dir = |name: &str, rep: u32| dir.path().join(format!("{name}_{rep}"));
    let mut compared = 0;
    let steps: [(&str, &[&str]); 6] = [
        ("snr-predictor", &[]),
        ("se", &[]),
        ("pse", &[]),
        ("pse-dp", &["--snr-predictor", "PRED"]),
        ("se-pse", &["--se-checkpoint", "SE"]),
        ("se-pse-dp", &["--se-checkpoint", "SE", "--snr-predictor", "PRED"]),
    ];
    let pred = run_dir("snr-predictor", 0).join("model.psec");
    let se = run_dir("se", 0).join("model.psec");
    for (mode, extra) in steps {
        for rep in 0..2 {
            let out = run_dir(mode, rep);
            let mut argv = vec!["train", "--mode", mode, "--config", &cfg, "--seed", "17", "--out", path_str(&out)];
            for a in extra {
                argv.push(match *a {
                    "PRED" => path_str(&pred),
                    "SE" => path_str(&se),
                    other => other,
                });
            }
            if run_cli(&argv) != 0 {
                return Err(format!("train --mode {mode} failed"));
            }
        }
        let a = fs::read(run_dir(mode, 0).join("model.psec")).unwrap();
        let b = fs::read(run_dir(mode, 1).join("model.psec")).unwrap();
        if a != b {
            return Err(format!("train --mode {mode}: checkpoints differ"));
        }
        compared += 1;
    }
    for mode in ["se", "pse", "se-pse-dp"] {
        let ckpt = run_dir(mode, 0).join("model.psec");
        let mut csvs = Vec::new();
        for rep in 0..2 {
            let out = dir.path().join(format!("eval_{mode}_{rep}"));
            let code = run_cli(&[
                "evaluate",
                "--checkpoint",
                path_str(&ckpt),
                "--config",
                &cfg,
                "--seed",
                "23",
                "--out",
                path_str(&out),
            ]);
            if code != 0 {
                return Err(format!("evaluate {mode} failed"));
            }
            csvs.push(fs::read(out.join("results.csv")).unwrap());
        }
        if csvs[0] != csvs[1] {
            return Err(format!("evaluate {mode}: CSVs differ"));
        }
        compared += 1;
    }
    Ok(format!(
        "{compared} repeated commands (6 train modes, 3 evaluations) produced bit-identical checkpoints and CSVs"
    ))
}

// 10
fn privacy(_: &mut Shared) -> Result<String, String> {
    let (speech, premix, noise) = common::tiny_corpora();
    let stream = ExampleStream::new(MixSpec::default(), 91).unwrap();
    // the same (input, target) pairs with three different hidden clean signals
    let source = |variant: u64| {
        let stream = stream.clone();
        let (speech, premix, noise) = (&speech, &premix, &noise);
        move |draw: u64| -> pse::Result<PseExample> {
            let e = stream.pse_example(speech, premix, noise, draw)?;
            let len = e.target().len();
            let hidden = match variant {
                0 => e.hidden_clean_for_evaluation().clone(),
                1 => Waveform::zeros(len)?,
                _ => random_wave(len, draw + 1, 1.0),
            };
            let pair = TrainingPair::new(e.input().clone(), e.target().clone())?;
            PseExample::new(pair, e.injected_noise().clone(), hidden)
        }
    };
    let mut pcfg = TrainConfig::new(TrainMode::SnrPredictor, GruConfig::snr_predictor(8, 2), 92);
    pcfg.steps = 0;
    let predictor = initial_params(&pcfg).unwrap();
    let mut config = TrainConfig::new(TrainMode::PseDp, GruConfig::mask_estimator(8), 93);
    config.steps = 5;
    config.batch_size = 2;
    let init = initial_params(&config).unwrap();
    let fingerprint = |weighting: Weighting, variant: u64| {
        let out = train_pse_from_source(&config, init.clone(), weighting, source(variant)).unwrap();
        encode_checkpoint(&out.params)
    };
    for (name, weighting) in [
        ("PSE", Weighting::TimeDomain),
        ("PSE+DP", Weighting::Predictor(&predictor)),
    ] {
        let runs: Vec<_> = (0..3).map(|v| fingerprint(weighting, v)).collect();
        if runs[0] != runs[1] || runs[0] != runs[2] {
            return Err(format!("{name} training changed when only the hidden clean signal changed"));
        }
    }
    // the oracle weighting does read the clean signal, so the swap must show up there
    if fingerprint(Weighting::Oracle, 0) == fingerprint(Weighting::Oracle, 1) {
        return Err("swap went undetected for the oracle weighting; the check is not sensitive".into());
    }
    // purification weights depend on the premixture alone
    let e = source(0)(0).unwrap();
    let weights = pse::training::frame_weights(Weighting::Predictor(&predictor), &e, &SegmentalConfig::standard())
        .unwrap()
        .unwrap();
    let from_target = forward_snr(&predictor, e.target()).unwrap();
    let expected: Vec<f64> = from_target.iter().map(|a| 1.0 / (1.0 + (-a).exp())).collect();
    let same = weights.iter().zip(&expected).all(|(a, b)| rel_close(*a, *b, 1e-12));
    ensure(
        same,
        "PSE and PSE+DP checkpoints are bit-identical under three different hidden clean signals; the oracle control differs; DP weights come from the premixture only".into(),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 10] = [
        (1, "DSP round-trip", dsp_round_trip),
        (2, "frame-count anchor", frame_count_anchor),
        (3, "parameter-count anchor", parameter_count_anchor),
        (4, "gradient correctness", gradient_correctness),
        (5, "metric oracles", metric_oracles),
        (6, "SNR predictor utility", predictor_utility),
        (7, "purification ordering", purification_ordering),
        (8, "degenerate-limit equivalences", degenerate_limits),
        (9, "determinism", determinism),
        (10, "privacy invariant", privacy),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failed = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| check(&mut shared)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
