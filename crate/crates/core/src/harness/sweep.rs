use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::cache::{self, Cache};
use super::config::{ExperimentConfig, Method, SystemSpec};
use super::plot::write_plot_data;
use super::HarnessError;
use crate::baselines::{c_amp, exhaustive_oracle, least_squares, ls_bomp, AmpConfig, BompConfig};
use crate::datagen::{generate_dataset, Dataset, SnrSpec};
use crate::metrics::{self, fmt_num, fmt_opt, Confusion, MetricRow};
use crate::nn::{evaluate, select_support, train, Architecture, History, Matrix, Model, SelectionPolicy, TrainConfig};
use crate::rng::{self, derive_seed, stream};
use crate::signal::{sample_frame, sample_frame_with_variance, Frame, MeasurementMatrix, System};

const FRAME_SHARD: usize = 1024;
const PREDICT_CHUNK: usize = 4096;

/// Suffix of the rows scored with the 0.5 threshold rule.
pub const THRESHOLD_SUFFIX: &str = "@thr0.5";

pub fn build_system(cfg: &ExperimentConfig) -> Result<System, HarnessError> {
    let s = &cfg.system;
    System::build(
        s.L,
        s.N,
        s.J,
        s.codebook_path.as_deref(),
        derive_seed(cfg.data.seed, &[stream::PILOTS]),
    )
    .map_err(|e| HarnessError::Config(format!("system: {e}")))
}

/// Identity of the system for cache keys: a codebook file counts by content.
#[derive(Serialize)]
struct SystemKey<'a> {
    spec: &'a SystemSpec,
    codebook_sha256: Option<String>,
    pilot_seed: u64,
}

fn system_key(cfg: &ExperimentConfig) -> Result<serde_json::Value, HarnessError> {
    let codebook_sha256 = match &cfg.system.codebook_path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| HarnessError::io(p, e))?;
            Some(cache::key("codebook", &bytes))
        }
        None => None,
    };
    Ok(serde_json::to_value(SystemKey {
        spec: &cfg.system,
        codebook_sha256,
        pilot_seed: derive_seed(cfg.data.seed, &[stream::PILOTS]),
    })
    .expect("serializable"))
}

pub fn train_snr(cfg: &ExperimentConfig) -> SnrSpec {
    let [low, high] = cfg.data.snr_train_range;
    if low == high {
        SnrSpec::Fixed(low)
    } else {
        SnrSpec::Uniform { low, high }
    }
}

/// Training, validation and test splits of one fixed-m corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub m: usize,
    pub key: String,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Option<Dataset>,
    pub cache_hit: bool,
}

pub fn build_corpus(cfg: &ExperimentConfig, sys: &System, m: usize, cache: &Cache) -> Result<Corpus, HarnessError> {
    let d = &cfg.data;
    let count = d.train_count + d.val_count + d.test_count;
    let seed = derive_seed(d.seed, &[stream::DATASET, m as u64]);
    let snr = train_snr(cfg);
    let key = cache::key(
        "corpus",
        &(system_key(cfg)?, m, snr, count, seed),
    );
    let (ds, cache_hit) = match cache.load_dataset(&key) {
        Some(ds) => {
            log::info!("cache hit: corpus m={m} ({key})");
            (ds, true)
        }
        None => {
            log::info!("generating {count} samples with m={m}");
            let ds = generate_dataset(&sys.phi, m, snr, count, seed).map_err(|e| HarnessError::Stage(e.to_string()))?;
            cache.store_dataset(&key, &ds)?;
            (ds, false)
        }
    };
    let (train, val, test) = ds
        .split(d.train_count, d.val_count, d.test_count)
        .map_err(|e| HarnessError::Stage(e.to_string()))?;
    Ok(Corpus {
        m,
        key,
        train,
        val,
        test: (d.test_count > 0).then_some(test),
        cache_hit,
    })
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub method: Method,
    pub m_train: usize,
    pub model: Model<f32>,
    pub history: History,
    pub cache_hit: bool,
}

impl TrainedModel {
    /// File stem, e.g. `dff_m2`.
    pub fn slug(&self) -> String {
        model_slug(self.method, self.m_train)
    }
}

pub fn model_slug(method: Method, m_train: usize) -> String {
    let arch = match method.architecture() {
        Some(Architecture::Dff) => "dff",
        Some(Architecture::ResNet) => "resnet",
        None => "none",
    };
    format!("{arch}_m{m_train}")
}

pub fn train_model(cfg: &ExperimentConfig, method: Method, corpus: &Corpus, cache: &Cache) -> Result<TrainedModel, HarnessError> {
    let arch = method
        .architecture()
        .ok_or_else(|| HarnessError::Stage(format!("{} is not a network", method.label())))?;
    let spec = match arch {
        Architecture::Dff => &cfg.models.dff,
        Architecture::ResNet => &cfg.models.resnet,
    };
    let s = &cfg.system;
    let model_cfg = spec.model_config(arch, 2 * s.L, s.N);
    let arch_id = arch as u64;
    let init_seed = derive_seed(cfg.data.seed, &[stream::INIT, arch_id, corpus.m as u64]);
    let train_cfg = TrainConfig {
        batch_size: cfg.train.batch_size,
        epochs: cfg.train.epochs,
        adam: cfg.train.adam,
        seed: derive_seed(cfg.data.seed, &[stream::TRAIN, arch_id, corpus.m as u64]),
    };
    let key = cache::key(
        "model",
        &(&corpus.key, cfg.data.train_count, cfg.data.val_count, &model_cfg, &train_cfg, init_seed),
    );
    if let Some((model, history)) = cache.load_model(&key) {
        log::info!("cache hit: {} trained on m={} ({key})", method.label(), corpus.m);
        return Ok(TrainedModel {
            method,
            m_train: corpus.m,
            model,
            history,
            cache_hit: true,
        });
    }
    log::info!("training {} on m={} ({} samples)", method.label(), corpus.m, corpus.train.len());
    let model = Model::<f32>::new(model_cfg, init_seed).map_err(|e| HarnessError::Config(e.to_string()))?;
    let (model, history) =
        train(model, &corpus.train, &corpus.val, &train_cfg).map_err(|e| HarnessError::Stage(format!("training: {e}")))?;
    cache.store_model(&key, &model, &history)?;
    Ok(TrainedModel {
        method,
        m_train: corpus.m,
        model,
        history,
        cache_hit: false,
    })
}

/// `count` frames at one sweep point; sharded so the result does not
/// depend on the worker count.
pub fn test_frames(phi: &MeasurementMatrix, m: usize, snr_db: f64, count: usize, seed: u64) -> Result<Vec<Frame>, HarnessError> {
    let shards = count.div_ceil(FRAME_SHARD);
    let parts: Vec<Vec<Frame>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let len = FRAME_SHARD.min(count - shard * FRAME_SHARD);
            let mut r = rng::stream_rng(derive_seed(seed, &[shard as u64]), stream::SWEEP);
            (0..len).map(|_| sample_frame(phi, m, snr_db, &mut r)).collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Stage(e.to_string()))?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn point_seed(seed: u64, m: usize, snr_db: f64) -> u64 {
    derive_seed(seed, &[stream::SWEEP, m as u64, snr_db.to_bits()])
}

/// Anything that maps an observation to a support estimate.
#[derive(Debug, Clone, Copy)]
pub enum Detector<'a> {
    /// Sigmoid scores of a trained network, reduced by a selection rule.
    Network(&'a Model<f32>, SelectionPolicy),
    /// Greedy search given the number of active devices.
    LsBomp,
    CAmp(AmpConfig),
    /// Exhaustive least squares given the number of active devices.
    Oracle,
    /// Reports the true support; a sanity check for the bookkeeping.
    Genie,
}

/// Scores of one sweep point for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub row: MetricRow,
    /// Fraction of frames whose estimated support is exactly right.
    pub exact_rate: f64,
}

type Decision = (Vec<bool>, Vec<f64>);

fn magnitudes(g: &DVector<Complex64>) -> Vec<f64> {
    g.iter().map(|v| if v.is_finite() { v.norm() } else { 0.0 }).collect()
}

fn membership(n: usize, support: &[usize]) -> Vec<bool> {
    (0..n).map(|k| support.contains(&k)).collect()
}

fn decide(detector: &Detector, phi: &MeasurementMatrix, frames: &[Frame], m: usize) -> Result<Vec<Decision>, HarnessError> {
    let n = phi.num_devices();
    let stage = |e: crate::baselines::SolverError| HarnessError::Stage(e.to_string());
    match *detector {
        Detector::Network(model, policy) => {
            let l = phi.num_resources();
            let mut out = Vec::with_capacity(frames.len());
            for chunk in frames.chunks(PREDICT_CHUNK) {
                let mut x = Vec::with_capacity(chunk.len() * 2 * l);
                for f in chunk {
                    x.extend(f.y.iter().map(|v| v.re as f32));
                    x.extend(f.y.iter().map(|v| v.im as f32));
                }
                let probs = model
                    .predict(&Matrix::from_vec(chunk.len(), 2 * l, x))
                    .map_err(|e| HarnessError::Stage(e.to_string()))?;
                for r in 0..chunk.len() {
                    let p: Vec<f64> = probs.row(r).iter().map(|&v| v as f64).collect();
                    let est = select_support(&p, policy).map_err(|e| HarnessError::Stage(e.to_string()))?;
                    out.push((est.as_slice().to_vec(), p));
                }
            }
            Ok(out)
        }
        Detector::LsBomp => frames
            .par_iter()
            .map(|f| {
                let o = ls_bomp(phi, &f.y, &BompConfig::singletons(m)).map_err(stage)?;
                Ok((membership(n, &o.support), magnitudes(&o.estimate)))
            })
            .collect(),
        Detector::CAmp(cfg) => frames
            .par_iter()
            .map(|f| {
                let o = c_amp(phi, &f.y, &cfg).map_err(stage)?;
                let scores = if o.diverged { vec![0.0; n] } else { magnitudes(&o.estimate) };
                Ok((membership(n, &o.support), scores))
            })
            .collect(),
        Detector::Oracle => frames
            .par_iter()
            .map(|f| {
                let o = exhaustive_oracle(phi, &f.y, m).map_err(stage)?;
                let fit = least_squares(phi.matrix(), &o.support, &f.y);
                let mut scores = vec![0.0; n];
                for (&k, c) in o.support.iter().zip(fit.coefficients.iter()) {
                    scores[k] = c.norm();
                }
                Ok((membership(n, &o.support), scores))
            })
            .collect(),
        Detector::Genie => Ok(frames
            .iter()
            .map(|f| {
                let t = f.activity.as_slice().to_vec();
                let s = t.iter().map(|&a| a as u8 as f64).collect();
                (t, s)
            })
            .collect()),
    }
}

/// Runs `detector` on every frame and reduces the decisions in frame order.
pub fn evaluate_method(
    detector: &Detector,
    label: &str,
    phi: &MeasurementMatrix,
    frames: &[Frame],
    snr_db: f64,
    m: usize,
) -> Result<PointResult, HarnessError> {
    if frames.is_empty() {
        return Err(HarnessError::Stage("no frames to evaluate".into()));
    }
    let decisions = decide(detector, phi, frames, m)?;
    let mut conf = Confusion::default();
    let mut scores = Vec::with_capacity(frames.len() * phi.num_devices());
    let mut labels = Vec::with_capacity(scores.capacity());
    let mut exact = 0usize;
    for (f, (est, s)) in frames.iter().zip(decisions) {
        conf.accumulate_slots(f.activity.as_slice(), &est)
            .map_err(|e| HarnessError::Stage(e.to_string()))?;
        exact += (est.as_slice() == f.activity.as_slice()) as usize;
        scores.extend(s);
        labels.extend_from_slice(f.activity.as_slice());
    }
    let auc = metrics::auc(&scores, &labels).ok();
    Ok(PointResult {
        row: MetricRow::from_confusion(snr_db, m, label, &conf, auc, frames.len() as u64),
        exact_rate: exact as f64 / frames.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactRow {
    pub snr_db: f64,
    pub m: usize,
    pub method: String,
    pub exact_rate: f64,
    pub frames: u64,
}

pub const EXACT_HEADER: &str = "snr_db,m,method,exact_rate,frames";

pub fn exact_csv(rows: &[ExactRow]) -> String {
    let mut out = format!("{EXACT_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{:.6},{}", fmt_num(r.snr_db), r.m, r.method, r.exact_rate, r.frames);
    }
    out
}

/// Metric rows in sweep order: m, then SNR, then method as configured,
/// each network followed by its threshold-rule row.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    sys: &System,
    models: &[TrainedModel],
) -> Result<(Vec<MetricRow>, Vec<ExactRow>), HarnessError> {
    let mut rows = Vec::new();
    let mut exact = Vec::new();
    for &m in &cfg.sweep.m {
        for &snr in &cfg.sweep.snr_db {
            let frames = test_frames(&sys.phi, m, snr, cfg.sweep.frames_per_point, point_seed(cfg.data.seed, m, snr))?;
            let mut record = |result: PointResult| {
                exact.push(ExactRow {
                    snr_db: snr,
                    m,
                    method: result.row.method.clone(),
                    exact_rate: result.exact_rate,
                    frames: result.row.frames,
                });
                rows.push(result.row);
            };
            for &method in &cfg.methods {
                match method {
                    Method::Dff | Method::ResNet => {
                        let m_train = cfg.training_m(m);
                        let trained = models
                            .iter()
                            .find(|t| t.method == method && t.m_train == m_train)
                            .ok_or_else(|| HarnessError::Stage(format!("no trained {} for m={m_train}", method.label())))?;
                        let top = Detector::Network(&trained.model, SelectionPolicy::TopM(m));
                        record(evaluate_method(&top, method.label(), &sys.phi, &frames, snr, m)?);
                        if cfg.sweep.threshold_variants {
                            let thr = Detector::Network(&trained.model, SelectionPolicy::Threshold(0.5));
                            let label = format!("{}{THRESHOLD_SUFFIX}", method.label());
                            record(evaluate_method(&thr, &label, &sys.phi, &frames, snr, m)?);
                        }
                    }
                    Method::LsBomp => record(evaluate_method(&Detector::LsBomp, method.label(), &sys.phi, &frames, snr, m)?),
                    Method::CAmp => record(evaluate_method(&Detector::CAmp(cfg.amp), method.label(), &sys.phi, &frames, snr, m)?),
                    Method::Oracle => record(evaluate_method(&Detector::Oracle, method.label(), &sys.phi, &frames, snr, m)?),
                }
            }
            log::info!("swept m={m}, snr={snr} dB");
        }
    }
    Ok((rows, exact))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub use_cache: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { use_cache: true }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: Vec<MetricRow>,
    pub exact: Vec<ExactRow>,
    pub models: Vec<TrainedModel>,
    pub files: Vec<PathBuf>,
    pub corpus_cache_hits: usize,
    pub model_cache_hits: usize,
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf, HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Corpora for every training `m` the sweep needs.
pub fn build_corpora(cfg: &ExperimentConfig, sys: &System, cache: &Cache) -> Result<Vec<Corpus>, HarnessError> {
    cfg.training_ms().into_iter().map(|m| build_corpus(cfg, sys, m, cache)).collect()
}

/// Trains (or loads) every configured network on every corpus and writes
/// `history_<model>.csv` plus a held-out summary into `out`.
pub fn train_all(
    cfg: &ExperimentConfig,
    corpora: &[Corpus],
    cache: &Cache,
    out: &Path,
) -> Result<(Vec<TrainedModel>, Vec<PathBuf>), HarnessError> {
    ensure_dir(out)?;
    let mut models = Vec::new();
    let mut files = Vec::new();
    let mut summary = String::from("model,m_train,best_epoch,test_loss,test_pd,test_ppv,test_auc\n");
    for corpus in corpora {
        for &method in cfg.methods.iter().filter(|m| m.architecture().is_some()) {
            let trained = train_model(cfg, method, corpus, cache)?;
            files.push(write_file(&out.join(format!("history_{}.csv", trained.slug())), &trained.history.to_csv())?);
            if let Some(test) = &corpus.test {
                let eval = evaluate(&trained.model, test, SelectionPolicy::TopM(corpus.m))
                    .map_err(|e| HarnessError::Stage(e.to_string()))?;
                let _ = writeln!(
                    summary,
                    "{},{},{},{:.6},{},{},{}",
                    trained.slug(),
                    corpus.m,
                    trained.history.best_epoch,
                    eval.loss,
                    fmt_opt(eval.confusion.pd()),
                    fmt_opt(eval.confusion.ppv()),
                    fmt_opt(eval.auc)
                );
            }
            models.push(trained);
        }
    }
    if !models.is_empty() {
        files.push(write_file(&out.join("model_summary.csv"), &summary)?);
    }
    Ok((models, files))
}

/// Whole pipeline: corpora, training, sweep, result and plot files.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    ensure_dir(&out)?;
    let cache = Cache::new(cfg.cache_dir(), opts.use_cache);
    let sys = build_system(cfg)?;

    let needs_models = cfg.methods.iter().any(|m| m.architecture().is_some());
    let corpora = if needs_models { build_corpora(cfg, &sys, &cache)? } else { Vec::new() };
    let (models, mut files) = train_all(cfg, &corpora, &cache, &out)?;

    let (rows, exact) = run_sweep(cfg, &sys, &models)?;
    files.push(write_file(&out.join("results.csv"), &metrics::write_csv(&rows))?);
    files.push(write_file(&out.join("exact_recovery.csv"), &exact_csv(&exact))?);
    for fig in cfg.figures() {
        files.push(write_plot_data(&rows, fig, &out)?);
    }
    Ok(RunReport {
        rows,
        exact,
        corpus_cache_hits: corpora.iter().filter(|c| c.cache_hit).count(),
        model_cache_hits: models.iter().filter(|m| m.cache_hit).count(),
        models,
        files,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheckRow {
    pub m: usize,
    pub frames: usize,
    /// Frames where the exhaustive search returns the true support.
    pub oracle_exact: f64,
    /// Frames where LS-BOMP returns the exhaustive search's support.
    pub bomp_agreement: f64,
}

/// Noiseless identifiability of the configured system.
pub fn oracle_check(phi: &MeasurementMatrix, ms: &[usize], frames: usize, seed: u64) -> Result<Vec<OracleCheckRow>, HarnessError> {
    ms.iter()
        .map(|&m| {
            let shards = frames.div_ceil(FRAME_SHARD);
            let counts: Vec<(usize, usize)> = (0..shards)
                .into_par_iter()
                .map(|shard| {
                    let len = FRAME_SHARD.min(frames - shard * FRAME_SHARD);
                    let mut r = rng::stream_rng(derive_seed(seed, &[m as u64, shard as u64]), stream::ORACLE);
                    let (mut exact, mut agree) = (0, 0);
                    for _ in 0..len {
                        let f = sample_frame_with_variance(phi, m, 0.0, &mut r).map_err(|e| HarnessError::Stage(e.to_string()))?;
                        let o = exhaustive_oracle(phi, &f.y, m).map_err(|e| HarnessError::Stage(e.to_string()))?;
                        let b = ls_bomp(phi, &f.y, &BompConfig::singletons(m)).map_err(|e| HarnessError::Stage(e.to_string()))?;
                        exact += (o.support == f.activity.support()) as usize;
                        agree += (b.support == o.support) as usize;
                    }
                    Ok((exact, agree))
                })
                .collect::<Result<_, HarnessError>>()?;
            let (exact, agree) = counts.iter().fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
            Ok(OracleCheckRow {
                m,
                frames,
                oracle_exact: exact as f64 / frames as f64,
                bomp_agreement: agree as f64 / frames as f64,
            })
        })
        .collect()
}

pub fn oracle_check_csv(rows: &[OracleCheckRow]) -> String {
    let mut out = String::from("m,frames,oracle_exact,bomp_agreement\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", r.m, r.frames, r.oracle_exact, r.bomp_agreement);
    }
    out
}
