use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baselines::AmpConfig;
use crate::nn::{AdamConfig, Architecture, ModelConfig};
use crate::signal::binomial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SystemSpec {
    pub L: usize,
    pub N: usize,
    pub J: usize,
    #[serde(default)]
    pub codebook_path: Option<PathBuf>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            L: 4,
            N: 6,
            J: 2,
            codebook_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    /// Active devices in the training corpus; `None` trains one model per
    /// swept `m`.
    pub m_train: Option<usize>,
    /// Per-sample training SNR range in dB; equal ends mean a fixed SNR.
    pub snr_train_range: [f64; 2],
    pub seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            train_count: 80_000,
            val_count: 10_000,
            test_count: 10_000,
            m_train: None,
            snr_train_range: [0.0, 30.0],
            seed: 1,
        }
    }
}

/// Architecture-independent network shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSpec {
    pub hidden_width: usize,
    pub depth: usize,
    pub dropout: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl NetSpec {
    fn paper(depth: usize) -> Self {
        let d = ModelConfig::dff(1, 1);
        Self {
            hidden_width: d.hidden_width,
            depth,
            dropout: d.dropout,
            bn_epsilon: d.bn_epsilon,
            bn_momentum: d.bn_momentum,
        }
    }

    pub fn model_config(&self, architecture: Architecture, input_dim: usize, output_dim: usize) -> ModelConfig {
        ModelConfig {
            architecture,
            input_dim,
            output_dim,
            hidden_width: self.hidden_width,
            depth: self.depth,
            dropout: self.dropout,
            bn_epsilon: self.bn_epsilon,
            bn_momentum: self.bn_momentum,
        }
    }
}

impl Default for NetSpec {
    fn default() -> Self {
        Self::paper(12)
    }
}

fn resnet_default() -> NetSpec {
    NetSpec::paper(9)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSpec {
    #[serde(default)]
    pub dff: NetSpec,
    #[serde(default = "resnet_default")]
    pub resnet: NetSpec,
}

impl Default for ModelsSpec {
    fn default() -> Self {
        Self {
            dff: NetSpec::default(),
            resnet: resnet_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            epochs: 20,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub snr_db: Vec<f64>,
    pub m: Vec<usize>,
    #[serde(default = "default_frames")]
    pub frames_per_point: usize,
    /// Also score the networks with the 0.5 threshold rule.
    #[serde(default = "default_true")]
    pub threshold_variants: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            snr_db: (0..=6).map(|i| 5.0 * i as f64).collect(),
            m: vec![1, 2],
            frames_per_point: default_frames(),
            threshold_variants: true,
        }
    }
}

fn default_frames() -> usize {
    10_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DFF-AUD")]
    Dff,
    #[serde(rename = "ResNet-AUD")]
    ResNet,
    #[serde(rename = "LS-BOMP")]
    LsBomp,
    #[serde(rename = "C-AMP")]
    CAmp,
    /// Exhaustive least-squares search over all size-m supports.
    #[serde(rename = "LS-Oracle")]
    Oracle,
}

impl Method {
    pub const PAPER: [Method; 4] = [Method::Dff, Method::ResNet, Method::LsBomp, Method::CAmp];

    /// Name written to result files.
    pub fn label(self) -> &'static str {
        match self {
            Method::Dff => "DFF-AUD",
            Method::ResNet => "ResNet-AUD",
            Method::LsBomp => "LS-BOMP",
            // the soft-threshold variant, not necessarily the published one
            Method::CAmp => "C-AMP-soft",
            Method::Oracle => "LS-Oracle",
        }
    }

    pub fn architecture(self) -> Option<Architecture> {
        match self {
            Method::Dff => Some(Architecture::Dff),
            Method::ResNet => Some(Architecture::ResNet),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    PdVsSnr,
    PpvVsSnr,
    PdVsM,
    PmVsM,
}

impl FigureId {
    pub const ALL: [FigureId; 4] = [FigureId::PdVsSnr, FigureId::PpvVsSnr, FigureId::PdVsM, FigureId::PmVsM];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::PdVsSnr => "pd_vs_snr",
            FigureId::PpvVsSnr => "ppv_vs_snr",
            FigureId::PdVsM => "pd_vs_m",
            FigureId::PmVsM => "pm_vs_m",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn over_snr(self) -> bool {
        matches!(self, FigureId::PdVsSnr | FigureId::PpvVsSnr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub models: ModelsSpec,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default = "paper_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub amp: AmpConfig,
    /// Figures to emit; `None` emits every figure the sweep covers.
    #[serde(default)]
    pub figures: Option<Vec<FigureId>>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn paper_methods() -> Vec<Method> {
    Method::PAPER.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    /// Parses and validates; serde errors carry line and column.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let s = &self.system;
        if s.L == 0 || s.N == 0 || s.J == 0 || s.J > s.L {
            return Err(invalid("system", format!("need 1 <= J <= L and N >= 1 (L={}, N={}, J={})", s.L, s.N, s.J)));
        }
        if s.N as u128 > binomial(s.L, s.J) {
            return Err(invalid("system.N", format!("{} devices exceed C({}, {}) patterns", s.N, s.L, s.J)));
        }
        let d = &self.data;
        if d.train_count == 0 || d.val_count == 0 {
            return Err(invalid("data", "train_count and val_count must be positive"));
        }
        if let Some(m) = d.m_train {
            if m == 0 || m > s.N {
                return Err(invalid("data.m_train", format!("{m} outside 1..={}", s.N)));
            }
        }
        let [lo, hi] = d.snr_train_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid("data.snr_train_range", format!("[{lo}, {hi}] is not an ordered finite range")));
        }
        for (name, net, arch) in [
            ("models.dff", &self.models.dff, Architecture::Dff),
            ("models.resnet", &self.models.resnet, Architecture::ResNet),
        ] {
            net.model_config(arch, 2 * s.L, s.N)
                .validate()
                .map_err(|e| invalid(name, e))?;
        }
        let t = &self.train;
        if t.epochs == 0 {
            return Err(invalid("train.epochs", "must be at least 1"));
        }
        if t.batch_size < 2 || t.batch_size > d.train_count {
            return Err(invalid(
                "train.batch_size",
                format!("{} outside 2..={} (train_count)", t.batch_size, d.train_count),
            ));
        }
        if !(t.adam.learning_rate > 0.0) {
            return Err(invalid("train.adam.learning_rate", "must be positive"));
        }
        let w = &self.sweep;
        if w.snr_db.is_empty() || w.m.is_empty() {
            return Err(invalid("sweep", "snr_db and m lists must be non-empty"));
        }
        if w.frames_per_point == 0 {
            return Err(invalid("sweep.frames_per_point", "must be at least 1"));
        }
        if let Some(v) = w.snr_db.iter().find(|v| !v.is_finite()) {
            return Err(invalid("sweep.snr_db", format!("{v} is not finite")));
        }
        if let Some(&m) = w.m.iter().find(|&&m| m == 0 || m > s.N) {
            return Err(invalid("sweep.m", format!("{m} outside 1..={}", s.N)));
        }
        if has_duplicates(&w.m) || has_duplicates(&w.snr_db.iter().map(|v| v.to_bits()).collect::<Vec<_>>()) {
            return Err(invalid("sweep", "duplicate sweep values"));
        }
        if self.methods.is_empty() || has_duplicates(&self.methods) {
            return Err(invalid("methods", "must list each method at most once, at least one"));
        }
        if self.methods.contains(&Method::Oracle) && s.N > crate::baselines::ORACLE_MAX_DEVICES {
            return Err(invalid("methods", "LS-Oracle needs N <= 20"));
        }
        if self.amp.max_iters == 0 || !(self.amp.damping > 0.0 && self.amp.damping <= 1.0) || !(self.amp.tolerance > 0.0) {
            return Err(invalid("amp", "max_iters >= 1, damping in (0, 1], tolerance > 0"));
        }
        if let Some(figs) = &self.figures {
            for f in figs {
                let covered = if f.over_snr() { w.snr_db.len() >= 2 } else { w.m.len() >= 2 };
                if !covered {
                    return Err(invalid("figures", format!("{} needs at least two sweep values on its x axis", f.name())));
                }
            }
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    /// Training `m` for the models that serve sweep value `m`.
    pub fn training_m(&self, m: usize) -> usize {
        self.data.m_train.unwrap_or(m)
    }

    /// Distinct training `m` values, ascending.
    pub fn training_ms(&self) -> Vec<usize> {
        let mut ms: Vec<usize> = self.sweep.m.iter().map(|&m| self.training_m(m)).collect();
        ms.sort_unstable();
        ms.dedup();
        ms
    }

    pub fn figures(&self) -> Vec<FigureId> {
        match &self.figures {
            Some(f) => f.clone(),
            None => FigureId::ALL
                .into_iter()
                .filter(|f| if f.over_snr() { self.sweep.snr_db.len() >= 2 } else { self.sweep.m.len() >= 2 })
                .collect(),
        }
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}
