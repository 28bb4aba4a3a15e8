//! Run configuration as flat `key = value` pairs with dotted namespaces.
//!
//! ```text
//! # comments start with '#'
//! sampler = pads
//! pmf.k = 30
//! state.running_averages = 2,8,16,32
//! ```
//!
//! Unknown keys are rejected. Every problem in a file is reported at once.
//! [`RunConfig::resolved`] writes back every key, so a resolved file fully
//! reproduces a run.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::data::{SplitMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::geometry::WeightClip;
use crate::model::{LossConfig, LossKind};
use crate::rl::{RlAlgorithm, TeacherConfig};
use crate::samplers::{ActionMultipliers, CurriculumConfig, CurriculumKind, PmfInit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Random,
    Semihard,
    DistWeighted,
    CurriculumLinear,
    CurriculumNonlinear,
    /// The adaptive histogram held fixed at its initial shape.
    StaticPmf,
    Pads,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 7] = [
        SamplerKind::Random,
        SamplerKind::Semihard,
        SamplerKind::DistWeighted,
        SamplerKind::CurriculumLinear,
        SamplerKind::CurriculumNonlinear,
        SamplerKind::StaticPmf,
        SamplerKind::Pads,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Random => "random",
            SamplerKind::Semihard => "semihard",
            SamplerKind::DistWeighted => "distweighted",
            SamplerKind::CurriculumLinear => "curriculum-linear",
            SamplerKind::CurriculumNonlinear => "curriculum-nonlinear",
            SamplerKind::StaticPmf => "static-pmf",
            SamplerKind::Pads => "pads",
        }
    }

    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            format!(
                "unknown sampler {s:?}; valid kinds: {}",
                Self::ALL.map(|k| k.name()).join(", ")
            )
        })
    }

    /// Samplers that draw from a histogram and therefore emit a PMF stream.
    pub fn uses_pmf(self) -> bool {
        matches!(
            self,
            SamplerKind::CurriculumLinear
                | SamplerKind::CurriculumNonlinear
                | SamplerKind::StaticPmf
                | SamplerKind::Pads
        )
    }

    pub fn curriculum(self) -> Option<CurriculumKind> {
        match self {
            SamplerKind::CurriculumLinear => Some(CurriculumKind::Linear),
            SamplerKind::CurriculumNonlinear => Some(CurriculumKind::Nonlinear),
            _ => None,
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    None,
    /// Replay a saved policy without updating it.
    FixedPolicy,
    /// Use a saved histogram and never adjust it.
    FixedFinalPmf,
}

impl TransferMode {
    fn name(self) -> &'static str {
        match self {
            TransferMode::None => "none",
            TransferMode::FixedPolicy => "fixed-policy",
            TransferMode::FixedFinalPmf => "fixed-final-pmf",
        }
    }

    fn parse(s: &str) -> std::result::Result<Self, String> {
        [
            TransferMode::None,
            TransferMode::FixedPolicy,
            TransferMode::FixedFinalPmf,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown transfer mode {s:?}; valid: none, fixed-policy, fixed-final-pmf"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmfConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub k: usize,
    pub init: PmfInit,
    pub multipliers: ActionMultipliers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// External CSV dataset; synthetic data is generated when absent.
    pub data_path: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
    pub data_seed: u64,
    pub val_fraction: f64,
    pub split_mode: SplitMode,
    pub hidden: usize,
    pub embedding_dim: usize,
    pub lr: f64,
    pub loss: LossConfig,
    pub beta_lr: f64,
    pub sampler: SamplerKind,
    pub self_regularization: bool,
    pub distweighted_clip: f64,
    pub batch_classes: usize,
    pub batch_per_class: usize,
    /// DML iterations per episode.
    pub m: usize,
    pub iterations: usize,
    pub pmf: PmfConfig,
    pub curriculum: CurriculumConfig,
    pub teacher: TeacherConfig,
    pub running_averages: Vec<usize>,
    pub history: usize,
    pub all_recalls: bool,
    /// Keep the teacher's state and reward bookkeeping but always apply the identity action.
    pub frozen_identity: bool,
    pub transfer: TransferMode,
    pub transfer_policy: Option<PathBuf>,
    pub transfer_pmf: Option<PathBuf>,
    pub write_transitions: bool,
    pub write_checkpoints: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data_path: None,
            synthetic: SyntheticSpec::default(),
            data_seed: 0,
            val_fraction: 0.15,
            split_mode: SplitMode::PerClass,
            hidden: 64,
            embedding_dim: 32,
            lr: 1e-3,
            loss: LossConfig::default(),
            beta_lr: 5e-4,
            sampler: SamplerKind::Pads,
            self_regularization: false,
            distweighted_clip: 4.0,
            batch_classes: 4,
            batch_per_class: 4,
            m: 30,
            iterations: 4500,
            pmf: PmfConfig {
                lambda_min: 0.1,
                lambda_max: 1.4,
                k: 30,
                init: PmfInit::UniformRange { lo: 0.3, hi: 0.7 },
                multipliers: ActionMultipliers::default(),
            },
            curriculum: CurriculumConfig::default(),
            teacher: TeacherConfig::default(),
            running_averages: vec![2, 8, 16, 32],
            history: 20,
            all_recalls: true,
            frozen_identity: false,
            transfer: TransferMode::None,
            transfer_policy: None,
            transfer_pmf: None,
            write_transitions: false,
            write_checkpoints: true,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: cannot parse {value:?} as {}", std::any::type_name::<T>()))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {value:?}")),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn episodes(&self) -> usize {
        self.iterations.checked_div(self.m).unwrap_or(0)
    }

    pub fn weight_clip(&self) -> WeightClip {
        WeightClip::MedianMultiple(self.distweighted_clip)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        let (lo, hi, mean, std) = match self.pmf.init {
            PmfInit::UniformRange { lo, hi } => (lo, hi, 0.5, 0.05),
            PmfInit::Gaussian { mean, std } => (0.3, 0.7, mean, std),
            PmfInit::Uniform => (0.3, 0.7, 0.5, 0.05),
        };
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "data.path" => self.data_path = opt_path(v),
            "data.classes" => self.synthetic.n_classes = parse_num(key, v)?,
            "data.per_class" => self.synthetic.per_class = parse_num(key, v)?,
            "data.input_dim" => self.synthetic.input_dim = parse_num(key, v)?,
            "data.spread" => self.synthetic.center_spread = parse_num(key, v)?,
            "data.noise" => self.synthetic.within_std = parse_num(key, v)?,
            "data.seed" => self.data_seed = parse_num(key, v)?,
            "split.fraction" => self.val_fraction = parse_num(key, v)?,
            "split.mode" => {
                self.split_mode = match v {
                    "per-class" => SplitMode::PerClass,
                    "by-class" => SplitMode::ByClass,
                    _ => return Err(format!("{key}: expected per-class or by-class, got {v:?}")),
                }
            }
            "model.hidden" => self.hidden = parse_num(key, v)?,
            "model.dim" => self.embedding_dim = parse_num(key, v)?,
            "model.lr" => self.lr = parse_num(key, v)?,
            "loss.kind" => {
                self.loss.kind = match v {
                    "triplet" => LossKind::Triplet,
                    "margin" => LossKind::Margin,
                    _ => return Err(format!("{key}: expected triplet or margin, got {v:?}")),
                }
            }
            "loss.gamma" => self.loss.gamma = parse_num(key, v)?,
            "loss.beta" => self.loss.beta_margin = parse_num(key, v)?,
            "loss.learn_beta" => self.loss.learn_beta = parse_bool(key, v)?,
            "loss.beta_lr" => self.beta_lr = parse_num(key, v)?,
            "sampler" => self.sampler = SamplerKind::parse(v)?,
            "sampler.self_reg" => self.self_regularization = parse_bool(key, v)?,
            "sampler.clip" => self.distweighted_clip = parse_num(key, v)?,
            "batch.classes" => self.batch_classes = parse_num(key, v)?,
            "batch.per_class" => self.batch_per_class = parse_num(key, v)?,
            "train.m" => self.m = parse_num(key, v)?,
            "train.iterations" => self.iterations = parse_num(key, v)?,
            "pmf.lambda_min" => self.pmf.lambda_min = parse_num(key, v)?,
            "pmf.lambda_max" => self.pmf.lambda_max = parse_num(key, v)?,
            "pmf.k" => self.pmf.k = parse_num(key, v)?,
            "pmf.init" => {
                self.pmf.init = match v {
                    "uniform" => PmfInit::Uniform,
                    "uniform-range" => PmfInit::UniformRange { lo, hi },
                    "gaussian" => PmfInit::Gaussian { mean, std },
                    _ => return Err(format!("{key}: expected uniform, uniform-range or gaussian, got {v:?}")),
                }
            }
            "pmf.init_lo" | "pmf.init_hi" => {
                let x: f64 = parse_num(key, v)?;
                if let PmfInit::UniformRange { lo, hi } = &mut self.pmf.init {
                    *(if key == "pmf.init_lo" { lo } else { hi }) = x;
                } else if !matches!(self.pmf.init, PmfInit::UniformRange { .. }) {
                    return Err(format!("{key} requires pmf.init = uniform-range (set it first)"));
                }
            }
            "pmf.init_mean" | "pmf.init_std" => {
                let x: f64 = parse_num(key, v)?;
                if let PmfInit::Gaussian { mean, std } = &mut self.pmf.init {
                    *(if key == "pmf.init_mean" { mean } else { std }) = x;
                } else {
                    return Err(format!("{key} requires pmf.init = gaussian (set it first)"));
                }
            }
            "pmf.alpha" => self.pmf.multipliers.alpha = parse_num(key, v)?,
            "pmf.beta" => self.pmf.multipliers.beta = parse_num(key, v)?,
            "curriculum.window" => self.curriculum.window = parse_num(key, v)?,
            "curriculum.start" => self.curriculum.start = parse_num(key, v)?,
            "curriculum.hardness" => self.curriculum.hardness = parse_num(key, v)?,
            "rl.algorithm" => {
                self.teacher.algorithm = RlAlgorithm::parse(v).ok_or_else(|| {
                    format!(
                        "{key}: unknown algorithm {v:?}; valid: {}",
                        RlAlgorithm::ALL.map(|a| a.name()).join(", ")
                    )
                })?
            }
            "rl.hidden" => self.teacher.hidden = parse_num(key, v)?,
            "rl.lr" => self.teacher.lr = parse_num(key, v)?,
            "rl.ema_decay" => self.teacher.ema_decay = parse_num(key, v)?,
            "ppo.epsilon" => self.teacher.ppo_epsilon = parse_num(key, v)?,
            "ppo.refresh" => self.teacher.old_policy_refresh = parse_num(key, v)?,
            "state.running_averages" => {
                self.running_averages = v
                    .split(',')
                    .map(|s| parse_num::<usize>(key, s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "state.history" => self.history = parse_num(key, v)?,
            "state.all_recalls" => self.all_recalls = parse_bool(key, v)?,
            "policy.frozen_identity" => self.frozen_identity = parse_bool(key, v)?,
            "transfer.mode" => self.transfer = TransferMode::parse(v)?,
            "transfer.policy" => self.transfer_policy = opt_path(v),
            "transfer.pmf" => self.transfer_pmf = opt_path(v),
            "output.transitions" => self.write_transitions = parse_bool(key, v)?,
            "output.checkpoints" => self.write_checkpoints = parse_bool(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Every key with its effective value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut e: Vec<(&'static str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("data.path", path_str(&self.data_path)),
            ("data.classes", self.synthetic.n_classes.to_string()),
            ("data.per_class", self.synthetic.per_class.to_string()),
            ("data.input_dim", self.synthetic.input_dim.to_string()),
            ("data.spread", self.synthetic.center_spread.to_string()),
            ("data.noise", self.synthetic.within_std.to_string()),
            ("data.seed", self.data_seed.to_string()),
            ("split.fraction", self.val_fraction.to_string()),
            (
                "split.mode",
                match self.split_mode {
                    SplitMode::PerClass => "per-class",
                    SplitMode::ByClass => "by-class",
                }
                .into(),
            ),
            ("model.hidden", self.hidden.to_string()),
            ("model.dim", self.embedding_dim.to_string()),
            ("model.lr", self.lr.to_string()),
            (
                "loss.kind",
                match self.loss.kind {
                    LossKind::Triplet => "triplet",
                    LossKind::Margin => "margin",
                }
                .into(),
            ),
            ("loss.gamma", self.loss.gamma.to_string()),
            ("loss.beta", self.loss.beta_margin.to_string()),
            ("loss.learn_beta", self.loss.learn_beta.to_string()),
            ("loss.beta_lr", self.beta_lr.to_string()),
            ("sampler", self.sampler.name().into()),
            ("sampler.self_reg", self.self_regularization.to_string()),
            ("sampler.clip", self.distweighted_clip.to_string()),
            ("batch.classes", self.batch_classes.to_string()),
            ("batch.per_class", self.batch_per_class.to_string()),
            ("train.m", self.m.to_string()),
            ("train.iterations", self.iterations.to_string()),
            ("pmf.lambda_min", self.pmf.lambda_min.to_string()),
            ("pmf.lambda_max", self.pmf.lambda_max.to_string()),
            ("pmf.k", self.pmf.k.to_string()),
        ];
        match self.pmf.init {
            PmfInit::Uniform => e.push(("pmf.init", "uniform".into())),
            PmfInit::UniformRange { lo, hi } => {
                e.push(("pmf.init", "uniform-range".into()));
                e.push(("pmf.init_lo", lo.to_string()));
                e.push(("pmf.init_hi", hi.to_string()));
            }
            PmfInit::Gaussian { mean, std } => {
                e.push(("pmf.init", "gaussian".into()));
                e.push(("pmf.init_mean", mean.to_string()));
                e.push(("pmf.init_std", std.to_string()));
            }
        }
        e.extend([
            ("pmf.alpha", self.pmf.multipliers.alpha.to_string()),
            ("pmf.beta", self.pmf.multipliers.beta.to_string()),
            ("curriculum.window", self.curriculum.window.to_string()),
            ("curriculum.start", self.curriculum.start.to_string()),
            ("curriculum.hardness", self.curriculum.hardness.to_string()),
            ("rl.algorithm", self.teacher.algorithm.name().into()),
            ("rl.hidden", self.teacher.hidden.to_string()),
            ("rl.lr", self.teacher.lr.to_string()),
            ("rl.ema_decay", self.teacher.ema_decay.to_string()),
            ("ppo.epsilon", self.teacher.ppo_epsilon.to_string()),
            ("ppo.refresh", self.teacher.old_policy_refresh.to_string()),
            (
                "state.running_averages",
                self.running_averages
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("state.history", self.history.to_string()),
            ("state.all_recalls", self.all_recalls.to_string()),
            ("policy.frozen_identity", self.frozen_identity.to_string()),
            ("transfer.mode", self.transfer.name().into()),
            ("transfer.policy", path_str(&self.transfer_policy)),
            ("transfer.pmf", path_str(&self.transfer_pmf)),
            ("output.transitions", self.write_transitions.to_string()),
            ("output.checkpoints", self.write_checkpoints.to_string()),
        ]);
        e
    }

    /// The resolved configuration text, one `key = value` per line.
    pub fn resolved(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parses config text on top of the defaults. Reports every bad line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut problems = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = config.set(k.trim(), v) {
                        problems.push(format!("line {}: {e}", n + 1));
                    }
                }
                None => problems.push(format!("line {}: expected key = value, got {line:?}", n + 1)),
            }
        }
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides after the file.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let mut problems = Vec::new();
        for o in overrides {
            let o = o.as_ref();
            match o.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v) {
                        problems.push(format!("override {o:?}: {e}"));
                    }
                }
                None => problems.push(format!("override {o:?}: expected key=value")),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Every constraint violation, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.m < 1 {
            p.push("train.m must be >= 1".into());
        }
        if self.iterations < self.m.max(1) {
            p.push(format!(
                "train.iterations ({}) must be at least train.m ({})",
                self.iterations, self.m
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction <= 0.5) {
            p.push(format!(
                "split.fraction must lie in (0, 0.5], got {}",
                self.val_fraction
            ));
        }
        if self.data_path.is_none() {
            let s = &self.synthetic;
            if s.n_classes < 2 {
                p.push("data.classes must be >= 2".into());
            }
            if s.per_class < 2 {
                p.push("data.per_class must be >= 2".into());
            }
            if s.input_dim < 1 {
                p.push("data.input_dim must be >= 1".into());
            }
            if !(s.within_std >= 0.0) || !(s.center_spread >= 0.0) {
                p.push("data.spread and data.noise must be >= 0".into());
            }
            let train_per_class = s.per_class - ((self.val_fraction * s.per_class as f64).round() as usize).max(1);
            if self.split_mode == SplitMode::PerClass && train_per_class < self.batch_per_class {
                p.push(format!(
                    "batch.per_class ({}) exceeds the {} training samples per class",
                    self.batch_per_class, train_per_class
                ));
            }
            if self.split_mode == SplitMode::PerClass && self.batch_classes > s.n_classes {
                p.push(format!(
                    "batch.classes ({}) exceeds data.classes ({})",
                    self.batch_classes, s.n_classes
                ));
            }
        }
        if self.batch_classes < 2 {
            p.push("batch.classes must be >= 2 so negatives exist".into());
        }
        if self.batch_per_class < 2 {
            p.push("batch.per_class must be >= 2 so positives exist".into());
        }
        if self.hidden < 1 {
            p.push("model.hidden must be >= 1".into());
        }
        if self.embedding_dim < 3 {
            p.push("model.dim must be >= 3".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            p.push(format!("model.lr must be finite and >= 0, got {}", self.lr));
        }
        p.extend(self.loss.validate());
        let pmf = &self.pmf;
        if !(0.0 <= pmf.lambda_min && pmf.lambda_min < pmf.lambda_max && pmf.lambda_max <= 2.0) {
            p.push(format!(
                "pmf interval [{}, {}] must satisfy 0 <= lambda_min < lambda_max <= 2",
                pmf.lambda_min, pmf.lambda_max
            ));
        }
        if pmf.k < 2 {
            p.push("pmf.k must be >= 2".into());
        }
        match pmf.init {
            PmfInit::UniformRange { lo, hi } if !(lo < hi) => {
                p.push(format!("pmf.init_lo ({lo}) must be below pmf.init_hi ({hi})"))
            }
            PmfInit::Gaussian { std, .. } if !(std > 0.0) => p.push("pmf.init_std must be > 0".into()),
            _ => {}
        }
        p.extend(pmf.multipliers.validate());
        if !(self.distweighted_clip > 0.0) {
            p.push("sampler.clip must be > 0".into());
        }
        if !(self.curriculum.window > 0.0) {
            p.push("curriculum.window must be > 0".into());
        }
        if self.teacher.hidden < 1 {
            p.push("rl.hidden must be >= 1".into());
        }
        if !(self.teacher.lr >= 0.0) {
            p.push("rl.lr must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.teacher.ema_decay) {
            p.push("rl.ema_decay must lie in [0, 1)".into());
        }
        if !(self.teacher.ppo_epsilon > 0.0) {
            p.push("ppo.epsilon must be > 0".into());
        }
        if self.teacher.old_policy_refresh < 1 {
            p.push("ppo.refresh must be >= 1".into());
        }
        if self.running_averages.is_empty() || self.running_averages.contains(&0) {
            p.push("state.running_averages must be a non-empty list of positive lengths".into());
        }
        match self.transfer {
            TransferMode::None => {}
            TransferMode::FixedPolicy => {
                if self.sampler != SamplerKind::Pads {
                    p.push("transfer.mode = fixed-policy requires sampler = pads".into());
                }
                if self.transfer_policy.is_none() {
                    p.push("transfer.mode = fixed-policy requires transfer.policy".into());
                }
            }
            TransferMode::FixedFinalPmf => {
                if !self.sampler.uses_pmf() || self.sampler.curriculum().is_some() {
                    p.push("transfer.mode = fixed-final-pmf requires sampler = pads or static-pmf".into());
                }
                if self.transfer_pmf.is_none() {
                    p.push("transfer.mode = fixed-final-pmf requires transfer.pmf".into());
                }
            }
        }
        p
    }

    pub fn curriculum_config(&self) -> CurriculumConfig {
        CurriculumConfig {
            dim: self.embedding_dim,
            clip: self.weight_clip(),
            ..self.curriculum
        }
    }
}
