//! The training loop: `M` metric-learning iterations per episode, then one
//! validation pass, one reward and (for the adaptive sampler) one policy
//! update and histogram adjustment.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::config::{RunConfig, SamplerKind, TransferMode};
use crate::data::{generate_synthetic, load_dataset, split_validation, LabeledDataset};
use crate::error::{Error, Result};
use crate::geometry::{gram_distances, EmbeddingBatch};
use crate::metrics::{MetricSnapshot, RunningTracks};
use crate::model::{self, Adam, AdamConfig, EmbeddingModel, ModelConfig, Objective, Triplet};
use crate::rl::{compute_reward, PolicyNetwork, StateLayout, Teacher, TrainingState, Transition};
use crate::rng::{derived_seed, stream, RunRng, Stream};
use crate::samplers::{
    curriculum_pmf, init_pmf, sample_negative_adaptive, sample_negative_distweighted, sample_negative_random,
    sample_negative_semihard, ActionVector, SamplingPmf,
};

/// What one episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    /// 1-based.
    pub episode: usize,
    pub snapshot: MetricSnapshot,
    pub reward: i8,
    /// Histogram used during the episode, for histogram-based samplers.
    pub pmf: Option<SamplingPmf>,
    /// Negative draws that fell back to a uniform pick.
    pub fallbacks: usize,
    /// The policy transition completed by this episode, if a policy is learning or replaying.
    pub transition: Option<TransitionRecord>,
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionRecord {
    pub episode: usize,
    pub reward: i8,
    pub logprob: f64,
    pub value: Option<f64>,
    /// `-1` decrease, `0` maintain, `+1` increase, one per bin.
    pub action: Vec<i8>,
}

#[derive(Debug, Clone, Serialize)]
struct PmfRecord<'a> {
    episode: usize,
    edges: Vec<f64>,
    p: &'a [f64],
}

/// Action sampled at the end of an episode and awaiting its reward.
#[derive(Debug, Clone)]
struct Pending {
    state: TrainingState,
    action: ActionVector,
    log_prob: f64,
    value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PolicyMode {
    Learning,
    Replay,
    FrozenIdentity,
}

struct Policy {
    teacher: Teacher,
    layout: StateLayout,
    mode: PolicyMode,
    rng: RunRng,
    pending: Option<Pending>,
}

/// Resolves the dataset a configuration refers to.
pub fn load_data(config: &RunConfig) -> Result<LabeledDataset> {
    match &config.data_path {
        Some(p) => load_dataset(p),
        None => generate_synthetic(&config.synthetic, config.data_seed),
    }
}

fn remap_labels(labels: &[usize]) -> Vec<usize> {
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect()
}

/// Owns every piece of mutable training state for one run.
pub struct Trainer {
    config: RunConfig,
    train_features: Array2<f64>,
    train_labels: Vec<usize>,
    /// Rows of the training arrays per class, for classes large enough to fill a batch slot.
    class_rows: Vec<Vec<usize>>,
    val_features: Array2<f64>,
    val_labels: Vec<usize>,
    model: EmbeddingModel,
    optimizer: Adam,
    objective: Objective,
    beta_optimizer: Option<Adam>,
    pmf: Option<SamplingPmf>,
    policy: Option<Policy>,
    tracks: RunningTracks,
    batch_rng: RunRng,
    negative_rng: RunRng,
    kmeans_seed: u64,
    initial: MetricSnapshot,
    previous: MetricSnapshot,
    iterations: usize,
    episode: usize,
}

impl Trainer {
    pub fn new(config: &RunConfig, dataset: &LabeledDataset) -> Result<Self> {
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let config = config.clone();
        let seed = config.seed;
        let split = split_validation(dataset, config.val_fraction, config.split_mode, seed)?;
        let (train_features, train_labels) = dataset.select(&split.train);
        let (val_features, val_labels) = dataset.select(&split.val);
        let val_labels = remap_labels(&val_labels);

        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
        for (row, &l) in train_labels.iter().enumerate() {
            by_class[l].push(row);
        }
        let class_rows: Vec<Vec<usize>> = by_class
            .into_iter()
            .filter(|rows| rows.len() >= config.batch_per_class)
            .collect();
        if class_rows.len() < config.batch_classes {
            return Err(Error::Config(vec![format!(
                "only {} training classes have at least {} samples; batch.classes is {}",
                class_rows.len(),
                config.batch_per_class,
                config.batch_classes
            )]));
        }

        let model_config = ModelConfig::new(dataset.input_dim(), config.hidden, config.embedding_dim);
        let model = EmbeddingModel::new(&model_config, &mut stream(seed, Stream::ModelInit))?;
        let optimizer = Adam::new(AdamConfig::with_lr(config.lr), model.num_params());
        let objective = Objective::new(config.loss, dataset.num_classes());
        let beta_optimizer = objective
            .class_betas()
            .map(|b| Adam::new(AdamConfig::with_lr(config.beta_lr), b.len()));

        let pmf = initial_pmf(&config)?;
        let tracks = RunningTracks::new(config.running_averages.clone(), config.history);
        let kmeans_seed = derived_seed(seed, Stream::Evaluation);

        let mut trainer = Self {
            train_features,
            train_labels,
            class_rows,
            val_features,
            val_labels,
            model,
            optimizer,
            objective,
            beta_optimizer,
            pmf,
            policy: None,
            tracks,
            batch_rng: stream(seed, Stream::Batches),
            negative_rng: stream(seed, Stream::Negatives),
            kmeans_seed,
            initial: MetricSnapshot {
                episode: 0,
                recall: [0.0; 3],
                nmi: 0.0,
                intra: 0.0,
                inter: 0.0,
            },
            previous: MetricSnapshot {
                episode: 0,
                recall: [0.0; 3],
                nmi: 0.0,
                intra: 0.0,
                inter: 0.0,
            },
            iterations: 0,
            episode: 0,
            config,
        };
        let initial = trainer.evaluate(0)?;
        trainer.initial = initial;
        trainer.previous = initial;
        trainer.tracks.push(&initial);
        trainer.policy = trainer.build_policy()?;
        trainer.advance_policy()?;
        Ok(trainer)
    }

    fn build_policy(&self) -> Result<Option<Policy>> {
        let c = &self.config;
        if c.sampler != SamplerKind::Pads || c.transfer == TransferMode::FixedFinalPmf {
            return Ok(None);
        }
        let layout = StateLayout {
            average_lengths: c.running_averages.clone(),
            history: c.history,
            bins: c.pmf.k,
            all_recalls: c.all_recalls,
        };
        let (teacher, mode) = if c.transfer == TransferMode::FixedPolicy {
            let path = c.transfer_policy.as_ref().expect("validated");
            let network = PolicyNetwork::load(path)?;
            let shape = network.shape();
            if shape.state_dim != layout.dim() || shape.bins != c.pmf.k {
                return Err(Error::Policy(format!(
                    "saved policy expects state_dim {} and {} bins; this run has {} and {}",
                    shape.state_dim,
                    shape.bins,
                    layout.dim(),
                    c.pmf.k
                )));
            }
            (Teacher::from_policy(c.teacher, network), PolicyMode::Replay)
        } else {
            let teacher = Teacher::new(
                c.teacher,
                layout.dim(),
                c.pmf.k,
                &mut stream(c.seed, Stream::PolicyInit),
            )?;
            let mode = if c.frozen_identity {
                PolicyMode::FrozenIdentity
            } else {
                PolicyMode::Learning
            };
            (teacher, mode)
        };
        Ok(Some(Policy {
            teacher,
            layout,
            mode,
            rng: stream(c.seed, Stream::PolicyActions),
            pending: None,
        }))
    }

    /// Samples the next adjustment from the current state and applies it.
    fn advance_policy(&mut self) -> Result<()> {
        let progress = self.progress();
        let (Some(policy), Some(pmf)) = (self.policy.as_mut(), self.pmf.as_ref()) else {
            return Ok(());
        };
        let state = policy.layout.build(&self.tracks, pmf, progress)?;
        let (action, log_prob, value) = match policy.mode {
            PolicyMode::FrozenIdentity => (ActionVector::identity(pmf.k()), 0.0, None),
            _ => policy.teacher.act(&state, &mut policy.rng)?,
        };
        self.pmf = Some(pmf.apply_action(&action, &self.config.pmf.multipliers)?);
        policy.pending = Some(Pending {
            state,
            action,
            log_prob,
            value,
        });
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn policy(&self) -> Option<&PolicyNetwork> {
        self.policy.as_ref().map(|p| p.teacher.policy())
    }

    pub fn pmf(&self) -> Option<&SamplingPmf> {
        self.pmf.as_ref()
    }

    /// Snapshot of the untrained model, the reference for the first reward.
    pub fn initial_snapshot(&self) -> &MetricSnapshot {
        &self.initial
    }

    pub fn iterations_done(&self) -> usize {
        self.iterations
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.config.episodes()
    }

    pub fn train_rows(&self) -> usize {
        self.train_labels.len()
    }

    pub fn val_rows(&self) -> usize {
        self.val_labels.len()
    }

    /// Completed iterations over the configured total.
    pub fn progress(&self) -> f64 {
        (self.iterations as f64 / self.config.iterations.max(1) as f64).min(1.0)
    }

    /// Embeds the validation set and scores it.
    pub fn evaluate(&self, episode: usize) -> Result<MetricSnapshot> {
        let out = self.model.forward(&self.val_features)?;
        let batch = EmbeddingBatch::new(out.embeddings, self.val_labels.clone())?;
        MetricSnapshot::evaluate(&batch, episode, self.kmeans_seed)
    }

    /// Draws `P` classes and `Q` rows of each; returns training-array rows.
    fn draw_batch(&mut self) -> Vec<usize> {
        let (p, q) = (self.config.batch_classes, self.config.batch_per_class);
        let classes = sample(&mut self.batch_rng, self.class_rows.len(), p).into_vec();
        let mut rows = Vec::with_capacity(p * q);
        for c in classes {
            let members = &self.class_rows[c];
            for i in sample(&mut self.batch_rng, members.len(), q) {
                rows.push(members[i]);
            }
        }
        rows
    }

    /// One anchor per batch element with a random same-class positive and a
    /// negative from the configured sampler. Returns the fallback count.
    fn mine_triplets(&mut self, labels: &[usize], distances: &Array2<f64>) -> Result<(Vec<Triplet>, usize)> {
        let n = labels.len();
        let mut triplets = Vec::with_capacity(n);
        let mut fallbacks = 0;
        for a in 0..n {
            let same: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
            let positive = same[self.batch_rng.random_range(0..same.len())];
            let mut pool: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
            if self.config.self_regularization && self.pmf.is_some() {
                pool.extend(same.iter().copied());
                pool.sort_unstable();
            }
            let d: Vec<f64> = pool.iter().map(|&j| distances[[a, j]]).collect();
            let rng = &mut self.negative_rng;
            let selection = match self.config.sampler {
                SamplerKind::Random => sample_negative_random(&pool, rng)?,
                SamplerKind::Semihard => sample_negative_semihard(distances[[a, positive]], &pool, &d)?,
                SamplerKind::DistWeighted => {
                    sample_negative_distweighted(&pool, &d, self.config.embedding_dim, self.config.weight_clip(), rng)?
                }
                SamplerKind::CurriculumLinear
                | SamplerKind::CurriculumNonlinear
                | SamplerKind::StaticPmf
                | SamplerKind::Pads => {
                    let pmf = self.pmf.as_ref().expect("histogram samplers carry a pmf");
                    sample_negative_adaptive(pmf, &pool, &d, rng)?
                }
            };
            fallbacks += usize::from(selection.fallback);
            triplets.push(Triplet {
                anchor: a,
                positive,
                negative: selection.index,
            });
        }
        Ok((triplets, fallbacks))
    }

    /// One batch, one loss evaluation, one optimizer step.
    pub fn step(&mut self) -> Result<StepStats> {
        let rows = self.draw_batch();
        let inputs = self.train_features.select(ndarray::Axis(0), &rows);
        let labels: Vec<usize> = rows.iter().map(|&r| self.train_labels[r]).collect();
        let forward = self.model.forward(&inputs)?;
        let distances = gram_distances(&forward.embeddings);
        let (triplets, fallbacks) = self.mine_triplets(&labels, &distances)?;
        let grads = model::backward(&self.model, &forward, &labels, &triplets, &self.objective)?;
        if !grads.loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        self.model.apply_gradient(&mut self.optimizer, &grads.params)?;
        if let (Some(d_betas), Some(opt)) = (grads.betas.as_ref(), self.beta_optimizer.as_mut()) {
            let betas = self.objective.class_betas_mut().expect("learned boundaries");
            opt.step(betas, d_betas)?;
        }
        self.iterations += 1;
        Ok(StepStats {
            loss: grads.loss,
            active: grads.active,
            fallbacks,
        })
    }

    /// `M` iterations with a fixed histogram, then evaluation, reward and
    /// the policy's turn.
    pub fn run_episode(&mut self) -> Result<EpisodeReport> {
        let start = Instant::now();
        if let Some(kind) = self.config.sampler.curriculum() {
            let c = &self.config;
            self.pmf = Some(curriculum_pmf(
                self.progress(),
                kind,
                c.pmf.lambda_min,
                c.pmf.lambda_max,
                c.pmf.k,
                &c.curriculum_config(),
            )?);
        }
        let used_pmf = self.pmf.clone();
        let mut fallbacks = 0;
        let mut loss_sum = 0.0;
        for _ in 0..self.config.m {
            let s = self.step()?;
            fallbacks += s.fallbacks;
            loss_sum += s.loss;
        }
        self.episode += 1;
        let snapshot = self.evaluate(self.episode)?;
        let reward = compute_reward(snapshot.target(), self.previous.target());
        self.previous = snapshot;
        self.tracks.push(&snapshot);

        let mut transition = None;
        if let Some(policy) = self.policy.as_mut() {
            let pending = policy.pending.take().expect("an action precedes every episode");
            if policy.mode == PolicyMode::Learning {
                policy.teacher.update(Transition {
                    state: pending.state,
                    action: pending.action.clone(),
                    log_prob: pending.log_prob,
                    reward: f64::from(reward),
                    value: pending.value,
                    old_log_prob: None,
                })?;
            }
            transition = Some(TransitionRecord {
                episode: self.episode,
                reward,
                logprob: pending.log_prob,
                value: pending.value,
                action: pending.action.trits().into_iter().map(|t| t as i8 - 1).collect(),
            });
        }
        if !self.is_finished() {
            self.advance_policy()?;
        }
        if fallbacks > 0 {
            log::debug!(
                "episode {}: {fallbacks} negative draws fell back to uniform",
                self.episode
            );
        }
        log::info!(
            "episode {:>4}  loss {:.4}  R@1 {:.4}  NMI {:.4}  reward {:+}",
            self.episode,
            loss_sum / self.config.m as f64,
            snapshot.recall[0],
            snapshot.nmi,
            reward
        );
        Ok(EpisodeReport {
            episode: self.episode,
            snapshot,
            reward,
            pmf: used_pmf,
            fallbacks,
            transition,
            duration: start.elapsed(),
        })
    }

    /// Runs every remaining episode.
    pub fn run_all(&mut self) -> Result<Vec<EpisodeReport>> {
        let mut reports = Vec::with_capacity(self.config.episodes());
        while !self.is_finished() {
            reports.push(self.run_episode()?);
        }
        Ok(reports)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub active: usize,
    pub fallbacks: usize,
}

fn initial_pmf(c: &RunConfig) -> Result<Option<SamplingPmf>> {
    let p = &c.pmf;
    Ok(match c.sampler {
        SamplerKind::Pads | SamplerKind::StaticPmf => Some(if c.transfer == TransferMode::FixedFinalPmf {
            let path = c.transfer_pmf.as_ref().expect("validated");
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let loaded: SamplingPmf = serde_json::from_str(&text)?;
            let loaded = SamplingPmf::new(loaded.lambda_min(), loaded.lambda_max(), loaded.probs().to_vec())?;
            if loaded.k() != p.k {
                return Err(Error::DimensionMismatch {
                    expected: p.k,
                    got: loaded.k(),
                });
            }
            loaded
        } else {
            init_pmf(p.lambda_min, p.lambda_max, p.k, p.init)?
        }),
        SamplerKind::CurriculumLinear | SamplerKind::CurriculumNonlinear => None,
        SamplerKind::Random | SamplerKind::Semihard | SamplerKind::DistWeighted => None,
    })
}

/// Where a finished run left its artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub pmf_path: Option<PathBuf>,
    pub episodes: usize,
    pub initial: MetricSnapshot,
    pub final_snapshot: MetricSnapshot,
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const PMF_FILE: &str = "pmf.jsonl";
pub const TRANSITIONS_FILE: &str = "transitions.jsonl";
pub const RESOLVED_FILE: &str = "config.resolved";
pub const MODEL_FILE: &str = "model.json";
pub const POLICY_FILE: &str = "policy.json";
pub const FINAL_PMF_FILE: &str = "pmf_final.json";

/// Writes `contents` next to `path` and renames it into place.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Metric rows in the on-disk CSV format.
pub fn metrics_csv(reports: &[EpisodeReport]) -> String {
    let mut out = String::from(MetricSnapshot::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.snapshot.csv_row(r.reward));
        out.push('\n');
    }
    out
}

fn jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r)?);
        out.push('\n');
    }
    Ok(out)
}

/// Runs a configuration end to end and writes its artifacts into `run_dir`.
pub fn train(config: &RunConfig, run_dir: &Path) -> Result<TrainSummary> {
    check(config)?;
    let dataset = load_data(config)?;
    train_on(config, &dataset, run_dir)
}

fn check(config: &RunConfig) -> Result<()> {
    let problems = config.validate();
    if let Some(dev) = config.pmf.multipliers.mean_one_deviation() {
        log::info!("(pmf.alpha + pmf.beta)/2 is off one by {dev:+.3}; untouched bins drift in relative mass");
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

/// As [`train`], on an already loaded dataset.
pub fn train_on(config: &RunConfig, dataset: &LabeledDataset, run_dir: &Path) -> Result<TrainSummary> {
    check(config)?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    write_atomic(&run_dir.join(RESOLVED_FILE), config.resolved().as_bytes())?;
    let mut trainer = Trainer::new(config, dataset)?;
    let reports = trainer.run_all()?;

    let metrics_path = run_dir.join(METRICS_FILE);
    write_atomic(&metrics_path, metrics_csv(&reports).as_bytes())?;

    let pmf_path = if config.sampler.uses_pmf() {
        let text = jsonl(reports.iter().filter_map(|r| {
            r.pmf.as_ref().map(|p| PmfRecord {
                episode: r.episode,
                edges: p.edges(),
                p: p.probs(),
            })
        }))?;
        let path = run_dir.join(PMF_FILE);
        write_atomic(&path, text.as_bytes())?;
        if let Some(last) = reports.last().and_then(|r| r.pmf.as_ref()) {
            write_atomic(
                &run_dir.join(FINAL_PMF_FILE),
                serde_json::to_string_pretty(last)?.as_bytes(),
            )?;
        }
        Some(path)
    } else {
        None
    };
    if config.write_transitions && trainer.policy.is_some() {
        let text = jsonl(reports.iter().filter_map(|r| r.transition.as_ref()))?;
        write_atomic(&run_dir.join(TRANSITIONS_FILE), text.as_bytes())?;
    }
    if config.write_checkpoints {
        trainer.model.save(&run_dir.join(MODEL_FILE))?;
        if let Some(p) = trainer.policy() {
            p.save(&run_dir.join(POLICY_FILE))?;
        }
    }
    let final_snapshot = reports.last().map(|r| r.snapshot).unwrap_or(trainer.initial);
    Ok(TrainSummary {
        run_dir: run_dir.to_path_buf(),
        metrics_path,
        pmf_path,
        episodes: reports.len(),
        initial: trainer.initial,
        final_snapshot,
    })
}
