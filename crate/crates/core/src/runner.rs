//! Multi-run drivers behind the CLI: sampler comparisons, one-key sweeps,
//! dataset generation and PMF progression export.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::config::{RunConfig, SamplerKind};
use crate::data::{generate_synthetic, save_dataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::trainer::{load_data, train_on, write_atomic, TrainSummary, PMF_FILE};

/// Final scores of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// The sampler name for comparisons, the swept value for sweeps.
    pub label: String,
    pub seed: u64,
    pub r1: f64,
    pub nmi: f64,
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Median {
    pub label: String,
    pub r1: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub runs: Vec<RunResult>,
    pub medians: Vec<Median>,
}

impl ComparisonTable {
    pub fn median_for(&self, label: &str) -> Option<&Median> {
        self.medians.iter().find(|m| m.label == label)
    }

    /// `label,seed,r1,nmi`; median rows carry `median` in the seed column.
    pub fn to_csv(&self, label_column: &str) -> String {
        let mut out = format!("{label_column},seed,r1,nmi\n");
        for r in &self.runs {
            out.push_str(&format!("{},{},{},{}\n", r.label, r.seed, r.r1, r.nmi));
        }
        for m in &self.medians {
            out.push_str(&format!("{},median,{},{}\n", m.label, m.r1, m.nmi));
        }
        out
    }
}

/// Middle element of the sorted values; the mean of the two middles for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

struct Job {
    group: usize,
    label: String,
    config: RunConfig,
    dir: PathBuf,
}

fn run_jobs(jobs: Vec<Job>, dataset: &LabeledDataset, groups: &[String]) -> Result<ComparisonTable> {
    let results: Vec<Result<(usize, RunResult)>> = jobs
        .into_par_iter()
        .map(|job| {
            let TrainSummary { final_snapshot, .. } = train_on(&job.config, dataset, &job.dir)?;
            Ok((
                job.group,
                RunResult {
                    label: job.label,
                    seed: job.config.seed,
                    r1: final_snapshot.recall[0],
                    nmi: final_snapshot.nmi,
                    run_dir: job.dir,
                },
            ))
        })
        .collect();
    let mut grouped: Vec<(usize, RunResult)> = Vec::with_capacity(results.len());
    for r in results {
        grouped.push(r?);
    }
    let medians = groups
        .iter()
        .enumerate()
        .map(|(g, label)| {
            let r1: Vec<f64> = grouped.iter().filter(|(i, _)| *i == g).map(|(_, r)| r.r1).collect();
            let nmi: Vec<f64> = grouped.iter().filter(|(i, _)| *i == g).map(|(_, r)| r.nmi).collect();
            Median {
                label: label.clone(),
                r1: median(&r1).unwrap_or(f64::NAN),
                nmi: median(&nmi).unwrap_or(f64::NAN),
            }
        })
        .collect();
    Ok(ComparisonTable {
        runs: grouped.into_iter().map(|(_, r)| r).collect(),
        medians,
    })
}

fn check_all(configs: &[RunConfig]) -> Result<()> {
    let mut problems: Vec<String> = configs.iter().flat_map(RunConfig::validate).collect();
    problems.dedup();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(problems))
    }
}

/// Every sampler on every seed, all on the same dataset. Writes `compare.csv`.
pub fn compare(base: &RunConfig, samplers: &[SamplerKind], seeds: &[u64], out_dir: &Path) -> Result<ComparisonTable> {
    let mut problems = Vec::new();
    if samplers.len() < 2 {
        problems.push("compare needs at least 2 samplers".to_string());
    }
    if seeds.is_empty() {
        problems.push("compare needs at least 1 seed".to_string());
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut jobs = Vec::new();
    for (g, &s) in samplers.iter().enumerate() {
        for &seed in seeds {
            let mut config = base.clone();
            config.sampler = s;
            config.seed = seed;
            jobs.push(Job {
                group: g,
                label: s.name().to_string(),
                dir: out_dir
                    .join(format!("{g:02}-{}", s.name()))
                    .join(format!("seed-{seed}")),
                config,
            });
        }
    }
    check_all(&jobs.iter().map(|j| j.config.clone()).collect::<Vec<_>>())?;
    let dataset = load_data(base)?;
    let groups: Vec<String> = samplers.iter().map(|s| s.name().to_string()).collect();
    let table = run_jobs(jobs, &dataset, &groups)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_atomic(&out_dir.join("compare.csv"), table.to_csv("sampler").as_bytes())?;
    Ok(table)
}

/// One run per value of `key` and seed. Writes `sweep.csv`.
pub fn sweep(base: &RunConfig, key: &str, values: &[String], seeds: &[u64], out_dir: &Path) -> Result<ComparisonTable> {
    let mut problems = Vec::new();
    if values.is_empty() {
        problems.push("sweep needs at least 1 value".to_string());
    }
    if seeds.is_empty() {
        problems.push("sweep needs at least 1 seed".to_string());
    }
    let mut jobs = Vec::new();
    for (g, value) in values.iter().enumerate() {
        for &seed in seeds {
            let mut config = base.clone();
            config.seed = seed;
            if let Err(e) = config.set(key, value) {
                problems.push(e);
                continue;
            }
            jobs.push(Job {
                group: g,
                label: value.clone(),
                dir: out_dir
                    .join(format!("{g:02}-{}", value.replace(['/', ','], "_")))
                    .join(format!("seed-{seed}")),
                config,
            });
        }
    }
    problems.dedup();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    check_all(&jobs.iter().map(|j| j.config.clone()).collect::<Vec<_>>())?;
    // Data keys may be what is swept, so each distinct dataset is built per job group.
    let dataset_keyed = key.starts_with("data.");
    let table = if dataset_keyed {
        let mut runs = Vec::new();
        let mut medians = Vec::new();
        for (g, value) in values.iter().enumerate() {
            let group_jobs: Vec<Job> = jobs
                .iter()
                .filter(|j| j.group == g)
                .map(|j| Job {
                    group: 0,
                    label: j.label.clone(),
                    config: j.config.clone(),
                    dir: j.dir.clone(),
                })
                .collect();
            let dataset = load_data(&group_jobs[0].config)?;
            let t = run_jobs(group_jobs, &dataset, std::slice::from_ref(value))?;
            runs.extend(t.runs);
            medians.extend(t.medians);
        }
        ComparisonTable { runs, medians }
    } else {
        let dataset = load_data(base)?;
        run_jobs(jobs, &dataset, values)?
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_atomic(&out_dir.join("sweep.csv"), table.to_csv(key).as_bytes())?;
    Ok(table)
}

/// Generates the configured synthetic dataset and writes it as CSV.
pub fn gen_data(config: &RunConfig, path: &Path) -> Result<LabeledDataset> {
    let dataset = generate_synthetic(&config.synthetic, config.data_seed)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_dataset(&dataset, path)?;
    Ok(dataset)
}

#[derive(Debug, Deserialize)]
struct PmfLine {
    episode: usize,
    edges: Vec<f64>,
    p: Vec<f64>,
}

/// One row of the long-format progression table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressionRow {
    pub episode: usize,
    pub bin_center: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlotData {
    /// The run used a sampler without a histogram.
    NoPmfStream,
    Rows(Vec<ProgressionRow>),
}

pub const NO_PMF_STREAM: &str = "no PMF stream: this run used a sampler without a distance histogram";

/// Reads `pmf.jsonl` of a run directory into `(episode, bin_center, probability)` rows.
pub fn plot_data(run_dir: &Path) -> Result<PlotData> {
    let path = run_dir.join(PMF_FILE);
    if !path.exists() {
        if !run_dir.is_dir() {
            return Err(Error::io(
                run_dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "run directory not found"),
            ));
        }
        return Ok(PlotData::NoPmfStream);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            path: path.clone(),
            line: i + 1,
            message,
        };
        let rec: PmfLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if rec.edges.len() != rec.p.len() + 1 {
            return Err(bad(format!(
                "{} edges for {} probabilities",
                rec.edges.len(),
                rec.p.len()
            )));
        }
        let sum: f64 = rec.p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || rec.p.iter().any(|p| !(*p >= 0.0)) {
            return Err(bad(format!("probabilities do not form a distribution (sum {sum})")));
        }
        for (k, &probability) in rec.p.iter().enumerate() {
            rows.push(ProgressionRow {
                episode: rec.episode,
                bin_center: 0.5 * (rec.edges[k] + rec.edges[k + 1]),
                probability,
            });
        }
    }
    Ok(PlotData::Rows(rows))
}

pub fn progression_csv(rows: &[ProgressionRow]) -> String {
    let mut out = String::from("episode,bin_center,probability\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.episode, r.bin_center, r.probability));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_definition() {
        assert_eq!(median(&[3.0, 1.0, 2.0, 5.0, 4.0]), Some(3.0));
        assert_eq!(median(&[1.0, 4.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn compare_rejects_single_sampler() {
        let err = compare(&RunConfig::default(), &[SamplerKind::Random], &[0], Path::new("unused")).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn missing_stream_is_reported() {
        let dir = std::env::temp_dir();
        assert_eq!(plot_data(&dir).unwrap(), PlotData::NoPmfStream);
    }
}
