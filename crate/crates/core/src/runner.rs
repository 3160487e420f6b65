//! Experiment runner: expands a config into arms, runs every (arm, seed) pair,
//! pairs non-IID arms with their IID reference and writes CSVs plus a manifest.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! rounds/<arm>__seed<s>.csv   run_id,seed,t,acc,R,up_bytes,down_bytes
//! timing/<arm>__seed<s>.csv   run_id,seed,t,client_ms,server_ms
//! summary.csv                 one row per (arm, seed)
//! manifest.json
//! ```
//!
//! Wall-clock timings live in their own files so the `rounds/` tree and the
//! summary are byte-identical across reruns.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{validate_config, DataSource, ExperimentConfig};
use crate::error::{Error, Result};
use crate::fed::{run_seed, Method, NoiseSetting, RoundRecord, RunConfig, SeedRun};
use crate::feature_store::{generate_synthetic, load_features, FeatureDataset};
use crate::metrics::{acc_at_95, decline_rate, relative_ratio};
use crate::partition::Scheme;

#[derive(Debug, Clone)]
pub struct RunRequest {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    /// Overrides the config's seed list.
    pub seeds: Option<Vec<u64>>,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

/// One cell of the arm matrix.
#[derive(Debug, Clone)]
pub struct Arm {
    pub id: String,
    pub cfg: RunConfig,
    /// Index of the paired IID arm (itself for IID arms).
    pub reference: Option<usize>,
    /// Index of the noise-free arm with the same method, scheme and participation.
    pub clean: Option<usize>,
}

fn noise_slug(n: &Option<NoiseSetting>) -> String {
    n.as_ref().map_or_else(|| "clean".into(), NoiseSetting::slug)
}

pub fn arm_id(method: Method, scheme: &Scheme, noise: &Option<NoiseSetting>, participation: f64) -> String {
    format!("{}__{}__{}__p{participation}", method.name(), scheme.slug(), noise_slug(noise))
}

/// Expands the matrix. With `iid_reference` set, an IID arm is added for every
/// (method, noise, participation) that has a non-IID scheme.
pub fn build_arms(cfg: &ExperimentConfig) -> Vec<Arm> {
    let mut schemes = cfg.schemes.clone();
    if cfg.iid_reference && schemes.iter().any(|s| !s.is_iid()) && !schemes.iter().any(Scheme::is_iid) {
        schemes.insert(0, Scheme::Iid);
    }
    let mut arms = Vec::new();
    for &p in &cfg.participation {
        for noise in &cfg.noise {
            for &method in &cfg.methods {
                for scheme in &schemes {
                    let mut run = cfg.base.clone();
                    run.method = method;
                    run.scheme = *scheme;
                    run.noise = *noise;
                    run.participation = p;
                    arms.push(Arm {
                        id: arm_id(method, scheme, noise, p),
                        cfg: run,
                        reference: None,
                        clean: None,
                    });
                }
            }
        }
    }
    let index: HashMap<String, usize> = arms.iter().enumerate().map(|(i, a)| (a.id.clone(), i)).collect();
    for arm in arms.iter_mut() {
        let c = &arm.cfg;
        if cfg.iid_reference {
            arm.reference = index.get(&arm_id(c.method, &Scheme::Iid, &c.noise, c.participation)).copied();
        }
        if c.noise.is_some() {
            arm.clean = index.get(&arm_id(c.method, &c.scheme, &None, c.participation)).copied();
        }
    }
    arms
}

/// Train and eval sets as described by the config. Relative paths are taken
/// from `base_dir`.
pub fn load_data(cfg: &ExperimentConfig, base_dir: &Path) -> Result<(FeatureDataset, FeatureDataset)> {
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
    let full = match &cfg.data.source {
        DataSource::Features { path } => load_features(resolve(path))?,
        DataSource::Synthetic(spec) => generate_synthetic(spec)?,
    };
    let (mut train, mut eval) = match &cfg.data.eval_features {
        Some(path) => (full, load_features(resolve(path))?),
        None => full.split_per_class(cfg.data.eval_per_class)?,
    };
    if cfg.data.l2_normalize {
        train = train.l2_normalized();
        eval = eval.l2_normalized();
    }
    if train.dim() != eval.dim() || train.num_classes() != eval.num_classes() {
        return Err(crate::error::FeatureError::InvalidShape(format!(
            "train is {}-d with {} classes, eval is {}-d with {} classes",
            train.dim(),
            train.num_classes(),
            eval.dim(),
            eval.num_classes()
        ))
        .into());
    }
    Ok((train, eval))
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub method: String,
    pub scheme: String,
    pub noise: String,
    pub participation: f64,
    pub seed: u64,
    pub final_acc: f64,
    pub final_r: Option<f64>,
    /// Against the paired IID arm's final accuracy; `None` means not reached.
    pub acc_at_95: Option<usize>,
    pub decline_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetInfo {
    pub train_fingerprint: String,
    pub eval_fingerprint: String,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub num_classes: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub dataset: DatasetInfo,
    pub arms: Vec<String>,
    /// Relative to the output directory.
    pub outputs: Vec<String>,
}

/// Everything a finished experiment produced, in memory.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub arms: Vec<Arm>,
    /// `runs[arm][seed_index]`, with `relative` filled where a reference exists.
    pub runs: Vec<Vec<SeedRun>>,
    pub summary: Vec<SummaryRow>,
    pub manifest: ExperimentManifest,
}

/// SHA-256 over the canonical JSON of the fully defaulted config.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json))
}

fn final_acc(run: &SeedRun) -> f64 {
    run.records.last().map_or(0.0, |r| r.accuracy)
}

/// Runs every arm and seed without touching the filesystem.
pub fn execute(cfg: &ExperimentConfig, train: &FeatureDataset, eval: &FeatureDataset) -> Result<ExperimentOutcome> {
    let arms = build_arms(cfg);
    let seeds = cfg.base.seeds.clone();
    let jobs: Vec<(usize, u64)> = (0..arms.len()).flat_map(|a| seeds.iter().map(move |&s| (a, s))).collect();
    let results: Vec<SeedRun> = jobs
        .par_iter()
        .map(|&(a, s)| run_seed(&arms[a].cfg, train, eval, s))
        .collect::<Result<_>>()?;
    let mut runs: Vec<Vec<SeedRun>> = vec![Vec::with_capacity(seeds.len()); arms.len()];
    for ((a, _), run) in jobs.iter().zip(results) {
        runs[*a].push(run);
    }

    for a in 0..arms.len() {
        let Some(r) = arms[a].reference else { continue };
        for si in 0..seeds.len() {
            let reference: Vec<f64> = runs[r][si].curve();
            let ratio = relative_ratio(&runs[a][si].curve(), &reference)?;
            for (rec, v) in runs[a][si].records.iter_mut().zip(ratio) {
                rec.relative = Some(v);
            }
        }
    }

    let mut summary = Vec::new();
    for (a, arm) in arms.iter().enumerate() {
        for (si, run) in runs[a].iter().enumerate() {
            let acc = final_acc(run);
            let reference_final = arm.reference.map_or(acc, |r| final_acc(&runs[r][si]));
            let decline = match arm.clean {
                Some(c) => Some(decline_rate(acc, final_acc(&runs[c][si]))?),
                None => None,
            };
            summary.push(SummaryRow {
                run_id: arm.id.clone(),
                method: arm.cfg.method.name().into(),
                scheme: arm.cfg.scheme.to_string(),
                noise: noise_slug(&arm.cfg.noise),
                participation: arm.cfg.participation,
                seed: run.seed,
                final_acc: acc,
                final_r: run.records.last().and_then(|r| r.relative),
                acc_at_95: acc_at_95(&run.curve(), reference_final),
                decline_rate: decline,
            });
        }
    }

    let mut outputs = Vec::new();
    for arm in &arms {
        for s in &seeds {
            outputs.push(format!("rounds/{}__seed{s}.csv", arm.id));
            outputs.push(format!("timing/{}__seed{s}.csv", arm.id));
        }
    }
    outputs.push("summary.csv".into());
    let manifest = ExperimentManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash(cfg),
        seeds,
        dataset: DatasetInfo {
            train_fingerprint: train.fingerprint(),
            eval_fingerprint: eval.fingerprint(),
            train_samples: train.len(),
            eval_samples: eval.len(),
            num_classes: train.num_classes(),
            dim: train.dim(),
        },
        arms: arms.iter().map(|a| a.id.clone()).collect(),
        outputs,
    };
    Ok(ExperimentOutcome {
        arms,
        runs,
        summary,
        manifest,
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn rounds_csv(run_id: &str, seed: u64, records: &[RoundRecord]) -> Vec<u8> {
    csv_bytes(
        &["run_id", "seed", "t", "acc", "R", "up_bytes", "down_bytes"],
        records.iter().map(|r| {
            vec![
                run_id.to_string(),
                seed.to_string(),
                r.t.to_string(),
                r.accuracy.to_string(),
                opt(r.relative),
                r.bytes_up_total.to_string(),
                r.bytes_down_total.to_string(),
            ]
        }),
    )
}

pub fn timing_csv(run_id: &str, seed: u64, records: &[RoundRecord]) -> Vec<u8> {
    csv_bytes(
        &["run_id", "seed", "t", "client_ms", "server_ms"],
        records.iter().map(|r| {
            vec![
                run_id.to_string(),
                seed.to_string(),
                r.t.to_string(),
                (r.client_seconds_mean * 1e3).to_string(),
                (r.server_seconds * 1e3).to_string(),
            ]
        }),
    )
}

pub fn summary_csv(rows: &[SummaryRow]) -> Vec<u8> {
    csv_bytes(
        &[
            "run_id",
            "method",
            "scheme",
            "noise",
            "participation",
            "seed",
            "final_acc",
            "final_R",
            "acc_at_95",
            "decline_rate",
        ],
        rows.iter().map(|r| {
            vec![
                r.run_id.clone(),
                r.method.clone(),
                r.scheme.clone(),
                r.noise.clone(),
                r.participation.to_string(),
                r.seed.to_string(),
                r.final_acc.to_string(),
                opt(r.final_r),
                opt(r.acc_at_95),
                opt(r.decline_rate),
            ]
        }),
    )
}

/// Writes via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn write_outputs(outcome: &ExperimentOutcome, out_dir: &Path) -> Result<()> {
    for (arm, runs) in outcome.arms.iter().zip(&outcome.runs) {
        for run in runs {
            let name = format!("{}__seed{}.csv", arm.id, run.seed);
            write_atomic(&out_dir.join("rounds").join(&name), &rounds_csv(&arm.id, run.seed, &run.records))?;
            write_atomic(&out_dir.join("timing").join(&name), &timing_csv(&arm.id, run.seed, &run.records))?;
        }
    }
    write_atomic(&out_dir.join("summary.csv"), &summary_csv(&outcome.summary))?;
    let mut manifest = serde_json::to_vec_pretty(&outcome.manifest).expect("manifest serializes");
    manifest.push(b'\n');
    write_atomic(&out_dir.join("manifest.json"), &manifest)
}

/// Parses the config, loads data, runs everything, then writes outputs. No
/// file is written unless every run succeeded.
pub fn run(req: &RunRequest) -> Result<ExperimentOutcome> {
    let text = fs::read_to_string(&req.config).map_err(|source| Error::Io {
        path: req.config.clone(),
        source,
    })?;
    let mut cfg = validate_config(&text).map_err(Error::Config)?;
    if let Some(seeds) = &req.seeds {
        if seeds.is_empty() {
            return Err(Error::Config(vec!["--seeds must list at least one seed".into()]));
        }
        cfg.base.seeds = seeds.clone();
    }
    let base_dir = req.config.parent().unwrap_or(Path::new("."));
    let (train, eval) = load_data(&cfg, base_dir)?;
    let outcome = match req.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(|| execute(&cfg, &train, &eval))?,
        None => execute(&cfg, &train, &eval)?,
    };
    write_outputs(&outcome, &req.out_dir)?;
    Ok(outcome)
}
