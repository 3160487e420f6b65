use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedprobe::error::Result;
use fedprobe::fed::{ClientData, Method};
use fedprobe::feature_store::{generate_synthetic, load_features, save_features, FeatureDataset, SyntheticSpec};
use fedprobe::heads::HeadModel;
use fedprobe::metrics::{drift_report, geometry};
use fedprobe::partition::{partition, partition_stats, Scheme};
use fedprobe::runner::{run, write_atomic, RunRequest};

#[derive(Parser)]
#[command(name = "fedprobe", version, about = "Federated linear probing on frozen features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm and seed of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Alignment, intra, inter and ratio of a feature file as one CSV row.
    Geometry {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        l2: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Client drift of a zero-initialized head under a partition, as JSON.
    Drift {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, default_value_t = 100)]
        clients: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Which head kind supplies the loss.
        #[arg(long, default_value = "lp-softmax")]
        method: Method,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-client sample counts and class histograms, as JSON.
    PartitionStats {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        scheme: Scheme,
        #[arg(long, default_value_t = 100)]
        clients: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the client → index list manifest here.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write a synthetic Gaussian-cluster feature file.
    Synth {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 10.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        std: f64,
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(out: Option<PathBuf>, text: String) -> Result<()> {
    match out {
        Some(path) => write_atomic(&path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

fn clients_of(ds: &FeatureDataset, scheme: Scheme, clients: usize, seed: u64) -> Result<Vec<ClientData>> {
    let part = partition(ds, scheme, clients, seed)?;
    Ok(part
        .assignments
        .iter()
        .enumerate()
        .map(|(i, idx)| ClientData::from_indices(i, ds, ds.labels(), idx))
        .collect())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out_dir,
            seeds,
            jobs,
        } => {
            let outcome = run(&RunRequest {
                config,
                out_dir: out_dir.clone(),
                seeds,
                jobs,
            })?;
            eprintln!(
                "{} arms × {} seeds written to {}",
                outcome.arms.len(),
                outcome.manifest.seeds.len(),
                out_dir.display()
            );
            Ok(())
        }
        Command::Geometry { features, l2, out } => {
            let mut ds = load_features(&features)?;
            if l2 {
                ds = ds.l2_normalized();
            }
            let g = geometry(ds.features_f64().view(), ds.labels())?;
            let cell = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
            emit(
                out,
                format!(
                    "alignment,intra,inter,ratio\n{},{},{},{}\n",
                    cell(g.alignment),
                    g.intra,
                    g.inter,
                    cell(g.ratio)
                ),
            )
        }
        Command::Drift {
            features,
            scheme,
            clients,
            seed,
            method,
            out,
        } => {
            let ds = load_features(&features)?;
            let parts = clients_of(&ds, scheme, clients, seed)?;
            let model = HeadModel::zeros(method.head_kind(), ds.num_classes(), ds.dim(), true);
            let report = drift_report(&model, &parts, ds.features_f64().view(), ds.labels())?;
            emit(out, to_json(&report))
        }
        Command::PartitionStats {
            features,
            scheme,
            clients,
            seed,
            manifest,
        } => {
            let ds = load_features(&features)?;
            let part = partition(&ds, scheme, clients, seed)?;
            if let Some(path) = manifest {
                write_atomic(&path, part.to_json().as_bytes())?;
            }
            emit(None, to_json(&partition_stats(&part, &ds)))
        }
        Command::Synth {
            classes,
            dim,
            per_class,
            separation,
            std,
            offset,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                num_classes: classes,
                dim,
                samples_per_class: per_class,
                centroid_separation: separation,
                within_class_std: std,
                shared_offset: offset,
                seed,
            };
            let ds = generate_synthetic(&spec)?;
            save_features(&ds, &out)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
