//! Thin CLI over the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vantage::harness::{
    ablate, export_run, export_summary, run_calibration, run_experiment, sweep, ExperimentConfig,
};
use vantage::planner::PolicyKind;
use vantage::skeleton::BoneTopology;
use vantage::Intrinsics;

#[derive(Parser)]
#[command(name = "vantage", about = "Active viewpoint selection simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus `key=value` overrides shared by all subcommands.
#[derive(Args)]
struct ConfigArgs {
    /// Key-value config file (see README for keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override single keys, e.g. `--set mode=flight --set seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> vantage::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::parse_file(path)?,
            None => ExperimentConfig::teleport(),
        };
        // Apply mode/sequence first so their defaults land before overrides.
        let parsed: Vec<(String, String)> = self
            .sets
            .iter()
            .map(|s| {
                s.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| {
                        vantage::Error::Config(format!("--set expects KEY=VALUE, got '{s}'"))
                    })
            })
            .collect::<vantage::Result<_>>()?;
        for (k, v) in parsed.iter().filter(|(k, _)| k == "mode" || k == "sequence") {
            config.apply_kv(k, v)?;
        }
        for (k, v) in parsed.iter().filter(|(k, _)| k != "mode" && k != "sequence") {
            config.apply_kv(k, v)?;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the multi-view bone-length calibration and print the lengths.
    Calibrate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run one closed-loop experiment.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for frames.csv, candidates.csv, and manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a cross product of policies and seeds, and write summary.csv.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated policies (default: all).
        #[arg(long)]
        policies: Option<String>,
        /// Comma-separated seeds (default: 0,1,2,3,4).
        #[arg(long, default_value = "0,1,2,3,4")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the active policy with and without the flight model.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> vantage::Result<Vec<u64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| vantage::Error::Config(format!("bad seed '{x}'")))
        })
        .collect()
}

fn parse_policies(s: Option<&str>) -> vantage::Result<Vec<PolicyKind>> {
    match s {
        None => Ok(PolicyKind::all().to_vec()),
        Some(list) => list.split(',').map(|p| PolicyKind::parse(p.trim())).collect(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> vantage::Result<()> {
    match Cli::parse().command {
        Command::Calibrate { config } => {
            let config = config.build()?;
            let topo = BoneTopology::human();
            let seq = config
                .sequence
                .build(config.frames + config.horizon + 1, config.rate_hz)?;
            let calib = run_calibration(&config, &seq, &topo, &Intrinsics::default_vga())?;
            println!("bone,parent,child,length_m");
            for (b, &(p, c)) in topo.bones.iter().enumerate() {
                println!("{b},{p},{c},{}", calib.lengths[b]);
            }
        }
        Command::Run { config, out } => {
            let config = config.build()?;
            let result = run_experiment(&config)?;
            println!(
                "policy={} seed={} frames={} mean_mpjpe={:.4} std={:.4} elapsed={:.1}s",
                config.policy,
                config.seed,
                result.records.len(),
                result.mean_mpjpe,
                result.std_mpjpe,
                result.elapsed_seconds
            );
            if let Some(dir) = out {
                export_run(&result, &dir)?;
                println!("wrote {}", dir.display());
            }
        }
        Command::Sweep {
            config,
            policies,
            seeds,
            out,
        } => {
            let config = config.build()?;
            let policies = parse_policies(policies.as_deref())?;
            let seeds = parse_seeds(&seeds)?;
            let rows = sweep(&config, &policies, &seeds)?;
            println!("policy,mean_mpjpe,std_mpjpe,runs");
            for row in &rows {
                println!("{},{:.4},{:.4},{}", row.policy, row.mean, row.std, row.per_seed.len());
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| vantage::Error::Io {
                        path: dir.display().to_string(),
                        source: e,
                    })?;
                export_summary(&rows, dir.join("summary.csv"))?;
                println!("wrote {}", dir.join("summary.csv").display());
            }
        }
        Command::Ablate { config, seeds, out } => {
            let config = config.build()?;
            let mut config = config;
            config.mode = vantage::Mode::Flight;
            let seeds = parse_seeds(&seeds)?;
            let report = ablate(&config, &seeds)?;
            println!("variant,mean_mpjpe,std_mpjpe,runs");
            println!(
                "with_flight_model,{:.4},{:.4},{}",
                report.with_model.mean,
                report.with_model.std,
                report.with_model.per_seed.len()
            );
            println!(
                "uniform_sampling,{:.4},{:.4},{}",
                report.without_model.mean,
                report.without_model.std,
                report.without_model.per_seed.len()
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)
                    .map_err(|e| vantage::Error::Io {
                        path: dir.display().to_string(),
                        source: e,
                    })?;
                let text = format!(
                    "variant,mean_mpjpe,std_mpjpe,runs\nwith_flight_model,{},{},{}\nuniform_sampling,{},{},{}\n",
                    report.with_model.mean,
                    report.with_model.std,
                    report.with_model.per_seed.len(),
                    report.without_model.mean,
                    report.without_model.std,
                    report.without_model.per_seed.len()
                );
                std::fs::write(dir.join("ablation.csv"), text).map_err(|e| vantage::Error::Io {
                    path: dir.join("ablation.csv").display().to_string(),
                    source: e,
                })?;
                println!("wrote {}", dir.join("ablation.csv").display());
            }
        }
    }
    Ok(())
}
