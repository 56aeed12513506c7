//! Command-line entry point.
//!
//! ```text
//! latent-probe train --config PATH [--seed N] [--workers N] [--out DIR]
//! latent-probe diagnose --checkpoint PATH --mode MODE --start START
//!                       [--count N] [--workers N] [--out DIR] [--seed N]
//! latent-probe gradcheck [--inject-bug LOSS]
//! ```
//!
//! Environment overrides: `LATENT_PROBE_SEED`, `LATENT_PROBE_WORKERS`,
//! `LATENT_PROBE_OUT` (flags win over the environment).
//!
//! Exit codes: 0 ok, 1 gradient-check failure, 2 config error, 3 IO error,
//! 4 numeric failure.

use latent_probe::report::{
    cmd_diagnose, cmd_gradcheck, cmd_train, load_config, CliError, DiagnoseArgs, DiagnoseMode,
};
use std::path::PathBuf;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

struct Flags {
    values: Vec<(String, String)>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Self, CliError> {
        let mut values = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let key = args[i]
                .strip_prefix("--")
                .ok_or_else(|| CliError::Config(format!("unexpected argument {:?}", args[i])))?;
            let value = args
                .get(i + 1)
                .ok_or_else(|| CliError::Config(format!("flag --{key} needs a value")))?;
            values.push((key.to_string(), value.clone()));
            i += 2;
        }
        Ok(Self { values })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let i = self.values.iter().position(|(k, _)| k == key)?;
        Some(self.values.remove(i).1)
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some((k, _)) = self.values.first() {
            return Err(CliError::Config(format!("unknown flag --{k}")));
        }
        Ok(())
    }
}

fn env_override(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

fn parse_u64(key: &str, v: &str) -> Result<u64, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("invalid value {v:?} for {key}")))
}

fn run(args: &[String]) -> Result<(), CliError> {
    let Some(command) = args.first() else {
        return Err(CliError::Config(
            "usage: latent-probe <train|diagnose|gradcheck> [flags]".into(),
        ));
    };
    let mut flags = Flags::parse(&args[1..])?;
    let seed_override = flags
        .take("seed")
        .or_else(|| env_override("LATENT_PROBE_SEED"));
    let workers_override = flags
        .take("workers")
        .or_else(|| env_override("LATENT_PROBE_WORKERS"));
    let out_override = flags
        .take("out")
        .or_else(|| env_override("LATENT_PROBE_OUT"));

    match command.as_str() {
        "train" => {
            let config = flags
                .take("config")
                .ok_or_else(|| CliError::Config("train requires --config PATH".into()))?;
            flags.finish()?;
            let mut cfg = load_config(&PathBuf::from(&config))?;
            if let Some(seed) = &seed_override {
                cfg.master_seed = parse_u64("--seed", seed)?;
                cfg.env.seed = cfg.master_seed;
                cfg.train.seed = cfg.master_seed;
            }
            if let Some(w) = &workers_override {
                cfg.workers = parse_u64("--workers", w)? as usize;
            }
            if let Some(out) = &out_override {
                cfg.out_dir = PathBuf::from(out);
            }
            let artifacts = cmd_train(&cfg)?;
            println!(
                "trained {} env frames; wrote {}, {}, {}",
                artifacts.env_frames,
                artifacts.checkpoint.display(),
                artifacts.log.display(),
                artifacts.resolved.display()
            );
            Ok(())
        }
        "diagnose" => {
            let checkpoint = flags
                .take("checkpoint")
                .ok_or_else(|| CliError::Config("diagnose requires --checkpoint PATH".into()))?;
            let mode_raw = flags
                .take("mode")
                .ok_or_else(|| CliError::Config("diagnose requires --mode".into()))?;
            let mode = DiagnoseMode::parse(&mode_raw).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown mode {mode_raw:?}; expected discrepancy|reward|attractor-map|uncertainty"
                ))
            })?;
            let start = flags.take("start").unwrap_or_else(|| "id".to_string());
            let count = flags
                .take("count")
                .map(|v| parse_u64("--count", &v).map(|n| n as usize))
                .transpose()?;
            flags.finish()?;
            let diag_args = DiagnoseArgs {
                checkpoint: PathBuf::from(checkpoint),
                mode,
                start,
                count,
                workers: workers_override
                    .map(|v| parse_u64("--workers", &v).map(|n| n as usize))
                    .transpose()?,
                out: out_override.map(PathBuf::from),
                seed: seed_override
                    .map(|v| parse_u64("--seed", &v))
                    .transpose()?,
            };
            let emitted = cmd_diagnose(&diag_args)?;
            for path in emitted {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        "gradcheck" => {
            let inject = flags.take("inject-bug");
            flags.finish()?;
            let report = cmd_gradcheck(inject.as_deref())?;
            print!("{report}");
            Ok(())
        }
        other => Err(CliError::Config(format!(
            "unknown command {other:?}; expected train, diagnose, or gradcheck"
        ))),
    }
}
