use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rotmaster_cli::run::{simulate, validity_report, RunError};
use rotmaster_cli::scenario::{parse_scenario, preset_text, Backend, Scenario, PRESETS};
use rotmaster::Error;

/// Rotational master-equation simulator for laser-driven cold dimers.
#[derive(Parser, Debug)]
#[command(name = "rotmaster", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario (TOML file or built-in preset name).
    Simulate {
        config: String,
        #[command(flatten)]
        overrides: Overrides,
        /// Threads for the trajectory ensemble (results do not depend on it).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the vibrational validity report of a scenario.
    Validity {
        config: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List built-in presets, or print one as TOML.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(clap::Args, Debug)]
struct Overrides {
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    jmax: Option<u32>,
    #[arg(long)]
    tmax: Option<f64>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario) {
        if let Some(b) = self.backend {
            s.backend = b;
        }
        if let Some(seed) = self.seed {
            s.master_seed = seed;
        }
        if let Some(n) = self.trajectories {
            s.n_traj = n;
        }
        if let Some(dir) = &self.out_dir {
            s.output.dir = dir.to_string_lossy().into_owned();
        }
        if let Some(j) = self.jmax {
            s.j_max = j;
        }
        if let Some(t) = self.tmax {
            s.grid.t_max = t;
        }
    }
}

/// A path that exists is read as a file; otherwise a preset name is accepted.
fn load(config: &str, overrides: &Overrides) -> Result<Scenario, RunError> {
    let text = if Path::new(config).exists() {
        std::fs::read_to_string(config).map_err(|source| RunError::Io { path: config.into(), source })?
    } else if let Some(text) = preset_text(config) {
        text
    } else {
        return Err(RunError::Invalid(Error::config("<config>", format!("`{config}` is neither a file nor a preset"))));
    };
    let mut scenario = parse_scenario(&text)?;
    overrides.apply(&mut scenario);
    for w in scenario.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(scenario)
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&e.record()).expect("json"));
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, overrides, workers } => {
            let result = load(&config, &overrides).and_then(|s| simulate(&s, workers));
            match result {
                Ok((_, files)) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Validity { config, overrides } => match load(&config, &overrides) {
            Ok(s) => {
                let report = serde_json::json!({ "validity": validity_report(&s) });
                println!("{}", serde_json::to_string_pretty(&report).expect("json"));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Presets { show: Some(name) } => match preset_text(&name) {
            Some(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            None => fail(RunError::Invalid(Error::config("preset", format!("unknown preset `{name}`")))),
        },
        Command::Presets { show: None } => {
            for (name, description, _) in PRESETS {
                println!("{name}\t{description}");
            }
            ExitCode::SUCCESS
        }
    }
}
