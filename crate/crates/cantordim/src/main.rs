use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cantordim::cli::{
    self, cmd_dim, cmd_expand, cmd_sample, cmd_verify, parse_real, sig15, InstanceFile,
};
use cantordim::error::{Error, Result};

/// Hausdorff dimension of digit-frequency level sets of Cantor series
/// expansions: exact closed form, variational certification, and Monte
/// Carlo consistency checks.
#[derive(Parser)]
#[command(name = "cantordim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form dimension and the certifying optimal matrix.
    Dim {
        /// Instance file (JSON).
        #[arg(long)]
        instance: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify the closed form: both solvers plus polytope sampling.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        /// Number of polytope samples (defaults to the instance setting).
        #[arg(long)]
        count: Option<usize>,
        /// Sampling seed (defaults to the instance setting).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a digit string from the optimal cylinder measure and trace
    /// its pointwise dimension.
    Sample {
        #[arg(long)]
        instance: PathBuf,
        /// Depth of the sampled string.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the CSV trace here; the summary then goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cantor series digits of a point, with statistics and its cylinder.
    Expand {
        #[arg(long)]
        instance: PathBuf,
        /// The point to expand: a decimal or an exact fraction like 5/6.
        #[arg(long)]
        x: String,
        /// Number of digits.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(cli::exit_code(&error))
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Dim { instance, out } => {
            let instance = load_instance(&instance)?;
            match cmd_dim(&instance) {
                Ok(report) => {
                    emit(out.as_deref(), &to_json(&report)?)?;
                    eprintln!("dimension = {}", sig15(report.dimension));
                    Ok(0)
                }
                Err(Error::Infeasible(report)) => {
                    emit(out.as_deref(), &to_json(&*report)?)?;
                    eprintln!(
                        "infeasible: tail inequality violated at level {}",
                        report.violated_level.unwrap_or(0)
                    );
                    Ok(2)
                }
                Err(error) => Err(error),
            }
        }
        Command::Verify {
            instance,
            count,
            seed,
            out,
        } => {
            let mut instance = load_instance(&instance)?;
            if let Some(count) = count {
                instance.samples = count;
            }
            if let Some(seed) = seed {
                instance.seed = seed;
            }
            let output = cmd_verify(&instance)?;
            emit(out.as_deref(), &to_json(&output)?)?;
            for (name, method) in &output.methods {
                eprintln!(
                    "{name}: objective {} (gap {}, {} iterations)",
                    sig15(method.objective),
                    sig15(method.gap_to_closed_form),
                    method.iterations
                );
            }
            eprintln!(
                "samples: {} drawn, max excess {}",
                output.sample_count,
                sig15(output.max_excess)
            );
            Ok(if output.pass { 0 } else { 3 })
        }
        Command::Sample {
            instance,
            n,
            seed,
            out,
        } => {
            let instance = load_instance(&instance)?;
            let seed = seed.unwrap_or(instance.seed);
            match out {
                Some(path) => {
                    let mut file = fs::File::create(&path).map_err(|e| {
                        Error::Parse(format!("cannot create {}: {e}", path.display()))
                    })?;
                    let summary = cmd_sample(&instance, n, seed, &mut file)?;
                    println!("{}", to_json(&summary)?);
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    let summary = cmd_sample(&instance, n, seed, &mut lock)?;
                    lock.flush()
                        .map_err(|e| Error::Parse(format!("cannot flush trace: {e}")))?;
                    eprintln!("{}", to_json(&summary)?);
                }
            }
            Ok(0)
        }
        Command::Expand {
            instance,
            x,
            n,
            out,
        } => {
            let instance = load_instance(&instance)?;
            let point = parse_real(&x)?;
            let output = cmd_expand(&instance, &point, n)?;
            emit(out.as_deref(), &to_json(&output)?)?;
            let digits: Vec<String> = output.digits.iter().map(u32::to_string).collect();
            eprintln!("digits: {}", digits.join(" "));
            Ok(0)
        }
    }
}

fn load_instance(path: &Path) -> Result<InstanceFile> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    InstanceFile::parse(&text)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(format!("serialisation: {e}")))
}

fn emit(out: Option<&Path>, payload: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, format!("{payload}\n"))
            .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display()))),
        None => {
            println!("{payload}");
            Ok(())
        }
    }
}
