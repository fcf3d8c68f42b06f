use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lagrange_top::experiments::{
    classify, isolation_label, parse_m3_spec, run_simulation, run_sweep, single_m3, witness_table,
    write_witness_csv, ExperimentConfig, ExperimentError, Settings,
};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_NEGATIVE: u8 = 2;

/// Stability of the sleeping heavy symmetric top.
///
/// Exit codes: 0 stable / success, 1 usage or input error, 2 unstable,
/// not isolated, or methods disagree.
#[derive(Debug, Parser)]
#[command(name = "lagrange-top", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form, spectral and isolation verdicts for one m3.
    Classify,
    /// Integrate perturbed trajectories over a range of m3 and write a CSV summary.
    Sweep,
    /// Tabulate level-set points approaching a non-isolated equilibrium.
    Witness {
        /// gamma3 value of a witness row; repeatable or comma-separated.
        #[arg(long = "gamma3", value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.9, 0.99, 0.999])]
        gamma3: Vec<f64>,
    },
    /// Integrate one perturbed trajectory and write it as CSV.
    Simulate,
    /// Isolation verdict only.
    Certify,
}

#[derive(Debug, Args)]
struct Options {
    /// Config file of `key = value` lines; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Equatorial moment of inertia.
    #[arg(long = "A", global = true, allow_hyphen_values = true)]
    a: Option<f64>,
    /// Axial moment of inertia.
    #[arg(long = "C", global = true, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Mass.
    #[arg(long = "m", global = true, allow_hyphen_values = true)]
    m: Option<f64>,
    /// Gravitational acceleration.
    #[arg(long = "g", global = true, allow_hyphen_values = true)]
    g: Option<f64>,
    /// Height of the centre of gravity above the fixed point.
    #[arg(long = "z", global = true, allow_hyphen_values = true)]
    z: Option<f64>,
    /// Axial angular momentum: a value, a comma list, or a range start:stop:step. Repeatable.
    #[arg(long = "m3", global = true, allow_hyphen_values = true)]
    m3: Vec<String>,
    /// Size of the random transverse kick.
    #[arg(long, global = true, allow_hyphen_values = true)]
    perturbation: Option<f64>,
    /// Integrator time step.
    #[arg(long, global = true, allow_hyphen_values = true)]
    step: Option<f64>,
    /// Number of integrator steps.
    #[arg(long = "n-steps", global = true)]
    n_steps: Option<usize>,
    /// Record every k-th step in simulate output.
    #[arg(long = "record-every", global = true)]
    record_every: Option<usize>,
    /// Seed for the perturbation directions.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long = "out", global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Rescale gamma to unit length after every step.
    #[arg(long = "project-gamma", global = true)]
    project_gamma: bool,
}

impl Options {
    fn settings(&self) -> Result<Settings, ExperimentError> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
                Settings::parse(&text)?
            }
            None => Settings::default(),
        };
        let m3 = if self.m3.is_empty() {
            None
        } else {
            let mut values = Vec::new();
            for spec in &self.m3 {
                values.extend(parse_m3_spec(spec)?);
            }
            Some(values)
        };
        let flags = Settings {
            a: self.a,
            c: self.c,
            m: self.m,
            g: self.g,
            z: self.z,
            m3,
            step: self.step,
            n_steps: self.n_steps,
            record_every: self.record_every,
            project_gamma: self.project_gamma.then_some(true),
            perturbation: self.perturbation,
            seed: self.seed,
            output: self.out.clone(),
        };
        Ok(file.merge(flags))
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, ExperimentError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|source| ExperimentError::Io { path: p.to_path_buf(), source })?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Write CSV produced by `emit`, naming the destination in any failure.
fn write_csv<F, E>(path: Option<&Path>, emit: F) -> Result<(), ExperimentError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), E>,
    E: std::fmt::Display,
{
    let shown = path.map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string());
    let mut out = open_output(path)?;
    emit(&mut out).map_err(|e| ExperimentError::Invalid(format!("{shown}: {e}")))?;
    out.flush().map_err(|e| ExperimentError::Invalid(format!("{shown}: {e}")))
}

fn warn_if_not_physical(config: &ExperimentConfig) {
    if config.params.violates_triangle_inequality() {
        eprintln!(
            "warning: C = {} exceeds 2A = {}; no rigid body has these moments of inertia",
            config.params.c(),
            2.0 * config.params.a()
        );
    }
}

fn run(cli: &Cli) -> Result<u8, ExperimentError> {
    let mut settings = cli.opts.settings()?;
    if matches!(cli.command, Command::Simulate) {
        settings.record_every = settings.record_every.or(Some(10));
    }
    let config = settings.build()?;
    warn_if_not_physical(&config);
    let out_path = config.output_path.as_deref();

    match &cli.command {
        Command::Classify => {
            let c = classify(&config.params, single_m3(&config)?)?;
            print!("{}", c.render());
            Ok(if c.is_stable() { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Certify => {
            let m3 = single_m3(&config)?;
            let verdict = lagrange_top::certify_isolation(&config.params, m3)?;
            println!("m3        = {m3:?}");
            println!("isolation = {}", isolation_label(&verdict));
            Ok(if verdict.is_isolated() { EXIT_OK } else { EXIT_NEGATIVE })
        }
        Command::Witness { gamma3 } => {
            let m3 = single_m3(&config)?;
            match witness_table(&config.params, m3, gamma3)? {
                None => {
                    eprintln!("equilibrium is isolated: m3^2 >= 4*A*m*g*z, no witnesses exist");
                    Ok(EXIT_NEGATIVE)
                }
                Some(rows) => {
                    write_csv(out_path, |w| write_witness_csv(&rows, w))?;
                    Ok(EXIT_OK)
                }
            }
        }
        Command::Simulate => {
            let traj = run_simulation(&config)?;
            write_csv(out_path, |w| traj.write_csv(w))?;
            Ok(EXIT_OK)
        }
        Command::Sweep => {
            let sweep = run_sweep(&config)?;
            write_csv(out_path, |w| sweep.write_csv(w))?;
            if sweep.disagreements.is_empty() {
                Ok(EXIT_OK)
            } else {
                eprintln!("methods disagree at m3 = {:?}", sweep.disagreements);
                Ok(EXIT_NEGATIVE)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_values() {
        let dir = std::env::temp_dir().join(format!("lagrange-top-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("top.conf");
        std::fs::write(&path, "A = 3\nm3 = 1.5\nseed = 4\n").unwrap();
        let cli = Cli::parse_from([
            "lagrange-top",
            "classify",
            "--config",
            path.to_str().unwrap(),
            "--A",
            "2",
        ]);
        let s = cli.opts.settings().unwrap();
        assert_eq!((s.a, s.seed), (Some(2.0), Some(4)));
        assert_eq!(s.m3, Some(vec![1.5]));
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn repeated_m3_flags_concatenate() {
        let cli = Cli::parse_from(["lagrange-top", "sweep", "--m3", "1,2", "--m3", "3:3.5:0.25"]);
        assert_eq!(cli.opts.settings().unwrap().m3, Some(vec![1.0, 2.0, 3.0, 3.25, 3.5]));
    }
}
