use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use super::config::{parse_ladder, ExperimentConfig, ProblemRef};
use super::drivers::{run, Command};
use super::report::RunReport;
use super::ExperimentError;

#[derive(Debug, Parser)]
#[command(name = "gbsde", about = "Numerical experiments for G-BSDEs with uniformly continuous generators")]
pub struct Cli {
    pub command: Command,
    /// JSON configuration; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for report.json and checks.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Catalog problem name.
    #[arg(long)]
    pub problem: Option<String>,
    /// Comma-separated approximation indices, e.g. 2,4,8,16.
    #[arg(long)]
    pub n: Option<String>,
    /// Lattice time steps, or tree depth for the tree-only commands.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Lattice space nodes.
    #[arg(long)]
    pub space: Option<usize>,
}

impl Cli {
    /// Load the configuration file and apply the command-line overrides.
    pub fn resolve_config(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::from_json_str(&text)?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(p) = &self.problem {
            config.problem = Some(ProblemRef::Name(p.clone()));
        }
        if let Some(n) = &self.n {
            config.ladder = Some(parse_ladder(n)?);
        }
        if let Some(steps) = self.steps {
            if self.command.steps_are_tree_depth() {
                config.tree.n_steps = Some(steps);
            } else {
                config.solver.n_time = steps;
            }
        }
        if let Some(space) = self.space {
            config.solver.n_space = space;
        }
        config.validate()?;
        Ok(config)
    }

    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn write_outputs(dir: &std::path::Path, report: &RunReport) -> Result<(), ExperimentError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), report.to_json()?)?;
    std::fs::write(dir.join("checks.csv"), report.to_csv()?)?;
    Ok(())
}

fn execute(cli: &Cli) -> Result<RunReport, ExperimentError> {
    let config = cli.resolve_config()?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(ExperimentError::Config("--threads must be ≥ 1".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let report = run(cli.command, &config, rayon::current_num_threads())?;
    write_outputs(&cli.out_dir(&config), &report)?;
    Ok(report)
}

/// Parse arguments, run, write outputs and return the process exit code:
/// `0` when every check passes, `1` on a failed check or numerical error,
/// `2` on invalid input.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            for c in &report.checks {
                let n = c.n.map(|n| format!(" n={n}")).unwrap_or_default();
                println!(
                    "{} {}{} value={:e} bound={:e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.check_id,
                    n,
                    c.value,
                    c.bound
                );
            }
            let failed = report.checks.iter().filter(|c| !c.pass).count();
            println!("{}: {} checks, {} failed", report.command, report.checks.len(), failed);
            i32::from(failed > 0)
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
