use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fracture_df::config::ExperimentConfig;
use fracture_df::experiment::{self, describe, run_dir, SweepAxis};
use fracture_df::{output, RayonExecutor};

#[derive(Parser)]
#[command(name = "fracture-df", version, about = "Fracture width estimation with a direct particle filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Twin experiment: simulate the truth, draw data, run the filter.
    Run(Common),
    /// Repeat the twin experiment over one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// exploration, particles or seed.
        #[arg(long)]
        axis: SweepAxis,
        /// Values separated by `;`, e.g. "400;800", "4000,8000;2000,7000" or "1..21".
        #[arg(long)]
        values: String,
    },
    /// Write the mesh as plain text.
    MeshDump(Common),
    /// Simulate the true widths and report the discrete balances per step.
    ForwardOnly {
        #[command(flatten)]
        common: Common,
        /// Also write the block matrix in coordinate format.
        #[arg(long)]
        dump_matrix: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment: case1, case2, case3a or case3b.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => fracture_df::load_config(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => ExperimentConfig::preset("case1")?,
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig, what: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out").join(format!("{}_{what}", cfg.case)))
    }
}

struct Log {
    lines: Vec<String>,
}

impl Log {
    fn line(&mut self, s: impl Into<String>) {
        let s = s.into();
        eprintln!("{s}");
        self.lines.push(s);
    }
}

fn run(common: &Common) -> Result<ExitCode> {
    let cfg = common.load().context("config")?;
    let exec = RayonExecutor::new(common.threads).context("threads")?;
    let dir = common.out_dir(&cfg, "run");
    let mut log = Log { lines: Vec::new() };
    log.line(format!("case {} seed {} threads {}", cfg.case, cfg.seed, exec.threads()));
    let model = experiment::prepare(&cfg)?;
    log.line(format!(
        "setup {:.2}s: {} unknowns, {} observed, reduced system {}",
        model.setup_time.as_secs_f64(),
        model.mats.layout.len(),
        model.mats.layout.n_observed(),
        model.propagator.reduced_dim()
    ));
    let report = experiment::run_prepared(&model, &cfg, &exec)?;
    log.line(describe(&report));
    experiment::write_run(&dir, &cfg, &report, &log.lines)?;
    eprintln!("wrote {}", dir.display());
    Ok(match report.passed {
        Some(false) => ExitCode::from(1),
        _ => ExitCode::SUCCESS,
    })
}

fn run_sweep(common: &Common, axis: SweepAxis, values: &str) -> Result<ExitCode> {
    let cfg = common.load().context("config")?;
    let configs = experiment::sweep_configs(&cfg, axis, values)?;
    let exec = RayonExecutor::new(common.threads).context("threads")?;
    let dir = common.out_dir(&cfg, "sweep");
    std::fs::create_dir_all(&dir).with_context(|| format!("output: create {}", dir.display()))?;
    let mut log = Log { lines: Vec::new() };
    log.line(format!("sweep over {axis:?}: {} runs, threads {}", configs.len(), exec.threads()));
    let model = experiment::prepare(&cfg)?;
    let rows = experiment::sweep(&model, &configs, &exec, Some(&dir));
    let mut w = csv::Writer::from_path(dir.join("sweep.csv")).context("output: sweep.csv")?;
    let p = cfg.true_widths().len();
    let mut header: Vec<String> = ["run", "seed", "particles", "exploration"].map(String::from).to_vec();
    for prefix in ["width", "error", "entry_step", "settling_step"] {
        header.extend((1..=p).map(|k| format!("{prefix}_{k}")));
    }
    header.extend(["passed", "error_message"].map(String::from));
    w.write_record(&header)?;
    let mut all_ok = true;
    for row in &rows {
        let c = &row.config;
        let mut rec = vec![
            run_dir(Path::new(""), row.index).display().to_string(),
            c.seed.to_string(),
            c.filter.particles.to_string(),
            c.filter.exploration.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
        ];
        let step = |s: &Option<usize>| s.map_or(String::new(), |v| v.to_string());
        match &row.result {
            Ok(r) => {
                log.line(describe(r));
                rec.extend(r.estimated_widths.iter().map(f64::to_string));
                rec.extend(r.relative_errors.iter().map(f64::to_string));
                rec.extend(r.entry_steps.iter().map(step));
                rec.extend(r.settling_steps.iter().map(step));
                rec.push(r.passed.map_or(String::new(), |b| b.to_string()));
                rec.push(String::new());
                all_ok &= r.passed != Some(false);
            }
            Err(e) => {
                log.line(format!("run {} failed: {e}", row.index));
                rec.extend(std::iter::repeat_n(String::new(), 4 * p + 1));
                rec.push(e.clone());
                all_ok = false;
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    output::write_log(&dir.join("log.txt"), &log.lines)?;
    std::fs::write(dir.join("config.txt"), cfg.echo())?;
    eprintln!("wrote {}", dir.display());
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn mesh_dump(common: &Common) -> Result<ExitCode> {
    let cfg = common.load().context("config")?;
    let (mesh, ..) = experiment::build_system(&cfg)?;
    match &common.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("mesh.txt");
            let mut w = BufWriter::new(File::create(&path)?);
            output::write_mesh(&mut w, &mesh)?;
            w.flush()?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            output::write_mesh(&mut w, &mesh)?;
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn forward(common: &Common, dump_matrix: bool) -> Result<ExitCode> {
    let cfg = common.load().context("config")?;
    let dir = common.out_dir(&cfg, "forward");
    std::fs::create_dir_all(&dir)?;
    let mut log = Log { lines: Vec::new() };
    let (prepared, rows) = experiment::forward_only(&cfg)?;
    let worst = |f: fn(&experiment::ForwardRow) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
    log.line(format!(
        "{}: {} steps, max mass-balance residual {:.3e}, max intersection flux {:.3e}, max intersection pressure spread {:.3e}",
        cfg.case,
        rows.len(),
        worst(|r| r.mass_balance_residual),
        worst(|r| r.intersection_flux),
        worst(|r| r.intersection_pressure_spread)
    ));
    output::write_forward_csv(&dir.join("forward.csv"), &rows)?;
    if dump_matrix {
        let m = prepared.system.lambda_matrix()?;
        let mut w = BufWriter::new(File::create(dir.join("lambda.coo"))?);
        output::write_coo(&mut w, &m)?;
        w.flush()?;
    }
    std::fs::write(dir.join("config.txt"), cfg.echo())?;
    output::write_log(&dir.join("log.txt"), &log.lines)?;
    eprintln!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::Sweep { common, axis, values } => run_sweep(common, *axis, values),
        Command::MeshDump(c) => mesh_dump(c),
        Command::ForwardOnly { common, dump_matrix } => forward(common, *dump_matrix),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
