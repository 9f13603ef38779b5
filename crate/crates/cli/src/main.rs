use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use gradflow::io::{emit_convergence, ensure_dir, parse_entries, read_config, resolve_out_dir, write_text};
use gradflow::problem::EXAMPLES;
use gradflow::{
    convergence_study, run_suite, CsvObserver, DiagRecord, Error, Integrator, RunConfig, RunObserver, RunSummary,
    Solver,
};

/// Positivity-preserving DG solver for 1-D nonlinear nonlocal Fokker-Planck equations.
#[derive(Parser)]
#[command(name = "gradflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation and write CSV output.
    Run(RunArgs),
    /// Convergence study against the exact solution.
    Converge(ConvergeArgs),
    /// List the example catalog.
    Examples,
    /// Run the property suite at small N.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Catalog example id (1-6).
    #[arg(long)]
    example: Option<u32>,
    /// Initial datum variant (examples 4 and 6).
    #[arg(long)]
    variant: Option<String>,
    /// `key = value` configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "N", alias = "n")]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    /// euler or rk3.
    #[arg(long)]
    integrator: Option<String>,
    /// Output directory (default: $GRADFLOW_OUT, else ./gradflow-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Halve and retry steps whose energy increases.
    #[arg(long)]
    strict_energy: bool,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long, default_value_t = 1)]
    example: u32,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated, strictly increasing cell counts.
    #[arg(long = "N", alias = "n", value_delimiter = ',', default_value = "16,32,64,128")]
    n: Vec<usize>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Print `msg` with the subcommand's usage and exit with status 2.
fn usage_error(sub: &str, msg: impl std::fmt::Display) -> ! {
    let mut cmd = Cli::command();
    cmd.build();
    let mut sub = cmd.find_subcommand_mut(sub).expect("known subcommand").clone();
    sub.error(ErrorKind::InvalidValue, msg).exit()
}

fn build_config(a: &RunArgs) -> gradflow::Result<RunConfig> {
    let entries = match &a.config {
        Some(p) => parse_entries(&read_config(p)?)?,
        None => Vec::new(),
    };
    let file_example = entries.iter().find(|(k, _)| k == "example").map(|(_, v)| v.clone());
    let id = match (a.example, file_example) {
        (Some(id), _) => id,
        (None, Some(v)) => v.parse().map_err(|_| Error::Config(format!("example: cannot parse `{v}`")))?,
        (None, None) => 1,
    };
    let mut cfg = RunConfig::for_example(id)?;
    for (k, v) in &entries {
        if k != "example" {
            cfg.set(k, v)?;
        }
    }
    if let Some(v) = &a.variant {
        cfg.variant = Some(v.clone());
    }
    if let Some(n) = a.n {
        cfg.n_cells = n;
    }
    if let Some(k) = a.k {
        cfg.degree = k;
    }
    if let Some(t) = a.t_final {
        cfg.t_final = t;
    }
    if let Some(i) = &a.integrator {
        cfg.integrator = i.parse()?;
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    if a.strict_energy {
        cfg.strict_energy = true;
    }
    if let Some(s) = &a.snapshots {
        cfg.snapshots = s.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Default)]
struct Records(Vec<DiagRecord>);

impl RunObserver for Records {
    fn on_record(&mut self, r: &DiagRecord) {
        self.0.push(*r);
    }
}

fn run(a: RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = build_config(&a).unwrap_or_else(|e| usage_error("run", e));
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    write_text(&out.join("config.txt"), &cfg.to_text())?;
    let problem = cfg.problem()?;
    println!(
        "{} | N = {} k = {} t_final = {} integrator = {}",
        problem.name, cfg.n_cells, cfg.degree, cfg.t_final, cfg.integrator
    );
    let mut solver = Solver::new(problem, cfg.scheme_params(), cfg.n_cells)?;
    let mut csv = CsvObserver::new(&out)?;
    let mut recs = Records::default();
    let start = Instant::now();
    let result = solver.run(cfg.t_final, &cfg.snapshots, &mut gradflow::io::Tee(&mut csv, &mut recs));
    let files = csv.snapshot_files.len();
    csv.finish()?;
    for w in solver.warnings() {
        eprintln!("warning: {w}");
    }
    let s = RunSummary::from_records(&recs.0);
    println!(
        "steps {}  t {:.6}  wall {:.2}s\nmass drift {:.3e}  energy rises {}  min cell average {:.3e}  min point {:.3e}  corrected steps {}",
        s.steps,
        s.t_end,
        start.elapsed().as_secs_f64(),
        s.mass_drift,
        s.energy_violations,
        s.min_cell_avg,
        s.min_point,
        s.corrected_steps
    );
    println!("wrote {} ({} snapshots)", out.display(), files);
    match result {
        Ok(()) => Ok(ExitCode::SUCCESS),
        Err(e @ Error::SolverAbort { .. }) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(1))
        }
        Err(e) => Err(e.into()),
    }
}

fn converge(a: ConvergeArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = RunConfig::for_example(a.example).unwrap_or_else(|e| usage_error("converge", e));
    if let Some(k) = a.k {
        cfg.degree = k;
    }
    if let Some(t) = a.t_final {
        cfg.t_final = t;
    }
    if let Some(i) = &a.integrator {
        cfg.integrator = i.parse::<Integrator>().unwrap_or_else(|e| usage_error("converge", e));
    }
    if let Err(e) = cfg.validate() {
        usage_error("converge", e);
    }
    let problem = cfg.problem()?;
    if problem.exact_solution.is_none() || a.n.windows(2).any(|w| w[1] <= w[0]) || a.n.first().is_none_or(|&n| n < 2) {
        usage_error("converge", format!(
            "converge needs an example with an exact solution and a strictly increasing N list (got example {}, N {:?})",
            a.example, a.n
        ));
    }
    let rows = convergence_study(&problem, cfg.degree, &a.n, cfg.t_final, &cfg.scheme_params())?;
    println!("{:>6} {:>12} {:>8} {:>12} {:>8}", "N", "L2 error", "order", "Linf error", "order");
    let fmt = |o: Option<f64>| o.map_or("-".to_string(), |o| format!("{o:.3}"));
    for r in &rows {
        println!(
            "{:>6} {:>12.4e} {:>8} {:>12.4e} {:>8}",
            r.n,
            r.l2_error,
            fmt(r.l2_order),
            r.linf_error,
            fmt(r.linf_order)
        );
    }
    let out = resolve_out_dir(a.out.as_deref());
    ensure_dir(&out)?;
    let path = emit_convergence(&out, &rows)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn examples() -> ExitCode {
    for e in EXAMPLES.iter() {
        let variants = if e.variants.is_empty() { String::new() } else { format!(" [{}]", e.variants.join(", ")) };
        println!("{}  {}: {}{}", e.id, e.title, e.description, variants);
    }
    ExitCode::SUCCESS
}

fn verify(seed: u64) -> ExitCode {
    let checks = run_suite(seed);
    for c in &checks {
        println!("{} {} ({:.2}s): {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Converge(a) => converge(a),
        Command::Examples => Ok(examples()),
        Command::Verify { seed } => Ok(verify(seed)),
    };
    match result.context("gradflow failed") {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
