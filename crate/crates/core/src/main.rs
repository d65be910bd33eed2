use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use alphahs::eulerian::project;
use alphahs::experiment::{
    run, write_csv, write_state_csv, DataSpec, ErrorReport, ExperimentConfig, Reference,
};
use alphahs::{Error, Result};

#[derive(Parser)]
#[command(name = "alphahs", version, about = "Alpha-dissipative Hunter-Saxton solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the projected initial data.
    Project(Common),
    /// Solve at a single dx and write node dumps and the energy trace.
    Solve(Common),
    /// Error report across a list of dx.
    Ladder(Common),
    /// Wall time with and without minimal time steps.
    Bench(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    Multipeakon,
    Cusp,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    data: Option<Builtin>,
    /// Dissipation strength of the cusp data.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    dx_list: Option<Vec<f64>>,
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    query_times: Option<Vec<f64>>,
    #[arg(long, overrides_with = "no_minimal")]
    minimal: bool,
    #[arg(long, overrides_with = "minimal")]
    no_minimal: bool,
    /// exact, none, or fine:<dx>.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self, default_data: DataSpec) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::new(default_data, vec![], 3.0),
        };
        match (self.data, self.beta) {
            (Some(Builtin::Multipeakon), _) => c.data = DataSpec::Multipeakon,
            (Some(Builtin::Cusp), b) => c.data = DataSpec::Cusp { beta: b.unwrap_or(0.95) },
            (None, Some(b)) => match &mut c.data {
                DataSpec::Cusp { beta } => *beta = b,
                _ => return Err(Error::Configuration("--beta applies to cusp data only".into())),
            },
            (None, None) => {}
        }
        if let Some(l) = &self.dx_list {
            c.dx_list = l.clone();
        }
        if let Some(dx) = self.dx {
            c.dx_list = vec![dx];
        }
        if let Some(t) = self.t_final {
            c.t_final = t;
        }
        if let Some(q) = &self.query_times {
            c.query_times = q.clone();
        }
        if self.minimal {
            c.minimal_steps = true;
        }
        if self.no_minimal {
            c.minimal_steps = false;
        }
        if let Some(r) = &self.reference {
            c.reference = Some(r.parse::<Reference>()?);
        }
        if let Some(o) = &self.out {
            c.out_dir = Some(o.clone());
        }
        Ok(c)
    }
}

fn print_report(report: &ErrorReport) -> Result<()> {
    write_csv(report, io::stdout().lock())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Project(a) => {
            let mut c = a.config(DataSpec::Multipeakon)?;
            if c.dx_list.is_empty() {
                c.dx_list = vec![0.1];
            }
            c.validate()?;
            let data = c.initial_data()?;
            for &dx in &c.dx_list {
                let s = project(data.as_ref(), dx)?;
                match &c.out_dir {
                    Some(dir) => {
                        fs::create_dir_all(dir)?;
                        let f = fs::File::create(dir.join(format!("projected_dx{dx:e}.csv")))?;
                        write_state_csv(&s, io::BufWriter::new(f))?;
                    }
                    None => write_state_csv(&s, io::stdout().lock())?,
                }
            }
            Ok(())
        }
        Command::Solve(a) => {
            let mut c = a.config(DataSpec::Multipeakon)?;
            c.dx_list.truncate(1);
            if c.dx_list.is_empty() {
                c.dx_list = vec![0.01];
            }
            let r = run(&c)?;
            let row = &r.rows[0];
            let mut out = io::stdout().lock();
            writeln!(
                out,
                "dx={} dt={} N={} iterations={} F_inf(T)={:.17}",
                row.dx, row.dt, row.n, row.iterations, row.final_energy
            )?;
            if let (Some(u), Some(f)) = (row.sup_u_err, row.f_inf_err) {
                writeln!(out, "sup_u_err={u:e} F_inf_err={f:e} ({})", r.reference)?;
            }
            Ok(())
        }
        Command::Ladder(a) => {
            let mut c = a.config(DataSpec::Multipeakon)?;
            if c.dx_list.is_empty() {
                c.dx_list = vec![1e-1, 1e-2, 1e-3];
            }
            print_report(&run(&c)?)
        }
        Command::Bench(a) => {
            let mut c = a.config(DataSpec::Cusp { beta: 0.95 })?;
            if c.dx_list.is_empty() {
                c.dx_list = vec![1e-3];
            }
            if a.reference.is_none() {
                c.reference = Some(Reference::None);
            }
            c.timing = true;
            let r = run(&c)?;
            let mut out = io::stdout().lock();
            writeln!(out, "dx,N,time_minimal_s,time_full_s,ratio")?;
            for row in &r.rows {
                let (m, f) = (row.time_minimal_s.unwrap(), row.time_full_s.unwrap());
                writeln!(out, "{:e},{},{m:.4},{f:.4},{:.2}", row.dx, row.n, f / m)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Configuration(_) | Error::InvalidInput(_) | Error::Json(_) => 2,
                Error::InvariantViolation(_) | Error::DataInconsistency(_) => 3,
                _ => 1,
            })
        }
    }
}
