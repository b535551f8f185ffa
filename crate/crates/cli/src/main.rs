use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hexdtn::config::{hex, ConfigFile};
use hexdtn::export::{diagnostics_text, fields_csv, fields_vtk, matrix_text, write_text};
use hexdtn::interior::{solve_with, CellField, DefectSolution};
use hexdtn::validation::{convergence_study, lambda_error};
use hexdtn::{cache, Result};

#[derive(Parser)]
#[command(name = "hexdtn", version, about = "Defect scattering in hexagonal periodic media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Operator cache file; defaults to <out>/operators.bin.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Output directory; overrides [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Vtk,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the per-k half-space operators and store them in the cache.
    Precompute(Common),
    /// Solve the defect problem; writes fields, the DtN matrix and diagnostics.
    Solve(Common),
    /// Compare with the truncated-lattice oracle and write convergence curves.
    Validate(Common),
    /// Solve and export the fields in the requested format.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
    },
}

struct Setup {
    config: ConfigFile,
    out: PathBuf,
    cache: PathBuf,
}

fn setup(c: &Common) -> Result<Setup> {
    let config = ConfigFile::load(&c.config)?;
    let out = c.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let cache = c.cache.clone().unwrap_or_else(|| out.join("operators.bin"));
    Ok(Setup { config, out, cache })
}

fn solve(s: &Setup) -> Result<DefectSolution> {
    let problem = s.config.problem();
    let (pre, _) = cache::load_or_compute(&problem, Some(&s.cache))?;
    solve_with(&problem, pre)
}

fn all_fields(sol: &DefectSolution) -> Result<Vec<CellField>> {
    let mut fields = vec![sol.interior_field()];
    fields.extend(sol.exterior_field(&sol.horizon_cells())?);
    Ok(fields)
}

fn write_fields(out: &Path, sol: &DefectSolution, format: Format) -> Result<()> {
    let fields = all_fields(sol)?;
    if matches!(format, Format::Csv | Format::Both) {
        write_text(&out.join("fields.csv"), &fields_csv(&fields))?;
    }
    if matches!(format, Format::Vtk | Format::Both) {
        write_text(&out.join("fields.vtk"), &fields_vtk(&fields, &sol.interior)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Precompute(c) => {
            let s = setup(&c)?;
            let (pre, hit) = cache::load_or_compute(&s.config.problem(), Some(&s.cache))?;
            println!(
                "operators for {} wavenumbers ({}) at {}",
                pre.sets.len(),
                if hit { "cached" } else { "computed" },
                s.cache.display()
            );
        }
        Command::Solve(c) => {
            let s = setup(&c)?;
            let sol = solve(&s)?;
            let hash = hex(&s.config.hash()?);
            write_fields(&s.out, &sol, Format::Csv)?;
            write_text(&s.out.join("interior.csv"), &fields_csv(&[sol.interior_field()]))?;
            write_text(&s.out.join("lambda.txt"), &matrix_text("lambda_sigma_i", sol.lambda_full.as_ref()))?;
            write_text(&s.out.join("lambda0.txt"), &matrix_text("lambda_sigma_0", sol.lambda0.as_ref()))?;
            write_text(&s.out.join("diagnostics.txt"), &diagnostics_text(&sol.diagnostics, &hash))?;
            println!("solution written to {}", s.out.display());
        }
        Command::Validate(c) => {
            let s = setup(&c)?;
            let v = &s.config.validation;
            let problem = s.config.problem();
            let study = convergence_study(&problem, v.rings, v.steps, v.max_dofs)?;
            let sol = solve(&s)?;
            let lam = lambda_error(&sol, v.rings, v.max_dofs)?;
            let mono = study.monotone();
            write_text(&s.out.join("convergence.csv"), &study.to_csv())?;
            let mut report = String::from("# hexdtn validation v1\n");
            report.push_str(&format!("config_hash = {}\n", hex(&s.config.hash()?)));
            report.push_str(&format!(
                "headline_interior_error = {:.6e}\nheadline_neighbour_error = {:.6e}\nlambda_error = {:.6e}\n",
                study.base.errors.interior, study.base.errors.neighbours, lam
            ));
            for (name, ok) in ["h", "n_k", "rings"].iter().zip(mono) {
                report.push_str(&format!("monotone_{name} = {ok}\n"));
            }
            report.push_str("\n[convergence]\n");
            report.push_str(&study.to_csv());
            write_text(&s.out.join("validation.txt"), &report)?;
            print!("{report}");
        }
        Command::Export { common, format } => {
            let s = setup(&common)?;
            let sol = solve(&s)?;
            write_fields(&s.out, &sol, format)?;
            println!("fields exported to {}", s.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // fixed reduction order for bit-reproducible output
    faer::set_global_parallelism(faer::Par::Seq);
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
