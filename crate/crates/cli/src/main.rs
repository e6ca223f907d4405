use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use wittenlab::cohomology::{euler_identities, fixed_point_reference};
use wittenlab::decomp::{angle_sweep, SpectralOptions};
use wittenlab::mesh::{generate_mesh, load_mesh, GeneratorSpec, MeshDocument};
use wittenlab::scenario::{pool, run_scenario, verify_all, RunOptions, Scenario, ScenarioReport, TolProfile};
use wittenlab::Error;

#[derive(Parser)]
#[command(name = "wittenlab", version, about = "Witten-deformed discrete Hodge theory lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or check mesh documents.
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
    /// Run one scenario and emit its report.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every scenario in a directory.
    VerifyAll {
        directory: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Duality angles of a scenario's mesh over a list of s values (CSV).
    Sweep {
        scenario: PathBuf,
        /// Comma-separated s values.
        #[arg(long, value_delimiter = ',', required = true)]
        s: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Output file (run, sweep) or directory (verify-all).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    tol_profile: Option<Profile>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Strict,
    Default,
}

impl Common {
    fn run_options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            profile: self.tol_profile.map(|p| match p {
                Profile::Strict => TolProfile::Strict,
                Profile::Default => TolProfile::Default,
            }),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Disk,
    Annulus,
    Sphere,
    Torus,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Generate a symmetric mesh with its rotation field.
    Gen {
        #[arg(value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 8)]
        rings: usize,
        #[arg(long, default_value_t = 32)]
        sectors: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 1.0)]
        inner: f64,
        #[arg(long, default_value_t = 2.0)]
        outer: f64,
        #[arg(long, default_value_t = 12)]
        bands: usize,
        #[arg(long, default_value_t = 2.0)]
        major: f64,
        #[arg(long, default_value_t = 1.0)]
        minor: f64,
        #[arg(long, default_value_t = 16)]
        n1: usize,
        #[arg(long, default_value_t = 12)]
        n2: usize,
        /// Action order (defaults to the sector count).
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        field_scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a mesh document and print its diagnostics.
    Verify { mesh: PathBuf },
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn print_summary(r: &ScenarioReport) {
    let status = if r.summary.pass { "PASS" } else { "FAIL" };
    eprintln!("{status} {} ({} checks)", r.scenario.name, r.summary.checks);
    for f in &r.summary.failed {
        eprintln!("  failed: {f}");
    }
}

fn mesh_command(cmd: MeshCommand) -> Result<bool, Error> {
    match cmd {
        MeshCommand::Gen {
            kind,
            rings,
            sectors,
            radius,
            inner,
            outer,
            bands,
            major,
            minor,
            n1,
            n2,
            order,
            field_scale,
            out,
        } => {
            let spec = match kind {
                Kind::Disk => GeneratorSpec::Disk { rings, sectors, radius },
                Kind::Annulus => GeneratorSpec::Annulus {
                    inner,
                    outer,
                    rings,
                    sectors,
                },
                Kind::Sphere => GeneratorSpec::Sphere { bands, sectors },
                Kind::Torus => GeneratorSpec::Torus { major, minor, n1, n2 },
            };
            let doc = generate_mesh(&spec, order.unwrap_or_else(|| spec.sectors()), field_scale)?;
            load_mesh(&doc)?;
            write_or_print(out.as_deref(), &doc.to_json()?)?;
            Ok(true)
        }
        MeshCommand::Verify { mesh } => {
            let doc = MeshDocument::read(&mesh)?;
            let m = load_mesh(&doc)?;
            let fp = fixed_point_reference(&m)?;
            let eu = euler_identities(&m)?;
            let out = json!({
                "counts": m.complex.counts(),
                "action": m.action_diagnostics,
                "field": m.field_diagnostics,
                "fixed_point": fp,
                "euler": eu,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(true)
        }
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Mesh { command } => mesh_command(command),
        Command::Run { scenario, common } => {
            let sc = Scenario::read(&scenario)?;
            let opts = common.run_options();
            let pool = pool(common.jobs)?;
            let report = pool.install(|| run_scenario(&sc, &opts))?;
            print_summary(&report);
            write_or_print(common.out.as_deref(), &report.to_json()?)?;
            Ok(report.summary.pass)
        }
        Command::VerifyAll { directory, common } => {
            let opts = common.run_options();
            let (suite, reports) = verify_all(&directory, &opts, common.jobs)?;
            for r in &reports {
                print_summary(r);
            }
            for row in suite.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("FAIL {}: {}", row.file, row.error.as_deref().unwrap_or(""));
            }
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                for r in &reports {
                    std::fs::write(dir.join(format!("{}.report.json", r.scenario.name)), r.to_json()?)?;
                }
                std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&suite)?)?;
            }
            println!("{:<40} {:<6} failed", "scenario", "status");
            for row in &suite.rows {
                let status = if row.pass { "pass" } else { "FAIL" };
                println!("{:<40} {:<6} {}", row.file, status, row.failed.len());
            }
            Ok(suite.pass)
        }
        Command::Sweep { scenario, s, common } => {
            let sc = Scenario::read(&scenario)?;
            sc.validate()?;
            let opts = common.run_options();
            let tolerances = match opts.profile {
                Some(p) => p.tolerances(),
                None => sc.tolerances.unwrap_or_else(wittenlab::spectral::KernelTolerances::default_profile),
            };
            let mesh = load_mesh(&sc.mesh_document(0)?)?;
            let sopts = SpectralOptions {
                tolerances,
                seed: opts.seed.unwrap_or(sc.seed),
            };
            let pool = pool(common.jobs)?;
            let table = pool.install(|| angle_sweep(&mesh, &s, &sopts));
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            let text = String::from_utf8(buf).map_err(|e| Error::Malformed(e.to_string()))?;
            write_or_print(common.out.as_deref(), text.trim_end())?;
            for (s, e) in &table.failures {
                eprintln!("s={s}: {e}");
            }
            for s in &table.empty {
                eprintln!("s={s}: empty interior subspaces");
            }
            Ok(table.failures.is_empty())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(0),
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
