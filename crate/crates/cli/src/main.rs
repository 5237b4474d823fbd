//! `dpw`: generate CMC surfaces from potentials and check proposed symmetries.
//!
//! Exit codes: 0 success (or verdict symmetric), 1 verdict not symmetric or
//! inconclusive, 2 unreadable or invalid input, 3 pole on an integration
//! path, 4 every node singular, 5 any other numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use dpw::export::{
    atomic_write, generate, parse_automorphism, parse_h_plus, with_schema, GridConfig, RunConfig,
};
use dpw::pipeline::{dress, integrate_source, split_frames};
use dpw::potentials::PotentialConfig;
use dpw::symmetry::{extract_chi, gauge_verdict, Verdict};
use dpw::Error;

#[derive(Parser)]
#[command(name = "dpw", version, about = "CMC surfaces from meromorphic potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate, split and write one OBJ mesh per λ plus a geometry report.
    Generate(RunArgs),
    /// Test a domain automorphism for being a symmetry of the surface.
    CheckSymmetry {
        #[command(flatten)]
        run: RunArgs,
        /// rot:k[:re,im], trans:re,im or mobius:a,b,c,d
        #[arg(long, short = 'a')]
        automorphism: String,
    },
    /// Dress the field by a plus loop, then test an automorphism.
    Dress {
        #[command(flatten)]
        run: RunArgs,
        /// omega:c or a JSON coefficient file
        #[arg(long = "h-plus")]
        h_plus: String,
        #[arg(long, short = 'a')]
        automorphism: String,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Full run config (JSON); the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Potential config (JSON).
    #[arg(long)]
    potential: Option<PathBuf>,
    /// n=NxN,R=r or disk:n_r=..,n_phi=..,radius=..
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated θ values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    trunc: Option<usize>,
    /// Mesh output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report path (stdout when absent for symmetry commands).
    #[arg(long)]
    report: Option<PathBuf>,
}

struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_) | Error::InvalidParameter(_) | Error::InvalidGrid(_) | Error::TwistViolation { .. } => 2,
            Error::PoleOnPath { .. } => 3,
            Error::AllNodesSingular => 4,
            _ => 5,
        };
        Failure(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(2, format!("cannot read {}: {e}", path.display())))
}

fn load_config(args: &RunArgs, default_potential: Option<PotentialConfig>) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str::<RunConfig>(&read(p)?).map_err(|e| Failure(2, format!("{}: {e}", p.display())))?,
        None => {
            let pot = match (&args.potential, default_potential) {
                (Some(p), _) => serde_json::from_str::<PotentialConfig>(&read(p)?)
                    .map_err(|e| Failure(2, format!("{}: {e}", p.display())))?,
                (None, Some(d)) => d,
                (None, None) => return Err(Failure(2, "either --config or --potential is required".into())),
            };
            RunConfig::new(pot)
        }
    };
    if args.config.is_some() {
        if let Some(p) = &args.potential {
            cfg.potential = serde_json::from_str(&read(p)?).map_err(|e| Failure(2, format!("{}: {e}", p.display())))?;
        }
    }
    if let Some(g) = &args.grid {
        cfg.grid = GridConfig::parse(g)?;
    }
    if let Some(l) = &args.lambdas {
        cfg.lambdas = l.clone();
    }
    if let Some(t) = args.trunc {
        cfg.trunc_degree = t;
    }
    if let Some(o) = &args.out {
        cfg.outputs.mesh = Some(o.clone());
    }
    if let Some(r) = &args.report {
        cfg.outputs.report = Some(r.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit_report(path: Option<&Path>, json: &str) -> Result<(), Failure> {
    match path {
        Some(p) => atomic_write(p, json.as_bytes()).map_err(Failure::from),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn cmd_generate(args: &RunArgs) -> Result<u8, Failure> {
    let mut cfg = load_config(args, None)?;
    let mesh = cfg.outputs.mesh.clone().unwrap_or_else(|| PathBuf::from("surface.obj"));
    cfg.outputs.mesh = Some(mesh.clone());
    let report_path = cfg.outputs.report.clone().unwrap_or_else(|| {
        let stem = mesh.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "surface".into());
        mesh.with_file_name(format!("{stem}_report.json"))
    });
    let inputs = [&args.config, &args.potential];
    if inputs.iter().any(|i| i.as_deref() == Some(report_path.as_path())) {
        return Err(Failure(2, format!("report path {} would overwrite an input file", report_path.display())));
    }
    let run = generate(&cfg)?;
    for w in &run.report.warnings {
        warn!("{w}");
    }
    for (path, obj) in run.report.meshes.iter().zip(&run.objs) {
        atomic_write(path, obj.as_bytes())?;
        info!("wrote {}", path.display());
    }
    let json = serde_json::to_string_pretty(&run.report).map_err(|e| Failure(5, e.to_string()))?;
    atomic_write(&report_path, json.as_bytes())?;
    for m in &run.report.members {
        eprintln!(
            "theta {:.6}: {} interior nodes, max |H + 1/2| {:.3e}, max Gauss-Codazzi {:.3e}",
            m.theta, m.summary.interior_nodes, m.summary.max_abs_h_error, m.summary.max_gauss_codazzi
        );
    }
    Ok(0)
}

fn symmetry_exit(v: Verdict) -> u8 {
    if v == Verdict::Symmetric {
        0
    } else {
        1
    }
}

fn cmd_check_symmetry(args: &RunArgs, spec: &str) -> Result<u8, Failure> {
    let g = parse_automorphism(spec)?;
    let cfg = load_config(args, None)?;
    let grid = cfg.grid.build()?;
    let ff = split_frames(&integrate_source(cfg.source()?, &grid)?);
    if ff.singular_flags.iter().all(|&s| s) {
        return Err(Error::AllNodesSingular.into());
    }
    let rep = extract_chi(&ff, &g);
    let gauge = gauge_verdict(&ff, &ff.source.potential, &g);
    if gauge != rep.verdict {
        warn!("gauge criterion verdict {gauge:?} differs from the frame verdict {:?}", rep.verdict);
    }
    emit_report(cfg.outputs.report.as_deref(), &with_schema(&rep)?)?;
    eprintln!("verdict: {:?}", rep.verdict);
    Ok(symmetry_exit(rep.verdict))
}

fn cmd_dress(args: &RunArgs, h_spec: &str, spec: &str) -> Result<u8, Failure> {
    let g = parse_automorphism(spec)?;
    let mut args = args.clone();
    if args.grid.is_none() && args.config.is_none() {
        args.grid = Some("n=9,R=0.5".into());
    }
    let cfg = load_config(&args, Some(PotentialConfig::Cylinder))?;
    let file = if h_spec.starts_with("omega:") { None } else { Some(read(Path::new(h_spec))?) };
    let h = parse_h_plus(h_spec, file.as_deref(), cfg.trunc_degree)?;
    let grid = cfg.grid.build()?;
    let ff = split_frames(&integrate_source(cfg.source()?, &grid)?);
    let dressed = dress(&h, &ff)?;
    if dressed.singular_flags.iter().all(|&s| s) {
        return Err(Error::AllNodesSingular.into());
    }
    let rep = extract_chi(&dressed, &g);
    emit_report(cfg.outputs.report.as_deref(), &with_schema(&rep)?)?;
    eprintln!("verdict: {:?}", rep.verdict);
    Ok(symmetry_exit(rep.verdict))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::CheckSymmetry { run, automorphism } => cmd_check_symmetry(run, automorphism),
        Command::Dress { run, h_plus, automorphism } => cmd_dress(run, h_plus, automorphism),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
