//! Command-line front end.
//!
//! Exit codes: 0 success, 2 insufficient excitation, 3 parse or config
//! error, 4 solver failure, 5 infeasible design.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{FigureKind, RunConfig};
use crate::error::{Error, Result};
use crate::lmi::{design, DesignReport, DesignSpec, Formulation};
use crate::sdp::SdpStatus;
use crate::simulator::{phase1_experiment, run_campaign, run_repetition, CampaignReport};
use crate::sysid::{check_pe, least_squares_id, moments_about, Centering, IdentificationReport, TrajectoryData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_INFEASIBLE: i32 = 5;

/// Overrides the config seed; `--seed` wins over it.
pub const SEED_ENV: &str = "DATACONFORM_SEED";

#[derive(Debug, Parser)]
#[command(name = "dataconform", version, about = "Data-conforming LQR design and Monte Carlo campaigns")]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of repetitions.
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for repetitions.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// SDP stopping tolerance.
    #[arg(long = "solver-tol", global = true)]
    pub solver_tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Least-squares model and data moments from a trajectory CSV.
    Identify {
        data: PathBuf,
        /// Reference point of the moments.
        #[arg(long, value_enum, default_value = "sample-mean")]
        centering: CenteringArg,
    },
    /// Solve the single design named in a config.
    Design {
        config: PathBuf,
        /// Trajectory CSV; a phase-1 experiment is simulated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Monte Carlo campaign over every design in a config.
    Campaign { config: PathBuf },
    /// Trajectory CSVs for plotting one seeded repetition.
    FigureData { config: PathBuf },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum CenteringArg {
    SampleMean,
    Origin,
}

impl From<CenteringArg> for Centering {
    fn from(c: CenteringArg) -> Self {
        match c {
            CenteringArg::SampleMean => Centering::SampleMean,
            CenteringArg::Origin => Centering::Origin,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::PeViolation { .. } | Error::DegenerateData(_) => EXIT_PE,
        Error::Solver { status: SdpStatus::Infeasible } => EXIT_INFEASIBLE,
        Error::Solver { .. }
        | Error::Numerical(_)
        | Error::NonConvergence { .. }
        | Error::IllConditionedRecovery { .. }
        | Error::Unstable { .. } => EXIT_SOLVER,
        Error::Parse(_)
        | Error::InvalidParameter(_)
        | Error::Dimension(_)
        | Error::InsufficientSamples { .. }
        | Error::NotPsd { .. }
        | Error::NotPd(_)
        | Error::Io(_) => EXIT_CONFIG,
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let work = || match &cli.command {
        Command::Identify { data, centering } => cmd_identify(data, (*centering).into(), cli.out.as_deref()),
        Command::Design { config, data } => cmd_design(&load(cli, config)?, data.as_deref(), cli.out.as_deref()),
        Command::Campaign { config } => cmd_campaign(&load(cli, config)?, cli.out.as_deref()),
        Command::FigureData { config } => cmd_figure_data(&load(cli, config)?, cli.out.as_deref()),
    };
    match cli.jobs {
        Some(0) => Err(Error::InvalidParameter("--jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// Load a config and apply environment and flag overrides.
pub fn load(cli: &Cli, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Ok(s) = std::env::var(SEED_ENV) {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("{SEED_ENV} is not an unsigned integer: {s:?}")))?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(r) = cli.reps {
        cfg.repetitions = r;
    }
    if let Some(t) = cli.solver_tol {
        cfg.solver_tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>, name: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    match out {
        Some(dir) => {
            let mut f = create(dir, name)?;
            writeln!(f, "{text}")?;
            f.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

pub fn cmd_identify(data_csv: &Path, centering: Centering, out: Option<&Path>) -> Result<i32> {
    let file = File::open(data_csv).map_err(|e| Error::Parse(format!("cannot open {}: {e}", data_csv.display())))?;
    let data = TrajectoryData::read_csv(file)?;
    let pe = check_pe(&data);
    let model = least_squares_id(&data)?;
    let moments = moments_about(&data, centering)?;
    emit_json(&IdentificationReport::new(&model, pe, &moments), out, "identification.json")?;
    Ok(EXIT_OK)
}

pub fn cmd_design(cfg: &RunConfig, data_csv: Option<&Path>, out: Option<&Path>) -> Result<i32> {
    let [entry] = cfg.designs.as_slice() else {
        return Err(Error::InvalidParameter(format!(
            "design needs exactly one entry in `designs`, found {}",
            cfg.designs.len()
        )));
    };
    let weights = cfg.weights()?;
    let spec = match entry.formulation {
        Formulation::Standard => DesignSpec::new(cfg.model()?, weights, None, Formulation::Standard)?,
        f => {
            let data = match data_csv {
                Some(p) => TrajectoryData::read_csv(
                    File::open(p).map_err(|e| Error::Parse(format!("cannot open {}: {e}", p.display())))?,
                )?,
                None => phase1_experiment(&cfg.campaign()?, 0)?.0,
            };
            DesignSpec::from_data_about(&data, weights, f, cfg.centering)?
        }
    };
    let result = design(&spec, &cfg.solver_options())?;
    emit_json(&DesignReport::new(&spec, &result)?, out, "design.json")?;
    Ok(EXIT_OK)
}

/// More than half of the repetitions failing to design any one entry counts
/// as a systematic solver failure.
pub fn systematic_failure(report: &CampaignReport) -> bool {
    report.designs.iter().any(|d| 2 * d.n_designed_failures > report.repetitions)
}

fn safe_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn cmd_campaign(cfg: &RunConfig, out: Option<&Path>) -> Result<i32> {
    let campaign = cfg.campaign()?;
    let report = run_campaign(&campaign)?;
    print!("{}", report.table());
    let dir = out.map(Path::to_path_buf).or_else(|| cfg.output_dir.clone());
    if let Some(dir) = &dir {
        emit_json(&report, Some(dir), "campaign.json")?;
        for rep in 0..cfg.dump_trajectories.min(cfg.repetitions) {
            let rec = run_repetition(&campaign, rep)?;
            rec.phase1.write_csv(create(dir, &format!("rep{rep}_experiment.csv"))?)?;
            for (d, o) in campaign.designs.iter().zip(&rec.designs) {
                if let Some(t) = &o.phase2 {
                    t.write_csv(create(dir, &format!("rep{rep}_{}.csv", safe_name(&d.label)))?)?;
                }
            }
        }
    }
    Ok(if systematic_failure(&report) { EXIT_SOLVER } else { EXIT_OK })
}

fn write_rows(mut w: impl Write, header: &[&str], rows: impl Iterator<Item = Vec<f64>>, first: usize) -> Result<()> {
    writeln!(w, "k,{}", header.join(","))?;
    for (k, row) in rows.enumerate() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{},{}", first + k, cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn state_rows(t: &TrajectoryData, coords: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    t.states().column_iter().map(move |c| c.iter().take(coords).copied().collect())
}

/// Writes the CSVs of repetition 0. Scatter layout: for each design a pair
/// `<label>_experiment.csv` / `<label>_closed_loop.csv` of `(x1, x2)`.
/// Series layout: `experiment.csv` and `<label>.csv` of `x1`, with the
/// closed-loop time index continuing after the experiment.
pub fn cmd_figure_data(cfg: &RunConfig, out: Option<&Path>) -> Result<i32> {
    let kind = cfg
        .figure
        .ok_or_else(|| Error::InvalidParameter("figure-data needs `figure = \"scatter\"` or `\"series\"`".into()))?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("figure-data"));
    let campaign = cfg.campaign()?;
    let rec = run_repetition(&campaign, 0)?;
    let n = rec.phase1.horizon();
    let coords = rec.phase1.state_dim().min(2);
    if kind == FigureKind::Series {
        write_rows(create(&dir, "experiment.csv")?, &["x1"], state_rows(&rec.phase1, 1), 0)?;
    }
    let mut failed = false;
    for (d, o) in campaign.designs.iter().zip(&rec.designs) {
        let name = safe_name(&d.label);
        let Some(t) = &o.phase2 else {
            eprintln!("design {} failed: {}", d.label, o.result.as_ref().err().map_or("", String::as_str));
            failed = true;
            continue;
        };
        match kind {
            FigureKind::Scatter => {
                let header = &["x1", "x2"][..coords];
                let exp = state_rows(&rec.phase1, coords);
                write_rows(create(&dir, &format!("{name}_experiment.csv"))?, header, exp, 0)?;
                write_rows(create(&dir, &format!("{name}_closed_loop.csv"))?, header, state_rows(t, coords), n)?;
            }
            FigureKind::Series => {
                write_rows(create(&dir, &format!("{name}.csv"))?, &["x1"], state_rows(t, 1), n)?;
            }
        }
    }
    Ok(if failed { EXIT_SOLVER } else { EXIT_OK })
}
