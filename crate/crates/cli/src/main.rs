mod error;
mod job;
mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cogcoop::erasure::ModelDescription;
use cogcoop::experiments::{GridSpec, R1Step};
use cogcoop::sim::packets_for;
use serde::Deserialize;

use error::{CliError, CliResult};
use job::{AlgSpec, Artifact, Format, Job, Role};
use manifest::{manifest_path, summary_path, RunManifest};

#[derive(Parser, Debug)]
#[command(
    name = "cogcoop",
    version,
    about = "Cooperative broadcast erasure network: simulator and rate regions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads for grid cells and seeds.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Statistical case and the primary-rate bound B of a model.
    Classify(Common),
    /// Outer and achievable secondary rate over a grid of primary rates.
    Region {
        #[command(flatten)]
        common: Common,
        /// Number of evenly spaced R1 values in [0, B].
        #[arg(long)]
        points: Option<usize>,
    },
    /// One simulated run.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        alg: AlgArgs,
        #[command(flatten)]
        rates: RateArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        payload_len: Option<usize>,
        /// Write a JSON-lines slot trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Mean T/n (or deadline-met fraction) over seeds, for several n.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        alg: AlgArgs,
        #[arg(long)]
        r1: Option<f64>,
        #[arg(long)]
        r2: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<u64>>,
        /// Number of seeds; seed i is `--seed` + i.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run the deadline code and report the fraction of runs that met it.
        #[arg(long)]
        deadline: bool,
    },
    /// Inner/outer deviation study over a grid of independent models.
    Deviation {
        #[command(flatten)]
        common: Common,
        /// "default" or a JSON grid file.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, value_enum)]
        r1_step: Option<StepArg>,
        /// ε¹₄ and ε²₄ bound of the restricted subgrid.
        #[arg(long)]
        restrict_max: Option<f64>,
        #[arg(long)]
        bin_width: Option<f64>,
    },
    /// Re-run the job recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Compare with the recorded output files instead of rewriting them.
        #[arg(long)]
        verify: bool,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model JSON file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug, Default)]
struct AlgArgs {
    #[arg(long, value_enum)]
    alg: Option<AlgName>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    u: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct RateArgs {
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    /// Deadline in slots; with --r1/--r2 also sets k = ⌈nR⌉.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AlgName {
    Alg1,
    Alg2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum StepArg {
    Frac,
    Abs,
}

/// Model in a config file: a path or the description inline.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ModelRef {
    Path(PathBuf),
    Inline(ModelDescription),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: Option<ModelRef>,
    out: Option<PathBuf>,
    format: Option<Format>,
    alg: Option<AlgName>,
    g: Option<f64>,
    s: Option<f64>,
    u: Option<f64>,
    k1: Option<usize>,
    k2: Option<usize>,
    n: Option<u64>,
    r1: Option<f64>,
    r2: Option<f64>,
    seed: Option<u64>,
    seeds: Option<usize>,
    n_list: Option<Vec<u64>>,
    deadline: Option<bool>,
    payload_len: Option<usize>,
    points: Option<usize>,
    grid: Option<GridSpec>,
    r1_step: Option<StepArg>,
    restrict_max: Option<f64>,
    bin_width: Option<f64>,
    jobs: Option<usize>,
}

/// Config file contents plus the directory relative paths resolve against.
struct Loaded {
    file: ConfigFile,
    dir: PathBuf,
}

impl Loaded {
    fn from(common: &Common) -> CliResult<Self> {
        match &common.config {
            None => Ok(Loaded {
                file: ConfigFile::default(),
                dir: PathBuf::from("."),
            }),
            Some(p) => {
                let text = read(p)?;
                let file = serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("{}: bad config: {e}", p.display())))?;
                let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Ok(Loaded { file, dir })
            }
        }
    }

    fn model(&mut self, flag: &Option<PathBuf>) -> CliResult<ModelDescription> {
        let load = |p: &Path| -> CliResult<ModelDescription> {
            Ok(ModelDescription::from_json(&read(p)?)?)
        };
        match (flag, self.file.model.take()) {
            (Some(p), _) => load(p),
            (None, Some(ModelRef::Path(p))) => load(&self.dir.join(p)),
            (None, Some(ModelRef::Inline(m))) => Ok(m),
            (None, None) => Err(CliError::usage(
                "a model is required (--model PATH or \"model\" in --config)",
            )),
        }
    }

    fn alg(&self, a: &AlgArgs) -> CliResult<AlgSpec> {
        let f = &self.file;
        let name = a.alg.or(f.alg).unwrap_or(AlgName::Alg1);
        let (g, s, u) = (a.g.or(f.g), a.s.or(f.s), a.u.or(f.u));
        match name {
            AlgName::Alg1 => {
                if g.is_some() || s.is_some() || u.is_some() {
                    return Err(CliError::usage("--g, --s and --u only apply to --alg alg2"));
                }
                Ok(AlgSpec::Alg1)
            }
            AlgName::Alg2 => Ok(AlgSpec::Alg2 {
                g: g.unwrap_or(0.0),
                s: s.unwrap_or(0.0),
                u: u.unwrap_or(0.0),
            }),
        }
    }
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })
}

fn fresh_seed() -> u64 {
    let seed = rand::random::<u64>();
    eprintln!("{}", serde_json::json!({ "generated_seed": seed }));
    seed
}

/// Where the outputs of a job go.
struct Plan {
    job: Job,
    out: Option<PathBuf>,
    trace: Option<PathBuf>,
}

fn resolve(command: Command) -> CliResult<(Plan, Option<usize>)> {
    match command {
        Command::Classify(common) => {
            let mut cfg = Loaded::from(&common)?;
            if common.format == Some(Format::Csv) {
                return Err(CliError::usage("classify only writes JSON"));
            }
            let model = cfg.model(&common.model)?;
            let out = common.out.or(cfg.file.out.take());
            Ok((
                Plan {
                    job: Job::Classify { model },
                    out,
                    trace: None,
                },
                cfg.file.jobs,
            ))
        }
        Command::Region { common, points } => {
            let mut cfg = Loaded::from(&common)?;
            let model = cfg.model(&common.model)?;
            let f = &cfg.file;
            let job = Job::Region {
                model,
                points: points.or(f.points).unwrap_or(101),
                format: common.format.or(f.format).unwrap_or(Format::Json),
            };
            Ok((
                Plan {
                    job,
                    out: common.out.or(cfg.file.out.take()),
                    trace: None,
                },
                cfg.file.jobs,
            ))
        }
        Command::Simulate {
            common,
            alg,
            rates,
            seed,
            payload_len,
            trace,
        } => {
            let mut cfg = Loaded::from(&common)?;
            if common.format == Some(Format::Csv) {
                return Err(CliError::usage("simulate only writes JSON"));
            }
            let alg = cfg.alg(&alg)?;
            let model = cfg.model(&common.model)?;
            let f = &cfg.file;
            let (k1, k2) = (rates.k1.or(f.k1), rates.k2.or(f.k2));
            let (r1, r2) = (rates.r1.or(f.r1), rates.r2.or(f.r2));
            let n = rates.n.or(f.n);
            let (k1, k2) = match (k1, k2, r1, r2) {
                (Some(k1), Some(k2), None, None) => (k1, k2),
                (None, None, Some(r1), Some(r2)) => {
                    let n = n.ok_or_else(|| CliError::usage("--r1/--r2 need --n"))?;
                    if !(r1 >= 0.0 && r2 >= 0.0) {
                        return Err(CliError::usage("rates must be nonnegative"));
                    }
                    (packets_for(r1, n), packets_for(r2, n))
                }
                _ => {
                    return Err(CliError::usage(
                        "give either --k1 and --k2, or --r1, --r2 and --n",
                    ))
                }
            };
            let job = Job::Simulate {
                model,
                alg,
                k1,
                k2,
                n,
                seed: seed.or(f.seed).unwrap_or_else(fresh_seed),
                payload_len: payload_len.or(f.payload_len).unwrap_or(8),
                trace: trace.is_some(),
            };
            Ok((
                Plan {
                    job,
                    out: common.out.or(cfg.file.out.take()),
                    trace,
                },
                cfg.file.jobs,
            ))
        }
        Command::Sweep {
            common,
            alg,
            r1,
            r2,
            n_list,
            seeds,
            seed,
            deadline,
        } => {
            let mut cfg = Loaded::from(&common)?;
            let alg = cfg.alg(&alg)?;
            let model = cfg.model(&common.model)?;
            let f = &cfg.file;
            let (Some(r1), Some(r2)) = (r1.or(f.r1), r2.or(f.r2)) else {
                return Err(CliError::usage("sweep needs --r1 and --r2"));
            };
            let n_list = n_list
                .or_else(|| f.n_list.clone())
                .ok_or_else(|| CliError::usage("sweep needs --n-list"))?;
            if n_list.is_empty() || n_list.contains(&0) {
                return Err(CliError::usage("--n-list entries must be positive"));
            }
            let count = seeds.or(f.seeds).unwrap_or(20);
            if count == 0 {
                return Err(CliError::usage("--seeds must be positive"));
            }
            let base = seed.or(f.seed).unwrap_or_else(fresh_seed);
            let job = Job::Sweep {
                model,
                alg,
                r1,
                r2,
                n_list,
                seeds: (0..count as u64).map(|i| base.wrapping_add(i)).collect(),
                deadline: deadline || f.deadline.unwrap_or(false),
                format: common.format.or(f.format).unwrap_or(Format::Csv),
            };
            Ok((
                Plan {
                    job,
                    out: common.out.or(cfg.file.out.take()),
                    trace: None,
                },
                cfg.file.jobs,
            ))
        }
        Command::Deviation {
            common,
            grid,
            r1_step,
            restrict_max,
            bin_width,
        } => {
            let mut cfg = Loaded::from(&common)?;
            if common.model.is_some() || cfg.file.model.is_some() {
                return Err(CliError::usage(
                    "deviation sweeps its own grid of models; drop --model",
                ));
            }
            if common.format == Some(Format::Json) {
                return Err(CliError::usage("deviation writes CSV plus a JSON summary"));
            }
            let f = &mut cfg.file;
            let mut grid_spec = match grid.as_deref() {
                None => f.grid.take().unwrap_or_default(),
                Some("default") => GridSpec::default(),
                Some(path) => serde_json::from_str(&read(Path::new(path))?)
                    .map_err(|e| CliError::usage(format!("{path}: bad grid: {e}")))?,
            };
            if let Some(step) = r1_step.or(f.r1_step) {
                grid_spec.r1_step = match step {
                    StepArg::Frac => R1Step::FractionOfB,
                    StepArg::Abs => R1Step::Absolute,
                };
            }
            if let Some(x) = restrict_max.or(f.restrict_max) {
                grid_spec.restrict_max = x;
            }
            if let Some(x) = bin_width.or(f.bin_width) {
                grid_spec.bin_width = x;
            }
            let out = common.out.or(f.out.take());
            Ok((
                Plan {
                    job: Job::Deviation { grid: grid_spec },
                    out,
                    trace: None,
                },
                f.jobs,
            ))
        }
        Command::Replay { .. } => unreachable!("replay is handled before resolution"),
    }
}

/// Destination of each artifact: a path, or None for the console.
fn destinations(plan: &Plan, artifacts: &[Artifact]) -> Vec<(Role, Option<PathBuf>)> {
    artifacts
        .iter()
        .map(|a| {
            let dest = match a.role {
                Role::Main => plan.out.clone(),
                Role::Summary => plan.out.as_deref().map(summary_path),
                Role::Trace => plan.trace.clone(),
            };
            (a.role, dest)
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

fn emit(role: Role, dest: &Option<PathBuf>, bytes: &[u8]) -> CliResult<()> {
    match dest {
        Some(p) => write_file(p, bytes),
        None => {
            // with no --out, the summary goes to stderr so stdout stays one document
            let res = if role == Role::Summary {
                std::io::stderr().write_all(bytes)
            } else {
                std::io::stdout().write_all(bytes)
            };
            res.map_err(|source| CliError::Write {
                path: "console".into(),
                source,
            })
        }
    }
}

fn label(role: Role, dest: &Option<PathBuf>) -> String {
    match (dest, role) {
        (Some(p), _) => p.display().to_string(),
        (None, Role::Summary) => "stderr".into(),
        (None, _) => "-".into(),
    }
}

fn run_plan(plan: Plan) -> CliResult<()> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let artifacts = plan.job.execute()?;
    let dests = destinations(&plan, &artifacts);
    for (a, (role, dest)) in artifacts.iter().zip(&dests) {
        emit(*role, dest, &a.bytes)?;
    }
    let manifest = RunManifest {
        subcommand: plan.job.name().into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: plan.job.seed(),
        outputs: dests.iter().map(|(r, d)| (*r, label(*r, d))).collect(),
        started_unix_secs: started,
        wall_clock_secs: clock.elapsed().as_secs_f64(),
        job: plan.job,
    };
    let mut text = manifest.to_json();
    text.push('\n');
    match &plan.out {
        Some(out) => write_file(&manifest_path(out), text.as_bytes()),
        None => {
            eprint!("{text}");
            Ok(())
        }
    }
}

fn replay(path: &Path, verify: bool) -> CliResult<()> {
    let m = RunManifest::load(path)?;
    let artifacts = m.job.execute()?;
    for a in &artifacts {
        let dest = m
            .outputs
            .get(&a.role)
            .ok_or_else(|| CliError::usage(format!("manifest lists no {:?} output", a.role)))?;
        let file = match dest.as_str() {
            "-" | "stderr" => None,
            p => Some(PathBuf::from(p)),
        };
        match (verify, file) {
            (true, Some(p)) => {
                let old = std::fs::read(&p).map_err(|source| CliError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                if old != a.bytes {
                    return Err(CliError::Mismatch(p.display().to_string()));
                }
            }
            (true, None) => {}
            (false, file) => emit(a.role, &file, &a.bytes)?,
        }
    }
    if verify {
        eprintln!(
            "{}",
            serde_json::json!({ "replay": "identical", "outputs": artifacts.len() })
        );
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let jobs_flag = cli.jobs;
    if let Command::Replay { manifest, verify } = &cli.command {
        set_jobs(jobs_flag)?;
        return replay(manifest, *verify);
    }
    let (plan, jobs_cfg) = resolve(cli.command)?;
    set_jobs(jobs_flag.or(jobs_cfg))?;
    run_plan(plan)
}

fn set_jobs(jobs: Option<usize>) -> CliResult<()> {
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::usage("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Core(cogcoop::Error::Internal(e.to_string())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
