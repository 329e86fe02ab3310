//! A fully resolved unit of work. Jobs are what a manifest records, so
//! executing the same job twice yields the same bytes.

use cogcoop::erasure::ModelDescription;
use cogcoop::experiments::{
    convergence_sweep, deadline_trials, deviation_study, region_curve, write_deviation_csv,
    Algorithm, GridSpec,
};
use cogcoop::region::RatePair;
use cogcoop::sim::{run_with, JsonLines, ModelChannel, SimResult};
use cogcoop::{algorithm1_policy, algorithm2_policy, MixParams, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum AlgSpec {
    Alg1,
    Alg2 { g: f64, s: f64, u: f64 },
}

impl AlgSpec {
    pub fn algorithm(self) -> CliResult<Algorithm> {
        Ok(match self {
            AlgSpec::Alg1 => Algorithm::Alg1,
            AlgSpec::Alg2 { g, s, u } => Algorithm::Alg2(MixParams::new(g, s, u)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
pub enum Job {
    Classify {
        model: ModelDescription,
    },
    Region {
        model: ModelDescription,
        points: usize,
        format: Format,
    },
    Simulate {
        model: ModelDescription,
        alg: AlgSpec,
        k1: usize,
        k2: usize,
        /// Deadline in slots.
        n: Option<u64>,
        seed: u64,
        payload_len: usize,
        trace: bool,
    },
    Sweep {
        model: ModelDescription,
        alg: AlgSpec,
        r1: f64,
        r2: f64,
        n_list: Vec<u64>,
        seeds: Vec<u64>,
        /// Report deadline-met fractions instead of T/n.
        deadline: bool,
        format: Format,
    },
    Deviation {
        grid: GridSpec,
    },
}

/// What an output is for; decides where it is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Main,
    Summary,
    Trace,
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub role: Role,
    pub bytes: Vec<u8>,
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out =
        serde_json::to_vec_pretty(value).map_err(|e| cogcoop::Error::Internal(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| cogcoop::Error::Internal(format!("csv: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| CliError::Core(cogcoop::Error::Internal(format!("csv: {e}"))))
}

#[derive(Serialize)]
struct ClassifyOutput {
    case: cogcoop::CaseLabel,
    #[serde(rename = "B")]
    b: f64,
    ratio_34: f64,
    ratio_4: f64,
    exact: bool,
}

#[derive(Serialize)]
struct RegionCsvRow {
    case: cogcoop::CaseLabel,
    #[serde(rename = "R1")]
    r1: f64,
    #[serde(rename = "outer_R2")]
    outer_r2: f64,
    #[serde(rename = "inner_R2")]
    inner_r2: f64,
}

#[derive(Serialize)]
struct SimulateOutput {
    #[serde(rename = "T")]
    t: u64,
    /// Predicted T/n for the rates k/n, when a deadline n is set.
    #[serde(rename = "T_hat", skip_serializing_if = "Option::is_none")]
    t_hat: Option<f64>,
    #[serde(flatten)]
    result: SimResult,
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Classify { .. } => "classify",
            Job::Region { .. } => "region",
            Job::Simulate { .. } => "simulate",
            Job::Sweep { .. } => "sweep",
            Job::Deviation { .. } => "deviation",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Simulate { seed, .. } => Some(*seed),
            Job::Sweep { seeds, .. } => seeds.first().copied(),
            _ => None,
        }
    }

    pub fn execute(&self) -> CliResult<Vec<Artifact>> {
        let main = |bytes| Artifact {
            role: Role::Main,
            bytes,
        };
        match self {
            Job::Classify { model } => {
                let m = model.build()?;
                let c = m.classify_case()?;
                let b = cogcoop::region::r1_upper_bound(&m)?;
                let out = ClassifyOutput {
                    case: c.case,
                    b,
                    ratio_34: c.ratio_34,
                    ratio_4: c.ratio_4,
                    exact: c.exact,
                };
                Ok(vec![main(json_bytes(&out)?)])
            }
            Job::Region {
                model,
                points,
                format,
            } => {
                let curve = region_curve(&model.build()?, *points)?;
                let bytes = match format {
                    Format::Json => json_bytes(&curve)?,
                    Format::Csv => {
                        let rows: Vec<RegionCsvRow> = curve
                            .samples
                            .iter()
                            .map(|s| RegionCsvRow {
                                case: curve.case,
                                r1: s.r1,
                                outer_r2: s.outer_r2,
                                inner_r2: s.inner_r2,
                            })
                            .collect();
                        csv_bytes(&rows)?
                    }
                };
                Ok(vec![main(bytes)])
            }
            Job::Simulate {
                model,
                alg,
                k1,
                k2,
                n,
                seed,
                payload_len,
                trace,
            } => {
                let m = model.build()?;
                let mut cfg = SimConfig::new(m.clone(), *k1, *k2, *seed);
                cfg.deadline = *n;
                cfg.payload_len = *payload_len;
                let mut lines = JsonLines(Vec::new());
                let sink: Option<&mut dyn cogcoop::sim::TraceSink> =
                    if *trace { Some(&mut lines) } else { None };
                let mut channel = ModelChannel(&m);
                let result = match alg.algorithm()? {
                    Algorithm::Alg1 => {
                        run_with(&cfg, &mut algorithm1_policy(), &mut channel, sink)?
                    }
                    Algorithm::Alg2(p) => {
                        run_with(&cfg, &mut algorithm2_policy(p), &mut channel, sink)?
                    }
                };
                let t_hat = match n {
                    Some(n) if *n > 0 => {
                        let rates = RatePair {
                            r1: *k1 as f64 / *n as f64,
                            r2: *k2 as f64 / *n as f64,
                        };
                        // models outside the region formulas' domain still simulate
                        alg.algorithm()?.t_hat(&m, rates).ok()
                    }
                    _ => None,
                };
                let out = SimulateOutput {
                    t: result.total_slots,
                    t_hat,
                    result,
                };
                let mut arts = vec![main(json_bytes(&out)?)];
                if *trace {
                    arts.push(Artifact {
                        role: Role::Trace,
                        bytes: lines.0,
                    });
                }
                Ok(arts)
            }
            Job::Sweep {
                model,
                alg,
                r1,
                r2,
                n_list,
                seeds,
                deadline,
                format,
            } => {
                let m = model.build()?;
                let rates = RatePair::new(*r1, *r2)?;
                let alg = alg.algorithm()?;
                let bytes = if *deadline {
                    let rows = n_list
                        .iter()
                        .map(|&n| deadline_trials(&m, rates, n, seeds, alg))
                        .collect::<cogcoop::Result<Vec<_>>>()?;
                    match format {
                        Format::Json => json_bytes(&rows)?,
                        Format::Csv => csv_bytes(&rows)?,
                    }
                } else {
                    let rows = convergence_sweep(&m, rates, n_list, seeds, alg)?;
                    match format {
                        Format::Json => json_bytes(&rows)?,
                        Format::Csv => csv_bytes(&rows)?,
                    }
                };
                Ok(vec![main(bytes)])
            }
            Job::Deviation { grid } => {
                let study = deviation_study(grid)?;
                let mut csv = Vec::new();
                write_deviation_csv(&study.records, &mut csv)?;
                Ok(vec![
                    main(csv),
                    Artifact {
                        role: Role::Summary,
                        bytes: json_bytes(&study.summary)?,
                    },
                ])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> ModelDescription {
        ModelDescription::from_json(
            r#"{"kind":"independent","e12":0.5,"e13":0.5,"e14":0.5,"e23":0.5,"e24":0.5}"#,
        )
        .unwrap()
    }

    #[test]
    fn job_round_trips_through_json() {
        let job = Job::Simulate {
            model: symmetric(),
            alg: AlgSpec::Alg2 {
                g: 0.1,
                s: 0.2,
                u: 0.3,
            },
            k1: 10,
            k2: 5,
            n: Some(30),
            seed: 9,
            payload_len: 8,
            trace: false,
        };
        let text = serde_json::to_string(&job).unwrap();
        assert!(text.contains(r#""subcommand":"simulate""#));
        assert_eq!(serde_json::from_str::<Job>(&text).unwrap(), job);
    }

    #[test]
    fn simulate_is_deterministic() {
        let job = Job::Simulate {
            model: symmetric(),
            alg: AlgSpec::Alg1,
            k1: 50,
            k2: 50,
            n: None,
            seed: 3,
            payload_len: 8,
            trace: true,
        };
        let a = job.execute().unwrap();
        let b = job.execute().unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].bytes, b[0].bytes);
        assert_eq!(a[1].bytes, b[1].bytes);
    }

    #[test]
    fn region_csv_has_expected_columns() {
        let job = Job::Region {
            model: symmetric(),
            points: 3,
            format: Format::Csv,
        };
        let out = String::from_utf8(job.execute().unwrap().remove(0).bytes).unwrap();
        assert_eq!(out.lines().next().unwrap(), "case,R1,outer_R2,inner_R2");
        assert_eq!(out.lines().count(), 4);
    }
}
