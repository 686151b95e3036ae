//! Batch front-end for the `bwbp` library: parse a model file, run one operation, write a
//! JSON report and (for tabular results) a CSV file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bwbp::criteria::classify;
use bwbp::estimate::{decay_rate, dichotomy_scan, extinction_prob, survival_growth, DICHOTOMY_Z_CAP};
use bwbp::simulate::{run_batch, GenerationState, Outcome, RunConfig, RunRecord};
use bwbp::spine::{check_prop1, TreeSide};
use bwbp::{parse_model, Error as CoreError, ModelSpec, DEFAULT_SEED};
use clap::{Parser, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Validate,
    Classify,
    Simulate,
    Prop1,
    Extinction,
    Decay,
    Dichotomy,
    Growth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "bwbp", version, about = "Branching-within-branching process toolkit")]
pub struct JobConfig {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// Model file (JSON).
    #[arg(long = "model")]
    pub model_path: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED, value_parser = parse_u64)]
    pub seed: u64,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long = "zcap")]
    pub z_cap: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output path prefix; defaults to the model file name without extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Initial parasites in the single ancestor cell.
    #[arg(long, default_value_t = 1)]
    pub z0: u64,
    /// Dichotomy horizons, comma separated; defaults to horizon/10, horizon/2, horizon.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<u64>>,
    /// Upper end of the dichotomy band `[1, B]`.
    #[arg(long, default_value_t = 10)]
    pub band: u64,
}

fn parse_u64(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("not a 64-bit integer: {e}"))
}

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("cli: validation failed: {0}")]
    Validation(String),
    #[error("cli: missing argument: {0}")]
    Missing(&'static str),
    #[error("cli: cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cli: cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("cli: csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl JobError {
    /// 2 for validation failures, 3 for capacity or escaped-mass refusals, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            JobError::Core(CoreError::Assumption { .. } | CoreError::InvalidArgument { .. }) => 2,
            JobError::Validation(_) | JobError::Missing(_) => 2,
            JobError::Core(CoreError::Capacity { .. } | CoreError::EscapedMass { .. }) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobOutput {
    /// One-line summary for standard output.
    pub summary: String,
    pub report_path: PathBuf,
    pub csv_path: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: Subcommand,
    model_file: String,
    model_sha256: String,
    model_label: &'a str,
    seed: u64,
    parameters: Parameters,
    result: T,
}

#[derive(Serialize, Default)]
struct Parameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    z0: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z_cap: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizons: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    band: Option<u64>,
}

struct Job<'a> {
    cfg: &'a JobConfig,
    spec: ModelSpec,
    sha256: String,
    prefix: PathBuf,
}

type Table = (Vec<&'static str>, Vec<Vec<String>>);

impl Job<'_> {
    fn write<T: Serialize>(&self, params: Parameters, result: &T, table: Option<Table>) -> Result<(PathBuf, Option<PathBuf>), JobError> {
        let report = Report {
            tool: "bwbp",
            version: TOOL_VERSION,
            subcommand: self.cfg.subcommand,
            model_file: self
                .cfg
                .model_path
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default(),
            model_sha256: self.sha256.clone(),
            model_label: self.spec.label(),
            seed: self.cfg.seed,
            parameters: params,
            result,
        };
        let report_path = with_suffix(&self.prefix, ".report.json");
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        fs::write(&report_path, text).map_err(|source| JobError::Write {
            path: report_path.clone(),
            source,
        })?;

        let csv_path = match (table, self.cfg.format) {
            (Some((header, rows)), Format::Csv | Format::Both) => {
                let path = with_suffix(&self.prefix, ".data.csv");
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(&header)?;
                for row in rows {
                    w.write_record(&row)?;
                }
                w.flush().map_err(|source| JobError::Write {
                    path: path.clone(),
                    source,
                })?;
                Some(path)
            }
            _ => None,
        };
        Ok((report_path, csv_path))
    }

    fn need<T: Copy>(&self, value: Option<T>, name: &'static str) -> Result<T, JobError> {
        value.ok_or(JobError::Missing(name))
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Floats for one-line summaries: shortest round-trip form.
fn num(x: f64) -> String {
    format!("{x}")
}

/// Like [`num`] but always with a decimal point.
fn num_point(x: f64) -> String {
    format!("{x:?}")
}

fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs one job, writing its report files.
pub fn run_job(cfg: &JobConfig) -> Result<JobOutput, JobError> {
    let bytes = fs::read(&cfg.model_path).map_err(|source| JobError::Read {
        path: cfg.model_path.clone(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let spec: ModelSpec = parse_model(&text)?;
    let prefix = cfg.out.clone().unwrap_or_else(|| cfg.model_path.with_extension(""));
    let job = Job {
        cfg,
        spec,
        sha256: hex::encode(Sha256::digest(&bytes)),
        prefix,
    };
    let spec = &job.spec;

    let (summary, (report_path, csv_path)) = match cfg.subcommand {
        Subcommand::Validate => {
            let report = spec.validate();
            let moments = spec.moments();
            #[derive(Serialize)]
            struct Validation<'a> {
                assumptions: &'a bwbp::AssumptionReport,
                moments: &'a bwbp::Moments,
            }
            let files = job.write(
                Parameters::default(),
                &Validation {
                    assumptions: &report,
                    moments: &moments,
                },
                None,
            )?;
            if !report.all_hold() {
                return Err(JobError::Validation(report.violations.join("; ")));
            }
            let summary = format!(
                "valid=true nu={} gamma={} degenerate_sharing={}",
                num(moments.nu),
                num(moments.gamma),
                report.degenerate_sharing
            );
            (summary, files)
        }
        Subcommand::Classify => {
            let r = classify(spec)?;
            let files = job.write(Parameters::default(), &r, None)?;
            let summary = format!(
                "verdict={} nu={} gamma={} inf_theta={}@{}",
                r.verdict,
                num(r.nu),
                num(r.gamma),
                num(r.inf_theta_value),
                num_point(r.inf_theta_arg)
            );
            (summary, files)
        }
        Subcommand::Simulate => {
            let horizon = job.need(cfg.horizon, "--horizon")?;
            let z_cap = job.need(cfg.z_cap, "--zcap")?;
            let reps = cfg.reps.unwrap_or(1);
            let init = GenerationState::init(&[cfg.z0])?;
            let config = RunConfig::new(horizon, z_cap)?;
            let runs: Vec<RunRecord> = run_batch(spec, &init, &config, reps, cfg.seed, cfg.workers, |r| r)?;
            let mut rows = Vec::new();
            for rec in &runs {
                for row in &rec.rows {
                    rows.push(vec![
                        rec.replicate_index.to_string(),
                        row.n.to_string(),
                        row.z_total.to_string(),
                        row.t_star.to_string(),
                        opt_cell(row.t_total),
                    ]);
                }
            }
            let count = |f: fn(&Outcome) -> bool| runs.iter().filter(|r| f(&r.outcome)).count();
            let extinct = count(|o| matches!(o, Outcome::Extinct(_)));
            let cap_hit = count(|o| matches!(o, Outcome::ExplosionCapHit(_)));
            let alive = count(|o| matches!(o, Outcome::AliveAtHorizon));
            let params = Parameters {
                z0: Some(cfg.z0),
                reps: Some(reps),
                horizon: Some(horizon),
                z_cap: Some(z_cap),
                ..Default::default()
            };
            let files = job.write(params, &runs, Some((vec!["replicate", "n", "z_total", "t_star", "t_total"], rows)))?;
            (format!("runs={reps} extinct={extinct} cap_hit={cap_hit} alive_at_horizon={alive}"), files)
        }
        Subcommand::Prop1 => {
            let n = job.need(cfg.n, "--n")?;
            let cap = cfg.cap.unwrap_or(256);
            let tree = match cfg.reps {
                Some(reps) => TreeSide::MonteCarlo {
                    reps,
                    seed: cfg.seed,
                    workers: cfg.workers,
                },
                None => TreeSide::Exact,
            };
            let table = check_prop1(spec, cfg.z0, n, cap, tree)?;
            let rows = table
                .rows
                .iter()
                .map(|r| vec![r.k.to_string(), num(r.lhs), num(r.rhs), num(r.diff), opt_cell(r.se)])
                .collect();
            let params = Parameters {
                z0: Some(cfg.z0),
                reps: cfg.reps,
                n: Some(n),
                cap: Some(cap),
                ..Default::default()
            };
            let files = job.write(params, &table, Some((vec!["k", "lhs", "rhs", "diff", "se"], rows)))?;
            (format!("n={n} max_abs_diff={:e}", table.max_abs_diff()), files)
        }
        Subcommand::Extinction => {
            let reps = job.need(cfg.reps, "--reps")?;
            let horizon = job.need(cfg.horizon, "--horizon")?;
            let z_cap = job.need(cfg.z_cap, "--zcap")?;
            let r = extinction_prob(spec, cfg.z0, horizon, z_cap, reps, cfg.seed, cfg.workers)?;
            let params = Parameters {
                z0: Some(cfg.z0),
                reps: Some(reps),
                horizon: Some(horizon),
                z_cap: Some(z_cap),
                ..Default::default()
            };
            let files = job.write(params, &r, None)?;
            let summary = format!(
                "extinction={} ci=[{},{}] censored={} reps={reps}",
                num(r.point),
                num(r.ci_low),
                num(r.ci_high),
                num(r.censored_fraction)
            );
            (summary, files)
        }
        Subcommand::Decay => {
            let n = job.need(cfg.n, "--n")?;
            let cap = cfg.cap.unwrap_or(4096);
            let fit = decay_rate(spec, n, cap)?;
            let rows = fit
                .rows
                .iter()
                .map(|r| vec![r.n.to_string(), num(r.e_tstar), opt_cell(r.ratio.map(num))])
                .collect();
            let params = Parameters {
                n: Some(n),
                cap: Some(cap),
                ..Default::default()
            };
            let files = job.write(params, &fit, Some((vec!["n", "e_tstar", "ratio"], rows)))?;
            let last = fit.ratios().last().unwrap_or(f64::NAN);
            (format!("ratio({n})={} predicted_limit={}", num(last), num(fit.predicted_limit)), files)
        }
        Subcommand::Dichotomy => {
            let reps = job.need(cfg.reps, "--reps")?;
            let horizons = match (&cfg.horizons, cfg.horizon) {
                (Some(h), _) => h.clone(),
                (None, Some(h)) => vec![(h / 10).max(1), (h / 2).max(1), h],
                (None, None) => return Err(JobError::Missing("--horizon or --horizons")),
            };
            let z_cap = cfg.z_cap.unwrap_or(DICHOTOMY_Z_CAP);
            let scan = dichotomy_scan(spec, cfg.z0, &horizons, cfg.band, reps, cfg.seed, cfg.workers, z_cap)?;
            let rows = scan
                .rows
                .iter()
                .map(|r| vec![r.horizon.to_string(), num(r.fraction), num(r.se), r.in_band.to_string()])
                .collect();
            let params = Parameters {
                z0: Some(cfg.z0),
                reps: Some(reps),
                z_cap: Some(z_cap),
                horizons: Some(horizons),
                band: Some(cfg.band),
                ..Default::default()
            };
            let files = job.write(params, &scan, Some((vec!["horizon", "fraction", "se", "in_band"], rows)))?;
            let mut summary = String::from("fractions=");
            for (i, r) in scan.rows.iter().enumerate() {
                let sep = if i == 0 { "" } else { "," };
                let _ = write!(summary, "{sep}{}@{}", num(r.fraction), r.horizon);
            }
            let _ = write!(summary, " nonincreasing_within_2se={}", scan.nonincreasing_within_2se);
            (summary, files)
        }
        Subcommand::Growth => {
            let reps = job.need(cfg.reps, "--reps")?;
            let horizon = job.need(cfg.horizon, "--horizon")?;
            let z_cap = job.need(cfg.z_cap, "--zcap")?;
            let g = survival_growth(spec, cfg.z0, horizon, z_cap, reps, cfg.seed, cfg.workers)?;
            let rows = g
                .levels
                .iter()
                .map(|l| vec![l.t.to_string(), opt_cell(l.among_survivors.map(num)), opt_cell(l.among_cap_hit.map(num))])
                .collect();
            let params = Parameters {
                z0: Some(cfg.z0),
                reps: Some(reps),
                horizon: Some(horizon),
                z_cap: Some(z_cap),
                ..Default::default()
            };
            let files = job.write(params, &g, Some((vec!["t", "among_survivors", "among_cap_hit"], rows)))?;
            let summary = match g.tstar_always_one {
                Some(one) => format!("survivors={} tstar_always_one={one}", g.survivors),
                None if g.insufficient_survivors => format!("survivors={} insufficient_survivors=true", g.survivors),
                None => {
                    let top = g.levels.last().expect("levels");
                    format!(
                        "survivors={} cap_hit={} frac_tstar_gt_{}={}",
                        g.survivors,
                        g.cap_hit,
                        top.t,
                        opt_cell(top.among_cap_hit.or(top.among_survivors).map(num))
                    )
                }
            };
            (summary, files)
        }
    };
    Ok(JobOutput {
        summary,
        report_path,
        csv_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_parse_in_decimal_and_hex() {
        assert_eq!(parse_u64("24301"), Ok(24301));
        assert_eq!(parse_u64("0x5EED"), Ok(0x5EED));
        assert!(parse_u64("seed").is_err());
    }

    #[test]
    fn default_seed_and_format() {
        let cfg = JobConfig::try_parse_from(["bwbp", "classify", "--model", "m.json"]).unwrap();
        assert_eq!(cfg.seed, 0x5EED);
        assert_eq!(cfg.format, Format::Both);
        assert_eq!(cfg.workers, 1);
    }

    #[test]
    fn exit_codes() {
        let assumption = JobError::Core(CoreError::Assumption {
            module: "model",
            assumption: bwbp::Assumption::A2,
            detail: String::new(),
        });
        assert_eq!(assumption.exit_code(), 2);
        let escaped = JobError::Core(CoreError::EscapedMass {
            module: "spine",
            escaped: 0.6,
            limit: 0.5,
            detail: String::new(),
        });
        assert_eq!(escaped.exit_code(), 3);
        let structural = JobError::Core(CoreError::Structural {
            module: "law",
            detail: String::new(),
        });
        assert_eq!(structural.exit_code(), 1);
    }

    #[test]
    fn prefix_suffixes() {
        assert_eq!(with_suffix(Path::new("out/run.v1"), ".report.json"), PathBuf::from("out/run.v1.report.json"));
    }
}
