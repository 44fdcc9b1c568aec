//! Mechanism batteries, parameter sweeps, and output files.
//!
//! A battery runs the five comparison mechanisms under one attack and one
//! attacker count: the two acceptance rules, the krum baseline, the
//! non-collaborative baseline, and an all-honest control that keeps the
//! honest worker count equal by dropping the attackers entirely. A sweep
//! repeats a battery (or a single mechanism) across a grid of one
//! variable: shard size, assumed attacker count, or the distance bound.
//!
//! Replicates rerun each arm with seeds `base, base+1, ...`, so arms are
//! paired across mechanisms. All file outputs (per-run metrics CSVs, the
//! summary CSV, the sweep plot-data CSV, and `manifest.json` with every
//! fully resolved seed) are written in a fixed order with stable
//! formatting: rerunning the same manifest reproduces every byte.

use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::config::{validate, Delta, ExperimentConfig, FilterKind};
use crate::engine::{run_experiment, MetricsLog, ProblemData, RunSummary};
use crate::error::{Error, Result};

/// The five comparison arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Alg1,
    Alg2,
    NonCollaborative,
    AllHonest,
    Krum,
}

impl Mechanism {
    pub const BATTERY: [Mechanism; 5] = [
        Mechanism::Alg1,
        Mechanism::Alg2,
        Mechanism::NonCollaborative,
        Mechanism::AllHonest,
        Mechanism::Krum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Alg1 => "alg1",
            Mechanism::Alg2 => "alg2",
            Mechanism::NonCollaborative => "non-collaborative",
            Mechanism::AllHonest => "all-honest",
            Mechanism::Krum => "krum",
        }
    }

    /// The config for this arm, derived from a base config. The all-honest
    /// arm keeps the same number of honest workers but removes attackers;
    /// every other arm only switches the filter.
    pub fn arm_config(self, base: &ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            Mechanism::Alg1 => cfg.filter = FilterKind::Alg1,
            Mechanism::Alg2 => cfg.filter = FilterKind::Alg2,
            Mechanism::NonCollaborative => cfg.filter = FilterKind::NonCollaborative,
            Mechanism::Krum => cfg.filter = FilterKind::Krum,
            Mechanism::AllHonest => {
                cfg.filter = FilterKind::Alg1;
                cfg.n = base.n - base.p_true;
                cfg.p_true = 0;
                cfg.p_assumed = 0;
            }
        }
        validate(&cfg)?;
        Ok(cfg)
    }
}

/// One planned run of a battery or sweep.
#[derive(Debug, Clone)]
pub struct PlannedRun {
    /// Sweep x-value this run belongs to (the base shard size when the
    /// invocation is not a sweep).
    pub x: String,
    pub mechanism: Mechanism,
    pub config: ExperimentConfig,
}

/// One executed run.
pub struct CompletedRun {
    pub x: String,
    pub mechanism: Mechanism,
    pub seed: u64,
    pub summary: RunSummary,
    pub log: MetricsLog,
}

impl CompletedRun {
    /// The scalar a plot point aggregates: mean honest accuracy for
    /// classification runs, final summed squared distance for quadratic
    /// runs.
    pub fn plot_value(&self) -> f64 {
        match self.summary.mean_honest_accuracy {
            Some(acc) => acc,
            None => self
                .log
                .rows
                .last()
                .and_then(|r| r.sum_sq_dist)
                .unwrap_or(f64::NAN),
        }
    }
}

/// The sweep variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    /// Shard size per worker; runs the full battery per point.
    M,
    /// Assumed attacker count; runs the closest-subset rule per point.
    PAssumed,
    /// Distance bound; runs the descent rule per point.
    Delta,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::M => "m",
            SweepVar::PAssumed => "p",
            SweepVar::Delta => "delta",
        }
    }

    pub fn default_grid(self) -> Vec<String> {
        let grid: &[&str] = match self {
            SweepVar::M => &["60", "120", "300", "600", "1200"],
            SweepVar::PAssumed => &["5", "25", "45"],
            SweepVar::Delta => &["1", "10", "100", "inf"],
        };
        grid.iter().map(|s| s.to_string()).collect()
    }
}

impl std::str::FromStr for SweepVar {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "m" => Ok(SweepVar::M),
            "p" => Ok(SweepVar::PAssumed),
            "delta" => Ok(SweepVar::Delta),
            other => Err(format!("unknown sweep variable \"{other}\" (want m, p, or delta)")),
        }
    }
}

/// Plan a plain battery (or a single-mechanism run) at the base config.
pub fn plan_battery(base: &ExperimentConfig, mechanisms: &[Mechanism]) -> Result<Vec<PlannedRun>> {
    let x = base.m.to_string();
    mechanisms
        .iter()
        .map(|&mechanism| {
            Ok(PlannedRun {
                x: x.clone(),
                mechanism,
                config: mechanism.arm_config(base)?,
            })
        })
        .collect()
}

/// Plan a sweep over `var` across `values` (flag-style strings).
pub fn plan_sweep(
    base: &ExperimentConfig,
    var: SweepVar,
    values: &[String],
) -> Result<Vec<PlannedRun>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let mut runs = Vec::new();
    for raw in values {
        let mut point = base.clone();
        let mechanisms: &[Mechanism] = match var {
            SweepVar::M => {
                point.m = raw
                    .parse()
                    .map_err(|_| Error::config(format!("m: invalid sweep value \"{raw}\"")))?;
                &Mechanism::BATTERY
            }
            SweepVar::PAssumed => {
                point.p_assumed = raw.parse().map_err(|_| {
                    Error::config(format!("p-assumed: invalid sweep value \"{raw}\""))
                })?;
                &[Mechanism::Alg1]
            }
            SweepVar::Delta => {
                point.delta = raw
                    .parse::<Delta>()
                    .map_err(|e| Error::config(format!("delta: {e}")))?;
                &[Mechanism::Alg2]
            }
        };
        validate(&point)?;
        for &mechanism in mechanisms {
            runs.push(PlannedRun {
                x: raw.clone(),
                mechanism,
                config: mechanism.arm_config(&point)?,
            });
        }
    }
    Ok(runs)
}

/// Execute every planned run with `replicates` paired seeds each.
pub fn execute(planned: &[PlannedRun], data: &ProblemData) -> Result<Vec<CompletedRun>> {
    let mut out = Vec::new();
    for plan in planned {
        for k in 0..plan.config.replicates {
            let mut config = plan.config.clone();
            config.seed = plan.config.seed.wrapping_add(k as u64);
            let result = run_experiment(&config, data)?;
            out.push(CompletedRun {
                x: plan.x.clone(),
                mechanism: plan.mechanism,
                seed: config.seed,
                summary: result.summary,
                log: result.log,
            });
        }
    }
    Ok(out)
}

/// Write the plot-data table: `x,mechanism,mean,std,n_replicates`, one row
/// per `(x, mechanism)` group in first-appearance order. `std` is the
/// sample standard deviation (0 for a single replicate).
pub fn emit_plotdata<W: std::io::Write>(runs: &[CompletedRun], mut out: W) -> Result<()> {
    writeln!(out, "x,mechanism,mean,std,n_replicates")?;
    let mut groups: Vec<((String, Mechanism), Vec<f64>)> = Vec::new();
    for run in runs {
        let key = (run.x.clone(), run.mechanism);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, values)) => values.push(run.plot_value()),
            None => groups.push((key, vec![run.plot_value()])),
        }
    }
    for ((x, mechanism), values) in groups {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        writeln!(out, "{x},{},{mean},{std},{n}", mechanism.as_str())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    run_id: &'a str,
    mechanism: &'static str,
    x: &'a str,
    seed: u64,
    metrics_file: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    runs: Vec<ManifestRun<'a>>,
}

/// Write all output files for a set of completed runs into `dir`:
/// `manifest.json`, `summary.csv`, numbered per-run metrics CSVs, and
/// (when `plot_name` is given) the plot-data CSV.
pub fn write_outputs(
    dir: &Path,
    base: &ExperimentConfig,
    runs: &[CompletedRun],
    plot_name: Option<&str>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let manifest = Manifest {
        config: base,
        runs: runs
            .iter()
            .enumerate()
            .map(|(i, run)| ManifestRun {
                run_id: &run.summary.run_id,
                mechanism: run.mechanism.as_str(),
                x: &run.x,
                seed: run.seed,
                metrics_file: metrics_file_name(i),
            })
            .collect(),
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest)?;
    manifest_json.push('\n');
    std::fs::write(dir.join("manifest.json"), manifest_json)?;

    let mut summary = String::from(RunSummary::CSV_HEADER);
    summary.push('\n');
    for run in runs {
        summary.push_str(&run.summary.csv_row());
        summary.push('\n');
    }
    std::fs::write(dir.join("summary.csv"), summary)?;

    for (i, run) in runs.iter().enumerate() {
        let file = std::fs::File::create(dir.join(metrics_file_name(i)))?;
        let mut buf = std::io::BufWriter::new(file);
        run.log.write_csv(&mut buf)?;
        buf.flush()?;
    }

    if let Some(name) = plot_name {
        let file = std::fs::File::create(dir.join(name))?;
        let mut buf = std::io::BufWriter::new(file);
        emit_plotdata(runs, &mut buf)?;
        buf.flush()?;
    }
    Ok(())
}

fn metrics_file_name(index: usize) -> String {
    format!("metrics-{index:03}.csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve_with_env, PartialConfig, Problem, TickBudget};

    fn small_base() -> ExperimentConfig {
        resolve_with_env(
            PartialConfig {
                problem: Some(Problem::Quadratic),
                n: Some(6),
                p_true: Some(2),
                p_assumed: Some(2),
                m: Some(10),
                batch_size: Some(5),
                dim: Some(3),
                ticks: Some(TickBudget::Fixed(30)),
                seed: Some(11),
                replicates: Some(2),
                ..Default::default()
            },
            None,
        )
        .unwrap()
    }

    #[test]
    fn all_honest_arm_drops_attackers_only() {
        let base = small_base();
        let arm = Mechanism::AllHonest.arm_config(&base).unwrap();
        assert_eq!(arm.n, 4);
        assert_eq!(arm.p_true, 0);
        assert_eq!(arm.p_assumed, 0);
        assert_eq!(arm.filter, FilterKind::Alg1);
        assert_eq!(arm.m, base.m);
        assert_eq!(arm.seed, base.seed);
    }

    #[test]
    fn battery_plans_five_arms() {
        let base = small_base();
        let planned = plan_battery(&base, &Mechanism::BATTERY).unwrap();
        assert_eq!(planned.len(), 5);
        assert!(planned.iter().all(|p| p.x == "10"));
    }

    #[test]
    fn sweep_values_apply_to_the_right_field() {
        let base = small_base();
        let planned = plan_sweep(&base, SweepVar::PAssumed, &["1".into(), "3".into()]).unwrap();
        assert_eq!(planned.len(), 2);
        assert_eq!(planned[0].config.p_assumed, 1);
        assert_eq!(planned[1].config.p_assumed, 3);

        let planned = plan_sweep(&base, SweepVar::Delta, &["2.5".into(), "inf".into()]).unwrap();
        assert_eq!(planned[0].config.filter, FilterKind::Alg2);
        assert!(planned[1].config.delta.is_inf());

        let planned = plan_sweep(&base, SweepVar::M, &["8".into()]).unwrap();
        assert_eq!(planned.len(), 5, "m sweep runs the full battery");
        assert!(planned.iter().all(|p| p.config.m == 8));
    }

    #[test]
    fn invalid_sweep_values_are_config_errors() {
        let base = small_base();
        let err = plan_sweep(&base, SweepVar::M, &["many".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        // 6 workers cannot assume 7 attackers.
        let err = plan_sweep(&base, SweepVar::PAssumed, &["7".into()]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn replicates_get_consecutive_seeds() {
        let base = small_base();
        let planned = plan_battery(&base, &[Mechanism::Alg1]).unwrap();
        let runs = execute(&planned, &ProblemData::Quadratic).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].seed, 11);
        assert_eq!(runs[1].seed, 12);
        assert_ne!(
            runs[0].log.rows.last().unwrap().sum_sq_dist,
            runs[1].log.rows.last().unwrap().sum_sq_dist
        );
    }

    #[test]
    fn plotdata_aggregates_replicates() {
        let base = small_base();
        let planned = plan_battery(&base, &[Mechanism::Alg1, Mechanism::NonCollaborative]).unwrap();
        let runs = execute(&planned, &ProblemData::Quadratic).unwrap();
        let mut buf = Vec::new();
        emit_plotdata(&runs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,mechanism,mean,std,n_replicates");
        assert_eq!(lines.len(), 3, "one row per mechanism:\n{text}");
        assert!(lines[1].starts_with("10,alg1,"));
        assert!(lines[1].ends_with(",2"));
        assert!(lines[2].starts_with("10,non-collaborative,"));
    }

    #[test]
    fn outputs_are_byte_identical_across_reruns() {
        let base = small_base();
        let planned = plan_battery(&base, &Mechanism::BATTERY).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for dir in [&dir_a, &dir_b] {
            let runs = execute(&planned, &ProblemData::Quadratic).unwrap();
            write_outputs(dir.path(), &base, &runs, Some("sweep_m.csv")).unwrap();
        }
        let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(names.contains(&"manifest.json".to_string()));
        assert!(names.contains(&"summary.csv".to_string()));
        assert!(names.contains(&"sweep_m.csv".to_string()));
        assert_eq!(names.len(), 13, "{names:?}"); // 10 metrics + 3 aggregates
        for name in names {
            let a = std::fs::read(dir_a.path().join(&name)).unwrap();
            let b = std::fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "file {name} differs between reruns");
        }
    }
}
