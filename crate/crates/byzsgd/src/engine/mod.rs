//! Experiment orchestration.
//!
//! One run wires everything together: shard the data, initialize `n`
//! workers (the top `p-true` ids are Byzantine), then drive the master
//! clock for the configured number of ticks. Each tick activates one
//! worker. An honest worker fetches every other worker's parameter
//! (honest responders answer truthfully, Byzantine responders answer
//! through the configured attack), filters, averages, and takes a local
//! SGD step; a Byzantine worker just trains locally. Exactly one
//! parameter changes per tick.
//!
//! Every tick appends a metrics row; quadratic runs also track the summed
//! honest distance to the known optimum so convergence bounds can be
//! checked, and MNIST runs end with a mean honest test accuracy.

pub mod bounds;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::adversary::{byzantine_local_update, byzantine_response, AttackKind};
use crate::clock::Scheduler;
use crate::config::{
    AttackName, ExperimentConfig, FilterKind, Problem, Schedule,
};
use crate::data::{build_shards, gen_quadratic, load_mnist, Sample, Shard};
use crate::error::{Error, Result};
use crate::filters::{honest_update, AcceptanceRecord, FilterRule, UpdateContext};
use crate::model::{EvalMatrix, Model, ParamVector};
use crate::rng::{stream_rng, Stream};

/// Worker role, fixed for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Honest,
    Byzantine,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Honest => "honest",
            Role::Byzantine => "byzantine",
        }
    }
}

/// One worker's full state during a run.
pub struct WorkerState {
    pub id: usize,
    pub role: Role,
    pub shard: Shard,
    pub param: ParamVector,
}

/// One metrics row per master tick, recorded after the tick's update.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRow {
    pub tick: u64,
    pub time: f64,
    pub worker: usize,
    pub role: Role,
    pub accepted_count: usize,
    /// Summed squared honest distance to the optimum (quadratic runs).
    pub sum_sq_dist: Option<f64>,
    /// Summed honest distance to the optimum (quadratic runs). Not part
    /// of the CSV schema; kept for convergence-bound checks.
    pub sum_dist: Option<f64>,
}

/// Everything measured in one run.
pub struct MetricsLog {
    pub rows: Vec<TickRow>,
    /// Distances at initialization (before tick 0), quadratic runs only.
    pub initial_sum_sq_dist: Option<f64>,
    pub initial_sum_dist: Option<f64>,
    /// Mean honest test accuracy after the final tick (MNIST runs only).
    pub mean_honest_accuracy: Option<f64>,
    /// Largest minibatch gradient norm applied by any update in the run.
    pub max_grad_norm: f64,
    /// Per-tick acceptance audit for honest updates.
    pub acceptance: Vec<AcceptanceRecord>,
}

impl MetricsLog {
    /// Pinned per-tick CSV: `tick,time,worker,role,accepted_count,sum_sq_dist`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "tick,time,worker,role,accepted_count,sum_sq_dist")?;
        for r in &self.rows {
            let sum_sq = r.sum_sq_dist.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.tick,
                r.time,
                r.worker,
                r.role.as_str(),
                r.accepted_count,
                sum_sq
            )?;
        }
        Ok(())
    }
}

/// Identity and headline result of one run, one row of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub filter: FilterKind,
    pub attack: AttackName,
    pub p_true: usize,
    pub p_assumed: usize,
    pub seed: u64,
    pub mean_honest_accuracy: Option<f64>,
}

impl RunSummary {
    pub const CSV_HEADER: &'static str =
        "run_id,filter,attack,p_true,p_assumed,seed,mean_honest_accuracy";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.run_id,
            self.filter.as_str(),
            self.attack.as_str(),
            self.p_true,
            self.p_assumed,
            self.seed,
            self.mean_honest_accuracy
                .map(|v| v.to_string())
                .unwrap_or_default()
        )
    }
}

/// A completed run: metrics plus final worker parameters.
pub struct RunOutput {
    pub log: MetricsLog,
    pub summary: RunSummary,
    pub roles: Vec<Role>,
    pub final_params: Vec<ParamVector>,
}

/// Shared, immutable problem inputs, loaded once and reused across runs.
pub enum ProblemData {
    Mnist {
        train: Vec<Sample>,
        test: Vec<Sample>,
        eval: EvalMatrix,
        features: usize,
    },
    Quadratic,
}

impl ProblemData {
    /// Load (or construct) the inputs a config needs.
    pub fn prepare(config: &ExperimentConfig) -> Result<ProblemData> {
        match config.problem {
            Problem::Quadratic => Ok(ProblemData::Quadratic),
            Problem::Mnist => {
                let dir = config
                    .data_dir
                    .as_ref()
                    .ok_or_else(|| Error::config("data-dir: mnist needs a dataset directory"))?;
                let dataset = load_mnist(dir)?;
                let features = dataset.feature_dim();
                let model = Model::Softmax { classes: 10, features };
                let eval = model.eval_matrix(&dataset.test)?;
                Ok(ProblemData::Mnist {
                    train: dataset.train,
                    test: dataset.test,
                    eval,
                    features,
                })
            }
        }
    }

    pub fn model(&self, config: &ExperimentConfig) -> Model {
        match self {
            ProblemData::Mnist { features, .. } => Model::Softmax {
                classes: 10,
                features: *features,
            },
            ProblemData::Quadratic => Model::Quadratic { dim: config.dim },
        }
    }
}

/// Mean test accuracy over honest workers.
pub fn evaluate_final(workers: &[WorkerState], model: &Model, eval: &EvalMatrix) -> f64 {
    let honest: Vec<&WorkerState> = workers.iter().filter(|w| w.role == Role::Honest).collect();
    assert!(!honest.is_empty(), "no honest workers to evaluate");
    honest
        .iter()
        .map(|w| model.accuracy_on(&w.param, eval))
        .sum::<f64>()
        / honest.len() as f64
}

// Initial parameters are i.i.d. Uniform[0, 1) per coordinate (then
// projected to the unit sphere when normalization is on). A one-sided
// support matters: sign-flipped copies of freshly initialized parameters
// are then far from every honest parameter from the first tick, which is
// what lets distance-based filtering reject them throughout training. A
// zero-mean initialization would make a negated parameter as close as an
// honest one at start and filtering could lock onto the negated cluster.
fn init_param(dim: usize, seed: u64, worker: usize, normalize: bool) -> ParamVector {
    let mut rng = stream_rng(seed, Stream::WorkerInit(worker));
    let mut w = ParamVector((0..dim).map(|_| rng.random::<f64>()).collect());
    if normalize {
        crate::filters::normalize(&mut w);
    }
    w
}

fn honest_distance_sums(workers: &[WorkerState], w_star: &ParamVector) -> (f64, f64) {
    let mut sum_sq = 0.0;
    let mut sum = 0.0;
    for w in workers {
        if w.role == Role::Honest {
            let d_sq = w.param.dist_sq(w_star);
            sum_sq += d_sq;
            sum += d_sq.sqrt();
        }
    }
    (sum_sq, sum)
}

enum Resp<'a> {
    Borrowed(&'a ParamVector),
    Owned(ParamVector),
}

impl Resp<'_> {
    fn get(&self) -> &ParamVector {
        match self {
            Resp::Borrowed(w) => w,
            Resp::Owned(w) => w,
        }
    }
}

/// Execute one full experiment described by `config` on `data`.
/// Deterministic given the config (including its seed).
pub fn run_experiment(config: &ExperimentConfig, data: &ProblemData) -> Result<RunOutput> {
    let model = data.model(config);
    let dim = model.dim();
    let n = config.n;
    let seed = config.seed;

    let (shards, w_star) = match data {
        ProblemData::Mnist { train, .. } => {
            if config.m > train.len() {
                return Err(Error::config(format!(
                    "m: shard size {} exceeds training set size {}",
                    config.m,
                    train.len()
                )));
            }
            (build_shards(train, n, config.m, seed), None)
        }
        ProblemData::Quadratic => {
            let (shards, w_star) = gen_quadratic(n, config.m, config.dim, config.spread, seed);
            (shards, Some(w_star))
        }
    };

    let mut workers: Vec<WorkerState> = shards
        .into_iter()
        .enumerate()
        .map(|(id, shard)| WorkerState {
            id,
            // The top p-true ids attack; lower ids stay honest.
            role: if id >= n - config.p_true {
                Role::Byzantine
            } else {
                Role::Honest
            },
            shard,
            param: init_param(dim, seed, id, config.normalize),
        })
        .collect();
    let mut rngs: Vec<ChaCha12Rng> = (0..n)
        .map(|i| stream_rng(seed, Stream::WorkerPrivate(i)))
        .collect();

    let rule = match config.filter {
        FilterKind::Alg1 => FilterRule::Closest {
            p_assumed: config.p_assumed,
        },
        FilterKind::Alg2 => FilterRule::Descent {
            delta: config.delta.0,
        },
        FilterKind::Krum => FilterRule::Krum {
            p_assumed: config.p_assumed,
        },
        FilterKind::NonCollaborative => FilterRule::NonCollaborative,
    };
    let attack = match config.attack {
        AttackName::AddNoise => AttackKind::AddNoise {
            sigma_sq: config.sigma_sq,
        },
        AttackName::Random => AttackKind::RandomUniform,
        AttackName::Inverse => AttackKind::Inverse,
    };

    let ticks = config.tick_count();
    let mut scheduler = Scheduler::new(n, seed);
    let (initial_sum_sq, initial_sum) = match &w_star {
        Some(w_star) => {
            let (a, b) = honest_distance_sums(&workers, w_star);
            (Some(a), Some(b))
        }
        None => (None, None),
    };

    let mut log = MetricsLog {
        rows: Vec::with_capacity(ticks as usize),
        initial_sum_sq_dist: initial_sum_sq,
        initial_sum_dist: initial_sum,
        mean_honest_accuracy: None,
        max_grad_norm: 0.0,
        acceptance: Vec::new(),
    };

    for _ in 0..ticks {
        let event = scheduler.next_tick();
        let i = event.worker;
        let eta = match config.schedule {
            Schedule::Constant => config.eta,
            Schedule::InvT => config.eta / (event.index as f64 + 1.0),
        };
        let ctx = UpdateContext {
            model: &model,
            shard: &workers[i].shard,
            batch_size: config.batch_size,
            eta,
            normalize: config.normalize,
            tick: event.index,
        };

        let outcome = if workers[i].role == Role::Honest {
            let responses: Vec<(usize, Resp)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let resp = match workers[j].role {
                        Role::Honest => Resp::Borrowed(&workers[j].param),
                        Role::Byzantine => Resp::Owned(byzantine_response(
                            attack,
                            &workers[i].param,
                            &workers[j].param,
                            &mut rngs[j],
                        )),
                    };
                    (j, resp)
                })
                .collect();
            let resp_refs: Vec<(usize, &ParamVector)> =
                responses.iter().map(|(j, r)| (*j, r.get())).collect();
            honest_update(i, &workers[i].param, &resp_refs, &rule, &ctx, &mut rngs[i])
        } else {
            byzantine_local_update(i, &workers[i].param, &ctx, &mut rngs[i])
        };

        let accepted_count = outcome.record.accepted_count();
        log.max_grad_norm = log.max_grad_norm.max(outcome.grad_norm);
        if workers[i].role == Role::Honest {
            log.acceptance.push(outcome.record);
        }
        workers[i].param = outcome.new_param;

        let (sum_sq, sum) = match &w_star {
            Some(w_star) => {
                let (a, b) = honest_distance_sums(&workers, w_star);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        log.rows.push(TickRow {
            tick: event.index,
            time: event.time,
            worker: i,
            role: workers[i].role,
            accepted_count,
            sum_sq_dist: sum_sq,
            sum_dist: sum,
        });
    }

    if let ProblemData::Mnist { eval, .. } = data {
        log.mean_honest_accuracy = Some(evaluate_final(&workers, &model, eval));
    }

    let problem_str = match config.problem {
        Problem::Mnist => "mnist",
        Problem::Quadratic => "quadratic",
    };
    let summary = RunSummary {
        run_id: format!(
            "{problem_str}-{}-{}-p{}-a{}-m{}-s{}",
            config.filter.as_str(),
            config.attack.as_str(),
            config.p_true,
            config.p_assumed,
            config.m,
            seed
        ),
        filter: config.filter,
        attack: config.attack,
        p_true: config.p_true,
        p_assumed: config.p_assumed,
        seed,
        mean_honest_accuracy: log.mean_honest_accuracy,
    };

    Ok(RunOutput {
        log,
        summary,
        roles: workers.iter().map(|w| w.role).collect(),
        final_params: workers.into_iter().map(|w| w.param).collect(),
    })
}
