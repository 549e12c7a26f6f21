use std::fmt::Write as _;
use std::path::Path;

use frag_avalanche::kernels::ClipPolicy;
use frag_avalanche::model::{FractalCoord, Lattice, ModelParams};
use frag_avalanche::montecarlo::rng::{tag, RngStream};
use frag_avalanche::montecarlo::{
    project_sizes, run_replicas, simulate_branching, simulate_chain, simulate_sde, simulate_sizes,
    Event, SdeMode, SizeSequence,
};
use frag_avalanche::semigroup::{
    cumulant_solve, generator_matrix, reachable_support, resolvent_apply, transition_at,
    CumulantOptions, StateSpace,
};
use frag_avalanche::stats::{mean_ci, MeanCi};
use serde::Serialize;

use crate::config::{RunConfig, SdeModeName};
use crate::{output, verify, CliError, SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Params,
    Support,
    Semigroup,
    SimulateChain,
    SimulateSde,
    SimulateBranching,
    SimulateSizes,
    Verify,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Params,
        Command::Support,
        Command::Semigroup,
        Command::SimulateChain,
        Command::SimulateSde,
        Command::SimulateBranching,
        Command::SimulateSizes,
        Command::Verify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Params => "params",
            Command::Support => "support",
            Command::Semigroup => "semigroup",
            Command::SimulateChain => "simulate-chain",
            Command::SimulateSde => "simulate-sde",
            Command::SimulateBranching => "simulate-branching",
            Command::SimulateSizes => "simulate-sizes",
            Command::Verify => "verify",
        }
    }
}

/// What a command produced besides its files.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub stdout: String,
    /// Set by `verify` when some criterion failed.
    pub acceptance_failed: bool,
}

pub fn execute(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let dir = cfg.output.dir.as_path();
    match cmd {
        Command::Params => cmd_params(cfg, dir),
        Command::Support => cmd_support(cfg, dir),
        Command::Semigroup => cmd_semigroup(cfg, dir),
        Command::SimulateChain
        | Command::SimulateSde
        | Command::SimulateBranching
        | Command::SimulateSizes => cmd_simulate(cmd, cfg, dir),
        Command::Verify => verify::cmd_verify(cfg, dir),
    }
}

#[derive(Serialize)]
struct ParamsSummary<'a> {
    schema_version: u32,
    params: &'a ModelParams,
    bands: Vec<[f64; 2]>,
}

fn bands(p: &ModelParams) -> Vec<[f64; 2]> {
    (0..p.depth())
        .map(|k| {
            let b = frag_avalanche::BandIndex(k);
            [p.band_lower(b), p.band_upper(b)]
        })
        .collect()
}

fn cmd_params(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let p = cfg.params()?;
    let mut s = String::new();
    writeln!(s, "r={}", p.r()).unwrap();
    writeln!(s, "beta={}", p.beta()).unwrap();
    writeln!(s, "lambda0={}", p.lambda0()).unwrap();
    writeln!(s, "depth={}", p.depth()).unwrap();
    writeln!(s, "band  lower                   upper").unwrap();
    for (k, [lo, hi]) in bands(&p).into_iter().enumerate() {
        let close = if k == 0 { ']' } else { ')' };
        writeln!(
            s,
            "{k:<5} [{}, {}{close}",
            output::float(lo),
            output::float(hi)
        )
        .unwrap();
    }
    if cfg.output.json {
        output::write_json(
            dir,
            "params.json",
            &ParamsSummary {
                schema_version: SCHEMA_VERSION,
                params: &p,
                bands: bands(&p),
            },
        )?;
    }
    Ok(Outcome {
        stdout: s,
        ..Default::default()
    })
}

fn distinct(sizes: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &x in sizes {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn state_space(cfg: &RunConfig) -> Result<StateSpace, CliError> {
    let lattice = Lattice::resolved(cfg.params()?, distinct(&cfg.run.x0))?;
    Ok(reachable_support(&lattice)?)
}

fn cmd_support(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let space = state_space(cfg)?;
    let bands: Vec<f64> = space
        .states()
        .iter()
        .map(|s| space.lattice().band(&s.coord).map(|b| b.0 as f64))
        .collect::<Result<_, _>>()?;
    if cfg.output.csv {
        output::write_state_table(dir, "support.csv", &space, &[("band", &bands)])?;
    }
    Ok(Outcome {
        stdout: format!("{} states\n", space.len()),
        ..Default::default()
    })
}

#[derive(Serialize)]
struct SemigroupSummary {
    schema_version: u32,
    states: usize,
    t: f64,
    series_terms: usize,
    semigroup_tol: f64,
    max_row_sum_defect: f64,
    resolvent_alpha: f64,
    cumulant_tol: f64,
    cumulant_rk4_step: f64,
    cumulant_picard_discrepancy: f64,
    clip_policy: ClipPolicy,
}

fn cmd_semigroup(cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let run = &cfg.run;
    let space = state_space(cfg)?;
    let p = transition_at(run.t_end, &space, run.semigroup_tol)?;
    let a = generator_matrix(&space)?;
    let f = space.tabulate(|x| run.resolvent_f.eval(x));
    let resolvent = resolvent_apply(run.resolvent_alpha, &f, &space)?;
    let phi = space.tabulate(|x| run.phi.eval(x));
    let opts = CumulantOptions {
        tol: run.cumulant_tol,
        ..Default::default()
    };
    let cumulant = cumulant_solve(&phi, run.t_end, &space, run.clip_policy, &opts)?;

    if cfg.output.csv {
        output::write_matrix(dir, "transition.csv", &space, &p.matrix)?;
        output::write_matrix(dir, "generator.csv", &space, &a)?;
        output::write_state_table(
            dir,
            "resolvent.csv",
            &space,
            &[("f", &f), ("resolvent", &resolvent)],
        )?;
        output::write_cumulant(
            dir,
            "cumulant.csv",
            &space,
            &cumulant.times,
            &cumulant.values,
        )?;
    }
    let defect = p
        .row_sums()
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max);
    if cfg.output.json {
        output::write_json(
            dir,
            "summary.json",
            &SemigroupSummary {
                schema_version: SCHEMA_VERSION,
                states: space.len(),
                t: run.t_end,
                series_terms: p.terms,
                semigroup_tol: run.semigroup_tol,
                max_row_sum_defect: defect,
                resolvent_alpha: run.resolvent_alpha,
                cumulant_tol: run.cumulant_tol,
                cumulant_rk4_step: cumulant.rk4_step,
                cumulant_picard_discrepancy: cumulant.picard_discrepancy,
                clip_policy: run.clip_policy,
            },
        )?;
    }
    Ok(Outcome {
        stdout: format!("{} states, {} series terms\n", space.len(), p.terms),
        ..Default::default()
    })
}

/// One replica's log and final particles.
struct Replica {
    events: Vec<Event>,
    terminal: Vec<FractalCoord>,
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    schema_version: u32,
    subcommand: &'static str,
    seed: u64,
    replicas: usize,
    t_end: f64,
    x0: &'a [f64],
    params: &'a ModelParams,
    clip_policy: ClipPolicy,
    sde_mode: SdeModeName,
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<usize>,
    events: usize,
    monotonicity_violations: usize,
    /// Mean of the largest terminal size (the only size for single particles).
    max_size: Estimate,
    particle_count: Estimate,
    /// `Σ x_k` at `t_end`; reported, not asserted.
    total_mass: Estimate,
    /// `Π e^{-x_k}` at `t_end`.
    multiplicative_exp_neg: Estimate,
}

#[derive(Serialize)]
struct Estimate {
    mean: f64,
    /// 95% normal interval, absent below 30 replicas.
    ci95: Option<MeanCi>,
}

fn estimate(samples: &[f64]) -> Estimate {
    let mean = if samples.is_empty() {
        f64::NAN
    } else {
        samples.iter().sum::<f64>() / samples.len() as f64
    };
    Estimate {
        mean,
        ci95: mean_ci(samples, 0.95).ok(),
    }
}

fn single_start(cfg: &RunConfig, what: &str) -> Result<f64, CliError> {
    match cfg.run.x0.as_slice() {
        [x] => Ok(*x),
        _ => Err(CliError::Config(format!(
            "{what} takes exactly one starting size in run.x0"
        ))),
    }
}

fn cmd_simulate(cmd: Command, cfg: &RunConfig, dir: &Path) -> Result<Outcome, CliError> {
    let run = &cfg.run;
    let params = cfg.params()?;
    let seed = cfg.seed()?;
    let mut level = None;

    let (lattice, replicas) = match cmd {
        Command::SimulateChain | Command::SimulateSde => {
            let x0 = single_start(cfg, cmd.name())?;
            let lattice = Lattice::resolved(params, vec![x0])?;
            let start = FractalCoord::root(0);
            let mode = match run.sde_mode {
                SdeModeName::Banded => SdeMode::Banded,
                SdeModeName::Whole => SdeMode::Whole,
            };
            let replicas = run_replicas(run.replicas, run.workers, |r| {
                let traj = if cmd == Command::SimulateChain {
                    simulate_chain(
                        &start,
                        &lattice,
                        run.t_end,
                        &mut RngStream::new(seed, r, tag::CHAIN),
                    )?
                } else {
                    simulate_sde(
                        &start,
                        &lattice,
                        run.t_end,
                        mode,
                        &mut RngStream::new(seed, r, tag::SDE),
                    )?
                };
                Ok(Replica {
                    terminal: vec![traj.terminal()],
                    events: traj.events,
                })
            })?;
            (lattice, replicas)
        }
        Command::SimulateBranching => {
            let (lattice, start) = SizeSequence::new(run.x0.clone())?.to_configuration(&params)?;
            let replicas = run_replicas(run.replicas, run.workers, |r| {
                let mut rng = RngStream::new(seed, r, tag::BRANCHING);
                let out = simulate_branching(
                    &start,
                    &lattice,
                    run.t_end,
                    run.clip_policy,
                    run.population_cap,
                    &mut rng,
                )?;
                Ok(Replica {
                    events: out.events,
                    terminal: out.terminal.particles,
                })
            })?;
            (lattice, replicas)
        }
        Command::SimulateSizes => {
            let x0 = SizeSequence::new(run.x0.clone())?;
            let lv = run.level.unwrap_or(params.depth());
            level = Some(lv);
            let level_params = params.truncated(lv)?;
            let (lattice, _) = project_sizes(&x0, lv, &params)?.to_configuration(&level_params)?;
            let replicas = run_replicas(run.replicas, run.workers, |r| {
                let mut rng = RngStream::new(seed, r, tag::SIZES);
                let out = simulate_sizes(
                    &x0,
                    lv,
                    run.t_end,
                    &params,
                    run.clip_policy,
                    run.population_cap,
                    &mut rng,
                )?;
                Ok(Replica {
                    events: out.events,
                    terminal: out.terminal.particles,
                })
            })?;
            (lattice, replicas)
        }
        _ => unreachable!("not a simulation command"),
    };

    if cfg.output.csv {
        if run.log_events {
            let events = replicas
                .iter()
                .enumerate()
                .flat_map(|(r, rep)| rep.events.iter().map(move |e| (r as u64, e)));
            output::write_events(dir, "events.csv", events)?;
        }
        output::write_terminal(
            dir,
            "terminal.csv",
            &lattice,
            replicas.iter().flat_map(|r| r.terminal.iter()),
        )?;
    }

    let sizes: Vec<Vec<f64>> = replicas
        .iter()
        .map(|r| r.terminal.iter().map(|c| lattice.value(c)).collect())
        .collect();
    let column = |f: &dyn Fn(&[f64]) -> f64| sizes.iter().map(|s| f(s)).collect::<Vec<f64>>();
    let summary = SimulationSummary {
        schema_version: SCHEMA_VERSION,
        subcommand: cmd.name(),
        seed,
        replicas: run.replicas,
        t_end: run.t_end,
        x0: &run.x0,
        params: lattice.params(),
        clip_policy: run.clip_policy,
        sde_mode: run.sde_mode,
        level,
        events: replicas.iter().map(|r| r.events.len()).sum(),
        monotonicity_violations: replicas
            .iter()
            .flat_map(|r| &r.events)
            .filter(|e| !e.is_monotone())
            .count(),
        max_size: estimate(&column(&|s| s.iter().copied().fold(0.0, f64::max))),
        particle_count: estimate(&column(&|s| s.len() as f64)),
        total_mass: estimate(&column(&|s| s.iter().sum())),
        multiplicative_exp_neg: estimate(&column(&|s| s.iter().map(|x| (-x).exp()).product())),
    };
    if cfg.output.json {
        output::write_json(dir, "summary.json", &summary)?;
    }
    Ok(Outcome {
        stdout: format!(
            "{}: {} replicas, {} events, mean max size {}\n",
            cmd.name(),
            run.replicas,
            summary.events,
            summary.max_size.mean
        ),
        ..Default::default()
    })
}
