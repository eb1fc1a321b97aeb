use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ballastplan::allocation::{self, Allocation, MissionProfile, TankBudget};
use ballastplan::energy_model::{self, CalibrationAnchors, CalibrationSetup, EnergyModel, RowTarget};
use ballastplan::geometry::{self, PoseError, StageChain};
use ballastplan::mission::{self, RowScenario};
use ballastplan::reference_oracle::{self, GridSpec};
use ballastplan::simulator::{self, BreakdownRow, MissionLog};
use ballastplan::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::Scenario;
use crate::{CliError, CliResult, Command, Context};

/// Row lengths always present in the recharge table.
pub const TABLE1_ROWS: [usize; 4] = [10, 50, 250, 500];

pub fn dispatch(ctx: &Context, command: &Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Plan => plan(ctx, out),
        Command::Simulate => simulate(ctx, out),
        Command::Table1 { rows } => table1(ctx, rows, out),
        Command::Verify { random_legs, resolution } => verify(ctx, *random_legs, *resolution, out),
        Command::Calibrate { target_rate, trials, chain } => calibrate(ctx, *target_rate, *trials, chain.as_deref(), out),
        Command::Tolerance { chain, trials, sigma_max, steps, dx, dy } => {
            tolerance(ctx, chain.as_deref(), *trials, *sigma_max, *steps, (*dx, *dy), out)
        }
    }
}

fn metadata() -> Value {
    json!({
        "generated_at": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        "tool": "ballastplan",
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn output_path(ctx: &Context, name: &str) -> CliResult<PathBuf> {
    fs::create_dir_all(&ctx.out)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", ctx.out.display())))?;
    Ok(ctx.out.join(name))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(Error::from)?;
    w.write_all(b"\n").map_err(Error::from)?;
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn scenario(ctx: &Context) -> CliResult<Scenario> {
    let path = ctx
        .scenario
        .as_deref()
        .ok_or_else(|| CliError::config("this command needs --scenario"))?;
    Ok(Scenario::load(path)?)
}

pub fn plan(ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    let sc = scenario(ctx)?;
    let profile = sc.profile()?;
    if profile.is_empty() {
        return Err(CliError::config(format!("scenario {:?} has no legs to plan", sc.name)));
    }
    let budget = sc.budget(ctx.tank_c)?;
    let alloc = allocation::solve(&profile, &ctx.model, budget)?;
    let recharges = mission::count_recharges(&profile, &ctx.model, &alloc)?;

    let csv_path = output_path(ctx, "allocation.csv")?;
    let mut w = create(&csv_path)?;
    alloc.write_csv(&profile, &ctx.model, &mut w)?;
    w.flush().map_err(Error::from)?;
    write_json(
        &output_path(ctx, "plan.json")?,
        &json!({
            "scenario": sc.name,
            "legs": profile.len(),
            "tank_c": budget.fills(),
            "objective_wh": alloc.cost_wh,
            "air_used": alloc.total_air(),
            "recharges": recharges,
            "metadata": metadata(),
        }),
    )?;

    writeln!(out, "scenario: {}", sc.name)?;
    writeln!(out, "legs: {}", profile.len())?;
    writeln!(out, "objective: {:.6} Wh", alloc.cost_wh)?;
    writeln!(out, "air used: {:.6} of {} fills", alloc.total_air(), budget.fills())?;
    writeln!(out, "recharges: {recharges}")?;
    writeln!(out, "wrote {}", csv_path.display())?;
    Ok(())
}

/// Runs one scenario through the simulator.
pub fn run_scenario(sc: &Scenario, model: &EnergyModel, tank_c: Option<f64>) -> ballastplan::Result<(MissionProfile, MissionLog)> {
    let profile = sc.profile()?;
    let budget = sc.budget(tank_c)?;
    let alloc = sc.allocation(&profile, model, budget)?;
    let log = simulator::simulate(&profile, model, &alloc, &sc.behaviors, &sc.environment, sc.tank)?;
    Ok((profile, log))
}

/// Relative deviations of a log's totals from a reference, or `None` when
/// the scenario has no reference.
pub fn reference_deviation(sc: &Scenario, log: &MissionLog) -> Option<(f64, f64)> {
    sc.reference.map(|r| {
        (
            log.totals.energy_wh / r.energy_wh - 1.0,
            log.totals.duration_s / 60.0 / r.duration_min - 1.0,
        )
    })
}

/// Allowed relative deviation from a scenario's reference totals.
pub const REFERENCE_BAND: f64 = 0.3;

pub fn simulate(ctx: &Context, out: &mut dyn Write) -> CliResult<()> {
    let sc = scenario(ctx)?;
    let (profile, log) = run_scenario(&sc, &ctx.model, ctx.tank_c)?;

    let log_path = output_path(ctx, "log.jsonl")?;
    let mut w = create(&log_path)?;
    log.write_jsonl(&mut w)?;
    w.flush().map_err(Error::from)?;

    let breakdown: Vec<BreakdownRow> = if log.is_empty() {
        Vec::new()
    } else {
        simulator::behavior_breakdown(&log)?
    };
    write_json(
        &output_path(ctx, "summary.json")?,
        &json!({
            "scenario": sc.name,
            "legs": profile.len(),
            "events": log.events.len(),
            "totals": log.totals,
            "breakdown": breakdown,
            "metadata": metadata(),
        }),
    )?;

    writeln!(out, "scenario: {}", sc.name)?;
    writeln!(out, "legs: {}", profile.len())?;
    if log.is_empty() {
        eprintln!("warning: scenario {:?} has no components; the log is empty", sc.name);
    }
    if log.totals.truncated {
        eprintln!("warning: the tank ran out of air; the log stops at the failed fill");
    }
    writeln!(out, "energy: {:.2} Wh", log.totals.energy_wh)?;
    writeln!(out, "duration: {:.1} min", log.totals.duration_s / 60.0)?;
    writeln!(out, "air: {:.1} PSI", log.totals.air_psi)?;
    writeln!(out, "recharges: {}", log.totals.recharges)?;
    if !breakdown.is_empty() {
        write!(out, "\n{}", simulator::render_breakdown(&breakdown))?;
    }

    if ctx.check {
        let (de, dt) = reference_deviation(&sc, &log)
            .ok_or_else(|| CliError::config("--check needs a `reference` entry in the scenario"))?;
        writeln!(out, "\nenergy deviation {:+.1}%, duration deviation {:+.1}%", 100.0 * de, 100.0 * dt)?;
        if de.abs() > REFERENCE_BAND || dt.abs() > REFERENCE_BAND {
            return Err(CliError::runtime("simulated totals fall outside the reference band"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Table1Row {
    pub blocks: usize,
    pub with_buoyancy: u64,
    pub without_buoyancy: u64,
}

/// Recharge counts for rows of the given lengths, with and without ballast.
pub fn table1_rows(model: &EnergyModel, budget: TankBudget, lengths: &[usize]) -> ballastplan::Result<Vec<Table1Row>> {
    lengths
        .par_iter()
        .map(|&n| {
            let profile = mission::row_to_profile(&RowScenario::with_defaults(n)?);
            let alloc = allocation::solve(&profile, model, budget)?;
            let zeros = Allocation::zeros(&profile, model)?;
            Ok(Table1Row {
                blocks: n,
                with_buoyancy: mission::count_recharges(&profile, model, &alloc)?,
                without_buoyancy: mission::count_recharges(&profile, model, &zeros)?,
            })
        })
        .collect()
}

/// Accepted `(with, without)` ranges per row length.
pub fn table1_band(blocks: usize) -> Option<((u64, u64), (u64, u64))> {
    match blocks {
        10 | 50 => Some(((0, 0), (0, 0))),
        250 => Some(((3, 6), (14, 18))),
        500 => Some(((17, 25), (57, 71))),
        _ => None,
    }
}

/// Rows outside their band, as messages.
pub fn table1_failures(rows: &[Table1Row]) -> Vec<String> {
    rows.iter()
        .filter_map(|r| {
            let ((wl, wh), (nl, nh)) = table1_band(r.blocks)?;
            let ok = (wl..=wh).contains(&r.with_buoyancy) && (nl..=nh).contains(&r.without_buoyancy);
            (!ok).then(|| {
                format!(
                    "{} blocks: got ({}, {}), expected with in [{wl}, {wh}] and without in [{nl}, {nh}]",
                    r.blocks, r.with_buoyancy, r.without_buoyancy
                )
            })
        })
        .collect()
}

pub fn table1(ctx: &Context, extra: &[usize], out: &mut dyn Write) -> CliResult<()> {
    let mut lengths: Vec<usize> = TABLE1_ROWS.to_vec();
    for &n in extra {
        if n == 0 {
            return Err(CliError::config("row lengths must be positive"));
        }
        if !lengths.contains(&n) {
            lengths.push(n);
        }
    }
    lengths.sort_unstable();
    let budget = TankBudget::new(ctx.tank_c.unwrap_or(crate::DEFAULT_TANK_C)).map_err(|e| CliError::config(e.to_string()))?;
    let rows = table1_rows(&ctx.model, budget, &lengths)?;

    let path = output_path(ctx, "table1.csv")?;
    let mut w = csv::Writer::from_writer(create(&path)?);
    for r in &rows {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;

    writeln!(out, "{:>6} {:>16} {:>19}", "Blocks", "With buoyancy", "Without buoyancy")?;
    for r in &rows {
        writeln!(out, "{:>6} {:>16} {:>19}", r.blocks, r.with_buoyancy, r.without_buoyancy)?;
    }
    if ctx.check {
        let failures = table1_failures(&rows);
        if !failures.is_empty() {
            return Err(CliError::runtime(failures.join("; ")));
        }
        writeln!(out, "all rows within their bands")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyReport {
    pub legs: usize,
    pub solver_wh: f64,
    pub grid_wh: f64,
    pub bound_wh: f64,
}

impl VerifyReport {
    /// Solver no worse than the grid, and the grid within its bound of the solver.
    pub fn passes(&self) -> bool {
        self.solver_wh <= self.grid_wh + 1e-6 && self.grid_wh - self.solver_wh <= self.bound_wh
    }
}

pub fn verify_profile(profile: &MissionProfile, model: &EnergyModel, budget: TankBudget, resolution: usize) -> ballastplan::Result<VerifyReport> {
    let grid = GridSpec::new(resolution)?;
    if profile.len() > reference_oracle::MAX_LEGS {
        return Err(Error::Size(format!(
            "verification enumerates at most {} legs, profile has {}",
            reference_oracle::MAX_LEGS,
            profile.len()
        )));
    }
    let grid_wh = reference_oracle::grid_solve(profile, model, budget, grid)?.cost_wh;
    let solver_wh = allocation::solve(profile, model, budget)?.cost_wh;
    Ok(VerifyReport {
        legs: profile.len(),
        solver_wh,
        grid_wh,
        bound_wh: reference_oracle::grid_bound(profile, model, budget, grid),
    })
}

/// Leg distances and a tank budget drawn from `seed`.
pub fn random_instance(legs: usize, seed: u64) -> ballastplan::Result<(MissionProfile, TankBudget)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d: Vec<f64> = (0..legs).map(|_| rng.random_range(0.0..150.0)).collect();
    let c = rng.random_range(0.05..4.0);
    Ok((MissionProfile::from_distances(&d)?, TankBudget::new(c)?))
}

pub fn verify(ctx: &Context, random_legs: Option<usize>, resolution: usize, out: &mut dyn Write) -> CliResult<()> {
    let (profile, budget) = match random_legs {
        Some(n) => {
            if n > reference_oracle::MAX_LEGS {
                return Err(Error::Size(format!("at most {} legs can be verified, asked for {n}", reference_oracle::MAX_LEGS)).into());
            }
            let (p, b) = random_instance(n, ctx.seed)?;
            let b = match ctx.tank_c {
                Some(c) => TankBudget::new(c).map_err(|e| CliError::config(e.to_string()))?,
                None => b,
            };
            (p, b)
        }
        None => {
            let sc = scenario(ctx)?;
            let p = sc.profile()?;
            let b = sc.budget(ctx.tank_c)?;
            (p, b)
        }
    };
    let r = verify_profile(&profile, &ctx.model, budget, resolution)?;
    writeln!(out, "legs: {}", r.legs)?;
    writeln!(out, "tank: {} fills", budget.fills())?;
    writeln!(out, "solver: {:.9} Wh", r.solver_wh)?;
    writeln!(out, "grid:   {:.9} Wh (resolution {resolution})", r.grid_wh)?;
    writeln!(out, "gap:    {:.3e} Wh (bound {:.3e})", r.grid_wh - r.solver_wh, r.bound_wh)?;
    if !r.passes() {
        return Err(CliError::runtime("solver and grid oracle disagree beyond the grid bound"));
    }
    writeln!(out, "ok")?;
    Ok(())
}

fn load_chain(path: Option<&Path>) -> CliResult<StageChain> {
    match path {
        None => Ok(StageChain::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            StageChain::from_json(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))
        }
    }
}

/// Row recharge counts the unloaded curve is calibrated against.
pub const ROW_TARGETS: [RowTarget; 2] = [
    RowTarget { num_blocks: 250, charges: 16 },
    RowTarget { num_blocks: 500, charges: 64 },
];

pub fn calibrate(ctx: &Context, target_rate: f64, trials: usize, chain: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let chain = load_chain(chain)?;
    let setup = CalibrationSetup::default();
    let hover = energy_model::calibrate_unloaded(&ROW_TARGETS, &setup)?;
    let model = energy_model::fit_curves(&CalibrationAnchors { p_hover: hover, p_unloaded_b1: 3.0 * hover, ..setup.anchors })?;
    let sigma = geometry::calibrate_sigma(&chain, target_rate, trials, ctx.seed)?;
    let achieved = geometry::monte_carlo_success(&chain, sigma, trials, ctx.seed)?;

    let model_path = output_path(ctx, "model.json")?;
    write_json(
        &model_path,
        &json!({
            "model": model,
            "calibration": {
                "anchors": {
                    "p_loaded_b0": setup.anchors.p_loaded_b0,
                    "p_loaded_b08": setup.anchors.p_loaded_b08,
                    "p_hover": hover,
                    "p_unloaded_b1": 3.0 * hover,
                },
                "row_targets": ROW_TARGETS,
            },
            "metadata": metadata(),
        }),
    )?;
    let sigma_path = output_path(ctx, "sigma.json")?;
    write_json(
        &sigma_path,
        &json!({
            "sigma_m": sigma,
            "target_rate": target_rate,
            "achieved_rate": achieved,
            "trials": trials,
            "seed": ctx.seed,
            "chain": chain,
            "metadata": metadata(),
        }),
    )?;

    writeln!(out, "loaded curve: f+(0) = {:.3} W, f+(0.8) = {:.3} W", model.loaded.eval_unchecked(0.0), model.loaded.eval_unchecked(0.8))?;
    writeln!(out, "hover power: {hover} W")?;
    writeln!(out, "sigma: {:.5} m (success {:.4} at target {target_rate})", sigma, achieved)?;
    writeln!(out, "wrote {} and {}", model_path.display(), sigma_path.display())?;
    Ok(())
}

pub fn tolerance(
    ctx: &Context,
    chain: Option<&Path>,
    trials: usize,
    sigma_max: f64,
    steps: usize,
    pose: (Option<f64>, Option<f64>),
    out: &mut dyn Write,
) -> CliResult<()> {
    let chain = load_chain(chain)?;
    if steps == 0 || !(sigma_max > 0.0) {
        return Err(CliError::config("need at least one step and a positive --sigma-max"));
    }
    if pose.0.is_some() || pose.1.is_some() {
        let err = PoseError::new(pose.0.unwrap_or(0.0), pose.1.unwrap_or(0.0))?;
        writeln!(out, "stage,dx,dy,accepted")?;
        for s in chain.stages() {
            writeln!(out, "{},{},{},{}", s.name, err.dx, err.dy, geometry::within_window(err, &s.window))?;
        }
        writeln!(out)?;
    }
    let sigmas: Vec<f64> = (0..=steps).map(|k| sigma_max * k as f64 / steps as f64).collect();
    let curve = geometry::success_curve(&chain, &sigmas, trials, ctx.seed)?;

    let path = output_path(ctx, "tolerance_curve.csv")?;
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["sigma", "rate"]).map_err(Error::from)?;
    writeln!(out, "sigma,rate")?;
    for (s, r) in &curve {
        w.write_record([s.to_string(), r.to_string()]).map_err(Error::from)?;
        writeln!(out, "{s},{r}")?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}
