use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use tradeopt::economy::{load_wedges, wedges_to_json, write_calibration};
use tradeopt::equilibrium::{solve_fixed_point, HatEquilibrium};
use tradeopt::game::experiment::subsidy_perturbation_experiment;
use tradeopt::game::instruments::default_manufacturing;
use tradeopt::game::oracle::{grid_argmax, welfare_grid};
use tradeopt::game::{
    best_response, cooperative_solve, nash_solve, GameResult, Instrument, ScenarioKind, ScenarioMask,
};
use tradeopt::sensitivity::{finite_difference_gradient, policy_gradient, Objective};
use tradeopt::{Calibration, PolicyWedges, SolverOptions};

use crate::config::{Overrides, RunConfig, SyntheticSpec};
use crate::error::CliError;
use crate::output::{hat_rows, pct, policy_rows, welfare_rows, GradientRow, GridRow, OutputDir};

/// Entries of the finite-difference reference below this magnitude are
/// compared absolutely in `check-gradient`.
pub const GRADIENT_FLOOR: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "tradeopt", version, about = "Optimal and Nash trade and industrial policy solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = parse_scenario)]
    pub scenario: Option<ScenarioKind>,
    /// Comma-separated player indices.
    #[arg(long, value_delimiter = ',')]
    pub players: Option<Vec<usize>>,
    /// Calibration JSON file (replaces the config's calibration source).
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Ascent steps per player per epoch.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub max_grad_norm: Option<f64>,
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub tol_inner: Option<f64>,
    #[arg(long)]
    pub tol_outer: Option<f64>,
    /// Damping on wage and employment updates.
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Cap on concurrent equilibrium solves.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the equilibrium at given wedges.
    SolveEquilibrium {
        #[command(flatten)]
        common: Common,
        /// Wedge JSON file; baseline wedges when absent.
        #[arg(long)]
        wedges: Option<PathBuf>,
    },
    /// Nash equilibrium by best-response dynamics.
    Nash {
        #[command(flatten)]
        common: Common,
    },
    /// Unilateral best response of one player.
    BestResponse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        player: usize,
        /// Everyone else's wedges; baseline when absent.
        #[arg(long)]
        wedges: Option<PathBuf>,
    },
    /// Planner maximising income-weighted world welfare.
    Cooperative {
        #[command(flatten)]
        common: Common,
    },
    /// Random subsidy draws around a Nash profile.
    Perturb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        player: usize,
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        /// Reference profile; solved as a Nash equilibrium when absent.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Compare adjoint gradients with finite differences.
    CheckGradient {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        player: usize,
        #[arg(long)]
        wedges: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Welfare of one player over a grid of one or two instruments.
    GridOracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        player: usize,
        /// `tariff:ORIGIN:DEST:SECTOR`, `subsidy:COUNTRY:SECTOR`,
        /// `uniform-subsidy:COUNTRY` or `export-tax:ORIGIN:DEST:SECTOR`; repeat for a 2-D grid.
        #[arg(long, required = true)]
        instrument: Vec<String>,
        /// `LO:HI`, one per instrument.
        #[arg(long, required = true)]
        range: Vec<String>,
        #[arg(long, default_value_t = 101)]
        steps: usize,
        #[arg(long)]
        wedges: Option<PathBuf>,
    },
    /// Write a synthetic calibration file.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        countries: Option<usize>,
        #[arg(long)]
        sectors: Option<usize>,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_scenario(s: &str) -> Result<ScenarioKind, String> {
    s.parse().map_err(|e: tradeopt::game::ScenarioError| {
        let names: Vec<&str> = ScenarioKind::ALL.iter().map(|k| k.name()).collect();
        format!("{e}; expected one of {}", names.join(", "))
    })
}

struct Run {
    cfg: RunConfig,
    cal: Calibration,
    out: OutputDir,
}

fn setup_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    match jobs {
        Some(0) => Err(CliError::Validation("--jobs must be at least 1".into())),
        #[cfg(feature = "parallel")]
        Some(j) => {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
            Ok(())
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(()),
        None => Ok(()),
    }
}

fn load_config(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: c.seed,
        scenario: c.scenario,
        players: c.players.clone(),
        calibration: c.calibration.clone(),
        lr: c.lr,
        epochs: c.epochs,
        iters: c.iters,
        eta: c.eta,
        max_grad_norm: c.max_grad_norm,
        no_clip: c.no_clip,
        tol_inner: c.tol_inner,
        tol_outer: c.tol_outer,
        damping: c.damping,
        output_dir: c.output_dir.clone(),
    });
    Ok(cfg)
}

fn prepare(c: &Common) -> Result<Run, CliError> {
    setup_jobs(c.jobs)?;
    let cfg = load_config(c)?;
    cfg.validate()?;
    let cal = cfg.calibration()?;
    let root = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("tradeopt-out"));
    let out = OutputDir::create(&root)?;
    Ok(Run { cfg, cal, out })
}

fn wedges_or_baseline(cal: &Calibration, path: &Option<PathBuf>) -> Result<PolicyWedges, CliError> {
    match path {
        Some(p) => load_wedges(p, cal).map_err(|e| CliError::from_calibration(e, p)),
        None => Ok(PolicyWedges::baseline(cal)),
    }
}

fn check_player(cal: &Calibration, player: usize) -> Result<(), CliError> {
    if player >= cal.countries() {
        return Err(CliError::Validation(format!(
            "player {player} out of range for {} countries",
            cal.countries()
        )));
    }
    Ok(())
}

impl Run {
    fn metadata(&self, command: &str) -> Value {
        let mut echo = self.cfg.clone();
        echo.output_dir = None;
        let source = match &self.cfg.calibration.path {
            Some(p) => json!(p),
            None => json!("synthetic"),
        };
        json!({
            "command": command,
            "seed": self.cfg.seed(),
            "config": echo,
            "calibration": {
                "source": source,
                "countries": self.cal.countries(),
                "sectors": self.cal.sectors(),
                "country_labels": self.cal.data().countries,
                "sector_labels": self.cal.data().sectors,
            },
        })
    }

    fn scenario(&self, default: ScenarioKind) -> ScenarioKind {
        self.cfg.scenario.unwrap_or(default)
    }

    fn mask(&self, kind: ScenarioKind) -> Result<ScenarioMask, CliError> {
        ScenarioMask::new(&self.cal, kind, &self.cfg.mask_options()).map_err(|e| CliError::Validation(e.to_string()))
    }

    fn write_profile(
        &self,
        scenario: &str,
        players: &[usize],
        w: &PolicyWedges,
        eq: &HatEquilibrium,
    ) -> Result<(), CliError> {
        self.out
            .write_rows("policies.csv", &policy_rows(scenario, players, &self.cal, w))?;
        self.out.write_rows("welfare.csv", &welfare_rows(scenario, eq))?;
        self.out.write_rows("hats.csv", &hat_rows(eq))?;
        self.out.write_text("profile.json", &(wedges_to_json(w) + "\n"))
    }
}

fn equilibrium_json(eq: &HatEquilibrium) -> Value {
    json!({
        "iterations": eq.iterations,
        "residual": eq.residual,
        "tol": eq.tol,
        "converged": eq.converged(),
        "welfare": eq.welfare,
        "income_change": eq.income_change,
        "price_index_change": eq.price_index_change,
    })
}

fn game_json(r: &GameResult) -> Value {
    json!({
        "scenario": r.scenario.name(),
        "epochs": r.epochs,
        "converged": r.converged,
        "round_norms": r.round_norms,
        "sequences": r.sequences,
        "objective": r.objective,
        "players": r.players.iter().map(|p| json!({
            "player": p.player,
            "stationarity": p.stationarity,
            "warnings": p.warnings,
        })).collect::<Vec<_>>(),
    })
}

fn not_converged(r: &GameResult) -> Result<(), CliError> {
    if r.converged {
        Ok(())
    } else {
        Err(CliError::NonConvergence(format!(
            "{} did not converge in {} epochs (last round change {:.3e}); outputs hold the last profile",
            r.scenario,
            r.epochs,
            r.round_norms.last().copied().unwrap_or(f64::NAN)
        )))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SolveEquilibrium { common, wedges } => solve_equilibrium(&common, &wedges),
        Command::Nash { common } => nash(&common),
        Command::BestResponse { common, player, wedges } => best_response_cmd(&common, player, &wedges),
        Command::Cooperative { common } => cooperative(&common),
        Command::Perturb {
            common,
            player,
            draws,
            profile,
        } => perturb(&common, player, draws, &profile),
        Command::CheckGradient {
            common,
            player,
            wedges,
            threshold,
            step,
        } => check_gradient(&common, player, &wedges, threshold, step),
        Command::GridOracle {
            common,
            player,
            instrument,
            range,
            steps,
            wedges,
        } => grid_oracle(&common, player, &instrument, &range, steps, &wedges),
        Command::Generate {
            common,
            countries,
            sectors,
            output,
        } => generate(&common, countries, sectors, &output),
    }
}

fn solve_equilibrium(c: &Common, wedges: &Option<PathBuf>) -> Result<(), CliError> {
    let run = prepare(c)?;
    let w = wedges_or_baseline(&run.cal, wedges)?;
    let eq = solve_fixed_point(&run.cal, &w, &run.cfg.solver_options(), None)?;
    let all: Vec<usize> = (0..run.cal.countries()).collect();
    run.write_profile("given", &all, &w, &eq)?;
    let mut meta = run.metadata("solve-equilibrium");
    meta["equilibrium"] = equilibrium_json(&eq);
    run.out.write_json("metadata.json", &meta)
}

fn nash(c: &Common) -> Result<(), CliError> {
    let run = prepare(c)?;
    let kind = run.scenario(ScenarioKind::Dual);
    if kind.is_cooperative() {
        return Err(CliError::Validation(format!(
            "{kind} is a cooperative scenario; use the `cooperative` command"
        )));
    }
    let r = solve_nash(&run, kind)?;
    let mut meta = run.metadata("nash");
    meta["game"] = game_json(&r);
    meta["equilibrium"] = equilibrium_json(&r.equilibrium);
    run.out.write_json("metadata.json", &meta)?;
    not_converged(&r)
}

fn solve_nash(run: &Run, kind: ScenarioKind) -> Result<GameResult, CliError> {
    let mask = run.mask(kind)?;
    let r = nash_solve(&run.cal, &mask, &run.cfg.nash_options(), None)?;
    log::info!("{kind}: {} epochs, converged {}", r.epochs, r.converged);
    run.write_profile(kind.name(), &mask.players, &r.profile, &r.equilibrium)?;
    Ok(r)
}

fn best_response_cmd(c: &Common, player: usize, wedges: &Option<PathBuf>) -> Result<(), CliError> {
    let mut run = prepare(c)?;
    check_player(&run.cal, player)?;
    let kind = run.scenario(ScenarioKind::Dual);
    if kind.is_cooperative() {
        return Err(CliError::Validation(format!("{kind} has no unilateral best response")));
    }
    run.cfg.players = Some(vec![player]);
    let mask = run.mask(kind)?;
    let w = wedges_or_baseline(&run.cal, wedges)?;
    let inst = mask.player_instruments(player).expect("player in mask");
    let br = best_response(&run.cal, &w, player, inst, &run.cfg.br_options())?;
    let profile = tradeopt::game::apply_values(inst, &w, &br.values);
    run.write_profile(kind.name(), &[player], &profile, &br.equilibrium)?;
    let mut meta = run.metadata("best-response");
    meta["best_response"] = json!({
        "player": player,
        "scenario": kind.name(),
        "steps": br.steps,
        "objective": br.objective,
        "stationarity": br.stationarity,
        "warnings": br.warnings,
    });
    meta["equilibrium"] = equilibrium_json(&br.equilibrium);
    run.out.write_json("metadata.json", &meta)
}

fn cooperative(c: &Common) -> Result<(), CliError> {
    let run = prepare(c)?;
    let kind = run.scenario(ScenarioKind::CooperativeDual);
    if !kind.is_cooperative() {
        return Err(CliError::Validation(format!(
            "{kind} is not a cooperative scenario; use cooperative-tariff or cooperative-dual"
        )));
    }
    let mask = run.mask(kind)?;
    let r = cooperative_solve(&run.cal, &mask, &run.cfg.nash_options())?;
    run.write_profile(kind.name(), &mask.players, &r.profile, &r.equilibrium)?;
    let mut meta = run.metadata("cooperative");
    meta["game"] = game_json(&r);
    meta["weights"] = json!(run.cal.income_weights());
    meta["equilibrium"] = equilibrium_json(&r.equilibrium);
    run.out.write_json("metadata.json", &meta)?;
    not_converged(&r)
}

fn perturb(c: &Common, player: usize, draws: usize, profile: &Option<PathBuf>) -> Result<(), CliError> {
    let run = prepare(c)?;
    check_player(&run.cal, player)?;
    if draws == 0 {
        return Err(CliError::Validation("--draws must be at least 1".into()));
    }
    let mut meta = run.metadata("perturb");
    let (reference, warm) = match profile {
        Some(p) => (wedges_or_baseline(&run.cal, &Some(p.clone()))?, None),
        None => {
            let kind = run.scenario(ScenarioKind::Dual);
            if kind.is_cooperative() {
                return Err(CliError::Validation(format!("{kind} has no Nash profile to perturb")));
            }
            let r = solve_nash(&run, kind)?;
            meta["game"] = game_json(&r);
            if !r.converged {
                run.out.write_json("metadata.json", &meta)?;
                return not_converged(&r);
            }
            (r.profile, Some(r.equilibrium.state))
        }
    };
    let seed = run.cfg.seed();
    let solver = run.cfg.solver_options();
    let r = subsidy_perturbation_experiment(&run.cal, &reference, player, draws, seed, &solver, warm.as_ref())?;
    run.out.write_perturbation(&run.cal, &r)?;
    let failed = r.draws.iter().filter(|d| d.welfare.is_err()).count();
    let best = r.max_welfare();
    meta["perturbation"] = json!({
        "player": player,
        "draws": draws,
        "failed_draws": failed,
        "reference_subsidies": r.reference,
        "reference_welfare": r.reference_welfare,
        "reference_welfare_change_pct": pct(r.reference_welfare),
        "max_draw_welfare": best,
        "max_draw_excess": best.map(|b| b - r.reference_welfare),
    });
    run.out.write_json("metadata.json", &meta)
}

fn check_gradient(
    c: &Common,
    player: usize,
    wedges: &Option<PathBuf>,
    threshold: f64,
    step: f64,
) -> Result<(), CliError> {
    let mut run = prepare(c)?;
    check_player(&run.cal, player)?;
    if !(threshold >= 0.0) {
        return Err(CliError::Validation("--threshold must be nonnegative".into()));
    }
    let kind = run.scenario(ScenarioKind::Dual);
    run.cfg.players = Some(vec![player]);
    let mask = run.mask(kind)?;
    let inst = mask.player_instruments(player).expect("player in mask");
    let w = wedges_or_baseline(&run.cal, wedges)?;
    // differences of welfare need a tighter solve than the game loop
    let solver = SolverOptions::precise(run.cfg.solver.tol_inner.min(1e-12));
    let eq = solve_fixed_point(&run.cal, &w, &solver, None)?;
    let obj = Objective::Country(player);
    let adj = policy_gradient(&run.cal, &w, &obj, inst, &eq)?;
    let fd = finite_difference_gradient(&run.cal, &w, &obj, inst, step, &solver, Some(&eq.state))?;
    let rows: Vec<GradientRow> = inst
        .iter()
        .zip(adj.values.iter().zip(&fd.values))
        .map(|(i, (&a, &f))| GradientRow {
            instrument: i.to_string(),
            adjoint: a,
            finite_difference: f,
            abs_error: (a - f).abs(),
            rel_error: (a - f).abs() / f.abs().max(GRADIENT_FLOOR),
        })
        .collect();
    let max_rel = rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    run.out.write_rows("gradient_check.csv", &rows)?;
    let mut meta = run.metadata("check-gradient");
    meta["gradient_check"] = json!({
        "player": player,
        "scenario": kind.name(),
        "instruments": rows.len(),
        "step": step,
        "floor": GRADIENT_FLOOR,
        "threshold": threshold,
        "max_rel_error": max_rel,
        "linear_solves": adj.linear_solves,
    });
    meta["equilibrium"] = equilibrium_json(&eq);
    run.out.write_json("metadata.json", &meta)?;
    if max_rel > threshold {
        return Err(CliError::CheckFailed(format!(
            "max relative gradient error {max_rel:.3e} exceeds threshold {threshold:.1e}"
        )));
    }
    Ok(())
}

pub fn parse_instrument(cal: &Calibration, spec: &str, uniform: Option<&[usize]>) -> Result<Instrument, CliError> {
    let bad = |m: &str| CliError::Validation(format!("instrument {spec:?}: {m}"));
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or_default();
    let nums = parts
        .map(|p| p.parse::<usize>().map_err(|_| bad("indices must be nonnegative integers")))
        .collect::<Result<Vec<_>, _>>()?;
    let (n, j) = (cal.countries(), cal.sectors());
    let country_ok = |k: usize| k < n;
    let sector_ok = |s: usize| s < j && cal.data().tradable[s];
    let inst = match (kind, nums.as_slice()) {
        ("tariff", &[o, d, s]) if o != d => Instrument::Tariff {
            origin: o,
            destination: d,
            sector: s,
        },
        ("export-tax", &[o, d, s]) if o != d => Instrument::ExportTax {
            origin: o,
            destination: d,
            sector: s,
        },
        ("tariff" | "export-tax", &[_, _, _]) => return Err(bad("origin and destination must differ")),
        ("subsidy", &[c, s]) => Instrument::Subsidy { country: c, sector: s },
        ("uniform-subsidy", &[c]) => Instrument::UniformSubsidy {
            country: c,
            sectors: uniform.map_or_else(|| default_manufacturing(cal), |u| u.to_vec()),
        },
        _ => {
            return Err(bad(
                "expected tariff:O:D:S, export-tax:O:D:S, subsidy:C:S or uniform-subsidy:C",
            ))
        }
    };
    let ok = match &inst {
        Instrument::Tariff {
            origin,
            destination,
            sector,
        }
        | Instrument::ExportTax {
            origin,
            destination,
            sector,
        } => country_ok(*origin) && country_ok(*destination) && sector_ok(*sector),
        Instrument::Subsidy { country, sector } => country_ok(*country) && sector_ok(*sector),
        Instrument::UniformSubsidy { country, sectors } => {
            country_ok(*country) && !sectors.is_empty() && sectors.iter().all(|&s| sector_ok(s))
        }
    };
    if !ok {
        return Err(bad("index out of range or sector not tradable"));
    }
    Ok(inst)
}

fn parse_range(s: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Validation(format!("range {s:?}: expected LO:HI with LO <= HI"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo <= hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn grid_oracle(
    c: &Common,
    player: usize,
    specs: &[String],
    ranges: &[String],
    steps: usize,
    wedges: &Option<PathBuf>,
) -> Result<(), CliError> {
    let run = prepare(c)?;
    check_player(&run.cal, player)?;
    if specs.is_empty() || specs.len() > 2 || specs.len() != ranges.len() {
        return Err(CliError::Validation(
            "give one or two --instrument flags and one --range per instrument".into(),
        ));
    }
    let uniform = run.cfg.mask.uniform_sectors.as_deref();
    let inst = specs
        .iter()
        .map(|s| parse_instrument(&run.cal, s, uniform))
        .collect::<Result<Vec<_>, _>>()?;
    let ranges = ranges.iter().map(|r| parse_range(r)).collect::<Result<Vec<_>, _>>()?;
    let w = wedges_or_baseline(&run.cal, wedges)?;
    let obj = Objective::Country(player);
    let pts = welfare_grid(
        &run.cal,
        &w,
        &obj,
        &inst,
        &ranges,
        steps,
        &run.cfg.limits,
        &run.cfg.solver_options(),
    )?;
    let rows: Vec<GridRow> = pts
        .iter()
        .map(|p| GridRow {
            value_1: p.values[0],
            value_2: p.values.get(1).copied(),
            welfare: p.welfare.as_ref().ok().copied(),
            welfare_change_pct: p.welfare.as_ref().ok().map(|&v| pct(v)),
            error: p.welfare.as_ref().err().cloned(),
        })
        .collect();
    run.out.write_rows("grid.csv", &rows)?;
    let best = grid_argmax(&pts);
    let mut meta = run.metadata("grid-oracle");
    meta["grid"] = json!({
        "player": player,
        "instruments": inst.iter().map(|i| i.to_string()).collect::<Vec<_>>(),
        "ranges": ranges,
        "steps": steps,
        "points": pts.len(),
        "failed_points": pts.iter().filter(|p| p.welfare.is_err()).count(),
        "argmax": best.map(|b| &b.values),
        "max_welfare": best.and_then(|b| b.welfare.as_ref().ok()),
    });
    run.out.write_json("metadata.json", &meta)
}

fn generate(
    c: &Common,
    countries: Option<usize>,
    sectors: Option<usize>,
    output: &std::path::Path,
) -> Result<(), CliError> {
    setup_jobs(c.jobs)?;
    let mut cfg = load_config(c)?;
    if cfg.calibration.path.is_some() {
        return Err(CliError::Validation(
            "generate needs a synthetic calibration, not a calibration path".into(),
        ));
    }
    let spec = cfg.calibration.synthetic.get_or_insert_with(SyntheticSpec::default);
    if let Some(n) = countries {
        spec.countries = n;
    }
    if let Some(j) = sectors {
        spec.sectors = j;
    }
    cfg.validate()?;
    let cal = cfg.calibration()?;
    write_calibration(&cal, output).map_err(|e| CliError::from_calibration(e, output))
}
