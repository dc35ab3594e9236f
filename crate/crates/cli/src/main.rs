use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use infotamp::geometry::vec2;
use infotamp::grid::topology_check;
use infotamp::ltl::{formula_to_nba, Symbol};
use infotamp::orchestrator::{render_svg, run_scenario, ScenarioConfig};
use infotamp::reactive::Body;
use infotamp::symbolic::mission_graph;

/// Informative task and motion planning for mobile manipulation.
#[derive(Parser)]
#[command(name = "infotamp", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario to a verdict.
    Run {
        config: PathBuf,
        /// Write the JSON-lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write an SVG plot of the run here.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the simulation step limit.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Parse a formula and print its automaton and mission graph.
    CheckFormula {
        formula: String,
        /// Write the automaton in the text exchange format.
        #[arg(long)]
        nba_out: Option<PathBuf>,
    },
    /// Blocking analysis from the robot start to a goal point.
    Topology {
        config: PathBuf,
        /// Goal as `x,y`.
        #[arg(long, value_parser = parse_point)]
        goal: (f64, f64),
    },
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x = x.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let y = y.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((x, y))
}

fn run(
    config: PathBuf,
    trace: Option<PathBuf>,
    plot: Option<PathBuf>,
    seed: Option<u64>,
    max_steps: Option<usize>,
) -> Result<u8> {
    let mut cfg = ScenarioConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = max_steps {
        cfg.max_steps = n;
    }
    let result = run_scenario(&cfg)?;
    if let Some(path) = trace {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        result.trace.write_jsonl(BufWriter::new(file))?;
    }
    if let Some(path) = plot {
        std::fs::write(&path, render_svg(&result.trace)).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{}", serde_json::to_string(&result.verdict)?);
    Ok(result.verdict.exit_code() as u8)
}

fn check_formula(formula: &str, nba_out: Option<PathBuf>) -> Result<u8> {
    let nba = formula_to_nba(formula)?;
    print!("{}", nba.export());
    if let Some(path) = nba_out {
        std::fs::write(&path, nba.export()).with_context(|| format!("writing {}", path.display()))?;
    }
    match mission_graph(&nba, &Symbol::empty()) {
        Ok(g) => {
            print!("{}", g.describe());
            Ok(0)
        }
        Err(e) => {
            println!("mission graph: {e}");
            Ok(2)
        }
    }
}

fn topology(config: PathBuf, goal: (f64, f64)) -> Result<u8> {
    let cfg = ScenarioConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let world = cfg.build_world()?;
    let belief = cfg.prior_belief()?;
    let body = Body::of(&world);
    let map = world.snapshot(&belief);
    let (report, _) =
        topology_check(body.center, vec2(goal.0, goal.1), body.radius, &map, cfg.controller.grid_resolution)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.is_feasible { 0 } else { 2 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Cmd::Run { config, trace, plot, seed, max_steps } => run(config, trace, plot, seed, max_steps),
        Cmd::CheckFormula { formula, nba_out } => check_formula(&formula, nba_out),
        Cmd::Topology { config, goal } => {
            if !goal.0.is_finite() || !goal.1.is_finite() {
                Err(anyhow::anyhow!("goal must be finite"))
            } else {
                topology(config, goal)
            }
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
