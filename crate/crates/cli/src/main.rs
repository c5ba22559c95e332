use std::error::Error as StdError;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use svo_mapf::execution::{build_adg, pad_plan, simulate_execution, ExecutionConfig};
use svo_mapf::gridworld::EnvConfig;
use svo_mapf::harness::{
    corridor_case_study, paired_t_test, run_batch, run_episode, BenchConfig, CaseStudyConfig, PolicySpec, ScriptedMode,
    TraceRecord,
};
use svo_mapf::learner::{curves_csv, train, Checkpoint, TrainConfig};
use svo_mapf::mapgen::{gen_corridor, gen_maze, gen_random, gen_room, read_map, write_map, CorridorKind, MapFamily};
use svo_mapf::resolver::resolve;
use svo_mapf::social::SocialConfig;
use svo_mapf::{Action, Cell, Exec, Scenario};

type CliResult<T> = std::result::Result<T, Box<dyn StdError>>;

#[derive(Parser)]
#[command(name = "svo-mapf", version, about = "Socially-aware multi-agent pathfinding")]
struct Cli {
    /// Run every loop sequentially.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKind {
    Random,
    Room,
    Maze,
    Recess,
    Ishape,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Random,
    Room,
    Maze,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a map and scenario into DIR (map.map, scenario.json).
    GenMap {
        #[arg(long, value_enum)]
        kind: MapKind,
        /// WxH, or a single side for square maps. Ignored for corridors.
        #[arg(long, default_value = "32x32")]
        size: String,
        #[arg(long, default_value_t = 0.2)]
        density: f64,
        #[arg(long, default_value_t = 8)]
        agents: usize,
        /// Corridor length for recess and ishape maps.
        #[arg(long, default_value_t = 6)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and print its metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// scripted, homo, hetero, greedy, trained:PATH or trained-greedy:PATH
        #[arg(long, default_value = "scripted")]
        policy: String,
        #[arg(long, default_value_t = 256)]
        max_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSON-lines trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Resolve one joint action from a JSON snapshot {map, positions, intents, svos}.
    Resolve {
        #[arg(long)]
        state: PathBuf,
    },
    /// Train a policy; writes checkpoint.json and curves.csv into DIR.
    Train {
        /// TrainConfig JSON; missing fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay an episode trace through the dependency graph in continuous time.
    ReplayAdg {
        #[arg(long)]
        trace: PathBuf,
        /// JSON array of per-robot speeds; all 1.0 when omitted.
        #[arg(long)]
        speeds: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the execution log here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark batch and write the JSON report.
    Bench {
        #[arg(long, value_enum, default_value = "random")]
        family: Family,
        #[arg(long, default_value = "32")]
        size: String,
        #[arg(long, default_value_t = 0.2)]
        density: f64,
        #[arg(long, default_value_t = 8)]
        agents: usize,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value = "scripted")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        max_steps: usize,
        /// Record wall-clock times (makes the report non-reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-instance rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Paired t-test between two samples (JSON array or whitespace-separated numbers).
    Ttest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Corridor case study over a recess / i-shape mixture.
    CaseStudy {
        #[arg(long, default_value_t = 0.8)]
        p_recess: f64,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        /// homo, hetero, trained:PATH or trained-greedy:PATH
        #[arg(long, default_value = "hetero")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let (w, h) = match s.split_once(['x', 'X']) {
        Some((w, h)) => (w.trim().parse()?, h.trim().parse()?),
        None => {
            let side = s.trim().parse()?;
            (side, side)
        }
    };
    Ok((w, h))
}

fn parse_policy(s: &str) -> CliResult<PolicySpec> {
    let trained = |path: &str, greedy: bool| -> CliResult<PolicySpec> {
        let ck = Checkpoint::load(Path::new(path))?;
        Ok(PolicySpec::Trained {
            policy: Arc::new(ck.policy()),
            greedy,
        })
    };
    Ok(match s {
        "greedy" => PolicySpec::Greedy,
        "scripted" | "hetero" => PolicySpec::Scripted(ScriptedMode::Heterogeneous),
        "homo" => PolicySpec::Scripted(ScriptedMode::HomogeneousSelfish),
        _ => {
            if let Some(path) = s.strip_prefix("trained:") {
                trained(path, false)?
            } else if let Some(path) = s.strip_prefix("trained-greedy:") {
                trained(path, true)?
            } else {
                return Err(format!("unknown policy `{s}`").into());
            }
        }
    })
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> CliResult<()> {
    match out {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn read_numbers(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    Ok(text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()?)
}

#[derive(Deserialize)]
struct ResolveState {
    /// Inline map text.
    map: String,
    positions: Vec<Cell>,
    intents: Vec<Action>,
    svos: Vec<f64>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match cli.command {
        Command::GenMap {
            kind,
            size,
            density,
            agents,
            length,
            seed,
            out,
        } => {
            let (w, h) = parse_size(&size)?;
            let sc = match kind {
                MapKind::Random => gen_random(w, h, density, agents, seed)?,
                MapKind::Room => gen_room(w, h, agents, seed)?,
                MapKind::Maze => gen_maze(w, h, agents, seed)?,
                MapKind::Recess => gen_corridor(CorridorKind::Recess, length, seed)?,
                MapKind::Ishape => gen_corridor(CorridorKind::IShape, length, seed)?,
            };
            fs::create_dir_all(&out)?;
            write(&out.join("map.map"), &write_map(&sc.map))?;
            let file = sc.to_file("map.map");
            write(&out.join("scenario.json"), &(serde_json::to_string(&file)? + "\n"))?;
        }
        Command::Run {
            scenario,
            policy,
            max_steps,
            seed,
            trace,
        } => {
            let sc = Scenario::load(&scenario)?;
            let env = EnvConfig {
                max_episode_length: max_steps,
                ..EnvConfig::default()
            };
            let r = run_episode(&sc, &parse_policy(&policy)?, env, &SocialConfig::default(), seed)?;
            if let Some(path) = trace {
                write(&path, &r.to_jsonl()?)?;
            }
            println!("{}", serde_json::to_string(&r.metrics)?);
        }
        Command::Resolve { state } => {
            let text = fs::read_to_string(&state)?;
            let s: ResolveState = serde_json::from_str(&text)?;
            let map = read_map(&s.map)?;
            let outcome = resolve(&map, &s.positions, &s.intents, &s.svos)?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
        }
        Command::Train { config, out } => {
            let cfg: TrainConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p)?)?,
                None => TrainConfig::default(),
            };
            let outcome = train(&cfg, exec, |s| {
                eprintln!(
                    "iter {:3} steps {:7} episodes {:3} goals {:.3} reward {:.2}",
                    s.iteration, s.env_steps, s.episodes, s.goals, s.mean_reward
                )
            })?;
            fs::create_dir_all(&out)?;
            outcome.checkpoint.save(&out.join("checkpoint.json"))?;
            write(&out.join("curves.csv"), &curves_csv(&outcome.curve))?;
            if let Some(e) = outcome.diverged {
                return Err(format!("training stopped early: {e}").into());
            }
        }
        Command::ReplayAdg {
            trace,
            speeds,
            jitter,
            seed,
            out,
        } => {
            let text = fs::read_to_string(&trace)?;
            let mut steps = Vec::new();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                // The metrics line at the end has no positions.
                if let Ok(rec) = serde_json::from_str::<TraceRecord>(line) {
                    steps.push(rec.positions);
                }
            }
            if steps.is_empty() {
                return Err("trace has no records".into());
            }
            let n = steps[0].len();
            let plan: Vec<Vec<Cell>> = (0..n).map(|i| steps.iter().map(|s| s[i]).collect()).collect();
            let graph = build_adg(&pad_plan(&plan))?;
            let speeds: Vec<f64> = match speeds {
                Some(p) => read_numbers(&p)?,
                None => vec![1.0; n],
            };
            let cfg = ExecutionConfig {
                base_time: 1.0,
                jitter,
                seed,
            };
            let log = simulate_execution(&graph, &speeds, &cfg)?;
            emit(out.as_deref(), &log.to_jsonl()?)?;
            eprintln!("makespan {}", log.makespan);
        }
        Command::Bench {
            family,
            size,
            density,
            agents,
            instances,
            policy,
            seed,
            max_steps,
            timing,
            out,
            csv,
        } => {
            let (width, height) = parse_size(&size)?;
            let config = BenchConfig {
                family: match family {
                    Family::Random => MapFamily::Random,
                    Family::Room => MapFamily::Room,
                    Family::Maze => MapFamily::Maze,
                },
                width,
                height,
                density,
                n_agents: agents,
                instances,
                seed,
                env: EnvConfig {
                    max_episode_length: max_steps,
                    ..EnvConfig::default()
                },
                social: SocialConfig::default(),
                timing,
            };
            let report = run_batch(&config, &parse_policy(&policy)?, exec)?;
            write(&out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            if let Some(p) = csv {
                write(&p, &report.to_csv())?;
            }
            println!(
                "{} instances, success rate {:.3}, mean episode length {:.2}",
                report.instances, report.success_rate, report.mean_episode_length
            );
        }
        Command::Ttest { a, b } => {
            let r = paired_t_test(&read_numbers(&a)?, &read_numbers(&b)?)?;
            println!("{}", serde_json::to_string(&r)?);
        }
        Command::CaseStudy {
            p_recess,
            episodes,
            policy,
            seed,
            out,
        } => {
            if policy == "greedy" || policy == "scripted" {
                return Err("case-study policy must be homo, hetero or trained:PATH".into());
            }
            let config = CaseStudyConfig {
                p_recess,
                p_ishape: 1.0 - p_recess,
                episodes,
                seed,
                ..CaseStudyConfig::default()
            };
            let report = corridor_case_study(&config, &parse_policy(&policy)?, exec)?;
            emit(out.as_deref(), &(serde_json::to_string_pretty(&report)? + "\n"))?;
        }
    }
    Ok(())
}
