use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trajex::bench::{agent_maps, run_suite, SuiteConfig};
use trajex::config::overlay_file;
use trajex::exchange::FusionMode;
use trajex::forecast::ForecasterKind;
use trajex::grid::write_pgm;
use trajex::sim::{
    load_scenario, render_lidar, sample_scenario, save_scenario, SensorConfig, Template,
};
use trajex::trajectory::{export_dictionary, generate_dictionary, DictionaryConfig};
use trajex::{Error, Result};

#[derive(Parser)]
#[command(
    name = "trajex",
    version,
    about = "Multi-agent trajectory exchange simulator and benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario suite as TOML files.
    Gen(GenArgs),
    /// Run the evaluation suite and write records.jsonl and summary.json.
    Bench(BenchArgs),
    /// Dump lidar, segmentation and map rasters of one agent as PGM.
    Render(RenderArgs),
    /// Export the trajectory dictionary.
    Dict(DictArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "criss-cross", value_parser = parse_template)]
    template: Template,
    #[arg(long, default_value_t = 20)]
    n_agents: usize,
    #[arg(long, default_value_t = 1)]
    n_com: usize,
    /// Number of scenarios, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value = "scenarios")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML file whose keys override the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_template)]
    template: Option<Template>,
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_com: Option<Vec<usize>>,
    #[arg(long)]
    n_scenarios: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_fusion)]
    fusion_mode: Option<FusionMode>,
    #[arg(long, value_parser = parse_forecaster)]
    forecaster: Option<ForecasterKind>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    d_sat: Option<f64>,
    #[arg(long)]
    entropy_floor: Option<f64>,
    #[arg(long)]
    comm_range: Option<f64>,
    #[arg(long)]
    exclude_self: bool,
    #[arg(long)]
    decision_frame: Option<usize>,
    #[arg(long)]
    no_segmentation: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    /// Scenario TOML file; generated from --template/--seed when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_parser = parse_template, default_value = "criss-cross")]
    template: Template,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    n_agents: usize,
    #[arg(long, default_value_t = 0)]
    agent: u32,
    #[arg(long, default_value_t = 10)]
    frame: usize,
    #[arg(long, value_parser = parse_forecaster, default_value = "cv_baseline")]
    forecaster: ForecasterKind,
    #[arg(long, default_value = "render-out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DictFormat {
    Bin,
    Json,
}

#[derive(Args)]
struct DictArgs {
    #[arg(long, default_value_t = 10)]
    n_speeds: usize,
    #[arg(long, default_value_t = 8)]
    n_curvatures: usize,
    #[arg(long, default_value_t = 15)]
    horizon: usize,
    #[arg(long, value_enum, default_value = "bin")]
    format: DictFormat,
    #[arg(long, default_value = "dictionary.bin")]
    out: PathBuf,
}

fn parse_template(s: &str) -> Result<Template> {
    s.parse()
}

fn parse_fusion(s: &str) -> Result<FusionMode> {
    s.parse()
}

fn parse_forecaster(s: &str) -> Result<ForecasterKind> {
    s.parse()
}

fn gen(args: &GenArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    for seed in args.seed..args.seed + args.count {
        let s = sample_scenario(args.template, args.n_agents, args.n_com, seed)?;
        let path = args.out.join(format!("scenario_{seed}.toml"));
        save_scenario(&path, &s)?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn bench_config(args: &BenchArgs) -> Result<SuiteConfig> {
    let mut cfg = SuiteConfig::default();
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = args.$f.clone() { cfg.$f = v; } )* };
    }
    take!(
        template,
        n_agents,
        n_com,
        n_scenarios,
        seed,
        seeds,
        k,
        fusion_mode,
        forecaster
    );
    take!(theta, d_sat, entropy_floor, comm_range, decision_frame);
    if args.exclude_self {
        cfg.include_self = false;
    }
    if args.no_segmentation {
        cfg.segmentation = false;
    }
    match &args.config {
        Some(path) => overlay_file(&cfg, path),
        None => {
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn bench(args: &BenchArgs) -> Result<()> {
    let cfg = bench_config(args)?;
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = run_suite(&cfg)?;
    std::fs::create_dir_all(&args.out)?;
    out.write(
        &args.out.join("records.jsonl"),
        &args.out.join("summary.json"),
    )?;
    for (n, g) in &out.summary.by_n_com {
        let rates: Vec<String> = g
            .topk
            .iter()
            .map(|(k, r)| format!("top-{k} {r:.4}"))
            .collect();
        println!(
            "n_com={n:<3} {} random {:.4} records {}",
            rates.join(" "),
            g.random_baseline,
            g.n_records
        );
    }
    if !out.summary.failed_seeds.is_empty() {
        println!("failed seeds: {:?}", out.summary.failed_seeds);
    }
    Ok(())
}

fn dump(path: &Path, raster: &trajex::grid::Raster<f64>) -> Result<()> {
    write_pgm(path, raster)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn render(args: &RenderArgs) -> Result<()> {
    let scenario = match &args.scenario {
        Some(p) => load_scenario(p)?,
        None => sample_scenario(args.template, args.n_agents, 1, args.seed)?,
    };
    let sensor = SensorConfig::default();
    std::fs::create_dir_all(&args.out)?;
    let lf = render_lidar(&scenario, args.agent, args.frame, &sensor)?;
    dump(
        &args.out.join("lidar.pgm"),
        &lf.raster.map(|&h| h as u8 as f64),
    )?;
    dump(&args.out.join("seg.pgm"), &lf.seg.map(|&c| c as f64))?;
    std::fs::write(
        args.out.join("pose.txt"),
        format!(
            "agent {}\nframe {}\nx {}\ny {}\ntheta {}\n",
            args.agent, args.frame, lf.pose.x, lf.pose.y, lf.pose.theta
        ),
    )?;
    let cfg = SuiteConfig {
        forecaster: args.forecaster,
        decision_frame: args.frame,
        ..Default::default()
    };
    let maps = agent_maps(&std::sync::Arc::new(scenario), args.agent, &cfg, &sensor)?;
    for t in 1..=maps.costmap.horizon() {
        dump(
            &args.out.join(format!("cost_t{t}.pgm")),
            &maps.costmap.cost(t)?,
        )?;
        dump(
            &args.out.join(format!("entropy_t{t}.pgm")),
            maps.entropy.step(t)?,
        )?;
    }
    Ok(())
}

fn dict(args: &DictArgs) -> Result<()> {
    let d = generate_dictionary(&DictionaryConfig {
        n_speeds: args.n_speeds,
        n_curvatures: args.n_curvatures,
        horizon: args.horizon,
        ..Default::default()
    })?;
    match args.format {
        DictFormat::Bin => std::fs::write(&args.out, export_dictionary(&d))?,
        DictFormat::Json => {
            let value = serde_json::json!({
                "id": d.id,
                "horizon": d.horizon,
                "frame_period": d.params.frame_period,
                "trajectories": d.entries.iter().map(|t| serde_json::json!({
                    "speed": t.speed,
                    "curvature": t.curvature,
                    "waypoints": t.waypoints,
                })).collect::<Vec<_>>(),
            });
            let text =
                serde_json::to_string_pretty(&value).map_err(|e| Error::Serde(e.to_string()))?;
            std::fs::write(&args.out, text + "\n")?;
        }
    }
    println!(
        "dictionary {:#010x}: {} trajectories x {} waypoints",
        d.id,
        d.len(),
        d.horizon
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Bench(a) => bench(a),
        Command::Render(a) => render(a),
        Command::Dict(a) => dict(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
