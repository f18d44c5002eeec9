use std::path::{Path, PathBuf};

use serde::Serialize;

use ratingsim::inference::{
    importance_sample, mh_chains, summarize, McmcDiagnostics, McmcOptions, PosteriorSummary,
};
use ratingsim::influence::{coordination_sweep, influence as measure_influence, InfluenceReport, Predictive, SweepTable};
use ratingsim::scenario::{generate as generate_scenario, Scenario, ScenarioConfig};
use ratingsim::trace::FixedLatents;
use ratingsim::{DisarmMask, LatentAssignment, ModelConfig, TOOL_VERSION};

use crate::error::{CliError, Result};
use crate::output::{ensure_dir, read_to_string, write_json, CsvTable};
use crate::{Engine, PredictiveArg};

const SCHEMA_VERSION: u32 = 1;

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    Ok(ScenarioConfig::from_json(&read_to_string(path)?)?)
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Ok(Scenario::from_json(&read_to_string(path)?)?)
}

pub fn generate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let seed = seed.unwrap_or(cfg.seed);
    let scenario = generate_scenario(&cfg, seed)?;
    write_json(out, &scenario)?;
    println!(
        "scenario seed {seed}: malicious users {:?}",
        scenario.ground_truth.malicious_users()
    );
    Ok(())
}

pub struct InferArgs {
    pub scenario: PathBuf,
    pub engine: Engine,
    pub n: usize,
    pub seed: u64,
    pub chains: usize,
    pub burn_in: f64,
    pub thin: usize,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ScenarioRef<'a> {
    seed: u64,
    ground_truth: &'a LatentAssignment,
    ground_truth_targets: &'a [usize],
}

impl<'a> From<&'a Scenario> for ScenarioRef<'a> {
    fn from(s: &'a Scenario) -> Self {
        ScenarioRef {
            seed: s.seed,
            ground_truth: &s.ground_truth,
            ground_truth_targets: &s.ground_truth_targets,
        }
    }
}

#[derive(Serialize)]
struct PosteriorFile<'a> {
    format: &'static str,
    schema_version: u32,
    tool_version: &'static str,
    engine: &'static str,
    n: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mcmc: Option<McmcSettings<'a>>,
    config: &'a ModelConfig,
    scenario: ScenarioRef<'a>,
    summary: &'a PosteriorSummary,
}

#[derive(Serialize)]
struct McmcSettings<'a> {
    chains: usize,
    options: McmcOptions,
    diagnostics: &'a McmcDiagnostics,
}

pub fn infer(args: &InferArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let model = scenario.model()?;
    let options = McmcOptions {
        burn_in_fraction: args.burn_in,
        thin: args.thin,
    };
    let (posterior, diagnostics) = match args.engine {
        Engine::Is => (importance_sample(&model, &scenario.observed, args.n, args.seed)?, None),
        Engine::Mh => {
            let run = mh_chains(&model, &scenario.observed, args.n, args.seed, args.chains, options)?;
            (run.posterior, Some(run.diagnostics))
        }
    };
    let summary = summarize(&posterior)?;
    if summary.ess <= 0.0 {
        return Err(CliError::Degenerate("effective sample size is zero".into()));
    }
    let engine = match args.engine {
        Engine::Is => "is",
        Engine::Mh => "mh",
    };

    ensure_dir(&args.out)?;
    let n_users = model.config().n_users;
    let n_movies = model.config().n_movies;
    let mut header = vec![
        "trace".to_string(),
        "log_weight".into(),
        "weight".into(),
        "log_likelihood".into(),
        "n_malicious".into(),
    ];
    header.extend((0..n_users).map(|i| format!("beta_{i}")));
    header.extend((0..n_users).map(|i| format!("target_{i}")));
    let mut table = CsvTable::new(header);
    table
        .meta("format", "ratingsim-posterior-traces")
        .meta("schema_version", SCHEMA_VERSION)
        .meta("tool_version", TOOL_VERSION)
        .meta("engine", engine)
        .meta("seed", args.seed)
        .meta("scenario_seed", scenario.seed)
        .meta_json("config", model.config());
    let weights = posterior.normalized_weights()?;
    for (k, (trace, (&lw, w))) in posterior
        .traces()
        .iter()
        .zip(posterior.log_weights().iter().zip(&weights))
        .enumerate()
    {
        let l = &trace.latents;
        let mut row = vec![
            k.to_string(),
            lw.to_string(),
            w.to_string(),
            trace.log_likelihood.to_string(),
            l.n_malicious().to_string(),
        ];
        row.extend(l.malicious.iter().map(|&b| u8::from(b).to_string()));
        row.extend((0..n_users).map(|i| {
            if l.malicious[i] {
                l.target_movie(i, n_movies).to_string()
            } else {
                String::new()
            }
        }));
        table.row(row);
    }
    table.write(&args.out.join("posterior.csv"))?;

    let file = PosteriorFile {
        format: "ratingsim-posterior-summary",
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        engine,
        n: args.n,
        seed: args.seed,
        mcmc: diagnostics.as_ref().map(|d| McmcSettings {
            chains: args.chains,
            options,
            diagnostics: d,
        }),
        config: model.config(),
        scenario: ScenarioRef::from(&scenario),
        summary: &summary,
    };
    write_json(&args.out.join("summary.json"), &file)?;

    match &diagnostics {
        None => println!("ess {:.3} over {} traces", summary.ess, summary.n_traces),
        Some(d) => {
            println!("acceptance overall {:.4}", d.overall.rate());
            for (kind, count) in &d.by_kind {
                println!(
                    "acceptance {} {:.4} (value-changing {:.4})",
                    kind.name(),
                    count.rate(),
                    d.moved_rate(*kind)
                );
            }
        }
    }
    if let Some(user) = summary.modal_user().filter(|&u| summary.p_malicious[u] > 0.0) {
        let p = summary.p_malicious[user];
        if p >= 1e-4 {
            println!("modal malicious user {user} (p = {p:.4})");
        } else {
            println!("modal malicious user {user} (p = {p:.3e})");
        }
    } else {
        println!("no user carries posterior maliciousness mass");
    }
    Ok(())
}

/// Parses `malicious`, `none`, `all` or a comma-separated list of user indices.
pub fn parse_mask(spec: &str, scenario: &Scenario) -> Result<DisarmMask> {
    let n = scenario.config.n_users;
    match spec.trim() {
        "malicious" => Ok(DisarmMask::malicious(&scenario.ground_truth)),
        "none" => Ok(DisarmMask::none(n)),
        "all" => Ok(DisarmMask::all(n)),
        list => {
            let users = list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| CliError::Config(format!("invalid mask entry {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DisarmMask::from_users(&users, n)?)
        }
    }
}

pub struct InfluenceArgs {
    pub scenario: PathBuf,
    pub mask: String,
    pub n_runs: usize,
    pub seed: u64,
    pub bins: usize,
    pub predictive: PredictiveArg,
    pub is_traces: usize,
    pub is_seed: u64,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct PosteriorSource {
    is_traces: usize,
    is_seed: u64,
    ess: f64,
}

#[derive(Serialize)]
struct InfluenceFile<'a> {
    format: &'static str,
    schema_version: u32,
    tool_version: &'static str,
    mask_spec: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior: Option<PosteriorSource>,
    config: &'a ModelConfig,
    scenario: ScenarioRef<'a>,
    report: &'a InfluenceReport,
}

pub fn influence(args: &InfluenceArgs) -> Result<()> {
    let scenario = load_scenario(&args.scenario)?;
    let model = scenario.model()?;
    let mask = parse_mask(&args.mask, &scenario)?;

    let (report, source) = match args.predictive {
        PredictiveArg::Prior => {
            let fixed = FixedLatents::malicious_only(scenario.ground_truth.malicious.clone());
            let report = measure_influence(
                &model,
                &mask,
                args.n_runs,
                args.seed,
                args.bins,
                Predictive::Prior(Some(&fixed)),
            )?;
            (report, None)
        }
        PredictiveArg::Posterior => {
            let posterior = importance_sample(&model, &scenario.observed, args.is_traces, args.is_seed)?;
            let ess = posterior.ess();
            if ess <= 0.0 {
                return Err(CliError::Degenerate("effective sample size is zero".into()));
            }
            let report = measure_influence(
                &model,
                &mask,
                args.n_runs,
                args.seed,
                args.bins,
                Predictive::Posterior(&posterior),
            )?;
            let source = PosteriorSource {
                is_traces: args.is_traces,
                is_seed: args.is_seed,
                ess,
            };
            (report, Some(source))
        }
    };

    ensure_dir(&args.out)?;
    let mut table = CsvTable::new(["user", "movie", "js_distance"]);
    table
        .meta("format", "ratingsim-influence-cells")
        .meta("schema_version", SCHEMA_VERSION)
        .meta("tool_version", TOOL_VERSION)
        .meta("seed", args.seed)
        .meta("scenario_seed", scenario.seed)
        .meta("n_runs", args.n_runs)
        .meta("bins", args.bins)
        .meta_json("mode", &report.mode)
        .meta_json("mask", &report.mask)
        .meta("avg_js", report.avg_js)
        .meta_json("config", model.config());
    for i in 0..report.rows {
        for j in 0..report.cols {
            table.row(vec![i.to_string(), j.to_string(), report.cell(i, j).to_string()]);
        }
    }
    table.write(&args.out.join("influence.csv"))?;
    let file = InfluenceFile {
        format: "ratingsim-influence",
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        mask_spec: &args.mask,
        posterior: source,
        config: model.config(),
        scenario: ScenarioRef::from(&scenario),
        report: &report,
    };
    write_json(&args.out.join("influence.json"), &file)?;
    println!(
        "avg js distance {:.6} (disarmed users {:?})",
        report.avg_js,
        report.mask.disarmed_users()
    );
    Ok(())
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub tau_sigma_grid: Vec<f64>,
    pub n_seeds: usize,
    pub n_runs: usize,
    pub bins: usize,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct SweepFile<'a> {
    format: &'static str,
    schema_version: u32,
    tool_version: &'static str,
    base_seed: u64,
    config: &'a ModelConfig,
    table: &'a SweepTable,
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let base = args.seed.unwrap_or(cfg.seed);
    let model_config = cfg.model_config(base)?;
    if args.tau_sigma_grid.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(CliError::Config("target spreads must be positive".into()));
    }
    let seeds: Vec<u64> = (0..args.n_seeds as u64).map(|k| base + k).collect();
    let table = coordination_sweep(&model_config, &args.tau_sigma_grid, &seeds, args.n_runs, args.bins)?;

    ensure_dir(&args.out)?;
    let mut csv = CsvTable::new(["tau_sigma", "seed", "avg_js"]);
    csv.meta("format", "ratingsim-sweep")
        .meta("schema_version", SCHEMA_VERSION)
        .meta("tool_version", TOOL_VERSION)
        .meta("base_seed", base)
        .meta("n_runs", args.n_runs)
        .meta("bins", args.bins)
        .meta_json("config", &model_config);
    for row in &table.rows {
        for (seed, js) in row.seeds.iter().zip(&row.avg_js) {
            csv.row(vec![row.tau_sigma.to_string(), seed.to_string(), js.to_string()]);
        }
    }
    csv.write(&args.out.join("sweep.csv"))?;
    let file = SweepFile {
        format: "ratingsim-sweep-summary",
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        base_seed: base,
        config: &model_config,
        table: &table,
    };
    write_json(&args.out.join("sweep.json"), &file)?;
    for row in &table.rows {
        println!("tau_sigma {:<8} mean {:.6} std {:.6}", row.tau_sigma, row.mean, row.std);
    }
    println!("spearman {:.4}", table.spearman);
    Ok(())
}
