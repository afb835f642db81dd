use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand, ValueEnum};

use asat::config::{UcbMode, UpdateSchedule};
use asat::engine::MethodRegistry;
use asat::experiment::{
    aggregate, recovery_labeled_ood, reference_lines, run_batch, Job, ReferenceLine, RunConfig,
    RunOptions, RunResult,
};
use asat::runio::config_file::load_config;
use asat::runio::trace::write_trace;
use asat::sim::scenarios::scenario_descriptions;

#[derive(Parser)]
#[command(name = "asat", version, about = "Streaming OOD detection with anytime FPR control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One seeded run of one method.
    Run(RunArgs),
    /// Methods x seeds, with per-checkpoint mean/std tables.
    Compare(CompareArgs),
    /// One comparison per value of a swept parameter.
    Sweep(SweepArgs),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Args)]
struct Source {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    config: Option<PathBuf>,
    /// Built-in scenario (instead of --config).
    #[arg(long)]
    scenario: Option<String>,
    /// Confidence width override.
    #[arg(long, value_enum)]
    ucb: Option<Ucb>,
    /// Master seeds; the config's seed when omitted.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ucb {
    Theoretical,
    Heuristic,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "asat", value_parser = methods())]
    method: String,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_delimiter = ',', default_value = "asat,fsat,fsft", value_parser = methods())]
    method: Vec<String>,
    /// Pool size per class for the offline reference fit; 0 skips it.
    #[arg(long, default_value_t = 10_000)]
    reference_pool: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    EstWindow,
    UpdateFrequency,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_delimiter = ',', default_value = "asat", value_parser = methods())]
    method: Vec<String>,
    #[arg(long, value_enum)]
    sweep_param: SweepParam,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    sweep_values: Vec<u64>,
}

fn methods() -> PossibleValuesParser {
    PossibleValuesParser::new(MethodRegistry::builtin().names())
}

type Res<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn base_config(src: &Source) -> Res<RunConfig> {
    let cfg = match (&src.config, &src.scenario) {
        (Some(path), _) => load_config(path).map_err(err)?,
        (None, Some(name)) => RunConfig::from_scenario(name, src.seeds.first().copied().unwrap_or(0))
            .map_err(err)?,
        (None, None) => return Err("either --config or --scenario is required".into()),
    };
    match src.ucb {
        None => Ok(cfg),
        Some(u) => cfg
            .modified(|c| {
                c.engine.ucb_mode = match u {
                    Ucb::Theoretical => UcbMode::Theoretical,
                    Ucb::Heuristic => UcbMode::Heuristic,
                }
            })
            .map_err(err),
    }
}

fn seeded(cfg: &RunConfig, seeds: &[u64]) -> Res<Vec<RunConfig>> {
    if seeds.is_empty() {
        return Ok(vec![cfg.clone()]);
    }
    let configs: Vec<RunConfig> = seeds
        .iter()
        .map(|s| cfg.with_seed(*s).map_err(err))
        .collect::<Res<_>>()?;
    for c in &configs {
        println!("seed {}: config hash {}", c.master_seed, c.hash());
    }
    Ok(configs)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn opt_u(v: Option<u64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn write(path: &Path, text: &str) -> Res<()> {
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn summary_csv(results: &[RunResult], alpha: f64) -> String {
    let mut out = String::from(
        "method,seed,config_hash,final_eval_fpr,final_eval_tpr,final_true_fpr,final_true_tpr,\
         t0_step,max_true_fpr_after_t0,fpr_violation,labeled_ood,queries,updates_accepted,\
         updates_rejected,recovery_steps\n",
    );
    for r in results {
        let s = r.summary();
        let rec: Vec<String> = s
            .violations
            .iter()
            .map(|v| opt_u(v.recovery_step))
            .collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.method,
            s.master_seed,
            s.config_hash,
            opt(s.final_eval_fpr),
            opt(s.final_eval_tpr),
            s.final_true_fpr,
            s.final_true_tpr,
            opt_u(s.t0_step),
            s.max_true_fpr_after_t0,
            s.max_true_fpr_after_t0 > alpha,
            s.labeled_ood,
            s.queries,
            s.updates_accepted,
            s.updates_rejected,
            rec.join(";"),
        );
    }
    out
}

fn aggregate_csv(results: &[RunResult], cfg: &RunConfig, refs: &[ReferenceLine]) -> String {
    let all: Vec<&RunResult> = results.iter().collect();
    let mut out = String::from(
        "method,t,runs,true_fpr_mean,true_fpr_std,true_tpr_mean,true_tpr_std,eval_fpr_mean,\
         eval_fpr_std,eval_tpr_mean,eval_tpr_std,tpr_star,fixed_scorer_tpr\n",
    );
    for row in aggregate(&all, 1000) {
        let phase = cfg.stream.phase_at(row.t);
        let r = refs.iter().find(|r| r.phase == phase);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.method,
            row.t,
            row.runs,
            row.true_fpr_mean,
            row.true_fpr_std,
            row.true_tpr_mean,
            row.true_tpr_std,
            row.eval_fpr_mean,
            row.eval_fpr_std,
            row.eval_tpr_mean,
            row.eval_tpr_std,
            opt(r.map(|r| r.tpr_star)),
            opt(r.map(|r| r.fixed_scorer_tpr)),
        );
    }
    out
}

fn execute(configs: &[RunConfig], methods: &[String], out: &Path) -> Res<Vec<RunResult>> {
    fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    let mut jobs = Vec::new();
    for m in methods {
        for c in configs {
            jobs.push(Job {
                config: c.clone(),
                method: m.clone(),
            });
        }
    }
    let results = run_batch(&jobs, &MethodRegistry::builtin(), &RunOptions::default())
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let mut results = results;
    results.sort_by(|a, b| {
        let (x, y) = (&a.trace.header, &b.trace.header);
        (&x.method, x.master_seed).cmp(&(&y.method, y.master_seed))
    });
    for r in &results {
        let h = &r.trace.header;
        let path = out.join(format!("{}_seed{}.jsonl", h.method, h.master_seed));
        write_trace(&path, &r.trace).map_err(err)?;
    }
    Ok(results)
}

fn cmd_run(a: RunArgs) -> Res<()> {
    let cfg = base_config(&a.source)?;
    let cfg = seeded(&cfg, &a.source.seeds[..a.source.seeds.len().min(1)])?.remove(0);
    println!("config hash {}", cfg.hash());
    let results = execute(std::slice::from_ref(&cfg), &[a.method], &a.source.out)?;
    write(&a.source.out.join("summary.csv"), &summary_csv(&results, cfg.engine.alpha))?;
    let s = results[0].summary();
    println!(
        "{} seed {}: final eval FPR {} TPR {}, truth FPR {:.4} TPR {:.4}",
        s.method,
        s.master_seed,
        opt(s.final_eval_fpr),
        opt(s.final_eval_tpr),
        s.final_true_fpr,
        s.final_true_tpr
    );
    Ok(())
}

fn compare(cfg: &RunConfig, seeds: &[u64], methods: &[String], pool: usize, out: &Path) -> Res<Vec<RunResult>> {
    let configs = seeded(cfg, seeds)?;
    let results = execute(&configs, methods, out)?;
    let refs = if pool > 0 {
        reference_lines(&configs[0], pool).map_err(err)?
    } else {
        Vec::new()
    };
    write(&out.join("summary.csv"), &summary_csv(&results, cfg.engine.alpha))?;
    write(&out.join("aggregate.csv"), &aggregate_csv(&results, cfg, &refs))?;
    let mut text = String::from("phase,phase_start,tpr_star,fixed_scorer_tpr\n");
    for r in &refs {
        let _ = writeln!(text, "{},{},{},{}", r.phase, r.phase_start, r.tpr_star, r.fixed_scorer_tpr);
    }
    write(&out.join("reference.csv"), &text)?;
    Ok(results)
}

fn cmd_compare(a: CompareArgs) -> Res<()> {
    let cfg = base_config(&a.source)?;
    println!("config hash {}", cfg.hash());
    let results = compare(&cfg, &a.source.seeds, &a.method, a.reference_pool, &a.source.out)?;
    println!("{} runs written to {}", results.len(), a.source.out.display());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Res<()> {
    if a.sweep_values.is_empty() {
        return Err("--sweep-values needs at least one value".into());
    }
    let base = base_config(&a.source)?;
    println!("config hash {}", base.hash());
    let mut text = String::from(
        "param,value,method,seed,config_hash,phase_start,max_violation,violation_checkpoints,\
         recovery_step,recovery_labeled_ood\n",
    );
    let param = match a.sweep_param {
        SweepParam::EstWindow => "est_window",
        SweepParam::UpdateFrequency => "update_frequency",
    };
    for &v in &a.sweep_values {
        if v == 0 {
            return Err(format!("{param} values must be positive"));
        }
        let cfg = base
            .modified(|c| match a.sweep_param {
                SweepParam::EstWindow => c.engine.est_window = Some(v as usize),
                SweepParam::UpdateFrequency => c.engine.update_schedule = UpdateSchedule::constant(v),
            })
            .map_err(err)?;
        println!("{param}={v}: config hash {}", cfg.hash());
        let dir = a.source.out.join(format!("{param}_{v}"));
        let results = compare(&cfg, &a.source.seeds, &a.method, 0, &dir)?;
        for r in &results {
            let s = r.summary();
            for ph in &s.violations {
                let _ = writeln!(
                    text,
                    "{param},{v},{},{},{},{},{},{},{},{}",
                    s.method,
                    s.master_seed,
                    s.config_hash,
                    ph.phase_start,
                    ph.max_violation,
                    ph.violation_steps.len(),
                    opt_u(ph.recovery_step),
                    opt_u(recovery_labeled_ood(r, ph)),
                );
            }
        }
    }
    write(&a.source.out.join("sweep.csv"), &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Scenarios => {
            for (n, d) in scenario_descriptions() {
                println!("{n:<20} {d}");
            }
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
