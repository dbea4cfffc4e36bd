//! Command-line front end: detect -> plan -> simulate -> compare, plus
//! the synthetic data generator.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use skewshare::compare::run_compare;
use skewshare::data::{load_database, store_database, to_tsv, RelationInstance, Tuple};
use skewshare::datagen::{generate_skewed, GenSpec, PlantedValue};
use skewshare::decompose::{enumerate_combinations, type_sets, DEFAULT_COMBINATION_CAP};
use skewshare::hh::detect_heavy_hitters;
use skewshare::optimize::{IntegerizeMode, OptimizerConfig};
use skewshare::oracle::nested_loop_join;
use skewshare::plan::{plan_from_database, plan_from_specs, JoinPlan};
use skewshare::query::{Attribute, JoinQuery, RelationSchema};
use skewshare::report::{
    read_json, to_json_string, write_json, CompareDoc, HhReportDoc, PlanDoc, SimReportDoc,
    StatsDoc, StrategyDoc, FORMAT_VERSION,
};
use skewshare::simulate::{execute_plan, measure, SimulatorConfig};

/// Planner and shuffle simulator for skew-aware multiway joins.
#[derive(Parser)]
#[command(name = "skewshare", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum IntegerizeArg {
    Exhaustive,
    Greedy,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the data and report heavy-hitter values per attribute.
    Detect {
        /// Query file: atoms `Name(A1,...)` separated by `;` or newlines.
        #[arg(long)]
        query: PathBuf,
        /// Directory holding one `<Relation>.tsv` per relation.
        #[arg(long)]
        data: PathBuf,
        /// Heavy-hitter threshold fraction in (0, 1].
        #[arg(long)]
        tau: f64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the residual-join plan: shares and reducer allocation.
    Plan {
        #[arg(long)]
        query: PathBuf,
        /// Data directory; sizes and (with --tau) heavy hitters come
        /// from the data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Existing heavy-hitter report (skip detection).
        #[arg(long)]
        hh: Option<PathBuf>,
        /// Relevant sizes per combination, for planning without data.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        /// Total reducer budget.
        #[arg(short, long)]
        k: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iterations: usize,
        #[arg(long, value_enum, default_value = "exhaustive")]
        integerize: IntegerizeArg,
    },
    /// Execute a plan in-memory and report measured cost and loads.
    Simulate {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check the joined output against the nested-loop oracle.
        #[arg(long)]
        verify: bool,
        #[arg(long)]
        single_thread: bool,
        /// Include per-reducer statistics in the report.
        #[arg(long)]
        dump_reducers: bool,
        /// Write the joined rows as TSV.
        #[arg(long)]
        results: Option<PathBuf>,
        /// Fail when a reducer receives more than this many tuples.
        #[arg(long)]
        reducer_cap: Option<u64>,
    },
    /// Run baseline, plain Shares and the heavy-hitter-aware plan on the
    /// same inputs and compare cost and load.
    Compare {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(short, long)]
        k: u64,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        single_thread: bool,
    },
    /// Generate a skewed relation instance as TSV.
    Gen {
        /// Relation schema, e.g. `R(A,B)`.
        #[arg(long)]
        schema: String,
        /// Tuple count.
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Zipf exponent per attribute, e.g. `B=1.2` (default uniform).
        #[arg(long)]
        zipf: Vec<String>,
        /// Planted heavy value, e.g. `B=7:0.5` for value 7 on half the rows.
        #[arg(long)]
        plant: Vec<String>,
        /// Distinct-value universe (default 10 * n).
        #[arg(long)]
        universe: Option<u64>,
        /// Output data directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reference join by brute force (debugging aid).
    #[command(hide = true)]
    Oracle {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own help/usage text; exit 1 on usage errors
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Detect {
            query,
            data,
            tau,
            out,
        } => {
            let q = load_query(&query)?;
            let db = load_database(&q, &data)?;
            let report = detect_heavy_hitters(&db, &q, tau)?;
            emit(&HhReportDoc::from_report(&report), out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Plan {
            query,
            data,
            hh,
            stats,
            tau,
            k,
            out,
            tolerance,
            max_iterations,
            integerize,
        } => {
            let q = load_query(&query)?;
            let cfg = OptimizerConfig {
                tolerance,
                max_iterations,
                integerize: match integerize {
                    IntegerizeArg::Exhaustive => IntegerizeMode::Exhaustive,
                    IntegerizeArg::Greedy => IntegerizeMode::GreedyRound,
                },
                ..OptimizerConfig::default()
            };
            let plan = build_plan(
                &q,
                data.as_deref(),
                hh.as_deref(),
                stats.as_deref(),
                tau,
                k,
                &cfg,
            )?;
            emit(&PlanDoc::from_plan(&plan), out.as_deref())?;
            if !plan.converged() {
                eprintln!("warning: share optimizer did not converge on every residual join");
                return Ok(ExitCode::from(3));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            query,
            data,
            plan,
            seed,
            out,
            verify,
            single_thread,
            dump_reducers,
            results,
            reducer_cap,
        } => {
            let q = load_query(&query)?;
            let db = load_database(&q, &data)?;
            let plan_doc: PlanDoc = read_json(&plan)?;
            let plan = plan_doc.into_plan()?;
            let cfg = SimulatorConfig {
                single_thread,
                reducer_cap,
                materialize: true,
            };
            let sim = execute_plan(&db, &q, &plan, seed, &cfg)?;
            let metrics = measure(&sim.trace);
            let verified = if verify {
                let oracle = nested_loop_join(&db, &q)?;
                Some(oracle == sim.output)
            } else {
                None
            };
            let doc = SimReportDoc::build(&plan, &sim, &metrics, seed, verified, dump_reducers);
            if let Some(path) = &results {
                write_results_to(&q, &sim.output, Some(path))?;
            }
            emit(&doc, out.as_deref())?;
            if verified == Some(false) {
                eprintln!("verification failed: simulated output differs from the oracle join");
                return Ok(ExitCode::from(2));
            }
            if !doc.cost_match || !doc.exactly_once {
                eprintln!("verification failed: measured cost or exactly-once property violated");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            query,
            data,
            k,
            tau,
            seed,
            out,
            single_thread,
        } => {
            let q = load_query(&query)?;
            let db = load_database(&q, &data)?;
            let cfg = OptimizerConfig::default();
            let outcome = run_compare(&q, &db, k, tau, seed, &cfg, single_thread)?;
            let doc = CompareDoc {
                format_version: FORMAT_VERSION,
                query: q.to_text(),
                k,
                threshold: tau,
                seed,
                baseline: strategy_doc(outcome.baseline),
                plain_shares: strategy_doc(outcome.plain_shares),
                hh_aware: strategy_doc(outcome.hh_aware),
            };
            emit(&doc, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen {
            schema,
            n,
            seed,
            zipf,
            plant,
            universe,
            out,
        } => {
            let schema = JoinQuery::parse_schema(&schema)?;
            let spec = GenSpec {
                rows: n,
                seed,
                zipf: zipf
                    .iter()
                    .map(|s| parse_zipf(s))
                    .collect::<anyhow::Result<_>>()?,
                planted: plant
                    .iter()
                    .map(|s| parse_plant(s))
                    .collect::<anyhow::Result<_>>()?,
                universe,
            };
            let inst = generate_skewed(&schema, &spec)?;
            let name = inst.schema.name.clone();
            store_database(&vec![inst], &out)?;
            eprintln!("wrote {}/{name}.tsv ({n} rows)", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { query, data, out } => {
            let q = load_query(&query)?;
            let db = load_database(&q, &data)?;
            let rows = nested_loop_join(&db, &q)?;
            eprintln!("{} rows", rows.len());
            write_results_to(&q, &rows, out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_query(path: &Path) -> anyhow::Result<JoinQuery> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read query file {}", path.display()))?;
    Ok(JoinQuery::parse(&text)?)
}

fn build_plan(
    q: &JoinQuery,
    data: Option<&Path>,
    hh: Option<&Path>,
    stats: Option<&Path>,
    tau: Option<f64>,
    k: u64,
    cfg: &OptimizerConfig,
) -> anyhow::Result<JoinPlan> {
    let report = match (hh, tau, data) {
        (Some(path), _, _) => {
            let doc: HhReportDoc = read_json(path)?;
            doc.into_report(q)?
        }
        (None, Some(tau), Some(dir)) => {
            let db = load_database(q, dir)?;
            detect_heavy_hitters(&db, q, tau)?
        }
        _ => bail!("plan needs either --hh REPORT or --data DIR with --tau T"),
    };
    match (data, stats) {
        (Some(dir), _) => {
            let db = load_database(q, dir)?;
            Ok(plan_from_database(q, &db, &report, k, cfg)?)
        }
        (None, Some(stats_path)) => {
            let ts = type_sets(q, &report);
            let combinations = enumerate_combinations(&ts, DEFAULT_COMBINATION_CAP)?;
            let stats: StatsDoc = read_json(stats_path)?;
            let specs = stats.into_specs(q, &combinations)?;
            Ok(plan_from_specs(q, &ts, &specs, k, cfg)?)
        }
        (None, None) => bail!("plan needs --data DIR or --stats FILE for the relevant sizes"),
    }
}

fn strategy_doc(s: skewshare::compare::StrategySummary) -> StrategyDoc {
    StrategyDoc {
        communication: s.communication,
        max_load: s.max_load,
        reducers_used: s.reducers_used,
    }
}

fn parse_zipf(s: &str) -> anyhow::Result<(Attribute, f64)> {
    let (attr, exp) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("--zipf expects ATTR=EXPONENT, got `{s}`"))?;
    Ok((
        Attribute::new(attr),
        exp.parse::<f64>().context("bad Zipf exponent")?,
    ))
}

fn parse_plant(s: &str) -> anyhow::Result<PlantedValue> {
    let (attr, rest) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("--plant expects ATTR=VALUE:FRACTION, got `{s}`"))?;
    let (value, fraction) = rest
        .rsplit_once(':')
        .ok_or_else(|| anyhow!("--plant expects ATTR=VALUE:FRACTION, got `{s}`"))?;
    Ok(PlantedValue {
        attribute: Attribute::new(attr),
        value: value.to_string(),
        fraction: fraction.parse::<f64>().context("bad planted fraction")?,
    })
}

fn emit<T: serde::Serialize>(doc: &T, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            write_json(doc, path)?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{}", to_json_string(doc)?),
    }
    Ok(())
}

fn write_results_to(
    q: &JoinQuery,
    rows: &std::collections::BTreeSet<Vec<String>>,
    path: Option<&Path>,
) -> anyhow::Result<()> {
    let schema = RelationSchema::new("Result", q.attributes().to_vec())?;
    let inst = RelationInstance::new(schema, rows.iter().map(|r| Tuple::new(r.clone())).collect())?;
    match path {
        Some(p) => {
            std::fs::write(p, to_tsv(&inst))
                .with_context(|| format!("cannot write {}", p.display()))?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{}", to_tsv(&inst)),
    }
    Ok(())
}
