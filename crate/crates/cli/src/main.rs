//! `entropic`: evaluate quantities, check registry inequalities, reproduce the
//! example constructions and search simplices.
//!
//! Exit codes: 0 success, 1 a check was violated or inconclusive, 2 input or
//! configuration error, 3 evaluation error.

mod bind;
mod manifest;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use entropic_core::catalog::{
    check_inequality, continuous_sweep, find_record, parse_records, random_sweep, registry, CheckConfig, InequalityRecord,
    RecordBindings, SamplerConfig, SlackReport, SweepResult,
};
use entropic_core::constructions::{
    build_generic_augmented, build_zero_inflated, sidon_example_report, sum_product_row, SidonExampleReport, SumProductRow,
};
use entropic_core::continuous::{McConfig, McEvaluator};
use entropic_core::exact::ExactEvaluator;
use entropic_core::quantity::Objective;
use entropic_core::search::{optimize_over_simplex, Direction, SearchConfig, SearchObjective};
use entropic_core::setcalc::FiniteSet;
use entropic_core::value::parse_value;
use entropic_core::{Error, FiniteDist, GroupValue};

use bind::UserBindings;
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "entropic", version, about = "Exact and Monte Carlo entropy inequalities for additive combinatorics")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a quantity, ratio, max or min under bindings.
    Eval(EvalArgs),
    /// Check registry records on given bindings or by random sweeps.
    Check(CheckArgs),
    /// Recompute an example construction: sidon-ex1, sidon-ex2, sumprod-ex1, sumprod-ex2.
    Reproduce(ReproduceArgs),
    /// Optimize an objective over laws on a fixed support.
    Search(SearchArgs),
    /// Print the registry in its text form.
    Registry,
}

#[derive(Args)]
struct McArgs {
    /// Monte Carlo sample size.
    #[arg(long, default_value_t = 1 << 16)]
    samples: usize,
    /// Neighbour index of the entropy estimator.
    #[arg(long, default_value_t = 4)]
    k: usize,
}

#[derive(Args)]
struct EvalArgs {
    quantity: String,
    /// `X=Y=<file|model>` or `X,Y=<joint file>`; repeatable.
    #[arg(long = "bind")]
    binds: Vec<String>,
    /// Dependence of separately bound names (only `independent`).
    #[arg(long, default_value = "independent")]
    joint: String,
    #[arg(long, env = "ENTROPIC_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    mc: McArgs,
    /// Write a JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Record name; omit with --all.
    record: Option<String>,
    #[arg(long)]
    all: bool,
    /// List record names and exit.
    #[arg(long)]
    list: bool,
    #[arg(long = "bind")]
    binds: Vec<String>,
    /// Random trials per discrete record (default 1000 without --bind).
    #[arg(long)]
    sweep: Option<usize>,
    #[arg(long, env = "ENTROPIC_SEED", default_value_t = 0)]
    seed: u64,
    /// Seeds per suite model for continuous records.
    #[arg(long, default_value_t = 1)]
    mc_seeds: usize,
    /// Skip Monte Carlo suites.
    #[arg(long)]
    discrete_only: bool,
    /// Extra records in the registry text format.
    #[arg(long)]
    registry: Option<PathBuf>,
    #[command(flatten)]
    mc: McArgs,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    example: String,
    /// Comma list or `a..b` range of n values.
    #[arg(long)]
    n: Option<String>,
    /// Comma list or `a..b` range of N values (Sidon examples).
    #[arg(long = "N")]
    big_n: Option<String>,
    #[arg(long, default_value_t = 0.6)]
    eps: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, conflicts_with = "max", required_unless_present = "max")]
    min: Option<String>,
    #[arg(long)]
    max: Option<String>,
    /// `a..b` (inclusive), a comma list, or a set file.
    #[arg(long)]
    support: String,
    /// `uniform`, `zero-inflated`, or a distribution file.
    #[arg(long, default_value = "uniform")]
    init: String,
    #[arg(long, env = "ENTROPIC_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 25)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    gradient_block: usize,
    /// Reject laws with `H(X)` below this (default 0.1 for ratios).
    #[arg(long)]
    h_floor: Option<f64>,
    #[arg(long, conflicts_with = "h_floor")]
    no_h_floor: bool,
    #[arg(long, default_value = "search-out")]
    out: PathBuf,
}

enum Failure {
    Input(String),
    Eval(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Eval(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 || rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: invalid --threads {t}");
            return ExitCode::from(2);
        }
    }
    let res = match cli.command {
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Check(a) => cmd_check(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Search(a) => cmd_search(a).map(|_| true),
        Command::Registry => {
            print!("{}", entropic_core::catalog::registry_text());
            Ok(true)
        }
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Eval(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

/// Parse errors with a caret under the offending offset.
fn parse_objective(text: &str) -> CliResult<Objective> {
    Objective::parse(text).map_err(|e| {
        let offset = match &e {
            Error::Syntax { offset, .. } | Error::UnknownFunctional { offset, .. } => Some(*offset),
            _ => None,
        };
        match offset {
            Some(o) => {
                let col = text.get(..o.min(text.len())).map_or(o, |p| p.chars().count());
                Failure::Input(format!("{e}\n  {text}\n  {}^", " ".repeat(col)))
            }
            None => e.into(),
        }
    })
}

fn write_json<T: Serialize>(path: &Path, manifest: &mut RunManifest, report: &T) -> CliResult<()> {
    manifest.finish();
    #[derive(Serialize)]
    struct Doc<'a, T> {
        manifest: &'a RunManifest,
        report: &'a T,
    }
    let text = serde_json::to_string_pretty(&Doc { manifest, report }).map_err(|e| Failure::Eval(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn csv_string<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Eval(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Eval(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn emit_csv(text: &str, path: Option<&Path>, manifest: &mut RunManifest) -> CliResult<()> {
    print!("{text}");
    std::io::stdout().flush()?;
    if let Some(p) = path {
        std::fs::write(p, text)?;
        manifest.finish();
        manifest.write_beside(p)?;
    }
    Ok(())
}

fn mc_config(seed: u64, mc: &McArgs) -> McConfig {
    McConfig { n: mc.samples, k: mc.k, seed, ..McConfig::default() }
}

#[derive(Serialize)]
struct EvalReport {
    quantity: String,
    mode: &'static str,
    bindings: String,
    value: f64,
    std_error: Option<f64>,
    closed_form: Option<bool>,
    tail_warning: Option<bool>,
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    if a.joint != "independent" {
        return Err(Failure::Input(format!("unsupported --joint `{}` (only `independent`)", a.joint)));
    }
    let obj = parse_objective(&a.quantity)?;
    let ub = UserBindings::parse(&a.binds)?;
    let cfg = mc_config(a.seed, &a.mc);
    let mut manifest = RunManifest::start(serde_json::json!({"quantity": a.quantity, "bind": a.binds, "samples": cfg.n, "k": cfg.k}), a.seed, &ub.files)?;
    for v in obj.vars() {
        if !ub.entries.iter().any(|e| e.names.contains(&v)) {
            return Err(Error::UnboundVariable(v).into());
        }
    }
    let report = match ub.for_eval()? {
        RecordBindings::Discrete(b) => {
            let mut ev = ExactEvaluator::new(&b);
            let v = obj.evaluate(&mut ev)?.value;
            println!("{v}");
            EvalReport { quantity: obj.to_string(), mode: "exact", bindings: b.describe(), value: v, std_error: None, closed_form: None, tail_warning: None }
        }
        RecordBindings::Continuous(b) => {
            let mut ev = McEvaluator::new(&b, cfg.clone());
            let e = obj.evaluate(&mut ev)?;
            if e.std_error == 0.0 {
                println!("{} (closed form)", e.value);
            } else {
                println!("{} ± {} (n = {}, k = {}, seed = {})", e.value, e.std_error, cfg.n, cfg.k, cfg.seed);
            }
            if ev.tail_warning {
                eprintln!("warning: heavy logarithmic tails in a divisor; the estimate may be unreliable");
            }
            let bindings = b.iter().map(|(k, m)| format!("{k}={m}")).collect::<Vec<_>>().join(" ");
            EvalReport {
                quantity: obj.to_string(),
                mode: "mc",
                bindings,
                value: e.value,
                std_error: Some(e.std_error),
                closed_form: Some(e.std_error == 0.0),
                tail_warning: Some(ev.tail_warning),
            }
        }
    };
    if let Some(p) = &a.json {
        write_json(p, &mut manifest, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow<'a> {
    record: &'a str,
    mode: &'a str,
    seed: u64,
    trials: usize,
    min_slack: f64,
    worst_show: &'a str,
    worst_trial: usize,
    violations: usize,
    verdict: &'a str,
    worst_bindings: &'a str,
}

fn sweep_row(r: &SweepResult) -> SweepRow<'_> {
    SweepRow {
        record: &r.record,
        mode: match r.mode {
            entropic_core::catalog::SweepMode::Discrete => "discrete",
            entropic_core::catalog::SweepMode::Continuous => "continuous",
        },
        seed: r.seed,
        trials: r.trials,
        min_slack: r.min_slack,
        worst_show: &r.worst_show,
        worst_trial: r.worst_trial,
        violations: r.violations,
        verdict: r.verdict.as_str(),
        worst_bindings: &r.worst_bindings,
    }
}

fn selected_records(a: &CheckArgs, extra: &[InequalityRecord]) -> CliResult<Vec<InequalityRecord>> {
    let mut all: Vec<InequalityRecord> = registry().to_vec();
    for r in extra {
        if all.iter().any(|x| x.name == r.name) {
            return Err(Error::DuplicateName(r.name.clone()).into());
        }
        all.push(r.clone());
    }
    match (&a.record, a.all) {
        (Some(_), true) => Err(Failure::Input("give a record name or --all, not both".into())),
        (None, false) => Err(Failure::Input("give a record name or --all".into())),
        (None, true) => Ok(all),
        (Some(n), false) => match all.iter().find(|r| &r.name == n) {
            Some(r) => Ok(vec![r.clone()]),
            None => Err(find_record(n).map(|_| Failure::Input(String::new())).unwrap_or_else(Failure::from)),
        },
    }
}

fn cmd_check(a: CheckArgs) -> CliResult<bool> {
    let mut inputs = Vec::new();
    let extra = match &a.registry {
        Some(p) => {
            inputs.push(p.clone());
            let text = std::fs::read_to_string(p)?;
            parse_records(&text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    if a.list {
        for r in registry().iter().chain(&extra) {
            println!("{}\t{:?}\t{}", r.name, r.domain, r.reference);
        }
        return Ok(true);
    }
    let records = selected_records(&a, &extra)?;
    let cfg = CheckConfig { mc: mc_config(a.seed, &a.mc), ..CheckConfig::default() };
    if !a.binds.is_empty() {
        if a.sweep.is_some() {
            return Err(Failure::Input("--bind and --sweep are exclusive".into()));
        }
        let ub = UserBindings::parse(&a.binds)?;
        inputs.extend(ub.files.iter().cloned());
        let mut manifest = RunManifest::start(serde_json::json!({"records": records.iter().map(|r| &r.name).collect::<Vec<_>>(), "bind": a.binds}), a.seed, &inputs)?;
        let mut reports: Vec<SlackReport> = Vec::new();
        for r in &records {
            let b = ub.for_record(r)?;
            reports.extend(check_inequality(r, &b, &cfg)?);
        }
        emit_csv(&csv_string(&reports)?, a.csv.as_deref(), &mut manifest)?;
        if let Some(p) = &a.json {
            write_json(p, &mut manifest, &reports)?;
        }
        return Ok(reports.iter().all(|r| r.verdict.passes()));
    }
    let trials = a.sweep.unwrap_or(1000);
    let sampler = SamplerConfig { mc_seeds: a.mc_seeds, ..SamplerConfig::default() };
    let mut manifest = RunManifest::start(
        serde_json::json!({"records": records.iter().map(|r| &r.name).collect::<Vec<_>>(), "sweep": trials, "sampler": sampler, "mc_samples": cfg.mc.n, "mc_k": cfg.mc.k, "discrete_only": a.discrete_only}),
        a.seed,
        &inputs,
    )?;
    let mut results: Vec<SweepResult> = Vec::new();
    for r in &records {
        if r.domain.discrete() {
            results.push(random_sweep(r, &sampler, trials, a.seed, &cfg)?);
        }
        if r.domain.continuous() && !a.discrete_only {
            results.push(continuous_sweep(r, &sampler, a.seed, &cfg)?);
        }
    }
    let rows: Vec<SweepRow> = results.iter().map(sweep_row).collect();
    emit_csv(&csv_string(&rows)?, a.csv.as_deref(), &mut manifest)?;
    if let Some(p) = &a.json {
        write_json(p, &mut manifest, &results)?;
    }
    let bad: Vec<&SweepResult> = results.iter().filter(|r| !r.verdict.passes()).collect();
    for r in &bad {
        eprintln!("{} ({:?}): {} with min slack {} at trial {}", r.record, r.mode, r.verdict, r.min_slack, r.worst_trial);
    }
    Ok(bad.is_empty())
}

fn parse_list(text: &str) -> CliResult<Vec<u64>> {
    let bad = || Failure::Input(format!("invalid list `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

const MAX_EXAMPLE_N: u64 = 50_000;

fn cmd_reproduce(a: ReproduceArgs) -> CliResult<bool> {
    let mut manifest = RunManifest::start(serde_json::json!({"example": a.example, "n": a.n, "N": a.big_n, "eps": a.eps}), 0, &[])?;
    match a.example.as_str() {
        "sumprod-ex1" => {
            let ns = parse_list(a.n.as_deref().unwrap_or("100,1000,10000"))?;
            let mut rows: Vec<SumProductRow> = Vec::new();
            for n in ns {
                if n > MAX_EXAMPLE_N {
                    return Err(Failure::Eval(format!(
                        "{}; try n <= {MAX_EXAMPLE_N}",
                        Error::SupportOverflow { atoms: (n as u128 + 1).pow(2), cap: (MAX_EXAMPLE_N as usize + 1).pow(2) }
                    )));
                }
                rows.push(sum_product_row(n, &build_zero_inflated(n)?)?);
            }
            #[derive(Serialize)]
            struct Row {
                n: u64,
                h: f64,
                h_sum: f64,
                h_product: f64,
                ratio: f64,
                four_thirds_gap: f64,
            }
            let out: Vec<Row> = rows
                .iter()
                .map(|r| Row { n: r.n, h: r.h, h_sum: r.h_sum, h_product: r.h_product, ratio: r.ratio, four_thirds_gap: r.ratio - 4.0 / 3.0 })
                .collect();
            emit_csv(&csv_string(&out)?, a.csv.as_deref(), &mut manifest)?;
            let increasing = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
            eprintln!("ratio increasing in n: {increasing}");
            if let Some(p) = &a.json {
                write_json(p, &mut manifest, &rows)?;
            }
            Ok(true)
        }
        "sumprod-ex2" => {
            let ns = parse_list(a.n.as_deref().unwrap_or("10000"))?;
            #[derive(Serialize)]
            struct Row {
                n: u64,
                eps: f64,
                added: usize,
                size: usize,
                sumset: u64,
                size_pow_two_minus_eps: f64,
                sumset_large: bool,
                h: f64,
                h_sum: f64,
                ratio: f64,
                one_plus_eps: f64,
                ratio_below_one_plus_eps: bool,
            }
            let mut rows = Vec::new();
            for n in ns {
                if n > MAX_EXAMPLE_N {
                    return Err(Failure::Eval(format!("n = {n} is beyond the supported range; try n <= {MAX_EXAMPLE_N}")));
                }
                let g = build_generic_augmented(n, a.eps)?;
                let h = g.dist.entropy();
                let h_sum = g.sum_entropy();
                let pow = (g.set.len() as f64).powf(2.0 - a.eps);
                rows.push(Row {
                    n,
                    eps: a.eps,
                    added: g.extra.len(),
                    size: g.set.len(),
                    sumset: g.sumset_size,
                    size_pow_two_minus_eps: pow,
                    sumset_large: g.sumset_size as f64 >= pow,
                    h,
                    h_sum,
                    ratio: h_sum / h,
                    one_plus_eps: 1.0 + a.eps,
                    ratio_below_one_plus_eps: h_sum / h < 1.0 + a.eps,
                });
            }
            emit_csv(&csv_string(&rows)?, a.csv.as_deref(), &mut manifest)?;
            if let Some(p) = &a.json {
                write_json(p, &mut manifest, &rows)?;
            }
            Ok(rows.iter().all(|r| r.sumset_large && r.ratio_below_one_plus_eps))
        }
        "sidon-ex1" | "sidon-ex2" => {
            let variant = if a.example == "sidon-ex1" { 1 } else { 2 };
            let default = if variant == 1 { "4..10" } else { "1..8" };
            let ns = parse_list(a.big_n.as_deref().unwrap_or(default))?;
            let mut rows: Vec<SidonExampleReport> = Vec::new();
            for n in ns {
                let n = u32::try_from(n).map_err(|_| Failure::Input(format!("N = {n} is too large")))?;
                rows.push(sidon_example_report(n, variant)?);
            }
            emit_csv(&csv_string(&rows)?, a.csv.as_deref(), &mut manifest)?;
            if let Some(p) = &a.json {
                write_json(p, &mut manifest, &rows)?;
            }
            Ok(rows.iter().all(|r| r.bound_holds && r.max_sidon_prob == r.expected_max_sidon_prob))
        }
        other => Err(Failure::Input(format!("unknown example `{other}` (sidon-ex1, sidon-ex2, sumprod-ex1, sumprod-ex2)"))),
    }
}

fn parse_support(spec: &str, inputs: &mut Vec<PathBuf>) -> CliResult<Vec<GroupValue>> {
    let path = Path::new(spec);
    if path.is_file() {
        inputs.push(path.to_path_buf());
        let set = FiniteSet::parse_text(&std::fs::read_to_string(path)?)?;
        return Ok(set.elements().to_vec());
    }
    if let Some((a, b)) = spec.split_once("..") {
        let bad = || Failure::Input(format!("invalid support range `{spec}`"));
        let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).map(GroupValue::int).collect());
    }
    spec.split(',').map(|s| parse_value(s, None).map_err(Failure::from)).collect()
}

fn cmd_search(a: SearchArgs) -> CliResult<()> {
    let (text, direction) = match (&a.min, &a.max) {
        (Some(t), None) => (t.clone(), Direction::Minimize),
        (None, Some(t)) => (t.clone(), Direction::Maximize),
        _ => return Err(Failure::Input("give exactly one of --min / --max".into())),
    };
    let objective = parse_objective(&text)?;
    let mut inputs = Vec::new();
    let support = parse_support(&a.support, &mut inputs)?;
    let init = match a.init.as_str() {
        "uniform" => None,
        "zero-inflated" => {
            let max = support.iter().filter_map(GroupValue::as_small_int).max().unwrap_or(0);
            let d = build_zero_inflated(max.max(0) as u64)?;
            Some(d)
        }
        file => {
            inputs.push(PathBuf::from(file));
            Some(FiniteDist::parse_text(&std::fs::read_to_string(file)?)?)
        }
    };
    let h_floor = if a.no_h_floor { None } else { a.h_floor.or(SearchConfig::default_floor(&objective)) };
    let cfg = SearchConfig {
        seed: a.seed,
        restarts: a.restarts,
        epochs: a.epochs,
        steps: a.steps,
        gradient_block: a.gradient_block,
        h_floor,
        init,
        ..SearchConfig::default()
    };
    let mut manifest = RunManifest::start(
        serde_json::json!({"objective": objective.to_string(), "direction": direction, "support": a.support, "init": a.init, "config": cfg}),
        a.seed,
        &inputs,
    )?;
    let obj = SearchObjective { objective, direction, support };
    let res = optimize_over_simplex(&obj, &cfg)?;
    std::fs::create_dir_all(&a.out)?;
    let best = a.out.join("best.txt");
    std::fs::write(&best, res.best.to_text())?;
    let trace = a.out.join("trace.csv");
    std::fs::write(&trace, csv_string(&res.trace)?)?;
    println!("best value {} (initial {}), restart {}, {} evaluations", res.value, res.initial_value, res.restart, res.evaluations);
    if let Some(f) = cfg.h_floor {
        println!("entropy floor {f}: triggered {} times", res.floor_triggers);
    }
    println!("wrote {}, {}, {}", best.display(), trace.display(), a.out.join("result.json").display());
    manifest.finish();
    manifest.write_beside(&best)?;
    manifest.write_beside(&trace)?;
    write_json(&a.out.join("result.json"), &mut manifest, &res)?;
    Ok(())
}
