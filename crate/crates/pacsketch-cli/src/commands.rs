use crate::io::{self, ProgramDoc};
use crate::{AnalyzeArgs, BenchModeArg, Cli, Command, GenCommon, GenKind, McArgs, MonitorArgs, SketchArgs, Suite, SynthesizeArgs, VerifyArgs};
use anyhow::{anyhow, bail, Context, Result};
use pacsketch::allocator::{analyze, CandidateGrid};
use pacsketch::estimators::BudgetRule;
use pacsketch::harness::{
    benchmarks, classifier_valuation, format_table, mc_shift_detection, mc_validate_lower_bound, mc_validate_sketch,
    mc_validate_threshold, mc_validate_verifier, run_benchmark, BenchConfig, BenchMode, BernoulliConfig, Distribution,
    ShiftConfig, SketchTrialConfig, TrialConfig,
};
use pacsketch::listdsl::{generate_examples, synth_predictor, DslProgram, DslType, DslValue, PredictorConfig};
use pacsketch::sketch_ir::{ComponentRegistry, HoleKind};
use pacsketch::sketcher::{sketch, HoleRecord, SketchJob, SketchOptions};
use pacsketch::synthesizer::{describe_fill, synthesize, synthesize_partial_sketch, NSetting, SynthOptions, TaskSpec};
use pacsketch::verifier::{monitor_record, verify, MonitorConfig, MonitorState, VerifyJob};
use serde::Deserialize;
use std::path::Path;
use std::time::Duration;

pub enum Outcome {
    Pass,
    Warn,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Warn
        }
    }
}

/// Values read from `--config`. Flags override them; they override the
/// built-in defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    schema_version: Option<u32>,
    eps: Option<f64>,
    delta: Option<f64>,
    err: Option<f64>,
    n: Option<NSetting>,
    seed: Option<u64>,
    grid: Option<Vec<u32>>,
    threads: Option<usize>,
}

const DEFAULT_PROB: f64 = 0.05;
const DEFAULT_ERR: f64 = 6.0;

struct Ctx {
    file: FileConfig,
}

impl Ctx {
    fn delta(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.delta).unwrap_or(DEFAULT_PROB)
    }

    fn eps(&self, flag: Option<f64>) -> f64 {
        flag.or(self.file.eps).unwrap_or(DEFAULT_PROB)
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.file.seed).unwrap_or(0)
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let file = match &cli.config {
        Some(p) => io::read_json::<FileConfig>(p)?,
        None => FileConfig::default(),
    };
    if let Some(v) = file.schema_version {
        if v != pacsketch::SCHEMA_VERSION {
            bail!("config has schema_version {v}");
        }
    }
    for p in [file.eps, file.delta].into_iter().flatten() {
        if !(p > 0.0 && p < 1.0) {
            bail!("config probability {p} must lie strictly between 0 and 1");
        }
    }
    if let Some(t) = cli.threads.or(file.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let ctx = Ctx { file };
    match cli.command {
        Command::Sketch(a) => cmd_sketch(&ctx, a),
        Command::Verify(a) => cmd_verify(&ctx, a),
        Command::Synthesize(a) => cmd_synthesize(&ctx, a),
        Command::Monitor(a) => cmd_monitor(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Validate(a) => cmd_validate(&ctx, a.suite),
        Command::GenData(a) => cmd_gen_data(&ctx, a.kind),
    }
}

fn starved(r: &HoleRecord) -> bool {
    match r.kind {
        HoleKind::Threshold => r.value == f64::INFINITY,
        HoleKind::Eps => r.value >= 1.0,
    }
}

fn warn_starved(records: &[HoleRecord]) -> bool {
    let bad: Vec<String> = records
        .iter()
        .filter(|r| starved(r))
        .map(|r| match &r.label {
            Some(l) => format!("{l} at {:?} (n = {})", r.path.0, r.n),
            None => format!("{:?} (n = {})", r.path.0, r.n),
        })
        .collect();
    if !bad.is_empty() {
        eprintln!("warning: conservative fallback fill for {} hole(s): {}", bad.len(), bad.join(", "));
    }
    bad.is_empty()
}

fn cmd_sketch(ctx: &Ctx, a: SketchArgs) -> Result<Outcome> {
    let program = io::read_program(&a.program)?;
    let data = io::read_valuations(&a.data)?;
    let registry = ComponentRegistry::standard();
    let options = SketchOptions {
        budget_rule: if a.k0 { BudgetRule::ZeroMistakes } else { BudgetRule::default() },
        ..Default::default()
    };
    let report = sketch(SketchJob::new(&program, &data, ctx.delta(a.delta), &registry).with_options(options))?;
    if let Some(out) = &a.out {
        io::write_json(&ProgramDoc::new(report.completed.clone()), Some(out))?;
    }
    io::write_json(&report, a.report.as_deref())?;
    Ok(Outcome::from_pass(warn_starved(&report.records)))
}

fn cmd_verify(ctx: &Ctx, a: VerifyArgs) -> Result<Outcome> {
    let program = io::read_program(&a.program)?;
    let data = io::read_valuations(&a.data)?;
    let registry = ComponentRegistry::standard();
    let report = verify(VerifyJob {
        program: &program,
        data: &data,
        delta: ctx.delta(a.delta),
        registry: &registry,
    })?;
    io::write_json(&report, a.out.as_deref())?;
    for s in report.specs.iter().filter(|s| !s.passed) {
        eprintln!(
            "rejected: spec at {:?}: {} violations of {} with budget {:?}",
            s.path.0, s.violations, s.n, s.k
        );
    }
    Ok(Outcome::from_pass(report.accepted))
}

fn parse_grid(s: &str) -> Result<CandidateGrid> {
    let levels = s
        .split(',')
        .map(|x| x.trim().parse::<u32>().with_context(|| format!("bad grid level {x:?}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateGrid { levels })
}

fn parse_n(s: &str) -> Result<NSetting> {
    if s == "auto" {
        return Ok(NSetting::Auto);
    }
    Ok(NSetting::Fixed(s.parse().with_context(|| format!("--n must be an integer or \"auto\", got {s:?}"))?))
}

/// Loads a task file. Keys the file leaves out fall back to the config
/// file, then to the built-in defaults.
fn load_task(ctx: &Ctx, path: &Path) -> Result<TaskSpec> {
    let raw: serde_json::Value = io::read_json(path)?;
    let has = |k: &str| raw.get(k).is_some();
    let mut task: TaskSpec = serde_json::from_value(raw.clone()).with_context(|| format!("{} is not a task", path.display()))?;
    let f = &ctx.file;
    if !has("eps") {
        task.eps = f.eps.unwrap_or(task.eps);
    }
    if !has("delta") {
        task.delta = f.delta.unwrap_or(task.delta);
    }
    if !has("err") {
        task.err = f.err.unwrap_or(task.err);
    }
    if !has("n") {
        task.n = f.n.unwrap_or(task.n);
    }
    if !has("grid") {
        if let Some(levels) = &f.grid {
            task.grid = CandidateGrid { levels: levels.clone() };
        }
    }
    Ok(task)
}

fn cmd_synthesize(ctx: &Ctx, a: SynthesizeArgs) -> Result<Outcome> {
    let mut task = load_task(ctx, &a.task)?;
    if let Some(v) = a.eps {
        task.eps = v;
    }
    if let Some(v) = a.delta {
        task.delta = v;
    }
    if let Some(v) = a.err {
        task.err = v;
    }
    if let Some(v) = &a.n {
        task.n = parse_n(v)?;
    }
    if let Some(v) = &a.grid {
        task.grid = parse_grid(v)?;
    }
    if let Some(v) = a.depth {
        task.depth_limit = v;
    }
    task.validate()?;
    if a.sketch_only {
        let p = synthesize_partial_sketch(&task, task.depth_limit)?;
        println!("{p}");
        return Ok(Outcome::Pass);
    }
    let data_path = a.data.as_ref().ok_or_else(|| anyhow!("--data is required unless --sketch-only is given"))?;
    let data = io::read_examples(data_path, &task.input_types())?;
    let mut options = SynthOptions {
        no_search: a.no_search,
        seed: ctx.seed(a.seed),
        ..Default::default()
    };
    if a.k0 {
        options = options.k0();
    }
    let result = synthesize(&task, &data, options)?;
    io::write_json(&result, a.out.as_deref())?;
    if a.out.is_some() {
        println!("{}", result.program);
    }
    eprintln!("program: {}", result.program);
    for (occ, d) in describe_fill(&result.fill) {
        eprintln!("  {occ}: {d}");
    }
    eprintln!("score on the synthesis split: {:.4}", result.score);
    Ok(Outcome::from_pass(warn_starved(&result.report.records)))
}

fn cmd_monitor(ctx: &Ctx, a: MonitorArgs) -> Result<Outcome> {
    let program = io::read_program(&a.program)?;
    let registry = ComponentRegistry::standard();
    let cfg = MonitorConfig::new(a.refresh, a.window, a.max_age.unwrap_or(a.window), ctx.delta(a.delta))?;
    let mut state = MonitorState::new();
    let mut rejected = false;
    let mut step = |v: pacsketch::sketch_ir::Valuation| -> Result<()> {
        v.check_disjoint()?;
        if let Some(verdict) = monitor_record(&mut state, &cfg, v, &program, &registry)? {
            rejected |= !verdict.accepted;
            println!("{}", serde_json::to_string(&verdict)?);
        }
        Ok(())
    };
    match &a.follow {
        Some(path) => {
            let idle = a.idle_timeout.map(Duration::from_secs_f64);
            io::follow_jsonl(path, idle, &mut step)?;
        }
        None => {
            let stdin = std::io::stdin();
            io::for_each_jsonl(stdin.lock(), "stdin", &mut step)?;
        }
    }
    if state.arrivals() < a.window as u64 {
        eprintln!("warning: only {} records arrived; no verdict before {}", state.arrivals(), a.window);
        return Ok(Outcome::Warn);
    }
    Ok(Outcome::from_pass(!rejected))
}

fn cmd_analyze(ctx: &Ctx, a: AnalyzeArgs) -> Result<Outcome> {
    let (program, mut n, mut eps, mut err, mut grid) = match (&a.task, &a.expr) {
        (Some(path), _) => {
            let task = load_task(ctx, path)?;
            task.validate()?;
            let p = synthesize_partial_sketch(&task, task.depth_limit)?;
            let n = match task.n {
                NSetting::Fixed(n) => Some(n),
                NSetting::Auto => None,
            };
            (p, n, task.eps, task.err, task.grid)
        }
        (None, Some(src)) => {
            let ty: DslType = a.type_.as_deref().unwrap_or_default().parse().map_err(|e| anyhow!("--type: {e}"))?;
            let p = DslProgram::parse(src, ty.signature().0)?;
            let n = match ctx.file.n {
                Some(NSetting::Fixed(n)) => Some(n),
                _ => None,
            };
            let grid = ctx.file.grid.clone().map(|levels| CandidateGrid { levels }).unwrap_or_default();
            (p, n.or(Some(3)), ctx.eps(None), ctx.file.err.unwrap_or(DEFAULT_ERR), grid)
        }
        (None, None) => bail!("give either --task or --expr with --type"),
    };
    if a.n.is_some() {
        n = a.n;
    }
    if let Some(v) = a.eps {
        eps = v;
    }
    if let Some(v) = a.err {
        err = v;
    }
    if let Some(v) = &a.grid {
        grid = parse_grid(v)?;
    }
    let n = n.ok_or_else(|| anyhow!("the task learns N from data; pass --n to analyze"))?;
    let analysis = analyze(&program, eps, err, n, &grid)?;
    if a.json {
        io::write_json(&analysis, None)?;
        return Ok(Outcome::Pass);
    }
    println!("program: {}", analysis.program);
    println!("N = {n}");
    let counts: Vec<String> = analysis
        .counts
        .iter()
        .map(|(o, c)| format!("{o} ({}) = {c}", program.prim_of(*o).map_or("?", |p| p.name())))
        .collect();
    println!("counts: {}", counts.join(", "));
    println!("error bound: {}", analysis.error_form_text);
    println!("eps candidates: {}", analysis.eps_candidates.len());
    println!("error candidates: {}", analysis.err_candidates.len());
    for c in &analysis.err_candidates {
        let parts: Vec<String> = c.iter().map(|(o, e)| format!("e_{o} = {e}")).collect();
        println!("  {}", parts.join(", "));
    }
    Ok(Outcome::Pass)
}

fn parse_dist(s: &str) -> Result<Distribution> {
    let (family, params) = s.split_once(':').unwrap_or((s, ""));
    let p: Vec<f64> = params
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad parameter {x:?}")))
        .collect::<Result<_>>()?;
    let d = match (family, p.as_slice()) {
        ("uniform", [low, high]) => Distribution::Uniform { low: *low, high: *high },
        ("uniform", []) => Distribution::Uniform { low: 0.0, high: 1.0 },
        ("normal", [mean, sd]) => Distribution::Normal { mean: *mean, sd: *sd },
        ("normal", []) => Distribution::Normal { mean: 0.0, sd: 1.0 },
        ("exponential", [rate]) => Distribution::Exponential { rate: *rate },
        ("exponential", []) => Distribution::Exponential { rate: 1.0 },
        _ => bail!("unknown distribution {s:?}; use uniform:LOW,HIGH, normal:MEAN,SD or exponential:RATE"),
    };
    d.validate()?;
    Ok(d)
}

struct McDefaults {
    n: usize,
    trials: usize,
    eps: f64,
}

impl McArgs {
    fn resolve(&self, ctx: &Ctx, d: McDefaults) -> (usize, usize, f64, f64, u64) {
        (
            self.n.unwrap_or(d.n),
            self.trials.unwrap_or(d.trials),
            self.eps.or(ctx.file.eps).unwrap_or(d.eps),
            ctx.delta(self.delta),
            ctx.seed(self.seed),
        )
    }
}

fn cmd_validate(ctx: &Ctx, suite: Suite) -> Result<Outcome> {
    let report = |pass: bool, value: serde_json::Value| -> Result<Outcome> {
        io::write_json(&value, None)?;
        Ok(Outcome::from_pass(pass))
    };
    match suite {
        Suite::Threshold { dist, mc } => {
            let (n, trials, eps, delta, seed) = mc.resolve(ctx, McDefaults { n: 500, trials: 2000, eps: 0.1 });
            let cfg = TrialConfig {
                distribution: parse_dist(&dist)?,
                n,
                trials,
                eps,
                delta,
                seed,
            };
            let out = mc_validate_threshold(&cfg)?;
            report(out.passed, serde_json::json!({ "config": cfg, "outcome": out }))
        }
        Suite::LowerBound { mu, mc } => {
            let cfg = bernoulli(ctx, mu, &mc, 300);
            let out = mc_validate_lower_bound(&cfg)?;
            report(out.passed, serde_json::json!({ "config": cfg, "outcome": out }))
        }
        Suite::Verifier { mu, mc } => {
            let cfg = bernoulli(ctx, mu, &mc, 300);
            let out = mc_validate_verifier(&cfg)?;
            report(out.passed, serde_json::json!({ "config": cfg, "outcome": out }))
        }
        Suite::Sketch { mc } => {
            let (n, trials, eps, delta, seed) = mc.resolve(ctx, McDefaults { n: 500, trials: 500, eps: 0.1 });
            let cfg = SketchTrialConfig { n, trials, eps, delta, seed };
            let out = mc_validate_sketch(&cfg)?;
            report(out.outcome.passed, serde_json::json!({ "config": cfg, "outcome": out }))
        }
        Suite::Shift {
            base_accuracy,
            shifted_accuracy,
            mc,
        } => {
            let (window, trials, eps, delta, seed) = mc.resolve(ctx, McDefaults { n: 500, trials: 200, eps: 0.05 });
            let cfg = ShiftConfig {
                base_accuracy,
                shifted_accuracy,
                window,
                trials,
                eps,
                delta,
                seed,
            };
            let out = mc_shift_detection(&cfg)?;
            report(true, serde_json::json!({ "config": cfg, "outcome": out }))
        }
        Suite::Benchmark {
            tasks,
            modes,
            seeds,
            train,
            eval,
            accuracy,
            json,
        } => {
            let all = benchmarks();
            let chosen: Vec<_> = if tasks.is_empty() {
                all
            } else {
                tasks
                    .iter()
                    .map(|t| {
                        all.iter()
                            .find(|b| b.name == *t || b.name.replace(' ', "-") == *t)
                            .cloned()
                            .ok_or_else(|| anyhow!("unknown task {t:?}"))
                    })
                    .collect::<Result<_>>()?
            };
            let modes: Vec<BenchMode> = modes
                .iter()
                .map(|m| match m {
                    BenchModeArg::Search => BenchMode::Search,
                    BenchModeArg::NoSearch => BenchMode::NoSearch,
                    BenchModeArg::K0 => BenchMode::K0,
                })
                .collect();
            let cfg = BenchConfig {
                predictor: PredictorConfig {
                    accuracy,
                    ..Default::default()
                },
                train_size: train,
                eval_size: eval,
                seeds: (0..seeds).collect(),
                ..Default::default()
            };
            let mut reports = Vec::new();
            for b in &chosen {
                reports.extend(run_benchmark(b, &modes, &cfg)?);
            }
            if json {
                io::write_json(&reports, None)?;
            } else {
                print!("{}", format_table(&reports));
            }
            Ok(Outcome::Pass)
        }
    }
}

fn bernoulli(ctx: &Ctx, mu: f64, mc: &McArgs, n: usize) -> BernoulliConfig {
    let (n, trials, eps, delta, seed) = mc.resolve(ctx, McDefaults { n, trials: 2000, eps: 0.05 });
    BernoulliConfig {
        mu,
        n,
        trials,
        eps,
        delta,
        seed,
    }
}

fn predictor(accuracy: f64) -> Result<PredictorConfig> {
    if !(0.0..=1.0).contains(&accuracy) {
        bail!("accuracy {accuracy} is not a probability");
    }
    Ok(PredictorConfig {
        accuracy,
        ..Default::default()
    })
}

fn cmd_gen_data(ctx: &Ctx, kind: GenKind) -> Result<Outcome> {
    match kind {
        GenKind::Records { common } => {
            let GenCommon { n, accuracy, seed, out } = common;
            let records = synth_predictor(&predictor(accuracy)?, n, ctx.seed(seed));
            io::write_jsonl(&records, out.as_deref())?;
        }
        GenKind::Examples { task, max_len, common } => {
            let task = load_task(ctx, &task)?;
            let GenCommon { n, accuracy, seed, out } = common;
            let rows = generate_examples(&task.input_types(), n, max_len, &predictor(accuracy)?, ctx.seed(seed));
            let lines: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| serde_json::Value::Array(r.iter().map(DslValue::to_json).collect()))
                .collect();
            io::write_jsonl(&lines, out.as_deref())?;
        }
        GenKind::Classifier {
            shift_after,
            shifted_accuracy,
            common,
        } => {
            let GenCommon { n, accuracy, seed, out } = common;
            let seed = ctx.seed(seed);
            let split = shift_after.unwrap_or(n).min(n);
            let mut records = synth_predictor(&predictor(accuracy)?, split, seed);
            let tail = synth_predictor(&predictor(shifted_accuracy)?, n - split, seed.wrapping_add(1));
            records.extend(tail.into_iter().map(|mut r| {
                r.id += split as u64;
                r
            }));
            io::write_jsonl(records.iter().map(classifier_valuation), out.as_deref())?;
        }
    }
    Ok(Outcome::Pass)
}
