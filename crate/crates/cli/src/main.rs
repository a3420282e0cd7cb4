use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use diffrl_core::babverify::{BabConfig, Budget, Counterexample, Status};
use diffrl_core::encoder::{generate_queries, Query, QueryTarget};
use diffrl_core::json::write_atomic;
use diffrl_core::orchestrator::{
    certify_counterexample, dump_conflict, export_query, file_stem, import_result, parse_query_file, report_csv,
    report_json, verify_property, Aggregate, Engine, ExportEngine, NativeEngine, OrchestratorError, PropertyResult,
    DEFAULT_CERT_TOLERANCE,
};
use diffrl_core::propspec::{PropertySpec, ViolationRule};
use diffrl_core::tensornet::{load_network, ActionDecoder, Network};
use diffrl_core::zoo::{self, Family, ZooSpec};

const EXIT_SAFE: u8 = 0;
const EXIT_VIOLATED: u8 = 1;
const EXIT_UNKNOWN: u8 = 2;
const EXIT_TOOL_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "diffrl", version, about = "Verify symbolic properties of RL policy networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify properties and write one report per property and coverage.
    Verify(RunArgs),
    /// Verify at every coverage level in the list (default 60,70,80,90,100).
    Sweep(RunArgs),
    /// List the queries a property decomposes into, without solving them.
    Decompose(DecomposeArgs),
    /// Build a seeded network from the model zoo.
    Zoo(ZooArgs),
    /// Replay a counterexample against an exported query.
    Certify(CertifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    AtLeast,
    Strict,
}

#[derive(Args)]
struct PropertyArgs {
    /// Network file.
    #[arg(long)]
    model: PathBuf,
    /// Property file; may be repeated.
    #[arg(long = "property")]
    properties: Vec<PathBuf>,
    /// `family` or `family:property`, e.g. `pensieve:capacity_utilization`.
    #[arg(long = "preset")]
    presets: Vec<String>,
    /// Coverage levels in percent, comma separated.
    #[arg(long, value_delimiter = ',')]
    coverage: Vec<f64>,
    /// Require `x + s` to stay inside the input domain.
    #[arg(long)]
    clamp_perturbed: bool,
    #[arg(long, value_enum)]
    violation_rule: Option<RuleArg>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    props: PropertyArgs,
    /// `native` or `export:<dir>`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "native")]
    engines: Vec<String>,
    /// Per-query wall-clock budget in seconds.
    #[arg(long, default_value_t = 600.0)]
    timeout: f64,
    #[arg(long, default_value_t = Budget::default().max_subdomains)]
    max_subdomains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report directory.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    /// Also write a CSV per report.
    #[arg(long)]
    csv: bool,
    /// Zero all timing fields so reports are byte-stable.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    props: PropertyArgs,
    /// Also export every query as a bundle into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ZooArgs {
    /// `pensieve:H`, `cmars:DEPTH:M`, or `aurora:K:H`.
    #[arg(long)]
    family: Family,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    /// Single-copy network the query was generated from.
    #[arg(long)]
    model: PathBuf,
    /// Constraint file (`.diffq`).
    #[arg(long)]
    query: PathBuf,
    /// Result file (`sat` plus assignments) or a JSON object with `x` and `s`.
    #[arg(long)]
    counterexample: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CERT_TOLERANCE)]
    tolerance: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify(args) => cmd_verify(args, &[100.0]),
        Command::Sweep(args) => cmd_verify(args, &[60.0, 70.0, 80.0, 90.0, 100.0]),
        Command::Decompose(args) => cmd_decompose(args),
        Command::Zoo(args) => cmd_zoo(args),
        Command::Certify(args) => cmd_certify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_TOOL_ERROR)
        }
    }
}

fn load_model(path: &Path) -> Result<Network> {
    load_network(path).with_context(|| format!("loading model {}", path.display()))
}

/// Every requested property at every requested coverage, in argument order.
fn resolve_properties(args: &PropertyArgs, net: &Network, default_coverage: &[f64]) -> Result<Vec<Vec<PropertySpec>>> {
    let mut base = Vec::new();
    for path in &args.properties {
        base.push(PropertySpec::load(path).with_context(|| format!("loading property {}", path.display()))?);
    }
    for preset in &args.presets {
        let (family, name) = match preset.split_once(':') {
            Some((f, p)) => (f, Some(p)),
            None => (preset.as_str(), None),
        };
        let family = Family::infer(family, net).with_context(|| format!("preset `{preset}`"))?;
        match name {
            Some(n) => base.push(zoo::preset(family, n)?),
            None => base.extend(zoo::preset_properties(family)?),
        }
    }
    if base.is_empty() {
        bail!("no properties given; use --property or --preset");
    }
    let coverages = if args.coverage.is_empty() { default_coverage } else { &args.coverage };
    base.into_iter()
        .map(|mut p| {
            if args.clamp_perturbed {
                p = p.with_clamp_perturbed(true);
            }
            match args.violation_rule {
                Some(RuleArg::AtLeast) => p = p.with_violation_rule(ViolationRule::AtLeast),
                Some(RuleArg::Strict) => p = p.with_violation_rule(ViolationRule::StrictlyGreater),
                None => {}
            }
            p.validate_for(net).with_context(|| format!("property `{}`", p.name))?;
            coverages
                .iter()
                .map(|&c| p.clone().with_coverage(c).with_context(|| format!("property `{}`", p.name)))
                .collect()
        })
        .collect()
}

fn build_engines(specs: &[String], seed: u64) -> Result<Vec<Box<dyn Engine>>> {
    specs
        .iter()
        .map(|s| -> Result<Box<dyn Engine>> {
            match s.split_once(':') {
                None if s == "native" => Ok(Box::new(NativeEngine::new(BabConfig {
                    seed,
                    ..BabConfig::default()
                }))),
                Some(("export", dir)) if !dir.is_empty() => Ok(Box::new(ExportEngine::new(dir))),
                _ => bail!("unknown engine `{s}` (expected native or export:<dir>)"),
            }
        })
        .collect()
}

fn report_path(out: &Path, result: &PropertyResult, ext: &str) -> PathBuf {
    out.join(format!("{}_cov{}.{ext}", file_stem(&result.property), result.coverage_pct))
}

fn cmd_verify(args: RunArgs, default_coverage: &[f64]) -> Result<u8> {
    let net = load_model(&args.props.model)?;
    let props = resolve_properties(&args.props, &net, default_coverage)?;
    let engines = build_engines(&args.engines, args.seed)?;
    let budget = Budget {
        timeout_s: args.timeout,
        max_subdomains: args.max_subdomains,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let model = args.props.model.display().to_string();

    let mut any_violated = false;
    let mut any_unknown = false;
    for levels in &props {
        let mut results = Vec::with_capacity(levels.len());
        for prop in levels {
            let mut result = match verify_property(&net, prop, &engines, budget) {
                Ok(r) => r,
                Err(e @ OrchestratorError::Conflict { .. }) => {
                    let dumped = dump_conflict(&e, &args.out)?;
                    bail!("{e} (evidence written to {})", display_paths(&dumped));
                }
                Err(e) => return Err(e.into()),
            };
            if args.no_timing {
                result.strip_timing();
            }
            let path = report_path(&args.out, &result, "json");
            write_atomic(&path, report_json(&model, &net, &result).as_bytes())
                .with_context(|| format!("writing {}", path.display()))?;
            if args.csv {
                let path = report_path(&args.out, &result, "csv");
                write_atomic(&path, report_csv(&result).as_bytes()).with_context(|| format!("writing {}", path.display()))?;
            }
            let c = result.counts;
            println!(
                "{} coverage {}%: {} (safe {}, unsafe {}, unknown {}, total {})",
                result.property,
                result.coverage_pct,
                aggregate_label(result.aggregate),
                c.safe,
                c.unsafe_,
                c.unknown,
                c.total()
            );
            match result.aggregate {
                Aggregate::Violated => any_violated = true,
                Aggregate::Unknown => any_unknown = true,
                Aggregate::Safe => {}
            }
            results.push((prop, result));
        }
        check_nested_coverage(&net, &results)?;
    }
    Ok(if any_violated {
        EXIT_VIOLATED
    } else if any_unknown {
        EXIT_UNKNOWN
    } else {
        EXIT_SAFE
    })
}

fn display_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

fn aggregate_label(a: Aggregate) -> &'static str {
    match a {
        Aggregate::Safe => "safe",
        Aggregate::Violated => "violated",
        Aggregate::Unknown => "unknown",
    }
}

/// A counterexample at some coverage lies in every wider domain too, so it
/// must replay against the same query at each larger coverage.
fn check_nested_coverage(net: &Network, results: &[(&PropertySpec, PropertyResult)]) -> Result<()> {
    for (narrow_prop, narrow) in results {
        for (wide_prop, _) in results {
            if wide_prop.coverage_pct <= narrow_prop.coverage_pct {
                continue;
            }
            let queries = generate_queries(net, wide_prop)?;
            for cex in narrow.counterexamples() {
                let Some(q) = queries.iter().find(|q| q.id == cex.query_id) else {
                    bail!("query {} missing at coverage {}%", cex.query_id, wide_prop.coverage_pct);
                };
                certify_counterexample(q, cex, DEFAULT_CERT_TOLERANCE).map_err(|r| {
                    anyhow::anyhow!(
                        "counterexample for {} at coverage {}% does not replay at {}%: {r}",
                        cex.query_id,
                        narrow_prop.coverage_pct,
                        wide_prop.coverage_pct
                    )
                })?;
            }
        }
    }
    Ok(())
}

fn describe_target(net: &Network, q: &Query) -> String {
    match (&q.target, net.decoder()) {
        (QueryTarget::Pair(p), ActionDecoder::Discrete { action_values }) => {
            format!("action {} -> {}", action_values[p.i1], action_values[p.i2])
        }
        (QueryTarget::Pair(p), _) => format!("output {} -> {}", p.i1, p.i2),
        (QueryTarget::Continuous { copy1, copy2, .. }, _) => {
            format!("mean1 in {} and mean2 in {}", fmt_range(*copy1), fmt_range(*copy2))
        }
        (QueryTarget::Linear, _) => format!("{} output constraints", q.output_constraints.len()),
    }
}

fn fmt_range((lo, hi): (Option<f64>, Option<f64>)) -> String {
    let lo = lo.map_or("-inf".to_string(), |v| v.to_string());
    let hi = hi.map_or("+inf".to_string(), |v| v.to_string());
    format!("[{lo}, {hi}]")
}

fn cmd_decompose(args: DecomposeArgs) -> Result<u8> {
    let net = load_model(&args.props.model)?;
    let props = resolve_properties(&args.props, &net, &[100.0])?;
    for prop in props.iter().flatten() {
        let queries = generate_queries(&net, prop)?;
        if queries.is_empty() {
            println!("{} coverage {}%: property holds vacuously", prop.name, prop.coverage_pct);
            continue;
        }
        println!("{} coverage {}%: {} queries", prop.name, prop.coverage_pct, queries.len());
        for q in &queries {
            println!("  {}  {}", q.id, describe_target(&net, q));
            if let Some(dir) = &args.out {
                export_query(q, &dir.join(format!("cov{}", prop.coverage_pct)))?;
            }
        }
    }
    Ok(EXIT_SAFE)
}

fn cmd_zoo(args: ZooArgs) -> Result<u8> {
    let net = zoo::build(ZooSpec {
        family: args.family,
        seed: args.seed,
    })?;
    net.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} ({} parameters) -> {}", net.name(), net.param_count(), args.out.display());
    Ok(EXIT_SAFE)
}

fn cmd_certify(args: CertifyArgs) -> Result<u8> {
    let net = Arc::new(load_model(&args.model)?);
    let parsed = parse_query_file(&args.query)?;
    let fallback = args.query.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let query = parsed.into_query(net, &fallback)?;

    let text = fs::read_to_string(&args.counterexample)
        .with_context(|| format!("reading {}", args.counterexample.display()))?;
    let outcome = if text.trim_start().starts_with('{') {
        let (x, s) = parse_point_json(&text).with_context(|| format!("parsing {}", args.counterexample.display()))?;
        query.check_point(&x, &s, args.tolerance).map(|_| ()).map_err(|e| e.to_string())
    } else {
        match import_result(&args.counterexample, &query)?.status {
            Status::Unsafe(cex) => recheck(&query, &cex, args.tolerance),
            Status::Unknown(reason) => Err(reason.to_string()),
            Status::Safe => bail!("{} reports unsat and holds no assignment", args.counterexample.display()),
        }
    };
    match outcome {
        Ok(()) => {
            println!("accepted: {}", query.id);
            Ok(EXIT_SAFE)
        }
        Err(reason) => {
            println!("rejected: {}: {reason}", query.id);
            Ok(EXIT_VIOLATED)
        }
    }
}

fn recheck(query: &Query, cex: &Counterexample, tol: f64) -> std::result::Result<(), String> {
    certify_counterexample(query, cex, tol).map_err(|r| r.to_string())
}

fn parse_point_json(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let field = |name: &str| -> Result<Vec<f64>> {
        v.get(name)
            .and_then(|a| a.as_array())
            .with_context(|| format!("missing array `{name}`"))?
            .iter()
            .map(|e| e.as_f64().with_context(|| format!("non-numeric entry in `{name}`")))
            .collect()
    };
    Ok((field("x")?, field("s")?))
}
