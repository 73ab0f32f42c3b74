//! Command-line front end: every library surface behind one binary, with
//! JSON/CSV reports on stdout, reproducible manifests, and a TOML-driven
//! experiment runner.
//!
//! Exit codes: 0 = ran (including hypothesis failures — those are data in the
//! output), 2 = parse/usage error, 3 = numeric budget exceeded, 1 = any other
//! error. Stdout carries machine-readable output only; prose goes to stderr.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use hyperreg::gpe::{CandidateStack, Ensemble, ThcMode, gpe_count, greedy_embed};
use hyperreg::homcount::{hom_estimate, hom_weight};
use hyperreg::inheritance::{check_inh_hypotheses, inherit_scan};
use hyperreg::jsonio::{
    ComplexDto, DensityDto, EnsembleDto, GraphDto, StackDto, complex_from_dto, density_from_dto,
    ensemble_from_dto, graph_from_dto, graph_to_dto, read_json, stack_from_dto, to_json_string,
    weight_to_value,
};
use hyperreg::manifest::ExperimentManifest;
use hyperreg::regularity::{is_eta_minimal, is_regular, minimality_report};
use hyperreg::thc::{RandomGraphSpec, is_thc_full, random_hypergraph, random_thc_experiment};
use hyperreg::{DensityGraph, Error, PartId, Rat, Result, Scalar, WeightedGraph};

#[derive(Parser)]
#[command(
    name = "hyperreg",
    version,
    about = "Weighted partite hypergraph counting, regularity and embedding experiments"
)]
struct Cli {
    /// Output format for the report on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Cap worker threads (falls back to HYPERREG_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write an experiment manifest (command, input/output hashes, seed,
    /// version, timing) to this path.
    #[arg(long, global = true)]
    manifest_out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Homomorphism weight of a pattern complex in a weighted graph.
    Count(CountArgs),
    /// Octahedron-based regularity verdict for g against a reference graph.
    Regcheck(RegcheckArgs),
    /// Worst doubling defect over all octahedron triples.
    Minimality(MinimalityArgs),
    /// Scan the first part's links for inherited regularity.
    Inherit(InheritArgs),
    /// Compare a stack's level count against its density prediction.
    Gpecount(GpecountArgs),
    /// Greedy vertex-by-vertex embedding over a candidate stack.
    Embed(EmbedArgs),
    /// Hereditary-counting checks, exact or on random hypergraphs.
    #[command(subcommand)]
    Thc(ThcCmd),
    /// Draw a random symmetric k-uniform hypergraph and print it.
    Random(RandomArgs),
    /// Run a subcommand from a TOML config (or replay a manifest), writing
    /// result.json, result.csv and manifest.json into an output directory.
    Run(RunArgs),
}

#[derive(Args)]
struct CountArgs {
    /// Weighted graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Pattern complex JSON.
    #[arg(long)]
    complex: PathBuf,
    /// Exact rational count (the default).
    #[arg(long, conflicts_with = "samples")]
    exact: bool,
    /// Monte Carlo estimate with this many samples instead.
    #[arg(long)]
    samples: Option<u64>,
    /// RNG seed for --samples.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Abort (exit 3) past this many elementary operations.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args)]
struct RegcheckArgs {
    /// Graph under test (JSON).
    #[arg(long)]
    g: PathBuf,
    /// Reference graph (JSON).
    #[arg(long)]
    gamma: PathBuf,
    /// Tolerance ε, e.g. "1/10" or "0.1".
    #[arg(long)]
    eps: String,
    /// Density to test at; measured from the graphs when omitted.
    #[arg(long)]
    d: Option<String>,
    /// Use the f64 backend instead of exact rationals.
    #[arg(long)]
    float: bool,
}

#[derive(Args)]
struct MinimalityArgs {
    /// Graph under test (JSON).
    #[arg(long)]
    g: PathBuf,
    /// Also report whether the defect stays within this η.
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    float: bool,
}

#[derive(Args)]
struct InheritArgs {
    #[arg(long)]
    g: PathBuf,
    #[arg(long)]
    gamma: PathBuf,
    /// Tolerance ε′ the link verdicts must meet.
    #[arg(long)]
    eps_out: String,
    /// Density of g's top layer.
    #[arg(long)]
    d: String,
    /// Density of the scanned part's links.
    #[arg(long)]
    dprime: String,
    /// Also verify the lemma hypotheses (needs --eta and --eps-in).
    #[arg(long)]
    check_hypotheses: bool,
    /// Blow-up counting tolerance for the hypothesis check.
    #[arg(long, requires = "check_hypotheses")]
    eta: Option<String>,
    /// Regularity tolerance the hypotheses assume.
    #[arg(long, requires = "check_hypotheses")]
    eps_in: Option<String>,
    /// Density graph for the reference counts; all-ones when omitted.
    #[arg(long)]
    p: Option<PathBuf>,
    #[arg(long)]
    float: bool,
}

#[derive(Args)]
struct GpecountArgs {
    /// Candidate stack bundle (pattern, φ, levels, density graphs).
    #[arg(long)]
    stack: PathBuf,
    /// Parameter ensemble JSON.
    #[arg(long)]
    ensemble: PathBuf,
    /// Stack level to count at.
    #[arg(long)]
    level: usize,
    /// Neighbourhood-degree bound Δ′; the pattern's own when omitted.
    #[arg(long)]
    dprime: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    float: bool,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    ensemble: PathBuf,
    /// JSON list of part ids fixing the embedding order.
    #[arg(long)]
    order: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// Also compute the exact remaining count and compare the lower bound.
    #[arg(long)]
    exhaustive: bool,
    /// How the counting hypothesis is checked at each step.
    #[arg(long, value_enum, default_value_t = ModeArg::Hypothesis)]
    mode: ModeArg,
    #[arg(long)]
    dprime: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    float: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Exact recursive check (tiny instances only).
    Full,
    /// Blow-up counting bands against the density graphs.
    Hypothesis,
    /// Skip the check.
    Assumed,
}

impl From<ModeArg> for ThcMode {
    fn from(m: ModeArg) -> ThcMode {
        match m {
            ModeArg::Full => ThcMode::Full,
            ModeArg::Hypothesis => ThcMode::Hypothesis,
            ModeArg::Assumed => ThcMode::Assumed,
        }
    }
}

#[derive(Subcommand)]
enum ThcCmd {
    /// Exact hereditary-counting verdict on a tiny instance.
    Full(ThcFullArgs),
    /// Empirical counting bands on random hypergraphs, one row per trial.
    Random(ThcRandomArgs),
}

#[derive(Args)]
struct ThcFullArgs {
    /// Host graph JSON.
    #[arg(long)]
    gamma: PathBuf,
    /// Density graph JSON.
    #[arg(long)]
    density: PathBuf,
    /// Counting tolerance η.
    #[arg(long)]
    eta: String,
    /// Largest blow-up multiplicity sum checked.
    #[arg(long)]
    cstar: usize,
    /// JSON list of part ids fixing the recursion order.
    #[arg(long)]
    order: Option<PathBuf>,
    #[arg(long)]
    float: bool,
}

#[derive(Args)]
struct ThcRandomArgs {
    /// Edge arity of the random hypergraph.
    #[arg(long)]
    k: usize,
    /// Vertices in the underlying set.
    #[arg(long)]
    n: usize,
    /// Edge probability.
    #[arg(long)]
    p: f64,
    /// Ordered pattern complex JSON.
    #[arg(long)]
    pattern: PathBuf,
    #[arg(long)]
    trials: usize,
    /// Master seed; per-trial seeds derive from it.
    #[arg(long)]
    seed: u64,
    /// Counting tolerance η.
    #[arg(long)]
    eta: f64,
    /// Largest blow-up multiplicity sum checked.
    #[arg(long)]
    cstar: usize,
    /// JSON list of vertex groups, one per pattern part; an even split when
    /// omitted.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Use this extension degree instead of the pattern's computed one.
    #[arg(long)]
    d_override: Option<usize>,
}

#[derive(Args)]
struct RandomArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    float: bool,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config: `command = "<subcommand>"`, optional `out_dir`,
    /// optional `format`, and an [args] table of flag = value pairs.
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Replay the subcommand recorded in an experiment manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Where result.json / result.csv / manifest.json land.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Everything a subcommand produces: the JSON report, an optional CSV table,
/// the input files it read, and the seed it used.
struct CommandOutput {
    json: Value,
    csv: Option<String>,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
}

fn parse_scalar<S: Scalar>(text: &str) -> Result<S> {
    S::from_repr(text).map_err(Error::Parse)
}

fn to_value<T: serde::Serialize>(t: &T) -> Result<Value> {
    serde_json::to_value(t).map_err(|e| Error::Parse(format!("report serialization: {e}")))
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn csv_table(header: &[&str], rows: &[Vec<Value>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .and_then(|()| {
            rows.iter()
                .try_for_each(|r| w.write_record(r.iter().map(|v| cell(v))))
        })
        .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Parse(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(format!("csv: {e}")))
}

fn read_part_ids(path: &Path) -> Result<Vec<PartId>> {
    let ids: Vec<u32> = read_json(path)?;
    Ok(ids.into_iter().map(PartId).collect())
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

fn cmd_count(a: &CountArgs) -> Result<CommandOutput> {
    let gdto: GraphDto = read_json(&a.graph)?;
    let h = complex_from_dto(&read_json::<ComplexDto>(&a.complex)?)?;
    let (json, seed) = if let Some(samples) = a.samples {
        let g: WeightedGraph<f64> = graph_from_dto(&gdto)?;
        let est = hom_estimate(&h, &g, samples, a.seed)?;
        (
            serde_json::json!({
                "value": est.estimate,
                "mode": "sample",
                "stderr": est.stderr,
                "samples": est.samples,
                "seed": est.seed,
            }),
            Some(a.seed),
        )
    } else {
        let g: WeightedGraph<Rat> = graph_from_dto(&gdto)?;
        let v = hom_weight(&h, &g, a.budget)?;
        (
            serde_json::json!({"value": v.to_repr(), "mode": "exact"}),
            None,
        )
    };
    let row = vec![
        json["value"].clone(),
        json["mode"].clone(),
        json.get("stderr").cloned().unwrap_or(Value::Null),
    ];
    Ok(CommandOutput {
        csv: Some(csv_table(&["value", "mode", "stderr"], &[row])?),
        json,
        inputs: vec![a.graph.clone(), a.complex.clone()],
        seed,
    })
}

fn regcheck_generic<S: Scalar>(a: &RegcheckArgs) -> Result<Value> {
    let g: WeightedGraph<S> = graph_from_dto(&read_json(&a.g)?)?;
    let gamma: WeightedGraph<S> = graph_from_dto(&read_json(&a.gamma)?)?;
    let eps: S = parse_scalar(&a.eps)?;
    let d: Option<S> = a.d.as_deref().map(parse_scalar).transpose()?;
    let verdict = is_regular(&g, &gamma, &eps, d.as_ref())?;
    to_value(&verdict.map_scalars(weight_to_value::<S>))
}

fn cmd_regcheck(a: &RegcheckArgs) -> Result<CommandOutput> {
    let json = if a.float {
        regcheck_generic::<f64>(a)?
    } else {
        regcheck_generic::<Rat>(a)?
    };
    let row = ["passes", "density", "degenerate", "density_ok", "oct_ok", "slack"]
        .iter()
        .map(|k| json[*k].clone())
        .collect();
    Ok(CommandOutput {
        csv: Some(csv_table(
            &["passes", "density", "degenerate", "density_ok", "oct_ok", "slack"],
            &[row],
        )?),
        json,
        inputs: vec![a.g.clone(), a.gamma.clone()],
        seed: None,
    })
}

fn minimality_generic<S: Scalar>(a: &MinimalityArgs) -> Result<Value> {
    let g: WeightedGraph<S> = graph_from_dto(&read_json(&a.g)?)?;
    let report = minimality_report(&g)?;
    let mut json = to_value(&report.map_scalars(weight_to_value::<S>))?;
    if let Some(eta) = &a.eta {
        let eta: S = parse_scalar(eta)?;
        let obj = json.as_object_mut().expect("report is an object");
        obj.insert("eta".into(), weight_to_value(&eta));
        obj.insert("eta_minimal".into(), Value::Bool(is_eta_minimal(&g, &eta)?));
    }
    Ok(json)
}

fn cmd_minimality(a: &MinimalityArgs) -> Result<CommandOutput> {
    let json = if a.float {
        minimality_generic::<f64>(a)?
    } else {
        minimality_generic::<Rat>(a)?
    };
    let row = vec![
        json["defect"].clone(),
        json["infinite"].clone(),
        json.get("eta_minimal").cloned().unwrap_or(Value::Null),
    ];
    Ok(CommandOutput {
        csv: Some(csv_table(&["defect", "infinite", "eta_minimal"], &[row])?),
        json,
        inputs: vec![a.g.clone()],
        seed: None,
    })
}

fn inherit_generic<S: Scalar>(a: &InheritArgs) -> Result<Value> {
    let g: WeightedGraph<S> = graph_from_dto(&read_json(&a.g)?)?;
    let gamma: WeightedGraph<S> = graph_from_dto(&read_json(&a.gamma)?)?;
    let eps_out: S = parse_scalar(&a.eps_out)?;
    let d: S = parse_scalar(&a.d)?;
    let dprime: S = parse_scalar(&a.dprime)?;
    let mut scan = inherit_scan(&g, &gamma, &eps_out, &d, &dprime)?;
    if a.check_hypotheses {
        let eta: S = parse_scalar(a.eta.as_deref().ok_or_else(|| {
            Error::Parse("--check-hypotheses needs --eta".into())
        })?)?;
        let eps_in: S = parse_scalar(a.eps_in.as_deref().ok_or_else(|| {
            Error::Parse("--check-hypotheses needs --eps-in".into())
        })?)?;
        let p: DensityGraph<S> = match &a.p {
            Some(path) => density_from_dto(&read_json::<DensityDto>(path)?)?,
            None => DensityGraph::ones(g.parts().keys().copied()),
        };
        scan.hypothesis_report =
            Some(check_inh_hypotheses(&g, &gamma, &p, &eps_in, &d, &dprime, &eta)?);
    }
    to_value(&scan.map_scalars(weight_to_value::<S>))
}

fn cmd_inherit(a: &InheritArgs) -> Result<CommandOutput> {
    let json = if a.float {
        inherit_generic::<f64>(a)?
    } else {
        inherit_generic::<Rat>(a)?
    };
    let rows: Vec<Vec<Value>> = json["per_vertex"]
        .as_array()
        .map(|rows| {
            rows.iter()
                .map(|r| {
                    vec![
                        r["v"].clone(),
                        r["good"].clone(),
                        r["anchored"].get("passes").cloned().unwrap_or(Value::Null),
                        r["anchored"].get("density").cloned().unwrap_or(Value::Null),
                        r["error"].clone(),
                    ]
                })
                .collect()
        })
        .unwrap_or_default();
    let mut inputs = vec![a.g.clone(), a.gamma.clone()];
    if let Some(p) = &a.p {
        inputs.push(p.clone());
    }
    Ok(CommandOutput {
        csv: Some(csv_table(
            &["v", "good", "passes", "density", "error"],
            &rows,
        )?),
        json,
        inputs,
        seed: None,
    })
}

fn gpecount_generic<S: Scalar>(a: &GpecountArgs) -> Result<Value> {
    let stack: CandidateStack<S> = stack_from_dto(&read_json::<StackDto>(&a.stack)?)?;
    let ens: Ensemble<S> = ensemble_from_dto(&read_json::<EnsembleDto>(&a.ensemble)?)?;
    let cmp = gpe_count(&stack, &ens, a.level, a.dprime, a.budget)?;
    to_value(&cmp.map_scalars(weight_to_value::<S>))
}

fn cmd_gpecount(a: &GpecountArgs) -> Result<CommandOutput> {
    let json = if a.float {
        gpecount_generic::<f64>(a)?
    } else {
        gpecount_generic::<Rat>(a)?
    };
    let header = ["level", "r", "measured", "predicted", "rel_error", "within"];
    let row = header.iter().map(|k| json[*k].clone()).collect();
    Ok(CommandOutput {
        csv: Some(csv_table(&header, &[row])?),
        json,
        inputs: vec![a.stack.clone(), a.ensemble.clone()],
        seed: None,
    })
}

fn embed_generic<S: Scalar>(a: &EmbedArgs, order: Option<&[PartId]>) -> Result<Value> {
    let stack: CandidateStack<S> = stack_from_dto(&read_json::<StackDto>(&a.stack)?)?;
    let ens: Ensemble<S> = ensemble_from_dto(&read_json::<EnsembleDto>(&a.ensemble)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let outcome = greedy_embed(
        &stack,
        &ens,
        order,
        &mut rng,
        a.exhaustive,
        a.mode.into(),
        a.dprime,
        a.budget,
    )?;
    to_value(&outcome.map_scalars(weight_to_value::<S>))
}

fn cmd_embed(a: &EmbedArgs) -> Result<CommandOutput> {
    let order = a.order.as_deref().map(read_part_ids).transpose()?;
    let json = if a.float {
        embed_generic::<f64>(a, order.as_deref())?
    } else {
        embed_generic::<Rat>(a, order.as_deref())?
    };
    let rows: Vec<Vec<Value>> = json["steps"]
        .as_array()
        .map(|steps| {
            steps
                .iter()
                .map(|s| {
                    ["part", "vertex", "bad_count", "good_weight", "part_weight"]
                        .iter()
                        .map(|k| s[*k].clone())
                        .collect()
                })
                .collect()
        })
        .unwrap_or_default();
    let mut inputs = vec![a.stack.clone(), a.ensemble.clone()];
    if let Some(o) = &a.order {
        inputs.push(o.clone());
    }
    Ok(CommandOutput {
        csv: Some(csv_table(
            &["part", "vertex", "bad_count", "good_weight", "part_weight"],
            &rows,
        )?),
        json,
        inputs,
        seed: Some(a.seed),
    })
}

fn thc_full_generic<S: Scalar>(a: &ThcFullArgs, order: Option<&[PartId]>) -> Result<Value> {
    let gamma: WeightedGraph<S> = graph_from_dto(&read_json(&a.gamma)?)?;
    let p: DensityGraph<S> = density_from_dto(&read_json::<DensityDto>(&a.density)?)?;
    let eta: S = parse_scalar(&a.eta)?;
    let verdict = is_thc_full(&gamma, &p, &eta, a.cstar, order)?;
    to_value(&verdict)
}

fn cmd_thc_full(a: &ThcFullArgs) -> Result<CommandOutput> {
    let order = a.order.as_deref().map(read_part_ids).transpose()?;
    let json = if a.float {
        thc_full_generic::<f64>(a, order.as_deref())?
    } else {
        thc_full_generic::<Rat>(a, order.as_deref())?
    };
    let header = ["passes", "depth_reached", "counts_checked"];
    let row = header.iter().map(|k| json[*k].clone()).collect();
    let mut inputs = vec![a.gamma.clone(), a.density.clone()];
    if let Some(o) = &a.order {
        inputs.push(o.clone());
    }
    Ok(CommandOutput {
        csv: Some(csv_table(&header, &[row])?),
        json,
        inputs,
        seed: None,
    })
}

fn cmd_thc_random(a: &ThcRandomArgs) -> Result<CommandOutput> {
    let h = complex_from_dto(&read_json::<ComplexDto>(&a.pattern)?)?;
    let groups: Option<Vec<Vec<usize>>> =
        a.groups.as_deref().map(read_json).transpose()?;
    let spec = RandomGraphSpec {
        k: a.k,
        n: a.n,
        p: a.p,
        seed: a.seed,
    };
    let report = random_thc_experiment(
        &spec,
        &h,
        groups.as_deref(),
        a.eta,
        a.cstar,
        a.trials,
        a.seed,
        a.d_override,
    )?;
    let rows: Vec<Vec<Value>> = report
        .trials
        .iter()
        .map(|t| {
            vec![
                t.seed.into(),
                t.passed.into(),
                t.steps.len().into(),
                t.steps
                    .iter()
                    .map(|s| s.full_dev)
                    .fold(0.0_f64, f64::max)
                    .into(),
            ]
        })
        .collect();
    let mut inputs = vec![a.pattern.clone()];
    if let Some(g) = &a.groups {
        inputs.push(g.clone());
    }
    Ok(CommandOutput {
        csv: Some(csv_table(
            &["seed", "passed", "steps", "worst_full_dev"],
            &rows,
        )?),
        json: to_value(&report)?,
        inputs,
        seed: Some(a.seed),
    })
}

fn cmd_random(a: &RandomArgs) -> Result<CommandOutput> {
    let spec = RandomGraphSpec {
        k: a.k,
        n: a.n,
        p: a.p,
        seed: a.seed,
    };
    let dto = if a.float {
        graph_to_dto(&random_hypergraph::<f64>(&spec)?)
    } else {
        graph_to_dto(&random_hypergraph::<Rat>(&spec)?)
    };
    Ok(CommandOutput {
        json: to_value(&dto)?,
        csv: None,
        inputs: Vec::new(),
        seed: Some(a.seed),
    })
}

// ---------------------------------------------------------------------------
// The runner.
// ---------------------------------------------------------------------------

fn toml_scalar(v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        other => Err(Error::Parse(format!(
            "config argument values must be strings, numbers or booleans, got {other}"
        ))),
    }
}

/// Turns a config into the argv of the subcommand it names.
fn config_argv(doc: &toml::Value) -> Result<Vec<String>> {
    let command = doc
        .get("command")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Parse("config needs a string `command` key".into()))?;
    let mut argv: Vec<String> = command.split_whitespace().map(str::to_string).collect();
    if argv.is_empty() {
        return Err(Error::Parse("config `command` is empty".into()));
    }
    if let Some(args) = doc.get("args") {
        let table = args
            .as_table()
            .ok_or_else(|| Error::Parse("[args] must be a table".into()))?;
        for (key, value) in table {
            let flag = format!("--{}", key.replace('_', "-"));
            match value {
                toml::Value::Boolean(true) => argv.push(flag),
                toml::Value::Boolean(false) => {}
                toml::Value::Array(items) => {
                    for item in items {
                        argv.push(flag.clone());
                        argv.push(toml_scalar(item)?);
                    }
                }
                other => {
                    argv.push(flag);
                    argv.push(toml_scalar(other)?);
                }
            }
        }
    }
    if let Some(format) = doc.get("format") {
        argv.push("--format".into());
        argv.push(
            format
                .as_str()
                .ok_or_else(|| Error::Parse("config `format` must be a string".into()))?
                .to_string(),
        );
    }
    Ok(argv)
}

fn cmd_run(global_format: Format, a: &RunArgs) -> Result<()> {
    let (argv, out_dir) = if let Some(config_path) = &a.config {
        let text = std::fs::read_to_string(config_path)?;
        let doc: toml::Value = toml::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", config_path.display())))?;
        let out_dir = a.out_dir.clone().unwrap_or_else(|| {
            doc.get("out_dir")
                .and_then(|v| v.as_str())
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."))
        });
        (config_argv(&doc)?, out_dir)
    } else {
        let manifest_path = a.manifest.as_ref().expect("clap enforces config|manifest");
        let manifest: ExperimentManifest = read_json(manifest_path)?;
        (
            manifest.command,
            a.out_dir.clone().unwrap_or_else(|| PathBuf::from(".")),
        )
    };

    let mut full = vec!["hyperreg".to_string()];
    full.extend(argv.iter().cloned());
    let cli = Cli::try_parse_from(&full).map_err(|e| Error::Parse(e.to_string()))?;
    if matches!(cli.cmd, Cmd::Run(_)) {
        return Err(Error::Parse("a config cannot run `run` itself".into()));
    }

    let started = Instant::now();
    let out = dispatch(&cli.cmd)?;
    let mut manifest = ExperimentManifest::new(argv);
    manifest.seed = out.seed;
    for input in &out.inputs {
        manifest.record_input(input)?;
    }

    std::fs::create_dir_all(&out_dir)?;
    let json_text = to_json_string(&out.json)?;
    std::fs::write(out_dir.join("result.json"), &json_text)?;
    manifest.record_output("result.json", json_text.as_bytes());
    if let Some(csv_text) = &out.csv {
        std::fs::write(out_dir.join("result.csv"), csv_text)?;
        manifest.record_output("result.csv", csv_text.as_bytes());
    }
    manifest.elapsed_ms = started.elapsed().as_millis() as u64;
    std::fs::write(out_dir.join("manifest.json"), to_json_string(&manifest)?)?;
    eprintln!("wrote results to {}", out_dir.display());

    match (global_format, &out.csv) {
        (Format::Csv, Some(csv_text)) => print!("{csv_text}"),
        _ => print!("{json_text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry.
// ---------------------------------------------------------------------------

fn dispatch(cmd: &Cmd) -> Result<CommandOutput> {
    match cmd {
        Cmd::Count(a) => cmd_count(a),
        Cmd::Regcheck(a) => cmd_regcheck(a),
        Cmd::Minimality(a) => cmd_minimality(a),
        Cmd::Inherit(a) => cmd_inherit(a),
        Cmd::Gpecount(a) => cmd_gpecount(a),
        Cmd::Embed(a) => cmd_embed(a),
        Cmd::Thc(ThcCmd::Full(a)) => cmd_thc_full(a),
        Cmd::Thc(ThcCmd::Random(a)) => cmd_thc_random(a),
        Cmd::Random(a) => cmd_random(a),
        Cmd::Run(_) => unreachable!("run is handled before dispatch"),
    }
}

fn configure_threads(cli_threads: Option<usize>) {
    let threads = cli_threads.or_else(|| {
        std::env::var("HYPERREG_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore failures: the global pool can only be set once, which is
        // fine for a single-experiment process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Cmd::Run(args) = &cli.cmd {
        return cmd_run(cli.format, args);
    }
    let started = Instant::now();
    let out = dispatch(&cli.cmd)?;
    let json_text = to_json_string(&out.json)?;
    match (cli.format, &out.csv) {
        (Format::Csv, Some(csv_text)) => print!("{csv_text}"),
        (Format::Csv, None) => {
            return Err(Error::Parse("this subcommand has no CSV rendering".into()))
        }
        _ => print!("{json_text}"),
    }
    if let Some(path) = &cli.manifest_out {
        let mut argv: Vec<String> = std::env::args().skip(1).collect();
        // The manifest path itself is not part of the reproducible command.
        if let Some(i) = argv.iter().position(|s| s == "--manifest-out") {
            argv.drain(i..(i + 2).min(argv.len()));
        }
        let mut manifest = ExperimentManifest::new(argv);
        manifest.seed = out.seed;
        for input in &out.inputs {
            manifest.record_input(input)?;
        }
        manifest.record_output("result.json", json_text.as_bytes());
        if let Some(csv_text) = &out.csv {
            manifest.record_output("result.csv", csv_text.as_bytes());
        }
        manifest.elapsed_ms = started.elapsed().as_millis() as u64;
        std::fs::write(path, to_json_string(&manifest)?)?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    match run(&cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Parse(_) => 2,
                Error::Budget(_) => 3,
                _ => 1,
            };
            std::process::exit(code);
        }
    }
}

