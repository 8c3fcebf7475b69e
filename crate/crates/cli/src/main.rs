//! `qpolar` command-line front end.
//!
//! Exit codes: 0 on success, 2 when a negative verdict was computed
//! (unphysical matrix, negative weight function, non-Mueller channel),
//! 1 when the command could not be carried out.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use qpolar::channels::{
    classify_channel, extract_mueller, is_cptp, random_nondepolarizing_mueller, scan_weight_positivity,
    weighted_rotation_mueller, WeightFunctionSpec, CPTP_TOL, EXTRACTION_TOL,
};
use qpolar::formats::{
    parse_channel, parse_experiment, parse_mueller, parse_versioned, to_json17, write_json17, ChannelDoc,
    MuellerFile, CHANNEL_SCHEMA, MUELLER_SCHEMA,
};
use qpolar::sim::{estimate_mueller, persist, standard_probes};
use qpolar::stokes::{
    classify, cloude_decompose, compose, convex_combine, is_physical, lu_chipman, MuellerMatrix, DECOMPOSITION_TOL,
};
use qpolar::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "qpolar", version, about = "Mueller-matrix polarimetry on truncated two-mode Fock spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Physicality check of a Mueller matrix.
    Validate(ValidateArgs),
    /// Cloude or Lu-Chipman decomposition of a Mueller matrix.
    Decompose(DecomposeArgs),
    /// Cascade of Mueller matrices, listed in the order light meets them.
    Compose(ComposeArgs),
    /// Builds a channel and extracts its Mueller matrix.
    ChannelExtract(ExtractArgs),
    /// Depolarizing / nondepolarizing verdict for a Mueller matrix or channel.
    Classify(ClassifyArgs),
    /// Shot-noise simulation of a polarimetry experiment.
    Simulate(SimulateArgs),
    /// Random nondepolarizing Mueller matrix or SU(3) channel document.
    Random(RandomArgs),
    /// Positivity scan of a weight-function spec on a lattice.
    WeightfnCheck(WeightArgs),
}

fn nonempty_path(s: &str) -> std::result::Result<PathBuf, String> {
    if s.is_empty() {
        Err("path must not be empty".into())
    } else {
        Ok(PathBuf::from(s))
    }
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(short, long, value_parser = nonempty_path)]
    input: PathBuf,
    /// Relative tolerance on the smallest coherency eigenvalue.
    #[arg(long, default_value_t = DECOMPOSITION_TOL)]
    tol: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Cloude,
    LuChipman,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(short, long, value_parser = nonempty_path)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, default_value_t = DECOMPOSITION_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct ComposeArgs {
    /// Mueller files, first element first.
    #[arg(short, long = "input", value_parser = nonempty_path, required = true)]
    inputs: Vec<PathBuf>,
    #[arg(short, long, value_parser = nonempty_path)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(short, long, value_parser = nonempty_path)]
    input: PathBuf,
    /// Photon cutoff; overrides the document's `n_max`.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    nmax: Option<u64>,
    /// Relative least-squares residual accepted as a Mueller transformation.
    #[arg(long, default_value_t = EXTRACTION_TOL)]
    tol: f64,
    /// Also write the extracted matrix as a Mueller file.
    #[arg(short, long, value_parser = nonempty_path)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Mueller file or channel document.
    #[arg(short, long, value_parser = nonempty_path)]
    input: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    nmax: Option<u64>,
    /// Rank tolerance `lambda_2 <= tol * lambda_1`.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Experiment config.
    #[arg(short, long, value_parser = nonempty_path)]
    input: PathBuf,
    /// Record path; defaults to the config's `output`, then `<input>.record.json`.
    #[arg(short, long, value_parser = nonempty_path)]
    output: Option<PathBuf>,
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    nmax: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RandomKind {
    Mueller,
    Channel,
}

#[derive(Debug, Args)]
struct RandomArgs {
    #[arg(long, value_enum, default_value_t = RandomKind::Mueller)]
    kind: RandomKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cutoff written into channel documents.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    nmax: u64,
    #[arg(short, long, value_parser = nonempty_path)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WeightArgs {
    /// Bare `{a, ..., j}` spec or a `weighted_rotation` channel document.
    #[arg(short, long, value_parser = nonempty_path)]
    input: PathBuf,
    /// Lattice points per Euler angle.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(2..))]
    grid: u64,
}

/// Success or a computed negative verdict; both carry stdout text.
enum Outcome {
    Done(String),
    Negative(String),
}

fn report(command: &str, verdict: &str, body: Value) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("verdict".into(), json!(verdict));
    if let Value::Object(b) = body {
        m.extend(b);
    }
    m
}

fn render(m: Map<String, Value>) -> Result<String> {
    to_json17(&Value::Object(m))
}

/// Reads a file, naming it in the error.
fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn value<T: Serialize>(x: &T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

fn validate(a: &ValidateArgs) -> Result<Outcome> {
    let m = parse_mueller(&read(&a.input)?)?;
    let r = is_physical(&m, a.tol);
    let text = render(report("validate", if r.physical { "physical" } else { "unphysical" }, value(&r)?))?;
    Ok(if r.physical { Outcome::Done(text) } else { Outcome::Negative(text) })
}

fn decompose(a: &DecomposeArgs) -> Result<Outcome> {
    let m = parse_mueller(&read(&a.input)?)?;
    match a.method {
        Method::Cloude => {
            let phys = is_physical(&m, a.tol);
            if !phys.physical {
                return Ok(Outcome::Negative(render(report("decompose", "unphysical", value(&phys)?))?));
            }
            let terms = cloude_decompose(&m, a.tol)?;
            let weights: Vec<f64> = terms.iter().map(|t| t.weight).collect();
            let parts: Vec<MuellerMatrix> = terms.iter().map(|t| t.mueller).collect();
            let residual = convex_combine(&weights, &parts)?.max_abs_diff(&m);
            let mut eigenvalues = phys.eigenvalues;
            eigenvalues.reverse();
            let terms: Vec<Value> = terms
                .iter()
                .map(|t| {
                    let j = t.jones.matrix();
                    json!({
                        "weight": t.weight,
                        "mueller": t.mueller,
                        "jones": [[[j[(0, 0)].re, j[(0, 0)].im], [j[(0, 1)].re, j[(0, 1)].im]],
                                  [[j[(1, 0)].re, j[(1, 0)].im], [j[(1, 1)].re, j[(1, 1)].im]]],
                    })
                })
                .collect();
            let body = json!({
                "method": "cloude",
                "tolerance": a.tol,
                "eigenvalues": eigenvalues,
                "weights": weights,
                "terms": terms,
                "recombination_residual": residual,
            });
            Ok(Outcome::Done(render(report("decompose", "decomposed", body))?))
        }
        Method::LuChipman => match lu_chipman(&m) {
            Ok(lc) => {
                let mut body = value(&lc)?;
                body["method"] = json!("lu-chipman");
                Ok(Outcome::Done(render(report("decompose", "decomposed", body))?))
            }
            Err(Error::DegenerateDecomposition { reason, partial }) => {
                let body = json!({ "method": "lu-chipman", "reason": reason, "partial": value(&*partial)? });
                Ok(Outcome::Negative(render(report("decompose", "degenerate", body))?))
            }
            Err(e) => Err(e),
        },
    }
}

fn compose_cmd(a: &ComposeArgs) -> Result<Outcome> {
    let mut total = MuellerMatrix::identity();
    for path in &a.inputs {
        total = compose(&parse_mueller(&read(path)?)?, &total);
    }
    emit_document(&MuellerFile::new(&total), a.output.as_deref(), "compose")
}

/// Writes `doc` to `output` (and reports the path) or prints it.
fn emit_document<T: Serialize>(doc: &T, output: Option<&Path>, command: &str) -> Result<Outcome> {
    match output {
        Some(path) => {
            write_json17(doc, path)?;
            let body = json!({ "output": path, "document": value(doc)? });
            Ok(Outcome::Done(render(report(command, "written", body))?))
        }
        None => Ok(Outcome::Done(to_json17(doc)?)),
    }
}

fn cutoff(n: Option<u64>) -> Option<usize> {
    n.map(|n| n as usize)
}

fn extract_cmd(a: &ExtractArgs) -> Result<Outcome> {
    let doc = parse_channel(&read(&a.input)?)?;
    let ch = match doc.build(cutoff(a.nmax)) {
        Ok(ch) => ch,
        Err(Error::PositivityFailure(r)) => {
            return Ok(Outcome::Negative(render(report("channel-extract", "positivity_failure", value(&*r)?))?));
        }
        Err(e) => return Err(e),
    };
    let cptp = is_cptp(&ch, CPTP_TOL);
    let base = json!({
        "tolerance": a.tol,
        "n_max": ch.basis().n_max(),
        "provenance": ch.provenance(),
        "kraus_operators": ch.len(),
        "number_behavior": ch.number_behavior().to_string(),
        "cptp": cptp,
    });
    match extract_mueller(&ch, a.tol) {
        Ok(x) => {
            if let Some(path) = &a.output {
                write_json17(&MuellerFile::new(&x.mueller), path)?;
            }
            let mut body = base;
            body["mueller"] = value(&x.mueller)?;
            body["residual"] = json!(x.residual);
            body["component_residuals"] = json!(x.component_residuals);
            Ok(Outcome::Done(render(report("channel-extract", "mueller", body))?))
        }
        Err(Error::NotMuellerRepresentable { residual, worst_component }) => {
            let mut body = base;
            body["residual"] = json!(residual);
            body["worst_component"] = json!(worst_component);
            Ok(Outcome::Negative(render(report("channel-extract", "not_mueller_representable", body))?))
        }
        Err(e) => Err(e),
    }
}

fn schema_of(text: &str) -> Result<String> {
    let v: Value = serde_json::from_str(text)?;
    v.get("schema")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| Error::Format("missing \"schema\" field".into()))
}

fn classify_cmd(a: &ClassifyArgs) -> Result<Outcome> {
    let text = read(&a.input)?;
    let schema = schema_of(&text)?;
    let (c, extra) = if schema == MUELLER_SCHEMA {
        let m = parse_versioned::<MuellerFile>(&text, MUELLER_SCHEMA)?.matrix();
        (classify(&m, a.tol), json!({ "mueller": m }))
    } else if schema == CHANNEL_SCHEMA {
        let doc: ChannelDoc = parse_versioned(&text, CHANNEL_SCHEMA)?;
        let cc = classify_channel(&doc.build(cutoff(a.nmax))?, a.tol)?;
        let extra = json!({
            "mueller": cc.mueller,
            "extraction_residual": cc.extraction_residual,
            "number_behavior": cc.number_behavior.to_string(),
            "provenance": cc.provenance,
        });
        (cc.classification, extra)
    } else {
        return Err(Error::SchemaVersion { found: schema, expected: format!("{MUELLER_SCHEMA} or {CHANNEL_SCHEMA}") });
    };
    let mut body = value(&c)?;
    if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
        b.extend(e);
    }
    let verdict = value(&c.kind)?.as_str().unwrap_or_default().to_owned();
    Ok(Outcome::Done(render(report("classify", &verdict, body))?))
}

fn default_record_path(input: &Path) -> PathBuf {
    let name = input.file_name().and_then(|n| n.to_str()).unwrap_or("experiment");
    let stem = name.strip_suffix(".exp.json").or_else(|| name.strip_suffix(".json")).unwrap_or(name);
    input.with_file_name(format!("{stem}.record.json"))
}

fn simulate_cmd(a: &SimulateArgs) -> Result<Outcome> {
    let config = parse_experiment(&read(&a.input)?)?;
    let base_dir = a.input.parent().unwrap_or(Path::new("."));
    let doc = config.channel_doc(base_dir)?;
    let n_max = cutoff(a.nmax).or(config.n_max);
    let channel = doc.build(n_max)?;
    let probes = config.probes.clone().unwrap_or_else(|| standard_probes(1));
    let shots = a.shots.unwrap_or(config.shots);
    let seed = a.seed.unwrap_or(config.seed);
    let mut record = estimate_mueller(&channel, &probes, shots, seed)?;
    record.config.channel_spec = Some(value(&doc)?);
    let path = a
        .output
        .clone()
        .or_else(|| config.output.as_ref().map(|p| base_dir.join(p)))
        .unwrap_or_else(|| default_record_path(&a.input));
    persist(&record, &path)?;

    let mut out = String::new();
    writeln!(out, "record: {}", path.display()).expect("write to String");
    writeln!(
        out,
        "channel: {} (n_max {}, {} probes, {shots} shots per setting, seed {seed})",
        record.config.channel,
        channel.basis().n_max(),
        probes.len()
    )
    .expect("write to String");
    writeln!(out, "estimate +/- standard error:").expect("write to String");
    for i in 0..4 {
        let row: Vec<String> = (0..4)
            .map(|j| format!("{:>10.6} +/- {:<9.6}", record.estimate[(i, j)], record.stderr[(i, j)]))
            .collect();
        writeln!(out, "  {}", row.join("  ").trim_end()).expect("write to String");
    }
    Ok(Outcome::Done(out))
}

fn random_cmd(a: &RandomArgs) -> Result<Outcome> {
    match a.kind {
        RandomKind::Mueller => {
            let m = random_nondepolarizing_mueller(a.seed);
            emit_document(&MuellerFile::new(&m), a.output.as_deref(), "random")
        }
        RandomKind::Channel => {
            let doc = ChannelDoc::new("su3", json!({ "seed": a.seed }), a.nmax as usize);
            emit_document(&doc, a.output.as_deref(), "random")
        }
    }
}

fn load_weight_spec(path: &Path) -> Result<WeightFunctionSpec> {
    let v: Value = serde_json::from_str(&read(path)?)?;
    if v.get("type").is_some() {
        let doc: ChannelDoc = serde_json::from_value(v)?;
        if doc.kind != "weighted_rotation" {
            return Err(Error::Format(format!("expected a weighted_rotation channel, found {:?}", doc.kind)));
        }
        return Ok(serde_json::from_value(doc.params)?);
    }
    Ok(serde_json::from_value(v)?)
}

fn weight_cmd(a: &WeightArgs) -> Result<Outcome> {
    let spec = load_weight_spec(&a.input)?;
    let scan = scan_weight_positivity(&spec, a.grid as usize)?;
    let positive = scan.is_positive();
    let mut body = value(&scan)?;
    body["grid"] = json!(a.grid);
    body["spec"] = value(&spec)?;
    body["mueller"] = value(&weighted_rotation_mueller(&spec))?;
    let text = render(report("weightfn-check", if positive { "positive" } else { "negative" }, body))?;
    Ok(if positive { Outcome::Done(text) } else { Outcome::Negative(text) })
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Validate(a) => validate(a),
        Command::Decompose(a) => decompose(a),
        Command::Compose(a) => compose_cmd(a),
        Command::ChannelExtract(a) => extract_cmd(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Random(a) => random_cmd(a),
        Command::WeightfnCheck(a) => weight_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(Outcome::Done(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Negative(text)) => {
            print!("{text}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
