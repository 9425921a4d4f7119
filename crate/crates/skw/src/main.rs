//! Command-line front end. Four subcommands:
//!
//! * `simulate`  runs every ensemble of a recipe and stores one accumulator
//!   file per run, named by the content hash of its configuration;
//! * `analyze`   reads those files back, writes difference-curve CSVs and
//!   per-test JSON verdicts;
//! * `oracle`    runs the plain nearest-neighbor walk (no avoidance, no
//!   traps) and reports how far its exit law sits from harmonic measure,
//!   the end-to-end check of geometry, maps, and engine;
//! * `list-recipes` shows the recipes embedded in the binary.
//!
//! Exit codes: 0 success, 2 parse error, 3 validation error, 4 runtime
//! failure, 5 missing input. Test verdicts (pass or fail) are results, not
//! errors; `analyze` exits 0 either way.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use skw::analysis::{
    difference_curve, ratio_test_from_accumulators, rescale_and_collapse,
    shape_universality_test, AnalysisError, DifferenceCurve, RatioCell,
};
use skw::engine::{
    run_experiment, run_oracle_experiment, AccumulatorFile, EngineError, RunConfig, RunKind,
};
use skw::geometry::{DiskDomain, Domain, StripDomain};
use skw::recipe::{embedded_recipe, Recipe, RecipeError, TestSpec, EMBEDDED_RECIPES};
use skw::transition::uniform_table;

const EXIT_PARSE: i32 = 2;
const EXIT_VALIDATION: i32 = 3;
const EXIT_RUNTIME: i32 = 4;
const EXIT_MISSING: i32 = 5;

#[derive(Parser)]
#[command(
    name = "skw",
    version,
    about = "Smart kinetic walks on the square lattice: exit-point statistics \
             against harmonic measure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every ensemble in a recipe; one accumulator file per run.
    Simulate(SimulateArgs),
    /// Build difference-curve CSVs and test verdicts from stored runs.
    Analyze(AnalyzeArgs),
    /// Plain random-walk baseline: sup distance of its exit law from
    /// harmonic measure.
    Oracle(OracleArgs),
    /// List the recipes embedded in this binary.
    ListRecipes,
}

#[derive(Args)]
struct OutputArgs {
    /// Directory for accumulators and reports (default: $SKW_OUT_DIR, then ./runs).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; 0 means all available cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl OutputArgs {
    fn dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os("SKW_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("./runs"))
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Recipe file path, or the name of an embedded recipe.
    #[arg(long)]
    config: String,
    #[command(flatten)]
    output: OutputArgs,
    /// Re-run ensembles whose accumulator files already exist.
    #[arg(long)]
    force: bool,
    /// Override the recipe's default bin count.
    #[arg(long)]
    bins: Option<usize>,
    /// Override the recipe's default master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Recipe file path, or the name of an embedded recipe.
    #[arg(long)]
    recipe: String,
    #[command(flatten)]
    output: OutputArgs,
    /// Must match the value given to simulate, if any.
    #[arg(long)]
    bins: Option<usize>,
    /// Must match the value given to simulate, if any.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    /// d1 | d2 | disk:CX,CY,R | strip:TOP,BOTTOM
    #[arg(long)]
    domain: String,
    /// Lattice spacing.
    #[arg(long)]
    delta: f64,
    /// Number of walks.
    #[arg(long)]
    samples: u64,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = 1000)]
    bins: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Re-run even if a stored accumulator for this configuration exists.
    #[arg(long)]
    force: bool,
}

#[derive(Debug)]
enum CliError {
    Parse(String),
    Validation(String),
    Runtime(String),
    Missing(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Missing(_) => EXIT_MISSING,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Parse(m)
            | CliError::Validation(m)
            | CliError::Runtime(m)
            | CliError::Missing(m) => m,
        }
    }
}

impl From<RecipeError> for CliError {
    fn from(e: RecipeError) -> Self {
        match e {
            RecipeError::Parse(_) => CliError::Parse(e.to_string()),
            RecipeError::Invalid(_) => CliError::Validation(e.to_string()),
            RecipeError::Engine(inner) => CliError::from(inner),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidConfig(_) => CliError::Validation(e.to_string()),
            EngineError::BadFile { .. } | EngineError::Mismatch { .. } | EngineError::Empty => {
                CliError::Validation(e.to_string())
            }
            EngineError::WalkAborts { .. } | EngineError::Io(_) | EngineError::Serde(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Engine(inner) => CliError::from(inner),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn main() {
    // Clap itself exits with 2 on malformed command lines, matching our
    // parse-error code.
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::ListRecipes => cmd_list_recipes(),
    };
    match result {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.code());
        }
    }
}

/// Load a recipe from a file path, falling back to the embedded set when no
/// such file exists, and apply command-line overrides to its defaults
/// (per-run settings written in the recipe stay as written).
fn load_recipe(spec: &str, bins: Option<usize>, seed: Option<u64>) -> Result<Recipe, CliError> {
    let text = if Path::new(spec).is_file() {
        std::fs::read_to_string(spec)
            .map_err(|e| CliError::Missing(format!("cannot read {spec}: {e}")))?
    } else if let Some(body) = embedded_recipe(spec) {
        body.to_string()
    } else {
        return Err(CliError::Missing(format!(
            "no recipe file {spec:?} and no embedded recipe of that name \
             (see `skw list-recipes`)"
        )));
    };
    let mut recipe = Recipe::parse(&text)?;
    if let Some(b) = bins {
        recipe.n_bins = b;
    }
    if let Some(s) = seed {
        recipe.master_seed = s;
    }
    Ok(recipe)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let recipe = load_recipe(&args.config, args.bins, args.seed)?;
    let runs = recipe.resolve(args.output.workers)?;
    let dir = args.output.dir();
    println!(
        "recipe {} ({} run{})",
        recipe.name,
        runs.len(),
        if runs.len() == 1 { "" } else { "s" }
    );
    for (id, cfg) in &runs {
        let path = dir.join(AccumulatorFile::file_name(RunKind::Skw, cfg));
        if path.exists() && !args.force {
            println!("  {id}: exists, skipping ({})", path.display());
            continue;
        }
        let t0 = Instant::now();
        let acc = run_experiment(cfg)?;
        let wall = t0.elapsed().as_secs_f64();
        let file = AccumulatorFile::new(RunKind::Skw, cfg.clone(), &acc, wall);
        let written = file.write(&dir)?;
        println!(
            "  {id}: {} walks, delta {}, {:.1}s -> {}",
            cfg.n_samples,
            cfg.delta,
            wall,
            written.display()
        );
    }
    Ok(())
}

/// Loaded state of one recipe run during analysis.
struct RunData {
    cfg: RunConfig,
    file: AccumulatorFile,
    curve: DifferenceCurve,
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let recipe = load_recipe(&args.recipe, args.bins, args.seed)?;
    let runs = recipe.resolve(args.output.workers)?;
    let dir = args.output.dir();

    // All inputs must exist before any output is written.
    let missing: Vec<String> = runs
        .iter()
        .filter_map(|(id, cfg)| {
            let path = dir.join(AccumulatorFile::file_name(RunKind::Skw, cfg));
            (!path.is_file()).then(|| format!("{id} ({})", path.display()))
        })
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Missing(format!(
            "missing accumulator file(s) for: {}; run `skw simulate --config {}` first",
            missing.join(", "),
            args.recipe
        )));
    }

    let mut data: BTreeMap<String, RunData> = BTreeMap::new();
    for (id, cfg) in &runs {
        let path = dir.join(AccumulatorFile::file_name(RunKind::Skw, cfg));
        let file = AccumulatorFile::load(&path)?;
        if file.content_hash != cfg.content_hash() {
            return Err(CliError::Validation(format!(
                "{}: stored configuration does not match run {id} of recipe {}",
                path.display(),
                recipe.name
            )));
        }
        let curve = difference_curve(&file.accumulator(), cfg)?;
        data.insert(id.clone(), RunData { cfg: cfg.clone(), file, curve });
    }

    // The rescaled_diff CSV column uses the factor from the first collapse
    // test that lists the run; runs outside every collapse test get 1.0.
    let mut rescale: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (k, test) in recipe.tests.iter().enumerate() {
        if let TestSpec::Collapse { runs: ids, .. } = test {
            let delta_ref = ids
                .iter()
                .map(|id| data[id].cfg.delta)
                .fold(f64::INFINITY, f64::min);
            for id in ids {
                rescale
                    .entry(id.clone())
                    .or_insert((delta_ref / data[id].cfg.delta, k + 1));
            }
        }
    }

    for (id, _) in &runs {
        let rd = &data[id];
        let (factor, from_test) = rescale.get(id).copied().unwrap_or((1.0, 0));
        let csv_path = dir.join(format!("{}_{}.csv", recipe.name, id));
        std::fs::write(&csv_path, curve_csv(&recipe.name, id, rd, factor, from_test))
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", csv_path.display())))?;
        println!(
            "{id}: delta {}, {} exits, max|F-H| {:.5} -> {}",
            rd.cfg.delta,
            rd.curve.n,
            rd.curve.diff.iter().fold(0.0f64, |m, d| m.max(d.abs())),
            csv_path.display()
        );
    }

    for (k, test) in recipe.tests.iter().enumerate() {
        let (verdict, report_json) = run_test(&recipe, k, test, &data)?;
        let json_path = dir.join(format!("{}_test{}_{}.json", recipe.name, k + 1, test.kind_name()));
        std::fs::write(&json_path, report_json)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", json_path.display())))?;
        println!("{verdict} -> {}", json_path.display());
    }
    Ok(())
}

/// Execute one recipe test. Returns the human verdict line and the JSON
/// report body; a failed verdict is a result, not an error.
fn run_test(
    recipe: &Recipe,
    index: usize,
    test: &TestSpec,
    data: &BTreeMap<String, RunData>,
) -> Result<(String, String), CliError> {
    let provenance = |report: serde_json::Value| -> Result<String, CliError> {
        let body = serde_json::json!({
            "recipe": recipe.name,
            "test_index": index + 1,
            "spec": test,
            "code_version": env!("CARGO_PKG_VERSION"),
            "report": report,
        });
        serde_json::to_string_pretty(&body)
            .map_err(|e| CliError::Runtime(format!("serializing report: {e}")))
    };
    fn value<T: serde::Serialize>(r: &T) -> Result<serde_json::Value, CliError> {
        serde_json::to_value(r).map_err(|e| CliError::Runtime(e.to_string()))
    }
    match test {
        TestSpec::Collapse { runs, threshold } => {
            let curves: Vec<&DifferenceCurve> = runs.iter().map(|id| &data[id].curve).collect();
            let report = rescale_and_collapse(&curves, *threshold)?;
            let verdict = format!(
                "test {} collapse [{}]: {} (max standardized discrepancy {:.3}, threshold {})",
                index + 1,
                runs.join(" "),
                pass_str(report.pass),
                report.max_discrepancy,
                report.threshold
            );
            Ok((verdict, provenance(value(&report)?)?))
        }
        TestSpec::Shape { runs, threshold } => {
            let curves: Vec<&DifferenceCurve> = runs.iter().map(|id| &data[id].curve).collect();
            let report = shape_universality_test(&curves, *threshold)?;
            let verdict = format!(
                "test {} shape [{}]: {} (max standardized discrepancy {:.3}, threshold {})",
                index + 1,
                runs.join(" "),
                pass_str(report.pass),
                report.max_discrepancy,
                report.threshold
            );
            Ok((verdict, provenance(value(&report)?)?))
        }
        TestSpec::Ratio { runs_x, runs_y, bootstrap } => {
            let accs: BTreeMap<&str, _> =
                data.iter().map(|(id, rd)| (id.as_str(), rd.file.accumulator())).collect();
            let cells: Vec<RatioCell> = runs_x
                .iter()
                .zip(runs_y)
                .map(|(x, y)| RatioCell {
                    cfg_x: &data[x].cfg,
                    acc_x: &accs[x.as_str()],
                    cfg_y: &data[y].cfg,
                    acc_y: &accs[y.as_str()],
                })
                .collect();
            // Deterministic bootstrap seed, distinct per test slot.
            let boot_seed = recipe.master_seed.wrapping_add(0xB007).wrapping_add(index as u64);
            let report = ratio_test_from_accumulators(&cells, *bootstrap, boot_seed)?;
            let mut verdict = format!(
                "test {} ratio [{} / {}]: {}",
                index + 1,
                runs_x.join(" "),
                runs_y.join(" "),
                pass_str(report.pass)
            );
            for iv in &report.intervals {
                let _ = write!(
                    verdict,
                    "\n    {}: r = {:.4} in [{:.4}, {:.4}]",
                    iv.domain, iv.estimate, iv.lo, iv.hi
                );
            }
            Ok((verdict, provenance(value(&report)?)?))
        }
    }
}

fn pass_str(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// CSV body for one run: provenance comment lines, then one row per grid
/// point with columns theta, f, h, diff, sigma, rescaled_diff.
fn curve_csv(recipe: &str, id: &str, rd: &RunData, factor: f64, from_test: usize) -> String {
    let c = &rd.curve;
    let mut s = String::new();
    let _ = writeln!(s, "# difference curve: exit-point ECDF minus harmonic-measure CDF");
    let _ = writeln!(s, "# recipe: {recipe}, run: {id}");
    let _ = writeln!(s, "# domain: {}", rd.cfg.domain.label());
    let _ = writeln!(s, "# table: {}", rd.cfg.table.label());
    let _ = writeln!(
        s,
        "# delta: {}, n_samples: {}, n_bins: {}, master_seed: {}",
        rd.cfg.delta, rd.cfg.n_samples, rd.cfg.n_bins, rd.cfg.master_seed
    );
    let _ = writeln!(
        s,
        "# exits: {}, content_hash: {}, code_version: {}",
        c.n, rd.file.content_hash, rd.file.code_version
    );
    if from_test > 0 {
        let _ = writeln!(
            s,
            "# rescaled_diff: diff scaled by delta_ref/delta = {factor} (collapse test {from_test})"
        );
    } else {
        let _ = writeln!(s, "# rescaled_diff: no collapse test lists this run; factor 1");
    }
    let _ = writeln!(s, "theta,f,h,diff,sigma,rescaled_diff");
    for i in 0..c.theta.len() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.theta[i],
            c.f[i],
            c.h[i],
            c.diff[i],
            c.sigma[i],
            factor * c.diff[i]
        );
    }
    s
}

/// Domain shorthand: `d1` and `d2` are the two reference domains; explicit
/// geometry via `disk:CX,CY,R` or `strip:TOP,BOTTOM`.
fn parse_domain(spec: &str) -> Result<Domain, CliError> {
    let invalid = |m: String| CliError::Validation(m);
    let nums = |body: &str, want: usize| -> Result<Vec<f64>, CliError> {
        let vals: Result<Vec<f64>, _> = body.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match vals {
            Ok(v) if v.len() == want => Ok(v),
            _ => Err(CliError::Parse(format!(
                "domain spec {spec:?}: expected {want} comma-separated numbers"
            ))),
        }
    };
    match spec {
        "d1" => Ok(Domain::Disk(
            DiskDomain::new(0.3, -0.25, 1.0).expect("reference disk is valid"),
        )),
        "d2" => Ok(Domain::Strip(
            StripDomain::new(0.6, -0.4).expect("reference strip is valid"),
        )),
        _ => {
            if let Some(body) = spec.strip_prefix("disk:") {
                let v = nums(body, 3)?;
                Ok(Domain::Disk(
                    DiskDomain::new(v[0], v[1], v[2]).map_err(|e| invalid(e.to_string()))?,
                ))
            } else if let Some(body) = spec.strip_prefix("strip:") {
                let v = nums(body, 2)?;
                Ok(Domain::Strip(
                    StripDomain::new(v[0], v[1]).map_err(|e| invalid(e.to_string()))?,
                ))
            } else {
                Err(CliError::Parse(format!(
                    "unknown domain {spec:?}; use d1, d2, disk:CX,CY,R or strip:TOP,BOTTOM"
                )))
            }
        }
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<(), CliError> {
    let cfg = RunConfig {
        domain: parse_domain(&args.domain)?,
        table: uniform_table(),
        delta: args.delta,
        n_samples: args.samples,
        n_bins: args.bins,
        master_seed: args.seed,
        n_workers: args.output.workers,
    };
    cfg.validate()?;
    let dir = args.output.dir();
    let acc_path = dir.join(AccumulatorFile::file_name(RunKind::PlainWalk, &cfg));

    let file = if acc_path.is_file() && !args.force {
        println!("reusing stored run {}", acc_path.display());
        let file = AccumulatorFile::load(&acc_path)?;
        if file.content_hash != cfg.content_hash() {
            return Err(CliError::Validation(format!(
                "{}: stored configuration does not match this command line",
                acc_path.display()
            )));
        }
        file
    } else {
        let t0 = Instant::now();
        let acc = run_oracle_experiment(&cfg)?;
        let wall = t0.elapsed().as_secs_f64();
        let file = AccumulatorFile::new(RunKind::PlainWalk, cfg.clone(), &acc, wall);
        let path = file.write(&dir)?;
        println!(
            "{} plain walks, delta {}, {:.1}s -> {}",
            cfg.n_samples,
            cfg.delta,
            wall,
            path.display()
        );
        file
    };

    let curve = difference_curve(&file.accumulator(), &cfg)?;
    let (mut sup, mut worst, mut at) = (0.0f64, 0usize, 0.0f64);
    for (i, d) in curve.diff.iter().enumerate() {
        if d.abs() > sup {
            sup = d.abs();
            worst = i;
            at = curve.theta[i];
        }
    }
    let four_sigma = 4.0 * curve.sigma[worst];
    println!("sup|F - H| = {sup:.6} at theta = {at:.4} (4 sigma there: {four_sigma:.6})");

    let report = serde_json::json!({
        "config": cfg,
        "content_hash": file.content_hash,
        "code_version": file.code_version,
        "exits": curve.n,
        "sup_diff": sup,
        "worst_theta": at,
        "four_sigma": four_sigma,
    });
    let report_path = dir.join(format!(
        "oracle_report_{}.json",
        &cfg.content_hash()[..16]
    ));
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Runtime(e.to_string()))?,
    )
    .map_err(|e| CliError::Runtime(format!("writing {}: {e}", report_path.display())))?;
    println!("report -> {}", report_path.display());
    Ok(())
}

fn cmd_list_recipes() -> Result<(), CliError> {
    for (name, body) in EMBEDDED_RECIPES {
        let recipe = Recipe::parse(body)
            .map_err(|e| CliError::Runtime(format!("embedded recipe {name}: {e}")))?;
        let runs = recipe.resolve(0)?;
        let mut deltas: Vec<f64> = runs.iter().map(|(_, c)| c.delta).collect();
        deltas.sort_by(|a, b| b.total_cmp(a));
        deltas.dedup();
        let mut domains: Vec<String> = Vec::new();
        for (_, c) in &runs {
            let label = c.domain.label();
            if !domains.contains(&label) {
                domains.push(label);
            }
        }
        let tests: Vec<&str> = recipe.tests.iter().map(|t| t.kind_name()).collect();
        println!(
            "{name}: {} run(s) on {}; deltas {:?}; tests [{}]",
            runs.len(),
            domains.join(" + "),
            deltas,
            tests.join(", ")
        );
    }
    Ok(())
}
