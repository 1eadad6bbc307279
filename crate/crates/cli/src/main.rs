//! `growcon` command-line front end: run scenarios, sweep a parameter,
//! run the verification suites and export plot data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use growcon::diagnostics::fit_decay_exponent;
use growcon::output::{two_column, write_atomic};
use growcon::scenario::{run_scenario, RunOutcome, ScenarioConfig, BUNDLED};
use growcon::verify::{Suite, Verifier};
use growcon::Error;

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "growcon", version, about = "Consensus dynamics with a growing population")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the seed of every scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario (a TOML file or the name of a bundled scenario).
    Run { config: String },
    /// Run acceptance suites: moments, variance, clusters, kinetic, stability or all.
    Verify {
        #[arg(required = true)]
        suites: Vec<String>,
    },
    /// Run one scenario per value of a dotted parameter path, e.g. `growth.alpha`.
    Sweep {
        config: String,
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
    /// Write two-column `.dat` files for every series of a finished run.
    Report { run_dir: PathBuf },
    /// List the bundled scenarios.
    List,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let code = match &cli.command {
        Command::Run { config } => cmd_run(&cli, config),
        Command::Verify { suites } => cmd_verify(suites),
        Command::Sweep { config, axis, values } => cmd_sweep(&cli, config, axis, values),
        Command::Report { run_dir } => cmd_report(run_dir),
        Command::List => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            0
        }
    };
    ExitCode::from(code)
}

fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

/// Scenario text from a file, or from the bundled set when no such file exists.
fn scenario_text(config: &str) -> Result<String, Error> {
    let path = Path::new(config);
    if path.exists() {
        return std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())));
    }
    let name = config.strip_suffix(".toml").unwrap_or(config);
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| t.to_string())
        .ok_or_else(|| Error::Config(format!("{config}: no such file or bundled scenario")))
}

fn load(config: &str, seed: Option<u64>) -> Result<ScenarioConfig, Error> {
    let mut sc = ScenarioConfig::from_toml(&scenario_text(config)?)?;
    if let Some(s) = seed {
        sc.numerics.seed = s;
    }
    Ok(sc)
}

fn cmd_run(cli: &Cli, config: &str) -> u8 {
    let sc = match load(config, cli.seed) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let dir = cli.out.join(&sc.name);
    let result = run_scenario(&sc).and_then(|o| o.write(&dir).map(|()| o));
    match result {
        Ok(o) => {
            let s = &o.summary;
            let f = &s.final_record;
            println!(
                "{}: t = {}, N = {:.6e}, V = {:.6e}, V_X = {:.6e}, clusters = {}, c1_holds = {}, lemma1_bound_ok = {}",
                s.scenario, f.t, f.n, f.v, f.v_x, s.clusters.j, s.checks.c1_holds, s.checks.lemma1_bound_ok
            );
            println!("outputs in {}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_verify(names: &[String]) -> u8 {
    let mut suites = Vec::new();
    for n in names {
        if n == "all" {
            suites.extend(Suite::ALL);
            continue;
        }
        match n.parse::<Suite>() {
            Ok(s) => suites.push(s),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    let verifier = Verifier::new();
    let mut failed = 0;
    for s in suites {
        for o in verifier.suite(s) {
            println!("{}", o.headline());
            for c in &o.checks {
                println!("    {c}");
            }
            failed += usize::from(!o.passed());
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        EXIT_FAILED
    } else {
        0
    }
}

/// Replace the value at a dotted path; the key must already be present or
/// be an optional field of an existing table.
fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<(), Error> {
    let keys: Vec<&str> = path.split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one item");
    let mut node = root;
    for k in parents {
        node = node
            .get_mut(*k)
            .ok_or_else(|| Error::Config(format!("sweep axis {path}: no table {k:?}")))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("sweep axis {path}: parent is not a table")))?;
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

struct Cell {
    raw: String,
    result: Result<RunOutcome, Error>,
}

fn cmd_sweep(cli: &Cli, config: &str, axis: &str, values: &[String]) -> u8 {
    if values.is_empty() {
        eprintln!("error: sweep needs at least one value");
        return EXIT_CONFIG;
    }
    let base = match load(config, cli.seed) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let tree = toml::Value::try_from(&base).expect("scenario serializes");
    // every cell config is built and validated up front
    let mut cells = Vec::new();
    for raw in values {
        let mut t = tree.clone();
        let sc = set_path(&mut t, axis, parse_value(raw)).and_then(|()| {
            let text = toml::to_string(&t).map_err(|e| Error::Config(e.to_string()))?;
            ScenarioConfig::from_toml(&text)
        });
        match sc {
            Ok(mut sc) => {
                sc.name = format!("{}_{axis}={raw}", base.name);
                cells.push((raw.clone(), sc));
            }
            Err(e) => {
                eprintln!("error: value {raw:?} for {axis}: {e}");
                return EXIT_CONFIG;
            }
        }
    }

    let dir = cli.out.join(format!("{}_sweep_{axis}", base.name));
    let results: Vec<Cell> = cells
        .par_iter()
        .map(|(raw, sc)| {
            let result = run_scenario(sc).and_then(|o| o.write(&dir.join(format!("{axis}={raw}"))).map(|()| o));
            Cell { raw: raw.clone(), result }
        })
        .collect();

    let mut csv = format!("{axis},status,t_end,V,V_X,decay_exponent,clusters,sup_w1_micro_kinetic,error\n");
    let mut failed = 0;
    for c in &results {
        match &c.result {
            Ok(o) => {
                let s = &o.summary;
                let f = &s.final_record;
                let recs = if o.micro.is_empty() { &o.kinetic } else { &o.micro };
                let t: Vec<f64> = recs.iter().map(|r| r.t).collect();
                let v: Vec<f64> = recs.iter().map(|r| r.v).collect();
                let exponent = fit_decay_exponent(&t, &v, 0.1 * f.t, f.t).map(|d| d.alpha.to_string()).unwrap_or_default();
                let w1 = s.sup_w1_micro_kinetic.map(|w| w.to_string()).unwrap_or_default();
                let _ = writeln!(csv, "{},ok,{},{},{},{exponent},{},{w1},", c.raw, f.t, f.v, f.v_x, s.clusters.j);
                println!("{axis} = {}: V = {:.6e}, decay exponent = {exponent}", c.raw, f.v);
            }
            Err(e) => {
                failed += 1;
                let msg = e.to_string().replace(',', ";");
                let _ = writeln!(csv, "{},failed,,,,,,,{msg}", c.raw);
                eprintln!("{axis} = {}: {e}", c.raw);
            }
        }
    }
    let path = dir.join("sweep.csv");
    if let Err(e) = write_atomic(&path, csv.as_bytes()) {
        eprintln!("error: {e}");
        return EXIT_RUNTIME;
    }
    println!("combined table in {}", path.display());
    if failed > 0 {
        EXIT_FAILED
    } else {
        0
    }
}

/// Columns of a CSV file as `(header, values)`; `m1_k` style names are kept.
fn read_columns(path: &Path) -> Result<Vec<(String, Vec<f64>)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
    let mut cols: Vec<(String, Vec<f64>)> = header.into_iter().map(|h| (h, Vec::new())).collect();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(format!("{}: row {} has {} fields", path.display(), n + 2, fields.len()));
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            c.1.push(f.parse().map_err(|_| format!("{}: bad number {f:?}", path.display()))?);
        }
    }
    Ok(cols)
}

fn cmd_report(run_dir: &Path) -> u8 {
    let series = ["trajectory", "kinetic_trajectory", "w1_micro_vs_kinetic"];
    let plots = run_dir.join("plots");
    let mut written = 0;
    for stem in series {
        let path = run_dir.join(format!("{stem}.csv"));
        if !path.exists() {
            continue;
        }
        let cols = match read_columns(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        let Some((_, t)) = cols.first() else { continue };
        for (name, ys) in &cols[1..] {
            let out = plots.join(format!("{stem}_{name}.dat"));
            if let Err(e) = write_atomic(&out, two_column(t, ys).as_bytes()) {
                eprintln!("error: {e}");
                return EXIT_RUNTIME;
            }
            written += 1;
        }
    }
    if written == 0 {
        eprintln!("error: no trajectory files in {}", run_dir.display());
        return EXIT_CONFIG;
    }
    println!("{written} series written to {}", plots.display());
    0
}
