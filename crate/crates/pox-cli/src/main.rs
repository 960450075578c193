//! `pox` — run workloads on the simulated device, play the security game,
//! check recorded traces against the temporal-property catalog, and
//! exhaustively verify the monitor sub-modules.
//!
//! Exit codes: 0 success, 1 expectation failure, 2 usage error.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use pox_core::layout::MemoryLayout;
use pox_core::ltl::checks::{check_conformance, check_end_to_end, props_from_snapshots};
use pox_core::ltl::exhaustive::exhaustive_submodule;
use pox_core::monitor::{export_table, TransitionTable, ALL_SUBMODULES};
use pox_core::scenarios::{
    builtin_scenario, hex_bytes, load_scenario, run_scenario, run_security_game_by_name, Strategy,
    Verdict, ADVERSARY_STRATEGIES,
};
use pox_core::swatt::CostModel;
use pox_core::trace::{self, TraceBounds};

const USAGE: &str = "\
pox — proof-of-execution simulator and verification harness

USAGE:
    pox <command> [--flag value]...

COMMANDS:
    run                 run a scenario end to end and check its trace
    game                play the security game with one strategy
    check               check a recorded trace against the formula catalog
    verify-submodules   exhaustively check the monitor sub-module FSMs
    demo-fire-sensor    run the fire-sensor application demo

FLAGS (long names only):
    --scenario <name|path>   scenario for `run` (fire-sensor, honest-minimal, or a .json file)
    --strategy <name>        game strategy (honest, forge_guess, wrong_region, wrong_code,
                             tamper_output, overwrite_after_exec, interrupt_resume,
                             jump_mid_entry, dma_mid_exec, metadata_tamper, replay_chal,
                             reset_mid_exec, incomplete_exec)
    --trials <n>             game trials (default 100)
    --depth <n>              exhaustive search depth (default 8)
    --seed <n>               seed (default 0; POX_SEED overrides the default)
    --trace <path>           write the trace as JSON-Lines (plus a .meta bounds sidecar)
    --report <path>          write the report file

EXIT CODES: 0 success, 1 expectation failure, 2 usage error
";

struct Args {
    command: String,
    flags: HashMap<String, String>,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    if argv.is_empty() {
        return Err("missing command".into());
    }
    let command = argv[0].clone();
    let known = [
        "--scenario",
        "--strategy",
        "--trials",
        "--depth",
        "--seed",
        "--trace",
        "--report",
    ];
    let mut flags = HashMap::new();
    let mut i = 1;
    while i < argv.len() {
        let flag = &argv[i];
        if !known.contains(&flag.as_str()) {
            return Err(format!("unknown flag `{flag}`"));
        }
        let value = argv
            .get(i + 1)
            .ok_or_else(|| format!("flag `{flag}` needs a value"))?;
        flags.insert(flag.trim_start_matches("--").to_string(), value.clone());
        i += 2;
    }
    Ok(Args { command, flags })
}

impl Args {
    fn seed(&self) -> Result<u64, String> {
        if let Some(v) = self.flags.get("seed") {
            return v.parse().map_err(|_| format!("bad --seed `{v}`"));
        }
        if let Ok(v) = std::env::var("POX_SEED") {
            return v.parse().map_err(|_| format!("bad POX_SEED `{v}`"));
        }
        Ok(0)
    }

    fn u32_flag(&self, name: &str, default: u32) -> Result<u32, String> {
        match self.flags.get(name) {
            Some(v) => v.parse().map_err(|_| format!("bad --{name} `{v}`")),
            None => Ok(default),
        }
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.flags.get(name).map(PathBuf::from)
    }
}

fn emit(report: &str, path: Option<&Path>) -> Result<(), String> {
    print!("{report}");
    if let Some(p) = path {
        fs::write(p, report).map_err(|e| format!("cannot write report {}: {e}", p.display()))?;
    }
    Ok(())
}

fn write_trace_files(
    path: &Path,
    snapshots: &[pox_core::trace::SignalSnapshot],
    bounds: &TraceBounds,
) -> Result<(), String> {
    trace::write_jsonl(path, snapshots).map_err(|e| format!("cannot write trace: {e}"))?;
    trace::write_bounds(&trace::sidecar_path(path, "meta"), bounds)
        .map_err(|e| format!("cannot write trace sidecar: {e}"))?;
    Ok(())
}

fn cmd_run(args: &Args) -> Result<ExitCode, String> {
    let seed = args.seed()?;
    let name = args.flags.get("scenario").ok_or("run needs --scenario")?;
    let scenario = match builtin_scenario(name, seed) {
        Some(sc) => sc,
        None => load_scenario(Path::new(name)).map_err(|e| format!("{e}"))?,
    };
    run_and_report(&scenario, seed, CostModel::default(), args)
}

fn cmd_demo_fire_sensor(args: &Args) -> Result<ExitCode, String> {
    let seed = args.seed()?;
    let scenario = builtin_scenario("fire-sensor", seed).unwrap();
    run_and_report(&scenario, seed, CostModel::default(), args)
}

fn run_and_report(
    scenario: &pox_core::scenarios::Scenario,
    seed: u64,
    cost: CostModel,
    args: &Args,
) -> Result<ExitCode, String> {
    let out = run_scenario(scenario, seed, cost).map_err(|e| format!("{e}"))?;
    let conformance = check_conformance(&out.prover.props).map_err(|e| format!("{e}"))?;
    let end_to_end = check_end_to_end(&out.prover.props).map_err(|e| format!("{e}"))?;

    let mut report = String::new();
    let _ = writeln!(report, "scenario {}: seed={}", scenario.name, seed);
    let _ = writeln!(
        report,
        "verdict: {} (expected {})",
        verdict_str(out.verdict()),
        verdict_str(scenario.expected)
    );
    let _ = writeln!(report, "output: {}", hex_bytes(&out.response.o));
    let _ = writeln!(report, "trace: {} cycles", out.prover.trace.len());
    let _ = write!(report, "{conformance}");
    let _ = writeln!(report, "{end_to_end}");
    let ok = out.as_expected() && conformance.all_pass() && end_to_end.pass;
    let _ = writeln!(report, "result: {}", if ok { "ok" } else { "FAIL" });

    if let Some(path) = args.path("trace") {
        let bounds = TraceBounds {
            er_min: out.request.er_min,
            er_max: out.request.er_max,
            or_min: out.request.or_min,
            or_max: out.request.or_max,
        };
        write_trace_files(&path, &out.prover.trace, &bounds)?;
    }
    emit(&report, args.path("report").as_deref())?;
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Accept => "accept",
        Verdict::Reject => "reject",
    }
}

fn cmd_game(args: &Args) -> Result<ExitCode, String> {
    let seed = args.seed()?;
    let name = args.flags.get("strategy").ok_or("game needs --strategy")?;
    let trials = args.u32_flag("trials", 100)?;
    let result = run_security_game_by_name(name, trials, seed).map_err(|e| format!("{e}"))?;

    let mut report = format!("{result}");
    let honest_ok = result.strategy != Strategy::Honest || result.accepts == result.trials;
    let ok = result.wins == 0 && honest_ok && result.monitor_conformant();
    let _ = writeln!(
        report,
        "monitor conformant: {}",
        result.monitor_conformant()
    );
    let _ = writeln!(report, "result: {}", if ok { "ok" } else { "FAIL" });
    emit(&report, args.path("report").as_deref())?;
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_check(args: &Args) -> Result<ExitCode, String> {
    let trace_path = args.path("trace").ok_or("check needs --trace")?;
    let snapshots = trace::read_jsonl(&trace_path).map_err(|e| format!("{e}"))?;
    let meta_path = trace::sidecar_path(&trace_path, "meta");
    let bounds = trace::read_bounds(&meta_path)
        .map_err(|e| format!("cannot read bounds sidecar {}: {e}", meta_path.display()))?;
    let layout = MemoryLayout::default();
    let props = props_from_snapshots(&snapshots, &bounds, &layout);
    let conformance = check_conformance(&props).map_err(|e| format!("{e}"))?;
    let end_to_end = check_end_to_end(&props).map_err(|e| format!("{e}"))?;

    let mut report = String::new();
    let _ = writeln!(
        report,
        "trace {}: {} cycles",
        trace_path.display(),
        snapshots.len()
    );
    let _ = write!(report, "{conformance}");
    let _ = writeln!(report, "{end_to_end}");
    let passed =
        conformance.entries.iter().filter(|e| e.pass).count() + usize::from(end_to_end.pass);
    let _ = writeln!(report, "result: {passed}/10 pass");
    emit(&report, args.path("report").as_deref())?;
    Ok(if passed == 10 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_verify_submodules(args: &Args) -> Result<ExitCode, String> {
    let depth = args.u32_flag("depth", 8)?;
    let budget: u128 = 1_000_000_000_000;

    // The checker consumes the machine-readable table files, so export
    // them first and parse them back.
    let table_dir = match args.path("report") {
        Some(r) => r
            .parent()
            .unwrap_or(Path::new("."))
            .join("submodule_tables"),
        None => PathBuf::from("submodule_tables"),
    };
    fs::create_dir_all(&table_dir)
        .map_err(|e| format!("cannot create {}: {e}", table_dir.display()))?;

    let mut report = String::new();
    let mut total = 0usize;
    for id in ALL_SUBMODULES {
        let table = export_table(id);
        let path = table_dir.join(format!("{}.fsm", id.name()));
        fs::write(&path, table.to_string())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        let text = fs::read_to_string(&path).map_err(|e| format!("{e}"))?;
        let parsed = TransitionTable::parse(&text).map_err(|e| format!("{e}"))?;
        let result = exhaustive_submodule(&parsed, depth, budget).map_err(|e| format!("{e}"))?;
        total += result.counterexamples.len();
        let _ = writeln!(
            report,
            "submodule {}: {} counterexamples (depth {}, {} sequences)",
            id.name(),
            result.counterexamples.len(),
            result.depth,
            result.sequences
        );
        for cex in result.counterexamples.iter().take(4) {
            let _ = writeln!(
                report,
                "  violates {} via inputs {:?}",
                cex.formula, cex.inputs
            );
        }
    }
    let _ = writeln!(
        report,
        "total: {total} counterexamples across 7 sub-modules"
    );
    let _ = writeln!(report, "result: {}", if total == 0 { "ok" } else { "FAIL" });
    emit(&report, args.path("report").as_deref())?;
    Ok(if total == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    let result = match args.command.as_str() {
        "run" => cmd_run(&args),
        "game" => cmd_game(&args),
        "check" => cmd_check(&args),
        "verify-submodules" => cmd_verify_submodules(&args),
        "demo-fire-sensor" => cmd_demo_fire_sensor(&args),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            return ExitCode::SUCCESS;
        }
        other => {
            eprintln!("error: unknown command `{other}`\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            ExitCode::from(2)
        }
    }
}

// Strategies and sub-modules are enumerated in the usage text; keep the
// lists in sync with the library.
#[allow(dead_code)]
fn usage_lists_every_strategy() {
    for s in ADVERSARY_STRATEGIES {
        debug_assert!(USAGE.contains(s.name()));
    }
}
