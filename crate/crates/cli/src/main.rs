//! Command line for analyzing, synthesizing and verifying message sequence
//! graph specifications.
//!
//! Exit codes: 0 success or positive verdict; 1 negative verdict (not
//! controllable, mismatch, deadlock found); 2 usage or parse error; 3
//! inconclusive because a bound was hit.

use clap::{Parser, Subcommand, ValueEnum};
use msgsynth_cli::{dot, parser};
use msgsynth_core::bmsc::ProcessId;
use msgsynth_core::choice::{classify, partition_run, triggers, ChoiceError, NodeVerdict};
use msgsynth_core::graph::{MsgGraph, NodeId};
use msgsynth_core::realize::{synthesize_cfm, Realization, RealizeError};
use msgsynth_core::runtime::{explore, simulate, ExploreBounds};
use msgsynth_core::verify::{check_equivalence, EquivalenceBounds, Verdict};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_NEGATIVE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "msgsynth",
    version,
    about = "Message sequence graph analysis and synthesis"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Dot,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a specification and report its diagnostics.
    Validate { file: PathBuf },
    /// Classify every choice node and the overall graph.
    Classify {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print the triggers set of one node.
    Triggers { file: PathBuf, node: String },
    /// Enumerate the linearizations of a named chart.
    Linearize {
        file: PathBuf,
        bmsc: String,
        #[arg(long, default_value_t = 12)]
        cap: usize,
    },
    /// Synthesize the prediction-passing realization.
    Synthesize {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        out: OutFormat,
    },
    /// Exhaustively explore the synthesized realization.
    Explore {
        file: PathBuf,
        #[arg(long, default_value_t = 4)]
        channel_bound: usize,
        #[arg(long, default_value_t = 10_000)]
        max_configs: usize,
        #[arg(long)]
        json: bool,
    },
    /// Run one seeded random execution of the synthesized realization.
    Simulate {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        max_steps: usize,
        #[arg(long)]
        show_channels: bool,
    },
    /// Compare the graph language against the synthesized realization.
    Equiv {
        file: PathBuf,
        #[arg(long, default_value_t = 3)]
        visits: usize,
        #[arg(long, default_value_t = 12)]
        event_cap: usize,
        #[arg(long)]
        json: bool,
    },
    /// Partition a run (a node sequence) into prediction paths.
    Partition {
        file: PathBuf,
        #[arg(required = true)]
        run: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(cli.cmd))
}

fn load(file: &PathBuf) -> Result<parser::ParsedSpec, u8> {
    let source = match std::fs::read_to_string(file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return Err(EXIT_USAGE);
        }
    };
    parser::parse(&source).map_err(|diagnostics| {
        for d in &diagnostics {
            eprintln!("{}: {d}", file.display());
        }
        EXIT_USAGE
    })
}

fn synthesize(g: &MsgGraph) -> Result<Realization, u8> {
    synthesize_cfm(g).map_err(|e| match e {
        RealizeError::Choice(ChoiceError::NotControllable(nodes)) => {
            eprintln!(
                "error: graph is not controllable-choice; offending nodes: {}",
                nodes
                    .iter()
                    .map(NodeId::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            EXIT_NEGATIVE
        }
        other => {
            eprintln!("error: {other}");
            EXIT_NEGATIVE
        }
    })
}

#[derive(Serialize)]
struct ExploreSummary {
    configurations: usize,
    edges: usize,
    accepting: usize,
    deadlocks: Vec<usize>,
    confirmed_deadlocks: Vec<usize>,
    boundary_hit: bool,
    complete: bool,
}

fn run(cmd: Cmd) -> u8 {
    match cmd {
        Cmd::Validate { file } => match load(&file) {
            Ok(spec) => {
                println!(
                    "ok: {} charts, {} nodes, {} edges",
                    spec.charts.len(),
                    spec.graph.node_count(),
                    spec.graph.edges().len()
                );
                EXIT_OK
            }
            Err(code) => code,
        },
        Cmd::Classify { file, json } => {
            let spec = match load(&file) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let classification = classify(&spec.graph);
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&classification).expect("serializable report")
                );
            } else {
                for (node, verdict) in &classification.nodes {
                    let text = match verdict {
                        NodeVerdict::LocalChoice => "local-choice".to_owned(),
                        NodeVerdict::ControllableChoice => "controllable-choice".to_owned(),
                        NodeVerdict::Uncontrollable { counterexample } => match counterexample {
                            Some((_, path)) => format!(
                                "uncontrollable (unresolved path: {})",
                                path.iter()
                                    .map(NodeId::to_string)
                                    .collect::<Vec<_>>()
                                    .join(" ")
                            ),
                            None => "uncontrollable".to_owned(),
                        },
                    };
                    println!("{node}: {text}");
                }
                println!("overall: {}", classification.overall);
            }
            if classification.realizable() {
                EXIT_OK
            } else {
                EXIT_NEGATIVE
            }
        }
        Cmd::Triggers { file, node } => {
            let spec = match load(&file) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match triggers(&spec.graph, &NodeId::new(node.as_str())) {
                Ok(set) => {
                    println!(
                        "{{{}}}",
                        set.iter()
                            .map(ProcessId::to_string)
                            .collect::<Vec<_>>()
                            .join(", ")
                    );
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_USAGE
                }
            }
        }
        Cmd::Linearize { file, bmsc, cap } => {
            let spec = match load(&file) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let Some(chart) = spec.charts.get(&bmsc) else {
                eprintln!("error: chart '{bmsc}' is not declared");
                return EXIT_USAGE;
            };
            match chart.linearizations(cap) {
                Ok(words) => {
                    for w in &words {
                        println!(
                            "{}",
                            w.iter()
                                .map(|a| a.to_string())
                                .collect::<Vec<_>>()
                                .join(" ")
                        );
                    }
                    eprintln!("{} linearizations", words.len());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_INCONCLUSIVE
                }
            }
        }
        Cmd::Synthesize { file, out } => {
            let spec = match load(&file) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let realization = match synthesize(&spec.graph) {
                Ok(r) => r,
                Err(code) => return code,
            };
            match out {
                OutFormat::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&realization.cfm).expect("serializable machines")
                ),
                OutFormat::Dot => print!("{}", dot::export_machines(&realization.cfm)),
            }
            EXIT_OK
        }
        Cmd::Explore {
            file,
            channel_bound,
            max_configs,
            json,
        } => {
            let spec = match load(&file) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let realization = match synthesize(&spec.graph) {
                Ok(r) => r,
                Err(code) => return code,
            };
            let bounds = ExploreBounds {
                channel_depth: channel_bound,
                max_configurations: max_configs,
            };
            let exploration = explore(&realization.cfm, bounds);
            let confirmed = exploration.confirmed_deadlocks();
            let summary = ExploreSummary {
                configurations: exploration.configs.len(),
                edges: exploration.edges.len(),
                accepting: exploration.accepting.len(),
                deadlocks: exploration.deadlocks.iter().copied().collect(),
                confirmed_deadlocks: confirmed.iter().copied().collect(),
                boundary_hit: !exploration.boundary.is_empty(),
                complete: exploration.complete,
            };
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&summary).expect("serializable summary")
                );
            } else {
                println!("configurations: {}", summary.configurations);
                println!("edges: {}", summary.edges);
                println!("accepting: {}", summary.accepting);
                println!("deadlocks: {}", summary.deadlocks.len());
                println!("confirmed deadlocks: {}", summary.confirmed_deadlocks.len());
                println!("boundary hit: {}", summary.boundary_hit);
                println!("complete: {}", summary.complete);
            }
            if !summary.confirmed_deadlocks.is_empty() {
                EXIT_NEGATIVE
            } else if summary.boundary_hit || !summary.complete || !summary.deadlocks.is_empty() {
                EXIT_INCONCLUSIVE
            } else {
                EXIT_OK
            }
        }
        Cmd::Simulate {
            file,
            seed,
            max_steps,
            show_channels,
        } => {
            let spec = match load(&file) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let realization = match synthesize(&spec.graph) {
                Ok(r) => r,
                Err(code) => return code,
            };
            let trace = simulate(&realization.cfm, seed, max_steps);
            for (i, step) in trace.steps.iter().enumerate() {
                println!("{}", step.action);
                if show_channels {
                    let config = &trace.configs[i];
                    let n = realization.cfm.machines.len();
                    for (from, from_p) in realization.cfm.processes.iter().enumerate() {
                        for (to, to_p) in realization.cfm.processes.iter().enumerate() {
                            let chan = config.channel(n, from, to);
                            if !chan.is_empty() {
                                let labels: Vec<String> = chan
                                    .iter()
                                    .map(|p| {
                                        realization.cfm.payloads[*p as usize].label.to_string()
                                    })
                                    .collect();
                                println!("  ({from_p},{to_p}): {}", labels.join(" "));
                            }
                        }
                    }
                }
            }
            eprintln!(
                "{} steps, {}{}",
                trace.steps.len(),
                if trace.accepting {
                    "accepting"
                } else {
                    "not accepting"
                },
                if trace.truncated { ", truncated" } else { "" }
            );
            if trace.truncated {
                EXIT_INCONCLUSIVE
            } else if trace.accepting {
                EXIT_OK
            } else {
                EXIT_NEGATIVE
            }
        }
        Cmd::Equiv {
            file,
            visits,
            event_cap,
            json,
        } => {
            let spec = match load(&file) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let realization = match synthesize(&spec.graph) {
                Ok(r) => r,
                Err(code) => return code,
            };
            let report = check_equivalence(
                &spec.graph,
                &realization.cfm,
                EquivalenceBounds {
                    visit_bound: visits,
                    event_cap,
                    max_configurations: 200_000,
                },
            );
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("serializable report")
                );
            } else {
                println!("verdict: {:?}", report.verdict);
                println!("word length bound: {}", report.word_length_bound);
                println!("missing in machine: {}", report.missing_in_cfm.len());
                println!("extra in machine: {}", report.extra_in_cfm.len());
                for w in report.missing_in_cfm.iter().take(3) {
                    println!(
                        "  missing: {}",
                        w.iter()
                            .map(|a| a.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    );
                }
                for w in report.extra_in_cfm.iter().take(3) {
                    println!(
                        "  extra: {}",
                        w.iter()
                            .map(|a| a.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    );
                }
            }
            match report.verdict {
                Verdict::EqualAtBound => EXIT_OK,
                Verdict::Mismatch => EXIT_NEGATIVE,
                Verdict::Inconclusive => EXIT_INCONCLUSIVE,
            }
        }
        Cmd::Partition { file, run } => {
            let spec = match load(&file) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let nodes: Vec<NodeId> = run.iter().map(|s| NodeId::new(s.as_str())).collect();
            match partition_run(&spec.graph, &nodes) {
                Ok(parts) => {
                    for part in parts {
                        println!("{part}");
                    }
                    EXIT_OK
                }
                Err(ChoiceError::NotARun) => {
                    eprintln!("error: the given sequence is not a run of the graph");
                    EXIT_USAGE
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_NEGATIVE
                }
            }
        }
    }
}
