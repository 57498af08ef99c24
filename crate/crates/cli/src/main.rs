//! Batch front end for the solvers, oracles, and reproduction suites.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use macsched::belief::{bayes_oracle, check_conditional_independence, enumerate_belief_nodes, ArrivalModel};
use macsched::centralized::{solve_centralized, Threshold};
use macsched::coordinated::{
    build_coordinated_mdp, decentralize, match_pattern, solve_coordinated,
};
use macsched::embedded::{published_strategies, table1};
use macsched::mdp::Mdp;
use macsched::model::{ModelParams, NeverTransmit};
use macsched::pbp::{best_response, pbp_iteration, DeviceStrategy};
use macsched::sim::{evaluate_one, evaluate_two, DEFAULT_EPISODES, DEFAULT_HORIZON};
use macsched::RecursionMode;

#[derive(Parser)]
#[command(name = "macsched", version, about = "Exact solvers for a two-device transmission-scheduling problem on a shared Markov channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run parameters shared by every subcommand. Values can be preloaded from a
/// flat `key = value` config file; explicit flags win.
#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Flat key=value config file to load defaults from.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the effective configuration back to this file.
    #[arg(long)]
    save_config: Option<PathBuf>,

    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Buffer-index truncation cap.
    #[arg(long)]
    cap_k: Option<u32>,
    /// Channel-staleness truncation cap.
    #[arg(long)]
    cap_m: Option<u32>,
    /// Belief-update convention: printed | bayes.
    #[arg(long)]
    mode: Option<RecursionMode>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
struct RunConfig {
    p1: f64,
    p2: f64,
    alpha0: f64,
    alpha1: f64,
    c: f64,
    r: f64,
    beta: f64,
    cap_k: u32,
    cap_m: u32,
    mode: RecursionMode,
    tol: f64,
    seed: u64,
    episodes: usize,
    horizon: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            p1: 0.3,
            p2: 0.3,
            alpha0: 0.75,
            alpha1: 0.75,
            c: 0.3,
            r: 1.0,
            beta: 0.9,
            cap_k: 60,
            cap_m: 60,
            mode: RecursionMode::AsPrinted,
            tol: 1e-10,
            seed: 0,
            episodes: DEFAULT_EPISODES,
            horizon: DEFAULT_HORIZON,
        }
    }
}

impl RunConfig {
    fn params(&self) -> ModelParams {
        ModelParams {
            p1: self.p1,
            p2: self.p2,
            alpha0: self.alpha0,
            alpha1: self.alpha1,
            c: self.c,
            r: self.r,
            beta: self.beta,
        }
    }

    /// Flat `key = value` form; float values use shortest exact decimal
    /// strings, so a written file parses back to an identical config.
    fn to_flat(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "p1 = {}", self.p1);
        let _ = writeln!(s, "p2 = {}", self.p2);
        let _ = writeln!(s, "alpha0 = {}", self.alpha0);
        let _ = writeln!(s, "alpha1 = {}", self.alpha1);
        let _ = writeln!(s, "c = {}", self.c);
        let _ = writeln!(s, "r = {}", self.r);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "cap_k = {}", self.cap_k);
        let _ = writeln!(s, "cap_m = {}", self.cap_m);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "episodes = {}", self.episodes);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        s
    }

    fn apply_flat(&mut self, text: &str) -> Result<(), String> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| format!("line {}: {key}: {e}", lineno + 1);
            match key {
                "p1" => self.p1 = value.parse().map_err(|e| bad(&e))?,
                "p2" => self.p2 = value.parse().map_err(|e| bad(&e))?,
                "alpha0" => self.alpha0 = value.parse().map_err(|e| bad(&e))?,
                "alpha1" => self.alpha1 = value.parse().map_err(|e| bad(&e))?,
                "c" => self.c = value.parse().map_err(|e| bad(&e))?,
                "r" => self.r = value.parse().map_err(|e| bad(&e))?,
                "beta" => self.beta = value.parse().map_err(|e| bad(&e))?,
                "cap_k" => self.cap_k = value.parse().map_err(|e| bad(&e))?,
                "cap_m" => self.cap_m = value.parse().map_err(|e| bad(&e))?,
                "mode" => self.mode = RecursionMode::from_str(value).map_err(|e| bad(&e))?,
                "tol" => self.tol = value.parse().map_err(|e| bad(&e))?,
                "seed" => self.seed = value.parse().map_err(|e| bad(&e))?,
                "episodes" => self.episodes = value.parse().map_err(|e| bad(&e))?,
                "horizon" => self.horizon = value.parse().map_err(|e| bad(&e))?,
                other => return Err(format!("line {}: unknown key `{other}`", lineno + 1)),
            }
        }
        Ok(())
    }
}

fn resolve(args: &RunArgs) -> Result<(RunConfig, Option<PathBuf>), String> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        cfg.apply_flat(&text)?;
    }
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { cfg.$f = v; } )* };
    }
    over!(p1, p2, alpha0, alpha1, c, r, beta, cap_k, cap_m, mode, tol, seed, episodes, horizon);
    if let Some(path) = &args.save_config {
        std::fs::write(path, cfg.to_flat())
            .map_err(|e| format!("cannot write config {}: {e}", path.display()))?;
    }
    Ok((cfg, args.out.clone()))
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the single-device problem; prints the threshold row and dumps
    /// the policy as CSV.
    SolveCentralized(RunArgs),
    /// Solve all 20 reference threshold cells and diff against the embedded
    /// expected values.
    ReproduceTable1(RunArgs),
    /// Solve the two-device coordinated problem; dumps the prescription
    /// policy and, at the reference parameters, verifies the pattern form.
    SolveDecentralized(RunArgs),
    /// Exact best response against a fixed partner strategy.
    BestResponse {
        #[command(flatten)]
        run: RunArgs,
        /// Partner strategy: `silent`, or a file with one transmit bit per
        /// state id.
        #[arg(long, default_value = "silent")]
        partner: String,
        /// Which device the fixed partner is.
        #[arg(long, default_value_t = 2)]
        partner_device: usize,
    },
    /// Alternate best responses to a person-by-person fixed point.
    Pbp {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 50)]
        max_rounds: usize,
    },
    /// Monte Carlo evaluation of a strategy against its DP value.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// `centralized`, `coordinated`, or `never`.
        #[arg(long, default_value = "coordinated")]
        strategy: String,
    },
    /// Brute-force Bayes and independence oracles over short histories.
    OracleCheck {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5)]
        depth: usize,
    },
}

fn threshold_str(t: Threshold) -> String {
    t.to_string()
}

fn cmd_solve_centralized(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), String> {
    let sol = solve_centralized(&cfg.params(), cfg.cap_m, cfg.mode, cfg.tol)
        .map_err(|e| e.to_string())?;
    println!(
        "p,c,k0,k1,mode\n{},{},{},{},{}",
        cfg.p1,
        cfg.c,
        threshold_str(sol.thresholds[0]),
        threshold_str(sol.thresholds[1]),
        cfg.mode
    );
    let mut dump = String::from("n,s,m,action,value\n");
    for id in 0..sol.mdp.num_states() {
        let st = sol.mdp.state_of(id);
        let _ = writeln!(
            dump,
            "{},{},{},{},{}",
            st.n,
            st.channel.s,
            st.channel.m,
            sol.policy.action(id),
            sol.values.0[id]
        );
    }
    if out.is_some() {
        emit(&out, &dump)?;
    }
    Ok(())
}

fn cmd_reproduce_table1(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), String> {
    let mut rows = Vec::new();
    let mut all_match: std::collections::HashMap<RecursionMode, bool> =
        RecursionMode::ALL.into_iter().map(|m| (m, true)).collect();
    println!("p,c,expected,printed,bayes");
    for cell in table1() {
        let params = ModelParams { p1: cell.p, p2: cell.p, c: cell.c, ..cfg.params() };
        let mut got = Vec::new();
        for mode in RecursionMode::ALL {
            let sol = solve_centralized(&params, cfg.cap_m, mode, cfg.tol)
                .map_err(|e| e.to_string())?;
            let matched =
                sol.thresholds == [Threshold::At(cell.k0), Threshold::At(cell.k1)];
            *all_match.get_mut(&mode).unwrap() &= matched;
            got.push(format!(
                "({},{}){}",
                threshold_str(sol.thresholds[0]),
                threshold_str(sol.thresholds[1]),
                if matched { "" } else { "*" }
            ));
        }
        println!("{},{},({},{}),{},{}", cell.p, cell.c, cell.k0, cell.k1, got[0], got[1]);
        rows.push(serde_json::json!({
            "p": cell.p, "c": cell.c,
            "expected": [cell.k0, cell.k1],
            "printed": got[0], "bayes": got[1],
        }));
    }
    let matching: Vec<String> = RecursionMode::ALL
        .into_iter()
        .filter(|m| all_match[m])
        .map(|m| m.to_string())
        .collect();
    println!("# modes matching all 20 cells: [{}]", matching.join(", "));
    if out.is_some() {
        let artifact = serde_json::json!({
            "caps": {"m": cfg.cap_m}, "tol": cfg.tol,
            "cells": rows,
            "modes_matching_all": matching,
        });
        emit(&out, &format!("{}\n", serde_json::to_string_pretty(&artifact).unwrap()))?;
    }
    Ok(())
}

fn is_reference_point(cfg: &RunConfig) -> bool {
    cfg.p1 == 0.3
        && cfg.p2 == 0.3
        && cfg.alpha0 == 0.75
        && cfg.alpha1 == 0.75
        && cfg.r == 1.0
        && cfg.beta == 0.9
}

fn cmd_solve_decentralized(cfg: &RunConfig, out: Option<PathBuf>) -> Result<(), String> {
    let sol = solve_coordinated(&cfg.params(), cfg.cap_k, cfg.cap_m, cfg.mode, cfg.tol)
        .map_err(|e| e.to_string())?;
    let mut dump = String::from("k,l,s,m,d1,d2,value\n");
    for id in 0..sol.mdp.num_states() {
        let st = sol.mdp.state_of(id);
        let presc = sol.prescription(st);
        let _ = writeln!(
            dump,
            "{:?},{:?},{},{},{},{},{}",
            st.k1, st.k2, st.channel.s, st.channel.m, presc.d1, presc.d2, sol.values.0[id]
        );
    }
    emit(&out, &dump)?;
    let reference = published_strategies().into_iter().find(|(c, _)| *c == cfg.c);
    if let (true, Some((_, spec))) = (is_reference_point(cfg), reference) {
        let limit_k = (cfg.cap_k / 2).min(12);
        let limit_m = (cfg.cap_m / 2).min(12);
        let mismatches = match_pattern(&sol, &spec, limit_k, limit_m);
        let verification = serde_json::json!({
            "params": cfg.to_flat().lines().collect::<Vec<_>>(),
            "mode": cfg.mode.to_string(),
            "spec_name": spec.name,
            "region": {"k": limit_k, "m": limit_m},
            "matched": mismatches.is_empty(),
            "mismatches": mismatches.iter().take(50).map(|m| m.to_string()).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&verification).unwrap());
    } else {
        eprintln!("# parameters do not match an embedded reference strategy; policy dump only");
    }
    Ok(())
}

fn load_partner(
    spec: &str,
    device: usize,
    num_states: usize,
) -> Result<DeviceStrategy, String> {
    if spec == "silent" {
        return Ok(DeviceStrategy::silent(device, num_states));
    }
    let text = std::fs::read_to_string(spec).map_err(|e| format!("cannot read {spec}: {e}"))?;
    let d: Vec<u8> = serde_json::from_str(&text).map_err(|e| format!("{spec}: {e}"))?;
    if d.len() != num_states {
        return Err(format!("{spec}: expected {num_states} entries, found {}", d.len()));
    }
    Ok(DeviceStrategy { device, d })
}

fn cmd_best_response(
    cfg: &RunConfig,
    out: Option<PathBuf>,
    partner: &str,
    partner_device: usize,
) -> Result<(), String> {
    if partner_device != 1 && partner_device != 2 {
        return Err("partner-device must be 1 or 2".into());
    }
    let base = build_coordinated_mdp(&cfg.params(), cfg.cap_k, cfg.cap_m, cfg.mode)
        .map_err(|e| e.to_string())?;
    let partner = load_partner(partner, partner_device, base.num_states())?;
    let br = best_response(&base, &partner, cfg.tol).map_err(|e| e.to_string())?;
    let report = serde_json::json!({
        "responder": br.strategy.device,
        "transmit_states": br.strategy.d.iter().filter(|&&d| d == 1).count(),
        "num_states": base.num_states(),
        "strategy": br.strategy.d,
        "values": br.values.0,
    });
    emit(&out, &format!("{}\n", serde_json::to_string(&report).unwrap()))
}

fn cmd_pbp(cfg: &RunConfig, out: Option<PathBuf>, max_rounds: usize) -> Result<(), String> {
    let outcome = pbp_iteration(
        &cfg.params(),
        cfg.cap_k,
        cfg.cap_m,
        cfg.mode,
        None,
        max_rounds,
        cfg.tol,
    )
    .map_err(|e| e.to_string())?;
    let report = serde_json::json!({
        "summary": outcome.summary,
        "strategy1": outcome.strategy1.d,
        "strategy2": outcome.strategy2.d,
    });
    emit(&out, &format!("{}\n", serde_json::to_string_pretty(&report).unwrap()))
}

fn cmd_simulate(cfg: &RunConfig, out: Option<PathBuf>, strategy: &str) -> Result<(), String> {
    let params = cfg.params();
    let report = match strategy {
        "never" => evaluate_two(
            &params,
            || (Box::new(NeverTransmit) as _, Box::new(NeverTransmit) as _),
            cfg.episodes,
            cfg.horizon,
            cfg.seed,
        )
        .map_err(|e| e.to_string())?
        .with_reference(0.0),
        "centralized" => {
            let sol = solve_centralized(&params, cfg.cap_m, cfg.mode, cfg.tol)
                .map_err(|e| e.to_string())?;
            evaluate_one(
                &params,
                || Box::new(macsched::centralized::CentralizedController::new(&sol)) as _,
                cfg.episodes,
                cfg.horizon,
                cfg.seed,
            )
            .map_err(|e| e.to_string())?
            .with_reference(sol.reference_value())
        }
        "coordinated" => {
            let sol = solve_coordinated(&params, cfg.cap_k, cfg.cap_m, cfg.mode, cfg.tol)
                .map_err(|e| e.to_string())?;
            evaluate_two(
                &params,
                || {
                    let (a, b) = decentralize(&sol);
                    (Box::new(a) as _, Box::new(b) as _)
                },
                cfg.episodes,
                cfg.horizon,
                cfg.seed,
            )
            .map_err(|e| e.to_string())?
            .with_reference(sol.reference_value(&params))
        }
        other => return Err(format!("unknown strategy `{other}` (expected centralized, coordinated, or never)")),
    };
    emit(&out, &format!("{}\n", serde_json::to_string_pretty(&report).unwrap()))
}

fn cmd_oracle_check(cfg: &RunConfig, out: Option<PathBuf>, depth: usize) -> Result<(), String> {
    if depth > 6 {
        return Err("depth above 6 is impractically slow".into());
    }
    let params = cfg.params();
    params.validate().map_err(|e| e.to_string())?;
    let nodes = enumerate_belief_nodes(&params, ArrivalModel::Independent, depth);
    let mut max_dev = 0.0f64;
    for node in &nodes {
        let oracle = bayes_oracle(&params, ArrivalModel::Independent, &node.history)
            .map_err(|e| format!("{e:?}"))?;
        max_dev = max_dev
            .max((oracle.buffer_marginal(1) - node.index.claimed_buffer(&params, 1)).abs())
            .max((oracle.buffer_marginal(2) - node.index.claimed_buffer(&params, 2)).abs())
            .max((oracle.busy_marginal() - node.index.claimed_busy(&params)).abs());
    }
    let gap_indep = check_conditional_independence(&params, ArrivalModel::Independent, depth);
    let gap_corr =
        check_conditional_independence(&params, ArrivalModel::Correlated, depth.min(3));
    let report = serde_json::json!({
        "depth": depth,
        "belief_nodes": nodes.len(),
        "max_index_vs_oracle_deviation": max_dev,
        "max_factorization_gap_independent": gap_indep,
        "max_factorization_gap_correlated": gap_corr,
    });
    emit(&out, &format!("{}\n", serde_json::to_string_pretty(&report).unwrap()))
}

fn run() -> Result<(), String> {
    let cli = Cli::parse();
    match cli.command {
        Command::SolveCentralized(args) => {
            let (cfg, out) = resolve(&args)?;
            cmd_solve_centralized(&cfg, out)
        }
        Command::ReproduceTable1(args) => {
            let (cfg, out) = resolve(&args)?;
            cmd_reproduce_table1(&cfg, out)
        }
        Command::SolveDecentralized(args) => {
            let (cfg, out) = resolve(&args)?;
            cmd_solve_decentralized(&cfg, out)
        }
        Command::BestResponse { run, partner, partner_device } => {
            let (cfg, out) = resolve(&run)?;
            cmd_best_response(&cfg, out, &partner, partner_device)
        }
        Command::Pbp { run, max_rounds } => {
            let (cfg, out) = resolve(&run)?;
            cmd_pbp(&cfg, out, max_rounds)
        }
        Command::Simulate { run, strategy } => {
            let (cfg, out) = resolve(&run)?;
            cmd_simulate(&cfg, out, &strategy)
        }
        Command::OracleCheck { run, depth } => {
            let (cfg, out) = resolve(&run)?;
            cmd_oracle_check(&cfg, out, depth)
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
