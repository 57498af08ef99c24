//! Reference results compiled into the crate as data files, used by the
//! regression suite and by the CLI's reproduction subcommands.

use crate::coordinated::PatternSpec;

const TABLE1_CSV: &str = include_str!("../data/table1.csv");
const STRATEGIES_JSON: &str = include_str!("../data/strategies.json");

/// One cell of the reference single-device threshold table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Table1Cell {
    pub p: f64,
    pub c: f64,
    pub k0: u32,
    pub k1: u32,
}

/// The 20 reference `(k0, k1)` threshold cells (`p` by rows, `c` by columns).
pub fn table1() -> Vec<Table1Cell> {
    TABLE1_CSV
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#') && !l.starts_with("p,"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Table1Cell {
                p: f[0].parse().unwrap(),
                c: f[1].parse().unwrap(),
                k0: f[2].parse().unwrap(),
                k1: f[3].parse().unwrap(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, serde::Deserialize)]
struct StrategyEntry {
    c: f64,
    spec: PatternSpec,
}

#[derive(Debug, Clone, serde::Deserialize)]
struct StrategyFile {
    #[allow(dead_code)]
    comment: String,
    strategies: Vec<StrategyEntry>,
}

/// The five reference two-device strategies for `p1 = p2 = 0.3`, keyed by
/// transmission cost `c`.
pub fn published_strategies() -> Vec<(f64, PatternSpec)> {
    let file: StrategyFile =
        serde_json::from_str(STRATEGIES_JSON).expect("embedded strategies parse");
    file.strategies.into_iter().map(|e| (e.c, e.spec)).collect()
}
