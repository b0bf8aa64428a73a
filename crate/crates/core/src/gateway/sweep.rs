//! Chain scenarios and the five-row detection-delay sweep.

use serde::{Deserialize, Serialize};

use crate::engine::{Behavior, Command, Engine, EngineError, NodeSpec};

use super::scenario::{load_scenario, ScenarioConfig, ScriptedAction};

/// Spacing between consecutive chain nodes; with the default 100 m range
/// only neighbours are linked, so the route is the whole chain.
pub const CHAIN_SPACING_M: f64 = 80.0;

/// When the chain's transaction starts.
pub const CHAIN_START_S: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    /// Nodes in the route.
    pub n: usize,
    /// Hops completed before the drop.
    pub x: usize,
    /// Per-hop delay listed for the row.
    pub listed_per_hop_s: f64,
    /// Detection delay listed for the row.
    pub listed_delay_s: f64,
}

pub const TABLE2_ROWS: [Table2Row; 5] = [
    Table2Row { n: 8, x: 3, listed_per_hop_s: 3.0, listed_delay_s: 11.6 },
    Table2Row { n: 9, x: 4, listed_per_hop_s: 3.1, listed_delay_s: 11.6 },
    Table2Row { n: 10, x: 4, listed_per_hop_s: 2.8, listed_delay_s: 14.5 },
    Table2Row { n: 7, x: 4, listed_per_hop_s: 2.9, listed_delay_s: 5.8 },
    Table2Row { n: 6, x: 4, listed_per_hop_s: 3.1, listed_delay_s: 2.9 },
];

/// Listed average per-hop delay.
pub const TABLE2_AVERAGE_PER_HOP_S: f64 = 2.98;

/// Constant per-hop delay of the closed-form detection model.
pub const CONSTANT_PER_HOP_S: f64 = 2.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table2Mode {
    /// Every row uses 2.9 s per hop.
    Constant,
    /// Each row uses its own listed per-hop delay.
    PerRow,
}

impl Table2Mode {
    pub fn per_hop_s(self, row: &Table2Row) -> f64 {
        match self {
            Table2Mode::Constant => CONSTANT_PER_HOP_S,
            Table2Mode::PerRow => row.listed_per_hop_s,
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Table2Mode::Constant => "constant",
            Table2Mode::PerRow => "per-row",
        }
    }
}

/// Chain node name at route position `i` of an `n`-node chain.
pub fn chain_node_name(n: usize, i: usize) -> String {
    match i {
        0 => "src".to_owned(),
        i if i == n - 1 => "dst".to_owned(),
        i => format!("uav{i}"),
    }
}

/// `n` nodes on a line, GCS endpoints, one transaction at [`CHAIN_START_S`].
/// `behaviors` assigns a behaviour to the intermediary at each listed position.
pub fn chain_scenario(n: usize, behaviors: &[(usize, Behavior)], per_hop_s: f64, seed: u64) -> ScenarioConfig {
    assert!(n >= 2, "a chain needs two endpoints");
    let nodes = (0..n)
        .map(|i| NodeSpec {
            name: chain_node_name(n, i),
            is_gcs: i == 0 || i == n - 1,
            position: [i as f64 * CHAIN_SPACING_M, 0.0, 10.0],
            velocity: [0.0; 3],
            behavior: behaviors
                .iter()
                .find(|(p, _)| *p == i)
                .map_or(Behavior::Honest, |(_, b)| *b),
            key_seed: Some(1000 + i as u64),
        })
        .collect();
    let horizon_s = CHAIN_START_S + (n - 1) as f64 * per_hop_s + 5.0;
    ScenarioConfig {
        per_hop_delay_s: per_hop_s,
        // Rounded to whole milliseconds so the file form reads back exactly.
        horizon_s: (horizon_s * 1000.0).round() / 1000.0,
        seed,
        nodes,
        actions: vec![ScriptedAction {
            at_s: CHAIN_START_S,
            action: Command::StartTransaction {
                source: "src".into(),
                dest: "dst".into(),
                plaintext: format!("chain of {n}"),
            },
        }],
        ..ScenarioConfig::default()
    }
}

/// Scenario for one sweep row: drop at route position `x`.
pub fn table2_scenario(row: &Table2Row, mode: Table2Mode) -> ScenarioConfig {
    chain_scenario(row.n, &[(row.x, Behavior::DropAtHop(row.x as u32))], mode.per_hop_s(row), 0)
}

/// File name of a bundled sweep scenario.
pub fn table2_file_name(index: usize, mode: Table2Mode) -> String {
    format!("table2-{}-row{}.toml", mode.slug(), index + 1)
}

const BUNDLED_CONSTANT: [&str; 5] = [
    include_str!("../../scenarios/table2-constant-row1.toml"),
    include_str!("../../scenarios/table2-constant-row2.toml"),
    include_str!("../../scenarios/table2-constant-row3.toml"),
    include_str!("../../scenarios/table2-constant-row4.toml"),
    include_str!("../../scenarios/table2-constant-row5.toml"),
];

const BUNDLED_PER_ROW: [&str; 5] = [
    include_str!("../../scenarios/table2-per-row-row1.toml"),
    include_str!("../../scenarios/table2-per-row-row2.toml"),
    include_str!("../../scenarios/table2-per-row-row3.toml"),
    include_str!("../../scenarios/table2-per-row-row4.toml"),
    include_str!("../../scenarios/table2-per-row-row5.toml"),
];

/// Bundled scenario text for a sweep row.
pub fn bundled_table2(index: usize, mode: Table2Mode) -> &'static str {
    match mode {
        Table2Mode::Constant => BUNDLED_CONSTANT[index],
        Table2Mode::PerRow => BUNDLED_PER_ROW[index],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2RowResult {
    pub n: usize,
    pub x: usize,
    pub per_hop_s: f64,
    pub listed_delay_s: f64,
    pub expected_delay_s: f64,
    pub measured_delay_s: Option<f64>,
    pub culprit: Option<String>,
    pub expected_culprit: String,
    /// Mean receipt-to-receipt interval observed before the drop.
    pub measured_per_hop_s: Option<f64>,
}

impl Table2RowResult {
    pub fn matches(&self, tolerance_s: f64) -> bool {
        self.culprit.as_deref() == Some(self.expected_culprit.as_str())
            && self
                .measured_delay_s
                .is_some_and(|d| (d - self.expected_delay_s).abs() <= tolerance_s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2ModeReport {
    pub mode: Table2Mode,
    pub rows: Vec<Table2RowResult>,
    /// Mean over rows of each row's measured per-hop delay.
    pub average_per_hop_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Report {
    pub constant: Table2ModeReport,
    pub per_row: Table2ModeReport,
}

/// Writes the ten sweep scenarios into `dir`, returning the paths.
pub fn write_table2_scenarios(dir: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for mode in [Table2Mode::Constant, Table2Mode::PerRow] {
        for (i, row) in TABLE2_ROWS.iter().enumerate() {
            let path = dir.join(table2_file_name(i, mode));
            let header = format!(
                "# Detection sweep row {}: {} nodes, drop after {} hops, {} s per hop.\n\n",
                i + 1,
                row.n,
                row.x,
                mode.per_hop_s(row)
            );
            std::fs::write(&path, header + &table2_scenario(row, mode).to_toml())?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Runs one sweep row from its scenario text.
pub fn run_table2_row(row: &Table2Row, text: &str) -> Result<Table2RowResult, EngineError> {
    let config = load_scenario(text)?;
    let per_hop_s = config.per_hop_delay_s;
    let mut engine = Engine::new(config)?;
    engine.run_to_horizon();
    let report = engine.metrics_report();
    let tx = report.transactions.first();
    let culprit = tx
        .and_then(|t| t.culprit)
        .and_then(|a| engine.nodes().iter().find(|n| n.address == a))
        .map(|n| n.name.clone());
    Ok(Table2RowResult {
        n: row.n,
        x: row.x,
        per_hop_s,
        listed_delay_s: row.listed_delay_s,
        expected_delay_s: (row.n - 1 - row.x) as f64 * per_hop_s,
        measured_delay_s: tx.and_then(|t| t.detection_delay_s),
        culprit,
        expected_culprit: chain_node_name(row.n, row.x),
        measured_per_hop_s: tx.and_then(|t| t.per_hop_avg_s),
    })
}

pub fn sweep_mode(mode: Table2Mode) -> Result<Table2ModeReport, EngineError> {
    let rows = TABLE2_ROWS
        .iter()
        .enumerate()
        .map(|(i, row)| run_table2_row(row, bundled_table2(i, mode)))
        .collect::<Result<Vec<_>, _>>()?;
    let per_hop: Vec<f64> = rows.iter().filter_map(|r| r.measured_per_hop_s).collect();
    let average_per_hop_s = (per_hop.len() == rows.len()).then(|| per_hop.iter().sum::<f64>() / per_hop.len() as f64);
    Ok(Table2ModeReport { mode, rows, average_per_hop_s })
}

/// Runs both readings of the sweep from the bundled scenarios.
pub fn sweep_table2() -> Result<Table2Report, EngineError> {
    Ok(Table2Report {
        constant: sweep_mode(Table2Mode::Constant)?,
        per_row: sweep_mode(Table2Mode::PerRow)?,
    })
}
