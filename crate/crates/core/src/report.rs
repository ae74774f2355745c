//! CSV metrics and PGM weight grids.
//!
//! Every CSV starts with a `#schema <name> v<version>` line followed by the
//! column header. Floats are written in shortest round-trip form so identical
//! runs give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::SynapseMatrix;
use crate::pipeline::{BatchRecord, MetricsRecord, RunSettings};

pub const SCHEMA_VERSION: u32 = 1;

pub const HISTORY_COLUMNS: [&str; 5] = ["batch", "connectivity", "pruned", "presentations", "levels"];
pub const SUMMARY_COLUMNS: [&str; 12] = [
    "mode",
    "seed",
    "n_exc",
    "threshold",
    "levels",
    "accuracy",
    "connectivity",
    "total_test_exc_spikes",
    "training_presentations",
    "labeled_neurons",
    "area_proxy",
    "config_hash",
];
pub const SWEEP_COLUMNS: [&str; 5] = ["threshold", "connectivity", "accuracy", "total_test_exc_spikes", "status"];
pub const COMPARE_COLUMNS: [&str; 8] = [
    "target",
    "threshold",
    "pruned_connectivity",
    "pruned_accuracy",
    "random_connectivity",
    "random_accuracy",
    "probes",
    "status",
];

/// One table: schema name, columns and rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &'static str, columns: &[&'static str]) -> Self {
        Self {
            schema,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells");
        format!("#schema {} v{SCHEMA_VERSION}\n{body}", self.schema)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn join_levels(levels: &[f64]) -> String {
    levels.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

pub fn history_table(history: &[BatchRecord]) -> Table {
    let mut t = Table::new("history", &HISTORY_COLUMNS);
    for h in history {
        t.push(vec![
            h.batch.to_string(),
            h.connectivity.to_string(),
            u8::from(h.pruned).to_string(),
            h.presentations.to_string(),
            join_levels(&h.levels),
        ]);
    }
    t
}

pub fn summary_row(settings: &RunSettings, m: &MetricsRecord, config_hash: u64) -> Vec<String> {
    let area = if m.connectivity > 0.0 { 1.0 / m.connectivity } else { f64::INFINITY };
    vec![
        settings.mode.to_string(),
        settings.seed.to_string(),
        settings.network.topology.n_exc.to_string(),
        settings.compression.pruning_threshold.to_string(),
        settings.compression.levels.to_string(),
        m.accuracy.to_string(),
        m.connectivity.to_string(),
        m.total_test_exc_spikes.to_string(),
        m.training_presentations.to_string(),
        m.labeled_neurons.to_string(),
        area.to_string(),
        format!("{config_hash:016x}"),
    ]
}

pub fn summary_table(settings: &RunSettings, m: &MetricsRecord, config_hash: u64) -> Table {
    let mut t = Table::new("summary", &SUMMARY_COLUMNS);
    t.push(summary_row(settings, m, config_hash));
    t
}

/// A grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Plain-text (P2) portable graymap, 255 levels, 28 values per line.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width) {
            for line in row.chunks(28) {
                let cells: Vec<String> = line.iter().map(u8::to_string).collect();
                s.push_str(&cells.join(" "));
                s.push('\n');
            }
        }
        s
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(self.to_pgm().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Tiles every neuron's input weights as a `side x side` patch into a grid
/// `ceil(sqrt(n_exc))` patches wide, scaled so the largest weight is 255.
/// Removed synapses and unused tiles are black.
pub fn weight_grid(synapses: &SynapseMatrix, side: usize) -> Result<GrayImage> {
    if side * side != synapses.n_input() {
        return Err(Error::ShapeMismatch {
            expected: side * side,
            actual: synapses.n_input(),
        });
    }
    let n = synapses.n_exc();
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols.max(1));
    let (width, height) = (cols * side, rows * side);
    let max = synapses
        .weights()
        .iter()
        .zip(synapses.removed())
        .filter(|(_, r)| !**r)
        .fold(0.0_f64, |m, (w, _)| m.max(*w));
    let mut pixels = vec![0u8; width * height];
    for j in 0..n {
        let (gx, gy) = ((j % cols) * side, (j / cols) * side);
        let col = synapses.column(j);
        let removed = &synapses.removed()[j * side * side..(j + 1) * side * side];
        for (i, (&w, &r)) in col.iter().zip(removed).enumerate() {
            let v = if r || max == 0.0 { 0.0 } else { (w / max * 255.0).round() };
            pixels[(gy + i / side) * width + gx + i % side] = v.clamp(0.0, 255.0) as u8;
        }
    }
    Ok(GrayImage { width, height, pixels })
}
