//! Multi-method comparison tables: per (noise, seed, region) reconstructed
//! values with absolute and relative errors, plus per-noise average rows.

use std::collections::BTreeMap;

use recon_core::objectives::Method;
use recon_core::{Error, Result};

/// One method's reconstructed value and errors in a table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableCell {
    pub value: f64,
    pub abs_err: f64,
    pub rel_err: f64,
}

/// Row key: noise level, seed, and subregion index.
pub type RowKey = (u64, u64, usize);

/// Comparison table over the (noise, seed) grid of one scenario.
#[derive(Debug, Clone, Default)]
pub struct ComparisonTable {
    pub methods: Vec<Method>,
    pub exact: Vec<f64>,
    /// `cells[(delta_bits, seed, region)][method]`
    pub cells: BTreeMap<RowKey, BTreeMap<Method, TableCell>>,
    /// `averages[(delta_bits, seed)][method] = (avg_abs, avg_rel)`
    pub averages: BTreeMap<(u64, u64), BTreeMap<Method, (f64, f64)>>,
}

fn delta_key(delta: f64) -> u64 {
    delta.to_bits()
}

impl ComparisonTable {
    pub fn new(methods: Vec<Method>, exact: Vec<f64>) -> Self {
        ComparisonTable { methods, exact, ..Default::default() }
    }

    /// Inserts one run's per-region values, recomputing errors against the
    /// stored exact values.
    pub fn insert_run(
        &mut self,
        method: Method,
        delta: f64,
        seed: u64,
        region_values: &[f64],
    ) -> Result<()> {
        if region_values.len() != self.exact.len() {
            return Err(Error::invalid(format!(
                "run reports {} regions, table has {}",
                region_values.len(),
                self.exact.len()
            )));
        }
        let mut abs_sum = 0.0;
        let mut rel_sum = 0.0;
        for (r, (&v, &e)) in region_values.iter().zip(&self.exact).enumerate() {
            let abs = (v - e).abs();
            let rel = if e != 0.0 { abs / e.abs() } else { abs };
            abs_sum += abs;
            rel_sum += rel;
            self.cells
                .entry((delta_key(delta), seed, r))
                .or_default()
                .insert(method, TableCell { value: v, abs_err: abs, rel_err: rel });
        }
        let n = self.exact.len() as f64;
        self.averages
            .entry((delta_key(delta), seed))
            .or_default()
            .insert(method, (abs_sum / n, rel_sum / n));
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,seed,region,exact");
        for m in &self.methods {
            s.push_str(&format!(",{0}_value,{0}_abs_err,{0}_rel_err", m.name()));
        }
        s.push('\n');
        let mut groups: Vec<(u64, u64)> =
            self.averages.keys().copied().collect();
        groups.sort_by(|a, b| {
            f64::from_bits(a.0)
                .total_cmp(&f64::from_bits(b.0))
                .then(a.1.cmp(&b.1))
        });
        for (dbits, seed) in groups {
            let delta = f64::from_bits(dbits);
            for r in 0..self.exact.len() {
                s.push_str(&format!("{delta},{seed},{r},{}", self.exact[r]));
                let row = self.cells.get(&(dbits, seed, r));
                for m in &self.methods {
                    match row.and_then(|c| c.get(m)) {
                        Some(cell) => s.push_str(&format!(
                            ",{},{},{}",
                            cell.value, cell.abs_err, cell.rel_err
                        )),
                        None => s.push_str(",,,"),
                    }
                }
                s.push('\n');
            }
            // Average row aligned with the abs/rel columns.
            s.push_str(&format!("{delta},{seed},avg,"));
            for m in &self.methods {
                match self.averages.get(&(dbits, seed)).and_then(|a| a.get(m)) {
                    Some((abs, rel)) => s.push_str(&format!(",,{abs},{rel}")),
                    None => s.push_str(",,,"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Parses a CSV produced by [`ComparisonTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::invalid("empty table"))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 4 || columns[..4] != ["delta", "seed", "region", "exact"] {
            return Err(Error::invalid("unexpected table header"));
        }
        let mut methods = Vec::new();
        let mut c = 4;
        while c < columns.len() {
            let name = columns[c]
                .strip_suffix("_value")
                .ok_or_else(|| Error::invalid("unexpected method column"))?;
            methods.push(name.parse::<Method>()?);
            c += 3;
        }
        let mut table = ComparisonTable::new(methods.clone(), Vec::new());
        let mut exact: BTreeMap<usize, f64> = BTreeMap::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let delta: f64 = fields[0].parse().map_err(|_| Error::invalid("bad delta"))?;
            let seed: u64 = fields[1].parse().map_err(|_| Error::invalid("bad seed"))?;
            if fields[2] == "avg" {
                for (k, m) in methods.iter().enumerate() {
                    let abs = fields[5 + 3 * k];
                    let rel = fields[6 + 3 * k];
                    if !abs.is_empty() {
                        table
                            .averages
                            .entry((delta_key(delta), seed))
                            .or_default()
                            .insert(
                                *m,
                                (
                                    abs.parse().map_err(|_| Error::invalid("bad avg"))?,
                                    rel.parse().map_err(|_| Error::invalid("bad avg"))?,
                                ),
                            );
                    }
                }
                continue;
            }
            let region: usize =
                fields[2].parse().map_err(|_| Error::invalid("bad region"))?;
            exact.insert(
                region,
                fields[3].parse().map_err(|_| Error::invalid("bad exact"))?,
            );
            for (k, m) in methods.iter().enumerate() {
                let value = fields[4 + 3 * k];
                if value.is_empty() {
                    continue;
                }
                let cell = TableCell {
                    value: value.parse().map_err(|_| Error::invalid("bad value"))?,
                    abs_err: fields[5 + 3 * k]
                        .parse()
                        .map_err(|_| Error::invalid("bad abs"))?,
                    rel_err: fields[6 + 3 * k]
                        .parse()
                        .map_err(|_| Error::invalid("bad rel"))?,
                };
                table
                    .cells
                    .entry((delta_key(delta), seed, region))
                    .or_default()
                    .insert(*m, cell);
            }
        }
        table.exact = exact.into_values().collect();
        Ok(table)
    }

    /// Internal consistency: every stored error must match a recomputation
    /// from the value and the exact coefficient to 1e-12.
    pub fn verify_errors(&self) -> Result<()> {
        for (&(_, _, region), row) in &self.cells {
            let e = self.exact[region];
            for (m, cell) in row {
                let abs = (cell.value - e).abs();
                let rel = if e != 0.0 { abs / e.abs() } else { abs };
                if (abs - cell.abs_err).abs() > 1e-12 || (rel - cell.rel_err).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "stored errors for {} in region {region} are inconsistent",
                        m.name()
                    )));
                }
            }
        }
        Ok(())
    }
}
