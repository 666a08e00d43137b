use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

/// Column-oriented CSV: header names, then cells by column. Blank cells are
/// kept as empty strings.
pub struct Columns {
    pub names: Vec<String>,
    pub cells: BTreeMap<String, Vec<String>>,
}

impl Columns {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_path(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut cells: BTreeMap<String, Vec<String>> = names.iter().map(|n| (n.clone(), Vec::new())).collect();
        for row in r.records() {
            let row = row?;
            for (i, name) in names.iter().enumerate() {
                cells.get_mut(name).expect("named").push(row.get(i).unwrap_or("").to_string());
            }
        }
        Ok(Self { names, cells })
    }

    pub fn text(&self, name: &str) -> Result<&[String]> {
        self.cells
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| anyhow!("no column {name:?}; have {}", self.names.join(", ")))
    }

    /// Non-blank cells of `name` parsed as numbers.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        self.text(name)?
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_empty())
            .map(|(i, s)| s.parse().map_err(|_| anyhow!("{name} row {}: {s:?} is not a number", i + 1)))
            .collect()
    }

    /// Two numeric columns restricted to rows where both are present.
    pub fn paired(&self, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let (a, b) = (self.text(x)?, self.text(y)?);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, (u, v)) in a.iter().zip(b).enumerate() {
            if u.is_empty() || v.is_empty() {
                continue;
            }
            let parse = |s: &str, col: &str| s.parse::<f64>().map_err(|_| anyhow!("{col} row {}: {s:?} is not a number", i + 1));
            xs.push(parse(u, x)?);
            ys.push(parse(v, y)?);
        }
        Ok((xs, ys))
    }

    /// Every column as a row of non-negative integers, read row-wise.
    pub fn count_rows(&self) -> Result<Vec<Vec<u64>>> {
        let n = self.cells.values().next().map_or(0, Vec::len);
        if n == 0 {
            bail!("table has no rows");
        }
        (0..n)
            .map(|i| {
                self.names
                    .iter()
                    .map(|c| {
                        let s = &self.cells[c][i];
                        s.parse::<u64>().map_err(|_| anyhow!("{c} row {}: {s:?} is not a count", i + 1))
                    })
                    .collect()
            })
            .collect()
    }
}
