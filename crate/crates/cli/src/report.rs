//! Median / interquartile summaries of per-split tables.

use discharge_core::stats;

use crate::error::{CliError, Result};
use crate::formats::{num, Table};

/// Columns never summarized: audit stamps and identifiers.
const SKIP: [&str; 4] = ["seed", "config_hash", "split", "split_seed"];

/// One row per (group, numeric column): `n, median, q25, q75, iqr`.
/// Empty cells are ignored; columns with any non-numeric cell are skipped.
pub fn summarize(table: &Table, group_by: Option<&str>) -> Result<Table> {
    let group_col = match group_by {
        Some(g) => Some(table.column(g).ok_or_else(|| CliError::data(format!("no column named {g:?}")))?),
        None => None,
    };
    let numeric: Vec<usize> = (0..table.header.len())
        .filter(|&c| Some(c) != group_col && !SKIP.contains(&table.header[c].as_str()))
        .filter(|&c| table.rows.iter().all(|r| r[c].is_empty() || r[c].parse::<f64>().is_ok()))
        .collect();

    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (i, row) in table.rows.iter().enumerate() {
        let key = group_col.map(|c| row[c].clone()).unwrap_or_default();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => rows.push(i),
            None => groups.push((key, vec![i])),
        }
    }

    let mut header: Vec<&str> = Vec::new();
    if let Some(g) = group_by {
        header.push(g);
    }
    header.extend(["column", "n", "median", "q25", "q75", "iqr"]);
    let mut out = Table::new(&header);
    for (key, rows) in &groups {
        for &c in &numeric {
            let values: Vec<f64> = rows
                .iter()
                .filter_map(|&r| table.rows[r][c].parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .collect();
            let mut rec = Vec::new();
            if group_by.is_some() {
                rec.push(key.clone());
            }
            rec.push(table.header[c].clone());
            rec.push(values.len().to_string());
            match stats::summarize(&values) {
                Some(s) => rec.extend([num(s.median), num(s.q25), num(s.q75), num(s.q75 - s.q25)]),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            out.push(rec);
        }
    }
    Ok(out)
}
