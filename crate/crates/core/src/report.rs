//! Comparison tables and plot-ready CSV.
//!
//! Cells read `AA.AA ± C.CC`: mean accuracy and 95% halfwidth in percent,
//! rounded half to even at two decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{CharacterizationTable, Classifier, EvalSummary, PipelineConfig};

/// Rounds `value * 100` to two decimals, ties to even.
///
/// Works on the shortest decimal representation of the percentage, so a
/// fraction such as `0.9651` is treated as exactly `96.51`.
pub fn percent_2dp(value: f64) -> String {
    let pct = value * 100.0;
    if !pct.is_finite() {
        return format!("{pct}");
    }
    // 12 significant digits strip the binary noise introduced by the * 100
    let text = format!("{:.*e}", 11, pct);
    let (mantissa, exp) = text.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    // value = 0.d1d2... * 10^(exp + 1); keep digits down to 10^-2
    let keep = exp + 1 + 2;
    let scaled: u128 = if keep <= 0 {
        // leading digit sits below 10^-2: only 0.005 < |pct| < 0.01 rounds up
        let rest_nonzero = digits.bytes().skip(1).any(|b| b != b'0');
        let d = digits.as_bytes()[0];
        u128::from(keep == 0 && (d > b'5' || (d == b'5' && rest_nonzero)))
    } else {
        let keep = keep as usize;
        let (head, tail) = if keep >= digits.len() {
            (format!("{digits:0<keep$}"), String::new())
        } else {
            (digits[..keep].to_string(), digits[keep..].to_string())
        };
        let mut n: u128 = head.parse().unwrap();
        let first = tail.as_bytes().first().copied().unwrap_or(b'0');
        let rest_nonzero = tail.bytes().skip(1).any(|b| b != b'0');
        if first > b'5' || (first == b'5' && (rest_nonzero || n % 2 == 1)) {
            n += 1;
        }
        n
    };
    let sign = if negative && scaled != 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", scaled / 100, scaled % 100)
}

pub fn format_cell(mean: f64, halfwidth: f64) -> String {
    format!("{} ± {}", percent_2dp(mean), percent_2dp(halfwidth))
}

/// Short row label such as `L21 pca512 mahalanobis knn5`.
pub fn method_label(c: &PipelineConfig) -> String {
    let classifier = match c.classifier {
        Classifier::Knn { k } => format!("knn{k}"),
        Classifier::Centroid => "centroid".into(),
    };
    let metric = serde_json::to_value(c.metric).unwrap();
    format!(
        "L{} {} {} {}",
        c.layer_id,
        c.reduction.tag(),
        metric.as_str().unwrap(),
        classifier
    )
}

/// Everything in a config except the episode grid (way, shot, seed, count).
fn method_key(c: &PipelineConfig) -> String {
    let mut v = serde_json::to_value(c).unwrap();
    let sampler = v["sampler"].as_object_mut().unwrap();
    for field in ["way", "shot", "master_seed", "episode_count"] {
        sampler.remove(field);
    }
    v.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    /// `dataset way-shot` headers, e.g. `mini 5w5s`.
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub method_key: String,
    /// One entry per column, `None` when that combination was not run.
    pub cells: Vec<Option<String>>,
}

/// Method rows by dataset/shot columns.
///
/// Rows are ordered by their canonical configuration text and columns by
/// dataset, way and shot. Identical summaries for one cell collapse into one;
/// differing ones are an error.
pub fn generate_report(summaries: &[EvalSummary]) -> Result<ComparisonTable> {
    if summaries.is_empty() {
        return Err(Error::InsufficientData("no summaries to report".into()));
    }
    let column_of = |s: &EvalSummary| (s.dataset.clone(), s.config.sampler.way, s.config.sampler.shot);
    let columns: BTreeSet<(String, usize, usize)> = summaries.iter().map(column_of).collect();
    let columns: Vec<_> = columns.into_iter().collect();
    let mut rows: BTreeMap<String, (String, Vec<Option<&EvalSummary>>)> = BTreeMap::new();
    for s in summaries {
        let key = method_key(&s.config);
        let col = columns.iter().position(|c| *c == column_of(s)).unwrap();
        let entry = rows
            .entry(key)
            .or_insert_with(|| (method_label(&s.config), vec![None; columns.len()]));
        match entry.1[col] {
            // repeated runs of one configuration agree apart from timing
            Some(prev) if prev.without_timing() == s.without_timing() => {}
            Some(_) => {
                return Err(Error::invalid(format!(
                    "conflicting summaries for {} on {} {}w{}s",
                    entry.0, columns[col].0, columns[col].1, columns[col].2
                )))
            }
            None => entry.1[col] = Some(s),
        }
    }
    Ok(ComparisonTable {
        columns: columns.iter().map(|(d, w, k)| format!("{d} {w}w{k}s")).collect(),
        rows: rows
            .into_iter()
            .map(|(method_key, (method, cells))| ComparisonRow {
                method,
                method_key,
                cells: cells
                    .into_iter()
                    .map(|c| c.map(|s| format_cell(s.mean_accuracy, s.ci_halfwidth_95)))
                    .collect(),
            })
            .collect(),
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for c in &self.columns {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&csv_field(&r.method));
            for c in &r.cells {
                out.push(',');
                out.push_str(&csv_field(c.as_deref().unwrap_or("")));
            }
            out.push('\n');
        }
        out
    }

    /// Space-padded columns; missing cells show `-`.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = vec![std::iter::once("method".to_string())
            .chain(self.columns.iter().cloned())
            .collect()];
        for r in &self.rows {
            grid.push(
                std::iter::once(r.method.clone())
                    .chain(r.cells.iter().map(|c| c.clone().unwrap_or_else(|| "-".into())))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|row| row[j].chars().count()).max().unwrap())
            .collect();
        let mut out = String::new();
        for row in &grid {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (cell, &w))| {
                    let pad = w - cell.chars().count();
                    if j == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        let txt = dir.join(format!("{stem}.txt"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))?;
        Ok((csv, txt))
    }
}

/// Long-format `layer,accuracy,fit_value` rows; `fit_value` is empty without a fit.
pub fn layer_curve_csv(table: &CharacterizationTable) -> String {
    let mut out = String::from("layer,accuracy,fit_value\n");
    for l in &table.layers {
        let fit = table
            .fit
            .map(|f| f.eval(f64::from(l.layer_id)).to_string())
            .unwrap_or_default();
        writeln!(out, "{},{},{}", l.layer_id, l.accuracy, fit).unwrap();
    }
    out
}
