//! Mutual information and independence statistics between two labelings of
//! the same items.

use std::collections::BTreeMap;
use std::io::Read;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{FsnError, Result};

/// Contingency counts `n_ij` between a row labeling and a column labeling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointLabelCounts {
    counts: Vec<Vec<u64>>,
    row_labels: Vec<String>,
    col_labels: Vec<String>,
}

impl JointLabelCounts {
    pub fn new(counts: Vec<Vec<u64>>, row_labels: Vec<String>, col_labels: Vec<String>) -> Result<Self> {
        if counts.len() != row_labels.len() {
            return Err(FsnError::Config(format!(
                "{} count rows but {} row labels",
                counts.len(),
                row_labels.len()
            )));
        }
        for row in &counts {
            if row.len() != col_labels.len() {
                return Err(FsnError::DimensionMismatch {
                    expected: col_labels.len(),
                    found: row.len(),
                });
            }
        }
        let table = Self {
            counts,
            row_labels,
            col_labels,
        };
        if table.total() == 0 {
            return Err(FsnError::Empty("contingency table has zero total count"));
        }
        Ok(table)
    }

    /// Unlabelled table; rows and columns are named by index.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let rows = (0..counts.len()).map(|i| i.to_string()).collect();
        let cols = (0..counts.first().map_or(0, Vec::len))
            .map(|i| i.to_string())
            .collect();
        Self::new(counts, rows, cols)
    }

    /// Cross-tabulates `(row label, column label)` pairs. Labels are ordered
    /// lexicographically.
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut cells: BTreeMap<(String, String), u64> = BTreeMap::new();
        let mut rows = BTreeMap::new();
        let mut cols = BTreeMap::new();
        for (a, b) in pairs {
            let (a, b) = (a.into(), b.into());
            rows.insert(a.clone(), ());
            cols.insert(b.clone(), ());
            *cells.entry((a, b)).or_default() += 1;
        }
        let row_labels: Vec<String> = rows.into_keys().collect();
        let col_labels: Vec<String> = cols.into_keys().collect();
        let counts = row_labels
            .iter()
            .map(|r| {
                col_labels
                    .iter()
                    .map(|c| cells.get(&(r.clone(), c.clone())).copied().unwrap_or(0))
                    .collect()
            })
            .collect();
        Self::new(counts, row_labels, col_labels)
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let counts = (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).collect())
            .collect();
        Self {
            counts,
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
        }
    }
}

/// Shannon entropy in bits of a count vector.
pub fn entropy_bits(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Plug-in mutual information in bits, with `0 · log 0 = 0`.
pub fn mutual_information(j: &JointLabelCounts) -> f64 {
    let n = j.total() as f64;
    let rows = j.row_totals();
    let cols = j.col_totals();
    let mut mi = 0.0;
    for (i, row) in j.counts.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let p = count as f64 / n;
            let expected = (rows[i] as f64 / n) * (cols[c] as f64 / n);
            mi += p * (p / expected).log2();
        }
    }
    // round-off can leave a tiny negative value for independent tables
    mi.max(0.0)
}

/// `max_ij |p_ij - p_i· p_·j|`.
pub fn independence_gap(j: &JointLabelCounts) -> f64 {
    let n = j.total() as f64;
    let rows = j.row_totals();
    let cols = j.col_totals();
    let mut gap: f64 = 0.0;
    for (i, row) in j.counts.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let p = count as f64 / n;
            let expected = (rows[i] as f64 / n) * (cols[c] as f64 / n);
            gap = gap.max((p - expected).abs());
        }
    }
    gap
}

/// Per-class item count and concentration of a binary secondary label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub class: String,
    pub count: u64,
    pub concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalConcentrationTable {
    rows: Vec<ConcentrationRow>,
}

impl MarginalConcentrationTable {
    pub fn new(rows: Vec<ConcentrationRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(FsnError::Empty("concentration table"));
        }
        for r in &rows {
            if r.count == 0 {
                return Err(FsnError::Config(format!("class '{}' has count 0", r.class)));
            }
            if !(0.0..=1.0).contains(&r.concentration) {
                return Err(FsnError::Config(format!(
                    "class '{}' has concentration {} outside [0, 1]",
                    r.class, r.concentration
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ConcentrationRow] {
        &self.rows
    }

    /// Parses `class,count,positive_concentration` CSV (header required).
    pub fn from_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(input);
        let mut rows = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| FsnError::Parse {
                line,
                message: e.to_string(),
            })?;
            if record.len() != 3 {
                return Err(FsnError::Parse {
                    line,
                    message: format!("expected 3 columns, found {}", record.len()),
                });
            }
            rows.push(ConcentrationRow {
                class: record[0].to_string(),
                count: parse_cell(&record[1], line)?,
                concentration: parse_cell(&record[2], line)?,
            });
        }
        Self::new(rows)
    }
}

fn parse_cell<T: FromStr>(cell: &str, line: usize) -> Result<T> {
    cell.trim().parse().map_err(|_| FsnError::Parse {
        line,
        message: format!("cannot parse '{cell}'"),
    })
}

/// Rebuilds the class × {positive, negative} contingency table. Positive
/// counts are `count × concentration` rounded half-up.
pub fn joint_from_concentrations(t: &MarginalConcentrationTable) -> JointLabelCounts {
    let counts = t
        .rows
        .iter()
        .map(|r| {
            let positive = ((r.count as f64 * r.concentration + 0.5).floor() as u64).min(r.count);
            vec![positive, r.count - positive]
        })
        .collect();
    JointLabelCounts {
        counts,
        row_labels: t.rows.iter().map(|r| r.class.clone()).collect(),
        col_labels: vec!["positive".into(), "negative".into()],
    }
}

/// Reads a two-column label file (header row, then one item per line).
pub fn read_label_pairs<R: Read>(input: R) -> Result<JointLabelCounts> {
    let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(input);
    let mut pairs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| FsnError::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(FsnError::Parse {
                line,
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        pairs.push((record[0].to_string(), record[1].to_string()));
    }
    if pairs.is_empty() {
        return Err(FsnError::Parse {
            line: 1,
            message: "no label rows".into(),
        });
    }
    JointLabelCounts::from_pairs(pairs)
}

/// The secondary label sets shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Fruits with a visible stem vs. without.
    StemNoStem,
    /// Bird images with the back visible vs. not.
    BackNoBack,
    /// Dog images with one dog vs. several.
    OneMany,
}

impl Fixture {
    pub const ALL: [Fixture; 3] = [Fixture::StemNoStem, Fixture::BackNoBack, Fixture::OneMany];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::StemNoStem => "stem-no-stem",
            Fixture::BackNoBack => "back-no-back",
            Fixture::OneMany => "one-many",
        }
    }

    pub fn csv(self) -> &'static str {
        match self {
            Fixture::StemNoStem => include_str!("../data/stem_no_stem.csv"),
            Fixture::BackNoBack => include_str!("../data/back_no_back.csv"),
            Fixture::OneMany => include_str!("../data/one_many.csv"),
        }
    }

    /// Published mutual information (bits) between the original class labels
    /// and this label set.
    pub fn reference_bits(self) -> f64 {
        match self {
            Fixture::StemNoStem => 0.031,
            Fixture::BackNoBack => 0.043,
            Fixture::OneMany => 0.001,
        }
    }

    pub fn table(self) -> MarginalConcentrationTable {
        MarginalConcentrationTable::from_csv(self.csv().as_bytes()).expect("bundled fixture parses")
    }
}

impl FromStr for Fixture {
    type Err = FsnError;

    fn from_str(s: &str) -> Result<Self> {
        Fixture::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| FsnError::Config(format!("unknown fixture '{s}'")))
    }
}

/// Reported values with no published underlying assignment; kept for
/// reference only.
pub const UNREPRODUCED_REFERENCES: [(&str, f64); 2] = [("random-binary", 0.015), ("first-letter", 2.318)];
