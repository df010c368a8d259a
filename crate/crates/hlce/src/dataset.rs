//! Combined experimental/observational panel data.
//!
//! A [`PanelDataset`] holds rows from both data sources: experimental rows
//! (`G = E`) carry a short-term outcome only, observational rows (`G = O`)
//! carry both the short- and the long-term outcome. The type is immutable
//! after construction and validated so that downstream code can rely on the
//! positivity proxy (both groups present, both arms present within each
//! group) without re-checking.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::seeds;

/// Data source indicator: experimental or observational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// Short-term experimental data; long-term outcome unobserved.
    E,
    /// Long-term observational data; both outcomes observed.
    O,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::E => write!(f, "E"),
            Group::O => write!(f, "O"),
        }
    }
}

/// One unit of the combined panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub g: Group,
    /// Treatment arm, 0 or 1.
    pub a: u8,
    /// Covariates, length `d`.
    pub x: Vec<f64>,
    /// Short-term outcome.
    pub s: f64,
    /// Long-term outcome; present exactly when `g = O`.
    pub y: Option<f64>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty; at least one row is required")]
    Empty,
    #[error("covariate dimension must be at least 1")]
    NoCovariates,
    #[error("row {row}: covariate length {got} does not match dimension {want}")]
    DimensionMismatch { row: usize, got: usize, want: usize },
    #[error("malformed header: expected `g,a,s,y,x0,...,x{{d-1}}`, got `{0}`")]
    MalformedHeader(String),
    #[error("row {row}: expected {want} fields, got {got}")]
    FieldCount { row: usize, want: usize, got: usize },
    #[error("row {row}: bad group label `{got}` (expected E or O)")]
    BadGroup { row: usize, got: String },
    #[error("row {row}: non-binary treatment `{got}`")]
    NonBinaryTreatment { row: usize, got: String },
    #[error("y present for experimental row {row}")]
    YPresentForExperimental { row: usize },
    #[error("y missing for observational row {row}")]
    YMissingForObservational { row: usize },
    #[error("row {row}: cannot parse field `{field}` from `{got}`")]
    Parse { row: usize, field: String, got: String },
    #[error("row {row}: non-finite value in field `{field}`")]
    NonFinite { row: usize, field: String },
    #[error("missing stratum (g={g}, a={a}): both groups and both arms must be non-empty")]
    MissingStratum { g: Group, a: u8 },
    #[error("stratum (g={g}, a={a}) has {count} rows; too small to populate all three parts")]
    StratumTooSmall { g: Group, a: u8, count: usize },
    #[error("fractions must be positive and sum to 1, got ({0}, {1}, {2})")]
    BadFractions(f64, f64, f64),
    #[error("empty subgroup for filter g={g}, a={a}")]
    EmptySubgroup { g: String, a: String },
    #[error("truth sidecar: malformed header `{0}`")]
    TruthHeader(String),
    #[error("truth sidecar row {row}: {message}")]
    TruthRow { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Validated, immutable combined panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    d: usize,
    rows: Vec<Row>,
}

impl PanelDataset {
    /// Builds a dataset from rows, enforcing all invariants: n >= 1, d >= 1,
    /// consistent dimensions, finite values, y present iff g = O, and the
    /// positivity proxy (both groups and both arms within each group
    /// non-empty).
    pub fn from_rows(rows: Vec<Row>) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::Empty);
        }
        let d = rows[0].x.len();
        if d == 0 {
            return Err(DatasetError::NoCovariates);
        }
        let mut stratum_counts = [0usize; 4];
        for (i, row) in rows.iter().enumerate() {
            let rownum = i + 1;
            if row.x.len() != d {
                return Err(DatasetError::DimensionMismatch {
                    row: rownum,
                    got: row.x.len(),
                    want: d,
                });
            }
            if row.a > 1 {
                return Err(DatasetError::NonBinaryTreatment {
                    row: rownum,
                    got: row.a.to_string(),
                });
            }
            for (j, v) in row.x.iter().enumerate() {
                if !v.is_finite() {
                    return Err(DatasetError::NonFinite {
                        row: rownum,
                        field: format!("x{j}"),
                    });
                }
            }
            if !row.s.is_finite() {
                return Err(DatasetError::NonFinite {
                    row: rownum,
                    field: "s".into(),
                });
            }
            match (row.g, row.y) {
                (Group::E, Some(_)) => {
                    return Err(DatasetError::YPresentForExperimental { row: rownum })
                }
                (Group::O, None) => {
                    return Err(DatasetError::YMissingForObservational { row: rownum })
                }
                (Group::O, Some(y)) if !y.is_finite() => {
                    return Err(DatasetError::NonFinite {
                        row: rownum,
                        field: "y".into(),
                    });
                }
                _ => {}
            }
            stratum_counts[stratum_index(row.g, row.a)] += 1;
        }
        for (k, &count) in stratum_counts.iter().enumerate() {
            if count == 0 {
                let (g, a) = stratum_label(k);
                return Err(DatasetError::MissingStratum { g, a });
            }
        }
        Ok(Self { d, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Empirical group prior p(G=O), exactly (#O)/n.
    pub fn group_prior(&self) -> f64 {
        let n_o = self.rows.iter().filter(|r| r.g == Group::O).count();
        n_o as f64 / self.rows.len() as f64
    }

    /// Read-only view of the rows matching a (group, arm) filter; `None`
    /// matches anything. Fails on an empty result, which downstream fitting
    /// could not use anyway.
    pub fn subgroup(&self, g: Option<Group>, a: Option<u8>) -> Result<PanelView<'_>, DatasetError> {
        let rows: Vec<&Row> = self
            .rows
            .iter()
            .filter(|r| g.map_or(true, |g| r.g == g) && a.map_or(true, |a| r.a == a))
            .collect();
        if rows.is_empty() {
            return Err(DatasetError::EmptySubgroup {
                g: g.map_or("any".into(), |g| g.to_string()),
                a: a.map_or("any".into(), |a| a.to_string()),
            });
        }
        Ok(PanelView { d: self.d, rows })
    }

    /// Deterministic stratified train/validation/test split.
    ///
    /// Global part sizes are `round(n * f)` for validation and test with the
    /// remainder going to train; each part's quota is spread over the four
    /// (group, arm) strata by largest remainder so all strata stay populated
    /// whenever the quotas permit.
    pub fn split(
        &self,
        fractions: (f64, f64, f64),
        seed: u64,
    ) -> Result<(PanelDataset, PanelDataset, PanelDataset), DatasetError> {
        let parts = self.partition(&[fractions.0, fractions.1, fractions.2], seed)?;
        let mut iter = parts.into_iter();
        Ok((
            iter.next().unwrap(),
            iter.next().unwrap(),
            iter.next().unwrap(),
        ))
    }

    /// Stratified partition into `fractions.len()` datasets. Fractions must
    /// be positive and sum to 1; sizes are rounded with the remainder
    /// assigned to the first part.
    pub fn partition(
        &self,
        fractions: &[f64],
        seed: u64,
    ) -> Result<Vec<PanelDataset>, DatasetError> {
        let picks = self.partition_indices(fractions, seed)?;
        picks
            .into_iter()
            .map(|pick| {
                let rows: Vec<Row> = pick.iter().map(|&i| self.rows[i].clone()).collect();
                PanelDataset::from_rows(rows)
            })
            .collect()
    }

    /// Index-level stratified partition: original row indices per part, each
    /// sorted ascending.
    pub fn partition_indices(
        &self,
        fractions: &[f64],
        seed: u64,
    ) -> Result<Vec<Vec<usize>>, DatasetError> {
        let sum: f64 = fractions.iter().sum();
        if fractions.iter().any(|f| *f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            let mut padded = [0.0; 3];
            for (slot, f) in padded.iter_mut().zip(fractions) {
                *slot = *f;
            }
            return Err(DatasetError::BadFractions(padded[0], padded[1], padded[2]));
        }
        let n = self.rows.len();
        let n_parts = fractions.len();

        // Group row indices by stratum.
        let mut strata: [Vec<usize>; 4] = Default::default();
        for (i, row) in self.rows.iter().enumerate() {
            strata[stratum_index(row.g, row.a)].push(i);
        }
        for (k, idx) in strata.iter().enumerate() {
            if idx.len() < n_parts {
                let (g, a) = stratum_label(k);
                return Err(DatasetError::StratumTooSmall { g, a, count: idx.len() });
            }
        }

        // Global sizes: rounded for parts 1.., remainder to part 0.
        let mut part_sizes = vec![0usize; n_parts];
        let mut assigned = 0usize;
        for p in 1..n_parts {
            let size = (n as f64 * fractions[p]).round() as usize;
            part_sizes[p] = size;
            assigned += size;
        }
        part_sizes[0] = n - assigned;

        // Shuffle each stratum with its own stream so the draw does not
        // depend on the other strata.
        let mut shuffled: Vec<Vec<usize>> = Vec::with_capacity(4);
        for (k, idx) in strata.iter().enumerate() {
            let mut v = idx.clone();
            let mut rng = ChaCha12Rng::seed_from_u64(seeds::child_seed(seed, k as u64));
            v.shuffle(&mut rng);
            shuffled.push(v);
        }

        // Spread each part's quota over strata by largest remainder, walking
        // parts 1.. first and giving part 0 whatever remains per stratum.
        let m: Vec<usize> = shuffled.iter().map(Vec::len).collect();
        let mut remaining: Vec<usize> = m.clone();
        let mut alloc = vec![[0usize; 4]; n_parts];
        for p in 1..n_parts {
            let quota = part_sizes[p];
            let mut base = [0usize; 4];
            let mut rem: Vec<(f64, usize)> = Vec::with_capacity(4);
            let mut used = 0usize;
            for k in 0..4 {
                let ideal = m[k] as f64 * quota as f64 / n as f64;
                let b = (ideal.floor() as usize).min(remaining[k]);
                base[k] = b;
                used += b;
                rem.push((ideal - ideal.floor(), k));
            }
            // Hand out the leftover units by largest fractional remainder.
            rem.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut left = quota.saturating_sub(used);
            for &(_, k) in rem.iter().cycle().take(4 * (left + 1)) {
                if left == 0 {
                    break;
                }
                if remaining[k] > base[k] {
                    base[k] += 1;
                    left -= 1;
                }
            }
            // Keep every stratum represented when the quota permits.
            if quota >= 4 {
                for k in 0..4 {
                    if base[k] == 0 && remaining[k] > 0 {
                        if let Some(donor) = (0..4).filter(|&j| base[j] > 1).max_by_key(|&j| base[j])
                        {
                            base[donor] -= 1;
                            base[k] += 1;
                        }
                    }
                }
            }
            for k in 0..4 {
                alloc[p][k] = base[k];
                remaining[k] -= base[k];
            }
        }
        for k in 0..4 {
            alloc[0][k] = remaining[k];
        }
        // Every part must end up with every stratum, or it would violate the
        // positivity invariant of the emitted datasets.
        for part_alloc in &alloc {
            for (k, &count) in part_alloc.iter().enumerate() {
                if count == 0 {
                    let (g, a) = stratum_label(k);
                    return Err(DatasetError::StratumTooSmall { g, a, count: m[k] });
                }
            }
        }

        // Hand out shuffled stratum rows part by part, then restore original
        // row order within each part.
        let mut cursor = [0usize; 4];
        let mut picks: Vec<Vec<usize>> = vec![Vec::new(); n_parts];
        for p in 0..n_parts {
            for k in 0..4 {
                let take = alloc[p][k];
                picks[p].extend_from_slice(&shuffled[k][cursor[k]..cursor[k] + take]);
                cursor[k] += take;
            }
        }
        for pick in &mut picks {
            pick.sort_unstable();
        }
        Ok(picks)
    }

    /// Writes the dataset in the canonical CSV schema
    /// `g,a,s,y,x0,...,x{d-1}` with an empty y field on experimental rows.
    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// CSV text of the dataset; [`PanelDataset::write_csv`] writes exactly
    /// these bytes.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("g,a,s,y");
        for j in 0..self.d {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{},{},{},", row.g, row.a, row.s));
            if let Some(y) = row.y {
                out.push_str(&y.to_string());
            }
            for v in &row.x {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Loads and validates a dataset from the canonical CSV schema.
    pub fn load_csv(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    /// Parses the canonical CSV schema from a string.
    pub fn from_csv_str(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 5 || cols[0] != "g" || cols[1] != "a" || cols[2] != "s" || cols[3] != "y" {
            return Err(DatasetError::MalformedHeader(header.to_string()));
        }
        let d = cols.len() - 4;
        for (j, col) in cols[4..].iter().enumerate() {
            if *col != format!("x{j}") {
                return Err(DatasetError::MalformedHeader(header.to_string()));
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let rownum = i + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 4 {
                return Err(DatasetError::FieldCount {
                    row: rownum,
                    want: d + 4,
                    got: fields.len(),
                });
            }
            let g = match fields[0] {
                "E" => Group::E,
                "O" => Group::O,
                other => {
                    return Err(DatasetError::BadGroup {
                        row: rownum,
                        got: other.to_string(),
                    })
                }
            };
            let a = match fields[1] {
                "0" => 0u8,
                "1" => 1u8,
                other => {
                    return Err(DatasetError::NonBinaryTreatment {
                        row: rownum,
                        got: other.to_string(),
                    })
                }
            };
            let s = parse_finite(fields[2], rownum, "s")?;
            let y = match (g, fields[3].is_empty()) {
                (Group::E, true) => None,
                (Group::E, false) => {
                    return Err(DatasetError::YPresentForExperimental { row: rownum })
                }
                (Group::O, true) => {
                    return Err(DatasetError::YMissingForObservational { row: rownum })
                }
                (Group::O, false) => Some(parse_finite(fields[3], rownum, "y")?),
            };
            let mut x = Vec::with_capacity(d);
            for j in 0..d {
                x.push(parse_finite(fields[4 + j], rownum, &format!("x{j}"))?);
            }
            rows.push(Row { g, a, x, s, y });
        }
        Self::from_rows(rows)
    }
}

fn parse_finite(text: &str, row: usize, field: &str) -> Result<f64, DatasetError> {
    let v: f64 = text.parse().map_err(|_| DatasetError::Parse {
        row,
        field: field.to_string(),
        got: text.to_string(),
    })?;
    if !v.is_finite() {
        return Err(DatasetError::NonFinite {
            row,
            field: field.to_string(),
        });
    }
    Ok(v)
}

fn stratum_index(g: Group, a: u8) -> usize {
    match (g, a) {
        (Group::E, 0) => 0,
        (Group::E, _) => 1,
        (Group::O, 0) => 2,
        (Group::O, _) => 3,
    }
}

fn stratum_label(k: usize) -> (Group, u8) {
    match k {
        0 => (Group::E, 0),
        1 => (Group::E, 1),
        2 => (Group::O, 0),
        _ => (Group::O, 1),
    }
}

/// Read-only filtered view over a dataset's rows.
#[derive(Debug, Clone)]
pub struct PanelView<'a> {
    d: usize,
    rows: Vec<&'a Row>,
}

impl<'a> PanelView<'a> {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> &[&'a Row] {
        &self.rows
    }

    /// Row-major covariate matrix of the view.
    pub fn x_matrix(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.rows.len() * self.d);
        for row in &self.rows {
            x.extend_from_slice(&row.x);
        }
        x
    }

    pub fn s_vector(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.s).collect()
    }

    /// Long-term outcomes; panics if called on a view containing
    /// experimental rows, which never carry y.
    pub fn y_vector(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.y.expect("y requested from experimental row"))
            .collect()
    }

    pub fn a_vector(&self) -> Vec<f64> {
        self.rows.iter().map(|r| f64::from(r.a)).collect()
    }
}

/// Per-row ground truth emitted by the generators.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// True tau(x_i) per row.
    pub tau: Vec<f64>,
    /// Potential outcomes (s0, s1, y0, y1) per row, when the generator
    /// retains them.
    pub potentials: Option<Vec<[f64; 4]>>,
}

impl GroundTruth {
    pub fn n(&self) -> usize {
        self.tau.len()
    }

    /// Writes the sidecar schema `tau[,s0,s1,y0,y1]`, row-aligned with the
    /// dataset file.
    pub fn write_csv(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        match &self.potentials {
            None => {
                out.push_str("tau\n");
                for t in &self.tau {
                    out.push_str(&format!("{t}\n"));
                }
            }
            Some(pot) => {
                out.push_str("tau,s0,s1,y0,y1\n");
                for (t, p) in self.tau.iter().zip(pot) {
                    out.push_str(&format!("{t},{},{},{},{}\n", p[0], p[1], p[2], p[3]));
                }
            }
        }
        out
    }

    pub fn load_csv(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self, DatasetError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let with_potentials = match header {
            "tau" => false,
            "tau,s0,s1,y0,y1" => true,
            other => return Err(DatasetError::TruthHeader(other.to_string())),
        };
        let mut tau = Vec::new();
        let mut potentials = Vec::new();
        for (i, line) in lines.enumerate() {
            let rownum = i + 1;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let want = if with_potentials { 5 } else { 1 };
            if fields.len() != want {
                return Err(DatasetError::TruthRow {
                    row: rownum,
                    message: format!("expected {want} fields, got {}", fields.len()),
                });
            }
            let parse = |f: &str| -> Result<f64, DatasetError> {
                let v: f64 = f.parse().map_err(|_| DatasetError::TruthRow {
                    row: rownum,
                    message: format!("cannot parse `{f}`"),
                })?;
                if !v.is_finite() {
                    return Err(DatasetError::TruthRow {
                        row: rownum,
                        message: "non-finite value".into(),
                    });
                }
                Ok(v)
            };
            tau.push(parse(fields[0])?);
            if with_potentials {
                potentials.push([
                    parse(fields[1])?,
                    parse(fields[2])?,
                    parse(fields[3])?,
                    parse(fields[4])?,
                ]);
            }
        }
        Ok(GroundTruth {
            tau,
            potentials: if with_potentials { Some(potentials) } else { None },
        })
    }
}
