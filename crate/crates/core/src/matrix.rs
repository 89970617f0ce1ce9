//! Activation and p-value matrices and their CSV file format.
//!
//! Both kinds share one text layout: an optional block of `#` comment lines,
//! a header row of node ids (optionally led by a `sample_id` column), then one
//! comma-separated row per sample. P-value files must carry `# z=<int>` in the
//! comment block so the grid `k/(z+1)` can be validated on load.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

const SAMPLE_ID_COLUMN: &str = "sample_id";

/// Dense activations, one row per sample and one column per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    sample_ids: Option<Vec<String>>,
    node_ids: Vec<String>,
}

impl ActivationMatrix {
    /// Builds a matrix from row-major values, validating every invariant.
    pub fn from_row_major(
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        node_ids: Vec<String>,
        sample_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        check_shape(rows, cols, values.len(), &node_ids, sample_ids.as_deref())?;
        for (idx, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: idx / cols + 1,
                    column: node_ids[idx % cols].clone(),
                    value: v,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            values,
            sample_ids,
            node_ids,
        })
    }

    /// Builds a matrix from nested rows with generated node ids `n0, n1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::Ragged {
                row: i + 1,
                line: i + 1,
                expected: cols,
                found: r.len(),
            });
        }
        let values = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), cols, values, default_node_ids(cols), None)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn sample_ids(&self) -> Option<&[String]> {
        self.sample_ids.as_deref()
    }

    /// Id of a row: the stored sample id, or its 0-based index.
    pub fn sample_label(&self, row: usize) -> String {
        match &self.sample_ids {
            Some(ids) => ids[row].clone(),
            None => row.to_string(),
        }
    }

    /// Copies the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        check_indices(rows, self.rows, "row")?;
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        let sample_ids = self
            .sample_ids
            .as_ref()
            .map(|ids| rows.iter().map(|&r| ids[r].clone()).collect());
        Self::from_row_major(
            rows.len(),
            self.cols,
            values,
            self.node_ids.clone(),
            sample_ids,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_activation_matrix(path)
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let table = Table::parse(reader)?;
        let rows = table.values.len();
        let cols = table.node_ids.len();
        let values = table.values.into_iter().flatten().collect();
        Self::from_row_major(rows, cols, values, table.node_ids, table.sample_ids)
    }
}

/// Empirical p-values on the grid `{1/(z+1), ..., 1}`.
///
/// Entries are stored as integer numerators `k` so that threshold
/// comparisons during scanning are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix {
    rows: usize,
    cols: usize,
    z: u32,
    ranks: Vec<u32>,
    sample_ids: Option<Vec<String>>,
    node_ids: Vec<String>,
}

impl PValueMatrix {
    /// Builds a matrix from row-major numerators `k`, each in `1..=z+1`.
    pub fn from_ranks(
        rows: usize,
        cols: usize,
        z: u32,
        ranks: Vec<u32>,
        node_ids: Vec<String>,
        sample_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if z == 0 {
            return Err(Error::Shape("z must be positive".into()));
        }
        check_shape(rows, cols, ranks.len(), &node_ids, sample_ids.as_deref())?;
        for (idx, &k) in ranks.iter().enumerate() {
            if k == 0 || k > z + 1 {
                return Err(Error::OffGrid {
                    row: idx / cols + 1,
                    column: node_ids[idx % cols].clone(),
                    value: k as f64 / (z as f64 + 1.0),
                    denominator: z as u64 + 1,
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            z,
            ranks,
            sample_ids,
            node_ids,
        })
    }

    /// Builds a matrix from real p-values, snapping each onto the `k/(z+1)`
    /// grid and rejecting values that are not on it.
    pub fn from_values(
        rows: usize,
        cols: usize,
        z: u32,
        values: &[f64],
        node_ids: Vec<String>,
        sample_ids: Option<Vec<String>>,
    ) -> Result<Self> {
        if z == 0 {
            return Err(Error::Shape("z must be positive".into()));
        }
        check_shape(rows, cols, values.len(), &node_ids, sample_ids.as_deref())?;
        let denom = z as f64 + 1.0;
        let mut ranks = Vec::with_capacity(values.len());
        for (idx, &v) in values.iter().enumerate() {
            let scaled = v * denom;
            let k = scaled.round();
            if !v.is_finite() || (scaled - k).abs() > 1e-6 || k < 1.0 || k > denom {
                return Err(Error::OffGrid {
                    row: idx / cols + 1,
                    column: node_ids[idx % cols].clone(),
                    value: v,
                    denominator: z as u64 + 1,
                });
            }
            ranks.push(k as u32);
        }
        Self::from_ranks(rows, cols, z, ranks, node_ids, sample_ids)
    }

    /// Nested-rows convenience constructor with generated node ids.
    pub fn from_rows(rows: &[Vec<f64>], z: u32) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(Error::Ragged {
                row: i + 1,
                line: i + 1,
                expected: cols,
                found: r.len(),
            });
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_values(rows.len(), cols, z, &values, default_node_ids(cols), None)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn z(&self) -> u32 {
        self.z
    }

    /// `z + 1`, the grid denominator.
    pub fn denominator(&self) -> u32 {
        self.z + 1
    }

    /// Grid numerator `k` of entry `(row, col)`.
    pub fn rank(&self, row: usize, col: usize) -> u32 {
        self.ranks[row * self.cols + col]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rank(row, col) as f64 / self.denominator() as f64
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    pub fn row_ranks(&self, row: usize) -> &[u32] {
        &self.ranks[row * self.cols..(row + 1) * self.cols]
    }

    /// All entries as reals, row-major.
    pub fn values(&self) -> Vec<f64> {
        let denom = self.denominator() as f64;
        self.ranks.iter().map(|&k| k as f64 / denom).collect()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn sample_ids(&self) -> Option<&[String]> {
        self.sample_ids.as_deref()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        check_indices(rows, self.rows, "row")?;
        let mut ranks = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            ranks.extend_from_slice(self.row_ranks(r));
        }
        let sample_ids = self
            .sample_ids
            .as_ref()
            .map(|ids| rows.iter().map(|&r| ids[r].clone()).collect());
        Self::from_ranks(
            rows.len(),
            self.cols,
            self.z,
            ranks,
            self.node_ids.clone(),
            sample_ids,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_pvalue_matrix(path)
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let table = Table::parse(reader)?;
        let z = table.z.ok_or(Error::MissingZ)?;
        let rows = table.values.len();
        let cols = table.node_ids.len();
        let values: Vec<f64> = table.values.into_iter().flatten().collect();
        Self::from_values(rows, cols, z, &values, table.node_ids, table.sample_ids)
    }
}

/// Anything that can be written in the shared matrix text format.
pub trait MatrixFile {
    fn write_to(&self, out: &mut dyn Write) -> io::Result<()>;
}

impl MatrixFile for ActivationMatrix {
    fn write_to(&self, out: &mut dyn Write) -> io::Result<()> {
        write_header(out, &self.node_ids, self.sample_ids.is_some())?;
        for r in 0..self.rows {
            let sample = self.sample_ids.as_ref().map(|ids| ids[r].as_str());
            write_row(out, sample, self.row(r).iter().copied())?;
        }
        Ok(())
    }
}

impl MatrixFile for PValueMatrix {
    fn write_to(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "# z={}", self.z)?;
        write_header(out, &self.node_ids, self.sample_ids.is_some())?;
        let denom = self.denominator() as f64;
        for r in 0..self.rows {
            let sample = self.sample_ids.as_ref().map(|ids| ids[r].as_str());
            write_row(
                out,
                sample,
                self.row_ranks(r).iter().map(|&k| k as f64 / denom),
            )?;
        }
        Ok(())
    }
}

pub fn load_activation_matrix(path: impl AsRef<Path>) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ActivationMatrix::read_from(BufReader::new(file))
}

pub fn load_pvalue_matrix(path: impl AsRef<Path>) -> Result<PValueMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    PValueMatrix::read_from(BufReader::new(file))
}

/// Writes `matrix` to `path` atomically (temporary file in the same
/// directory, then rename).
pub fn save_matrix(matrix: &dyn MatrixFile, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |out| matrix.write_to(out))
}

/// Writes a file through a temporary sibling and renames it into place.
pub fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        body(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Node ids `n0, n1, ...`.
pub fn default_node_ids(cols: usize) -> Vec<String> {
    (0..cols).map(|j| format!("n{j}")).collect()
}

pub(crate) fn check_indices(indices: &[usize], bound: usize, what: &str) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Shape(format!("{what} selection is empty")));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= bound) {
        return Err(Error::Shape(format!(
            "{what} index {bad} out of bounds ({bound})"
        )));
    }
    Ok(())
}

fn check_shape(
    rows: usize,
    cols: usize,
    len: usize,
    node_ids: &[String],
    sample_ids: Option<&[String]>,
) -> Result<()> {
    if rows == 0 {
        return Err(Error::Shape("matrix needs at least one row".into()));
    }
    if cols == 0 {
        return Err(Error::Shape("matrix needs at least one column".into()));
    }
    if len != rows * cols {
        return Err(Error::Shape(format!(
            "{len} values do not fill a {rows}x{cols} matrix"
        )));
    }
    if node_ids.len() != cols {
        return Err(Error::Shape(format!(
            "{} node ids for {cols} columns",
            node_ids.len()
        )));
    }
    let mut seen = HashSet::with_capacity(cols);
    for id in node_ids {
        check_id(id)?;
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateNodeId(id.clone()));
        }
    }
    if let Some(ids) = sample_ids {
        if ids.len() != rows {
            return Err(Error::Shape(format!(
                "{} sample ids for {rows} rows",
                ids.len()
            )));
        }
        ids.iter().try_for_each(|id| check_id(id))?;
    }
    Ok(())
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains([',', '\n', '\r']) || id.starts_with('#') {
        return Err(Error::InvalidId(id.to_string()));
    }
    Ok(())
}

fn write_header(out: &mut dyn Write, node_ids: &[String], with_samples: bool) -> io::Result<()> {
    if with_samples {
        write!(out, "{SAMPLE_ID_COLUMN},")?;
    }
    writeln!(out, "{}", node_ids.join(","))
}

fn write_row(
    out: &mut dyn Write,
    sample: Option<&str>,
    values: impl Iterator<Item = f64>,
) -> io::Result<()> {
    if let Some(id) = sample {
        write!(out, "{id},")?;
    }
    for (j, v) in values.enumerate() {
        if j > 0 {
            out.write_all(b",")?;
        }
        // Debug formatting is the shortest representation that round-trips.
        write!(out, "{v:?}")?;
    }
    out.write_all(b"\n")
}

struct Table {
    z: Option<u32>,
    node_ids: Vec<String>,
    sample_ids: Option<Vec<String>>,
    values: Vec<Vec<f64>>,
}

impl Table {
    fn parse(reader: impl BufRead) -> Result<Self> {
        let mut z = None;
        let mut header: Option<(Vec<String>, bool)> = None;
        let mut sample_ids = Vec::new();
        let mut values = Vec::new();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<input>", e))?;
            let line_no = lineno + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if header.is_none() {
                    if let Some(v) = comment.trim().strip_prefix("z=") {
                        let parsed = v
                            .trim()
                            .parse::<u32>()
                            .ok()
                            .filter(|&z| z > 0)
                            .ok_or_else(|| Error::InvalidZ(line.to_string()))?;
                        z = Some(parsed);
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let Some((node_ids, with_samples)) = &header else {
                let with_samples = fields[0] == SAMPLE_ID_COLUMN;
                let nodes = if with_samples {
                    &fields[1..]
                } else {
                    &fields[..]
                };
                header = Some((nodes.iter().map(|s| s.to_string()).collect(), with_samples));
                continue;
            };

            let row = values.len() + 1;
            let expected = node_ids.len() + usize::from(*with_samples);
            if fields.len() != expected {
                return Err(Error::Ragged {
                    row,
                    line: line_no,
                    expected,
                    found: fields.len(),
                });
            }
            let cells = if *with_samples {
                sample_ids.push(fields[0].to_string());
                &fields[1..]
            } else {
                &fields[..]
            };
            let mut parsed = Vec::with_capacity(cells.len());
            for (j, cell) in cells.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row,
                    line: line_no,
                    column: node_ids[j].clone(),
                    value: cell.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row,
                        column: node_ids[j].clone(),
                        value: v,
                    });
                }
                parsed.push(v);
            }
            values.push(parsed);
        }

        let (node_ids, with_samples) = header.ok_or(Error::MissingHeader)?;
        Ok(Table {
            z,
            node_ids,
            sample_ids: with_samples.then_some(sample_ids),
            values,
        })
    }
}
