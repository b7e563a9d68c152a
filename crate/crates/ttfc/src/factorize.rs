//! Road-segment embedding initialization: alternating least squares on the
//! sparse standardized travel-time matrix.
//!
//! Each half-sweep solves exact per-row normal equations (with the
//! regularizer on the diagonal), so the objective is non-increasing by
//! construction and the whole procedure is deterministic given the seed.

use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::prep::WindowedDataset;
use crate::roadnet::RoadNetwork;

pub const DEFAULT_EMBEDDING_DIM: usize = 16;
pub const DEFAULT_LAMBDA: f64 = 0.1;
pub const DEFAULT_SWEEPS: usize = 25;

/// Dense per-segment embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub d: usize,
    pub rows: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, segment_id: usize) -> Result<&[f64]> {
        self.rows
            .get(segment_id)
            .map(|r| r.as_slice())
            .ok_or(Error::UnknownSegment(segment_id))
    }

    pub fn save_csv(&self, path: impl AsRef<FsPath>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec!["segment_id".to_string()];
        header.extend((0..self.d).map(|k| format!("e{k}")));
        w.write_record(&header).map_err(|e| Error::csv(path, e))?;
        for (sid, row) in self.rows.iter().enumerate() {
            let mut rec = vec![sid.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.16e}")));
            w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<FsPath>) -> Result<EmbeddingTable> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let d = rdr
            .headers()
            .map_err(|e| Error::csv(path, e))?
            .len()
            .saturating_sub(1);
        if d == 0 {
            return Err(Error::InvalidInput(format!("{}: no embedding columns", path.display())));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            let sid: usize = rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("{}: bad row {}", path.display(), i + 2)))?;
            if sid != rows.len() {
                return Err(Error::InvalidInput(format!(
                    "{}: segment ids must be contiguous, found {sid} at row {}",
                    path.display(),
                    i + 2
                )));
            }
            let row = (1..=d)
                .map(|k| {
                    rec.get(k)
                        .and_then(|s| s.parse::<f64>().ok())
                        .ok_or_else(|| Error::InvalidInput(format!("{}: bad value at row {}", path.display(), i + 2)))
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(EmbeddingTable { d, rows })
    }
}

/// Sparse matrix in both row-major and column-major observation lists.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn from_triplets(n_rows: usize, n_cols: usize, cells: &[(usize, usize, f64)]) -> SparseMatrix {
        let mut rows = vec![Vec::new(); n_rows];
        let mut cols = vec![Vec::new(); n_cols];
        for &(r, c, v) in cells {
            rows[r].push((c, v));
            cols[c].push((r, v));
        }
        SparseMatrix { n_rows, n_cols, rows, cols }
    }

    /// Segment-by-window matrix of a windowed dataset.
    pub fn from_dataset(ds: &WindowedDataset) -> SparseMatrix {
        let mut cells = Vec::with_capacity(ds.observed_cells());
        for batch in &ds.batches {
            for (&sid, &z) in batch.segment_ids.iter().zip(&batch.z_values) {
                cells.push((sid, batch.window, z));
            }
        }
        SparseMatrix::from_triplets(ds.n_segments, ds.index.count, &cells)
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            rows: self.cols.clone(),
            cols: self.rows.clone(),
        }
    }

    pub fn n_observed(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    /// Rows with at least one observation.
    pub fn observed_rows(&self) -> Vec<bool> {
        self.rows.iter().map(|r| !r.is_empty()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FactorizeOptions {
    pub d: usize,
    pub lambda: f64,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for FactorizeOptions {
    fn default() -> Self {
        FactorizeOptions {
            d: DEFAULT_EMBEDDING_DIM,
            lambda: DEFAULT_LAMBDA,
            sweeps: DEFAULT_SWEEPS,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Factorization {
    pub p: EmbeddingTable,
    /// Window-side factors; persisted for diagnostics only.
    pub q: Vec<Vec<f64>>,
    /// Objective value after each sweep.
    pub objective: Vec<f64>,
}

/// Gaussian elimination with partial pivoting; `a` is consumed.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Solves every row factor against the fixed opposite-side factors.
/// Rows without observations take the exact minimizer: zero when the
/// regularizer is active, otherwise they are left unchanged.
fn solve_side(
    obs: &[Vec<(usize, f64)>],
    fixed: &[Vec<f64>],
    lambda: f64,
    d: usize,
    current: &mut [Vec<f64>],
) {
    for (i, row_obs) in obs.iter().enumerate() {
        if row_obs.is_empty() {
            if lambda > 0.0 {
                current[i].iter_mut().for_each(|v| *v = 0.0);
            }
            continue;
        }
        let mut a = vec![vec![0.0; d]; d];
        let mut b = vec![0.0; d];
        for k in 0..d {
            a[k][k] = lambda;
        }
        for &(j, v) in row_obs {
            let f = &fixed[j];
            for r in 0..d {
                b[r] += v * f[r];
                for c in r..d {
                    a[r][c] += f[r] * f[c];
                }
            }
        }
        for r in 0..d {
            for c in 0..r {
                a[r][c] = a[c][r];
            }
        }
        if let Some(x) = solve_linear(a, b) {
            current[i] = x;
        }
        // A singular system (lambda = 0 with degenerate observations) keeps
        // the previous iterate, which never increases the objective.
    }
}

fn objective(m: &SparseMatrix, rows: &[Vec<f64>], cols: &[Vec<f64>], lambda: f64) -> f64 {
    let mut err = 0.0;
    for (i, row_obs) in m.rows.iter().enumerate() {
        for &(j, v) in row_obs {
            let pred: f64 = rows[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            err += (v - pred) * (v - pred);
        }
    }
    let norm = |f: &[Vec<f64>]| f.iter().flatten().map(|v| v * v).sum::<f64>();
    err + lambda * (norm(rows) + norm(cols))
}

/// Observed-cell root-mean-square error of the current factors.
pub fn observed_rmse(m: &SparseMatrix, rows: &[Vec<f64>], cols: &[Vec<f64>]) -> f64 {
    let mut err = 0.0;
    let mut n = 0usize;
    for (i, row_obs) in m.rows.iter().enumerate() {
        for &(j, v) in row_obs {
            let pred: f64 = rows[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            err += (v - pred) * (v - pred);
            n += 1;
        }
    }
    (err / n.max(1) as f64).sqrt()
}

fn uniform_init(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-0.1..0.1)).collect())
        .collect()
}

fn als_run(
    m: &SparseMatrix,
    mut rows: Vec<Vec<f64>>,
    mut cols: Vec<Vec<f64>>,
    lambda: f64,
    sweeps: usize,
    d: usize,
    cols_first: bool,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let mut objectives = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        if cols_first {
            solve_side(&m.cols, &rows, lambda, d, &mut cols);
            solve_side(&m.rows, &cols, lambda, d, &mut rows);
        } else {
            solve_side(&m.rows, &cols, lambda, d, &mut rows);
            solve_side(&m.cols, &rows, lambda, d, &mut cols);
        }
        objectives.push(objective(m, &rows, &cols, lambda));
    }
    (rows, cols, objectives)
}

/// Factorizes the sparse matrix into `P (n_rows x d)` and `Q (n_cols x d)`
/// minimizing the regularized squared error on observed cells.
pub fn factorize(m: &SparseMatrix, opts: &FactorizeOptions) -> Result<Factorization> {
    if m.n_observed() == 0 {
        return Err(Error::InvalidInput("cannot factorize an empty matrix".into()));
    }
    if opts.d == 0 {
        return Err(Error::InvalidInput("embedding dimension must be >= 1".into()));
    }
    if opts.lambda < 0.0 {
        return Err(Error::InvalidInput("lambda must be non-negative".into()));
    }
    if opts.d > m.n_rows.min(m.n_cols) {
        eprintln!(
            "warning: d = {} exceeds min(|E|, W) = {}",
            opts.d,
            m.n_rows.min(m.n_cols)
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let p0 = uniform_init(&mut rng, m.n_rows, opts.d);
    let q0 = uniform_init(&mut rng, m.n_cols, opts.d);
    let (rows, cols, objectives) = als_run(m, p0, q0, opts.lambda, opts.sweeps, opts.d, false);
    Ok(Factorization {
        p: EmbeddingTable { d: opts.d, rows },
        q: cols,
        objective: objectives,
    })
}

/// Embedding for a segment without observations: the mean of its observed
/// graph neighbors' rows, falling back to the mean of all observed rows.
pub fn cold_start_row(p: &EmbeddingTable, neighbors: &[usize], observed: &[bool]) -> Vec<f64> {
    let mean_of = |ids: &mut dyn Iterator<Item = usize>| -> Option<Vec<f64>> {
        let mut acc = vec![0.0; p.d];
        let mut n = 0usize;
        for id in ids {
            for (a, v) in acc.iter_mut().zip(&p.rows[id]) {
                *a += v;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Some(acc)
    };
    mean_of(&mut neighbors.iter().copied().filter(|&s| observed.get(s).copied().unwrap_or(false)))
        .or_else(|| mean_of(&mut (0..p.n_rows()).filter(|&s| observed[s])))
        .or_else(|| mean_of(&mut (0..p.n_rows())))
        .unwrap_or_else(|| vec![0.0; p.d])
}

/// Segments sharing a junction with `segment_id`, excluding itself.
pub fn graph_neighbors(net: &RoadNetwork, segment_id: usize) -> Vec<usize> {
    let seg = &net.segments()[segment_id];
    let mut out: Vec<usize> = net
        .segments()
        .iter()
        .filter(|s| {
            s.id != segment_id
                && (s.from == seg.from || s.from == seg.to || s.to == seg.from || s.to == seg.to)
        })
        .map(|s| s.id)
        .collect();
    out.sort_unstable();
    out
}

/// Replaces unobserved rows with their cold-start embedding.
pub fn apply_cold_start(p: &mut EmbeddingTable, net: &RoadNetwork, observed: &[bool]) {
    let replacements: Vec<(usize, Vec<f64>)> = (0..p.n_rows())
        .filter(|&sid| !observed[sid])
        .map(|sid| (sid, cold_start_row(p, &graph_neighbors(net, sid), observed)))
        .collect();
    for (sid, row) in replacements {
        p.rows[sid] = row;
    }
}
