//! The combinatorial balance criterion.
//!
//! For a subsample of size `n`, balance is measured by
//!
//! ```text
//! f² = Σ_j Σ_u q_j² (1/q_j − n_j(u)/n)²
//!    + Σ_{j≠k} Σ_{u,v} q_j q_k (1/(q_j q_k) − n_jk(u,v)/n)²
//! ```
//!
//! where `n_j(u)` counts rows at level `u` of covariate `j` and
//! `n_jk(u,v)` counts rows at the level pair `(u,v)` of covariates `j,k`.
//! `f = 0` exactly when the subsample is an orthogonal array of strength
//! two, and `f < 1` already guarantees a nonsingular dummy-coded
//! information matrix.
//!
//! The same quantity has a pairwise form over row coincidences,
//!
//! ```text
//! f² = 2 n⁻² Σ_{i<l} δ(x_i, x_l)² + C,
//! C  = n⁻¹ (Σ_j q_j)² + p − Σ_j q_j − p²,
//! δ(a, b) = Σ_j q_j · 1[a_j = b_j],
//! ```
//!
//! which is what makes the greedy selector's O(Np) incremental update
//! possible. Both forms are implemented and cross-checked; the pairwise sum
//! is accumulated in exact integer arithmetic.

use crate::dataset::{Dataset, LevelMatrix, LevelSpec};
use crate::error::{Error, Result};

/// An ordered subsample: distinct row indices into a dataset plus a dense
/// cache of the selected rows.
#[derive(Debug, Clone)]
pub struct Subsample {
    indices: Vec<usize>,
    rows: LevelMatrix,
}

impl Subsample {
    /// Builds a subsample from row indices, checking distinctness and
    /// range, and caching the selected rows.
    pub fn from_indices(data: &Dataset, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidSubsample("subsample is empty".into()));
        }
        let mut seen = vec![false; data.n_rows()];
        for &i in &indices {
            if i >= data.n_rows() {
                return Err(Error::InvalidSubsample(format!(
                    "row index {i} out of range for {} rows",
                    data.n_rows()
                )));
            }
            if seen[i] {
                return Err(Error::InvalidSubsample(format!("duplicate row index {i}")));
            }
            seen[i] = true;
        }
        let rows = data.gather_rows(&indices)?;
        Ok(Self { indices, rows })
    }

    /// Subsample size.
    pub fn n(&self) -> usize {
        self.indices.len()
    }

    /// Selected row indices, in selection order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Cached level rows, aligned with `indices`.
    pub fn rows(&self) -> &LevelMatrix {
        &self.rows
    }
}

/// Exact level and level-pair counts for a subsample. Pair tables are
/// stored once per unordered pair `j < k`; the criterion doubles the
/// symmetric term instead.
#[derive(Debug, Clone)]
pub struct BalanceStats {
    n: usize,
    /// single[j][u] = n_j(u).
    single: Vec<Vec<u64>>,
    /// One table per pair j < k in lexicographic order, flattened row-major
    /// (u along covariate j, v along covariate k).
    pairwise: Vec<PairCounts>,
}

/// Level-pair counts for one covariate pair.
#[derive(Debug, Clone)]
pub struct PairCounts {
    pub j: usize,
    pub k: usize,
    q_j: u16,
    q_k: u16,
    counts: Vec<u64>,
}

impl PairCounts {
    /// n_jk(u, v).
    pub fn count(&self, u: u16, v: u16) -> u64 {
        self.counts[usize::from(u) * usize::from(self.q_k) + usize::from(v)]
    }

    /// All counts, flattened with `v` fastest.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn cells(&self) -> u64 {
        u64::from(self.q_j) * u64::from(self.q_k)
    }
}

impl BalanceStats {
    /// Subsample size the counts refer to.
    pub fn n(&self) -> usize {
        self.n
    }

    /// n_j(u) counts for covariate `j`.
    pub fn single(&self, j: usize) -> &[u64] {
        &self.single[j]
    }

    /// Pair tables in lexicographic (j, k) order, j < k.
    pub fn pairwise(&self) -> &[PairCounts] {
        &self.pairwise
    }
}

/// Tallies level and level-pair counts for a subsample.
pub fn balance_stats(s: &Subsample, spec: &LevelSpec) -> Result<BalanceStats> {
    s.rows().validate(spec)?;
    let p = spec.p();
    let q = spec.q();
    let mut single: Vec<Vec<u64>> = q.iter().map(|&qj| vec![0; usize::from(qj)]).collect();
    let mut pairwise: Vec<PairCounts> = Vec::with_capacity(p * (p - 1) / 2);
    for j in 0..p {
        for k in j + 1..p {
            pairwise.push(PairCounts {
                j,
                k,
                q_j: q[j],
                q_k: q[k],
                counts: vec![0; usize::from(q[j]) * usize::from(q[k])],
            });
        }
    }
    for row in s.rows().rows() {
        for (j, &u) in row.iter().enumerate() {
            single[j][usize::from(u)] += 1;
        }
        let mut pair = 0;
        for j in 0..p {
            for k in j + 1..p {
                let table = &mut pairwise[pair];
                let cell =
                    usize::from(row[j]) * usize::from(table.q_k) + usize::from(row[k]);
                table.counts[cell] += 1;
                pair += 1;
            }
        }
    }
    Ok(BalanceStats {
        n: s.n(),
        single,
        pairwise,
    })
}

/// Additive decomposition of f²: one term per covariate from the level
/// counts, plus the total level-pair term.
#[derive(Debug, Clone)]
pub struct ImbalanceBreakdown {
    /// Squared single-level deviation per covariate.
    pub per_covariate: Vec<f64>,
    /// Total squared pair deviation over all covariate pairs.
    pub pairwise_total: f64,
}

impl ImbalanceBreakdown {
    /// The criterion value these components sum to.
    pub fn f(&self) -> f64 {
        (self.per_covariate.iter().sum::<f64>() + self.pairwise_total).sqrt()
    }
}

/// Computes the f² decomposition from counts.
pub fn imbalance_breakdown(stats: &BalanceStats, spec: &LevelSpec) -> ImbalanceBreakdown {
    let n = stats.n as f64;
    let per_covariate = spec
        .q()
        .iter()
        .enumerate()
        .map(|(j, &qj)| {
            let qf = f64::from(qj);
            stats.single(j)
                .iter()
                .map(|&c| {
                    let dev = 1.0 / qf - c as f64 / n;
                    qf * qf * dev * dev
                })
                .sum()
        })
        .collect();
    let mut pairwise_total = 0.0;
    for table in stats.pairwise() {
        let qj = f64::from(table.q_j);
        let qk = f64::from(table.q_k);
        let term: f64 = table
            .counts()
            .iter()
            .map(|&c| {
                let dev = 1.0 / (qj * qk) - c as f64 / n;
                qj * qk * dev * dev
            })
            .sum();
        // The criterion sums over ordered pairs j ≠ k; tables are stored
        // once per unordered pair.
        pairwise_total += 2.0 * term;
    }
    ImbalanceBreakdown {
        per_covariate,
        pairwise_total,
    }
}

/// The balance criterion evaluated directly from counts.
pub fn f_direct(stats: &BalanceStats, spec: &LevelSpec) -> f64 {
    imbalance_breakdown(stats, spec).f()
}

/// Coincidence weight between two rows: the sum of `q_j` over covariates
/// where the rows carry the same level.
pub fn delta(row_a: &[u16], row_b: &[u16], spec: &LevelSpec) -> Result<u64> {
    if row_a.len() != spec.p() || row_b.len() != spec.p() {
        return Err(Error::DimensionMismatch(format!(
            "rows of length {} and {} against {} covariates",
            row_a.len(),
            row_b.len(),
            spec.p()
        )));
    }
    Ok(row_a
        .iter()
        .zip(row_b)
        .zip(spec.q())
        .map(|((&a, &b), &qj)| if a == b { u64::from(qj) } else { 0 })
        .sum())
}

/// The balance criterion evaluated through the pairwise coincidence
/// identity. Quadratic in the subsample size; intended for verification
/// and diagnostics, not for the selection loop.
pub fn f_pairwise(s: &Subsample, spec: &LevelSpec) -> Result<f64> {
    let n = s.n();
    let mut sum_sq: u128 = 0;
    for i in 0..n {
        let row_i = s.rows().row(i);
        for l in i + 1..n {
            let d = delta(row_i, s.rows().row(l), spec)?;
            sum_sq += u128::from(d) * u128::from(d);
        }
    }
    let nf = n as f64;
    let sum_q = spec.sum_q() as f64;
    let p = spec.p() as f64;
    let constant = sum_q * sum_q / nf + p - sum_q - p * p;
    let f_sq = 2.0 * (sum_sq as f64) / (nf * nf) + constant;
    // Exact-zero criteria can land a hair below zero in floating point.
    Ok(f_sq.max(0.0).sqrt())
}

/// Tests whether the subsample is an orthogonal array of strength two:
/// every level pair appears exactly `n/(q_j q_k)` times in every pair of
/// covariate columns (for a single covariate, every level exactly `n/q`
/// times). Exact integer check; equivalent to `f = 0`.
pub fn is_orthogonal_array(s: &Subsample, spec: &LevelSpec) -> Result<bool> {
    let stats = balance_stats(s, spec)?;
    let n = stats.n() as u64;
    let uniform = if spec.p() == 1 {
        let q = u64::from(spec.q()[0]);
        n.is_multiple_of(q) && stats.single(0).iter().all(|&c| c == n / q)
    } else {
        // With p ≥ 2, uniform pair counts force uniform level counts by
        // marginal consistency.
        stats.pairwise().iter().all(|table| {
            let cells = table.cells();
            n.is_multiple_of(cells) && table.counts().iter().all(|&c| c == n / cells)
        })
    };
    debug_assert_eq!(
        uniform,
        f_direct(&stats, spec) < 1e-12,
        "orthogonal-array check disagrees with the criterion"
    );
    Ok(uniform)
}
