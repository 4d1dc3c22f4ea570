//! Subsample selection: the balanced sequential greedy and the
//! uniform-random baseline.
//!
//! The greedy picks a random first row, then repeatedly adds the row
//! minimizing Δ(x) = Σ_t δ(x_t*, x)² over the rows already selected.
//! Minimizing Δ is equivalent to minimizing the balance criterion of the
//! grown subsample, because f² of a selection equals a constant plus a
//! multiple of Σ δ² over its row pairs. After each selection every score is
//! increased by the single new δ² term, never recomputed, so one iteration
//! costs O(N·p) exact integer operations in the worst case.
//!
//! Δ(x) depends on a candidate row only through its level pattern, so the
//! scan actually runs over the dataset's distinct patterns (indexed once
//! per dataset and cached): one score per pattern, and per pattern a head
//! pointer at its lowest unselected row. The argmin over (score, head)
//! pairs picks exactly the row the plain row scan would, while a dataset
//! whose domain is far smaller than its row count scans thousands of times
//! fewer candidates; with mostly-distinct rows it degrades to the row scan.
//! Per chunk the scan accumulates δ against the newest selected row one
//! covariate column at a time (a branchless compare-and-add), squares it
//! into the running scores, and folds the argmin. Patterns whose rows are
//! all selected keep receiving score updates — that makes the mapped
//! per-row table equal a from-scratch rescore everywhere — but a sentinel
//! mask excludes them from the argmin. With the `parallel` feature the
//! chunks run under rayon; the reduction is an associative lexicographic
//! minimum, so the selection is identical to the sequential scan.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::balance::Subsample;
use crate::dataset::{Dataset, Patterns};
use crate::error::{Error, Result};
use crate::seed::{self, tag};

/// Candidates scanned per chunk; sized so a chunk's scores, sentinels, and
/// level slices sit comfortably in cache.
const CHUNK: usize = 4096;

/// How the greedy resolves argmin ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Deterministically prefer the smallest row index.
    #[default]
    LowestIndex,
    /// Choose uniformly among the tied rows from the selection's seed
    /// stream; costs one extra pass over the patterns per iteration.
    SeededRandom,
}

/// Parameters of one selection run.
#[derive(Debug, Clone)]
pub struct SelectionConfig {
    /// Target subsample size.
    pub n: usize,
    /// Seed for the random first point (and the uniform baseline's draw).
    pub seed: u64,
    pub tie_rule: TieRule,
    /// Run the candidate scan in parallel; output is identical either way.
    pub parallel: bool,
}

impl SelectionConfig {
    /// Config with the default tie rule and parallel scanning.
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            n,
            seed,
            tie_rule: TieRule::LowestIndex,
            parallel: true,
        }
    }
}

/// The greedy's running state over all candidate rows: the Δ score of
/// every row and which rows are already selected. Scores are exact
/// integers, so two tables can be compared for equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaTable {
    scores: Vec<u64>,
    selected: Vec<bool>,
}

impl DeltaTable {
    /// Δ scores, one per dataset row (selected rows included).
    pub fn scores(&self) -> &[u64] {
        &self.scores
    }

    /// Which rows are selected and hence excluded from the argmin.
    pub fn selected_mask(&self) -> &[bool] {
        &self.selected
    }

    /// Δ score of row `i`.
    pub fn score(&self, i: usize) -> u64 {
        self.scores[i]
    }

    /// Whether row `i` is selected.
    pub fn is_selected(&self, i: usize) -> bool {
        self.selected[i]
    }
}

/// One greedy selection step, for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    /// 0-based iteration (0 is the random first point).
    pub iteration: usize,
    /// Chosen dataset row.
    pub index: usize,
    /// Δ of the chosen row at selection time (0 for the first point).
    pub score: u64,
}

fn validate_n(data: &Dataset, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidSubsample("subsample size n must be at least 1".into()));
    }
    if n > data.n_rows() {
        return Err(Error::InvalidSubsample(format!(
            "requested subsample size n={n} exceeds dataset size N={}",
            data.n_rows()
        )));
    }
    Ok(())
}

/// Scores must never overflow: each iteration adds at most (Σq)², so the
/// ceiling after n selections is n·(Σq)². Checked once up front instead of
/// per addition in the hot loop.
fn check_score_capacity(n: usize, sum_q: u64) -> Result<()> {
    let ceiling = (n as u128) * u128::from(sum_q) * u128::from(sum_q);
    if sum_q > u64::from(u32::MAX) || ceiling >= 1u128 << 62 {
        return Err(Error::ScoreOverflow(format!(
            "n={n} with Σq={sum_q} exceeds the exact u64 score range"
        )));
    }
    Ok(())
}

/// Accumulates δ against `point` for candidates `start..start+acc.len()`:
/// one column sweep per covariate, compare-and-add with weight q_j.
fn delta_chunk(columns: &[&[u16]], q: &[u16], point: &[u16], start: usize, acc: &mut [u32]) {
    let len = acc.len();
    acc.fill(0);
    for ((col, &key), &qj) in columns.iter().zip(point).zip(q) {
        let w = u32::from(qj);
        for (a, &v) in acc.iter_mut().zip(&col[start..start + len]) {
            *a += u32::from(v == key) * w;
        }
    }
}

/// Adds δ² into a chunk of scores (when `deltas` is nonempty) and returns
/// the chunk's masked ((score, head) lexicographic) minimum. Exhausted
/// patterns carry a sentinel that forces their key to u64::MAX without
/// branching.
fn sweep_chunk(
    scores: &mut [u64],
    sentinel: &[u64],
    heads: &[u64],
    deltas: &[u32],
) -> (u64, u64) {
    let mut best = (u64::MAX, u64::MAX);
    if deltas.is_empty() {
        for ((&s, &m), &h) in scores.iter().zip(sentinel).zip(heads) {
            let cand = (s | m, h);
            if cand < best {
                best = cand;
            }
        }
    } else {
        for (((s, &m), &h), &d) in scores.iter_mut().zip(sentinel).zip(heads).zip(deltas) {
            let d = u64::from(d);
            *s += d * d;
            let cand = (*s | m, h);
            if cand < best {
                best = cand;
            }
        }
    }
    best
}

fn sweep_sequential(
    columns: &[&[u16]],
    q: &[u16],
    point: Option<&[u16]>,
    scores: &mut [u64],
    sentinel: &[u64],
    heads: &[u64],
) -> (u64, u64) {
    let n = scores.len();
    let mut acc = [0u32; CHUNK];
    let mut best = (u64::MAX, u64::MAX);
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        let deltas: &[u32] = match point {
            Some(pt) => {
                delta_chunk(columns, q, pt, start, &mut acc[..len]);
                &acc[..len]
            }
            None => &[],
        };
        let candidate = sweep_chunk(
            &mut scores[start..start + len],
            &sentinel[start..start + len],
            &heads[start..start + len],
            deltas,
        );
        best = best.min(candidate);
        start += len;
    }
    best
}

#[cfg(feature = "parallel")]
fn sweep_parallel(
    columns: &[&[u16]],
    q: &[u16],
    point: Option<&[u16]>,
    scores: &mut [u64],
    sentinel: &[u64],
    heads: &[u64],
) -> (u64, u64) {
    use rayon::prelude::*;
    scores
        .par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(chunk_idx, chunk)| {
            let start = chunk_idx * CHUNK;
            let len = chunk.len();
            let mut acc = [0u32; CHUNK];
            let deltas: &[u32] = match point {
                Some(pt) => {
                    delta_chunk(columns, q, pt, start, &mut acc[..len]);
                    &acc[..len]
                }
                None => &[],
            };
            sweep_chunk(
                chunk,
                &sentinel[start..start + len],
                &heads[start..start + len],
                deltas,
            )
        })
        .reduce(|| (u64::MAX, u64::MAX), std::cmp::min)
}

/// Adds δ(point, ·)² into row-level scores without tracking an argmin;
/// the batch-rescore building block.
fn add_delta_sq(columns: &[&[u16]], q: &[u16], point: &[u16], scores: &mut [u64]) {
    let n = scores.len();
    let mut acc = [0u32; CHUNK];
    let mut start = 0;
    while start < n {
        let len = CHUNK.min(n - start);
        delta_chunk(columns, q, point, start, &mut acc[..len]);
        for (s, &d) in scores[start..start + len].iter_mut().zip(&acc[..len]) {
            let d = u64::from(d);
            *s += d * d;
        }
        start += len;
    }
}

/// A greedy selection in progress. [`balanced_select`] drives this to
/// completion; tests and traces can instead [`step`](Self::step) through
/// and inspect the [`table`](Self::table) after every iteration.
pub struct GreedySelection<'a> {
    data: &'a Dataset,
    pats: &'a Patterns,
    config: SelectionConfig,
    /// Δ score per pattern (shared by every row carrying the pattern).
    scores: Vec<u64>,
    /// 0 while a pattern has unselected rows, u64::MAX once exhausted.
    sentinel: Vec<u64>,
    /// Lowest unselected row of each pattern, u64::MAX once exhausted;
    /// the argmin tie-break key.
    heads: Vec<u64>,
    /// Position scanned so far within each pattern's row group.
    cursors: Vec<usize>,
    /// Unselected rows left per pattern; drives random tie picks.
    remaining: Vec<u32>,
    selected: Vec<bool>,
    chosen: Vec<usize>,
    /// Chosen but not yet folded into the scores; the next sweep applies it.
    pending: Option<usize>,
    point: Vec<u16>,
    rng: ChaCha12Rng,
}

impl<'a> GreedySelection<'a> {
    /// Validates the request and prepares the scan state.
    pub fn new(data: &'a Dataset, config: SelectionConfig) -> Result<Self> {
        validate_n(data, config.n)?;
        check_score_capacity(config.n, data.spec().sum_q())?;
        let pats = data.patterns();
        let cells = pats.len();
        let mut heads = Vec::with_capacity(cells);
        let mut remaining = Vec::with_capacity(cells);
        for c in 0..cells {
            let rows = pats.rows_of(c);
            heads.push(u64::from(rows[0]));
            remaining.push(rows.len() as u32);
        }
        Ok(Self {
            data,
            pats,
            rng: seed::rng(config.seed, tag::SELECT, 0),
            config,
            scores: vec![0; cells],
            sentinel: vec![0; cells],
            heads,
            cursors: vec![0; cells],
            remaining,
            selected: vec![false; data.n_rows()],
            chosen: Vec::new(),
            pending: None,
            point: vec![0; data.p()],
        })
    }

    /// Rows selected so far, in order.
    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    fn sweep(&mut self, apply: Option<usize>) -> (u64, u64) {
        let columns: Vec<&[u16]> = (0..self.data.p()).map(|j| self.pats.column(j)).collect();
        let q = self.data.spec().q();
        let point: Option<&[u16]> = match apply {
            Some(row) => {
                self.data.copy_row_into(row, &mut self.point);
                Some(&self.point)
            }
            None => None,
        };
        #[cfg(feature = "parallel")]
        if self.config.parallel {
            return sweep_parallel(
                &columns,
                q,
                point,
                &mut self.scores,
                &self.sentinel,
                &self.heads,
            );
        }
        sweep_sequential(
            &columns,
            q,
            point,
            &mut self.scores,
            &self.sentinel,
            &self.heads,
        )
    }

    /// Marks a row selected and restores the head/exhaustion invariants of
    /// its pattern. Rows before a cursor are always selected, so advancing
    /// it past selected rows finds the new lowest unselected row.
    fn mark_selected(&mut self, row: usize) {
        self.selected[row] = true;
        let pid = self.pats.of_row(row);
        self.remaining[pid] -= 1;
        if self.heads[pid] == row as u64 {
            let rows = self.pats.rows_of(pid);
            let cur = &mut self.cursors[pid];
            while *cur < rows.len() && self.selected[rows[*cur] as usize] {
                *cur += 1;
            }
            if *cur < rows.len() {
                self.heads[pid] = u64::from(rows[*cur]);
            } else {
                self.heads[pid] = u64::MAX;
                self.sentinel[pid] = u64::MAX;
            }
        }
    }

    /// Uniform pick among the rows whose pattern's masked score equals
    /// `key`; two passes over the patterns, no allocation.
    fn pick_tie(&mut self, key: u64) -> usize {
        let tied: u64 = (0..self.pats.len())
            .filter(|&c| self.scores[c] | self.sentinel[c] == key)
            .map(|c| u64::from(self.remaining[c]))
            .sum();
        let mut target = self.rng.gen_range(0..tied);
        for c in 0..self.pats.len() {
            if self.scores[c] | self.sentinel[c] != key {
                continue;
            }
            let left = u64::from(self.remaining[c]);
            if target >= left {
                target -= left;
                continue;
            }
            let unselected = self.pats.rows_of(c)[self.cursors[c]..]
                .iter()
                .map(|&r| r as usize)
                .filter(|&r| !self.selected[r]);
            for r in unselected {
                if target == 0 {
                    return r;
                }
                target -= 1;
            }
            unreachable!("remaining count out of sync with selected mask");
        }
        unreachable!("tie target within counted range");
    }

    /// Selects the next row, or `None` once n rows are chosen.
    pub fn step(&mut self) -> Option<StepInfo> {
        if self.chosen.len() == self.config.n {
            return None;
        }
        let iteration = self.chosen.len();
        let (index, score) = if iteration == 0 {
            (self.rng.gen_range(0..self.data.n_rows()), 0)
        } else {
            let pending = self.pending.take();
            let (key, head) = self.sweep(pending);
            debug_assert!(key < u64::MAX, "argmin found no unselected row");
            match self.config.tie_rule {
                TieRule::LowestIndex => (head as usize, key),
                TieRule::SeededRandom => (self.pick_tie(key), key),
            }
        };
        self.mark_selected(index);
        self.pending = Some(index);
        self.chosen.push(index);
        Some(StepInfo { iteration, index, score })
    }

    fn sync(&mut self) {
        if let Some(row) = self.pending.take() {
            let _ = self.sweep(Some(row));
        }
    }

    /// Snapshot of the row-level score table for the current selection,
    /// with the newest point's contribution applied.
    pub fn table(&mut self) -> DeltaTable {
        self.sync();
        let scores = (0..self.data.n_rows())
            .map(|i| self.scores[self.pats.of_row(i)])
            .collect();
        DeltaTable {
            scores,
            selected: self.selected.clone(),
        }
    }

    /// Runs the remaining iterations and returns the subsample.
    pub fn finish(mut self) -> Result<Subsample> {
        while self.step().is_some() {}
        Subsample::from_indices(self.data, self.chosen)
    }
}

/// Selects a balanced subsample by sequential greedy minimization of Δ.
/// Deterministic in `(data, config)`, including across the parallel flag.
pub fn balanced_select(data: &Dataset, config: &SelectionConfig) -> Result<Subsample> {
    GreedySelection::new(data, config.clone())?.finish()
}

/// Draws n distinct rows uniformly without replacement.
pub fn uniform_select(data: &Dataset, config: &SelectionConfig) -> Result<Subsample> {
    validate_n(data, config.n)?;
    let mut rng = seed::rng(config.seed, tag::UNIFORM, 0);
    let indices = rand::seq::index::sample(&mut rng, data.n_rows(), config.n).into_vec();
    Subsample::from_indices(data, indices)
}

/// Recomputes the score table from scratch for an already-made partial
/// selection (passed as indices, which unlike a `Subsample` may be empty).
/// Quadratic in the selection size and row-level throughout; exists to
/// verify the incremental pattern-indexed path against the definition.
pub fn rescore(data: &Dataset, partial: &[usize]) -> Result<DeltaTable> {
    let n_rows = data.n_rows();
    let mut selected = vec![false; n_rows];
    for &i in partial {
        if i >= n_rows {
            return Err(Error::InvalidSubsample(format!(
                "row index {i} out of range for {n_rows} rows"
            )));
        }
        if selected[i] {
            return Err(Error::InvalidSubsample(format!("duplicate row index {i}")));
        }
        selected[i] = true;
    }
    check_score_capacity(partial.len(), data.spec().sum_q())?;
    let mut scores = vec![0u64; n_rows];
    let columns: Vec<&[u16]> = (0..data.p()).map(|j| data.column(j)).collect();
    let q = data.spec().q();
    let mut point = vec![0u16; data.p()];
    for &row in partial {
        data.copy_row_into(row, &mut point);
        add_delta_sq(&columns, q, &point, &mut scores);
    }
    Ok(DeltaTable { scores, selected })
}
