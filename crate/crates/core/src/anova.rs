//! Model-matrix codings, least squares, and design diagnostics.
//!
//! A categorical row expands to `Q = 1 + Σ(q_j − 1)` columns: an intercept
//! plus one block per covariate. Two codings are provided. Dummy coding
//! (reference level 0) is what the fitted model reports. The orthonormal
//! contrast coding satisfies `CᵀC = 𝒩·I` over the full factorial and makes
//! the design-quality bounds exact: `det(ZᵀZ) ≤ n^Q` with equality on
//! orthogonal arrays, and every nonsingular design has maximum leverage at
//! least `Q/n`, again with equality on orthogonal arrays. Leverage and
//! fitted values are coding-invariant, so diagnostics computed in either
//! coding agree.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::balance::{self, Subsample};
use crate::dataset::{Dataset, LevelMatrix, LevelSpec};
use crate::error::{Error, Result};

/// Relative singular-value cutoff: a design is declared singular when
/// `min_sv < SINGULARITY_TOLERANCE × max_sv`.
pub const SINGULARITY_TOLERANCE: f64 = 1e-10;

/// Largest full level-combination domain that leverage maximization will
/// enumerate exactly; larger domains fall back to rows present in the data.
pub const DOMAIN_ENUMERATION_CAP: u64 = 1_000_000;

/// Which expansion a coded matrix uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    Dummy,
    Orthonormal,
}

/// What a model-matrix column represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    Intercept,
    /// Component `component` (0-based) of covariate `covariate`'s block.
    Contrast { covariate: usize, component: usize },
}

/// A subsample expanded to model-matrix columns.
#[derive(Debug, Clone)]
pub struct CodedMatrix {
    values: DMatrix<f64>,
    coding: Coding,
    column_map: Vec<ColumnRole>,
}

impl CodedMatrix {
    /// The n×Q matrix itself.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Which coding built this matrix.
    pub fn coding(&self) -> Coding {
        self.coding
    }

    /// Role of each column, intercept first.
    pub fn column_map(&self) -> &[ColumnRole] {
        &self.column_map
    }

    /// Number of rows.
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of model parameters Q.
    pub fn n_params(&self) -> usize {
        self.values.ncols()
    }
}

fn column_roles(spec: &LevelSpec) -> Vec<ColumnRole> {
    let mut map = Vec::with_capacity(spec.num_params());
    map.push(ColumnRole::Intercept);
    for (j, &qj) in spec.q().iter().enumerate() {
        for component in 0..usize::from(qj) - 1 {
            map.push(ColumnRole::Contrast { covariate: j, component });
        }
    }
    map
}

/// Per-covariate orthonormal contrast tables: for `q` levels, a
/// `q×(q−1)` block built from the normalized Helmert basis of the
/// complement of the all-ones vector, scaled by `√q`. Block columns
/// satisfy `HᵀH = q·I`, columns sum to zero, and every row has
/// `1 + Σ c² = q`.
pub(crate) struct Contrasts {
    /// blocks[j] is row-major `q_j × (q_j − 1)`.
    blocks: Vec<Vec<f64>>,
}

fn helmert_block(q: u16) -> Vec<f64> {
    let qi = usize::from(q);
    let scale = f64::from(q).sqrt();
    let mut block = vec![0.0; qi * (qi - 1)];
    for l in 1..qi {
        let norm = ((l * (l + 1)) as f64).sqrt();
        for u in 0..qi {
            let raw = match u.cmp(&l) {
                std::cmp::Ordering::Less => 1.0,
                std::cmp::Ordering::Equal => -(l as f64),
                std::cmp::Ordering::Greater => 0.0,
            };
            block[u * (qi - 1) + (l - 1)] = scale * raw / norm;
        }
    }
    block
}

impl Contrasts {
    pub(crate) fn new(spec: &LevelSpec) -> Self {
        Self {
            blocks: spec.q().iter().map(|&qj| helmert_block(qj)).collect(),
        }
    }

    /// Contrast value of `level` at block column `component` of covariate `j`.
    fn value(&self, spec: &LevelSpec, j: usize, level: u16, component: usize) -> f64 {
        let width = usize::from(spec.q()[j]) - 1;
        self.blocks[j][usize::from(level) * width + component]
    }
}

/// Writes the coded expansion of one level row into `out` (length Q).
fn code_row_into(
    row: &[u16],
    spec: &LevelSpec,
    coding: Coding,
    contrasts: Option<&Contrasts>,
    out: &mut [f64],
) {
    out[0] = 1.0;
    let mut col = 1;
    for (j, &level) in row.iter().enumerate() {
        let width = usize::from(spec.q()[j]) - 1;
        match coding {
            Coding::Dummy => {
                for k in 0..width {
                    out[col + k] = f64::from(level == (k + 1) as u16);
                }
            }
            Coding::Orthonormal => {
                let contrasts = contrasts.expect("contrast tables for orthonormal coding");
                for k in 0..width {
                    out[col + k] = contrasts.value(spec, j, level, k);
                }
            }
        }
        col += width;
    }
}

/// Codes a single level combination; convenience wrapper used by
/// diagnostics and prediction.
pub fn code_row(row: &[u16], spec: &LevelSpec, coding: Coding) -> Result<Vec<f64>> {
    check_row(row, spec)?;
    let contrasts = match coding {
        Coding::Dummy => None,
        Coding::Orthonormal => Some(Contrasts::new(spec)),
    };
    let mut out = vec![0.0; spec.num_params()];
    code_row_into(row, spec, coding, contrasts.as_ref(), &mut out);
    Ok(out)
}

fn check_row(row: &[u16], spec: &LevelSpec) -> Result<()> {
    if row.len() != spec.p() {
        return Err(Error::DimensionMismatch(format!(
            "row of length {} against {} covariates",
            row.len(),
            spec.p()
        )));
    }
    for (&level, &qj) in row.iter().zip(spec.q()) {
        if level >= qj {
            return Err(Error::InvalidDataset(format!(
                "level code {level} out of range (q={qj})"
            )));
        }
    }
    Ok(())
}

fn code_matrix(rows: &LevelMatrix, spec: &LevelSpec, coding: Coding) -> Result<CodedMatrix> {
    rows.validate(spec)?;
    let n = rows.n_rows();
    let q_cols = spec.num_params();
    let contrasts = match coding {
        Coding::Dummy => None,
        Coding::Orthonormal => Some(Contrasts::new(spec)),
    };
    let mut values = DMatrix::zeros(n, q_cols);
    let mut buf = vec![0.0; q_cols];
    for (i, row) in rows.rows().enumerate() {
        code_row_into(row, spec, coding, contrasts.as_ref(), &mut buf);
        for (c, &v) in buf.iter().enumerate() {
            values[(i, c)] = v;
        }
    }
    Ok(CodedMatrix {
        values,
        coding,
        column_map: column_roles(spec),
    })
}

/// Expands level rows to the intercept-plus-dummies matrix; level 0 of each
/// covariate is the reference and contributes no column.
pub fn dummy_code(rows: &LevelMatrix, spec: &LevelSpec) -> Result<CodedMatrix> {
    code_matrix(rows, spec, Coding::Dummy)
}

/// Expands level rows to the orthonormal contrast coding.
pub fn orthonormal_code(rows: &LevelMatrix, spec: &LevelSpec) -> Result<CodedMatrix> {
    code_matrix(rows, spec, Coding::Orthonormal)
}

/// Linear predictor of a level row under dummy-coded coefficients
/// (intercept first): the intercept plus one coefficient per non-reference
/// level. Used for response generation and prediction without
/// materializing a matrix.
pub fn dummy_dot(row: &[u16], spec: &LevelSpec, coef: &[f64]) -> Result<f64> {
    check_row(row, spec)?;
    if coef.len() != spec.num_params() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients against {} parameters",
            coef.len(),
            spec.num_params()
        )));
    }
    let mut acc = coef[0];
    let mut offset = 1;
    for (&level, &qj) in row.iter().zip(spec.q()) {
        if level > 0 {
            acc += coef[offset + usize::from(level) - 1];
        }
        offset += usize::from(qj) - 1;
    }
    Ok(acc)
}

/// A fitted (or merely analyzed) least-squares design.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Solved coefficients; absent for singular designs or when only the
    /// design was analyzed without a response.
    pub beta_hat: Option<DVector<f64>>,
    /// The information matrix ZᵀZ.
    pub info_matrix: DMatrix<f64>,
    pub min_singular_value: f64,
    pub max_singular_value: f64,
    /// True when `min_sv < SINGULARITY_TOLERANCE × max_sv`.
    pub singular: bool,
    pub coding: Coding,
    /// Number of design rows.
    pub n: usize,
}

/// Analyzes a design without a response: information matrix, singular
/// values, and the singularity flag.
pub fn fit_design(z: &CodedMatrix) -> OlsFit {
    let svd = z.values.clone().svd(false, false);
    let max_sv = svd.singular_values.max();
    // The thin SVD of an n×Q design carries min(n, Q) singular values;
    // with n < Q the remaining ones are zero, so the design is singular by
    // shape alone.
    let min_sv = if z.n_rows() < z.n_params() {
        0.0
    } else {
        svd.singular_values.min()
    };
    let singular = max_sv <= 0.0 || min_sv < SINGULARITY_TOLERANCE * max_sv;
    OlsFit {
        beta_hat: None,
        info_matrix: z.values.tr_mul(&z.values),
        min_singular_value: min_sv,
        max_singular_value: max_sv,
        singular,
        coding: z.coding,
        n: z.n_rows(),
    }
}

/// Solves least squares for `y` on the coded design. Singularity is
/// reported through the flag, not as an error, so repeated-simulation
/// harnesses can count singular subsamples.
pub fn fit_ols(z: &CodedMatrix, y: &[f64]) -> Result<OlsFit> {
    if y.len() != z.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} responses against {} design rows",
            y.len(),
            z.n_rows()
        )));
    }
    let mut fit = fit_design(z);
    if !fit.singular {
        let svd = z.values.clone().svd(true, true);
        let rhs = DVector::from_column_slice(y);
        let beta = svd
            .solve(&rhs, 0.0)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        fit.beta_hat = Some(beta);
    }
    Ok(fit)
}

/// D-criterion of an orthonormal-coded design: `det(ZᵀZ)`. Bounded above
/// by `n^Q`, with equality exactly on orthogonal arrays.
pub fn d_criterion(z: &CodedMatrix) -> Result<f64> {
    if z.coding != Coding::Orthonormal {
        return Err(Error::InvalidConfig(
            "d_criterion requires the orthonormal coding".into(),
        ));
    }
    let det = z.values.tr_mul(&z.values).determinant();
    debug_assert!(
        det <= (z.n_rows() as f64).powi(z.n_params() as i32) * (1.0 + 1e-6),
        "determinant exceeds the n^Q bound: {det}"
    );
    Ok(det)
}

/// Over which point set a leverage maximum was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Every level combination was enumerated.
    Full,
    /// Only distinct rows present in the supplied data were scanned.
    Partial,
}

/// A leverage maximum together with the domain it was taken over.
#[derive(Debug, Clone, Copy)]
pub struct Leverage {
    pub value: f64,
    pub domain: Domain,
}

fn quad_form(m: &DMatrix<f64>, z: &[f64]) -> f64 {
    let q = z.len();
    let mut acc = 0.0;
    for a in 0..q {
        let mut row = 0.0;
        for b in 0..q {
            row += m[(a, b)] * z[b];
        }
        acc += z[a] * row;
    }
    acc
}

/// Maximum of `zᵀ(ZᵀZ)⁻¹z` over the level-combination domain, under the
/// fit's own coding. Domains larger than [`DOMAIN_ENUMERATION_CAP`] are
/// not enumerated; the maximum is then taken over the distinct rows of
/// `fallback_rows` and flagged [`Domain::Partial`].
pub fn max_leverage(
    fit: &OlsFit,
    spec: &LevelSpec,
    fallback_rows: Option<&LevelMatrix>,
) -> Result<Leverage> {
    max_leverage_capped(fit, spec, fallback_rows, DOMAIN_ENUMERATION_CAP)
}

/// [`max_leverage`] with an explicit enumeration cap; exposed for tests
/// and callers that need a tighter compute budget.
pub fn max_leverage_capped(
    fit: &OlsFit,
    spec: &LevelSpec,
    fallback_rows: Option<&LevelMatrix>,
    cap: u64,
) -> Result<Leverage> {
    if fit.singular {
        return Err(Error::InvalidConfig(
            "leverage is undefined for a singular design".into(),
        ));
    }
    if fit.info_matrix.nrows() != spec.num_params() {
        return Err(Error::DimensionMismatch(format!(
            "information matrix of size {} against {} parameters",
            fit.info_matrix.nrows(),
            spec.num_params()
        )));
    }
    let inverse = fit
        .info_matrix
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidConfig("information matrix is not invertible".into()))?;
    let contrasts = match fit.coding {
        Coding::Dummy => None,
        Coding::Orthonormal => Some(Contrasts::new(spec)),
    };
    let mut z = vec![0.0; spec.num_params()];
    let mut best = f64::NEG_INFINITY;

    let full_domain = spec.domain_size().is_some_and(|size| size <= cap);
    if full_domain {
        for point in spec.domain() {
            code_row_into(&point, spec, fit.coding, contrasts.as_ref(), &mut z);
            best = best.max(quad_form(&inverse, &z));
        }
        return Ok(Leverage {
            value: best,
            domain: Domain::Full,
        });
    }

    let rows = fallback_rows.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "domain of {} combinations exceeds the enumeration cap {cap} and no fallback rows were supplied",
            spec.domain_size()
                .map_or_else(|| "more than u64".to_string(), |s| s.to_string())
        ))
    })?;
    rows.validate(spec)?;
    if rows.n_rows() == 0 {
        return Err(Error::InvalidConfig("fallback rows are empty".into()));
    }
    let mut seen: HashSet<&[u16]> = HashSet::new();
    for row in rows.rows() {
        if seen.insert(row) {
            code_row_into(row, spec, fit.coding, contrasts.as_ref(), &mut z);
            best = best.max(quad_form(&inverse, &z));
        }
    }
    Ok(Leverage {
        value: best,
        domain: Domain::Partial,
    })
}

/// Design-quality summary for one subsample, serialized by the inspection
/// tooling: the balance criterion, singularity, and how close the design
/// sits to the determinant and leverage optima.
#[derive(Debug, Clone, Serialize)]
pub struct DesignDiagnostics {
    pub n: usize,
    #[serde(rename = "Q")]
    pub n_params: usize,
    pub f: f64,
    pub oa: bool,
    pub singular: bool,
    pub min_singular_value: f64,
    pub det_orthonormal: f64,
    /// The n^Q upper bound on the determinant.
    pub det_bound: f64,
    pub det_ratio: f64,
    pub max_leverage: Option<f64>,
    /// The Q/n lower bound on the maximum leverage.
    pub leverage_bound: f64,
    pub leverage_ratio: Option<f64>,
    pub domain: Option<Domain>,
}

/// Computes [`DesignDiagnostics`] for a subsample of a dataset.
pub fn design_diagnostics(data: &Dataset, s: &Subsample) -> Result<DesignDiagnostics> {
    let spec = data.spec();
    let stats = balance::balance_stats(s, spec)?;
    let f = balance::f_direct(&stats, spec);
    let oa = balance::is_orthogonal_array(s, spec)?;

    let orth = orthonormal_code(s.rows(), spec)?;
    let det = d_criterion(&orth)?;
    let fit = fit_design(&orth);

    let n = s.n();
    let q_params = spec.num_params();
    let det_bound = (n as f64).powi(q_params as i32);
    let leverage_bound = q_params as f64 / n as f64;

    let (lev, domain) = if fit.singular {
        (None, None)
    } else {
        let needs_fallback = spec.domain_size().is_none_or(|size| size > DOMAIN_ENUMERATION_CAP);
        let fallback = needs_fallback.then(|| data.all_rows());
        let leverage = max_leverage(&fit, spec, fallback.as_ref())?;
        (Some(leverage.value), Some(leverage.domain))
    };

    Ok(DesignDiagnostics {
        n,
        n_params: q_params,
        f,
        oa,
        singular: fit.singular,
        min_singular_value: fit.min_singular_value,
        det_orthonormal: det,
        det_bound,
        det_ratio: det / det_bound,
        max_leverage: lev,
        leverage_bound,
        leverage_ratio: lev.map(|v| v / leverage_bound),
        domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::Subsample;
    use approx::assert_relative_eq;

    fn spec(q: &[u16]) -> LevelSpec {
        LevelSpec::new(q.to_vec()).unwrap()
    }

    fn oa9_rows() -> LevelMatrix {
        let rows: Vec<Vec<u16>> = (0..3u16)
            .flat_map(|a| (0..3u16).map(move |b| vec![a, b, (a + b) % 3]))
            .collect();
        LevelMatrix::from_rows(&rows).unwrap()
    }

    fn full_factorial(q: &[u16]) -> LevelMatrix {
        let s = spec(q);
        let rows: Vec<Vec<u16>> = s.domain().collect();
        LevelMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn dummy_code_reference_and_indicator_columns() {
        let s = spec(&[2]);
        let rows = LevelMatrix::from_rows(&[vec![0], vec![1]]).unwrap();
        let z = dummy_code(&rows, &s).unwrap();
        assert_eq!(z.values()[(0, 0)], 1.0);
        assert_eq!(z.values()[(1, 0)], 1.0);
        assert_eq!(z.values()[(0, 1)], 0.0);
        assert_eq!(z.values()[(1, 1)], 1.0);

        let s = spec(&[3, 3]);
        let rows = LevelMatrix::from_rows(&[vec![0, 0]]).unwrap();
        let z = dummy_code(&rows, &s).unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0, 0.0];
        for (c, &e) in expected.iter().enumerate() {
            assert_eq!(z.values()[(0, c)], e);
        }
        assert_eq!(z.column_map()[0], ColumnRole::Intercept);
        assert_eq!(
            z.column_map()[3],
            ColumnRole::Contrast { covariate: 1, component: 0 }
        );
    }

    #[test]
    fn dummy_code_of_two_repetitions_of_five_levels() {
        let s = spec(&[5]);
        let rows = LevelMatrix::from_rows(
            &[0u16, 0, 1, 1, 2, 2, 3, 3, 4, 4].map(|v| vec![v]),
        )
        .unwrap();
        let z = dummy_code(&rows, &s).unwrap();
        assert_eq!(z.n_rows(), 10);
        assert_eq!(z.n_params(), 5);
        for i in 0..10 {
            assert_eq!(z.values()[(i, 0)], 1.0);
            let level = rows.row(i)[0];
            for k in 1..5 {
                let expected = f64::from(level == k as u16);
                assert_eq!(z.values()[(i, k)], expected);
            }
        }
    }

    #[test]
    fn orthonormal_rows_satisfy_the_norm_identity() {
        for q in 2..=7u16 {
            let s = spec(&[q]);
            let rows =
                LevelMatrix::from_rows(&(0..q).map(|u| vec![u]).collect::<Vec<_>>()).unwrap();
            let z = orthonormal_code(&rows, &s).unwrap();
            for u in 0..usize::from(q) {
                let sq: f64 = (1..usize::from(q)).map(|c| z.values()[(u, c)].powi(2)).sum();
                assert_relative_eq!(1.0 + sq, f64::from(q), epsilon = 1e-12);
            }
            // Contrast columns sum to zero over the levels.
            for c in 1..usize::from(q) {
                let sum: f64 = (0..usize::from(q)).map(|u| z.values()[(u, c)]).sum();
                assert_relative_eq!(sum, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_level_contrast_is_plus_minus_one() {
        let s = spec(&[2]);
        let rows = LevelMatrix::from_rows(&[vec![0], vec![1]]).unwrap();
        let z = orthonormal_code(&rows, &s).unwrap();
        assert_relative_eq!(z.values()[(0, 1)].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(z.values()[(1, 1)], -z.values()[(0, 1)], epsilon = 1e-12);
    }

    #[test]
    fn full_factorial_gram_matrix_is_scaled_identity() {
        let s = spec(&[3, 3]);
        let rows = full_factorial(&[3, 3]);
        let z = orthonormal_code(&rows, &s).unwrap();
        let gram = z.values().tr_mul(z.values());
        for a in 0..5 {
            for b in 0..5 {
                let expected = if a == b { 9.0 } else { 0.0 };
                assert_relative_eq!(gram[(a, b)], expected, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn dummy_dot_matches_full_coding() {
        let s = spec(&[3, 4]);
        let coef: Vec<f64> = (0..s.num_params()).map(|c| 0.5 + c as f64).collect();
        for point in s.domain() {
            let z = code_row(&point, &s, Coding::Dummy).unwrap();
            let full: f64 = z.iter().zip(&coef).map(|(a, b)| a * b).sum();
            let fast = dummy_dot(&point, &s, &coef).unwrap();
            assert_relative_eq!(full, fast, epsilon = 1e-12);
        }
        assert!(dummy_dot(&[0], &s, &coef).is_err());
        assert!(dummy_dot(&[0, 0], &s, &coef[..3]).is_err());
    }

    #[test]
    fn interpolating_design_reproduces_y() {
        // All five levels once: the 5×5 dummy matrix is unit lower
        // triangular, hence invertible, and the fit interpolates.
        let s = spec(&[5]);
        let rows =
            LevelMatrix::from_rows(&(0..5u16).map(|u| vec![u]).collect::<Vec<_>>()).unwrap();
        let z = dummy_code(&rows, &s).unwrap();
        let y = [2.0, -1.0, 0.5, 3.0, 7.0];
        let fit = fit_ols(&z, &y).unwrap();
        assert!(!fit.singular);
        let beta = fit.beta_hat.as_ref().unwrap();
        for (i, row) in rows.rows().enumerate() {
            let pred = dummy_dot(row, &s, beta.as_slice()).unwrap();
            assert_relative_eq!(pred, y[i], epsilon = 1e-8);
        }
    }

    #[test]
    fn unobserved_level_makes_the_fit_singular() {
        let s = spec(&[3]);
        let rows = LevelMatrix::from_rows(&[vec![0], vec![1], vec![0], vec![1]]).unwrap();
        let z = dummy_code(&rows, &s).unwrap();
        let fit = fit_ols(&z, &[1.0, 2.0, 1.0, 2.0]).unwrap();
        assert!(fit.singular);
        assert!(fit.beta_hat.is_none());
    }

    #[test]
    fn noiseless_recovery_of_known_coefficients() {
        let s = spec(&[3, 3]);
        let rows = full_factorial(&[3, 3]);
        let beta = [1.0, 0.5, -0.25, 2.0, -1.5];
        let y: Vec<f64> = rows
            .rows()
            .map(|r| dummy_dot(r, &s, &beta).unwrap())
            .collect();
        let z = dummy_code(&rows, &s).unwrap();
        let fit = fit_ols(&z, &y).unwrap();
        assert!(!fit.singular);
        let hat = fit.beta_hat.unwrap();
        for (a, b) in hat.iter().zip(&beta) {
            assert_relative_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn normal_equations_residual_is_small() {
        let s = spec(&[3, 2]);
        let rows = full_factorial(&[3, 2]);
        let y = [0.3, 1.9, -0.4, 2.2, 0.0, -1.1];
        let z = dummy_code(&rows, &s).unwrap();
        let fit = fit_ols(&z, &y).unwrap();
        let beta = fit.beta_hat.as_ref().unwrap();
        let zty = z.values().tr_mul(&DVector::from_column_slice(&y));
        let residual = &fit.info_matrix * beta - &zty;
        assert!(residual.norm() <= 1e-8 * zty.norm().max(1.0));
    }

    #[test]
    fn d_criterion_on_the_nine_run_array() {
        let s = spec(&[3, 3, 3]);
        let z = orthonormal_code(&oa9_rows(), &s).unwrap();
        let det = d_criterion(&z).unwrap();
        let bound = 9f64.powi(7);
        assert_relative_eq!(det, bound, max_relative = 1e-9);

        // Duplicating a row in place of another strictly hurts.
        let mut rows: Vec<Vec<u16>> = oa9_rows().rows().map(<[u16]>::to_vec).collect();
        rows[8] = rows[0].clone();
        let damaged = orthonormal_code(&LevelMatrix::from_rows(&rows).unwrap(), &s).unwrap();
        assert!(d_criterion(&damaged).unwrap() < det * (1.0 - 1e-6));

        // Dummy coding is rejected.
        let dz = dummy_code(&oa9_rows(), &s).unwrap();
        assert!(d_criterion(&dz).is_err());
    }

    #[test]
    fn singular_design_has_vanishing_determinant() {
        let s = spec(&[3, 3, 3]);
        // Only 3 distinct rows: rank-deficient for 7 parameters.
        let rows = LevelMatrix::from_rows(&[
            vec![0, 0, 0],
            vec![1, 1, 2],
            vec![2, 2, 1],
            vec![0, 0, 0],
            vec![1, 1, 2],
            vec![2, 2, 1],
            vec![0, 0, 0],
            vec![1, 1, 2],
            vec![2, 2, 1],
        ])
        .unwrap();
        let z = orthonormal_code(&rows, &s).unwrap();
        let det = d_criterion(&z).unwrap();
        assert!(det.abs() <= 1e-8 * 9f64.powi(7));
        assert!(fit_design(&z).singular);
    }

    #[test]
    fn leverage_attains_the_bound_on_orthogonal_arrays() {
        let s = spec(&[3, 3, 3]);
        let z = orthonormal_code(&oa9_rows(), &s).unwrap();
        let fit = fit_design(&z);
        let lev = max_leverage(&fit, &s, None).unwrap();
        assert_eq!(lev.domain, Domain::Full);
        assert_relative_eq!(lev.value, 7.0 / 9.0, epsilon = 1e-9);

        // Leverage is coding-invariant.
        let zd = dummy_code(&oa9_rows(), &s).unwrap();
        let fit_d = fit_design(&zd);
        let lev_d = max_leverage(&fit_d, &s, None).unwrap();
        assert_relative_eq!(lev_d.value, 7.0 / 9.0, epsilon = 1e-8);

        let s = spec(&[5, 5]);
        let z = orthonormal_code(&full_factorial(&[5, 5]), &s).unwrap();
        let fit = fit_design(&z);
        let lev = max_leverage(&fit, &s, None).unwrap();
        assert_relative_eq!(lev.value, 9.0 / 25.0, epsilon = 1e-9);
    }

    #[test]
    fn leverage_falls_back_to_supplied_rows_over_the_cap() {
        let s = spec(&[3, 3, 3]);
        let rows = oa9_rows();
        let fit = fit_design(&orthonormal_code(&rows, &s).unwrap());
        let lev = max_leverage_capped(&fit, &s, Some(&rows), 10).unwrap();
        assert_eq!(lev.domain, Domain::Partial);
        // On an orthogonal array every point has the same leverage, so the
        // partial maximum agrees with the full one.
        assert_relative_eq!(lev.value, 7.0 / 9.0, epsilon = 1e-9);
        assert!(max_leverage_capped(&fit, &s, None, 10).is_err());
    }

    #[test]
    fn leverage_requires_a_nonsingular_fit() {
        let s = spec(&[3]);
        let rows = LevelMatrix::from_rows(&[vec![0], vec![1]]).unwrap();
        let fit = fit_design(&dummy_code(&rows, &s).unwrap());
        assert!(fit.singular);
        assert!(max_leverage(&fit, &s, None).is_err());
    }

    #[test]
    fn diagnostics_on_the_nine_run_array() {
        let s = spec(&[3, 3, 3]);
        let rows: Vec<Vec<u16>> = oa9_rows().rows().map(<[u16]>::to_vec).collect();
        let data = Dataset::from_rows(s, &rows).unwrap();
        let sub = Subsample::from_indices(&data, (0..9).collect()).unwrap();
        let diag = design_diagnostics(&data, &sub).unwrap();
        assert_eq!(diag.n, 9);
        assert_eq!(diag.n_params, 7);
        assert!(diag.f <= 1e-12);
        assert!(diag.oa);
        assert!(!diag.singular);
        assert_relative_eq!(diag.det_ratio, 1.0, epsilon = 1e-9);
        assert_relative_eq!(diag.leverage_ratio.unwrap(), 1.0, epsilon = 1e-9);
        assert_eq!(diag.domain, Some(Domain::Full));
        let json = serde_json::to_value(&diag).unwrap();
        assert_eq!(json["Q"], 7);
        assert_eq!(json["domain"], "full");
    }
}
