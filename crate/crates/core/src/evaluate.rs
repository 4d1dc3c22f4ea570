//! Simulation harness for comparing selection methods.
//!
//! One experiment fixes a covariate table (generated or supplied), then
//! repeats T times: re-seed the selection, draw fresh response noise, fit
//! by least squares, and record singularity, ‖β̂ − β‖², and worst-case
//! prediction error. Reported per method: the nonsingular proportion, the
//! mean (and median) squared estimation error over nonsingular
//! repetitions, and the worst-case squared prediction error either
//! measured empirically over the level-combination domain or computed
//! analytically as σ²(1 + max leverage).
//!
//! Every repetition owns a seed derived from the master seed by a counter
//! scheme, so any single repetition can be re-run in isolation and the
//! full report is identical no matter how repetitions are scheduled.

use std::collections::HashSet;
use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::anova::{self, Domain, OlsFit};
use crate::balance;
use crate::dataset::{self, Dataset, LevelMatrix, LevelSpec, ResponseModel};
use crate::error::{Error, Result};
use crate::seed::{self, tag};
use crate::selector::{self, SelectionConfig, TieRule};

/// A subsample selection method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Balanced,
    Uniform,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Balanced => write!(f, "balanced"),
            Method::Uniform => write!(f, "uniform"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Method::Balanced),
            "uniform" => Ok(Method::Uniform),
            other => Err(Error::InvalidConfig(format!(
                "unknown method {other:?} (expected balanced or uniform)"
            ))),
        }
    }
}

/// Which worst-case-prediction-error figures to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WspeMode {
    Empirical,
    Analytic,
    Both,
}

impl WspeMode {
    fn wants_empirical(self) -> bool {
        matches!(self, WspeMode::Empirical | WspeMode::Both)
    }

    fn wants_analytic(self) -> bool {
        matches!(self, WspeMode::Analytic | WspeMode::Both)
    }
}

impl std::str::FromStr for WspeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(WspeMode::Empirical),
            "analytic" => Ok(WspeMode::Analytic),
            "both" => Ok(WspeMode::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown wspe mode {other:?} (expected empirical, analytic, or both)"
            ))),
        }
    }
}

/// Where the covariate table comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateSource {
    /// Uniform levels.
    Case1,
    /// Probabilities proportional to 1..q_j.
    Case2,
    /// Discretized equicorrelated normals.
    Case3,
    /// A dataset supplied by the caller.
    External,
}

/// Full description of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: CovariateSource,
    /// Full-data size N (must match the dataset for external sources).
    pub n_full: usize,
    pub spec: LevelSpec,
    /// Subsample size n.
    pub n_sub: usize,
    /// Repetition count T.
    pub reps: usize,
    pub methods: Vec<Method>,
    /// Coefficients and noise level. The model's own seed field is unused
    /// here: repetition noise comes from the experiment seed's per-rep
    /// streams so that repetitions stay independent and re-runnable.
    pub model: ResponseModel,
    /// Master seed; every random stream in the experiment derives from it.
    pub seed: u64,
    pub wspe_mode: WspeMode,
}

impl ExperimentConfig {
    /// Checks internal consistency.
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods requested".into()));
        }
        if self.n_sub == 0 || self.n_sub > self.n_full {
            return Err(Error::InvalidConfig(format!(
                "subsample size n={} must lie in 1..=N={}",
                self.n_sub, self.n_full
            )));
        }
        self.model.check(&self.spec)
    }
}

/// One repetition of one method, for auditing.
#[derive(Debug, Clone, Serialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    /// The repetition's derived seed, sufficient to re-run it alone.
    pub seed: u64,
    pub singular: bool,
    /// Balance criterion of the selected subsample.
    pub f: f64,
    /// ‖β̂ − β‖²; absent for singular fits.
    pub sq_error: Option<f64>,
    /// σ²(1 + max leverage); absent for singular fits or when not requested.
    pub wspe_analytic: Option<f64>,
}

/// Aggregated results for one method.
#[derive(Debug, Clone, Serialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub reps: usize,
    pub nonsingular_count: usize,
    pub nonsingular_proportion: f64,
    /// True when every repetition was singular; the error metrics are then
    /// NaN (serialized as null), never silent zeros.
    pub all_singular: bool,
    /// Mean ‖β̂ − β‖² over nonsingular repetitions.
    pub mse: f64,
    /// Median of the same per-repetition errors.
    pub mse_median: f64,
    pub wspe_empirical: Option<f64>,
    /// Mean of the per-repetition analytic values.
    pub wspe_analytic: Option<f64>,
    /// Whether worst-case figures scanned the full domain or only observed
    /// rows.
    pub wspe_domain: Option<Domain>,
}

/// Everything an experiment produced: the resolved configuration, one
/// metrics block per method, and the per-repetition records.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub config: ExperimentConfig,
    pub methods: Vec<MethodMetrics>,
    /// True when every method was singular in every repetition.
    pub all_singular: bool,
    pub records: Vec<RepRecord>,
}

/// Mean squared coefficient-vector error over a list of estimates.
pub fn mse(beta_hats: &[Vec<f64>], beta_true: &[f64]) -> Result<f64> {
    if beta_hats.is_empty() {
        return Err(Error::InvalidConfig("mse of an empty estimate list".into()));
    }
    let mut total = 0.0;
    for hat in beta_hats {
        if hat.len() != beta_true.len() {
            return Err(Error::DimensionMismatch(format!(
                "estimate of length {} against {} true coefficients",
                hat.len(),
                beta_true.len()
            )));
        }
        total += hat
            .iter()
            .zip(beta_true)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
    }
    Ok(total / beta_hats.len() as f64)
}

fn noise_dist(model: &ResponseModel) -> Option<Normal<f64>> {
    (model.sigma > 0.0).then(|| Normal::new(0.0, model.sigma).expect("validated sigma"))
}

/// The point set worst-case figures scan: the full level-combination
/// domain when it fits under `cap`, otherwise the distinct rows of the
/// fallback data.
fn domain_points(
    spec: &LevelSpec,
    fallback: Option<&LevelMatrix>,
    cap: u64,
) -> Result<(Vec<Vec<u16>>, Domain)> {
    if spec.domain_size().is_some_and(|size| size <= cap) {
        return Ok((spec.domain().collect(), Domain::Full));
    }
    let rows = fallback.ok_or_else(|| {
        Error::InvalidConfig(format!(
            "domain exceeds the enumeration cap {cap} and no fallback rows were supplied"
        ))
    })?;
    rows.validate(spec)?;
    let mut seen: HashSet<&[u16]> = HashSet::new();
    let mut points = Vec::new();
    for row in rows.rows() {
        if seen.insert(row) {
            points.push(row.to_vec());
        }
    }
    if points.is_empty() {
        return Err(Error::InvalidConfig("fallback rows are empty".into()));
    }
    Ok((points, Domain::Partial))
}

/// Empirical worst-case squared prediction error: the maximum over the
/// domain of the repetition-averaged squared error against fresh noisy
/// responses, one draw per (point, repetition). Only nonsingular fits
/// participate; `rep_seeds` must align with `fits` and supplies each
/// repetition's noise stream.
pub fn wspe_empirical(
    fits: &[OlsFit],
    rep_seeds: &[u64],
    model: &ResponseModel,
    spec: &LevelSpec,
    fallback_rows: Option<&LevelMatrix>,
) -> Result<(f64, Domain)> {
    if fits.len() != rep_seeds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} fits against {} repetition seeds",
            fits.len(),
            rep_seeds.len()
        )));
    }
    model.check(spec)?;
    let usable: Vec<usize> = (0..fits.len())
        .filter(|&t| fits[t].beta_hat.is_some() && !fits[t].singular)
        .collect();
    if usable.is_empty() {
        return Err(Error::InvalidConfig(
            "empirical worst-case error needs at least one nonsingular fit".into(),
        ));
    }
    let coding = fits[usable[0]].coding;
    if usable.iter().any(|&t| fits[t].coding != coding) {
        return Err(Error::InvalidConfig("fits mix codings".into()));
    }

    let (points, domain) = domain_points(spec, fallback_rows, anova::DOMAIN_ENUMERATION_CAP)?;
    let means: Vec<f64> = points
        .iter()
        .map(|x| anova::dummy_dot(x, spec, &model.beta))
        .collect::<Result<_>>()?;
    let coded: Vec<Vec<f64>> = points
        .iter()
        .map(|x| anova::code_row(x, spec, coding))
        .collect::<Result<_>>()?;

    let noise = noise_dist(model);
    let mut sums = vec![0.0; points.len()];
    for &t in &usable {
        let beta_hat = fits[t].beta_hat.as_ref().expect("usable fit");
        let mut rng = seed::rng(rep_seeds[t], tag::WSPE, 0);
        for (xi, z) in coded.iter().enumerate() {
            let pred: f64 = z.iter().zip(beta_hat.iter()).map(|(a, b)| a * b).sum();
            let mut y = means[xi];
            if let Some(dist) = &noise {
                y += dist.sample(&mut rng);
            }
            sums[xi] += (y - pred).powi(2);
        }
    }
    let t_count = usable.len() as f64;
    let worst = sums.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) / t_count;
    Ok((worst, domain))
}

struct RepOutcome {
    records: Vec<RepRecord>,
    fits: Vec<OlsFit>,
    domains: Vec<Option<Domain>>,
}

fn run_rep(
    t: usize,
    rep_seed: u64,
    data: &Dataset,
    config: &ExperimentConfig,
    fallback: Option<&LevelMatrix>,
) -> Result<RepOutcome> {
    let spec = data.spec();
    let mut records = Vec::with_capacity(config.methods.len());
    let mut fits = Vec::with_capacity(config.methods.len());
    let mut domains = Vec::with_capacity(config.methods.len());
    for (m_idx, &method) in config.methods.iter().enumerate() {
        let sel = SelectionConfig {
            n: config.n_sub,
            seed: seed::derive(rep_seed, tag::SELECT, m_idx as u64),
            tie_rule: TieRule::LowestIndex,
            // Repetitions are the parallel unit; keep each selection's scan
            // sequential rather than nesting pools.
            parallel: false,
        };
        let subsample = match method {
            Method::Balanced => selector::balanced_select(data, &sel)?,
            Method::Uniform => selector::uniform_select(data, &sel)?,
        };
        let stats = balance::balance_stats(&subsample, spec)?;
        let f = balance::f_direct(&stats, spec);

        let z = anova::dummy_code(subsample.rows(), spec)?;
        let noise = noise_dist(&config.model);
        let mut rng = seed::rng(rep_seed, tag::RESPONSE, m_idx as u64);
        let mut y = Vec::with_capacity(subsample.n());
        for row in subsample.rows().rows() {
            let mut value = anova::dummy_dot(row, spec, &config.model.beta)?;
            if let Some(dist) = &noise {
                value += dist.sample(&mut rng);
            }
            y.push(value);
        }
        let fit = anova::fit_ols(&z, &y)?;

        let sq_error = fit.beta_hat.as_ref().map(|hat| {
            hat.iter()
                .zip(&config.model.beta)
                .map(|(a, b)| (a - b).powi(2))
                .sum()
        });
        let (wspe_analytic, domain) = if config.wspe_mode.wants_analytic() && !fit.singular {
            let lev = anova::max_leverage(&fit, spec, fallback)?;
            (
                Some(config.model.sigma.powi(2) * (1.0 + lev.value)),
                Some(lev.domain),
            )
        } else {
            (None, None)
        };

        records.push(RepRecord {
            rep: t,
            method,
            seed: rep_seed,
            singular: fit.singular,
            f,
            sq_error,
            wspe_analytic,
        });
        fits.push(fit);
        domains.push(domain);
    }
    Ok(RepOutcome { records, fits, domains })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Runs the full protocol. `external` supplies the covariate table for
/// [`CovariateSource::External`] and is ignored otherwise. Deterministic
/// in `(config, external)` regardless of thread count.
pub fn run_experiment(
    config: &ExperimentConfig,
    external: Option<&Dataset>,
) -> Result<MetricsReport> {
    config.validate()?;
    let generated;
    let data: &Dataset = match config.source {
        CovariateSource::External => {
            let d = external.ok_or_else(|| {
                Error::InvalidConfig("external covariate source requires a dataset".into())
            })?;
            if d.spec() != &config.spec {
                return Err(Error::InvalidConfig(format!(
                    "dataset levels {:?} do not match the configured {:?}",
                    d.spec().q(),
                    config.spec.q()
                )));
            }
            if d.n_rows() != config.n_full {
                return Err(Error::InvalidConfig(format!(
                    "dataset has {} rows but the configuration says N={}",
                    d.n_rows(),
                    config.n_full
                )));
            }
            d
        }
        CovariateSource::Case1 => {
            generated = dataset::gen_case1(config.n_full, &config.spec, config.seed)?;
            &generated
        }
        CovariateSource::Case2 => {
            generated = dataset::gen_case2(config.n_full, &config.spec, config.seed)?;
            &generated
        }
        CovariateSource::Case3 => {
            generated = dataset::gen_case3(config.n_full, &config.spec, config.seed)?;
            &generated
        }
    };

    let over_cap = config
        .spec
        .domain_size()
        .is_none_or(|size| size > anova::DOMAIN_ENUMERATION_CAP);
    let fallback: Option<LevelMatrix> = over_cap.then(|| data.all_rows());
    let fallback = fallback.as_ref();

    let rep_seeds: Vec<u64> = (0..config.reps)
        .map(|t| seed::derive(config.seed, tag::REPETITION, t as u64))
        .collect();

    #[cfg(feature = "parallel")]
    let outcomes: Vec<RepOutcome> = {
        use rayon::prelude::*;
        rep_seeds
            .par_iter()
            .enumerate()
            .map(|(t, &rs)| run_rep(t, rs, data, config, fallback))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<RepOutcome> = rep_seeds
        .iter()
        .enumerate()
        .map(|(t, &rs)| run_rep(t, rs, data, config, fallback))
        .collect::<Result<_>>()?;

    // Merge by repetition index (outcomes are already ordered).
    let n_methods = config.methods.len();
    let mut records = Vec::with_capacity(config.reps * n_methods);
    let mut fits_by_method: Vec<Vec<OlsFit>> = (0..n_methods).map(|_| Vec::new()).collect();
    let mut domains_by_method: Vec<Option<Domain>> = vec![None; n_methods];
    for outcome in outcomes {
        records.extend(outcome.records);
        for (m, fit) in outcome.fits.into_iter().enumerate() {
            fits_by_method[m].push(fit);
        }
        for (m, d) in outcome.domains.into_iter().enumerate() {
            domains_by_method[m] = domains_by_method[m].or(d);
        }
    }

    let mut methods = Vec::with_capacity(n_methods);
    for (m, &method) in config.methods.iter().enumerate() {
        let method_records: Vec<&RepRecord> = records
            .iter()
            .skip(m)
            .step_by(n_methods)
            .collect();
        debug_assert!(method_records.iter().all(|r| r.method == method));
        let nonsingular_count = method_records.iter().filter(|r| !r.singular).count();
        let mut sq_errors: Vec<f64> =
            method_records.iter().filter_map(|r| r.sq_error).collect();
        let mse_mean = if sq_errors.is_empty() {
            f64::NAN
        } else {
            sq_errors.iter().sum::<f64>() / sq_errors.len() as f64
        };
        let mse_median = median(&mut sq_errors);
        let analytic_values: Vec<f64> = method_records
            .iter()
            .filter_map(|r| r.wspe_analytic)
            .collect();
        let wspe_analytic = (!analytic_values.is_empty())
            .then(|| analytic_values.iter().sum::<f64>() / analytic_values.len() as f64);

        let mut wspe_emp = None;
        let mut domain = domains_by_method[m];
        if config.wspe_mode.wants_empirical() && nonsingular_count > 0 {
            let (value, dom) = wspe_empirical(
                &fits_by_method[m],
                &rep_seeds,
                &config.model,
                &config.spec,
                fallback,
            )?;
            wspe_emp = Some(value);
            domain = domain.or(Some(dom));
        }

        methods.push(MethodMetrics {
            method,
            reps: config.reps,
            nonsingular_count,
            nonsingular_proportion: nonsingular_count as f64 / config.reps as f64,
            all_singular: nonsingular_count == 0,
            mse: mse_mean,
            mse_median,
            wspe_empirical: wspe_emp,
            wspe_analytic,
            wspe_domain: domain,
        });
    }

    let all_singular = methods.iter().all(|m| m.all_singular);
    Ok(MetricsReport {
        config: config.clone(),
        methods,
        all_singular,
        records,
    })
}

/// Writes the per-repetition records as a tidy CSV, one row per
/// method × repetition, for downstream plotting.
pub fn write_records_csv<W: Write>(report: &MetricsReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rep", "method", "seed", "singular", "f", "sq_error", "wspe_analytic"])?;
    for r in &report.records {
        w.write_record(&[
            r.rep.to_string(),
            r.method.to_string(),
            r.seed.to_string(),
            r.singular.to_string(),
            r.f.to_string(),
            r.sq_error.map(|v| v.to_string()).unwrap_or_default(),
            r.wspe_analytic.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
