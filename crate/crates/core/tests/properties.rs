//! Randomized invariants: the two f formulas, the delta distance, label
//! and order symmetries, orthogonal-array characterization, selection
//! output hygiene, and agreement between the empirical and analytic
//! worst-case prediction errors.

use balsub::anova::{dummy_code, fit_design};
use balsub::balance::{
    balance_stats, delta, f_direct, f_pairwise, is_orthogonal_array, Subsample,
};
use balsub::dataset::{gen_case1, gen_case2, Dataset, LevelSpec, ResponseModel};
use balsub::evaluate::{run_experiment, CovariateSource, ExperimentConfig, Method, WspeMode};
use balsub::selector::{balanced_select, uniform_select, SelectionConfig};
use proptest::prelude::*;

fn level_counts() -> impl Strategy<Value = Vec<u16>> {
    prop::collection::vec(2u16..=5, 1..=4)
}

/// A random small dataset plus a subsample drawn by either method.
fn subsample_case(
    q: Vec<u16>,
    seed: u64,
    n_rows: usize,
    n_raw: usize,
) -> (Dataset, Subsample) {
    let spec = LevelSpec::new(q).unwrap();
    let data = gen_case1(n_rows, &spec, seed).unwrap();
    let n = 1 + n_raw % n_rows.min(30);
    let config = SelectionConfig::new(n, seed);
    let sub = if seed.is_multiple_of(2) {
        uniform_select(&data, &config).unwrap()
    } else {
        balanced_select(&data, &config).unwrap()
    };
    (data, sub)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn direct_and_pairwise_f_agree(
        q in level_counts(),
        seed in any::<u64>(),
        n_rows in 5usize..=48,
        n_raw in 0usize..100,
    ) {
        let (data, sub) = subsample_case(q, seed, n_rows, n_raw);
        let spec = data.spec();
        let fd = f_direct(&balance_stats(&sub, spec).unwrap(), spec);
        let fp = f_pairwise(&sub, spec).unwrap();
        let gap = (fd * fd - fp * fp).abs();
        prop_assert!(gap <= 1e-9 * (fd * fd).max(1.0), "fd {fd} vs fp {fp}");
    }

    #[test]
    fn f_below_one_implies_nonsingular(
        q in level_counts(),
        seed in any::<u64>(),
        n_rows in 5usize..=48,
        n_raw in 0usize..100,
    ) {
        let (data, sub) = subsample_case(q, seed, n_rows, n_raw);
        let spec = data.spec();
        let f = f_direct(&balance_stats(&sub, spec).unwrap(), spec);
        if f < 1.0 {
            let fit = fit_design(&dummy_code(sub.rows(), spec).unwrap());
            prop_assert!(!fit.singular, "f = {f} yet singular");
        }
    }

    #[test]
    fn selections_are_distinct_in_range_and_sized(
        q in level_counts(),
        seed in any::<u64>(),
        n_rows in 5usize..=48,
        n_raw in 0usize..100,
    ) {
        let spec = LevelSpec::new(q).unwrap();
        let data = gen_case1(n_rows, &spec, seed).unwrap();
        let n = 1 + n_raw % n_rows;
        for sub in [
            balanced_select(&data, &SelectionConfig::new(n, seed)).unwrap(),
            uniform_select(&data, &SelectionConfig::new(n, seed)).unwrap(),
        ] {
            prop_assert_eq!(sub.n(), n);
            let mut seen = vec![false; n_rows];
            for &i in sub.indices() {
                prop_assert!(i < n_rows);
                prop_assert!(!seen[i], "index {} selected twice", i);
                seen[i] = true;
            }
        }
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_selections_agree(
        q in level_counts(),
        seed in any::<u64>(),
        n_rows in 5usize..=48,
        n_raw in 0usize..100,
    ) {
        let spec = LevelSpec::new(q).unwrap();
        let data = gen_case1(n_rows, &spec, seed).unwrap();
        let n = 1 + n_raw % n_rows;
        let mut config = SelectionConfig::new(n, seed);
        config.parallel = true;
        let par = balanced_select(&data, &config).unwrap();
        config.parallel = false;
        let seq = balanced_select(&data, &config).unwrap();
        prop_assert_eq!(par.indices(), seq.indices());
    }
}

proptest! {
    #[test]
    fn delta_is_symmetric_self_maximal_and_bounded(
        q in level_counts(),
        raw_a in prop::collection::vec(any::<u16>(), 4),
        raw_b in prop::collection::vec(any::<u16>(), 4),
    ) {
        let spec = LevelSpec::new(q.clone()).unwrap();
        let a: Vec<u16> = q.iter().zip(&raw_a).map(|(&qj, &r)| r % qj).collect();
        let b: Vec<u16> = q.iter().zip(&raw_b).map(|(&qj, &r)| r % qj).collect();
        let ab = delta(&a, &b, &spec).unwrap();
        let ba = delta(&b, &a, &spec).unwrap();
        prop_assert_eq!(ab, ba);
        let self_delta = delta(&a, &a, &spec).unwrap();
        prop_assert_eq!(self_delta, spec.sum_q());
        prop_assert!(ab <= spec.sum_q());
    }

    #[test]
    fn f_ignores_subsample_order(
        q in level_counts(),
        seed in any::<u64>(),
        n_rows in 5usize..=48,
        n_raw in 0usize..100,
    ) {
        let (data, sub) = subsample_case(q, seed, n_rows, n_raw);
        let spec = data.spec();
        let f = f_direct(&balance_stats(&sub, spec).unwrap(), spec);
        let mut reversed = sub.indices().to_vec();
        reversed.reverse();
        let sub_rev = Subsample::from_indices(&data, reversed).unwrap();
        let f_rev = f_direct(&balance_stats(&sub_rev, spec).unwrap(), spec);
        prop_assert_eq!(f.to_bits(), f_rev.to_bits(), "{} vs {}", f, f_rev);
    }

    #[test]
    fn f_is_invariant_under_level_relabeling(
        q in level_counts(),
        seed in any::<u64>(),
        n_rows in 5usize..=48,
        n_raw in 0usize..100,
        shift in 1u16..5,
    ) {
        let (data, sub) = subsample_case(q.clone(), seed, n_rows, n_raw);
        let spec = data.spec();
        let f = f_direct(&balance_stats(&sub, spec).unwrap(), spec);

        // Rotate the labels of one covariate; a bijection on levels must
        // not change any count multiset, hence not f.
        let target = (seed as usize) % q.len();
        let qj = q[target];
        let mut columns: Vec<Vec<u16>> =
            (0..q.len()).map(|j| data.column(j).to_vec()).collect();
        for v in &mut columns[target] {
            *v = (*v + shift) % qj;
        }
        let relabeled =
            Dataset::from_columns(LevelSpec::new(q).unwrap(), columns).unwrap();
        let sub_rel =
            Subsample::from_indices(&relabeled, sub.indices().to_vec()).unwrap();
        let f_rel =
            f_direct(&balance_stats(&sub_rel, relabeled.spec()).unwrap(), relabeled.spec());
        prop_assert!((f - f_rel).abs() <= 1e-9, "{} vs {}", f, f_rel);
    }

    #[test]
    fn replicated_full_factorials_are_orthogonal_arrays(
        q in prop::collection::vec(2u16..=4, 1..=3),
        reps in 1usize..=3,
    ) {
        let spec = LevelSpec::new(q).unwrap();
        let mut rows: Vec<Vec<u16>> = Vec::new();
        for _ in 0..reps {
            rows.extend(spec.domain());
        }
        let data = Dataset::from_rows(spec, &rows).unwrap();
        let all = Subsample::from_indices(&data, (0..rows.len()).collect()).unwrap();
        let spec = data.spec();
        prop_assert!(is_orthogonal_array(&all, spec).unwrap());
        let f = f_direct(&balance_stats(&all, spec).unwrap(), spec);
        prop_assert!(f.abs() <= 1e-9, "full factorial x{reps} has f = {f}");

        // Removing one point must break the balance.
        if rows.len() > 1 {
            let truncated =
                Subsample::from_indices(&data, (0..rows.len() - 1).collect()).unwrap();
            prop_assert!(!is_orthogonal_array(&truncated, spec).unwrap());
            let f_cut = f_direct(&balance_stats(&truncated, spec).unwrap(), spec);
            prop_assert!(f_cut > 0.0);
        }
    }
}

/// On skewed data the selector should deliver systematically better
/// balance than random draws: compare median f over 100 seeded runs.
#[test]
fn balanced_median_f_beats_uniform_on_skewed_data() {
    let spec = LevelSpec::new(vec![2, 3, 4, 5, 6]).unwrap();
    let mut f_bal = Vec::new();
    let mut f_uni = Vec::new();
    for seed in 0..100 {
        let data = gen_case2(10_000, &spec, seed).unwrap();
        let config = SelectionConfig::new(120, seed);
        for (method, out) in [
            (Method::Balanced, &mut f_bal),
            (Method::Uniform, &mut f_uni),
        ] {
            let sub = match method {
                Method::Balanced => balanced_select(&data, &config).unwrap(),
                Method::Uniform => uniform_select(&data, &config).unwrap(),
            };
            out.push(f_direct(&balance_stats(&sub, data.spec()).unwrap(), data.spec()));
        }
    }
    let med = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.total_cmp(b));
        v[v.len() / 2]
    };
    let (m_bal, m_uni) = (med(&mut f_bal), med(&mut f_uni));
    assert!(
        m_bal < m_uni,
        "median f balanced {m_bal} not below uniform {m_uni}"
    );
}

/// The 25-run full factorial admits only one subsample of size 25, so
/// repeated fits differ purely by noise: the empirical worst-case
/// prediction error must settle near the analytic sigma^2 (1 + Q/n).
#[test]
fn empirical_wspe_settles_near_analytic_on_the_full_factorial() {
    let spec = LevelSpec::new(vec![5, 5]).unwrap();
    let rows: Vec<Vec<u16>> = spec.domain().collect();
    let data = Dataset::from_rows(LevelSpec::new(vec![5, 5]).unwrap(), &rows).unwrap();
    let config = ExperimentConfig {
        source: CovariateSource::External,
        n_full: 25,
        spec,
        n_sub: 25,
        reps: 2000,
        methods: vec![Method::Balanced],
        model: ResponseModel::unit(data.spec(), 1),
        seed: 11,
        wspe_mode: WspeMode::Both,
    };
    let report = run_experiment(&config, Some(&data)).unwrap();
    let metrics = &report.methods[0];
    let analytic = metrics.wspe_analytic.unwrap();
    assert!((analytic - 1.36).abs() <= 1e-9, "analytic {analytic}");
    let empirical = metrics.wspe_empirical.unwrap();
    // 2000 repetitions put the Monte Carlo error around 0.04; the max
    // over 25 cells biases a little upward. 0.2 is over four such sds.
    assert!(
        (empirical - analytic).abs() <= 0.2,
        "empirical {empirical} vs analytic {analytic}"
    );
}
