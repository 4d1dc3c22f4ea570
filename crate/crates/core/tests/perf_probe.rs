//! Manual timing probes (`cargo test --test perf_probe -- --ignored --nocapture`).

use std::time::Instant;

use balsub::dataset::{gen_case1, gen_case2, LevelSpec};
use balsub::selector::{balanced_select, SelectionConfig};

#[test]
#[ignore]
fn probe_selection_speed() {
    let spec = LevelSpec::new(vec![5; 10]).unwrap();
    for &n_rows in &[1_000_000usize, 2_000_000] {
        let data = gen_case1(n_rows, &spec, 1).unwrap();
        let mut config = SelectionConfig::new(50, 2);
        config.parallel = false;
        let start = Instant::now();
        let sub = balanced_select(&data, &config).unwrap();
        let elapsed = start.elapsed();
        println!(
            "N={n_rows}: total {elapsed:?}, per-iteration {:?} (n={})",
            elapsed / 50,
            sub.n()
        );
    }
}

#[test]
#[ignore]
fn probe_case2_experiment_unit() {
    let spec = LevelSpec::new(vec![2, 3, 4, 5, 6]).unwrap();
    let data = gen_case2(100_000, &spec, 3).unwrap();
    let start = Instant::now();
    for seed in 0..20 {
        let mut config = SelectionConfig::new(120, seed);
        config.parallel = false;
        balanced_select(&data, &config).unwrap();
    }
    println!("20 balanced selections (N=1e5, n=120): {:?}", start.elapsed());
}

#[test]
#[ignore]
fn probe_balance_gap_between_sizes() {
    use balsub::anova::{dummy_code, fit_design};
    use balsub::balance::{balance_stats, f_direct};

    let spec = LevelSpec::new(vec![2, 3, 4, 5, 6]).unwrap();
    let mut f_small_sum = 0.0;
    let mut f_large_sum = 0.0;
    let mut tr_small_sum = 0.0;
    let mut tr_large_sum = 0.0;
    let mut f_better = 0;
    let mut tr_better = 0;
    let runs = 40;
    for seed in 0..runs {
        let mut fs = [0.0; 2];
        let mut trs = [0.0; 2];
        for (k, n_rows) in [10_000usize, 100_000].into_iter().enumerate() {
            let data = gen_case2(n_rows, &spec, seed).unwrap();
            let sub = balanced_select(&data, &SelectionConfig::new(120, seed)).unwrap();
            fs[k] = f_direct(&balance_stats(&sub, data.spec()).unwrap(), data.spec());
            let fit = fit_design(&dummy_code(sub.rows(), data.spec()).unwrap());
            let inv = fit.info_matrix.clone().try_inverse().unwrap();
            trs[k] = inv.trace();
        }
        f_small_sum += fs[0];
        f_large_sum += fs[1];
        tr_small_sum += trs[0];
        tr_large_sum += trs[1];
        if fs[1] <= fs[0] {
            f_better += 1;
        }
        if trs[1] <= trs[0] {
            tr_better += 1;
        }
    }
    let r = runs as f64;
    println!(
        "f: 1e4 mean {:.6}, 1e5 mean {:.6}, large<=small in {}/{}",
        f_small_sum / r,
        f_large_sum / r,
        f_better,
        runs
    );
    println!(
        "trace: 1e4 mean {:.6}, 1e5 mean {:.6}, large<=small in {}/{}",
        tr_small_sum / r,
        tr_large_sum / r,
        tr_better,
        runs
    );
}
