//! Checks against independent oracles: finite differences, brute-force grids
//! and enumerations, and large-sample limits.

use gptree::data::{Column, Dataset};
use gptree::gpd::{gp_gradient, gp_loglik, gp_sample, FitStatus, GpParams};
use gptree::io::TreeDocument;
use gptree::prune::PenaltyGrid;
use gptree::sim::burr_sample;
use gptree::{
    gp_fit, grow, pot_filter, prune_path, quantile_threshold, FitConfig, Gamma0, GrowConfig, SimDesign, TreeNode,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central difference refined by one Richardson step.
fn derivative(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let h = 1e-3 * x.abs().max(1e-2);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn gradient_matches_finite_differences(z in 0.0f64..20.0, sigma in 0.1f64..10.0, gamma in 0.05f64..3.0) {
        let (g, h) = gp_gradient(z, GpParams { sigma, gamma }).unwrap();
        let fd_g = derivative(|s| gp_loglik(z, GpParams { sigma: s, gamma }).unwrap(), sigma);
        let fd_h = derivative(|c| gp_loglik(z, GpParams { sigma, gamma: c }).unwrap(), gamma);
        prop_assert!((g - fd_g).abs() <= 1e-6 * g.abs().max(1e-3), "dσ {g} vs {fd_g}");
        prop_assert!((h - fd_h).abs() <= 1e-6 * h.abs().max(1e-3), "dγ {h} vs {fd_h}");
    }
}

fn total(values: &[f64], p: GpParams) -> f64 {
    values.iter().map(|&z| gp_loglik(z, p).unwrap()).sum()
}

#[test]
fn fit_is_at_least_as_good_as_any_grid_point() {
    let cfg = FitConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in 0..20 {
        let n = rng.gen_range(10..=200);
        let truth = GpParams { sigma: rng.gen_range(0.2..5.0), gamma: rng.gen_range(0.1..2.0) };
        let z = gp_sample(n, truth, s).unwrap().values;
        let fit = gp_fit(&z, &cfg).unwrap();
        let mut sorted = z.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted[n / 2];
        let mut best = f64::NEG_INFINITY;
        for i in 0..100 {
            let sigma = m * 10f64.powf(-2.0 + 4.0 * i as f64 / 99.0);
            for j in 0..100 {
                let gamma = cfg.gamma_min + (cfg.gamma_max - cfg.gamma_min) * j as f64 / 99.0;
                best = best.max(total(&z, GpParams { sigma, gamma }));
            }
        }
        assert!(fit.loglik >= best - 1e-8, "sample {s}: fit {} < grid {best}", fit.loglik);
        assert!((fit.loglik - total(&z, fit.params)).abs() <= 1e-9 * fit.loglik.abs().max(1.0));
    }
}

#[test]
fn burr_excesses_are_close_to_gp_with_the_same_tail_index() {
    for gamma in [0.5, 1.0] {
        let design = SimDesign::new(Gamma0::constant(gamma), 100_000, 1, 0);
        let d = burr_sample(design.n, &design, 5).unwrap();
        let excess = pot_filter(&d, quantile_threshold(&d, 0.9).unwrap()).unwrap();
        assert_eq!(excess.n_rows(), 10_000);
        let fit = gp_fit(&excess.response, &FitConfig::default()).unwrap();
        assert_eq!(fit.status, FitStatus::Converged);
        assert!((fit.params.gamma - gamma).abs() <= 0.1, "γ̂ = {} for γ = {gamma}", fit.params.gamma);
    }
}

fn two_regime(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let lo = gp_sample(n, GpParams { sigma: 1.0, gamma: 0.3 }, seed * 3 + 1).unwrap().values;
    let hi = gp_sample(n, GpParams { sigma: 1.5, gamma: 1.3 }, seed * 3 + 2).unwrap().values;
    let y = (0..n).map(|i| if x[i] > 0.4 { hi[i] } else { lo[i] }).collect();
    Dataset::new("y", y, vec!["x".into(), "w".into()], vec![Column::Numeric(x), Column::Numeric(w)]).unwrap()
}

/// Best total log-likelihood per leaf count over every rooted subtree.
fn exhaustive(t: &TreeNode) -> Vec<f64> {
    let ids = t.internal_ids();
    let mut best = vec![f64::NEG_INFINITY; ids.len() + 1];
    for mask in 0u32..(1 << ids.len()) {
        let keep = |id: usize| ids.iter().position(|&i| i == id).is_some_and(|p| mask & (1 << p) != 0);
        let sub = t.restrict(&keep);
        // only rooted subtrees: every kept node must survive restriction
        if sub.internal_ids().len() != mask.count_ones() as usize {
            continue;
        }
        let k = sub.n_leaves();
        best[k - 1] = best[k - 1].max(sub.total_loglik());
    }
    best
}

#[test]
fn pruning_path_matches_enumeration_on_grown_trees() {
    for seed in 0..6 {
        let d = two_regime(600, seed);
        let cfg = GrowConfig { min_leaf_size: 30, max_leaves: 9, ..GrowConfig::default() };
        let t = grow(&d, &cfg).unwrap();
        let path = prune_path(&t, d.n_rows()).unwrap();
        let brute = exhaustive(&t);
        assert_eq!(path.max_leaves(), t.n_leaves());
        for (k, b) in brute.iter().enumerate() {
            let got = path.logliks[k] * d.n_rows() as f64;
            assert!((got - b).abs() <= 1e-9 * b.abs().max(1.0), "seed {seed} K {}: {got} vs {b}", k + 1);
            assert_eq!(path.subtrees[k].n_leaves(), k + 1);
        }
    }
}

#[test]
fn grown_leaves_partition_the_rows() {
    let d = two_regime(800, 42);
    let cfg = GrowConfig { min_leaf_size: 25, ..GrowConfig::default() };
    let t = grow(&d, &cfg).unwrap();
    assert!(t.n_leaves() >= 2);
    let leaves = t.leaves();
    let mut counts = vec![0usize; leaves.len()];
    for i in 0..d.n_rows() {
        let id = t.route(&d.row(i)).unwrap().id;
        counts[leaves.iter().position(|l| l.id == id).unwrap()] += 1;
    }
    for (l, c) in leaves.iter().zip(counts) {
        assert_eq!(l.fit.n_obs, c);
        assert!(c >= cfg.min_leaf_size);
    }
}

fn fitted_document(seed: u64) -> TreeDocument {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(60..300);
    let mut d = two_regime(n, seed);
    let g: Vec<u32> = (0..n).map(|_| rng.gen_range(0..4)).collect();
    d.names.push("g".into());
    d.columns.push(Column::Categorical { ids: g, levels: vec!["a".into(), "b".into(), "c".into(), "d,e".into()] });
    let d = Dataset::new(d.response_name, d.response, d.names, d.columns).unwrap();
    let cfg = GrowConfig { min_leaf_size: rng.gen_range(5..20), ..GrowConfig::default() };
    let root = grow(&d, &cfg).unwrap();
    TreeDocument {
        schema_version: gptree::io::SCHEMA_VERSION,
        threshold_u: rng.gen_range(-1e6..1e6),
        k_n: n,
        grow: cfg,
        prune: PenaltyGrid::default(),
        lambda: rng.gen::<f64>() / n as f64,
        schema: d.schema(),
        root,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fitted_trees_survive_a_json_round_trip(seed in 0u64..1_000_000_000_000) {
        let doc = fitted_document(seed);
        let text = doc.to_json().unwrap();
        let back = TreeDocument::from_json(&text).unwrap();
        prop_assert_eq!(&back, &doc);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }
}
