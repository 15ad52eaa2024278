//! Burr simulation study with a covariate-dependent tail index.
//!
//! `X ~ U[0, 1]` and `Y | X = x` is Burr with survival
//! `1 / (1 + (y/σ)^(1/γ₀(x)))`. Each replication thresholds the sample at
//! its empirical 0.90 quantile, grows and prunes a GP tree on the excesses
//! and records `∫₀¹ (γ̂(x) - γ₀(x))² dx`.

use std::io::Write;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{pot_filter, quantile_threshold, Column, Dataset, Value};
use crate::error::{GptError, Result};
use crate::numfmt::sig17;
use crate::par;
use crate::prune::{select_lambda, PenaltyGrid};
use crate::tree::{GrowConfig, TreeNode};

/// Tail-index profile of a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma0 {
    /// 0.5 on `[0, 0.25)`, 1 on `[0.25, 0.75)`, 1.5 on `[0.75, 1]`.
    StepWise,
    /// `1 + tanh(10(x - 1/4))/4 + tanh(10(x - 3/4))/4`.
    Smooth,
    /// A constant tail index, with no covariate effect.
    Constant(OrderedGamma),
}

/// Constant tail index stored as bits so the design stays `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderedGamma(u64);

impl OrderedGamma {
    pub fn new(gamma: f64) -> Self {
        OrderedGamma(gamma.to_bits())
    }

    pub fn get(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl Gamma0 {
    pub fn constant(gamma: f64) -> Self {
        Gamma0::Constant(OrderedGamma::new(gamma))
    }

    pub fn eval(self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(GptError::Domain(format!("covariate must lie in [0, 1], got {x}")));
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(self, x: f64) -> f64 {
        match self {
            Gamma0::StepWise => gamma0_step(x),
            Gamma0::Smooth => gamma0_tanh(x),
            Gamma0::Constant(g) => g.get(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Gamma0::StepWise => "step",
            Gamma0::Smooth => "smooth",
            Gamma0::Constant(_) => "constant",
        }
    }
}

fn gamma0_step(x: f64) -> f64 {
    if x < 0.25 {
        0.5
    } else if x < 0.75 {
        1.0
    } else {
        1.5
    }
}

fn gamma0_tanh(x: f64) -> f64 {
    1.0 + (10.0 * (x - 0.25)).tanh() / 4.0 + (10.0 * (x - 0.75)).tanh() / 4.0
}

pub fn gamma0_stepwise(x: f64) -> Result<f64> {
    Gamma0::StepWise.eval(x)
}

pub fn gamma0_smooth(x: f64) -> Result<f64> {
    Gamma0::Smooth.eval(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub gamma0: Gamma0,
    pub sigma_burr: f64,
    pub n: usize,
    pub quantile_q: f64,
    pub n_replications: usize,
    pub base_seed: u64,
}

impl SimDesign {
    pub fn new(gamma0: Gamma0, n: usize, n_replications: usize, base_seed: u64) -> Self {
        SimDesign { gamma0, sigma_burr: 1.0, n, quantile_q: 0.9, n_replications, base_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_burr > 0.0) {
            return Err(GptError::InvalidConfig("Burr scale must be positive".into()));
        }
        if !(self.quantile_q > 0.0 && self.quantile_q < 1.0) {
            return Err(GptError::InvalidConfig("threshold quantile must lie in (0, 1)".into()));
        }
        if (self.n as f64) * (1.0 - self.quantile_q) < 1.0 {
            return Err(GptError::InvalidConfig("expected number of excesses is below one".into()));
        }
        Ok(())
    }

    /// Expected number of excesses `n (1 - q)`, rounded.
    pub fn expected_k(&self) -> usize {
        ((self.n as f64) * (1.0 - self.quantile_q)).round() as usize
    }
}

/// Random stream of one replication: the base seed selects the key and the
/// replication index selects an independent ChaCha stream.
pub fn replication_rng(base_seed: u64, replication: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(base_seed);
    rng.set_stream(replication);
    rng
}

/// Inverse of the Burr survival function at level `u`.
#[inline]
pub fn burr_inverse(u: f64, sigma: f64, gamma: f64) -> f64 {
    sigma * (1.0 / u - 1.0).powf(gamma)
}

/// Burr survival `1 / (1 + (y/σ)^(1/γ))`.
pub fn burr_survival(y: f64, sigma: f64, gamma: f64) -> f64 {
    1.0 / (1.0 + (y / sigma).powf(1.0 / gamma))
}

fn burr_draw(n: usize, gamma0: Gamma0, sigma: f64, rng: &mut impl Rng) -> Result<Dataset> {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.gen();
        let u: f64 = rng.sample(Open01);
        y.push(burr_inverse(u, sigma, gamma0.eval_unchecked(xi)));
        x.push(xi);
    }
    Dataset::univariate(x, y)
}

/// `n` draws of `(X, Y)` under `design`, from the stream of `seed`.
pub fn burr_sample(n: usize, design: &SimDesign, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(GptError::Domain("sample size must be at least 1".into()));
    }
    burr_draw(n, design.gamma0, design.sigma_burr, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// Midpoint-rule approximation of `∫₀¹ (γ̂(x) - γ₀(x))² dx` on `grid_size`
/// cells, for a tree fitted on one numeric covariate.
pub fn integrated_mse(tree: &TreeNode, gamma0: impl Fn(f64) -> f64, grid_size: usize) -> Result<f64> {
    if grid_size < 100 {
        return Err(GptError::Domain("grid_size must be at least 100".into()));
    }
    let h = 1.0 / grid_size as f64;
    let terms = (0..grid_size).map(|j| {
        let x = (j as f64 + 0.5) * h;
        let g = tree.route(&[Value::Num(x)]).map(|l| l.fit.params.gamma);
        g.map(|g| (g - gamma0(x)).powi(2) * h)
    });
    let mut acc = Vec::with_capacity(grid_size);
    for t in terms {
        acc.push(t?);
    }
    Ok(par::compensated_sum(acc))
}

/// Default integration grid.
pub const MSE_GRID: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub seed_stream: u64,
    pub k_n: usize,
    pub outcome: std::result::Result<RepOutcome, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepOutcome {
    pub mse: f64,
    pub n_leaves: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub design: SimDesign,
    pub replications: Vec<Replication>,
    pub mean: f64,
    pub std_dev: f64,
    /// Replications that failed and are excluded from the aggregates.
    pub n_failed: usize,
    pub k_n: usize,
    pub grid: PenaltyGrid,
    pub grow: GrowConfig,
}

impl MseReport {
    pub fn errors(&self) -> Vec<f64> {
        self.replications.iter().filter_map(|r| r.outcome.as_ref().ok().map(|o| o.mse)).collect()
    }

    pub fn leaf_counts(&self) -> Vec<usize> {
        self.replications.iter().filter_map(|r| r.outcome.as_ref().ok().map(|o| o.n_leaves)).collect()
    }

    /// One row per replication: design, n, k_n, replication, mse, n_leaves, lambda.
    pub fn write_replications_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["design", "n", "k_n", "replication", "mse", "n_leaves", "lambda", "error"])?;
        for r in &self.replications {
            let (mse, leaves, lambda, err) = match &r.outcome {
                Ok(o) => (sig17(o.mse), o.n_leaves.to_string(), sig17(o.lambda), String::new()),
                Err(e) => (String::new(), String::new(), String::new(), e.clone()),
            };
            out.write_record([
                self.design.gamma0.name().to_string(),
                self.design.n.to_string(),
                r.k_n.to_string(),
                r.index.to_string(),
                mse,
                leaves,
                lambda,
                err,
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Table-style summary of several reports: one row per design and size.
pub fn write_summary_csv(reports: &[MseReport], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "design",
        "n",
        "k_n",
        "replications",
        "failed",
        "mean_mse",
        "sd_mse",
        "mean_leaves",
        "min_leaf_size",
        "selection",
        "baseline_mse",
    ])?;
    for r in reports {
        let leaves = r.leaf_counts();
        let mean_leaves = leaves.iter().sum::<usize>() as f64 / leaves.len().max(1) as f64;
        out.write_record([
            r.design.gamma0.name().to_string(),
            r.design.n.to_string(),
            r.k_n.to_string(),
            r.design.n_replications.to_string(),
            r.n_failed.to_string(),
            sig17(r.mean),
            sig17(r.std_dev),
            sig17(mean_leaves),
            r.grow.min_leaf_size.to_string(),
            r.grid.selection.describe(),
            String::new(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn run_replication(design: &SimDesign, grow: &GrowConfig, grid: &PenaltyGrid, r: usize) -> Replication {
    let stream = r as u64;
    let mut rng = replication_rng(design.base_seed, stream);
    let outcome = (|| {
        let d = burr_draw(design.n, design.gamma0, design.sigma_burr, &mut rng)?;
        let u = quantile_threshold(&d, design.quantile_q)?;
        let excess = pot_filter(&d, u)?;
        let k_n = excess.n_rows();
        let selected = select_lambda(&excess, grow, grid)?;
        let g0 = design.gamma0;
        let mse = integrated_mse(&selected.tree, |x| g0.eval_unchecked(x), MSE_GRID)?;
        Ok::<_, GptError>((k_n, RepOutcome { mse, n_leaves: selected.tree.n_leaves(), lambda: selected.lambda }))
    })();
    match outcome {
        Ok((k_n, o)) => Replication { index: r, seed_stream: stream, k_n, outcome: Ok(o) },
        Err(e) => Replication { index: r, seed_stream: stream, k_n: 0, outcome: Err(e.to_string()) },
    }
}

/// Runs all replications of `design`. Deterministic for a given base seed,
/// independent of the number of worker threads.
pub fn run_experiment(design: &SimDesign, grow: &GrowConfig, grid: &PenaltyGrid) -> Result<MseReport> {
    design.validate()?;
    grow.validate()?;
    let replications = par::map_indices(design.n_replications, |r| run_replication(design, grow, grid, r));
    let errors: Vec<f64> = replications.iter().filter_map(|r| r.outcome.as_ref().ok().map(|o| o.mse)).collect();
    let n_failed = replications.len() - errors.len();
    let m = errors.len() as f64;
    let (mean, std_dev) = if errors.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let mean = par::compensated_sum(errors.iter().copied()) / m;
        let ss = par::compensated_sum(errors.iter().map(|e| (e - mean) * (e - mean)));
        (mean, if errors.len() > 1 { (ss / (m - 1.0)).sqrt() } else { 0.0 })
    };
    Ok(MseReport {
        design: *design,
        replications,
        mean,
        std_dev,
        n_failed,
        k_n: design.expected_k(),
        grid: grid.clone(),
        grow: *grow,
    })
}

/// Category counts of the meteorological region and season columns of the
/// flood table that the synthetic generator reproduces.
pub const FLOOD_REGIONS: [(&str, usize); 8] = [
    ("Center", 89),
    ("North West", 111),
    ("North", 166),
    ("North-East", 99),
    ("East", 135),
    ("South", 281),
    ("West", 49),
    ("South West", 158),
];
pub const FLOOD_SEASONS: [(&str, usize); 4] = [("Spring", 358), ("Summer", 336), ("Autumn", 251), ("Winter", 143)];

/// Threshold of the synthetic flood costs, in euros.
pub const FLOOD_THRESHOLD: f64 = 100_000.0;

fn exact_counts(counts: &[(&str, usize)], n: usize, rng: &mut impl Rng) -> Vec<u32> {
    let total: usize = counts.iter().map(|c| c.1).sum();
    let mut ids: Vec<u32> = Vec::with_capacity(n);
    for (k, &(_, c)) in counts.iter().enumerate() {
        let share = (c * n + total / 2) / total;
        ids.extend(std::iter::repeat_n(k as u32, share));
    }
    ids.resize(n, (counts.len() - 1) as u32);
    rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), rng);
    ids
}

/// SYNTHETIC table with the schema of the flood-cost data: response `cost`
/// above 100 000 euros, categorical `region` and `season`, numeric
/// `hydro_regions`, `houses` and `premises`. Category counts match those of
/// the real data at `n = 1088`; numeric marginals roughly match its
/// quartiles. The tail index of the cost depends on the covariates through
/// a known three-leaf partition.
pub fn synthetic_flood(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(GptError::Domain("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let region = exact_counts(&FLOOD_REGIONS, n, &mut rng);
    let season = exact_counts(&FLOOD_SEASONS, n, &mut rng);
    let mut hydro = Vec::with_capacity(n);
    let mut houses = Vec::with_capacity(n);
    let mut premises = Vec::with_capacity(n);
    let mut cost = Vec::with_capacity(n);
    for _ in 0..n {
        let h = (4.6f64.ln() + 0.75 * normal(&mut rng)).exp().round().clamp(1.0, 35.0);
        let a = normal(&mut rng);
        let b = 0.8 * a + 0.6 * normal(&mut rng);
        let hs = (141_512f64.ln() + 1.34 * a).exp().round();
        let pr = (54_921f64.ln() + 1.5 * b).exp().round();
        let gamma = if h > 9.0 && pr > 597_518.0 {
            1.0
        } else if hs > 415_488.0 {
            0.3
        } else {
            0.9
        };
        let sigma = 1e5 * (hs.max(1.0) / 141_512.0).powf(0.25);
        let u: f64 = rng.sample(Open01);
        cost.push(FLOOD_THRESHOLD + sigma * (-gamma * u.ln()).exp_m1() / gamma);
        hydro.push(h);
        houses.push(hs);
        premises.push(pr);
    }
    let levels = |c: &[(&str, usize)]| c.iter().map(|l| l.0.to_string()).collect::<Vec<_>>();
    Dataset::new(
        "cost",
        cost,
        ["region", "season", "hydro_regions", "houses", "premises"].map(String::from).to_vec(),
        vec![
            Column::Categorical { ids: region, levels: levels(&FLOOD_REGIONS) },
            Column::Categorical { ids: season, levels: levels(&FLOOD_SEASONS) },
            Column::Numeric(hydro),
            Column::Numeric(houses),
            Column::Numeric(premises),
        ],
    )
}

fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Hill estimator of the tail index from the `k` largest of `values`.
pub fn hill_estimator(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k >= values.len() {
        return Err(GptError::Domain(format!("need 0 < k < n, got k={k}, n={}", values.len())));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let base = v[k];
    if !(base > 0.0) {
        return Err(GptError::Domain("Hill estimator needs positive order statistics".into()));
    }
    Ok(v[..k].iter().map(|x| (x / base).ln()).sum::<f64>() / k as f64)
}
