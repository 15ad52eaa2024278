//! Report tables: per-leaf summaries, predictions and threshold sweeps.

use std::io::Write;

use crate::data::{empirical_quantile, Dataset, Value};
use crate::error::Result;
use crate::gpd::{gp_theoretical_mean, gp_theoretical_median, TheoreticalMean};
use crate::numfmt::sig17;
use crate::par::compensated_sum;
use crate::tree::TreeNode;

/// One row of the leaf table. Empirical statistics are computed on the
/// responses `u + z` of the leaf; theoretical ones are those of the fitted
/// GP law of the excesses `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSummary {
    pub leaf_id: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub n_obs: usize,
    pub share: f64,
    pub empirical_median: f64,
    pub empirical_mean: f64,
    pub theoretical_median: f64,
    pub theoretical_mean: TheoreticalMean,
}

/// Summaries of the leaves of `tree`, left to right, for the excess table
/// `d` obtained with threshold `threshold_u`.
pub fn leaf_summaries(tree: &TreeNode, d: &Dataset, threshold_u: f64) -> Result<Vec<LeafSummary>> {
    let leaves = tree.leaves();
    let mut members: Vec<Vec<f64>> = vec![Vec::new(); leaves.len()];
    for i in 0..d.n_rows() {
        let id = tree.route(&d.row(i))?.id;
        let slot = leaves.iter().position(|l| l.id == id).expect("route ends at a leaf");
        members[slot].push(threshold_u + d.response[i]);
    }
    let n = d.n_rows() as f64;
    leaves
        .iter()
        .zip(members)
        .map(|(l, y)| {
            let (median, mean) = if y.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (empirical_quantile(&y, 0.5)?, compensated_sum(y.iter().copied()) / y.len() as f64)
            };
            Ok(LeafSummary {
                leaf_id: l.id,
                gamma: l.fit.params.gamma,
                sigma: l.fit.params.sigma,
                n_obs: y.len(),
                share: y.len() as f64 / n,
                empirical_median: median,
                empirical_mean: mean,
                theoretical_median: gp_theoretical_median(l.fit.params),
                theoretical_mean: gp_theoretical_mean(l.fit.params),
            })
        })
        .collect()
}

pub fn write_leaf_summary_csv(rows: &[LeafSummary], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "leaf_id",
        "gamma",
        "sigma",
        "n_obs",
        "share",
        "empirical_median",
        "empirical_mean",
        "theoretical_median",
        "theoretical_mean",
    ])?;
    for r in rows {
        out.write_record([
            r.leaf_id.to_string(),
            sig17(r.gamma),
            sig17(r.sigma),
            r.n_obs.to_string(),
            sig17(r.share),
            sig17(r.empirical_median),
            sig17(r.empirical_mean),
            sig17(r.theoretical_median),
            r.theoretical_mean.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One prediction row per query: row index, leaf, σ̂, γ̂ and the GP median.
pub fn write_predictions_csv(tree: &TreeNode, queries: &[Vec<Value>], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "leaf_id", "sigma", "gamma", "theoretical_median"])?;
    for (i, x) in queries.iter().enumerate() {
        let leaf = tree.route(x)?;
        let p = leaf.fit.params;
        out.write_record([
            i.to_string(),
            leaf.id.to_string(),
            sig17(p.sigma),
            sig17(p.gamma),
            sig17(gp_theoretical_median(p)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Outcome of refitting the pipeline at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Threshold as given: a quantile level or an absolute value.
    pub level: f64,
    pub threshold_u: f64,
    pub outcome: std::result::Result<SweepFit, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepFit {
    pub k_n: usize,
    pub n_leaves: usize,
    pub root_gamma: f64,
    pub root_sigma: f64,
    pub lambda: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl SweepFit {
    pub fn new(tree: &TreeNode, k_n: usize, lambda: f64) -> Self {
        let gammas: Vec<f64> = tree.leaves().iter().map(|l| l.fit.params.gamma).collect();
        SweepFit {
            k_n,
            n_leaves: gammas.len(),
            root_gamma: tree.fit().params.gamma,
            root_sigma: tree.fit().params.sigma,
            lambda,
            gamma_min: gammas.iter().copied().fold(f64::INFINITY, f64::min),
            gamma_max: gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

pub fn write_sweep_csv(rows: &[SweepRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "level",
        "threshold_u",
        "k_n",
        "n_leaves",
        "root_gamma",
        "root_sigma",
        "lambda",
        "leaf_gamma_min",
        "leaf_gamma_max",
        "error",
    ])?;
    for r in rows {
        let mut rec = vec![sig17(r.level), sig17(r.threshold_u)];
        match &r.outcome {
            Ok(f) => rec.extend([
                f.k_n.to_string(),
                f.n_leaves.to_string(),
                sig17(f.root_gamma),
                sig17(f.root_sigma),
                sig17(f.lambda),
                sig17(f.gamma_min),
                sig17(f.gamma_max),
                String::new(),
            ]),
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(e.clone());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::tests::{leaf, split};

    #[test]
    fn shares_sum_to_one_and_infinite_mean_is_marked() {
        let t = split(0, 0, 0.5, 0.0, leaf(1, 0.3, 2, 0.0), leaf(2, 1.0, 3, 0.0));
        let d = Dataset::univariate(vec![0.1, 0.2, 0.6, 0.7, 0.9], vec![1.0, 3.0, 2.0, 4.0, 6.0]).unwrap();
        let rows = leaf_summaries(&t, &d, 100.0).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows.iter().map(|r| r.share).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(rows[0].empirical_median, 102.0);
        assert_eq!(rows[1].empirical_mean, 104.0);
        assert_eq!(rows[1].theoretical_mean, TheoreticalMean::Infinite);
        let mut buf = Vec::new();
        write_leaf_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",inf"), "{text}");
    }

    #[test]
    fn prediction_rows() {
        let t = split(0, 0, 0.5, 0.0, leaf(1, 0.5, 2, 0.0), leaf(2, 1.0, 3, 0.0));
        let mut buf = Vec::new();
        write_predictions_csv(&t, &[vec![Value::Num(0.5)], vec![Value::Num(0.9)]], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,1,1,0.5,"));
        assert!(lines[2].starts_with("1,2,1,1,1"));
    }
}
