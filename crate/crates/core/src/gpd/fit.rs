//! Box-constrained maximum likelihood for the GP law.
//!
//! The sample is divided by a robust scale `m` (median of the positive
//! excesses) and the search runs over `(log(σ/m), γ)`, which makes the fit
//! equivariant under rescaling of the data. Each start is driven by a
//! projected Newton iteration with an Armijo backtracking line search along
//! the projection arc; when the reduced Hessian is not negative definite the
//! step falls back to a diagonally scaled projected gradient.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use super::GpParams;
use crate::error::{GptError, Result};

/// Bounds for the scale parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaBox {
    /// `[lo·m, hi·m]` where `m` is the median of the positive excesses.
    Relative {
        lo: f64,
        hi: f64,
    },
    Absolute {
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub sigma_box: SigmaBox,
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Stopping tolerance on the sup-norm of the projected gradient of the
    /// per-observation log-likelihood in `(log σ, γ)` coordinates.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub n_starts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            sigma_box: SigmaBox::Relative { lo: 1e-8, hi: 1e8 },
            gamma_min: 0.05,
            gamma_max: 5.0,
            grad_tol: 1e-8,
            max_iter: 500,
            n_starts: 5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GptError::InvalidConfig(m.to_string()));
        let (lo, hi) = match self.sigma_box {
            SigmaBox::Relative { lo, hi } => (lo, hi),
            SigmaBox::Absolute { min, max } => (min, max),
        };
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad("sigma bounds must satisfy 0 < min < max < inf");
        }
        if !(self.gamma_min > 0.0 && self.gamma_max > self.gamma_min && self.gamma_max.is_finite()) {
            return bad("gamma bounds must satisfy 0 < gamma_min < gamma_max < inf");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if self.max_iter == 0 || self.n_starts == 0 {
            return bad("max_iter and n_starts must be positive");
        }
        Ok(())
    }

    /// Scale bounds for a sample whose robust scale is `m`.
    pub fn sigma_bounds(&self, m: f64) -> (f64, f64) {
        match self.sigma_box {
            SigmaBox::Relative { lo, hi } => (lo * m, hi * m),
            SigmaBox::Absolute { min, max } => (min, max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// `max_iter` was hit before the gradient tolerance.
    MaxIter,
    /// All excesses were zero; no fit was attempted.
    Degenerate,
}

/// Outcome of [`gp_fit`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpFit {
    pub params: GpParams,
    /// Total (unnormalized) log-likelihood at `params`.
    pub loglik: f64,
    pub status: FitStatus,
    pub iterations: usize,
}

/// Fits `(σ, γ)` by maximum likelihood on the box of `cfg`.
///
/// The result depends only on the multiset of values, not on their order.
pub fn gp_fit(values: &[f64], cfg: &FitConfig) -> Result<GpFit> {
    cfg.validate()?;
    if values.is_empty() {
        return Err(GptError::DegenerateSample("no excesses to fit".into()));
    }
    if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(GptError::Domain(format!("excess values must be finite and nonnegative, got {bad}")));
    }
    let problem = Problem::new(values, cfg)?;
    Ok(problem.solve(cfg))
}

/// Fits on contiguous pieces of one sample, sharing the sample's scale and
/// box. Used by split scans, where consecutive candidates differ by a few
/// observations and each fit is warm-started from its neighbour.
pub(crate) struct SliceFitter {
    scale: f64,
    lo: [f64; 2],
    hi: [f64; 2],
    cfg: FitConfig,
}

/// Gradient tolerance of [`SliceFitter`] fits, on the mean log-likelihood.
const SLICE_GRAD_TOL: f64 = 1e-6;

impl SliceFitter {
    /// Returns the fitter and `values` divided by the shared scale.
    pub(crate) fn new(values: &[f64], cfg: &FitConfig) -> Option<(Self, Vec<f64>)> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let scale = robust_scale(&sorted)?;
        let (smin, smax) = cfg.sigma_bounds(scale);
        let fitter = SliceFitter {
            scale,
            lo: [(smin / scale).ln(), cfg.gamma_min],
            hi: [(smax / scale).ln(), cfg.gamma_max],
            // slice fits only rank candidates, so a looser stopping rule is enough
            cfg: FitConfig { grad_tol: cfg.grad_tol.max(SLICE_GRAD_TOL), ..*cfg },
        };
        Some((fitter, values.iter().map(|v| v / scale).collect()))
    }

    /// Maximizes over a normalized slice; returns the internal optimum and
    /// the total log-likelihood in original units.
    pub(crate) fn fit(&self, z: &[f64], warm: Option<[f64; 2]>) -> Option<([f64; 2], f64)> {
        if !z.iter().any(|v| *v > 0.0) {
            return None;
        }
        let problem = Problem { z: Cow::Borrowed(z), scale: self.scale, lo: self.lo, hi: self.hi };
        let local = match warm {
            Some(x0) => problem.ascend(x0, &self.cfg, &[]),
            None => problem.solve_local(&self.cfg),
        };
        let n = z.len() as f64;
        Some((local.x, n * local.f - n * self.scale.ln()))
    }
}

/// Robust scale: median of the positive values, or `None` if all are zero.
fn robust_scale(sorted: &[f64]) -> Option<f64> {
    let first_pos = sorted.partition_point(|v| *v <= 0.0);
    let pos = &sorted[first_pos..];
    if pos.is_empty() {
        return None;
    }
    let k = pos.len();
    Some(if k % 2 == 1 { pos[k / 2] } else { 0.5 * (pos[k / 2 - 1] + pos[k / 2]) })
}

struct Problem<'a> {
    /// Excesses divided by `scale`.
    z: Cow<'a, [f64]>,
    scale: f64,
    lo: [f64; 2],
    hi: [f64; 2],
}

#[derive(Clone, Copy)]
struct Eval {
    f: f64,
    g: [f64; 2],
    h: [[f64; 2]; 2],
}

#[derive(Clone, Copy)]
struct Local {
    x: [f64; 2],
    f: f64,
    converged: bool,
    iterations: usize,
}

impl Problem<'static> {
    fn new(values: &[f64], cfg: &FitConfig) -> Result<Self> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let scale = robust_scale(&sorted).ok_or_else(|| GptError::DegenerateSample("all excesses are zero".into()))?;
        let (smin, smax) = cfg.sigma_bounds(scale);
        let z = sorted.iter().map(|v| v / scale).collect();
        Ok(Problem {
            z: Cow::Owned(z),
            scale,
            lo: [(smin / scale).ln(), cfg.gamma_min],
            hi: [(smax / scale).ln(), cfg.gamma_max],
        })
    }
}

impl Problem<'_> {
    #[cfg(test)]
    fn to_internal(&self, p: GpParams) -> [f64; 2] {
        self.clamp([(p.sigma / self.scale).ln(), p.gamma])
    }

    fn clamp(&self, x: [f64; 2]) -> [f64; 2] {
        [x[0].clamp(self.lo[0], self.hi[0]), x[1].clamp(self.lo[1], self.hi[1])]
    }

    /// Mean log-likelihood of the normalized sample with its derivatives in
    /// `(ρ = log s, γ)`.
    fn eval(&self, x: [f64; 2]) -> Eval {
        let [rho, gamma] = x;
        let inv_s = (-rho).exp();
        let inv_g = 1.0 / gamma;
        let (mut sum_l, mut sum_w, mut sum_wt, mut sum_w2) = (0.0, 0.0, 0.0, 0.0);
        for &z in self.z.iter() {
            let a = z * inv_s;
            let ga = gamma * a;
            let inv_t = 1.0 / (1.0 + ga);
            let w = a * inv_t;
            sum_l += ga.ln_1p();
            sum_w += w;
            sum_wt += w * inv_t;
            sum_w2 += w * w;
        }
        let n = self.z.len() as f64;
        let (l, w, wt, w2) = (sum_l / n, sum_w / n, sum_wt / n, sum_w2 / n);
        let f = -rho - (1.0 + inv_g) * l;
        let g_rho = -1.0 + (1.0 + gamma) * w;
        let g_gam = l * inv_g * inv_g - (1.0 + inv_g) * w;
        let h_rr = -(1.0 + gamma) * wt;
        let h_rg = w - (1.0 + gamma) * w2;
        let h_gg = -2.0 * l * inv_g * inv_g * inv_g + 2.0 * w * inv_g * inv_g + (1.0 + inv_g) * w2;
        Eval { f, g: [g_rho, g_gam], h: [[h_rr, h_rg], [h_rg, h_gg]] }
    }

    fn free_mask(&self, x: [f64; 2], g: [f64; 2]) -> [bool; 2] {
        let mut free = [true; 2];
        for i in 0..2 {
            if (x[i] <= self.lo[i] && g[i] < 0.0) || (x[i] >= self.hi[i] && g[i] > 0.0) {
                free[i] = false;
            }
        }
        free
    }

    fn projected_grad_norm(&self, x: [f64; 2], g: [f64; 2]) -> f64 {
        let free = self.free_mask(x, g);
        (0..2).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max)
    }

    fn newton_direction(&self, e: &Eval, free: [bool; 2]) -> Option<[f64; 2]> {
        let m = [[-e.h[0][0], -e.h[0][1]], [-e.h[1][0], -e.h[1][1]]];
        match free {
            [true, true] => {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if m[0][0] > 0.0 && det > 0.0 {
                    Some([(m[1][1] * e.g[0] - m[0][1] * e.g[1]) / det, (m[0][0] * e.g[1] - m[1][0] * e.g[0]) / det])
                } else {
                    None
                }
            }
            [true, false] if m[0][0] > 0.0 => Some([e.g[0] / m[0][0], 0.0]),
            [false, true] if m[1][1] > 0.0 => Some([0.0, e.g[1] / m[1][1]]),
            _ => None,
        }
    }

    fn gradient_direction(&self, e: &Eval, free: [bool; 2]) -> [f64; 2] {
        let mut d = [0.0; 2];
        for i in 0..2 {
            if free[i] {
                d[i] = e.g[i] / e.h[i][i].abs().max(1e-2);
            }
        }
        d
    }

    /// Backtracking along the projection arc; returns the accepted point.
    fn line_search(&self, x: [f64; 2], e: &Eval, d: [f64; 2]) -> Option<([f64; 2], Eval)> {
        let mut step = 1.0;
        for _ in 0..60 {
            let xn = self.clamp([x[0] + step * d[0], x[1] + step * d[1]]);
            let dx = [xn[0] - x[0], xn[1] - x[1]];
            if dx[0] == 0.0 && dx[1] == 0.0 {
                return None;
            }
            let slope = e.g[0] * dx[0] + e.g[1] * dx[1];
            if slope > 0.0 {
                let en = self.eval(xn);
                if en.f.is_finite() && en.f >= e.f + 1e-4 * slope {
                    return Some((xn, en));
                }
            }
            step *= 0.5;
        }
        None
    }

    /// Projected Newton ascent from `x0`. Stops early when the iterate
    /// enters the basin of an optimum already in `known`.
    fn ascend(&self, x0: [f64; 2], cfg: &FitConfig, known: &[Local]) -> Local {
        let mut x = self.clamp(x0);
        let mut e = self.eval(x);
        let mut iterations = 0;
        loop {
            if self.projected_grad_norm(x, e.g) <= cfg.grad_tol {
                return Local { x, f: e.f, converged: true, iterations };
            }
            if iterations >= cfg.max_iter {
                return Local { x, f: e.f, converged: false, iterations };
            }
            iterations += 1;
            let free = self.free_mask(x, e.g);
            let step = self
                .newton_direction(&e, free)
                .and_then(|d| self.line_search(x, &e, d))
                .or_else(|| self.line_search(x, &e, self.gradient_direction(&e, free)));
            match step {
                Some((xn, en)) => {
                    x = xn;
                    e = en;
                }
                // no representable ascent left: x is optimal to working precision
                None => return Local { x, f: e.f, converged: true, iterations },
            }
            let merged =
                known.iter().any(|k| (k.x[0] - x[0]).abs() < 1e-3 && (k.x[1] - x[1]).abs() < 1e-3 && e.f <= k.f);
            if merged {
                return Local { x, f: e.f, converged: true, iterations };
            }
        }
    }

    fn starts(&self, n_starts: usize) -> Vec<[f64; 2]> {
        let n = self.z.len() as f64;
        let mean = self.z.iter().sum::<f64>() / n;
        let var = self.z.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n;
        let gamma0 = if var > 0.0 { 0.5 * (1.0 - mean * mean / var) } else { 0.5 };
        let gamma0 = gamma0.clamp(self.lo[1], self.hi[1]);
        let sigma0 = mean * (1.0 - gamma0).max(0.1);
        let mut out = vec![[sigma0.max(1e-300).ln(), gamma0]];
        let grid = [(0.5f64, 0.2), (2.0, 0.2), (0.5, 1.2), (2.0, 1.2)];
        for (s, g) in grid {
            out.push([s.ln(), g]);
        }
        // further starts from a golden-ratio lattice over a moderate region
        let phi = 0.618_033_988_749_894_9;
        let mut k = 1.0;
        while out.len() < n_starts {
            let u = (k * phi) % 1.0;
            let v = (k * phi * phi) % 1.0;
            out.push([(0.1f64).ln() + u * (100f64).ln(), 0.05 + v * 2.95]);
            k += 1.0;
        }
        out.truncate(n_starts);
        out.into_iter().map(|x| self.clamp(x)).collect()
    }

    fn solve(&self, cfg: &FitConfig) -> GpFit {
        let best = self.solve_local(cfg);
        self.finish(best)
    }

    fn solve_local(&self, cfg: &FitConfig) -> Local {
        let mut found: Vec<Local> = Vec::with_capacity(cfg.n_starts);
        let mut best: Option<Local> = None;
        for x0 in self.starts(cfg.n_starts) {
            let local = self.ascend(x0, cfg, &found);
            if best.is_none_or(|b| local.f > b.f) {
                best = Some(local);
            }
            found.push(local);
        }
        let mut best = best.expect("at least one start");
        best.iterations = found.iter().map(|l| l.iterations).sum();
        best
    }

    fn finish(&self, local: Local) -> GpFit {
        let sigma = self.scale * local.x[0].exp();
        let gamma = local.x[1];
        let n = self.z.len() as f64;
        GpFit {
            params: GpParams { sigma, gamma },
            loglik: n * local.f - n * self.scale.ln(),
            status: if local.converged { FitStatus::Converged } else { FitStatus::MaxIter },
            iterations: local.iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::{gp_gradient, gp_loglik, gp_sample, total_loglik};

    fn fd_hessian_check(z: &[f64], x: [f64; 2]) {
        let cfg = FitConfig::default();
        let p = Problem::new(z, &cfg).unwrap();
        let e = p.eval(x);
        let h = 1e-5;
        for j in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let (ep, em) = (p.eval(xp), p.eval(xm));
            let fd_g = (ep.f - em.f) / (2.0 * h);
            assert!((fd_g - e.g[j]).abs() < 1e-7, "grad {j}: {fd_g} vs {}", e.g[j]);
            for i in 0..2 {
                let fd_h = (ep.g[i] - em.g[i]) / (2.0 * h);
                assert!((fd_h - e.h[i][j]).abs() < 1e-6, "hess {i}{j}: {fd_h} vs {}", e.h[i][j]);
            }
        }
    }

    #[test]
    fn internal_derivatives_match_finite_differences() {
        let z = gp_sample(300, GpParams { sigma: 2.0, gamma: 0.7 }, 3).unwrap().values;
        fd_hessian_check(&z, [0.3, 0.7]);
        fd_hessian_check(&z, [-1.0, 2.0]);
        fd_hessian_check(&z, [1.5, 0.1]);
    }

    #[test]
    fn internal_objective_matches_public_loglik() {
        let z = gp_sample(50, GpParams { sigma: 2.0, gamma: 0.7 }, 5).unwrap().values;
        let cfg = FitConfig::default();
        let p = Problem::new(&z, &cfg).unwrap();
        let params = GpParams { sigma: 1.7, gamma: 0.9 };
        let x = p.to_internal(params);
        let n = z.len() as f64;
        let via_internal = n * p.eval(x).f - n * p.scale.ln();
        let direct: f64 = z.iter().map(|v| gp_loglik(*v, params).unwrap()).sum();
        assert!((via_internal - direct).abs() < 1e-9 * direct.abs());
        // chain rule: d/dρ = σ ∂/∂σ
        let (gs, gg) = z.iter().fold((0.0, 0.0), |acc, v| {
            let (a, b) = gp_gradient(*v, params).unwrap();
            (acc.0 + a, acc.1 + b)
        });
        let e = p.eval(x);
        assert!((e.g[0] * n - gs * params.sigma).abs() < 1e-8);
        assert!((e.g[1] * n - gg).abs() < 1e-8);
    }

    #[test]
    fn recovers_parameters_at_ten_thousand() {
        let s = gp_sample(10_000, GpParams { sigma: 1.0, gamma: 1.0 }, 7).unwrap();
        let fit = gp_fit(&s.values, &FitConfig::default()).unwrap();
        assert_eq!(fit.status, FitStatus::Converged);
        assert!((0.9..=1.1).contains(&fit.params.sigma), "{:?}", fit.params);
        assert!((0.9..=1.1).contains(&fit.params.gamma), "{:?}", fit.params);
        let direct = total_loglik(&s.values, fit.params);
        assert!((direct - fit.loglik).abs() < 1e-8 * direct.abs());
    }

    #[test]
    fn all_zero_sample_is_degenerate() {
        let err = gp_fit(&[0.0; 10], &FitConfig::default()).unwrap_err();
        assert!(matches!(err, GptError::DegenerateSample(_)));
        assert!(matches!(gp_fit(&[], &FitConfig::default()), Err(GptError::DegenerateSample(_))));
    }

    #[test]
    fn rejects_negative_values_and_bad_config() {
        assert!(gp_fit(&[1.0, -1.0], &FitConfig::default()).is_err());
        let cfg = FitConfig { gamma_min: 0.0, ..FitConfig::default() };
        assert!(matches!(gp_fit(&[1.0, 2.0], &cfg), Err(GptError::InvalidConfig(_))));
    }

    #[test]
    fn zeros_are_legal_and_contribute_minus_log_sigma() {
        let mut v = gp_sample(200, GpParams { sigma: 1.0, gamma: 0.5 }, 11).unwrap().values;
        v.extend([0.0; 5]);
        let fit = gp_fit(&v, &FitConfig::default()).unwrap();
        let direct = total_loglik(&v, fit.params);
        assert!((direct - fit.loglik).abs() < 1e-9 * direct.abs());
    }

    #[test]
    fn order_does_not_matter() {
        let v = gp_sample(120, GpParams { sigma: 3.0, gamma: 0.4 }, 2).unwrap().values;
        let mut r = v.clone();
        r.reverse();
        let cfg = FitConfig::default();
        assert_eq!(gp_fit(&v, &cfg).unwrap(), gp_fit(&r, &cfg).unwrap());
    }

    #[test]
    fn light_tail_hits_gamma_floor() {
        // exponential data: the unconstrained optimum is γ = 0, below the box
        let v: Vec<f64> = (1..=400).map(|i| -(1.0 - i as f64 / 401.0f64).ln()).collect();
        let cfg = FitConfig::default();
        let fit = gp_fit(&v, &cfg).unwrap();
        assert_eq!(fit.status, FitStatus::Converged);
        assert_eq!(fit.params.gamma, cfg.gamma_min);
    }

    #[test]
    fn max_iter_is_flagged_not_fatal() {
        let v = gp_sample(500, GpParams { sigma: 1.0, gamma: 1.3 }, 4).unwrap().values;
        let cfg = FitConfig { max_iter: 1, n_starts: 1, grad_tol: 1e-14, ..FitConfig::default() };
        let fit = gp_fit(&v, &cfg).unwrap();
        assert_eq!(fit.status, FitStatus::MaxIter);
    }
}
