//! Product-decay fits, Lorentzian resonance fits and log-log scaling.

use crate::error::{invalid, Result};
use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Damped Gauss-Newton (Levenberg-Marquardt) on residuals r(p) with an
/// analytic Jacobian. Bounds are enforced by projection.
pub struct LmProblem<'a> {
    /// Returns residuals and the Jacobian (rows = residuals).
    pub eval: &'a dyn Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>),
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// (JᵀJ)⁻¹ at the solution, when invertible.
    pub jtj_inverse: Option<Vec<Vec<f64>>>,
}

pub const GRAD_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 500;

fn project(p: &mut [f64], lo: &[f64], hi: &[f64]) {
    for k in 0..p.len() {
        p[k] = p[k].clamp(lo[k], hi[k]);
    }
}

fn normal_equations(r: &[f64], j: &[Vec<f64>], np: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut a = vec![vec![0.0; np]; np];
    let mut g = vec![0.0; np];
    for (ri, row) in r.iter().zip(j) {
        for p in 0..np {
            g[p] += row[p] * ri;
            for q in 0..np {
                a[p][q] += row[p] * row[q];
            }
        }
    }
    (a, g)
}

fn solve_small(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let m = Mat::<f64>::from_fn(n, n, |i, j| a[i][j]);
    let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = m.full_piv_lu().solve(&rhs);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    out.iter().all(|v| v.is_finite()).then_some(out)
}

pub fn levenberg_marquardt(prob: &LmProblem<'_>, p0: &[f64]) -> LmResult {
    let np = p0.len();
    let mut p = p0.to_vec();
    project(&mut p, &prob.lower, &prob.upper);
    let (mut r, mut j) = (prob.eval)(&p);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut it = 0;
    while it < MAX_ITER {
        it += 1;
        let (a, g) = normal_equations(&r, &j, np);
        // components pushing into an active bound are frozen for this step
        let active: Vec<bool> = (0..np)
            .map(|k| (p[k] <= prob.lower[k] && g[k] > 0.0) || (p[k] >= prob.upper[k] && g[k] < 0.0))
            .collect();
        let gnorm = (0..np).filter(|&k| !active[k]).map(|k| g[k].abs()).fold(0.0, f64::max);
        if gnorm <= GRAD_TOL {
            converged = true;
            break;
        }
        let mut improved = false;
        for _ in 0..60 {
            let mut damped = a.clone();
            for k in 0..np {
                damped[k][k] += lambda * a[k][k].max(1e-12);
            }
            let mut neg_g: Vec<f64> = g.iter().map(|x| -x).collect();
            for k in (0..np).filter(|&k| active[k]) {
                for q in 0..np {
                    damped[k][q] = 0.0;
                    damped[q][k] = 0.0;
                }
                damped[k][k] = 1.0;
                neg_g[k] = 0.0;
            }
            let Some(step) = solve_small(&damped, &neg_g) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            project(&mut trial, &prob.lower, &prob.upper);
            let (rt, jt) = (prob.eval)(&trial);
            let ct: f64 = rt.iter().map(|x| x * x).sum();
            if ct.is_finite() && ct <= cost {
                let rel = (cost - ct) / cost.max(1e-300);
                let moved = trial.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                p = trial;
                r = rt;
                j = jt;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                if rel < 1e-15 && moved < 1e-14 * p.iter().fold(1.0f64, |m, x| m.max(x.abs())) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                break;
            }
        }
        if !improved {
            // no descent direction left at machine precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    let (a, _) = normal_equations(&r, &j, np);
    let jtj_inverse = {
        let cols: Option<Vec<Vec<f64>>> = (0..np)
            .map(|k| {
                let e: Vec<f64> = (0..np).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
                solve_small(&a, &e)
            })
            .collect();
        cols.map(|c| (0..np).map(|i| (0..np).map(|k| c[k][i]).collect()).collect())
    };
    LmResult { params: p, cost, iterations: it, converged, jtj_inverse }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// s⁻¹
    pub r_p: f64,
    /// s⁻¹
    pub r_d: f64,
    pub amplitude: f64,
    pub residual_norm: f64,
    pub converged: bool,
    /// The trace does not cover three decay constants.
    pub insufficient_span: bool,
    /// The trace shows no decay at all.
    pub non_decaying: bool,
}

impl DecayFit {
    /// Inverse of the time at which √(R_p t) + R_d t = 1. Reduces to R_d for
    /// a pure exponential and to R_p for a pure stretched decay.
    pub fn e_folding_rate(&self) -> f64 {
        let (p, d) = (self.r_p.max(0.0), self.r_d.max(0.0));
        if d == 0.0 {
            return p;
        }
        // d u² + √p u - 1 = 0 with u = √t
        let u = (-p.sqrt() + (p + 4.0 * d).sqrt()) / (2.0 * d);
        1.0 / (u * u)
    }
}

fn ols(xs: &[Vec<f64>], ys: &[f64]) -> Option<Vec<f64>> {
    let np = xs[0].len();
    let mut a = vec![vec![0.0; np]; np];
    let mut b = vec![0.0; np];
    for (row, y) in xs.iter().zip(ys) {
        for p in 0..np {
            b[p] += row[p] * y;
            for q in 0..np {
                a[p][q] += row[p] * row[q];
            }
        }
    }
    solve_small(&a, &b)
}

/// Smallest variance used in the decay-fit weights, relative to the
/// largest fitted variance.
pub const DECAY_WEIGHT_FLOOR: f64 = 1e-6;
const DECAY_REWEIGHT_PASSES: usize = 3;

/// Residual weighting of the decay fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayWeighting {
    /// Plain least squares. Right for deterministic model traces and for
    /// additive noise.
    #[default]
    Uniform,
    /// Reweighted by a variance a + b m² fitted to the residuals. Use for
    /// noise proportional to the signal: there the tail carries R_d, and
    /// uniform weights leave it almost unconstrained.
    VarianceModel,
}

/// Fit A e^{-√(R_p t)} e^{-R_d t} by least squares.
pub fn fit_product_decay(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    fit_product_decay_weighted(times, values, DecayWeighting::Uniform)
}

pub fn fit_product_decay_weighted(times: &[f64], values: &[f64], weighting: DecayWeighting) -> Result<DecayFit> {
    if times.len() != values.len() {
        return invalid("times and values differ in length");
    }
    if times.len() < 8 {
        return invalid("product-decay fit needs at least 8 samples");
    }
    if !(values[0] > 0.0) {
        return invalid("product-decay fit needs a positive initial value");
    }
    if times.iter().chain(values).any(|x| !x.is_finite()) || times.iter().any(|&t| t < 0.0) {
        return invalid("times must be finite and nonnegative, values finite");
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    if !(t_max > 0.0) {
        return invalid("time span must be positive");
    }
    let y_scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tau: Vec<f64> = times.iter().map(|t| t / t_max).collect();
    let y: Vec<f64> = values.iter().map(|v| v / y_scale).collect();

    // R_d from the log-slope of the final third, R_p from the early-time
    // residual after removing that exponential, then a joint log-linear
    // refinement over all positive samples.
    let n = tau.len();
    let third: Vec<usize> = (2 * n / 3..n).filter(|&k| y[k] > 0.0).collect();
    let mut rd0 = 0.0;
    if third.len() >= 2 {
        let xs: Vec<Vec<f64>> = third.iter().map(|&k| vec![1.0, tau[k]]).collect();
        let ys: Vec<f64> = third.iter().map(|&k| y[k].ln()).collect();
        if let Some(c) = ols(&xs, &ys) {
            rd0 = (-c[1]).max(0.0);
        }
    }
    let early: Vec<usize> = (1..(n / 3).max(2)).filter(|&k| y[k] > 0.0 && tau[k] > 0.0).collect();
    let a0 = y[0].max(1e-300);
    let mut u0 = 0.0;
    if !early.is_empty() {
        let est: Vec<f64> = early
            .iter()
            .map(|&k| ((a0 / y[k]).ln() - rd0 * tau[k]).max(0.0) / tau[k].sqrt())
            .collect();
        u0 = est.iter().sum::<f64>() / est.len() as f64;
    }
    let mut p0 = vec![a0, u0, rd0];
    let pos: Vec<usize> = (0..n).filter(|&k| y[k] > 1e-6).collect();
    if pos.len() >= 3 {
        let xs: Vec<Vec<f64>> = pos.iter().map(|&k| vec![1.0, -tau[k].sqrt(), -tau[k]]).collect();
        let ys: Vec<f64> = pos.iter().map(|&k| y[k].ln()).collect();
        if let Some(c) = ols(&xs, &ys) {
            let cand = vec![c[0].exp(), c[1].max(0.0), c[2].max(0.0)];
            if cand.iter().all(|x| x.is_finite()) {
                p0 = cand;
            }
        }
    }

    // Weights come from the fitted model, never from the samples, so noise
    // cannot pick its own weight.
    let model = |p: &[f64], k: usize| p[0] * (-p[1] * tau[k].sqrt() - p[2] * tau[k]).exp();
    let mut sigma = vec![1.0; n];
    let mut res = None;
    let mut start = p0;
    let passes = match weighting {
        DecayWeighting::Uniform => 0,
        DecayWeighting::VarianceModel => DECAY_REWEIGHT_PASSES,
    };
    for pass in 0..=passes {
        let eval = |p: &[f64]| {
            let (a, u, rd) = (p[0], p[1], p[2]);
            let mut r = Vec::with_capacity(n);
            let mut jac = Vec::with_capacity(n);
            for k in 0..n {
                let s = tau[k].sqrt();
                let e = (-u * s - rd * tau[k]).exp();
                let w = 1.0 / sigma[k];
                r.push(w * (a * e - y[k]));
                jac.push(vec![w * e, -w * a * s * e, -w * a * tau[k] * e]);
            }
            (r, jac)
        };
        let prob = LmProblem {
            eval: &eval,
            lower: vec![f64::NEG_INFINITY, 0.0, 0.0],
            upper: vec![f64::INFINITY; 3],
        };
        let r = levenberg_marquardt(&prob, &start);
        start = r.params.clone();
        res = Some(r);
        if pass == passes {
            break;
        }
        let m: Vec<f64> = (0..n).map(|k| model(&start, k)).collect();
        let xs: Vec<Vec<f64>> = m.iter().map(|v| vec![1.0, v * v]).collect();
        let e2: Vec<f64> = m.iter().zip(&y).map(|(m, y)| (y - m).powi(2)).collect();
        let Some(v) = ols(&xs, &e2) else { break };
        let (va, vb) = (v[0].max(0.0), v[1].max(0.0));
        let var_floor = (DECAY_WEIGHT_FLOOR * (va + vb)).max(1e-300);
        sigma = m.iter().map(|m| (va + vb * m * m).max(var_floor).sqrt()).collect();
    }
    let res = res.expect("at least one pass");
    let (a, u, rd) = (res.params[0], res.params[1], res.params[2]);
    let residual: f64 = (0..n)
        .map(|k| (a * (-u * tau[k].sqrt() - rd * tau[k]).exp() - y[k]).powi(2))
        .sum::<f64>()
        .sqrt();
    let r_p = u * u / t_max;
    let r_d = rd / t_max;
    // decay exponent reached at the last sample
    let exponent = u + rd;
    let non_decaying = exponent < 1e-8;
    Ok(DecayFit {
        r_p,
        r_d,
        amplitude: a * y_scale,
        residual_norm: residual * y_scale,
        converged: res.converged,
        insufficient_span: exponent < 3.0,
        non_decaying,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFit {
    /// Hz
    pub center: f64,
    /// half width at half maximum, Hz
    pub width: f64,
    /// peak height above background, same unit as the input values
    pub amplitude: f64,
    pub amplitude_stderr: f64,
    /// background c0 + c1 δω
    pub background: [f64; 2],
    pub residual_norm: f64,
    pub converged: bool,
    pub detected: bool,
}

/// Lorentzian plus linear background:
/// y = A w² / ((x - x0)² + w²) + c0 + c1 x.
pub fn lorentzian_model(p: &[f64; 5], x: f64) -> f64 {
    let [x0, w, a, c0, c1] = *p;
    a * w * w / ((x - x0) * (x - x0) + w * w) + c0 + c1 * x
}

pub fn fit_lorentzian_sweep(x: &[f64], y: &[f64]) -> Result<ResonanceFit> {
    if x.len() != y.len() {
        return invalid("grid and values differ in length");
    }
    let n = x.len();
    if n < 10 {
        return invalid("Lorentzian fit needs at least 10 points");
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return invalid("non-finite sweep data");
    }
    let xmin = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let xmax = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = xmax - xmin;
    if !(span > 0.0) {
        return invalid("grid must span a positive range");
    }
    // work in scaled coordinates: s = (x - xmid)/span, values / ymax
    let xmid = 0.5 * (xmin + xmax);
    let ysc = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let s: Vec<f64> = x.iter().map(|v| (v - xmid) / span).collect();
    let z: Vec<f64> = y.iter().map(|v| v / ysc).collect();

    // initial background from the outer fifth on each side
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| s[a].partial_cmp(&s[b]).unwrap());
    let k5 = (n / 5).max(2);
    let outer: Vec<usize> = idx[..k5].iter().chain(&idx[n - k5..]).cloned().collect();
    let bg = ols(
        &outer.iter().map(|&k| vec![1.0, s[k]]).collect::<Vec<_>>(),
        &outer.iter().map(|&k| z[k]).collect::<Vec<_>>(),
    )
    .unwrap_or(vec![0.0, 0.0]);
    let resid: Vec<f64> = (0..n).map(|k| z[k] - bg[0] - bg[1] * s[k]).collect();
    let kmax = (0..n).max_by(|&a, &b| resid[a].partial_cmp(&resid[b]).unwrap()).unwrap();
    let amp0 = resid[kmax].max(0.0);
    let half = 0.5 * amp0;
    let above = (0..n).filter(|&k| resid[k] >= half).count().max(1);
    let w0 = (0.5 * above as f64 / n as f64).max(2.0 / n as f64);
    let p0 = vec![s[kmax], w0, amp0, bg[0], bg[1]];

    let eval = |p: &[f64]| {
        let (x0, w, a, c0, c1) = (p[0], p[1], p[2], p[3], p[4]);
        let mut r = Vec::with_capacity(n);
        let mut jac = Vec::with_capacity(n);
        for k in 0..n {
            let d = s[k] - x0;
            let den = d * d + w * w;
            let l = w * w / den;
            r.push(a * l + c0 + c1 * s[k] - z[k]);
            let dl_dx0 = 2.0 * w * w * d / (den * den);
            let dl_dw = 2.0 * w * d * d / (den * den);
            jac.push(vec![a * dl_dx0, a * dl_dw, l, 1.0, s[k]]);
        }
        (r, jac)
    };
    let prob = LmProblem {
        eval: &eval,
        lower: vec![-1.0, 1e-6, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        upper: vec![1.0, 2.0, f64::INFINITY, f64::INFINITY, f64::INFINITY],
    };
    let res = levenberg_marquardt(&prob, &p0);
    let p = &res.params;
    let dof = (n - 5).max(1) as f64;
    let sigma2 = res.cost / dof;
    let a_se = res
        .jtj_inverse
        .as_ref()
        .map(|c| (c[2][2] * sigma2).max(0.0).sqrt())
        .unwrap_or(f64::INFINITY);
    let width = p[1] * span;
    let detected = p[2] > 0.0
        && p[2] > 3.0 * a_se
        && p[2] > 1e-9
        && width < 0.5 * span
        && p[0] > -0.5
        && p[0] < 0.5;
    let c1 = p[4] * ysc / span;
    let c0 = p[3] * ysc - c1 * xmid;
    Ok(ResonanceFit {
        center: xmid + p[0] * span,
        width,
        amplitude: p[2] * ysc,
        amplitude_stderr: a_se * ysc,
        background: [c0, c1],
        residual_norm: res.cost.sqrt() * ysc,
        converged: res.converged,
        detected,
    })
}

/// Fit each predicted centre inside its own window of ± `half_window`.
pub fn fit_lorentzian_windows(x: &[f64], y: &[f64], centers: &[f64], half_window: f64) -> Vec<Result<ResonanceFit>> {
    centers
        .iter()
        .map(|&c| {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                x.iter().zip(y).filter(|(xv, _)| (**xv - c).abs() <= half_window).map(|(a, b)| (*a, *b)).unzip();
            fit_lorentzian_sweep(&xs, &ys)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub stderr: f64,
    /// 95 % confidence interval
    pub ci95: [f64; 2],
    pub n_used: usize,
}

/// log-log regression of amplitude against drive frequency.
pub fn scaling_check(points: &[(f64, f64)]) -> Result<ScalingFit> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|(w, a)| {
            let ok = *w > 0.0 && *a > 0.0 && w.is_finite() && a.is_finite();
            if !ok {
                log::warn!("scaling check drops nonpositive point ({w}, {a})");
            }
            ok
        })
        .map(|(w, a)| (w.ln(), a.ln()))
        .collect();
    if used.len() < 3 {
        return invalid("scaling check needs at least 3 positive points");
    }
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return invalid("scaling check needs distinct drive frequencies");
    }
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rss: f64 = used.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    let dof = n - 2.0;
    let se = if dof > 0.0 { (rss / dof / sxx).sqrt() } else { 0.0 };
    let tq = StudentsT::new(0.0, 1.0, dof.max(1.0)).map(|t| t.inverse_cdf(0.975)).unwrap_or(12.706);
    Ok(ScalingFit { exponent: slope, stderr: se, ci95: [slope - tq * se, slope + tq * se], n_used: used.len() })
}
