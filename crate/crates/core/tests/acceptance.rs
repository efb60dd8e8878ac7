//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero on any unexpected outcome.
//!
//! `cargo test --test acceptance -- 1 7` runs a subset by number.
//!
//! A criterion listed in `EXPECTED_FAIL` is one the models cannot meet. Its
//! check still runs in full and still prints FAIL. The suite breaks if such a
//! criterion starts passing, so the list cannot hide a regression or a fix.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use bifloq::bimodal::{decompose, effective_generator, rate_kick, resonant_block, DEFAULT_EPS_RES};
use bifloq::consts::DIAMOND_A0;
use bifloq::drive::{DEFAULT_GRID_POINTS, DEFAULT_N_MAX};
use bifloq::electron::rate_matrix;
use bifloq::exactsim::{extract_heating_rate, one_period_channel, population_rate_matrix, propagate_stroboscopic};
use bifloq::lattice::sample_cluster;
use bifloq::linalg::{c, expm, op_norm, scale, CMat, C64};
use bifloq::montecarlo::{build_transport, scale_factors, Propagator, RelaxationChannel};
use bifloq::wigner::su2_axis_angle;
use bifloq::{
    compose_one_cycle, ensemble_sweep, find_resonances, fit_lorentzian_sweep, fit_product_decay_weighted, pauli_weight,
    prethermal_state, reference_toy_geometry, sample_configuration, scaling_check, AnalyticRateModel, DriveSequence,
    DecayWeighting, DriveTables, LatticeConfig, MonteCarloConfig, ToyModelSpec,
};
use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const EXPECTED_FAIL: &[u32] = &[5];

// 1
const K2_TARGET_HZ: f64 = 4900.0;
const K3_TARGET_HZ: f64 = 2500.0;
const ROOT_TOL_HZ: f64 = 200.0;
const C1_MAX_SECONDS: f64 = 1.0;
// 2
const C2_POINTS: usize = 200;
const ROTATION_TOL: f64 = 1e-9;
const PHASE_TOL: f64 = 1e-9;
const C2_MAX_SECONDS: f64 = 5.0;
// 3
const C3_SPINS: usize = 10;
const C3_CLUSTERS: u64 = 20;
const C3_OCCUPANCIES: [f64; 3] = [1.0, 0.05, 0.011];
/// the dip is read this far either side of each centre
const C3_OFFSET_HZ: f64 = 25.0;
// 4
const C4_SPINS: usize = 6;
const C4_CLUSTERS: u64 = 12;
const C4_OCCUPANCY: f64 = 0.05;
const C4_OFF_CENTER_HZ: f64 = 1000.0;
const C4_MIN_FRACTION: f64 = 0.8;
// 5, 6
const T1E: f64 = 50e-3;
const PEAK_WINDOW_HZ: f64 = 300.0;
const PEAK_MIN_RATIO: f64 = 2.0;
/// local background is interpolated between centre ± this offset
const BACKGROUND_OFFSET_HZ: f64 = 500.0;
const FINE_STEP_HZ: f64 = 2.0;
const FINE_HALF_POINTS: i32 = 15;
const TREND_EXCLUSION_HZ: f64 = 150.0;
// 7
const KICK_EXACT_TOL: f64 = 1e-12;
const KICK_SMALL_EPS: f64 = 0.05;
const KICK_SMALL_TOL: f64 = 0.01;
// 8
/// relative to the summed magnitude of the column
const W_COLUMN_TOL: f64 = 1e-12;
const CONSERVATION_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
// 9
const MC_STEP_HZ: f64 = 250.0;
const MC_MAX_HZ: f64 = 6000.0;
const DIP_CENTER_HZ: f64 = 2300.0;
const DIP_HALF_WINDOW_HZ: f64 = 500.0;
/// minimum fractional depth below the chord through the ±500 Hz neighbours
const DIP_MIN_DEPTH: f64 = 0.02;
const PROMINENCE_FRACTION: f64 = 0.25;
// 10
const DECAY_TRACES: u64 = 100;
const DECAY_RP: f64 = 10.0;
const DECAY_RD: f64 = 1.0;
/// relative to the signal at each sample
const DECAY_NOISE: f64 = 0.01;
const DECAY_SAMPLES: usize = 400;
const DECAY_SPAN_S: f64 = 2.0;
const DECAY_REL_TOL: f64 = 0.05;
const DECAY_MIN_GOOD: usize = 95;
const LORENTZ_SWEEPS: u64 = 20;
const LORENTZ_CENTER_HZ: f64 = 4900.0;
const LORENTZ_WIDTH_HZ: f64 = 300.0;
const LORENTZ_NOISE: f64 = 0.02;
const LORENTZ_CENTER_TOL_HZ: f64 = 50.0;
const LORENTZ_AMP_TOL: f64 = 0.10;
// 11
const SCALING_RANGE: [f64; 2] = [-2.3, -1.7];
const SCALING_STEPS: usize = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn template() -> DriveSequence {
    DriveSequence::pulsed_spin_lock(0.0)
}

fn root(k: u32) -> f64 {
    find_resonances(&template(), k, (0.0, 10_000.0), 400).unwrap()[0].detuning
}

/// |n_x| hypot(n_x, n_y): the stroboscopic in-plane signal of a free spin.
fn free_magnetization(det: f64) -> f64 {
    let n = compose_one_cycle(&template().with_detuning(det)).unwrap().axis;
    n[0].abs() * n[0].hypot(n[1])
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Sampled curve keyed by detuning in mHz, so grids can be merged exactly.
#[derive(Default)]
struct Curve(BTreeMap<i64, f64>);

impl Curve {
    fn key(x: f64) -> i64 {
        (x * 1000.0).round() as i64
    }
    fn at(&self, x: f64) -> f64 {
        self.0[&Self::key(x)]
    }
    fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.0.iter().map(|(k, v)| (*k as f64 / 1000.0, *v))
    }
    /// Fractional height of the curve at x above the chord through x ± h.
    fn prominence(&self, x: f64, h: f64) -> f64 {
        let chord = 0.5 * (self.at(x - h) + self.at(x + h));
        (self.at(x) - chord) / chord
    }
}

// ---------------------------------------------------------------- 1

fn c1() -> Outcome {
    let t0 = Instant::now();
    let k2 = find_resonances(&template(), 2, (0.0, 10_000.0), 400).unwrap();
    let k3 = find_resonances(&template(), 3, (0.0, 10_000.0), 400).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let near = |rs: &[bifloq::Resonance], target: f64| {
        rs.iter().map(|r| r.detuning).min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs())).unwrap()
    };
    let (a, b) = (near(&k2, K2_TARGET_HZ), near(&k3, K3_TARGET_HZ));
    let pass = (a - K2_TARGET_HZ).abs() <= ROOT_TOL_HZ && (b - K3_TARGET_HZ).abs() <= ROOT_TOL_HZ && secs < C1_MAX_SECONDS;
    outcome(pass, format!("k=2 root {a:.1} Hz, k=3 root {b:.1} Hz (tol {ROOT_TOL_HZ} Hz), {secs:.3} s"))
}

// ---------------------------------------------------------------- 2

fn segment(rabi: f64, det: f64, t: f64) -> CMat {
    let h = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => c(0.5 * det, 0.0),
        (1, 1) => c(-0.5 * det, 0.0),
        _ => c(0.5 * rabi, 0.0),
    });
    expm(scale(h.as_ref(), c(0.0, -2.0 * PI * t)).as_ref())
}

fn azimuth(u: &CMat) -> f64 {
    let (_, n) = su2_axis_angle(&[[u[(0, 0)], u[(0, 1)]], [u[(1, 0)], u[(1, 1)]]]);
    n[1].atan2(n[0])
}

fn mod_pi_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

fn c2() -> Outcome {
    let t0 = Instant::now();
    let (mut worst_rot, mut worst_native, mut worst_delay_first) = (0.0f64, 0.0f64, 0.0f64);
    let mut checked = 0;
    for i in 0..C2_POINTS {
        let det = -10_000.0 + 20_000.0 * i as f64 / (C2_POINTS - 1) as f64;
        let d = template().with_detuning(det);
        let eff = compose_one_cycle(&d).unwrap();
        let pulse = segment(d.rabi, det, d.pulse_width);
        let delay = segment(0.0, det, d.period - d.pulse_width);
        let direct = &delay * &pulse;
        let u = eff.rotation();
        let rec = Mat::from_fn(2, 2, |a, b| u[a][b]);
        let err = op_norm((&rec - &direct).as_ref()).min(op_norm((&rec + &direct).as_ref()));
        worst_rot = worst_rot.max(err);
        if eff.degenerate || eff.theta_eff.sin() < 1e-6 {
            continue;
        }
        checked += 1;
        let gamma = d.interpulse_phase();
        worst_native = worst_native.max(mod_pi_distance(eff.phi_eff, 0.5 * gamma));
        // same Floquet operator with the period starting at the delay
        worst_delay_first = worst_delay_first.max(mod_pi_distance(azimuth(&(&pulse * &delay)), -0.5 * gamma));
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst_rot <= ROTATION_TOL
        && worst_native <= PHASE_TOL
        && worst_delay_first <= PHASE_TOL
        && secs < C2_MAX_SECONDS;
    outcome(
        pass,
        format!(
            "max rotation error {worst_rot:.1e} over {C2_POINTS} points; over {checked} nondegenerate points \
             phi_eff = -gamma/2 to {worst_delay_first:.1e} with the period starting at the delay, \
             +gamma/2 to {worst_native:.1e} in the pulse-first frame used internally; {secs:.2} s"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn c3() -> Outcome {
    let t0 = Instant::now();
    let centers = [("k=3", root(3)), ("k=2", root(2))];
    let mut depth = vec![[0.0f64; 2]; C3_OCCUPANCIES.len()];
    for (o, &p) in C3_OCCUPANCIES.iter().enumerate() {
        for seed in 0..C3_CLUSTERS {
            let g = sample_cluster(p, C3_SPINS, seed, DIAMOND_A0).unwrap();
            for (ci, &(_, cen)) in centers.iter().enumerate() {
                for det in [cen - C3_OFFSET_HZ, cen + C3_OFFSET_HZ] {
                    let m = prethermal_state(&g, &template().with_detuning(det)).unwrap().m_pre;
                    depth[o][ci] += (1.0 - m / free_magnetization(det)) / (2 * C3_CLUSTERS) as f64;
                }
            }
        }
    }
    let ordered = |ci: usize| depth[0][ci] > depth[1][ci] && depth[1][ci] > depth[2][ci];
    let pass = ordered(0) && ordered(1);
    let table: Vec<String> = centers
        .iter()
        .enumerate()
        .map(|(ci, (name, _))| {
            format!("{name}: {:.3} > {:.3} > {:.3}", depth[0][ci], depth[1][ci], depth[2][ci])
        })
        .collect();
    outcome(
        pass,
        format!(
            "mean dip depth at 100% / 5% / 1.1% over {C3_CLUSTERS} clusters of {C3_SPINS} spins, {}; {:.0} s",
            table.join(", "),
            t0.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn c4() -> Outcome {
    let center = root(3);
    let weight = |g: &bifloq::SpinClusterGeometry, det: f64| {
        let st = prethermal_state(g, &template().with_detuning(det)).unwrap();
        pauli_weight(st.rho.as_ref().unwrap()).unwrap()
    };
    let mut wins = 0;
    let mut gaps = Vec::new();
    for seed in 0..C4_CLUSTERS {
        let g = sample_cluster(C4_OCCUPANCY, C4_SPINS, seed, DIAMOND_A0).unwrap();
        let (on, off) = (weight(&g, center), weight(&g, center + C4_OFF_CENTER_HZ));
        if on > off {
            wins += 1;
        }
        gaps.push(on - off);
    }
    let frac = wins as f64 / C4_CLUSTERS as f64;
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    outcome(
        frac >= C4_MIN_FRACTION,
        format!("{wins}/{C4_CLUSTERS} clusters heavier on resonance (need {C4_MIN_FRACTION}), mean excess {mean_gap:.3}"),
    )
}

// ---------------------------------------------------------------- 5, 6

struct ToySweep {
    exact: Curve,
    analytic: Curve,
    center: f64,
    line_centers: Vec<f64>,
    trend_grid: Vec<f64>,
    seconds: f64,
}

fn toy_sweep() -> ToySweep {
    let t0 = Instant::now();
    let model = AnalyticRateModel::new(reference_toy_geometry(), template(), T1E).unwrap();
    let center = root(3);
    let lines = model.lines(&[2, 3], (0.0, 10_000.0)).unwrap();
    let line_centers: Vec<f64> =
        lines.iter().filter(|l| l.k == 3 && (l.center - center).abs() < PEAK_WINDOW_HZ).map(|l| l.center).collect();

    let mut grid: Vec<f64> = Vec::new();
    for &lc in &line_centers {
        grid.extend((-FINE_HALF_POINTS..=FINE_HALF_POINTS).map(|j| lc + FINE_STEP_HZ * j as f64));
    }
    grid.extend((-12..=12).map(|j| center + 25.0 * j as f64));
    grid.extend([center - BACKGROUND_OFFSET_HZ, center + BACKGROUND_OFFSET_HZ]);
    let trend_grid: Vec<f64> = (0..=12)
        .map(|j| 1000.0 + 250.0 * j as f64)
        .filter(|x| line_centers.iter().all(|lc| (x - lc).abs() > TREND_EXCLUSION_HZ))
        .collect();
    grid.extend(&trend_grid);

    let (mut exact, mut analytic) = (Curve::default(), Curve::default());
    for x in grid {
        let key = Curve::key(x);
        if exact.0.contains_key(&key) {
            continue;
        }
        let spec = ToyModelSpec::new(reference_toy_geometry(), template().with_detuning(x), T1E).unwrap();
        let trace = propagate_stroboscopic(&spec).unwrap();
        let fit = extract_heating_rate(&trace, spec.transient).unwrap();
        exact.0.insert(key, fit.e_folding_rate());
        analytic.0.insert(key, model.rate(x, &lines).unwrap().total);
    }
    ToySweep { exact, analytic, center, line_centers, trend_grid, seconds: t0.elapsed().as_secs_f64() }
}

struct Peak {
    at: f64,
    value: f64,
    /// value over the interpolated background
    ratio: f64,
    is_local_max: bool,
}

/// The local maximum within the window standing highest over the local
/// background. Falls back to the window argmax, flagged, when there is none.
fn peak(curve: &Curve, center: f64) -> Peak {
    let pts: Vec<(f64, f64)> = curve.points().collect();
    let inside = |i: &usize| (pts[*i].0 - center).abs() <= PEAK_WINDOW_HZ;
    let ratio = |i: usize| pts[i].1 / background(curve, center, pts[i].0);
    let local = (1..pts.len() - 1)
        .filter(inside)
        .filter(|&i| pts[i].1 > pts[i - 1].1 && pts[i].1 > pts[i + 1].1)
        .max_by(|&a, &b| ratio(a).total_cmp(&ratio(b)));
    let (i, is_local_max) = match local {
        Some(i) => (i, true),
        None => ((0..pts.len()).filter(inside).max_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1)).unwrap(), false),
    };
    Peak { at: pts[i].0, value: pts[i].1, ratio: ratio(i), is_local_max }
}

fn background(curve: &Curve, center: f64, at: f64) -> f64 {
    let (x0, x1) = (center - BACKGROUND_OFFSET_HZ, center + BACKGROUND_OFFSET_HZ);
    let (y0, y1) = (curve.at(x0), curve.at(x1));
    y0 + (y1 - y0) * (at - x0) / (x1 - x0)
}

/// Peak height over interpolated background, minus one.
fn exact_prominence(s: &ToySweep) -> f64 {
    peak(&s.exact, s.center).ratio - 1.0
}

fn c5(s: &ToySweep) -> Outcome {
    let p = peak(&s.exact, s.center);
    let offset = p.at - s.center;
    let pass = p.is_local_max && offset.abs() <= PEAK_WINDOW_HZ && p.ratio >= PEAK_MIN_RATIO;
    outcome(
        pass,
        format!(
            "strongest local maximum {:.3e} 1/s at {:.0} Hz ({offset:+.0} Hz from the k=3 centre, local max {}), \
             {:.2}x the interpolated background (need {PEAK_MIN_RATIO}); lines at {:?} Hz; {} points in {:.0} s",
            p.value,
            p.at,
            p.is_local_max,
            p.ratio,
            s.line_centers.iter().map(|x| x.round()).collect::<Vec<_>>(),
            s.exact.0.len(),
            s.seconds
        ),
    )
}

fn c6(s: &ToySweep) -> Outcome {
    let pe = peak(&s.exact, s.center);
    let pa = peak(&s.analytic, s.center);
    let trend = |c: &Curve| ols_slope(&s.trend_grid.iter().map(|&x| (x, c.at(x))).collect::<Vec<_>>());
    let (te, ta) = (trend(&s.exact), trend(&s.analytic));
    let pass = pe.is_local_max
        && pa.is_local_max
        && (pe.at - pa.at).abs() <= PEAK_WINDOW_HZ
        && te.signum() == ta.signum()
        && te != 0.0;
    outcome(
        pass,
        format!(
            "peak at {:.0} Hz exact ({:.2}x background) vs {:.0} Hz analytic ({:.2}x) (tol {PEAK_WINDOW_HZ} Hz); \
             background slope {te:.2e} vs {ta:.2e} 1/s/Hz",
            pe.at, pe.ratio, pa.at, pa.ratio
        ),
    )
}

// ---------------------------------------------------------------- 7

fn c7() -> Outcome {
    let zero = rate_kick(0.0, T1E).unwrap();
    let third = rate_kick(PI / 3.0, T1E).unwrap();
    let want = 20.0 * std::f64::consts::LN_2;
    let small = rate_kick(KICK_SMALL_EPS, T1E).unwrap();
    let approx = KICK_SMALL_EPS * KICK_SMALL_EPS / (2.0 * T1E);
    let rel = (small / approx - 1.0).abs();
    let pass = zero == 0.0 && ((third - want) / want).abs() <= KICK_EXACT_TOL && rel <= KICK_SMALL_TOL;
    outcome(
        pass,
        format!("R(0) = {zero}, R(pi/3) = {third} vs 20 ln 2 = {want}, small-angle deviation {:.3}%", 100.0 * rel),
    )
}

// ---------------------------------------------------------------- 8

fn c8() -> Outcome {
    let mc = MonteCarloConfig::default();
    let (mut worst_col, mut worst_cons, mut configs) = (0.0f64, 0.0f64, 0);
    for k in 0..10 {
        let cfg = LatticeConfig { seed: mc.config_seed(k), ..mc.lattice.clone() };
        let Ok(g) = sample_configuration(&cfg) else { continue };
        configs += 1;
        for det in [0.0, 2000.0, 4807.0] {
            let t = DriveTables::build(&template().with_detuning(det), DEFAULT_N_MAX, DEFAULT_GRID_POINTS).unwrap();
            let f = scale_factors(&t).unwrap();
            let m = build_transport(&g, &f, mc.eta, mc.kappa2_j0, RelaxationChannel::NonSecular).unwrap();
            for j in 0..m.n() {
                let col = (0..m.n()).map(|i| m.transport[(i, j)]);
                let scale = col.clone().map(f64::abs).sum::<f64>().max(f64::MIN_POSITIVE);
                worst_col = worst_col.max(col.sum::<f64>().abs() / scale);
            }
            let closed = build_transport(&g, &f, 0.0, mc.kappa2_j0, RelaxationChannel::NonSecular).unwrap();
            let mean = Propagator::new(&closed).unwrap().mean(&vec![1.0; closed.n()], &mc.time_grid);
            worst_cons = worst_cons.max(mean.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
        }
    }

    let mut worst_trace = 0.0f64;
    for det in [0.0, 2442.0, 4807.0] {
        let spec = ToyModelSpec::new(reference_toy_geometry(), template().with_detuning(det), T1E).unwrap();
        let phi = one_period_channel(&spec, false).unwrap();
        let d = spec.hilbert_dim();
        for col in 0..d * d {
            let tr: C64 = (0..d).map(|i| phi[(i * d + i, col)]).sum();
            let want = if col % (d + 1) == 0 { 1.0 } else { 0.0 };
            worst_trace = worst_trace.max((tr - want).norm());
        }
    }

    let w = rate_matrix(2, T1E).unwrap();
    let exact_zero = (0..3).all(|i| w[i].iter().sum::<f64>() == 0.0 && (0..3).map(|j| w[j][i]).sum::<f64>() == 0.0);
    let spec = ToyModelSpec::new(reference_toy_geometry(), template(), T1E).unwrap();
    let projected = population_rate_matrix(&spec).unwrap();
    let proj_err = (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| (projected[i][j] - w[i][j]).abs()).fold(0.0, f64::max);

    let pass = configs > 0
        && worst_col <= W_COLUMN_TOL
        && worst_cons <= CONSERVATION_TOL
        && worst_trace <= TRACE_TOL
        && exact_zero;
    outcome(
        pass,
        format!(
            "W column sums {worst_col:.1e} relative to the column magnitude over {configs} configurations, polarization drift with R = 0 {worst_cons:.1e}, \
             channel trace error {worst_trace:.1e}, NV w sums exactly zero: {exact_zero} \
             (generator projection matches w to {proj_err:.1e})"
        ),
    )
}

// ---------------------------------------------------------------- 9

fn c9(toy: &ToySweep) -> Outcome {
    let t0 = Instant::now();
    let cfg = MonteCarloConfig::default();
    let (k3, k2) = (root(3), root(2));
    let mut grid: Vec<f64> = (0..=(MC_MAX_HZ / MC_STEP_HZ) as usize).map(|j| MC_STEP_HZ * j as f64).collect();
    for c in [k3, k2] {
        grid.extend([c - BACKGROUND_OFFSET_HZ, c, c + BACKGROUND_OFFSET_HZ]);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| Curve::key(*a) == Curve::key(*b));
    let sweep = ensemble_sweep(&cfg, &grid).unwrap();
    let mut r = Curve::default();
    for p in &sweep {
        r.0.insert(Curve::key(p.detuning), p.fit.as_ref().map_or(f64::NAN, |f| f.r_p));
    }
    let pts: Vec<(f64, f64)> = r.points().collect();
    let slope = ols_slope(&pts);
    let (first, last) = (r.at(0.0), r.at(MC_MAX_HZ));
    let decreasing = slope < 0.0 && last < first;

    let (dip_at, dip) = pts
        .iter()
        .filter(|(x, _)| (x - DIP_CENTER_HZ).abs() <= DIP_HALF_WINDOW_HZ)
        .filter(|(x, _)| r.0.contains_key(&Curve::key(x - BACKGROUND_OFFSET_HZ)) && r.0.contains_key(&Curve::key(x + BACKGROUND_OFFSET_HZ)))
        .map(|&(x, _)| (x, -r.prominence(x, BACKGROUND_OFFSET_HZ)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();

    let exact_prom = exact_prominence(toy);
    let limit = PROMINENCE_FRACTION * exact_prom;
    let (p3, p2) = (r.prominence(k3, BACKGROUND_OFFSET_HZ), r.prominence(k2, BACKGROUND_OFFSET_HZ));
    let pass = decreasing && dip >= DIP_MIN_DEPTH && p3 <= limit && p2 <= limit && sweep.iter().all(|p| p.fit.is_some());
    outcome(
        pass,
        format!(
            "R_p {first:.1} -> {last:.1} 1/s over 0..6 kHz, slope {slope:.2e}; deepest dip {:.1}% at {dip_at:.0} Hz \
             (need {:.0}%); prominence at {k3:.0} / {k2:.0} Hz {:+.3} / {:+.3} vs limit {limit:.3} \
             (exact toy peak {exact_prom:.3}); {} configs, {:.0} s",
            100.0 * dip,
            100.0 * DIP_MIN_DEPTH,
            p3,
            p2,
            cfg.n_configs,
            t0.elapsed().as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 10

fn c10() -> Outcome {
    let t: Vec<f64> = (0..DECAY_SAMPLES).map(|k| DECAY_SPAN_S * k as f64 / (DECAY_SAMPLES - 1) as f64).collect();
    let mut good = 0;
    for seed in 0..DECAY_TRACES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, DECAY_NOISE).unwrap();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| (-(DECAY_RP * t).sqrt() - DECAY_RD * t).exp() * (1.0 + noise.sample(&mut rng)))
            .collect();
        let f = fit_product_decay_weighted(&t, &y, DecayWeighting::VarianceModel).unwrap();
        if (f.r_p / DECAY_RP - 1.0).abs() <= DECAY_REL_TOL && (f.r_d / DECAY_RD - 1.0).abs() <= DECAY_REL_TOL {
            good += 1;
        }
    }

    let x: Vec<f64> = (0..81).map(|k| 3000.0 + 50.0 * k as f64).collect();
    let amp = 5.0;
    let (mut worst_c, mut worst_a) = (0.0f64, 0.0f64);
    for seed in 0..LORENTZ_SWEEPS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let noise = Normal::new(0.0, LORENTZ_NOISE).unwrap();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                let l = amp * LORENTZ_WIDTH_HZ.powi(2) / ((v - LORENTZ_CENTER_HZ).powi(2) + LORENTZ_WIDTH_HZ.powi(2));
                (l + 10.0 - 1e-3 * v) * (1.0 + noise.sample(&mut rng))
            })
            .collect();
        let f = fit_lorentzian_sweep(&x, &y).unwrap();
        worst_c = worst_c.max((f.center - LORENTZ_CENTER_HZ).abs());
        worst_a = worst_a.max((f.amplitude / amp - 1.0).abs());
    }
    let pass = good >= DECAY_MIN_GOOD && worst_c <= LORENTZ_CENTER_TOL_HZ && worst_a <= LORENTZ_AMP_TOL;
    outcome(
        pass,
        format!(
            "{good}/{DECAY_TRACES} decay traces within {:.0}%; over {LORENTZ_SWEEPS} sweeps worst centre error \
             {worst_c:.1} Hz, worst amplitude error {:.1}%",
            100.0 * DECAY_REL_TOL,
            100.0 * worst_a
        ),
    )
}

// ---------------------------------------------------------------- 11

fn c11() -> Outcome {
    let g = reference_toy_geometry().without_electrons();
    let mut parts = Vec::new();
    let mut pass = true;
    for k in [2u32, 3] {
        let base = root(k);
        // every drive timescale scales together, so the resonance tracks ω_d
        let pts: Vec<(f64, f64)> = (0..SCALING_STEPS)
            .map(|i| {
                let s = 2f64.powf(i as f64 / (SCALING_STEPS - 1) as f64);
                let t = template();
                let d = DriveSequence {
                    pulse_width: t.pulse_width / s,
                    period: t.period / s,
                    rabi: t.rabi * s,
                    detuning: base * s,
                };
                let tables = DriveTables::build(&d, DEFAULT_N_MAX, 2048).unwrap();
                let comp = decompose(&g, &tables, &[]).unwrap();
                let gen = effective_generator(&comp, DEFAULT_EPS_RES).unwrap();
                let norm = op_norm(resonant_block(&gen.second_order, g.n_nuclei(), k).as_ref());
                (d.drive_frequency(), norm * norm)
            })
            .collect();
        let fit = scaling_check(&pts).unwrap();
        pass &= fit.exponent >= SCALING_RANGE[0] && fit.exponent <= SCALING_RANGE[1];
        parts.push(format!("k={k} exponent {:.3}", fit.exponent));
    }
    outcome(pass, format!("{} over a 2x span of drive frequency (need {:?})", parts.join(", "), SCALING_RANGE))
}

// ----------------------------------------------------------------

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |id: u32| wanted.is_empty() || wanted.contains(&id);

    let mut results: Vec<(u32, Outcome)> = Vec::new();
    let mut record = |id: u32, o: Outcome| {
        let expected = EXPECTED_FAIL.contains(&id);
        let tag = match (o.pass, expected) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2}: {tag}  {}", o.detail);
        results.push((id, o));
    };

    if run(1) {
        record(1, c1());
    }
    if run(2) {
        record(2, c2());
    }
    if run(7) {
        record(7, c7());
    }
    if run(10) {
        record(10, c10());
    }
    if run(11) {
        record(11, c11());
    }
    if run(8) {
        record(8, c8());
    }
    if run(4) {
        record(4, c4());
    }
    let toy = (run(5) || run(6) || run(9)).then(toy_sweep);
    let toy = toy.as_ref();
    if run(5) {
        record(5, c5(toy.unwrap()));
    }
    if run(6) {
        record(6, c6(toy.unwrap()));
    }
    if run(9) {
        record(9, c9(toy.unwrap()));
    }
    if run(3) {
        record(3, c3());
    }

    let unexpected: Vec<String> = results
        .iter()
        .filter(|(id, o)| o.pass == EXPECTED_FAIL.contains(id))
        .map(|(id, o)| if o.pass { format!("{id} (passes but is listed as failing)") } else { id.to_string() })
        .collect();
    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if !unexpected.is_empty() {
        println!("acceptance: unexpected outcome for criteria {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
