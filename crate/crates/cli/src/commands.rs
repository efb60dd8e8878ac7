use std::path::Path;

use bifloq::consts::DIAMOND_A0;
use bifloq::lattice::sample_cluster;
use bifloq::{
    compose_one_cycle, ensemble_sweep, find_resonances, fit_lorentzian_sweep, fit_lorentzian_windows,
    fit_product_decay_weighted, prethermal_state, AnalyticRateModel, ToyModelSpec,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{self, FitKind};
use crate::output::{emit, num, Artifact};
use crate::{CliError, Globals};

pub fn resonances(g: &Globals) -> Result<(), CliError> {
    let cfg: config::Resonances = config::load(g.config.as_deref())?;
    let template = cfg.drive.template()?;
    let mut art = Artifact::new("resonances", g.seed, &cfg)?;
    art.row(["k", "detuning_hz", "omega_eff_hz"])?;
    for &k in &cfg.orders {
        for r in find_resonances(&template, k, (cfg.range_hz[0], cfg.range_hz[1]), cfg.n_scan)? {
            art.row([r.k.to_string(), num(r.detuning), num(r.omega_eff)])?;
        }
    }
    art.finish(g.out.as_deref())
}

pub fn rates_analytic(g: &Globals) -> Result<(), CliError> {
    let mut cfg: config::RatesAnalytic = config::load(g.config.as_deref())?;
    if let Some(e) = g.tol.eps_res {
        cfg.eps_res = e;
    }
    let grid = cfg.sweep.values()?;
    let geometry = config::load_geometry(&cfg.geometry, g.config.as_deref())?;
    let mut model = AnalyticRateModel::new(geometry, cfg.drive.template()?, cfg.t1e_s)?;
    model.eps_res = cfg.eps_res;
    let lines = model.lines(&cfg.orders, (cfg.range_hz[0], cfg.range_hz[1]))?;
    let rates = grid.par_iter().map(|&d| model.rate(d, &lines)).collect::<bifloq::Result<Vec<_>>>()?;

    let mut art = Artifact::new("rates-analytic", g.seed, &cfg)?;
    for l in &lines {
        art.note(format!("line k={} m_s={} center_hz={} amplitude={}", l.k, l.m_s, l.center, l.amplitude));
    }
    art.row(["detuning_hz", "r_kick", "r_2sf", "r_3sf", "total"])?;
    for r in rates {
        art.row([num(r.detuning), num(r.r_kick), num(r.r_2sf), num(r.r_3sf), num(r.total)])?;
    }
    art.finish(g.out.as_deref())
}

pub fn sweep_exact(g: &Globals) -> Result<(), CliError> {
    let cfg: config::SweepExact = config::load(g.config.as_deref())?;
    let grid = cfg.sweep.values()?;
    let geometry = config::load_geometry(&cfg.geometry, g.config.as_deref())?;
    let template = cfg.drive.template()?;
    let mut base = ToyModelSpec::new(geometry, template, cfg.t1e_s)?;
    base.lindblad_rate = cfg.lindblad_rate_hz;
    base.t_max = cfg.t_max_s;
    base.samples = cfg.samples;
    base.transient = cfg.transient_s;
    base.dim_cap = cfg.dim_cap;
    base.validate()?;

    let rows = grid
        .par_iter()
        .map(|&d| {
            let spec = ToyModelSpec { drive: template.with_detuning(d), ..base.clone() };
            let trace = bifloq::exactsim::propagate_stroboscopic(&spec)?;
            let fit = bifloq::exactsim::extract_heating_rate(&trace, spec.transient)?;
            let plateau: Vec<f64> = trace
                .times
                .iter()
                .zip(&trace.m_pre)
                .filter(|(t, _)| **t >= 0.5 * spec.transient && **t <= spec.transient)
                .map(|(_, m)| *m)
                .collect();
            let m_pre = if plateau.is_empty() { f64::NAN } else { plateau.iter().sum::<f64>() / plateau.len() as f64 };
            Ok((d, fit, m_pre))
        })
        .collect::<bifloq::Result<Vec<_>>>()?;

    let mut art = Artifact::new("sweep-exact", g.seed, &cfg)?;
    art.row(["detuning_hz", "R_p", "R_d", "e_folding_rate", "m_pre", "converged", "insufficient_span"])?;
    for (d, f, m) in rows {
        art.row([
            num(d),
            num(f.r_p),
            num(f.r_d),
            num(f.e_folding_rate()),
            num(m),
            f.converged.to_string(),
            f.insufficient_span.to_string(),
        ])?;
    }
    art.finish(g.out.as_deref())
}

pub fn sweep_mc(g: &Globals) -> Result<(), CliError> {
    let mut cfg: config::SweepMc = config::load(g.config.as_deref())?;
    if let Some(s) = g.seed_override {
        cfg.seed = s;
    }
    let grid = cfg.sweep.values()?;
    let model = cfg.to_model()?;
    let points = ensemble_sweep(&model, &grid)?;

    let mut art = Artifact::new("sweep-mc", cfg.seed, &cfg)?;
    art.row(["delta_omega_hz", "R_p", "R_d", "n_spins_mean"])?;
    for p in points {
        if p.flagged {
            log::warn!("fit at {} Hz did not converge", p.detuning);
        }
        let (rp, rd) = p.fit.map_or((f64::NAN, f64::NAN), |f| (f.r_p, f.r_d));
        art.row([num(p.detuning), num(rp), num(rd), num(p.n_spins_mean)])?;
    }
    art.finish(g.out.as_deref())
}

pub fn prethermal(g: &Globals) -> Result<(), CliError> {
    let mut cfg: config::Prethermal = config::load(g.config.as_deref())?;
    if let Some(s) = g.seed_override {
        cfg.seed = s;
    }
    let grid = cfg.sweep.values()?;
    if cfg.n_clusters == 0 {
        return Err(CliError::Config("prethermal: n_clusters must be at least 1".into()));
    }
    let full = bifloq::exactsim::prethermal::FULL_STATE_SPINS;
    if cfg.pauli && cfg.n_spins > full {
        return Err(CliError::Config(format!("prethermal: pauli needs n_spins <= {full}")));
    }
    let template = cfg.drive.template()?;
    let clusters = (0..cfg.n_clusters as u64)
        .map(|k| sample_cluster(cfg.occupancy, cfg.n_spins, cfg.seed.wrapping_add(k), DIAMOND_A0))
        .collect::<bifloq::Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|i| (0..clusters.len()).map(move |c| (i, c))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, c)| {
            let st = prethermal_state(&clusters[c], &template.with_detuning(grid[i]))?;
            let pw = match (&st.rho, cfg.pauli) {
                (Some(rho), true) => bifloq::pauli_weight(rho)?,
                _ => f64::NAN,
            };
            Ok((st.m_pre, pw))
        })
        .collect::<bifloq::Result<Vec<_>>>()?;

    let mut art = Artifact::new("prethermal", cfg.seed, &cfg)?;
    let mut head = vec!["detuning_hz", "m_pre", "m_pre_stderr", "m_free"];
    if cfg.pauli {
        head.push("pauli_weight");
    }
    art.row(head)?;
    let nc = clusters.len();
    for (i, &d) in grid.iter().enumerate() {
        let chunk = &results[i * nc..(i + 1) * nc];
        let mean = chunk.iter().map(|r| r.0).sum::<f64>() / nc as f64;
        let var = chunk.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (nc.max(2) - 1) as f64;
        let axis = compose_one_cycle(&template.with_detuning(d))?.axis;
        let m_free = axis[0].abs() * axis[0].hypot(axis[1]);
        let mut row = vec![num(d), num(mean), num((var / nc as f64).sqrt()), num(m_free)];
        if cfg.pauli {
            row.push(num(chunk.iter().map(|r| r.1).sum::<f64>() / nc as f64));
        }
        art.row(row)?;
    }
    art.finish(g.out.as_deref())
}

pub fn fit(g: &Globals) -> Result<(), CliError> {
    let mut cfg: config::Fit = config::load(g.config.as_deref())?;
    if let Some(w) = g.tol.half_window_hz {
        cfg.half_window_hz = w;
    }
    if cfg.input.as_os_str().is_empty() {
        return Err(CliError::Config("fit: input is required".into()));
    }
    let path = config::resolve(g.config.as_deref(), &cfg.input);
    let (x, y) = read_columns(&path, &cfg.x_column, &cfg.y_column)?;

    let result = match cfg.kind {
        FitKind::Decay => {
            let f = fit_product_decay_weighted(&x, &y, cfg.weighting)?;
            let rate = f.e_folding_rate();
            let mut v = serde_json::to_value(f).map_err(|e| CliError::Numerical(e.to_string()))?;
            v["e_folding_rate"] = json!(rate);
            v
        }
        FitKind::Sweep if cfg.centers_hz.is_empty() => {
            serde_json::to_value(fit_lorentzian_sweep(&x, &y)?).map_err(|e| CliError::Numerical(e.to_string()))?
        }
        FitKind::Sweep => {
            let fits = fit_lorentzian_windows(&x, &y, &cfg.centers_hz, cfg.half_window_hz);
            let items: Vec<_> = cfg
                .centers_hz
                .iter()
                .zip(fits)
                .map(|(c, r)| match r {
                    Ok(f) => json!({ "predicted_center_hz": c, "fit": f }),
                    Err(e) => json!({ "predicted_center_hz": c, "error": e.to_string() }),
                })
                .collect();
            json!(items)
        }
    };
    let report = json!({
        "bifloq": env!("CARGO_PKG_VERSION"),
        "command": "fit",
        "seed": g.seed,
        "config": cfg,
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Numerical(e.to_string()))?;
    text.push('\n');
    emit(text.as_bytes(), g.out.as_deref())
}

fn read_columns(path: &Path, xc: &str, yc: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let bad = |m: String| CliError::Config(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("no column {name:?}")));
    let (ix, iy) = (col(xc)?, col(yc)?);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let parse = |i: usize| -> Result<f64, CliError> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("record {}: column {i} is not a number", line + 1)))
        };
        x.push(parse(ix)?);
        y.push(parse(iy)?);
    }
    Ok((x, y))
}
