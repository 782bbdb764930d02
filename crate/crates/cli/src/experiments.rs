use impulse_lorenz::flow_integrator::{first_crossing, integrate_dense};
use impulse_lorenz::interval_maps::{fit_empirical_quotient, make_perturbed_family, PerturbationFamily};
use impulse_lorenz::measures_diagnostics::{geometric_grid, stability_sweep, ChainSetup, SweepConfig};
use impulse_lorenz::noise_driver::{NoiseSpec, NoiseStream};
use impulse_lorenz::pdmp::{renewal_stationary, run_chain, simulate_pdmp, time_average, BuiltinObservable};
use impulse_lorenz::quadrature::simpson;
use impulse_lorenz::sections::{build_section_with, SectionPoint, SectionSpec};
use impulse_lorenz::transfer_operators::{
    operator_diagnostics, probe_library, random_operator, stationary_density, ulam_matrix_of, vertical_random_operator,
};
use impulse_lorenz::vector_fields::{casimir, casimir_bound, jacobian, phi0, LorenzField, State3};
use impulse_lorenz::Result;

use crate::config::{Experiment, ExperimentConfig};
use crate::tables::{Cell, Table};

/// What an experiment produced, before anything is written.
pub struct Output {
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
    /// Extra artifacts by file name.
    pub files: Vec<(String, Vec<u8>)>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Output> {
    match cfg.experiment {
        Experiment::FlowCheck => flow_check(cfg),
        Experiment::PdmpRun => pdmp_run(cfg),
        Experiment::QuotientFit => quotient_fit(cfg),
        Experiment::UlamStability => ulam_stability(cfg),
        Experiment::Sweep => sweep(cfg),
        Experiment::RenewalConsistency => renewal_consistency(cfg),
    }
}

fn section(cfg: &ExperimentConfig) -> Result<SectionSpec> {
    build_section_with(cfg.section.kind, cfg.lorenz.params(), &cfg.section.calibration(), &cfg.integrator)
}

/// Uniform draws in `[lo, hi]` from the counter-based generator.
fn uniform_points(seed: u64, n: usize, lo: [f64; 3], hi: [f64; 3]) -> Vec<State3> {
    let unit = NoiseSpec::uniform(1.0, seed);
    (0..n)
        .map(|i| {
            State3::from_fn(|k, _| {
                let t = 0.5 * (unit.coordinate((3 * i + k) as u64) + 1.0);
                lo[k] + t * (hi[k] - lo[k])
            })
        })
        .collect()
}

fn check_row(t: &mut Table, name: &str, value: f64, tol: f64, pass: bool) {
    t.push(vec![name.into(), value.into(), tol.into(), pass.into()]);
}

fn flow_check(cfg: &ExperimentConfig) -> Result<Output> {
    let p = cfg.lorenz.params();
    let base = cfg.perturbation.perturbation();
    let c0 = p.equilibrium();
    let residual = phi0(&p, &c0).norm();
    let mut t = Table::new("flow_check", &["check", "value", "tolerance", "pass"]);
    check_row(&mut t, "equilibrium_residual", residual, 1e-12, residual <= 1e-12);

    let pts = uniform_points(cfg.noise.seed, cfg.flow_check.jacobian_points, [-20.0, -25.0, -45.0], [20.0, 25.0, 15.0]);
    let mut jac_err: f64 = 0.0;
    for y in &pts {
        let j = jacobian(&p, &base.with_eta(0.0), y, None)?;
        let h = 1e-5;
        for k in 0..3 {
            let mut e = State3::zeros();
            e[k] = h;
            let col = (phi0(&p, &(y + e)) - phi0(&p, &(y - e))) / (2.0 * h);
            jac_err = jac_err.max((j.column(k) - col).amax() / (1.0 + j.amax()));
        }
    }
    check_row(&mut t, "jacobian_fd_error", jac_err, 1e-5, jac_err <= 1e-5);

    let starts = uniform_points(cfg.noise.seed.wrapping_add(1), cfg.flow_check.trajectories, [-20.0; 3], [20.0; 3]);
    let mut slack = f64::INFINITY;
    for eta in [-0.1, 0.0, 0.1] {
        let pert = base.with_eta(eta);
        let field = LorenzField::new(p, &pert, None)?;
        for y0 in &starts {
            let traj = integrate_dense(&field, y0, cfg.flow_check.t_max, &cfg.integrator)?;
            let n = (cfg.flow_check.t_max / 0.05).round() as usize;
            for k in 0..=n {
                let s = cfg.flow_check.t_max * k as f64 / n as f64;
                slack = slack.min(casimir_bound(&p, &pert, y0, s)? - casimir(&traj.eval(s)));
            }
        }
    }
    check_row(&mut t, "casimir_bound_slack", slack, -1e-6, slack >= -1e-6);

    let summary = vec![
        format!("phi0(c0) residual: {residual:e}"),
        format!("jacobian finite-difference error: {jac_err:e}"),
        format!("minimum Casimir bound slack: {slack:e}"),
    ];
    Ok(Output { tables: vec![t], summary, files: vec![] })
}

const OBSERVABLES: [BuiltinObservable; 4] =
    [BuiltinObservable::Y1, BuiltinObservable::Y2, BuiltinObservable::Y3, BuiltinObservable::Casimir];

fn pdmp_run(cfg: &ExperimentConfig) -> Result<Output> {
    let p = cfg.lorenz.params();
    let pert = cfg.perturbation.perturbation();
    let sec = section(cfg)?;
    let spec = cfg.noise.spec();
    let y0 = State3::from(cfg.pdmp.start);
    let dt = cfg.pdmp.quadrature_dt;
    let path = simulate_pdmp(&p, &pert, &sec, &y0, &NoiseStream::new(spec), cfg.pdmp.horizon, &cfg.integrator)?;

    let deterministic = spec.epsilon == 0.0 || spec.family == impulse_lorenz::noise_driver::NoiseFamily::Atomic0;
    let birkhoff = if deterministic {
        let field = LorenzField::new(p, &pert.with_eta(0.0), Some(&sec))?;
        Some(integrate_dense(&field, &y0, cfg.pdmp.horizon, &cfg.integrator)?)
    } else {
        None
    };

    let mut avg = Table::new("averages", &["observable", "value", "se", "birkhoff", "difference"]);
    let mut summary = vec![
        format!("horizon: {}", cfg.pdmp.horizon),
        format!("section crossings: {}", path.crossings()),
        format!("mean return time: {}", path.mean_return()),
    ];
    for obs in OBSERVABLES {
        let f = move |y: &State3| obs.eval(y);
        let e = time_average(&path, &sec, &f, dt, &cfg.integrator)?;
        let b = birkhoff
            .as_ref()
            .map(|tr| simpson(&mut |s| obs.eval(&tr.eval(s)), 0.0, cfg.pdmp.horizon, dt) / cfg.pdmp.horizon);
        let diff = b.map_or(f64::NAN, |b| e.value - b);
        avg.push(vec![obs.name().into(), e.value.into(), e.se.into(), b.unwrap_or(f64::NAN).into(), diff.into()]);
        summary.push(match b {
            Some(b) => format!(
                "{}: {} +- {} (deterministic Birkhoff {}, self-consistency {})",
                obs.name(),
                e.value,
                e.se,
                b,
                if diff.abs() <= 3.0 * e.se { "ok" } else { "outside 3 se" }
            ),
            None => format!("{}: {} +- {}", obs.name(), e.value, e.se),
        });
    }

    let mut segs = Table::new("path", &["segment", "eta", "t_start", "duration", "y1", "y2", "y3", "complete"]);
    for (i, s) in path.segments.iter().enumerate() {
        segs.push(vec![
            i.into(),
            s.eta.into(),
            s.start_time.into(),
            s.duration.into(),
            s.entry_point[0].into(),
            s.entry_point[1].into(),
            s.entry_point[2].into(),
            s.complete.into(),
        ]);
    }
    Ok(Output { tables: vec![avg, segs], summary, files: vec![] })
}

fn quotient_fit(cfg: &ExperimentConfig) -> Result<Output> {
    let p = cfg.lorenz.params();
    let sec = section(cfg)?;
    let fit = fit_empirical_quotient(&p, &cfg.perturbation.perturbation(), &sec, &cfg.quotient, &cfg.integrator)?;
    let mut map = Table::new("quotient_map", &["branch", "u", "t"]);
    for (i, br) in fit.map.branches.iter().enumerate() {
        for k in &br.knots {
            map.push(vec![i.into(), k[0].into(), k[1].into()]);
        }
    }
    let mut samples = Table::new("quotient_samples", &["u", "q"]);
    for s in &fit.samples {
        samples.push(vec![s[0].into(), s[1].into()]);
    }
    let summary = vec![
        format!("branches: {}", fit.map.branches.len()),
        format!("component switch u_hat0: {}", fit.u_hat0.map_or("none".into(), |u| u.to_string())),
        format!("dropped: {} of {}", fit.dropped, fit.total),
        format!("semi-conjugacy residual: {}", fit.residual),
        format!("leaf contraction scale: {}", fit.contraction_scale),
    ];
    Ok(Output { tables: vec![map, samples], summary, files: vec![] })
}

fn ulam_stability(cfg: &ExperimentConfig) -> Result<Output> {
    let u = &cfg.ulam;
    let spec = cfg.noise.spec();
    let base = cfg.map.build()?;
    let l0 = ulam_matrix_of(base.as_ref(), u.n_bins, u.samples_per_bin, spec.seed)?;
    let leps = match u.family {
        PerturbationFamily::VerticalAdditive => {
            vertical_random_operator(&cfg.map, &spec, u.n_bins, u.samples_per_bin, u.n_quadrature)?
        }
        family => {
            let fam = |eta: f64| make_perturbed_family(&cfg.map, eta, family);
            random_operator(&fam, &spec, u.n_bins, u.samples_per_bin, u.n_quadrature)?
        }
    };
    let h0 = stationary_density(&l0, 1e-12, 100_000)?;
    let he = stationary_density(&leps, 1e-12, 100_000)?;
    let l1 = impulse_lorenz::measures_diagnostics::l1_density_distance(&he, &h0)?;
    let probes = probe_library(u.n_bins, l0.domain)?;
    let rep = operator_diagnostics(&l0, &leps, &probes, u.alpha, u.eps0)?;

    let mut dens = Table::new("density", &["x", "h0", "h_eps"]);
    for i in 0..u.n_bins {
        let x = h0.domain.0 + h0.bin_width * (i as f64 + 0.5);
        dens.push(vec![x.into(), h0.values[i].into(), he.values[i].into()]);
    }
    let mut t = Table::new(
        "ulam_stability",
        &["epsilon", "seed", "l1", "operator_distance", "kappa_base", "d_base", "kappa_eps", "d_eps"],
    );
    t.push(vec![
        spec.epsilon.into(),
        spec.seed.into(),
        l1.into(),
        rep.distance.into(),
        rep.lasota_yorke_base.kappa.into(),
        rep.lasota_yorke_base.d.into(),
        rep.lasota_yorke_perturbed.kappa.into(),
        rep.lasota_yorke_perturbed.d.into(),
    ]);
    let mut b0 = Vec::new();
    l0.write_binary(&mut b0)?;
    let mut be = Vec::new();
    leps.write_binary(&mut be)?;
    let mut summary = vec![
        format!("bins: {}, samples per bin: {}", u.n_bins, u.samples_per_bin),
        format!("||h_eps - h0||_1 at eps = {}: {}", spec.epsilon, l1),
        format!("operator distance (probe lower bound): {}", rep.distance),
        format!(
            "Lasota-Yorke fit: kappa {} / D {} (base), kappa {} / D {} (perturbed)",
            rep.lasota_yorke_base.kappa,
            rep.lasota_yorke_base.d,
            rep.lasota_yorke_perturbed.kappa,
            rep.lasota_yorke_perturbed.d
        ),
    ];
    if !rep.lasota_yorke_base.contracting || !rep.lasota_yorke_perturbed.contracting {
        summary.push("warning: fitted kappa >= 1".into());
    }
    Ok(Output {
        tables: vec![t, dens],
        summary,
        files: vec![("operator_l0.ulam".into(), b0), ("operator_leps.ulam".into(), be)],
    })
}

fn chain_start(cfg: &ExperimentConfig, sec: &SectionSpec) -> Result<SectionPoint> {
    let p = cfg.lorenz.params();
    let ev = first_crossing(&p, &cfg.perturbation.perturbation(), sec, &State3::from(cfg.pdmp.start), &cfg.integrator)?;
    sec.chart_of(&ev.point)
}

fn sweep(cfg: &ExperimentConfig) -> Result<Output> {
    let s = &cfg.sweep;
    let sc = SweepConfig {
        epsilons: s.epsilons.clone(),
        seed: cfg.noise.seed,
        chain_length: s.chain_length,
        burn_in: s.burn_in,
        n_bins: s.n_bins,
        samples_per_bin: s.samples_per_bin,
        n_quadrature: s.n_quadrature,
        map: cfg.map.clone(),
        lp_grid: geometric_grid(s.lp_grid_min, s.lp_grid_max, s.lp_grid_points),
    };
    let sec;
    let setup = if s.section_route {
        sec = section(cfg)?;
        Some(ChainSetup {
            params: cfg.lorenz.params(),
            perturbation: cfg.perturbation.perturbation(),
            section: &sec,
            start: chain_start(cfg, &sec)?,
            cfg: cfg.integrator,
        })
    } else {
        None
    };
    let r = stability_sweep(&sc, setup.as_ref())?;
    let mut t = Table::new("sweep", &["epsilon", "seed", "l1", "lp", "mean_return", "noise_floor", "lp_noise_floor"]);
    let mut summary =
        vec![format!("L1 noise floor: {}", r.noise_floor), format!("LP noise floor: {}", r.lp_noise_floor)];
    for k in 0..r.epsilons.len() {
        t.push(vec![
            Cell::from(r.epsilons[k]),
            r.seeds[k].into(),
            r.l1_distances[k].into(),
            r.lp_distances[k].into(),
            r.mean_returns[k].into(),
            r.noise_floor.into(),
            r.lp_noise_floor.into(),
        ]);
        if let Some(f) = &r.failures[k] {
            summary.push(format!("eps {} failed: {f}", r.epsilons[k]));
        }
    }
    let l1 = &r.l1_distances;
    summary.push(format!("L1 distances strictly decreasing: {}", l1.windows(2).all(|w| w[1] < w[0])));
    Ok(Output { tables: vec![t], summary, files: vec![] })
}

fn renewal_consistency(cfg: &ExperimentConfig) -> Result<Output> {
    let p = cfg.lorenz.params();
    let pert = cfg.perturbation.perturbation();
    let sec = section(cfg)?;
    let r = &cfg.renewal;
    let spec = cfg.noise.spec();
    let ic = &cfg.integrator;
    let path = simulate_pdmp(&p, &pert, &sec, &State3::from(cfg.pdmp.start), &NoiseStream::new(spec), r.horizon, ic)?;
    let start = chain_start(cfg, &sec)?;
    let chain_spec = NoiseSpec { seed: spec.seed.wrapping_add(1), ..spec };
    let stats = run_chain(&p, &pert, &sec, &start, &NoiseStream::new(chain_spec), r.burn_in, r.chain_length, ic)?;
    let mc = NoiseStream::new(NoiseSpec { seed: spec.seed.wrapping_add(2), ..spec });
    let mut t = Table::new("renewal", &["observable", "time_average", "time_se", "renewal", "renewal_se", "z"]);
    let mut summary = vec![
        format!("horizon: {}, crossings: {}", r.horizon, path.crossings()),
        format!("chain length: {}, Monte Carlo draws: {}", r.chain_length, r.n_mc),
    ];
    for obs in [BuiltinObservable::Y3, BuiltinObservable::Casimir] {
        let f = move |y: &State3| obs.eval(y);
        let ta = time_average(&path, &sec, &f, r.quadrature_dt, ic)?;
        let rs = renewal_stationary(&p, &pert, &sec, &stats, &f, &mc, r.n_mc, r.quadrature_dt, ic)?;
        let z = (ta.value - rs.value).abs() / (ta.se.powi(2) + rs.se.powi(2)).sqrt();
        t.push(vec![obs.name().into(), ta.value.into(), ta.se.into(), rs.value.into(), rs.se.into(), z.into()]);
        summary.push(format!(
            "{}: time average {} +- {}, renewal {} +- {}, z = {:.3} ({})",
            obs.name(),
            ta.value,
            ta.se,
            rs.value,
            rs.se,
            z,
            if z <= 3.0 { "consistent" } else { "inconsistent" }
        ));
    }
    Ok(Output { tables: vec![t], summary, files: vec![] })
}
