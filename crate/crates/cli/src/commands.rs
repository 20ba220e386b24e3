//! One function per subcommand. Each reads the resolved configuration and
//! writes its data files through [`Outputs`].

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use cascopt_core::config::{Config, MeanFieldStart, RunSection};
use cascopt_core::effective::{effective_rates, evolve_effective_covariance, power_for_coupling_ratio, ReducedOptions};
use cascopt_core::gaussinfo::{correlations, extract_mirror_pair, Correlations};
use cascopt_core::linalg::spectral_abscissa;
use cascopt_core::linearized::{build_drift_diffusion, evolve_covariance, steady_covariance, CovarianceState, CovarianceTrajectory, ModeOrdering};
use cascopt_core::meanfield::{integrate_meanfield, multistability_branches, residual_norm, steady_meanfield, BranchSet, Stability};
use cascopt_core::observables::{effective_occupation, effective_temperature, mean_energy, steady_gradient, steady_row, GradientRow, TemperatureTrace};
use cascopt_core::ode::Tolerances;
use cascopt_core::spectra::{
    frequency_grid, lorentzian_approx, output_spectrum, position_spectrum, reconstruct_mirror_spectra, spectral_variance, LorentzianFit, SpectralModel,
    PEAK_PROMINENCE,
};
use cascopt_core::stability::{stability_map, Contour};
use cascopt_core::{MeanFieldState64, Mirror, ModelParams64, PhysicalParams64, Topology};

use crate::output::{tag, Outputs};

pub struct Context {
    pub cfg: Config,
    pub phys: PhysicalParams64,
    pub seed: u64,
    pub out: Outputs,
}

impl Context {
    fn run(&self) -> &RunSection {
        &self.cfg.run
    }

    fn tol(&self) -> Result<Tolerances<f64>> {
        Ok(Tolerances::new(self.run().rtol, self.run().atol)?)
    }

    /// Sample times in units of τ.
    fn tau_grid(&self) -> Vec<f64> {
        let r = self.run();
        (0..r.samples).map(|k| r.t_end * k as f64 / (r.samples - 1) as f64).collect()
    }

    /// The same samples in units of `1/Ω₁`.
    fn model_times(&self, mp: &ModelParams64) -> Vec<f64> {
        self.tau_grid().into_iter().map(|t| mp.from_tau_units(t)).collect()
    }

    fn with_omega2(&self, ratio: f64) -> PhysicalParams64 {
        PhysicalParams64 { omega2: ratio * self.phys.omega1, ..self.phys.clone() }
    }

    /// Covariance trajectory from thermal mirrors and empty cavities, along
    /// the mean field selected by `meanfield_start`.
    fn covariance_trace(&self, mp: &ModelParams64, fixed: &MeanFieldState64) -> Result<CovarianceTrajectory<f64>> {
        let t = self.model_times(mp);
        let c0 = CovarianceState::thermal(mp.nbar);
        let tol = self.tol()?;
        Ok(match self.run().meanfield_start {
            MeanFieldStart::Steady => evolve_covariance(&c0, &MeanFieldState64 { t: 0.0, ..*fixed }, mp, &t, tol)?,
            MeanFieldStart::Zero => {
                let path = integrate_meanfield(&MeanFieldState64::zero(), mp, &t, tol)?;
                evolve_covariance(&c0, &path, mp, &t, tol)?
            }
        })
    }
}

#[derive(Serialize)]
struct FixedPoint {
    q: [f64; 2],
    p: [f64; 2],
    a_re: [f64; 2],
    a_im: [f64; 2],
    photons: [f64; 2],
    /// `Δ − g_j Q_j`, units of Ω₁.
    detuning: [f64; 2],
    /// `|G_j|/κ`.
    coupling_over_kappa: [f64; 2],
    residual: f64,
    /// Largest real part of the drift spectrum; negative when stable.
    spectral_abscissa: f64,
    kappa: f64,
    g: [f64; 2],
    drive: [f64; 2],
    nbar: [f64; 2],
}

fn fixed_point(mp: &ModelParams64, s: &MeanFieldState64) -> FixedPoint {
    let both = |f: &dyn Fn(Mirror) -> f64| [f(Mirror::First), f(Mirror::Second)];
    FixedPoint {
        q: s.q,
        p: s.p,
        a_re: [s.a[0].re, s.a[1].re],
        a_im: [s.a[0].im, s.a[1].im],
        photons: both(&|m| s.photons(m)),
        detuning: both(&|m| s.detuning(mp, m)),
        coupling_over_kappa: both(&|m| s.coupling(mp, m).norm() / mp.kappa),
        residual: residual_norm(s, mp),
        spectral_abscissa: spectral_abscissa(&build_drift_diffusion(s, mp).s),
        kappa: mp.kappa,
        g: mp.g,
        drive: mp.drive,
        nbar: mp.nbar,
    }
}

pub fn meanfield(ctx: &mut Context) -> Result<()> {
    let mp = cascopt_core::params::nondimensionalize(&ctx.phys)?;
    let fixed = steady_meanfield(&mp)?;
    let start = match ctx.run().meanfield_start {
        MeanFieldStart::Steady => MeanFieldState64 { t: 0.0, ..fixed },
        MeanFieldStart::Zero => MeanFieldState64::zero(),
    };
    let traj = integrate_meanfield(&start, &mp, &ctx.model_times(&mp), ctx.tol()?)?;
    let rows = traj.samples.iter().map(|s| {
        let mut r = vec![mp.to_tau_units(s.t)];
        r.extend(s.to_array());
        r.extend([s.photons(Mirror::First), s.photons(Mirror::Second)]);
        r
    });
    let cols = ["t_tau", "q1", "p1", "re_a1", "im_a1", "q2", "p2", "re_a2", "im_a2", "photons1", "photons2"];
    ctx.out.csv("meanfield.csv", &["positions in units of the zero-point spread".into()], &cols, rows.collect::<Vec<_>>())?;
    ctx.out.json("fixed_point.json", &fixed_point(&mp, &fixed))?;
    Ok(())
}

#[derive(Serialize)]
struct SteadySummary {
    hurwitz: bool,
    error: Option<String>,
    n_eff: Option<[f64; 2]>,
    t_eff: Option<[f64; 2]>,
    correlations: Option<Correlations<f64>>,
    min_symplectic: Option<f64>,
}

fn steady_summary(mp: &ModelParams64, fixed: &MeanFieldState64) -> SteadySummary {
    let go = || -> cascopt_core::Result<(CovarianceState<f64>, Correlations<f64>)> {
        let c = steady_covariance(&build_drift_diffusion(fixed, mp))?;
        let corr = correlations(&extract_mirror_pair(&c)?)?;
        Ok((c, corr))
    };
    match go() {
        Ok((c, corr)) => {
            let n = [effective_occupation(&c, Mirror::First), effective_occupation(&c, Mirror::Second)];
            SteadySummary {
                hurwitz: true,
                error: None,
                n_eff: Some(n),
                t_eff: Some([effective_temperature(n[0], mp.omega_si(Mirror::First)), effective_temperature(n[1], mp.omega_si(Mirror::Second))]),
                correlations: Some(corr),
                min_symplectic: Some(c.min_symplectic_eigenvalue()),
            }
        }
        Err(e) => SteadySummary {
            hurwitz: !matches!(e, cascopt_core::Error::NotHurwitz { .. }),
            error: Some(e.to_string()),
            n_eff: None,
            t_eff: None,
            correlations: None,
            min_symplectic: None,
        },
    }
}

pub fn covariance(ctx: &mut Context) -> Result<()> {
    let mp = cascopt_core::params::nondimensionalize(&ctx.phys)?;
    let fixed = steady_meanfield(&mp)?;
    let traj = ctx.covariance_trace(&mp, &fixed)?;
    let mut rows = Vec::with_capacity(traj.states.len());
    for (st, &nu) in traj.states.iter().zip(&traj.min_symplectic) {
        let corr = correlations(&extract_mirror_pair(st)?)?;
        let n = [effective_occupation(st, Mirror::First), effective_occupation(st, Mirror::Second)];
        rows.push(vec![mp.to_tau_units(st.t), n[0], n[1], corr.mutual_info, corr.discord_a_given_b, corr.discord_b_given_a, nu]);
    }
    let cols = ["t_tau", "n1", "n2", "mutual_info", "discord_A_given_B", "discord_B_given_A", "min_symplectic"];
    let note = ["A is mirror 1, B is mirror 2; D(A|B) measures B".to_owned()];
    ctx.out.csv("correlations.csv", &note, &cols, rows)?;

    let labels = CovarianceState::<f64>::upper_labels(ModeOrdering::Full);
    let mut cols = vec!["t_tau"];
    cols.extend(labels.iter().map(String::as_str));
    let rows = traj.states.iter().map(|st| {
        let mut r = vec![mp.to_tau_units(st.t)];
        r.extend(st.upper_triangle());
        r
    });
    ctx.out.csv("covariance.csv", &["C_ij = <{u_i, u_j}>/2, vacuum diagonal 1/2".into()], &cols, rows.collect::<Vec<_>>())?;
    ctx.out.json("steady.json", &steady_summary(&mp, &fixed))?;
    Ok(())
}

#[derive(Serialize)]
struct EffectiveSummary {
    ratio: f64,
    power_w: f64,
    coupling_over_kappa: f64,
    omega_eff: [f64; 2],
    gamma_eff: [f64; 2],
    max_rel_dev: [f64; 2],
}

pub fn effective(ctx: &mut Context) -> Result<()> {
    let opts = ReducedOptions { optical_noise: ctx.run().reduced_optical_noise };
    let tol = ctx.tol()?;
    let ctx_ref = &*ctx;
    let runs: Vec<(EffectiveSummary, Vec<Vec<f64>>)> = ctx
        .run()
        .effective_ratios
        .par_iter()
        .map(|&ratio| -> Result<_> {
            let mut p = ctx_ref.phys.clone();
            p.p1 = power_for_coupling_ratio(&p, ratio)?;
            let mp = cascopt_core::params::nondimensionalize(&p)?;
            let fixed = steady_meanfield(&mp)?;
            let ep = effective_rates(&mp, &fixed);
            let t = ctx_ref.model_times(&mp);
            let c0 = CovarianceState::thermal(mp.nbar);
            let full = evolve_covariance(&c0, &MeanFieldState64 { t: 0.0, ..fixed }, &mp, &t, tol)?;
            let reduced = evolve_effective_covariance(&c0, &ep, &mp, &t, tol, opts)?;
            let mut dev = [0.0f64; 2];
            let rows = full
                .states
                .iter()
                .enumerate()
                .map(|(k, st)| {
                    let nf = [effective_occupation(st, Mirror::First), effective_occupation(st, Mirror::Second)];
                    let nr = [reduced.occupation(k, Mirror::First), reduced.occupation(k, Mirror::Second)];
                    let rel = [(nr[0] - nf[0]).abs() / nf[0].abs(), (nr[1] - nf[1]).abs() / nf[1].abs()];
                    dev = [dev[0].max(rel[0]), dev[1].max(rel[1])];
                    vec![mp.to_tau_units(st.t), nf[0], nf[1], nr[0], nr[1], rel[0], rel[1]]
                })
                .collect();
            let summary = EffectiveSummary {
                ratio,
                power_w: p.p1,
                coupling_over_kappa: fixed.coupling(&mp, Mirror::First).norm() / mp.kappa,
                omega_eff: ep.omega_eff,
                gamma_eff: ep.gamma_eff,
                max_rel_dev: dev,
            };
            Ok((summary, rows))
        })
        .collect::<Result<_>>()?;
    let cols = ["t_tau", "n1_full", "n2_full", "n1_reduced", "n2_reduced", "rel_dev1", "rel_dev2"];
    let mut summaries = Vec::new();
    for (s, rows) in runs {
        let extra = [format!("coupling_ratio={}", crate::output::fmt_f64(s.ratio)), format!("power_w={}", crate::output::fmt_f64(s.power_w))];
        ctx.out.csv(&format!("effective_g{}.csv", tag(s.ratio)), &extra, &cols, rows)?;
        summaries.push(s);
    }
    ctx.out.json("effective_summary.json", &summaries)?;
    Ok(())
}

#[derive(Serialize)]
struct TemperatureSummary {
    omega2_ratio: f64,
    /// Thermalization time of mirror 2 in τ; absent when the trace did not settle.
    t_s: Option<f64>,
    t_eff_final: [f64; 2],
    steady: Option<GradientRow<f64>>,
}

pub fn temperature(ctx: &mut Context) -> Result<()> {
    let r = ctx.run().clone();
    let deltas = r.delta_grid(r.delta_points);
    let mut summaries = Vec::new();
    for &ratio in &r.omega2_list {
        let mp = cascopt_core::params::nondimensionalize(&ctx.with_omega2(ratio))?;
        let fixed = steady_meanfield(&mp)?;
        let traj = ctx.covariance_trace(&mp, &fixed)?;
        let trace = TemperatureTrace::from_states(&traj.states, &mp, r.rel_tol);
        let grad = trace.gradient();
        let omega = [mp.omega_si(Mirror::First), mp.omega_si(Mirror::Second)];
        let rows: Vec<Vec<f64>> = (0..trace.times.len())
            .map(|k| {
                let n = [trace.n_eff[0][k], trace.n_eff[1][k]];
                vec![
                    trace.times[k],
                    n[0],
                    n[1],
                    trace.t_eff[0][k],
                    trace.t_eff[1][k],
                    grad[k],
                    mean_energy(n[0], omega[0], r.energy_offset),
                    mean_energy(n[1], omega[1], r.energy_offset),
                ]
            })
            .collect();
        let extra = [format!("omega2_ratio={}", crate::output::fmt_f64(ratio)), "temperatures in K, energies in J".to_owned()];
        let cols = ["t_tau", "n1", "n2", "T1", "T2", "gradient", "E1", "E2"];
        ctx.out.csv(&format!("temperature_w{}.csv", tag(ratio)), &extra, &cols, rows)?;

        let sweep = steady_gradient(&mp, &deltas);
        let nan = f64::NAN;
        let rows: Vec<Vec<f64>> = sweep
            .iter()
            .map(|pt| match &pt.row {
                Ok(g) => vec![pt.delta, g.n_eff[0], g.n_eff[1], g.t_eff[0], g.t_eff[1], g.gradient, g.mutual_info, 1.0],
                Err(_) => vec![pt.delta, nan, nan, nan, nan, nan, nan, 0.0],
            })
            .collect();
        let extra = [format!("omega2_ratio={}", crate::output::fmt_f64(ratio)), "delta in units of Omega1; stable=0 rows are excluded points".to_owned()];
        let cols = ["delta", "n1", "n2", "T1", "T2", "gradient", "mutual_info", "stable"];
        ctx.out.csv(&format!("gradient_w{}.csv", tag(ratio)), &extra, &cols, rows)?;

        let last = trace.times.len() - 1;
        summaries.push(TemperatureSummary {
            omega2_ratio: ratio,
            t_s: trace.t_s,
            t_eff_final: [trace.t_eff[0][last], trace.t_eff[1][last]],
            steady: steady_row(&mp).ok(),
        });
    }
    ctx.out.json("temperature_summary.json", &summaries)?;
    Ok(())
}

#[derive(Serialize)]
struct LineSummary {
    variance_spectral: f64,
    variance_covariance: Option<f64>,
    lorentzian: Option<LorentzianFit<f64>>,
    peaks: Vec<f64>,
}

#[derive(Serialize)]
struct SpectraSummary {
    omega2_ratio: f64,
    mirrors: Vec<LineSummary>,
    output_peaks: Vec<f64>,
    reconstruction: Option<[LorentzianFit<f64>; 2]>,
    reconstruction_error: Option<String>,
}

pub fn spectra(ctx: &mut Context) -> Result<()> {
    let r = ctx.run().clone();
    let mut summaries = Vec::new();
    for &ratio in &r.spectrum_omega2_list {
        let mp = cascopt_core::params::nondimensionalize(&ctx.with_omega2(ratio))?;
        let fixed = steady_meanfield(&mp)?;
        let w = mp.omega[0].max(mp.omega[1]);
        let grid = frequency_grid(r.spectrum_min * w, r.spectrum_max * w, r.spectrum_points)?;
        let s = [
            position_spectrum(Mirror::First, &mp, &fixed, &grid, r.spectrum_sign)?,
            position_spectrum(Mirror::Second, &mp, &fixed, &grid, r.spectrum_sign)?,
        ];
        let out = output_spectrum(&mp, &fixed, &grid, r.spectrum_sign)?;
        let approx = [lorentzian_approx(Mirror::First, &mp, &fixed).ok(), lorentzian_approx(Mirror::Second, &mp, &fixed).ok()];
        let sm = SpectralModel::new(&mp, &fixed);
        let rows: Vec<Vec<f64>> = grid
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let l = |m: usize| approx[m].map_or(f64::NAN, |a| a.fit.eval(x));
                vec![x, s[0].values[k], s[1].values[k], out.values[k], sm.output_weight(Mirror::First, x), sm.output_weight(Mirror::Second, x), l(0), l(1)]
            })
            .collect();
        let extra = [format!("omega2_ratio={}", crate::output::fmt_f64(ratio)), "omega in units of Omega1; variance = integral of S over [0, inf) / pi".to_owned()];
        let cols = ["omega", "S1", "S2", "P_out", "K1", "K2", "lorentzian1", "lorentzian2"];
        ctx.out.csv(&format!("spectra_w{}.csv", tag(ratio)), &extra, &cols, rows)?;

        let cov = steady_covariance(&build_drift_diffusion(&fixed, &mp)).ok();
        let mut mirrors = Vec::new();
        for m in Mirror::BOTH {
            mirrors.push(LineSummary {
                variance_spectral: spectral_variance(m, &mp, &fixed, r.spectrum_sign)?,
                variance_covariance: cov.as_ref().map(|c| c.mirror_variances(m).0),
                lorentzian: approx[m.index()].map(|a| a.fit),
                peaks: s[m.index()].peaks(PEAK_PROMINENCE).into_iter().map(|k| grid[k]).collect(),
            });
        }
        let (reconstruction, reconstruction_error) = match reconstruct_mirror_spectra(&out, &mp, &fixed, ctx.seed) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        summaries.push(SpectraSummary {
            omega2_ratio: ratio,
            mirrors,
            output_peaks: out.peaks(PEAK_PROMINENCE).into_iter().map(|k| grid[k]).collect(),
            reconstruction,
            reconstruction_error,
        });
    }
    ctx.out.json("spectra_summary.json", &summaries)?;
    Ok(())
}

#[derive(Serialize)]
struct MapSummary {
    mirror: usize,
    alpha_other: f64,
    truncated_cells: usize,
    failed_cells: usize,
    contour: Contour<f64>,
}

pub fn stability(ctx: &mut Context) -> Result<()> {
    let r = ctx.run().clone();
    let mp = cascopt_core::params::nondimensionalize(&ctx.phys)?;
    if mp.topology != Topology::Unidirectional {
        return Err(cascopt_core::Error::Topology("stability maps need the unidirectional guide".into()).into());
    }
    // One amplitude axis for both mirrors, capped by the larger g/Ω.
    let amax = r.alpha_max_arg * (mp.omega[0] / mp.g[0]).min(mp.omega[1] / mp.g[1]);
    let alpha: Vec<f64> = (0..r.alpha_points).map(|k| amax * k as f64 / (r.alpha_points - 1) as f64).collect();
    let delta = r.delta_grid(r.stability_delta_points);
    let alpha1 = r.alpha1_for_mirror2 * mp.omega[0] / mp.g[0];
    let maps = [stability_map(&mp, Mirror::First, &alpha, &delta, 0.0)?, stability_map(&mp, Mirror::Second, &alpha, &delta, alpha1)?];
    let mut rows = Vec::with_capacity(alpha.len() * delta.len());
    for (i, &d) in delta.iter().enumerate() {
        for (k, &a) in alpha.iter().enumerate() {
            rows.push(vec![a, mp.g[0] * a / mp.omega[0], mp.g[1] * a / mp.omega[1], d, maps[0].ratio[i][k], maps[1].ratio[i][k]]);
        }
    }
    let extra = [
        "alpha in units of the zero-point spread, delta in units of Omega1".to_owned(),
        "ratio_j = radiated over dissipated power; self-sustained oscillation where ratio_j = 1".to_owned(),
        format!("alpha1_for_mirror2={}", crate::output::fmt_f64(alpha1)),
    ];
    ctx.out.csv("stability.csv", &extra, &["alpha", "arg1", "arg2", "delta", "ratio_1", "ratio_2"], rows)?;
    let summary: Vec<MapSummary> = maps
        .into_iter()
        .map(|m| MapSummary {
            mirror: m.mirror,
            alpha_other: m.alpha_other,
            truncated_cells: m.truncated_cells,
            failed_cells: m.failed_cells,
            contour: m.contour,
        })
        .collect();
    ctx.out.json("stability_contours.json", &summary)?;
    Ok(())
}

pub fn multistability(ctx: &mut Context) -> Result<()> {
    let r = ctx.run().clone();
    let mp = cascopt_core::params::nondimensionalize(&ctx.phys)?;
    let sets: Vec<BranchSet<f64>> = r
        .delta_grid(r.delta_points)
        .par_iter()
        .map(|&d| multistability_branches(&ModelParams64 { delta: d, ..mp.clone() }, r.cubic_kappa))
        .collect::<cascopt_core::Result<_>>()?;
    let mut rows = Vec::new();
    for set in &sets {
        let push = |rows: &mut Vec<Vec<f64>>, cavity: f64, parent: f64, count: usize, i: usize, b: &cascopt_core::meanfield::Branch<f64>| {
            let unstable = if b.stability == Stability::Unstable { 1.0 } else { 0.0 };
            rows.push(vec![set.delta, cavity, parent, count as f64, i as f64, b.photons, b.position, unstable, b.max_re_eigenvalue, b.residual]);
        };
        for (i, b) in set.cavity1.iter().enumerate() {
            push(&mut rows, 1.0, f64::NAN, set.cavity1.len(), i, b);
        }
        for c2 in &set.cavity2 {
            for (i, b) in c2.branches.iter().enumerate() {
                push(&mut rows, 2.0, c2.parent as f64, c2.branches.len(), i, b);
            }
        }
    }
    let extra = ["delta in units of Omega1; parent indexes the cavity-1 branch feeding cavity 2".to_owned()];
    let cols = ["delta", "cavity", "parent", "roots", "index", "photons", "position", "middle_unstable", "max_re_eigenvalue", "residual"];
    ctx.out.csv("multistability.csv", &extra, &cols, rows)?;
    ctx.out.json("branches.json", &sets)?;
    Ok(())
}

#[derive(Serialize)]
struct BidirSummary {
    unidirectional: Option<GradientRow<f64>>,
    bidirectional: Option<GradientRow<f64>>,
    t_s: [Option<f64>; 2],
}

pub fn bidir_compare(ctx: &mut Context) -> Result<()> {
    let uni = PhysicalParams64 { topology: Topology::Unidirectional, p2: 0.0, ..ctx.phys.clone() };
    let p2 = if ctx.phys.p2 > 0.0 { ctx.phys.p2 } else { ctx.phys.p1 };
    let bi = PhysicalParams64 { topology: Topology::Bidirectional, p2, ..ctx.phys.clone() };
    let mut traces = Vec::new();
    let mut steady = Vec::new();
    for p in [&uni, &bi] {
        let mp = cascopt_core::params::nondimensionalize(p)?;
        let fixed = steady_meanfield(&mp)?;
        let traj = ctx.covariance_trace(&mp, &fixed)?;
        traces.push(TemperatureTrace::from_states(&traj.states, &mp, ctx.run().rel_tol));
        steady.push(steady_row(&mp).ok());
    }
    let rows = (0..traces[0].times.len()).map(|k| vec![traces[0].times[k], traces[0].t_eff[0][k], traces[0].t_eff[1][k], traces[1].t_eff[0][k], traces[1].t_eff[1][k]]);
    let extra = [
        format!("bidirectional_power2_w={}", crate::output::fmt_f64(p2)),
        "same total cavity decay in both guides; temperatures in K".to_owned(),
    ];
    ctx.out.csv("bidir_compare.csv", &extra, &["t_tau", "T1_uni", "T2_uni", "T1_bi", "T2_bi"], rows.collect::<Vec<_>>())?;
    let summary = BidirSummary { unidirectional: steady[0], bidirectional: steady[1], t_s: [traces[0].t_s, traces[1].t_s] };
    ctx.out.json("bidir_summary.json", &summary)?;
    Ok(())
}
