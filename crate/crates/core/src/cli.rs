//! Batch experiment driver: TOML configs in, `report.json`, `trace.csv` and
//! `meta.json` out.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{divcurl_constant_experiment, trial_rng, wente_experiment, DivCurlConfig, WenteConfig};
use crate::domain::{Domain, DomainSpec, Topology};
use crate::error::{Error, Result};
use crate::field::{OffDiagField, ScalarField, VectorMap};
use crate::fracops::{fractional_laplacian, pair_inner, pairing, s_divergence, s_gradient};
use crate::gauge::{
    exact_potential, gauge_conservation_residual, omega_p, random_gauge, solve_gauge, solve_gauge_from, GaugeField,
    MatrixOffDiagField,
};
use crate::manifold::{project_sphere, random_unit, tangency_defect, SphereMap};
use crate::solver::{conservation_residual, el_residual, solve_harmonic_map, OmegaKind, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    OpsCheck,
    Halfharmonic,
    WspSphere,
    Gauge,
    Divcurl,
    Wente,
    Tangency,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::OpsCheck,
        Self::Halfharmonic,
        Self::WspSphere,
        Self::Gauge,
        Self::Divcurl,
        Self::Wente,
        Self::Tangency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::OpsCheck => "ops-check",
            Self::Halfharmonic => "halfharmonic",
            Self::WspSphere => "wsp-sphere",
            Self::Gauge => "gauge",
            Self::Divcurl => "divcurl",
            Self::Wente => "wente",
            Self::Tangency => "tangency",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::OpsCheck => "adjointness and composition identities of d_s, div_s and (-Δ)^s on random data",
            Self::Halfharmonic => "half-harmonic map into S^1 from perturbed degree-1 data, with conservation residuals",
            Self::WspSphere => "W^{s,p}-harmonic map into a sphere, Killing conservation residuals",
            Self::Gauge => "SO(N) gauge for a random antisymmetric potential plus a manufactured solution",
            Self::Divcurl => "empirical div-curl / Hardy constants across refinements",
            Self::Wente => "sup norm of the solution of (-Δ)^{1/2} u = F·d_s g across refinements",
            Self::Tangency => "tangency defect ratio of sphere maps",
        }
    }
}

/// Optional experiment parameters; unset values take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub s: Option<f64>,
    pub p: Option<f64>,
    /// `N` of the sphere `S^{N-1} ⊂ R^N` or of `SO(N)`.
    pub target_dim: Option<usize>,
    pub trials: Option<usize>,
    /// Size of the random initial perturbation or of the random potential.
    pub amplitude: Option<f64>,
    /// Size of the perturbation used for the non-critical contrast run.
    pub contrast_amplitude: Option<f64>,
    pub winding: Option<i32>,
    pub lambda: Option<f64>,
    pub modes: Option<usize>,
    pub resolutions: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub require_convergence: bool,
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::Config(format!("experiment {} needs a seed", self.experiment.name())));
        }
        let needs_domain = !matches!(self.experiment, ExperimentKind::Divcurl | ExperimentKind::Wente);
        if needs_domain && self.domain.is_none() {
            return Err(Error::Config(format!("experiment {} needs a [domain] section", self.experiment.name())));
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    fn domain(&self) -> Result<Arc<Domain>> {
        self.domain.as_ref().ok_or_else(|| Error::Config("missing [domain]".into()))?.build()
    }
}

/// Names and one-line descriptions of all experiments.
pub fn list_experiments() -> String {
    let mut out = String::new();
    for k in ExperimentKind::ALL {
        let _ = writeln!(out, "{:<14}{}", k.name(), k.description());
    }
    out
}

/// Result of one experiment before it is written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Value,
    pub trace_header: Vec<&'static str>,
    pub trace_rows: Vec<Vec<f64>>,
    /// A convergence or tolerance check failed.
    pub failed: bool,
}

impl RunOutput {
    pub fn trace_csv(&self) -> String {
        let mut out = self.trace_header.join(",");
        out.push('\n');
        for row in &self.trace_rows {
            let cells: Vec<String> = row.iter().map(|&v| format_cell(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn format_cell(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:e}")
    }
}

/// Runs the configured experiment and returns its report.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::OpsCheck => ops_check(cfg),
        ExperimentKind::Halfharmonic | ExperimentKind::WspSphere => harmonic(cfg),
        ExperimentKind::Gauge => gauge(cfg),
        ExperimentKind::Divcurl => divcurl(cfg),
        ExperimentKind::Wente => wente(cfg),
        ExperimentKind::Tangency => tangency(cfg),
    }
}

/// Exit code of a finished run: 0, or 1 when a check failed and the config
/// demands convergence.
pub fn exit_code(cfg: &ExperimentConfig, out: &RunOutput) -> i32 {
    if out.failed && cfg.require_convergence {
        1
    } else {
        0
    }
}

/// Exit code for an error: 2 for configuration problems, 3 otherwise.
pub fn error_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        _ => 3,
    }
}

/// Runs the experiment and writes `report.json`, `trace.csv` and `meta.json`
/// into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, threads: Option<usize>) -> Result<i32> {
    let start = Instant::now();
    let out = execute(cfg)?;
    let elapsed = start.elapsed();
    fs::create_dir_all(out_dir)?;
    let mut report = serde_json::to_string_pretty(&out.report).expect("report serializes");
    report.push('\n');
    fs::write(out_dir.join("report.json"), report)?;
    fs::write(out_dir.join("trace.csv"), out.trace_csv())?;
    let meta = json!({
        "config": cfg,
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "threads": threads.unwrap_or_else(rayon::current_num_threads),
        "wall_time_seconds": elapsed.as_secs_f64(),
    });
    let mut meta = serde_json::to_string_pretty(&meta).expect("meta serializes");
    meta.push('\n');
    fs::write(out_dir.join("meta.json"), meta)?;
    Ok(exit_code(cfg, &out))
}

/// Output directory: the override, else the config's `output`, else
/// `out/<experiment>`.
pub fn output_dir(cfg: &ExperimentConfig, overridden: Option<&Path>) -> PathBuf {
    overridden
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()))
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

const ADJOINT_TOL: f64 = 1e-10;
const COMPOSITION_TOL: f64 = 1e-12;

fn ops_check(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let d = cfg.domain()?;
    let s = cfg.params.s.unwrap_or(0.5);
    let trials = cfg.params.trials.unwrap_or(20);
    let mut rows = Vec::new();
    let (mut adj, mut comp, mut ident) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..trials {
        let mut rng = trial_rng(cfg.seed(), k as u64);
        let f = OffDiagField::scalar_from_fn(d.clone(), |_, _| rng.random_range(-1.0..1.0));
        let phi = ScalarField::from_fn(d.clone(), |_| rng.random_range(-1.0..1.0));
        let g = ScalarField::from_fn(d.clone(), |_| rng.random_range(-1.0..1.0));

        let lhs = s_divergence(&f, s)?.dot(&phi)?;
        let rhs = pair_inner(&f, &s_gradient(&phi, s)?)?;
        let a = rel(lhs, rhs);

        let dphi = s_gradient(&phi, s)?;
        let div = s_divergence(&dphi, s)?;
        let lap = fractional_laplacian(&phi, s)?;
        let scale = lap.sup_norm().max(f64::MIN_POSITIVE);
        let c = (0..d.len()).map(|i| (div.get(i) - 2.0 * lap.get(i)).abs()).fold(0.0, f64::max) / scale;

        let dg = s_gradient(&g, s)?;
        let left = pairing(&dphi, &dg)?.integral();
        let right = 2.0 * lap.dot(&g)?;
        let e = rel(left, right);

        adj = adj.max(a);
        comp = comp.max(c);
        ident = ident.max(e);
        rows.push(vec![k as f64, a, c, e]);
    }
    let failed = adj > ADJOINT_TOL || comp > COMPOSITION_TOL || ident > COMPOSITION_TOL;
    let report = json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed(),
        "nodes": d.len(),
        "s": s,
        "trials": trials,
        "max_adjointness_residual": adj,
        "max_composition_residual": comp,
        "max_energy_identity_residual": ident,
        "tolerances": { "adjointness": ADJOINT_TOL, "composition": COMPOSITION_TOL, "energy_identity": COMPOSITION_TOL },
        "passed": !failed,
    });
    Ok(RunOutput {
        report,
        trace_header: vec!["trial", "adjointness", "composition", "energy_identity"],
        trace_rows: rows,
        failed,
    })
}

fn harmonic(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let d = cfg.domain()?;
    let (s0, p0, n0) = match cfg.experiment {
        ExperimentKind::Halfharmonic => (0.5, 2.0, 2),
        _ => (0.5, d.dim() as f64 / 0.5, 2),
    };
    let s = cfg.params.s.unwrap_or(s0);
    let p = cfg.params.p.unwrap_or(p0);
    let n = cfg.params.target_dim.unwrap_or(n0);
    let amplitude = cfg.params.amplitude.unwrap_or(0.2);
    let contrast = cfg.params.contrast_amplitude.unwrap_or(1e-2);
    let winding = cfg.params.winding.unwrap_or(1);

    let mut rng = trial_rng(cfg.seed(), 0);
    let base = SphereMap::winding(d.clone(), n, winding)?;
    let u0 = base.perturbed(amplitude, &mut rng)?;
    let mut solver = cfg.solver;
    solver.seed = cfg.seed();
    let (u, rep) = solve_harmonic_map(&u0, s, p, &solver)?;
    let cons = rep.conservation.expect("solver reports conservation");
    let perturbed = u.perturbed(contrast, &mut trial_rng(cfg.seed(), 1))?;
    let contrast_sphere = conservation_residual(&perturbed, s, p, OmegaKind::Sphere)?;
    let contrast_killing = conservation_residual(&perturbed, s, p, OmegaKind::Killing)?;
    let energy = rep.final_energy;
    let ratio = |r: f64| if rep.el_residual > 0.0 { r / rep.el_residual } else { 0.0 };

    let report = json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed(),
        "dim": d.dim(),
        "nodes_per_axis": d.nodes_per_axis(),
        "s": s,
        "p": p,
        "target_dim": n,
        "winding": winding,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "stalled": rep.stalled,
        "initial_energy": rep.energies[0],
        "final_energy": energy,
        "el_residual": rep.el_residual,
        "conservation_residual_sphere": cons.sphere,
        "conservation_residual_killing": cons.killing,
        "conservation_over_el_residual": ratio(cons.sphere),
        "initial_el_residual": el_residual(&u0, s, p)?,
        "contrast_amplitude": contrast,
        "contrast_conservation_residual_sphere": contrast_sphere,
        "contrast_conservation_residual_killing": contrast_killing,
    });
    let rows = trace_rows(&rep.energies, &rep.grad_norms, &rep.step_sizes);
    Ok(RunOutput { report, trace_header: vec!["iter", "energy", "grad_norm", "step"], trace_rows: rows, failed: !rep.converged })
}

fn trace_rows(energies: &[f64], grads: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    energies
        .iter()
        .zip(grads)
        .enumerate()
        .map(|(k, (e, g))| {
            let step = if k == 0 { 0.0 } else { steps[k - 1] };
            vec![k as f64, *e, *g, step]
        })
        .collect()
}

/// Smooth generator field for the manufactured gauge.
pub fn manufactured_gauge(domain: Arc<Domain>, n: usize, amplitude: f64) -> Result<GaugeField> {
    let side = domain.extent();
    GaugeField::exp_of(domain, n, |x, a| {
        let t = 2.0 * std::f64::consts::PI * x[0] / side;
        let u = amplitude * t.sin();
        a[1] = u;
        a[n] = -u;
        if n >= 3 {
            let v = 0.5 * amplitude * (2.0 * t).cos();
            a[n + 2] = v;
            a[2 * n + 1] = -v;
        }
    })
}

fn gauge(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let d = cfg.domain()?;
    let s = cfg.params.s.unwrap_or(0.5);
    let n = cfg.params.target_dim.unwrap_or(3);
    let amplitude = cfg.params.amplitude.unwrap_or(1.0);
    let contrast = cfg.params.contrast_amplitude.unwrap_or(1e-2);
    let mut solver = cfg.solver;
    solver.seed = cfg.seed();

    let mut rng = trial_rng(cfg.seed(), 0);
    let omega = MatrixOffDiagField::random_antisymmetric(d.clone(), n, amplitude, &mut rng);
    let (p, rep) = solve_gauge(&omega, s, &solver)?;
    let op = omega_p(&p, &omega, s)?;
    let mut crng = trial_rng(cfg.seed(), 1);
    let kick = random_gauge(d.clone(), n, contrast, &mut crng)?;
    let kicked = GaugeField::new(
        d.clone(),
        n,
        (0..d.len())
            .flat_map(|k| {
                let (a, b) = (kick.at(k), p.at(k));
                (0..n * n).map(move |e| {
                    let (i, j) = (e / n, e % n);
                    (0..n).map(|l| a[i * n + l] * b[l * n + j]).sum::<f64>()
                })
            })
            .collect(),
    )?;
    let contrast_residual = gauge_conservation_residual(&kicked, &omega, s)?;

    let target = manufactured_gauge(d.clone(), n, 0.3)?;
    let exact = exact_potential(&target, s)?;
    let (_, mrep) = solve_gauge_from(&GaugeField::identity(d.clone(), n), &exact, s, &solver, false)?;

    let report = json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed(),
        "dim": d.dim(),
        "nodes_per_axis": d.nodes_per_axis(),
        "s": s,
        "target_dim": n,
        "amplitude": amplitude,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "stalled": rep.stalled,
        "identity_energy": rep.identity_energy,
        "final_energy": rep.final_energy,
        "gradient_norm": rep.gradient_norm,
        "conservation_residual": rep.conservation_residual,
        "omega_p_antisymmetry_defect": op.antisymmetry_defect(),
        "orthogonality_defect": p.orthogonality_defect(),
        "contrast_amplitude": contrast,
        "contrast_conservation_residual": contrast_residual,
        "manufactured_iterations": mrep.iterations,
        "manufactured_final_energy": mrep.final_energy,
    });
    let rows = trace_rows(&rep.energies, &rep.grad_norms, &rep.step_sizes);
    let failed = !rep.converged || rep.final_energy > rep.identity_energy;
    Ok(RunOutput { report, trace_header: vec!["iter", "energy", "grad_norm", "step"], trace_rows: rows, failed })
}

fn torus_side(cfg: &ExperimentConfig) -> Result<(usize, f64)> {
    match &cfg.domain {
        None => Ok((1, 1.0)),
        Some(DomainSpec { dim, topology: Topology::PeriodicTorus { side }, .. }) => Ok((*dim, *side)),
        Some(_) => Err(Error::Config("this experiment runs on a periodic torus".into())),
    }
}

const SPREAD_LIMIT: f64 = 2.0;

fn divcurl(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (dim, side) = torus_side(cfg)?;
    let base = DivCurlConfig::default();
    let dc = DivCurlConfig {
        dim,
        side,
        nodes_per_axis: cfg.params.resolutions.clone().unwrap_or(base.nodes_per_axis),
        trials: cfg.params.trials.unwrap_or(base.trials),
        s: cfg.params.s.unwrap_or(base.s),
        p: cfg.params.p.unwrap_or(base.p),
        lambda: cfg.params.lambda.unwrap_or(base.lambda),
        modes: cfg.params.modes.unwrap_or(base.modes),
        seed: cfg.seed(),
    };
    let rep = divcurl_constant_experiment(&dc)?;
    let rows = rep
        .trials
        .iter()
        .map(|t| {
            vec![
                t.nodes_per_axis as f64,
                t.trial as f64,
                t.ratio,
                t.local_ratio,
                t.bmo_ratio,
                t.hardy_ratio,
                t.const_phi_defect,
            ]
        })
        .collect();
    let max_defect = rep.summaries.iter().map(|s| s.max_const_phi_defect).fold(0.0, f64::max);
    let failed = !(rep.max_ratio_spread < SPREAD_LIMIT) || max_defect > 1e-10;
    let report = json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed(),
        "config": rep.config,
        "summaries": rep.summaries,
        "max_ratio_spread": rep.max_ratio_spread,
        "max_const_phi_defect": max_defect,
    });
    Ok(RunOutput {
        report,
        trace_header: vec!["nodes_per_axis", "trial", "ratio", "local_ratio", "bmo_ratio", "hardy_ratio", "const_phi_defect"],
        trace_rows: rows,
        failed,
    })
}

fn wente(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (dim, side) = torus_side(cfg)?;
    if dim != 1 {
        return Err(Error::Config("wente runs on the one-dimensional torus".into()));
    }
    let base = WenteConfig::default();
    let wc = WenteConfig {
        side,
        nodes_per_axis: cfg.params.resolutions.clone().unwrap_or(base.nodes_per_axis),
        trials: cfg.params.trials.unwrap_or(base.trials),
        s: cfg.params.s.unwrap_or(base.s),
        p: cfg.params.p.unwrap_or(base.p),
        modes: cfg.params.modes.unwrap_or(base.modes),
        seed: cfg.seed(),
    };
    let rep = wente_experiment(&wc)?;
    let rows = rep
        .trials
        .iter()
        .map(|t| vec![t.nodes_per_axis as f64, t.trial as f64, t.u_sup, t.f_norm, t.dg_norm, t.ratio])
        .collect();
    let failed = !(rep.max_ratio_spread < SPREAD_LIMIT);
    let report = json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed(),
        "config": rep.config,
        "summaries": rep.summaries,
        "max_ratio_spread": rep.max_ratio_spread,
    });
    Ok(RunOutput {
        report,
        trace_header: vec!["nodes_per_axis", "trial", "u_sup", "f_norm", "dg_norm", "ratio"],
        trace_rows: rows,
        failed,
    })
}

const TANGENCY_TOL: f64 = 1e-10;

fn tangency(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let d = cfg.domain()?;
    let n = cfg.params.target_dim.unwrap_or(3);
    let trials = cfg.params.trials.unwrap_or(10);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut maps = vec![SphereMap::winding(d.clone(), n, 1)?];
    for k in 0..trials {
        let mut rng = trial_rng(cfg.seed(), k as u64);
        let mut v = VectorMap::zeros(d.clone(), n);
        for i in 0..d.len() {
            v.at_mut(i).copy_from_slice(&random_unit(n, &mut rng));
        }
        maps.push(project_sphere(&v)?);
    }
    let mut max_all: f64 = 0.0;
    for (k, u) in maps.iter().enumerate() {
        let t = tangency_defect(u)?;
        worst = worst.max((t.max_ratio - 0.5).abs());
        max_all = max_all.max(t.max_ratio);
        rows.push(vec![k as f64, t.max_ratio, t.mean_ratio, t.pairs as f64]);
    }
    let failed = worst > TANGENCY_TOL;
    let report = json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed(),
        "nodes": d.len(),
        "target_dim": n,
        "maps": maps.len(),
        "max_ratio": max_all,
        "max_deviation_from_half": worst,
        "tolerance": TANGENCY_TOL,
        "passed": !failed,
    });
    Ok(RunOutput { report, trace_header: vec!["map", "max_ratio", "mean_ratio", "pairs"], trace_rows: rows, failed })
}
