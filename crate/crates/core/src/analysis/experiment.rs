//! Seeded empirical checks of the div-curl estimate and of the Wente-type
//! `L^∞` bound.
//!
//! Random data are drawn as continuum objects (trigonometric modes, a bump
//! test function with continuous center and radius) and then sampled on the
//! lattice. The draws for trial `k` depend only on `(seed, k)`, so the same
//! trial at two resolutions samples the same underlying functions.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::poisson::FractionalPoissonSolver;
use super::{bmo_seminorm_default, bump_profile, divfree_project_with, hardy_norm_default, nearest_node};
use crate::domain::{build_domain, Ball, Domain, Topology};
use crate::error::{check_p, check_s, Error, Result};
use crate::field::{OffDiagField, ScalarField};
use crate::fracops::{offdiag_lp_norm, pairing, s_gradient};

/// Denominators at or below this mark a trial as degenerate.
const DEGENERATE: f64 = 1e-300;

/// RNG for trial `trial` under master seed `seed`: one ChaCha stream per trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone)]
struct Mode {
    wave: [i32; 2],
    phase: f64,
    amp: f64,
}

impl Mode {
    fn draw(rng: &mut ChaCha8Rng, dim: usize, max_wave: i32) -> Self {
        let mut wave = [0; 2];
        loop {
            for w in wave.iter_mut().take(dim) {
                *w = rng.random_range(-max_wave..=max_wave);
            }
            if wave.iter().any(|&w| w != 0) {
                break;
            }
        }
        let norm = ((wave[0] * wave[0] + wave[1] * wave[1]) as f64).sqrt();
        let phase = rng.random_range(0.0..2.0 * PI);
        let amp = rng.random_range(-1.0..1.0) / norm;
        Self { wave, phase, amp }
    }

    fn eval(&self, x: &[f64], extent: f64) -> f64 {
        let arg: f64 = x.iter().zip(&self.wave).map(|(xi, &k)| k as f64 * xi).sum::<f64>();
        self.amp * (2.0 * PI * arg / extent + self.phase).cos()
    }
}

/// Continuum random data of one trial.
#[derive(Debug, Clone)]
struct TrialData {
    g_modes: Vec<Mode>,
    f_modes: Vec<(Mode, Mode)>,
    center: [f64; 2],
    radius: f64,
    amplitude: f64,
}

impl TrialData {
    fn draw(rng: &mut ChaCha8Rng, dim: usize, modes: usize, extent: f64) -> Self {
        let g_modes = (0..modes).map(|_| Mode::draw(rng, dim, 3)).collect();
        let f_modes = (0..modes).map(|_| (Mode::draw(rng, dim, 3), Mode::draw(rng, dim, 3))).collect();
        let mut center = [0.0; 2];
        for c in center.iter_mut().take(dim) {
            *c = rng.random_range(0.0..extent);
        }
        let radius = rng.random_range(0.1..0.3) * extent;
        let amplitude = rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        Self { g_modes, f_modes, center, radius, amplitude }
    }

    fn g(&self, d: &Arc<Domain>) -> ScalarField {
        let ext = d.extent();
        ScalarField::from_fn(d.clone(), |x| self.g_modes.iter().map(|m| m.eval(x, ext)).sum())
    }

    fn f(&self, d: &Arc<Domain>) -> OffDiagField {
        let ext = d.extent();
        OffDiagField::scalar_from_fn(d.clone(), |i, j| {
            let (xi, xj) = (d.node(i), d.node(j));
            self.f_modes.iter().map(|(a, b)| a.eval(xi, ext) * b.eval(xj, ext)).sum()
        })
    }

    fn phi(&self, d: &Arc<Domain>) -> ScalarField {
        let ext = d.extent();
        let periodic = d.topology().is_periodic();
        let dim = d.dim();
        ScalarField::from_fn(d.clone(), |x| {
            let sq: f64 = (0..dim)
                .map(|a| {
                    let mut dx = (x[a] - self.center[a]).abs();
                    if periodic {
                        dx = dx.min(ext - dx);
                    }
                    dx * dx
                })
                .sum();
            self.amplitude * bump_profile(sq.sqrt() / self.radius)
        })
    }
}

/// Settings of the div-curl constant experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DivCurlConfig {
    pub dim: usize,
    pub side: f64,
    pub nodes_per_axis: Vec<usize>,
    pub trials: usize,
    pub s: f64,
    pub p: f64,
    /// Enlargement factor of the localized norms.
    pub lambda: f64,
    pub modes: usize,
    pub seed: u64,
}

impl Default for DivCurlConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            side: 1.0,
            nodes_per_axis: vec![32, 64, 128],
            trials: 100,
            s: 0.5,
            p: 2.0,
            lambda: 4.0,
            modes: 4,
            seed: 1,
        }
    }
}

/// Norms and ratios of one trial.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DivCurlTrial {
    pub nodes_per_axis: usize,
    pub trial: usize,
    pub seed: u64,
    pub pairing: f64,
    pub phi_bmo: f64,
    pub phi_l1: f64,
    pub radius: f64,
    pub f_norm: f64,
    pub dg_norm: f64,
    pub f_norm_local: f64,
    pub dg_norm_local: f64,
    pub hardy: f64,
    /// `|∫ φ F·d_s g| / (([φ]_BMO + r^{-n}‖φ‖_1) ‖F‖_p ‖d_s g‖_{p'})`.
    pub ratio: f64,
    /// Same numerator over the norms localized to `B(x_0, Λr)`.
    pub local_ratio: f64,
    /// `|∫ φ F·d_s g| / ([φ]_BMO ‖F‖_p ‖d_s g‖_{p'})`.
    pub bmo_ratio: f64,
    /// `‖F·d_s g‖_{H^1} / (‖F‖_p ‖d_s g‖_{p'})`.
    pub hardy_ratio: f64,
    /// `|∫ F·d_s g| / (‖F‖_p ‖d_s g‖_{p'})`, the pairing against `φ ≡ 1`.
    pub const_phi_defect: f64,
}

/// Per-resolution summary of the trial ratios.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ResolutionSummary {
    pub nodes_per_axis: usize,
    pub trials_run: usize,
    pub skipped: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub q90_ratio: f64,
    pub max_local_ratio: f64,
    pub max_bmo_ratio: f64,
    pub max_hardy_ratio: f64,
    pub max_const_phi_defect: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DivCurlReport {
    pub config: DivCurlConfig,
    pub summaries: Vec<ResolutionSummary>,
    /// Largest over smallest `max_ratio` across resolutions.
    pub max_ratio_spread: f64,
    pub trials: Vec<DivCurlTrial>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[idx]
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if num.abs() <= DEGENERATE {
        Some(0.0)
    } else if den <= DEGENERATE {
        None
    } else {
        Some(num.abs() / den)
    }
}

fn torus(dim: usize, side: f64, n: usize) -> Result<Arc<Domain>> {
    build_domain(dim, Topology::PeriodicTorus { side }, n)
}

/// Measures the div-curl ratios on one divergence-free field.
///
/// `f` must already be divergence free; `radius` is the support radius of `phi`
/// and `center` the node closest to its center. Returns `None` when a
/// denominator degenerates while the pairing does not vanish.
#[allow(clippy::too_many_arguments)]
pub fn divcurl_trial(
    phi: &ScalarField,
    f: &OffDiagField,
    g: &ScalarField,
    s: f64,
    p: f64,
    radius: f64,
    center: usize,
    lambda: f64,
) -> Result<Option<DivCurlTrial>> {
    check_s(s)?;
    check_p(p)?;
    if p <= 1.0 {
        return Err(Error::InvalidParameter("the dual exponent needs p > 1".into()));
    }
    let d = f.domain();
    let n = d.dim() as i32;
    let dual = p / (p - 1.0);
    let dg = s_gradient(g, s)?;
    let density = pairing(f, &dg)?;
    let value = density.dot(phi)?;
    let phi_bmo = bmo_seminorm_default(phi)?;
    let phi_l1 = phi.l1_norm();
    let f_norm = offdiag_lp_norm(f, p, None)?;
    let dg_norm = offdiag_lp_norm(&dg, dual, None)?;
    let ball = Ball { center, radius: lambda * radius };
    let f_norm_local = offdiag_lp_norm(f, p, Some(&ball))?;
    let dg_norm_local = offdiag_lp_norm(&dg, dual, Some(&ball))?;
    let hardy = hardy_norm_default(&density)?;
    let phi_weight = phi_bmo + radius.powi(-n) * phi_l1;
    let product = f_norm * dg_norm;

    let (Some(r), Some(rl), Some(rb), Some(rh), Some(rc)) = (
        ratio(value, phi_weight * product),
        ratio(value, phi_weight * f_norm_local * dg_norm_local),
        ratio(value, phi_bmo * product),
        ratio(hardy, product),
        ratio(density.integral(), product),
    ) else {
        return Ok(None);
    };

    Ok(Some(DivCurlTrial {
        nodes_per_axis: d.nodes_per_axis(),
        trial: 0,
        seed: 0,
        pairing: value,
        phi_bmo,
        phi_l1,
        radius,
        f_norm,
        dg_norm,
        f_norm_local,
        dg_norm_local,
        hardy,
        ratio: r,
        local_ratio: rl,
        bmo_ratio: rb,
        hardy_ratio: rh,
        const_phi_defect: rc,
    }))
}

/// Runs `trials` seeded trials at each resolution and summarizes the ratios.
///
/// Trials run on the current rayon pool; results are collected in trial order.
pub fn divcurl_constant_experiment(cfg: &DivCurlConfig) -> Result<DivCurlReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if cfg.nodes_per_axis.is_empty() {
        return Err(Error::InvalidParameter("no resolutions given".into()));
    }
    check_s(cfg.s)?;
    if !(cfg.p > 1.0 && cfg.p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p = {} must lie in (1, ∞)", cfg.p)));
    }
    if !(cfg.lambda >= 1.0) {
        return Err(Error::InvalidParameter(format!("lambda = {} must be >= 1", cfg.lambda)));
    }

    let mut summaries = Vec::new();
    let mut all = Vec::new();
    for &npa in &cfg.nodes_per_axis {
        let d = torus(cfg.dim, cfg.side, npa)?;
        let solver = FractionalPoissonSolver::new(d.clone(), cfg.s)?;
        let results: Vec<Result<Option<DivCurlTrial>>> = (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(cfg.seed, k as u64);
                let data = TrialData::draw(&mut rng, cfg.dim, cfg.modes, cfg.side);
                let f = divfree_project_with(&solver, &data.f(&d), cfg.s)?;
                let center = nearest_node(&d, &data.center[..cfg.dim]);
                let out = divcurl_trial(&data.phi(&d), &f, &data.g(&d), cfg.s, cfg.p, data.radius, center, cfg.lambda)?;
                Ok(out.map(|mut t| {
                    t.trial = k;
                    t.seed = cfg.seed;
                    t
                }))
            })
            .collect();
        let mut trials = Vec::new();
        let mut skipped = 0;
        for r in results {
            match r? {
                Some(t) => trials.push(t),
                None => skipped += 1,
            }
        }
        let mut ratios: Vec<f64> = trials.iter().map(|t| t.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        let max_of = |f: fn(&DivCurlTrial) -> f64| trials.iter().map(f).fold(0.0, f64::max);
        summaries.push(ResolutionSummary {
            nodes_per_axis: npa,
            trials_run: trials.len(),
            skipped,
            max_ratio: quantile(&ratios, 1.0),
            median_ratio: quantile(&ratios, 0.5),
            q90_ratio: quantile(&ratios, 0.9),
            max_local_ratio: max_of(|t| t.local_ratio),
            max_bmo_ratio: max_of(|t| t.bmo_ratio),
            max_hardy_ratio: max_of(|t| t.hardy_ratio),
            max_const_phi_defect: max_of(|t| t.const_phi_defect),
        });
        all.extend(trials);
    }
    let max_ratio_spread = spread(summaries.iter().map(|s| s.max_ratio));
    Ok(DivCurlReport { config: cfg.clone(), summaries, max_ratio_spread, trials: all })
}

/// Settings of the Wente stability experiment (one-dimensional torus).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WenteConfig {
    pub side: f64,
    pub nodes_per_axis: Vec<usize>,
    pub trials: usize,
    pub s: f64,
    pub p: f64,
    pub modes: usize,
    pub seed: u64,
}

impl Default for WenteConfig {
    fn default() -> Self {
        Self { side: 1.0, nodes_per_axis: vec![32, 64, 128], trials: 50, s: 0.5, p: 2.0, modes: 4, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WenteTrial {
    pub nodes_per_axis: usize,
    pub trial: usize,
    pub seed: u64,
    pub u_sup: f64,
    pub f_norm: f64,
    pub dg_norm: f64,
    /// `‖u‖_∞ / (‖F‖_p ‖d_s g‖_{p'})`.
    pub ratio: f64,
    /// `|Σ rhs μ| / Σ |rhs| μ` before the solve.
    pub rhs_mean_defect: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WenteSummary {
    pub nodes_per_axis: usize,
    pub trials_run: usize,
    pub skipped: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct WenteReport {
    pub config: WenteConfig,
    pub summaries: Vec<WenteSummary>,
    pub max_ratio_spread: f64,
    pub trials: Vec<WenteTrial>,
}

/// Solves `(-Δ)^{1/2} u = F·d_s g` for seeded divergence-free `F` and records
/// `‖u‖_∞` against `‖F‖_p ‖d_s g‖_{p'}` at each resolution.
pub fn wente_experiment(cfg: &WenteConfig) -> Result<WenteReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if cfg.nodes_per_axis.is_empty() {
        return Err(Error::InvalidParameter("no resolutions given".into()));
    }
    check_s(cfg.s)?;
    if !(cfg.p > 1.0 && cfg.p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p = {} must lie in (1, ∞)", cfg.p)));
    }
    let dual = cfg.p / (cfg.p - 1.0);
    // (-Δ)^{n/2} with n = 1
    let order = 0.5;

    let mut summaries = Vec::new();
    let mut all = Vec::new();
    for &npa in &cfg.nodes_per_axis {
        let d = torus(1, cfg.side, npa)?;
        let projector = FractionalPoissonSolver::new(d.clone(), cfg.s)?;
        let poisson = FractionalPoissonSolver::new(d.clone(), order)?;
        let results: Vec<Result<Option<WenteTrial>>> = (0..cfg.trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = trial_rng(cfg.seed, k as u64);
                let data = TrialData::draw(&mut rng, 1, cfg.modes, cfg.side);
                let f = divfree_project_with(&projector, &data.f(&d), cfg.s)?;
                let dg = s_gradient(&data.g(&d), cfg.s)?;
                let rhs = pairing(&f, &dg)?;
                let mass = rhs.l1_norm();
                let rhs_mean_defect = if mass > 0.0 { rhs.integral().abs() / mass } else { 0.0 };
                let u = poisson.solve(&rhs)?;
                let f_norm = offdiag_lp_norm(&f, cfg.p, None)?;
                let dg_norm = offdiag_lp_norm(&dg, dual, None)?;
                let u_sup = u.sup_norm();
                Ok(ratio(u_sup, f_norm * dg_norm).map(|r| WenteTrial {
                    nodes_per_axis: npa,
                    trial: k,
                    seed: cfg.seed,
                    u_sup,
                    f_norm,
                    dg_norm,
                    ratio: r,
                    rhs_mean_defect,
                }))
            })
            .collect();
        let mut trials = Vec::new();
        let mut skipped = 0;
        for r in results {
            match r? {
                Some(t) => trials.push(t),
                None => skipped += 1,
            }
        }
        let mut ratios: Vec<f64> = trials.iter().map(|t| t.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        summaries.push(WenteSummary {
            nodes_per_axis: npa,
            trials_run: trials.len(),
            skipped,
            max_ratio: quantile(&ratios, 1.0),
            median_ratio: quantile(&ratios, 0.5),
        });
        all.extend(trials);
    }
    let max_ratio_spread = spread(summaries.iter().map(|s| s.max_ratio));
    Ok(WenteReport { config: cfg.clone(), summaries, max_ratio_spread, trials: all })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{divcurl_pairing, divfree_project};

    #[test]
    fn zero_field_gives_zero_ratio() {
        let d = torus(1, 32).unwrap();
        let mut rng = trial_rng(3, 0);
        let data = TrialData::draw(&mut rng, 1, 3, 1.0);
        let zero = OffDiagField::zeros(d.clone(), 1);
        let t = divcurl_trial(&data.phi(&d), &zero, &data.g(&d), 0.5, 2.0, data.radius, 0, 4.0)
            .unwrap()
            .unwrap();
        assert_eq!(t.ratio, 0.0);
        assert_eq!(t.local_ratio, 0.0);
    }

    fn torus(dim: usize, n: usize) -> Result<Arc<Domain>> {
        super::torus(dim, 1.0, n)
    }

    #[test]
    fn trial_pairing_matches_divcurl_pairing() {
        let d = torus(1, 32).unwrap();
        let mut rng = trial_rng(5, 2);
        let data = TrialData::draw(&mut rng, 1, 4, 1.0);
        let f = divfree_project(&data.f(&d), 0.5).unwrap();
        let t = divcurl_trial(&data.phi(&d), &f, &data.g(&d), 0.5, 2.0, data.radius, 0, 4.0).unwrap().unwrap();
        let direct = divcurl_pairing(&data.phi(&d), &f, &data.g(&d), 0.5).unwrap();
        assert!((t.pairing - direct).abs() <= 1e-12 * direct.abs().max(1e-12));
        assert!(t.local_ratio >= t.ratio - 1e-15);
        assert!(t.const_phi_defect < 1e-10);
    }

    #[test]
    fn trial_streams_are_independent_of_resolution() {
        let a = TrialData::draw(&mut trial_rng(9, 4), 1, 4, 1.0);
        let b = TrialData::draw(&mut trial_rng(9, 4), 1, 4, 1.0);
        assert_eq!(a.radius, b.radius);
        let c = TrialData::draw(&mut trial_rng(9, 5), 1, 4, 1.0);
        assert_ne!(a.radius, c.radius);
    }

    #[test]
    fn small_experiment_runs() {
        let cfg = DivCurlConfig { nodes_per_axis: vec![16, 32], trials: 4, ..Default::default() };
        let rep = divcurl_constant_experiment(&cfg).unwrap();
        assert_eq!(rep.summaries.len(), 2);
        assert_eq!(rep.trials.len(), 8);
        assert!(rep.summaries.iter().all(|s| s.max_ratio.is_finite() && s.max_ratio > 0.0));
        assert!(divcurl_constant_experiment(&DivCurlConfig { trials: 0, ..cfg.clone() }).is_err());

        let w = wente_experiment(&WenteConfig { nodes_per_axis: vec![16, 32], trials: 3, ..Default::default() }).unwrap();
        assert!(w.summaries.iter().all(|s| s.max_ratio.is_finite() && s.max_ratio > 0.0));
        assert!(w.trials.iter().all(|t| t.rhs_mean_defect < 1e-10));
    }
}
