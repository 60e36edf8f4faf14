//! Configurable ground truth and deterministic campaign generation.
//!
//! A `GroundTruth` assigns each partial wave of each sideband a phase
//!
//! ```text
//! phi(wave) = -l*pi/2 + wigner(E_k -+ omega) + cc(E_k -+ omega -> E_k, l)
//! ```
//!
//! where the minus (absorption) leg feeds d2 in the co-rotating geometry and
//! d0/s in the counter-rotating one, and amplitudes come from a per-sideband,
//! per-geometry amplitude model.  `generate_campaign` renders the resulting
//! models onto trace grids (optionally Poisson-sampled) and emits a sidecar
//! with the truth values, calibration references and oracle bounds that the
//! downstream stages are scored against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Geometry, PartialWave, SidebandModel, WaveLabel};
use crate::real::{real, wrap_phase, Real};
use crate::special::{coulomb_sigma_ev, coulomb_sigma_slope_ev};
use crate::trace::{NoiseMode, TraceGrid};
use crate::units::{delay_as_from_slope, optical_period_fs, HBAR_EV_AS};

/// Spectral phase of the ionic potential's scattering continuum.
#[derive(Debug, Clone, PartialEq)]
pub enum WignerModel<R: Real> {
    /// sigma_1(k) = Im ln Gamma(2 - iZ/k), continuous branch.
    Coulomb { effective_charge: R },
    /// phase = slope * E + intercept (exact finite differences by design).
    Linear { slope_rad_per_ev: R, intercept_rad: R },
    /// Piecewise-linear interpolation through (energy eV, phase rad) points.
    Table { points: Vec<(R, R)> },
}

impl<R: Real> WignerModel<R> {
    pub fn phase(&self, e_ev: R) -> Result<R> {
        match self {
            WignerModel::Coulomb { effective_charge } => {
                coulomb_sigma_ev(1, e_ev, *effective_charge)
            }
            WignerModel::Linear { slope_rad_per_ev, intercept_rad } => {
                Ok(*slope_rad_per_ev * e_ev + *intercept_rad)
            }
            WignerModel::Table { points } => {
                let (i, j) = bracketing_segment(points, e_ev)?;
                let (e0, p0) = points[i];
                let (e1, p1) = points[j];
                Ok(p0 + (p1 - p0) * (e_ev - e0) / (e1 - e0))
            }
        }
    }

    /// d phase / dE in rad/eV (analytic; piecewise-constant for tables).
    pub fn slope(&self, e_ev: R) -> Result<R> {
        match self {
            WignerModel::Coulomb { effective_charge } => {
                coulomb_sigma_slope_ev(1, e_ev, *effective_charge)
            }
            WignerModel::Linear { slope_rad_per_ev, .. } => Ok(*slope_rad_per_ev),
            WignerModel::Table { points } => {
                let (i, j) = bracketing_segment(points, e_ev)?;
                let (e0, p0) = points[i];
                let (e1, p1) = points[j];
                Ok((p1 - p0) / (e1 - e0))
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            WignerModel::Coulomb { effective_charge } => format!("coulomb(z={effective_charge})"),
            WignerModel::Linear { slope_rad_per_ev, intercept_rad } => {
                format!("linear(slope={slope_rad_per_ev}, intercept={intercept_rad})")
            }
            WignerModel::Table { points } => format!("table({} points)", points.len()),
        }
    }
}

fn bracketing_segment<R: Real>(points: &[(R, R)], e: R) -> Result<(usize, usize)> {
    if points.len() < 2 {
        return Err(Error::domain("wigner table needs at least 2 points"));
    }
    if e < points[0].0 || e > points[points.len() - 1].0 {
        return Err(Error::domain(format!(
            "energy {e} eV outside wigner table range"
        )));
    }
    for i in 0..points.len() - 1 {
        if e <= points[i + 1].0 {
            return Ok((i, i + 1));
        }
    }
    Ok((points.len() - 2, points.len() - 1))
}

/// Parametric continuum-continuum phase magnitude:
/// `g(E, l) = strength / (E + softening) + offset(l)`, smooth and strictly
/// monotone in energy for strength != 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CcModel<R: Real> {
    pub strength: R,
    pub softening: R,
    pub offset_l0: R,
    pub offset_l2: R,
    /// When set (default), both transition directions evaluate `g` at the
    /// shared final energy, so absorption and emission phases cancel exactly.
    /// When unset they evaluate at each transition's midpoint energy and the
    /// cancellation is only approximate.
    pub mirror_antisymmetry: bool,
}

impl<R: Real> CcModel<R> {
    pub fn g(&self, e_ev: R, l: u32) -> Result<R> {
        let offset = match l {
            0 => self.offset_l0,
            2 => self.offset_l2,
            _ => return Err(Error::domain(format!("cc model supports l = 0 or 2, got {l}"))),
        };
        let denom = e_ev + self.softening;
        if !(denom > R::zero()) {
            return Err(Error::domain(format!(
                "cc evaluation at E = {e_ev} eV with softening {} is singular",
                self.softening
            )));
        }
        Ok(self.strength / denom + offset)
    }

    /// dg/dE at fixed l (rad/eV).
    pub fn slope(&self, e_ev: R) -> Result<R> {
        let denom = e_ev + self.softening;
        if !(denom > R::zero()) {
            return Err(Error::domain("cc slope evaluation is singular"));
        }
        Ok(-self.strength / (denom * denom))
    }
}

/// Signed continuum-continuum phase for a single IR transition
/// `E_initial -> E_final` of an l-wave: `+g` for absorption
/// (E_final > E_initial), `-g` for emission.
pub fn cc_phase_truth<R: Real>(
    e_initial_ev: R,
    e_final_ev: R,
    l: u32,
    model: &CcModel<R>,
) -> Result<R> {
    if !(e_initial_ev > R::zero()) || !(e_final_ev > R::zero()) {
        return Err(Error::domain(format!(
            "transition energies must be > 0, got {e_initial_ev} -> {e_final_ev} eV"
        )));
    }
    if e_initial_ev == e_final_ev {
        return Err(Error::domain("transition needs distinct energies"));
    }
    let eval_at = if model.mirror_antisymmetry {
        e_final_ev
    } else {
        (e_initial_ev + e_final_ev) * real::<R>(0.5)
    };
    let g = model.g(eval_at, l)?;
    Ok(if e_final_ev > e_initial_ev { g } else { -g })
}

/// Per-sideband, per-geometry partial-wave amplitudes: a common base triple
/// with the absorption-fed wave(s) boosted by
/// `f(E) = 1 + fano_strength / (E + fano_softening)`, plus explicit
/// overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeModel<R: Real> {
    pub base: [R; 3], // d2, d0, s
    pub fano_strength: R,
    pub fano_softening: R,
    pub overrides: Vec<AmplitudeOverride<R>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeOverride<R: Real> {
    pub order: u32,
    pub geometry: Geometry,
    pub amplitudes: [R; 3],
}

impl<R: Real> AmplitudeModel<R> {
    pub fn amplitudes(&self, order: u32, geometry: Geometry, e_ev: R) -> Result<[R; 3]> {
        if let Some(o) = self
            .overrides
            .iter()
            .find(|o| o.order == order && o.geometry == geometry)
        {
            return Ok(o.amplitudes);
        }
        let denom = e_ev + self.fano_softening;
        if !(denom > R::zero()) {
            return Err(Error::domain("amplitude boost evaluation is singular"));
        }
        let f = R::one() + self.fano_strength / denom;
        let [d2, d0, s] = self.base;
        Ok(match geometry {
            Geometry::CoRotating => [d2 * f, d0, s],
            Geometry::CounterRotating => [d2, d0 * f, s * f],
        })
    }
}

/// Full synthetic ground truth for a sideband ladder.
#[derive(Debug, Clone)]
pub struct GroundTruth<R: Real> {
    pub orders: Vec<u32>,
    pub omega_ev: R,
    pub ionization_potential_ev: R,
    pub near_threshold_floor_ev: R,
    pub wigner: WignerModel<R>,
    pub cc: CcModel<R>,
    pub amplitudes: AmplitudeModel<R>,
}

impl<R: Real> GroundTruth<R> {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_ev > R::zero()) {
            return Err(Error::domain("omega must be > 0"));
        }
        let mut prev: Option<u32> = None;
        for &n in &self.orders {
            if let Some(p) = prev {
                if n <= p {
                    return Err(Error::domain("sideband orders must be strictly ascending"));
                }
            }
            prev = Some(n);
            let e = self.sideband_energy(n)?;
            if !(e - self.omega_ev > R::zero()) {
                return Err(Error::domain(format!(
                    "sideband {n} absorption leg E - omega = {} eV is not in the continuum",
                    e - self.omega_ev
                )));
            }
        }
        Ok(())
    }

    /// Kinetic energy of sideband `order`: n * omega - Ip.
    pub fn sideband_energy(&self, order: u32) -> Result<R> {
        let e = real::<R>(order as f64) * self.omega_ev - self.ionization_potential_ev;
        if !(e > R::zero()) {
            return Err(Error::domain(format!(
                "sideband {order} lies below threshold (E = {e} eV)"
            )));
        }
        Ok(e)
    }

    pub fn near_threshold(&self, order: u32) -> Result<bool> {
        Ok(self.sideband_energy(order)? - self.omega_ev < self.near_threshold_floor_ev)
    }

    fn check_order(&self, order: u32) -> Result<()> {
        if !self.orders.contains(&order) {
            return Err(Error::domain(format!("sideband order {order} is not in this campaign")));
        }
        Ok(())
    }

    /// Unwrapped (real line) phase of one partial wave.
    pub fn wave_phase(&self, order: u32, geometry: Geometry, wave: WaveLabel) -> Result<R> {
        self.check_order(order)?;
        let e_k = self.sideband_energy(order)?;
        let l = wave.l();
        let leg = if geometry.is_absorption(wave) {
            e_k - self.omega_ev
        } else {
            e_k + self.omega_ev
        };
        let centrifugal = -real::<R>(l as f64) * R::PI() / real::<R>(2.0);
        let wigner = self.wigner.phase(leg)?;
        let cc = cc_phase_truth(leg, e_k, l, &self.cc)?;
        Ok(centrifugal + wigner + cc)
    }

    /// Signed continuum-continuum truth for one wave in one geometry
    /// (absorption-fed waves get `+g`, emission-fed ones `-g`).
    pub fn wave_cc(&self, order: u32, geometry: Geometry, wave: WaveLabel) -> Result<R> {
        self.check_order(order)?;
        let e_k = self.sideband_energy(order)?;
        let leg = if geometry.is_absorption(wave) {
            e_k - self.omega_ev
        } else {
            e_k + self.omega_ev
        };
        cc_phase_truth(leg, e_k, wave.l(), &self.cc)
    }
}

/// Build the interference model for one sideband in one geometry.
pub fn assemble_sideband_model<R: Real>(
    truth: &GroundTruth<R>,
    order: u32,
    geometry: Geometry,
) -> Result<SidebandModel<R>> {
    truth.check_order(order)?;
    let e_k = truth.sideband_energy(order)?;
    let amps = truth.amplitudes.amplitudes(order, geometry, e_k)?;
    let mut waves = Vec::with_capacity(3);
    for (i, label) in WaveLabel::ALL.into_iter().enumerate() {
        let phase = truth.wave_phase(order, geometry, label)?;
        waves.push(PartialWave::new(label, amps[i], phase)?);
    }
    SidebandModel::new(geometry, [waves[0], waves[1], waves[2]], truth.omega_ev, e_k)
}

/// Angular/delay grid layout for generated traces.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<R: Real> {
    pub theta_bins: usize,
    pub tau_points: usize,
    pub tau_start_fs: R,
    /// Number of IR optical cycles the delay axis spans (each cycle holds two
    /// beat periods).
    pub ir_cycles: u32,
}

impl<R: Real> Default for GridSpec<R> {
    fn default() -> Self {
        GridSpec { theta_bins: 60, tau_points: 24, tau_start_fs: R::zero(), ir_cycles: 1 }
    }
}

impl<R: Real> GridSpec<R> {
    pub fn validate(&self) -> Result<()> {
        if self.theta_bins < 3 {
            return Err(Error::domain(format!(
                "need at least 3 theta bins, got {}",
                self.theta_bins
            )));
        }
        if self.tau_points < 6 {
            return Err(Error::InsufficientSampling(format!(
                "need at least 6 tau samples, got {}",
                self.tau_points
            )));
        }
        if self.ir_cycles == 0 {
            return Err(Error::domain("delay span must cover at least one IR cycle"));
        }
        Ok(())
    }

    pub fn theta_edges(&self) -> Vec<R> {
        let n = self.theta_bins;
        (0..=n)
            .map(|i| R::PI() * real::<R>(i as f64) / real::<R>(n as f64))
            .collect()
    }

    pub fn tau_axis(&self, omega_ev: R) -> Vec<R> {
        let span = optical_period_fs(omega_ev) * real::<R>(self.ir_cycles as f64);
        let step = span / real::<R>(self.tau_points as f64);
        (0..self.tau_points)
            .map(|j| self.tau_start_fs + step * real::<R>(j as f64))
            .collect()
    }
}

/// How the configured counts budget is distributed over a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetMode {
    /// Every grid is scaled to the same total expected counts.
    PerGrid,
    /// One global scale: the campaign total is the budget and each grid keeps
    /// its intrinsic share (required for meaningful dichroism spectra).
    Proportional,
}

impl BudgetMode {
    pub fn name(self) -> &'static str {
        match self {
            BudgetMode::PerGrid => "per-grid",
            BudgetMode::Proportional => "proportional",
        }
    }
}

/// Noise / budget configuration for a campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub counts_budget: f64,
    pub budget_mode: BudgetMode,
    pub seed: u64,
}

/// Render one sideband model onto a trace grid.
///
/// Expected counts are the exact integrals of `intensity * sin(theta)` over
/// each theta bin, scaled so the grid total equals `counts_budget`; Poisson
/// noise (if requested) draws each cell independently from a stream seeded by
/// `seed` alone, so generation is bitwise reproducible.
pub fn generate_trace<R: Real>(
    model: &SidebandModel<R>,
    spec: &GridSpec<R>,
    counts_budget: f64,
    noise: NoiseMode,
    seed: u64,
) -> Result<TraceGrid<R>> {
    spec.validate()?;
    if !(counts_budget > 0.0) {
        return Err(Error::domain(format!("counts budget must be > 0, got {counts_budget}")));
    }
    let edges = spec.theta_edges();
    let tau = spec.tau_axis(model.omega_ev());
    let mut counts = Vec::with_capacity(spec.theta_bins * spec.tau_points);
    for i in 0..spec.theta_bins {
        for &t in &tau {
            counts.push(model.bin_intensity(edges[i], edges[i + 1], t)?);
        }
    }
    let total = counts.iter().fold(R::zero(), |a, &b| a + b);
    if !(total > R::zero()) {
        return Err(Error::domain("model has zero total intensity; nothing to generate"));
    }
    let scale = real::<R>(counts_budget) / total;
    for c in counts.iter_mut() {
        *c *= scale;
    }
    if noise == NoiseMode::Poisson {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in counts.iter_mut() {
            let lambda = c.to_f64().unwrap_or(0.0);
            *c = if lambda > 0.0 {
                let dist = rand_distr::Poisson::new(lambda)
                    .map_err(|e| Error::domain(format!("poisson({lambda}): {e}")))?;
                real::<R>(dist.sample(&mut rng))
            } else {
                R::zero()
            };
        }
    }
    let grid = TraceGrid {
        geometry: model.geometry(),
        sideband_order: 0, // campaign sets this; standalone traces carry 0
        sideband_energy_ev: model.sideband_energy_ev(),
        omega_ev: model.omega_ev(),
        noise,
        counts_budget,
        seed,
        theta_edges: edges,
        tau_fs: tau,
        counts,
    };
    grid.validate()?;
    Ok(grid)
}

/// Stable per-grid seed derivation: splitmix64 over (master, order, geometry).
pub fn derive_grid_seed(master: u64, order: u32, geometry: Geometry) -> u64 {
    let geom_bit = match geometry {
        Geometry::CoRotating => 1u64,
        Geometry::CounterRotating => 2u64,
    };
    splitmix64(master ^ splitmix64(((order as u64) << 2) | geom_bit))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A generated campaign: all trace grids plus the truth sidecar.
#[derive(Debug, Clone)]
pub struct Campaign<R: Real> {
    pub grids: Vec<TraceGrid<R>>,
    pub sidecar: Sidecar,
}

impl<R: Real> Campaign<R> {
    pub fn grid(&self, order: u32, geometry: Geometry) -> Option<&TraceGrid<R>> {
        self.grids
            .iter()
            .find(|g| g.sideband_order == order && g.geometry == geometry)
    }
}

/// Generate every (order, geometry) trace plus the sidecar.
///
/// Per-grid Poisson streams are derived from `(noise.seed, order, geometry)`,
/// so parallel and serial generation agree bitwise.
pub fn generate_campaign<R: Real>(
    truth: &GroundTruth<R>,
    spec: &GridSpec<R>,
    noise: &NoiseSpec,
) -> Result<Campaign<R>> {
    truth.validate()?;
    spec.validate()?;
    if !(noise.counts_budget > 0.0) {
        return Err(Error::domain(format!(
            "counts budget must be > 0, got {}",
            noise.counts_budget
        )));
    }

    // assemble all models first (cheap, and errors surface before any work)
    let mut jobs: Vec<(u32, Geometry, SidebandModel<R>)> = Vec::new();
    for &order in &truth.orders {
        for geometry in Geometry::BOTH {
            jobs.push((order, geometry, assemble_sideband_model(truth, order, geometry)?));
        }
    }

    // intrinsic (unscaled) totals decide proportional budgets
    let edges = spec.theta_edges();
    let raw_totals: Vec<f64> = jobs
        .par_iter()
        .map(|(_, _, model)| {
            let tau = spec.tau_axis(model.omega_ev());
            let mut total = R::zero();
            for i in 0..spec.theta_bins {
                for &t in &tau {
                    total += model.bin_intensity(edges[i], edges[i + 1], t).unwrap_or(R::zero());
                }
            }
            total.to_f64().unwrap_or(0.0)
        })
        .collect();
    let raw_sum: f64 = raw_totals.iter().sum();
    if !(raw_sum > 0.0) {
        return Err(Error::domain("campaign has zero total intensity"));
    }

    let budgets: Vec<f64> = match noise.budget_mode {
        BudgetMode::PerGrid => vec![noise.counts_budget; jobs.len()],
        BudgetMode::Proportional => raw_totals
            .iter()
            .map(|&r| noise.counts_budget * r / raw_sum)
            .collect(),
    };

    let mut grids: Vec<TraceGrid<R>> = jobs
        .par_iter()
        .zip(budgets.par_iter())
        .map(|((order, geometry, model), &budget)| {
            let seed = derive_grid_seed(noise.seed, *order, *geometry);
            let mut grid = generate_trace(model, spec, budget, noise.mode, seed)?;
            grid.sideband_order = *order;
            Ok(grid)
        })
        .collect::<Result<Vec<_>>>()?;
    // par_iter preserves order; keep (order, geometry) ordering stable anyway
    grids.sort_by_key(|g| (g.sideband_order, g.geometry != Geometry::CoRotating));

    let sidecar = build_sidecar(truth, noise, &jobs, &budgets, &raw_totals)?;
    Ok(Campaign { grids, sidecar })
}

// ---------------------------------------------------------------------------
// sidecar
// ---------------------------------------------------------------------------

/// Machine-readable ground truth emitted next to a generated campaign.
/// All values are f64.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub version: u32,
    pub omega_ev: f64,
    pub ionization_potential_ev: f64,
    pub near_threshold_floor_ev: f64,
    pub wigner_model: String,
    pub cc_mirror_antisymmetry: bool,
    pub noise: NoiseMode,
    pub budget_mode: BudgetMode,
    pub counts_budget: f64,
    pub master_seed: u64,
    pub orders: Vec<u32>,
    pub grids: Vec<SidecarGrid>,
    pub per_order: Vec<SidecarOrder>,
    pub midpoints: Vec<SidecarMidpoint>,
    pub expected_recovery: Vec<SidecarExpected>,
    pub calibration: SidecarCalibration,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarGrid {
    pub geometry: Geometry,
    pub order: u32,
    pub energy_ev: f64,
    pub seed: u64,
    pub counts_budget: f64,
    /// counts = scale_factor * intensity
    pub scale_factor: f64,
    /// fitted amplitudes should equal amplitude_scale * truth amplitudes
    pub amplitude_scale: f64,
    pub amplitudes: WaveTriple,
    pub expected_fit_amplitudes: WaveTriple,
    pub phases_unwrapped: WaveTriple,
    pub phases_canonical: WaveTriple,
    /// Signed continuum-continuum part of each wave's phase.
    pub cc_parts: WaveTriple,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WaveTriple {
    pub d2: f64,
    pub d0: f64,
    pub s: f64,
}

impl WaveTriple {
    pub fn get(&self, w: WaveLabel) -> f64 {
        match w {
            WaveLabel::D2 => self.d2,
            WaveLabel::D0 => self.d0,
            WaveLabel::S => self.s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarOrder {
    pub order: u32,
    pub energy_ev: f64,
    pub near_threshold: bool,
    /// Wigner phase at E_k, E_k - omega, E_k + omega.
    pub wigner_phase: f64,
    pub wigner_phase_minus: f64,
    pub wigner_phase_plus: f64,
    pub wigner_delay_analytic_as: f64,
    /// Unsigned cc magnitude g(E_k, l) per l.
    pub cc_g_l2: f64,
    pub cc_g_l0: f64,
    /// |(W(E+w) + W(E-w))/2 - W(E)|: exact deviation of the half-sum route.
    pub wigner_sum_bound_rad: f64,
    /// Exact deviation of the half-difference route (finite-difference delay
    /// substituted for the true slope).
    pub cc_recovery_bound_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarMidpoint {
    pub e_mid_ev: f64,
    pub lower_order: u32,
    pub upper_order: u32,
    pub wigner_delay_analytic_as: f64,
    /// Forward difference of the exact Wigner ladder.
    pub wigner_delay_fd_as: f64,
    pub fd_truncation_bound_as: f64,
    /// Analytic cc delay (absorption sign, per l) for reporting.
    pub cc_delay_analytic_l2_as: f64,
    pub cc_delay_analytic_l0_as: f64,
}

/// Noiseless values the separation stage should reproduce (fit error aside).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarExpected {
    pub order: u32,
    pub wigner_rad: f64,
    pub cc_abs_d2_rad: f64,
    pub cc_em_d0_rad: f64,
    pub cc_em_s_rad: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarCalibration {
    pub wave: String,
    pub per_order: Vec<SidecarCalibrationRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarCalibrationRow {
    pub order: u32,
    pub co_phase_rad: f64,
    pub counter_phase_rad: f64,
}

impl Sidecar {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serializes")
    }

    pub fn from_json(s: &str) -> Result<Sidecar> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("sidecar: {e}")))
    }

    pub fn grid(&self, order: u32, geometry: Geometry) -> Option<&SidecarGrid> {
        self.grids.iter().find(|g| g.order == order && g.geometry == geometry)
    }

    pub fn order(&self, order: u32) -> Option<&SidecarOrder> {
        self.per_order.iter().find(|o| o.order == order)
    }

    pub fn expected(&self, order: u32) -> Option<&SidecarExpected> {
        self.expected_recovery.iter().find(|o| o.order == order)
    }

    pub fn calibration_row(&self, order: u32) -> Option<&SidecarCalibrationRow> {
        self.calibration.per_order.iter().find(|r| r.order == order)
    }
}

fn triple_from<F: FnMut(WaveLabel) -> Result<f64>>(mut f: F) -> Result<WaveTriple> {
    Ok(WaveTriple {
        d2: f(WaveLabel::D2)?,
        d0: f(WaveLabel::D0)?,
        s: f(WaveLabel::S)?,
    })
}

fn build_sidecar<R: Real>(
    truth: &GroundTruth<R>,
    noise: &NoiseSpec,
    jobs: &[(u32, Geometry, SidebandModel<R>)],
    budgets: &[f64],
    raw_totals: &[f64],
) -> Result<Sidecar> {
    let to64 = |x: R| x.to_f64().unwrap();
    let omega = to64(truth.omega_ev);

    let mut grids = Vec::new();
    for (idx, (order, geometry, model)) in jobs.iter().enumerate() {
        let scale_factor = budgets[idx] / raw_totals[idx];
        let amplitude_scale = scale_factor.sqrt();
        let amplitudes = triple_from(|w| Ok(to64(model.wave(w).amplitude())))?;
        let phases_unwrapped =
            triple_from(|w| truth.wave_phase(*order, *geometry, w).map(&to64))?;
        let phases_canonical = WaveTriple {
            d2: wrap_phase(phases_unwrapped.d2),
            d0: wrap_phase(phases_unwrapped.d0),
            s: wrap_phase(phases_unwrapped.s),
        };
        let cc_parts = triple_from(|w| truth.wave_cc(*order, *geometry, w).map(&to64))?;
        grids.push(SidecarGrid {
            geometry: *geometry,
            order: *order,
            energy_ev: to64(model.sideband_energy_ev()),
            seed: derive_grid_seed(noise.seed, *order, *geometry),
            counts_budget: budgets[idx],
            scale_factor,
            amplitude_scale,
            amplitudes,
            expected_fit_amplitudes: WaveTriple {
                d2: amplitude_scale * amplitudes.d2,
                d0: amplitude_scale * amplitudes.d0,
                s: amplitude_scale * amplitudes.s,
            },
            phases_unwrapped,
            phases_canonical,
            cc_parts,
        });
    }

    // exact Wigner ladder (f64) used for bounds and expected recoveries
    let n = truth.orders.len();
    let mut energies = Vec::with_capacity(n);
    let mut w_at = Vec::with_capacity(n);
    let mut w_minus = Vec::with_capacity(n);
    let mut w_plus = Vec::with_capacity(n);
    for &order in &truth.orders {
        let e = to64(truth.sideband_energy(order)?);
        energies.push(e);
        w_at.push(to64(truth.wigner.phase(truth.sideband_energy(order)?)?));
        w_minus.push(to64(truth.wigner.phase(truth.sideband_energy(order)? - truth.omega_ev)?));
        w_plus.push(to64(truth.wigner.phase(truth.sideband_energy(order)? + truth.omega_ev)?));
    }

    // the separation stage substitutes a finite-difference delay for the true
    // slope; replay that estimate on the exact half-sum ladder
    let half_sum: Vec<f64> = (0..n).map(|i| 0.5 * (w_minus[i] + w_plus[i])).collect();
    let fd_interp_rad: Vec<Option<f64>> = (0..n)
        .map(|i| {
            // omega * tau_hat / hbar, tau_hat in phase units: see cc recovery
            if n < 2 {
                return None;
            }
            let v = if i == 0 {
                (half_sum[1] - half_sum[0]) / 2.0
            } else if i == n - 1 {
                (half_sum[n - 1] - half_sum[n - 2]) / 2.0
            } else {
                (half_sum[i + 1] - half_sum[i - 1]) / 4.0
            };
            Some(v)
        })
        .collect();

    let mut per_order = Vec::new();
    let mut expected_recovery = Vec::new();
    for (i, &order) in truth.orders.iter().enumerate() {
        let e_k = energies[i];
        let g_l2 = to64(truth.cc.g(truth.sideband_energy(order)?, 2)?);
        let g_l0 = to64(truth.cc.g(truth.sideband_energy(order)?, 0)?);
        let sum_route = 0.5 * (w_minus[i] + w_plus[i]);
        let wigner_sum_bound = (sum_route - w_at[i]).abs();
        // half-difference route: [W(E-w) - W(E+w)]/2 + fd estimate of w*W'
        let cc_sub_error = match fd_interp_rad[i] {
            Some(fd) => 0.5 * (w_minus[i] - w_plus[i]) + fd,
            None => f64::NAN,
        };
        per_order.push(SidecarOrder {
            order,
            energy_ev: e_k,
            near_threshold: truth.near_threshold(order)?,
            wigner_phase: w_at[i],
            wigner_phase_minus: w_minus[i],
            wigner_phase_plus: w_plus[i],
            wigner_delay_analytic_as: to64(delay_as_from_slope(
                truth.wigner.slope(truth.sideband_energy(order)?)?,
            )),
            cc_g_l2: g_l2,
            cc_g_l0: g_l0,
            wigner_sum_bound_rad: wigner_sum_bound,
            cc_recovery_bound_rad: cc_sub_error.abs(),
        });
        expected_recovery.push(SidecarExpected {
            order,
            wigner_rad: sum_route,
            cc_abs_d2_rad: g_l2 + cc_sub_error,
            cc_em_d0_rad: -g_l2 - cc_sub_error,
            cc_em_s_rad: -g_l0 - cc_sub_error,
        });
    }

    let mut midpoints = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let e_mid = 0.5 * (energies[i] + energies[i + 1]);
        let de = energies[i + 1] - energies[i];
        let fd = HBAR_EV_AS * (half_sum[i + 1] - half_sum[i]) / de;
        let e_mid_r = real::<R>(e_mid);
        let analytic = to64(delay_as_from_slope(truth.wigner.slope(e_mid_r)?));
        let cc_slope = to64(truth.cc.slope(e_mid_r)?);
        midpoints.push(SidecarMidpoint {
            e_mid_ev: e_mid,
            lower_order: truth.orders[i],
            upper_order: truth.orders[i + 1],
            wigner_delay_analytic_as: analytic,
            wigner_delay_fd_as: fd,
            fd_truncation_bound_as: (fd - analytic).abs(),
            cc_delay_analytic_l2_as: HBAR_EV_AS * cc_slope,
            cc_delay_analytic_l0_as: HBAR_EV_AS * cc_slope,
        });
    }

    let calibration = SidecarCalibration {
        wave: WaveLabel::D2.name().to_string(),
        per_order: truth
            .orders
            .iter()
            .map(|&order| {
                Ok(SidecarCalibrationRow {
                    order,
                    co_phase_rad: to64(truth.wave_phase(order, Geometry::CoRotating, WaveLabel::D2)?),
                    counter_phase_rad: to64(truth.wave_phase(
                        order,
                        Geometry::CounterRotating,
                        WaveLabel::D2,
                    )?),
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };

    Ok(Sidecar {
        version: 1,
        omega_ev: omega,
        ionization_potential_ev: to64(truth.ionization_potential_ev),
        near_threshold_floor_ev: to64(truth.near_threshold_floor_ev),
        wigner_model: truth.wigner.describe(),
        cc_mirror_antisymmetry: truth.cc.mirror_antisymmetry,
        noise: noise.mode,
        budget_mode: noise.budget_mode,
        counts_budget: noise.counts_budget,
        master_seed: noise.seed,
        orders: truth.orders.clone(),
        grids,
        per_order,
        midpoints,
        expected_recovery,
        calibration,
    })
}

// ---------------------------------------------------------------------------
// configuration file (TOML sections)
// ---------------------------------------------------------------------------

/// Serde image of the campaign sections of a config file.  Unknown sections
/// are ignored so a pipeline config can embed additional tables.
#[derive(Debug, Clone, Deserialize)]
pub struct CampaignConfig {
    pub campaign: CampaignSection,
    pub wigner: WignerSection,
    #[serde(default)]
    pub cc: CcSection,
    #[serde(default)]
    pub amplitudes: AmplitudeSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub noise: NoiseSection,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CampaignSection {
    pub sideband_orders: Vec<u32>,
    pub ionization_potential_ev: f64,
    pub ir_photon_ev: Option<f64>,
    pub ir_wavelength_nm: Option<f64>,
    #[serde(default = "default_floor")]
    pub near_threshold_floor_ev: f64,
}

fn default_floor() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
pub struct WignerSection {
    pub model: String,
    pub effective_charge: Option<f64>,
    pub slope_rad_per_ev: Option<f64>,
    pub intercept_rad: Option<f64>,
    pub points: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct CcSection {
    pub strength: f64,
    pub softening: f64,
    pub offset_s: f64,
    pub offset_d: f64,
    pub mirror_antisymmetry: bool,
}

impl Default for CcSection {
    fn default() -> Self {
        CcSection {
            strength: 0.35,
            softening: 1.0,
            offset_s: 0.05,
            offset_d: 0.0,
            mirror_antisymmetry: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct AmplitudeSection {
    pub base_d2: f64,
    pub base_d0: f64,
    pub base_s: f64,
    pub fano_strength: f64,
    pub fano_softening: f64,
    pub overrides: Vec<OverrideRow>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct OverrideRow {
    pub order: u32,
    pub geometry: String,
    pub d2: f64,
    pub d0: f64,
    pub s: f64,
}

impl Default for AmplitudeSection {
    fn default() -> Self {
        AmplitudeSection {
            base_d2: 1.0,
            base_d0: 0.55,
            base_s: 0.40,
            fano_strength: 1.2,
            fano_softening: 1.0,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub theta_bins: usize,
    pub tau_points: usize,
    pub tau_start_fs: f64,
    pub ir_cycles: u32,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { theta_bins: 60, tau_points: 24, tau_start_fs: 0.0, ir_cycles: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    pub mode: String,
    pub counts_budget: f64,
    pub budget: String,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            mode: "poisson".into(),
            counts_budget: 1.2e7,
            budget: "proportional".into(),
            seed: 20240812,
        }
    }
}

impl CampaignConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn omega_ev(&self) -> Result<f64> {
        match (self.campaign.ir_photon_ev, self.campaign.ir_wavelength_nm) {
            (Some(ev), None) => Ok(ev),
            (None, Some(nm)) => Ok(crate::units::photon_energy_ev(nm)),
            (Some(_), Some(_)) => Err(Error::domain(
                "set either ir_photon_ev or ir_wavelength_nm, not both",
            )),
            (None, None) => Err(Error::domain(
                "one of ir_photon_ev or ir_wavelength_nm is required",
            )),
        }
    }

    pub fn ground_truth(&self) -> Result<GroundTruth<f64>> {
        let omega = self.omega_ev()?;
        let wigner = match self.wigner.model.as_str() {
            "coulomb" => WignerModel::Coulomb {
                effective_charge: self.wigner.effective_charge.unwrap_or(1.0),
            },
            "linear" => WignerModel::Linear {
                slope_rad_per_ev: self.wigner.slope_rad_per_ev.ok_or_else(|| {
                    Error::domain("linear wigner model requires slope_rad_per_ev")
                })?,
                intercept_rad: self.wigner.intercept_rad.unwrap_or(0.0),
            },
            "table" => {
                let raw = self
                    .wigner
                    .points
                    .as_ref()
                    .ok_or_else(|| Error::domain("table wigner model requires points"))?;
                let mut points: Vec<(f64, f64)> = raw.iter().map(|p| (p[0], p[1])).collect();
                points.sort_by(|a, b| a.0.total_cmp(&b.0));
                WignerModel::Table { points }
            }
            other => {
                return Err(Error::domain(format!(
                    "unknown wigner model '{other}' (expected coulomb, linear or table)"
                )))
            }
        };
        let cc = CcModel {
            strength: self.cc.strength,
            softening: self.cc.softening,
            offset_l0: self.cc.offset_s,
            offset_l2: self.cc.offset_d,
            mirror_antisymmetry: self.cc.mirror_antisymmetry,
        };
        let overrides = self
            .amplitudes
            .overrides
            .iter()
            .map(|o| {
                Ok(AmplitudeOverride {
                    order: o.order,
                    geometry: Geometry::from_name(&o.geometry)?,
                    amplitudes: [o.d2, o.d0, o.s],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let amplitudes = AmplitudeModel {
            base: [self.amplitudes.base_d2, self.amplitudes.base_d0, self.amplitudes.base_s],
            fano_strength: self.amplitudes.fano_strength,
            fano_softening: self.amplitudes.fano_softening,
            overrides,
        };
        let truth = GroundTruth {
            orders: self.campaign.sideband_orders.clone(),
            omega_ev: omega,
            ionization_potential_ev: self.campaign.ionization_potential_ev,
            near_threshold_floor_ev: self.campaign.near_threshold_floor_ev,
            wigner,
            cc,
            amplitudes,
        };
        truth.validate()?;
        Ok(truth)
    }

    pub fn grid_spec(&self) -> GridSpec<f64> {
        GridSpec {
            theta_bins: self.grid.theta_bins,
            tau_points: self.grid.tau_points,
            tau_start_fs: self.grid.tau_start_fs,
            ir_cycles: self.grid.ir_cycles,
        }
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let mode = NoiseMode::from_name(&self.noise.mode)?;
        let budget_mode = match self.noise.budget.as_str() {
            "per-grid" => BudgetMode::PerGrid,
            "proportional" => BudgetMode::Proportional,
            other => {
                return Err(Error::domain(format!(
                    "unknown budget mode '{other}' (expected per-grid or proportional)"
                )))
            }
        };
        Ok(NoiseSpec {
            mode,
            counts_budget: self.noise.counts_budget,
            budget_mode,
            seed: self.noise.seed,
        })
    }
}
