//! Simultaneous fit of a co/counter trace pair to the three-wave model.
//!
//! Counts in theta bin i at delay tau_j are modelled as
//!
//! ```text
//! n_ij = a2^2 B22_i + a0^2 B20_i + as^2 B00_i
//!      + 2 a0 as cos(ph0 - phs)          B_20x00_i
//!      + 2 a2 a0 cos(psi_j + ph2 - ph0)  B_22x20_i
//!      + 2 a2 as cos(psi_j + ph2 - phs)  B_22x00_i
//! ```
//!
//! where `psi_j` is the signed beat phase (the sign encodes the geometry),
//! the `B` factors are exact per-bin integrals of the angular products, and
//! the fitted amplitudes absorb the counts scale.  The overall phase of each
//! geometry is not observable, so the fit pins `ph2 = 0` per geometry (the
//! "raw" gauge) and free parameters are log-amplitudes and the two phase
//! differences; `fix_gauge` later rebases all phases on an external d2
//! reference.  A 12-parameter variant with `ph2` free exists solely so that
//! tests can verify the null space of the raw problem is exactly the two
//! per-geometry gauge directions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gauss_legendre_3, Geometry, WaveLabel};
use crate::optim::{
    lm_minimize, LeastSquaresProblem, LmOptions, Mat, sym_eigen,
};
use crate::real::{real, total_cmp, wrap_phase, Real};
use crate::special::{K20, K22, Y00};
use crate::trace::TraceGrid;
use crate::units::HBAR_EV_FS;

/// Residual weighting scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// 1 / sqrt(max(counts, 1)): residuals in units of the shot noise.
    Poisson,
    /// Unweighted least squares.
    Uniform,
}

impl Weighting {
    pub fn name(self) -> &'static str {
        match self {
            Weighting::Poisson => "poisson",
            Weighting::Uniform => "uniform",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(Weighting::Poisson),
            "uniform" => Ok(Weighting::Uniform),
            other => Err(Error::Parse(format!("unknown weighting '{other}'"))),
        }
    }
}

const N_PER_BLOCK_FIXED: usize = 5;
const N_PER_BLOCK_FREE: usize = 6;

struct Block<R: Real> {
    geometry: Geometry,
    n_theta: usize,
    n_tau: usize,
    /// Signed beat phase per delay sample.
    psi: Vec<R>,
    /// Per-bin angular integrals: [22*22, 20*20, 00*00, 20*00, 22*20, 22*00].
    basis: [Vec<R>; 6],
    counts: Vec<R>,
    weights: Vec<R>,
}

impl<R: Real> Block<R> {
    fn from_grid(grid: &TraceGrid<R>, weighting: Weighting) -> Result<Self> {
        grid.validate()?;
        let n_theta = grid.n_theta();
        let n_tau = grid.n_tau();
        let sign = real::<R>(grid.geometry.d2_delay_sign());
        let two_w = real::<R>(2.0) * grid.omega_ev / real::<R>(HBAR_EV_FS);
        let psi = grid.tau_fs.iter().map(|&t| sign * two_w * t).collect();

        let y22 = |c: R| real::<R>(K22) * (R::one() - c * c);
        let y20 = |c: R| real::<R>(K20) * (real::<R>(3.0) * c * c - R::one());
        let y00 = real::<R>(Y00);
        let mut basis: [Vec<R>; 6] = Default::default();
        for b in basis.iter_mut() {
            b.reserve(n_theta);
        }
        for i in 0..n_theta {
            // integrate over cos(theta); the polynomial integrands have
            // degree <= 4, so three-point Gauss-Legendre is exact
            let c_hi = grid.theta_edges[i].cos();
            let c_lo = grid.theta_edges[i + 1].cos();
            let half = (c_hi - c_lo) * real::<R>(0.5);
            let mid = (c_hi + c_lo) * real::<R>(0.5);
            let mut acc = [R::zero(); 6];
            for (node, weight) in gauss_legendre_3::<R>() {
                let c = mid + half * node;
                let (a, b, d) = (y22(c), y20(c), y00);
                let vals = [a * a, b * b, d * d, b * d, a * b, a * d];
                for (s, v) in acc.iter_mut().zip(vals) {
                    *s += weight * v;
                }
            }
            for (b, s) in basis.iter_mut().zip(acc) {
                b.push(s * half);
            }
        }

        let weights = grid
            .counts
            .iter()
            .map(|&c| match weighting {
                Weighting::Uniform => R::one(),
                Weighting::Poisson => R::one() / c.max(R::one()).sqrt(),
            })
            .collect();

        Ok(Block {
            geometry: grid.geometry,
            n_theta,
            n_tau,
            psi,
            basis,
            counts: grid.counts.clone(),
            weights,
        })
    }

    fn n_cells(&self) -> usize {
        self.n_theta * self.n_tau
    }

    fn total_counts(&self) -> R {
        self.counts.iter().fold(R::zero(), |a, &b| a + b)
    }

    /// Equal-amplitude starting scale from the mean count level.
    fn amplitude_scale(&self) -> Result<R> {
        let denom = (0..self.n_theta).fold(R::zero(), |acc, i| {
            acc + self.basis[0][i] + self.basis[1][i] + self.basis[2][i]
        }) * real::<R>(self.n_tau as f64);
        let total = self.total_counts();
        if !(total > R::zero()) || !(denom > R::zero()) {
            return Err(Error::Unidentifiable(format!(
                "{} trace has no counts to scale against",
                self.geometry.name()
            )));
        }
        Ok((total / denom).sqrt())
    }
}

/// The joint least-squares problem for one sideband pair.
pub struct FitProblem<R: Real> {
    sideband_order: u32,
    sideband_energy_ev: R,
    omega_ev: R,
    blocks: [Block<R>; 2], // co, counter
    free_gauge: bool,
}

impl<R: Real> FitProblem<R> {
    /// Build the gauge-fixed (10-parameter) problem.
    pub fn new(
        co: &TraceGrid<R>,
        counter: &TraceGrid<R>,
        weighting: Weighting,
    ) -> Result<Self> {
        Self::build(co, counter, weighting, false)
    }

    /// Build the 12-parameter variant with the per-geometry overall phases
    /// free; used to probe the gauge null space.
    pub fn with_free_gauge(
        co: &TraceGrid<R>,
        counter: &TraceGrid<R>,
        weighting: Weighting,
    ) -> Result<Self> {
        Self::build(co, counter, weighting, true)
    }

    fn build(
        co: &TraceGrid<R>,
        counter: &TraceGrid<R>,
        weighting: Weighting,
        free_gauge: bool,
    ) -> Result<Self> {
        if co.geometry != Geometry::CoRotating || counter.geometry != Geometry::CounterRotating {
            return Err(Error::AxisMismatch(format!(
                "expected (co, counter) pair, got ({}, {})",
                co.geometry.name(),
                counter.geometry.name()
            )));
        }
        if co.sideband_order != counter.sideband_order {
            return Err(Error::AxisMismatch(format!(
                "sideband order mismatch: {} vs {}",
                co.sideband_order, counter.sideband_order
            )));
        }
        let rel = |a: R, b: R| (a - b).abs() <= real::<R>(1e-12) * a.abs().max(b.abs());
        if !rel(co.omega_ev, counter.omega_ev) {
            return Err(Error::AxisMismatch("photon energy differs within the pair".into()));
        }
        if !rel(co.sideband_energy_ev, counter.sideband_energy_ev) {
            return Err(Error::AxisMismatch("sideband energy differs within the pair".into()));
        }
        let blocks = [
            Block::from_grid(co, weighting)?,
            Block::from_grid(counter, weighting)?,
        ];
        let n_res = blocks[0].n_cells() + blocks[1].n_cells();
        let n_par = if free_gauge { 12 } else { 10 };
        if n_res < n_par {
            return Err(Error::Unidentifiable(format!(
                "{n_res} cells cannot determine {n_par} parameters"
            )));
        }
        for b in &blocks {
            b.amplitude_scale()?; // rejects all-zero blocks
        }
        Ok(FitProblem {
            sideband_order: co.sideband_order,
            sideband_energy_ev: co.sideband_energy_ev,
            omega_ev: co.omega_ev,
            blocks,
            free_gauge,
        })
    }

    fn per_block(&self) -> usize {
        if self.free_gauge { N_PER_BLOCK_FREE } else { N_PER_BLOCK_FIXED }
    }

    /// Names of the raw fit parameters, in order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.per_block() * 2);
        for block in &self.blocks {
            let g = block.geometry.name();
            names.push(format!("{g}.ln_amp_d2"));
            names.push(format!("{g}.ln_amp_d0"));
            names.push(format!("{g}.ln_amp_s"));
            if self.free_gauge {
                names.push(format!("{g}.phase_d2"));
            }
            names.push(format!("{g}.phase_d0"));
            names.push(format!("{g}.phase_s"));
        }
        names
    }

    /// Index of a wave's phase parameter in the gauge-fixed layout; `None`
    /// for d2, whose phase is the gauge anchor.
    pub fn phase_param_index(geometry: Geometry, wave: WaveLabel) -> Option<usize> {
        let base = match geometry {
            Geometry::CoRotating => 0,
            Geometry::CounterRotating => N_PER_BLOCK_FIXED,
        };
        match wave {
            WaveLabel::D2 => None,
            WaveLabel::D0 => Some(base + 3),
            WaveLabel::S => Some(base + 4),
        }
    }

    fn unpack(&self, params: &[R], block_idx: usize) -> ([R; 3], [R; 3]) {
        let base = block_idx * self.per_block();
        let amps = [params[base].exp(), params[base + 1].exp(), params[base + 2].exp()];
        let phases = if self.free_gauge {
            [params[base + 3], params[base + 4], params[base + 5]]
        } else {
            [R::zero(), params[base + 3], params[base + 4]]
        };
        (amps, phases)
    }
}

impl<R: Real> LeastSquaresProblem<R> for FitProblem<R> {
    fn n_params(&self) -> usize {
        self.per_block() * 2
    }

    fn n_residuals(&self) -> usize {
        self.blocks[0].n_cells() + self.blocks[1].n_cells()
    }

    fn residuals(&self, params: &[R], out: &mut [R]) -> Result<()> {
        let two = real::<R>(2.0);
        let mut at = 0;
        for (bi, block) in self.blocks.iter().enumerate() {
            let ([a2, a0, as_], [ph2, ph0, phs]) = self.unpack(params, bi);
            let static_0s = two * a0 * as_ * (ph0 - phs).cos();
            for i in 0..block.n_theta {
                let b22 = block.basis[0][i];
                let b20 = block.basis[1][i];
                let b00 = block.basis[2][i];
                let b0s = block.basis[3][i];
                let b20x = block.basis[4][i];
                let b00x = block.basis[5][i];
                let dc = a2 * a2 * b22 + a0 * a0 * b20 + as_ * as_ * b00 + static_0s * b0s;
                for j in 0..block.n_tau {
                    let idx = i * block.n_tau + j;
                    let beat0 = block.psi[j] + ph2 - ph0;
                    let beats = block.psi[j] + ph2 - phs;
                    let model = dc
                        + two * a2 * a0 * beat0.cos() * b20x
                        + two * a2 * as_ * beats.cos() * b00x;
                    out[at + idx] = block.weights[idx] * (model - block.counts[idx]);
                }
            }
            at += block.n_cells();
        }
        Ok(())
    }

    fn jacobian(&self, params: &[R], out: &mut Mat<R>) -> Result<()> {
        debug_assert_eq!(out.rows, self.n_residuals());
        debug_assert_eq!(out.cols, self.n_params());
        for v in out.data.iter_mut() {
            *v = R::zero();
        }
        let two = real::<R>(2.0);
        let per = self.per_block();
        let mut at = 0;
        for (bi, block) in self.blocks.iter().enumerate() {
            let base = bi * per;
            let ([a2, a0, as_], [ph2, ph0, phs]) = self.unpack(params, bi);
            let cos_0s = (ph0 - phs).cos();
            let sin_0s = (ph0 - phs).sin();
            for i in 0..block.n_theta {
                let b22 = block.basis[0][i];
                let b20 = block.basis[1][i];
                let b00 = block.basis[2][i];
                let b0s = block.basis[3][i];
                let b20x = block.basis[4][i];
                let b00x = block.basis[5][i];
                for j in 0..block.n_tau {
                    let idx = i * block.n_tau + j;
                    let w = block.weights[idx];
                    let beat0 = block.psi[j] + ph2 - ph0;
                    let beats = block.psi[j] + ph2 - phs;
                    let t20 = two * a2 * a0 * b20x; // beat term prefactors
                    let t00 = two * a2 * as_ * b00x;
                    let t0s = two * a0 * as_ * b0s;
                    let row = out.row_mut(at + idx);
                    // d/d ln(a2)
                    row[base] =
                        w * (two * a2 * a2 * b22 + t20 * beat0.cos() + t00 * beats.cos());
                    // d/d ln(a0)
                    row[base + 1] =
                        w * (two * a0 * a0 * b20 + t0s * cos_0s + t20 * beat0.cos());
                    // d/d ln(as)
                    row[base + 2] =
                        w * (two * as_ * as_ * b00 + t0s * cos_0s + t00 * beats.cos());
                    if self.free_gauge {
                        row[base + 3] = w * (-t20 * beat0.sin() - t00 * beats.sin());
                        row[base + 4] = w * (-t0s * sin_0s + t20 * beat0.sin());
                        row[base + 5] = w * (t0s * sin_0s + t00 * beats.sin());
                    } else {
                        row[base + 3] = w * (-t0s * sin_0s + t20 * beat0.sin());
                        row[base + 4] = w * (t0s * sin_0s + t00 * beats.sin());
                    }
                }
            }
            at += block.n_cells();
        }
        Ok(())
    }
}

/// Options for the global (multi-start) fit.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions<R: Real> {
    pub weighting: Weighting,
    pub n_starts: usize,
    pub seed: u64,
    pub lm: LmOptions<R>,
}

impl<R: Real> Default for FitOptions<R> {
    fn default() -> Self {
        FitOptions {
            weighting: Weighting::Poisson,
            n_starts: 24,
            seed: 0x5EED,
            lm: LmOptions { max_iter: 150, ..LmOptions::default() },
        }
    }
}

/// One wave's fitted parameters in one geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveEstimate<R: Real> {
    pub amplitude: R,
    pub sigma_amplitude: R,
    /// Raw gauge: phase relative to this geometry's d2 wave; calibrated
    /// gauge: absolute phase on the real line.
    pub phase: R,
    pub sigma_phase: R,
    pub ci95_phase: R,
    /// False when the data do not constrain this wave (flat directions in
    /// the normal matrix); sigmas are infinite in that case.
    pub identifiable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryEstimates<R: Real> {
    pub d2: WaveEstimate<R>,
    pub d0: WaveEstimate<R>,
    pub s: WaveEstimate<R>,
}

impl<R: Real> GeometryEstimates<R> {
    pub fn wave(&self, label: WaveLabel) -> &WaveEstimate<R> {
        match label {
            WaveLabel::D2 => &self.d2,
            WaveLabel::D0 => &self.d0,
            WaveLabel::S => &self.s,
        }
    }

    fn wave_mut(&mut self, label: WaveLabel) -> &mut WaveEstimate<R> {
        match label {
            WaveLabel::D2 => &mut self.d2,
            WaveLabel::D0 => &mut self.d0,
            WaveLabel::S => &mut self.s,
        }
    }
}

/// Where the phase origin of each geometry currently sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GaugeRecord {
    /// Phases are relative to the d2 wave of the same geometry.
    Raw { fixed_wave: String },
    /// Phases were rebased on external d2 references.
    Calibrated {
        wave: String,
        co_reference_rad: f64,
        counter_reference_rad: f64,
        source: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goodness<R: Real> {
    /// Weighted sum of squared residuals at the optimum.
    pub cost: R,
    pub n_data: usize,
    pub n_free: usize,
    pub dof: usize,
    /// cost / dof; near 1 for Poisson-weighted fits of Poisson data.
    pub reduced: R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_starts: usize,
    pub n_converged: usize,
    pub best_status: String,
    pub best_iterations: usize,
    /// Raw parameter names the data leave unconstrained.
    pub unidentifiable: Vec<String>,
}

/// Result of fitting one sideband's co/counter pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<R: Real> {
    pub sideband_order: u32,
    pub sideband_energy_ev: R,
    pub omega_ev: R,
    pub weighting: Weighting,
    /// Raw optimizer parameters (gauge-fixed layout).
    pub params: Vec<R>,
    pub param_names: Vec<String>,
    /// Covariance of the raw parameters (pseudo-inverse over the
    /// identifiable subspace, scaled by the reduced chi-square).
    pub covariance: Vec<Vec<R>>,
    pub co: GeometryEstimates<R>,
    pub counter: GeometryEstimates<R>,
    pub gauge: GaugeRecord,
    pub goodness: Goodness<R>,
    pub diagnostics: FitDiagnostics,
}

impl<R: Real> FitResult<R> {
    pub fn waves(&self, geometry: Geometry) -> &GeometryEstimates<R> {
        match geometry {
            Geometry::CoRotating => &self.co,
            Geometry::CounterRotating => &self.counter,
        }
    }

    fn waves_mut(&mut self, geometry: Geometry) -> &mut GeometryEstimates<R> {
        match geometry {
            Geometry::CoRotating => &mut self.co,
            Geometry::CounterRotating => &mut self.counter,
        }
    }

    pub fn wave(&self, geometry: Geometry, label: WaveLabel) -> &WaveEstimate<R> {
        self.waves(geometry).wave(label)
    }

    /// Covariance between two waves' phases (zero whenever either is the
    /// gauge-anchored d2 wave or the geometries differ).
    pub fn phase_covariance(
        &self,
        g1: Geometry,
        w1: WaveLabel,
        g2: Geometry,
        w2: WaveLabel,
    ) -> R {
        match (
            FitProblem::<R>::phase_param_index(g1, w1),
            FitProblem::<R>::phase_param_index(g2, w2),
        ) {
            (Some(i), Some(j)) => self.covariance[i][j],
            _ => R::zero(),
        }
    }

    pub fn is_calibrated(&self) -> bool {
        matches!(self.gauge, GaugeRecord::Calibrated { .. })
    }

    /// Human-readable fit summary.
    pub fn summary(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "sideband {} (E = {} eV): reduced chi2 = {}, {} of {} starts converged ({})",
            self.sideband_order,
            self.sideband_energy_ev,
            self.goodness.reduced,
            self.diagnostics.n_converged,
            self.diagnostics.n_starts,
            self.diagnostics.best_status,
        );
        let gauge = match &self.gauge {
            GaugeRecord::Raw { fixed_wave } => format!("raw (phases relative to {fixed_wave})"),
            GaugeRecord::Calibrated { wave, source, .. } => {
                format!("calibrated on {wave} ({source})")
            }
        };
        let _ = writeln!(s, "  gauge: {gauge}");
        for geometry in Geometry::BOTH {
            let _ = writeln!(s, "  {}:", geometry.name());
            for label in WaveLabel::ALL {
                let w = self.wave(geometry, label);
                let _ = writeln!(
                    s,
                    "    {:>2}: amplitude {} +- {}, phase {} +- {} rad{}",
                    label.name(),
                    w.amplitude,
                    w.sigma_amplitude,
                    w.phase,
                    w.sigma_phase,
                    if w.identifiable { "" } else { "  [unconstrained]" },
                );
            }
        }
        if !self.diagnostics.unidentifiable.is_empty() {
            let _ = writeln!(
                s,
                "  unconstrained parameters: {}",
                self.diagnostics.unidentifiable.join(", ")
            );
        }
        s
    }
}

impl FitResult<f64> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("fit result: {e}")))
    }
}

/// Multi-start Levenberg-Marquardt fit of one sideband pair.
///
/// Starts are stratified over the two phase differences of each geometry and
/// jittered in log-amplitude around a scale estimated from the data; each
/// start's random stream is derived from `(seed, start index)`, so the result
/// does not depend on thread scheduling.
pub fn global_fit<R: Real>(
    co: &TraceGrid<R>,
    counter: &TraceGrid<R>,
    opts: &FitOptions<R>,
) -> Result<FitResult<R>> {
    let problem = FitProblem::new(co, counter, opts.weighting)?;
    let n_par = problem.n_params();
    let n_res = problem.n_residuals();
    let n_starts = opts.n_starts.max(1);

    let scale_co = problem.blocks[0].amplitude_scale()?;
    let scale_ct = problem.blocks[1].amplitude_scale()?;

    let starts: Vec<Vec<R>> = (0..n_starts)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, k as u64));
            let mut p = vec![R::zero(); n_par];
            for (bi, scale) in [scale_co, scale_ct].into_iter().enumerate() {
                let base = bi * N_PER_BLOCK_FIXED;
                let ln_scale = scale.ln();
                for slot in 0..3 {
                    let jitter = real::<R>(rng.gen_range(-0.8..0.8));
                    p[base + slot] = ln_scale + jitter;
                }
                // stratify the phase torus in 4x4 cells; shift the counter
                // strata so the two blocks do not sample in lockstep
                let (i0, i1) = if bi == 0 {
                    (k % 4, (k / 4) % 4)
                } else {
                    ((k + 2) % 4, (k / 4 + 1 + k % 2) % 4)
                };
                let cell = |idx: usize, u: f64| -> R {
                    real::<R>(-std::f64::consts::PI + (idx as f64 + u) * std::f64::consts::FRAC_PI_2)
                };
                p[base + 3] = cell(i0, rng.gen_range(0.0..1.0));
                p[base + 4] = cell(i1, rng.gen_range(0.0..1.0));
            }
            p
        })
        .collect();

    let outcomes: Vec<_> = starts
        .par_iter()
        .map(|p0| lm_minimize(&problem, p0, &opts.lm))
        .collect::<Result<Vec<_>>>()?;

    let n_converged = outcomes.iter().filter(|o| o.status.converged()).count();
    let best = outcomes
        .iter()
        .min_by(|a, b| {
            total_cmp(a.cost, b.cost).then_with(|| {
                for (x, y) in a.params.iter().zip(&b.params) {
                    let ord = total_cmp(*x, *y);
                    if ord != std::cmp::Ordering::Equal {
                        return ord;
                    }
                }
                std::cmp::Ordering::Equal
            })
        })
        .expect("at least one start");
    if n_converged == 0 || !best.cost.is_finite() {
        return Err(Error::NonConvergence(format!(
            "no start converged for sideband {} ({} starts, best status {:?}, best cost {})",
            problem.sideband_order, n_starts, best.status, best.cost
        )));
    }

    // canonicalize phase parameters
    let mut params = best.params.clone();
    for bi in 0..2 {
        let base = bi * N_PER_BLOCK_FIXED;
        params[base + 3] = wrap_phase(params[base + 3]);
        params[base + 4] = wrap_phase(params[base + 4]);
    }

    // curvature analysis at the optimum
    let mut jac = Mat::zeros(n_res, n_par);
    problem.jacobian(&params, &mut jac)?;
    let normal = jac.t_mul_self();
    let (eig, vecs) = sym_eigen(&normal);
    let max_eig = eig[n_par - 1].max(R::zero());
    let null_threshold = real::<R>(1e-10) * max_eig;
    let mut null_dirs = Vec::new();
    for (k, &lambda) in eig.iter().enumerate() {
        if lambda <= null_threshold {
            null_dirs.push(k);
        }
    }
    let names = problem.param_names();
    let mut unident_flags = vec![false; n_par];
    for &k in &null_dirs {
        for i in 0..n_par {
            let comp = vecs.get(i, k);
            if comp * comp > real::<R>(0.25) {
                unident_flags[i] = true;
            }
        }
    }
    let unidentifiable: Vec<String> = names
        .iter()
        .zip(&unident_flags)
        .filter(|(_, &f)| f)
        .map(|(n, _)| n.clone())
        .collect();

    let n_free = n_par - null_dirs.len();
    let dof = n_res.saturating_sub(n_free).max(1);
    let s2 = best.cost / real::<R>(dof as f64);

    // covariance restricted to the identifiable subspace
    let mut cov = vec![vec![R::zero(); n_par]; n_par];
    for (k, &lambda) in eig.iter().enumerate() {
        if lambda > null_threshold {
            let f = s2 / lambda;
            for i in 0..n_par {
                let vi = vecs.get(i, k);
                if vi == R::zero() {
                    continue;
                }
                for j in 0..n_par {
                    cov[i][j] += f * vi * vecs.get(j, k);
                }
            }
        }
    }

    let sigma = |i: usize| -> R {
        if unident_flags[i] {
            R::infinity()
        } else {
            cov[i][i].max(R::zero()).sqrt()
        }
    };
    let ci = real::<R>(1.96);

    let estimate = |bi: usize| -> GeometryEstimates<R> {
        let base = bi * N_PER_BLOCK_FIXED;
        let make = |amp_idx: usize, phase_idx: Option<usize>| -> WaveEstimate<R> {
            let amplitude = params[amp_idx].exp();
            let s_amp = sigma(amp_idx) * amplitude;
            let (phase, s_ph) = match phase_idx {
                Some(pi) => (params[pi], sigma(pi)),
                None => (R::zero(), R::zero()), // gauge anchor
            };
            let ident = !unident_flags[amp_idx]
                && phase_idx.is_none_or(|pi| !unident_flags[pi]);
            WaveEstimate {
                amplitude,
                sigma_amplitude: s_amp,
                phase,
                sigma_phase: s_ph,
                ci95_phase: s_ph * ci,
                identifiable: ident,
            }
        };
        GeometryEstimates {
            d2: make(base, None),
            d0: make(base + 1, Some(base + 3)),
            s: make(base + 2, Some(base + 4)),
        }
    };

    let co_estimates = estimate(0);
    let counter_estimates = estimate(1);

    Ok(FitResult {
        sideband_order: problem.sideband_order,
        sideband_energy_ev: problem.sideband_energy_ev,
        omega_ev: problem.omega_ev,
        weighting: opts.weighting,
        params,
        param_names: names,
        covariance: cov,
        co: co_estimates,
        counter: counter_estimates,
        gauge: GaugeRecord::Raw { fixed_wave: WaveLabel::D2.name().to_string() },
        goodness: Goodness {
            cost: best.cost,
            n_data: n_res,
            n_free,
            dof,
            reduced: s2,
        },
        diagnostics: FitDiagnostics {
            n_starts,
            n_converged,
            best_status: format!("{:?}", best.status),
            best_iterations: best.n_iter,
            unidentifiable,
        },
    })
}

fn mix_seed(seed: u64, k: u64) -> u64 {
    let mut x = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Rebase the fitted phases of each geometry on an external d2 reference
/// (typically per-sideband calibration values).  Phase differences and all
/// uncertainties are untouched; after calibration the d2 phase equals the
/// reference exactly.  Calibrating twice is an error.
pub fn fix_gauge<R: Real>(
    result: &mut FitResult<R>,
    co_reference_rad: R,
    counter_reference_rad: R,
    source: &str,
) -> Result<()> {
    if result.is_calibrated() {
        return Err(Error::Gauge("fit result is already calibrated".into()));
    }
    for (geometry, reference) in [
        (Geometry::CoRotating, co_reference_rad),
        (Geometry::CounterRotating, counter_reference_rad),
    ] {
        if !reference.is_finite() {
            return Err(Error::Gauge(format!(
                "non-finite {} calibration reference",
                geometry.name()
            )));
        }
        let est = result.waves_mut(geometry);
        for label in WaveLabel::ALL {
            est.wave_mut(label).phase += reference;
        }
    }
    result.gauge = GaugeRecord::Calibrated {
        wave: WaveLabel::D2.name().to_string(),
        co_reference_rad: co_reference_rad.to_f64().unwrap_or(f64::NAN),
        counter_reference_rad: counter_reference_rad.to_f64().unwrap_or(f64::NAN),
        source: source.to_string(),
    };
    Ok(())
}
