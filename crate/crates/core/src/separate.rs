//! Splitting calibrated phases into Wigner and continuum-continuum parts.
//!
//! For a wave of angular momentum l, the two geometries carry
//!
//! ```text
//! co:      phi = -l*pi/2 + wigner(E -+ omega) + cc(+-)
//! counter: phi = -l*pi/2 + wigner(E +- omega) - cc(+-)
//! ```
//!
//! with the upper signs for the wave fed by IR absorption in the co-rotating
//! geometry (d2) and the lower for the emission-fed waves (d0, s).  The
//! half-sum cancels the cc part exactly (mirror antisymmetry) and yields the
//! Wigner phase averaged over the two legs; the half-difference cancels the
//! Wigner mean but keeps a Wigner slope term, which is removed with a
//! finite-difference delay estimated from the ladder itself:
//!
//! ```text
//! wigner(E_k) ~= (phi_co + phi_counter)/2 + l*pi/2
//! cc(E_k)     ~= (phi_co - phi_counter)/2 + sign * omega * tau_k / hbar
//! ```
//!
//! where `sign` is +1 for the absorption-fed wave and -1 otherwise, and
//! `tau_k` is the central-difference Wigner delay at E_k.  Both estimates are
//! exact when the Wigner phase is linear in energy; for curved phases the
//! deviations are bounded by the curvature/truncation bounds recorded by the
//! campaign generator.
//!
//! Branch policy: the d2 channel is pinned to the calibration references and
//! anchors every per-order branch choice; d0/s half-sums are snapped to the
//! nearest pi-branch of the anchor, and cc phases to the pi-branch nearest
//! zero.  Snaps are recorded, and estimates that remain inconsistent after
//! snapping are flagged rather than silently accepted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{FitResult, GaugeRecord};
use crate::model::{Geometry, WaveLabel};
use crate::real::{real, Real};
use crate::units::HBAR_EV_AS;

/// Half-sum route: Wigner phase averaged over the two transition legs.
pub fn wigner_from_sum<R: Real>(phi_co: R, phi_counter: R, l: u32) -> R {
    (phi_co + phi_counter) * real::<R>(0.5)
        + real::<R>(l as f64) * R::PI() * real::<R>(0.5)
}

/// Half-difference route: signed continuum-continuum phase, with the Wigner
/// slope term removed using a delay estimate at the sideband energy.
///
/// `absorption_in_co` selects the sign convention: true for the wave fed by
/// IR absorption in the co-rotating geometry (d2), false for the
/// emission-fed waves (d0, s).  The returned value for emission-fed waves is
/// the emission-side phase (negative of the absorption magnitude when the
/// model is mirror-antisymmetric).
pub fn cc_from_difference<R: Real>(
    phi_co: R,
    phi_counter: R,
    absorption_in_co: bool,
    omega_ev: R,
    wigner_delay_as: R,
) -> Result<R> {
    if !wigner_delay_as.is_finite() {
        return Err(Error::MissingDependency(
            "cc separation needs a finite Wigner delay estimate".into(),
        ));
    }
    let slope_term = omega_ev * wigner_delay_as / real::<R>(HBAR_EV_AS);
    let half_diff = (phi_co - phi_counter) * real::<R>(0.5);
    Ok(if absorption_in_co { half_diff + slope_term } else { half_diff - slope_term })
}

/// One finite-difference step between adjacent ladder entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdStep<R: Real> {
    pub e_mid_ev: R,
    pub delay_as: R,
    /// Phase increment used (after unwrapping to the branch nearest zero).
    pub dphi_rad: R,
    /// Set when the increment exceeded pi/2: the unwrap is then unreliable
    /// and the ladder is too coarse for this gradient.
    pub coarse: bool,
}

/// Forward differences of a phase ladder, reported at interval midpoints.
/// Increments are unwrapped to the 2-pi branch nearest zero, which is exact
/// whenever the true step is below pi in magnitude.
pub fn finite_diff_delay<R: Real>(energies_ev: &[R], phases_rad: &[R]) -> Result<Vec<FdStep<R>>> {
    if energies_ev.len() != phases_rad.len() {
        return Err(Error::AxisMismatch(format!(
            "{} energies vs {} phases",
            energies_ev.len(),
            phases_rad.len()
        )));
    }
    if energies_ev.len() < 2 {
        return Err(Error::InsufficientSampling(
            "delay estimation needs at least two ladder points".into(),
        ));
    }
    let mut out = Vec::with_capacity(energies_ev.len() - 1);
    for i in 0..energies_ev.len() - 1 {
        let de = energies_ev[i + 1] - energies_ev[i];
        if !(de > R::zero()) {
            return Err(Error::domain("ladder energies must be strictly ascending"));
        }
        let raw = phases_rad[i + 1] - phases_rad[i];
        let two_pi = real::<R>(2.0) * R::PI();
        let dphi = raw - two_pi * (raw / two_pi).round();
        out.push(FdStep {
            e_mid_ev: (energies_ev[i] + energies_ev[i + 1]) * real::<R>(0.5),
            delay_as: real::<R>(HBAR_EV_AS) * dphi / de,
            dphi_rad: dphi,
            coarse: dphi.abs() > R::PI() * real::<R>(0.5),
        });
    }
    Ok(out)
}

/// Options controlling branch checks and flags.
#[derive(Debug, Clone, Copy)]
pub struct SeparationOptions<R: Real> {
    /// Sidebands whose absorption leg is below this energy are flagged.
    pub near_threshold_floor_ev: R,
    /// Post-snap disagreement with the anchor above this is flagged.
    pub consistency_tolerance_rad: R,
    /// cc estimates within this margin of the +-pi/2 branch boundary are
    /// flagged as ambiguous.
    pub cc_ambiguity_margin_rad: R,
}

impl<R: Real> Default for SeparationOptions<R> {
    fn default() -> Self {
        SeparationOptions {
            near_threshold_floor_ev: real(0.5),
            consistency_tolerance_rad: real(std::f64::consts::FRAC_PI_4),
            cc_ambiguity_margin_rad: real(0.2),
        }
    }
}

/// Per-wave separation output at one sideband.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveSeparation<R: Real> {
    pub wigner_phase_rad: R,
    pub sigma_wigner_rad: R,
    /// Whole pi-branch correction applied to land on the anchor's branch.
    pub snapped_by_pi: i32,
    /// False when the post-snap residual against the anchor exceeds the
    /// consistency tolerance.
    pub consistent: bool,
    /// Signed cc phase; `None` when no delay estimate exists (single-order
    /// ladders).
    pub cc_phase_rad: Option<R>,
    pub sigma_cc_rad: Option<R>,
    /// Set when the cc estimate needed a branch move of pi or more.
    pub cc_branch_moved: bool,
    /// Set when the cc estimate sits close to the +-pi/2 branch boundary.
    pub cc_ambiguous: bool,
}

/// One sideband row of the final table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRow<R: Real> {
    pub order: u32,
    pub energy_ev: R,
    pub near_threshold: bool,
    /// Anchor (d2 channel) Wigner phase.
    pub wigner_phase_rad: R,
    pub sigma_wigner_rad: R,
    /// Central-difference Wigner delay at this energy (used in cc removal).
    pub wigner_delay_at_order_as: Option<R>,
    pub d2: WaveSeparation<R>,
    pub d0: WaveSeparation<R>,
    pub s: WaveSeparation<R>,
}

impl<R: Real> DelayRow<R> {
    pub fn wave(&self, label: WaveLabel) -> &WaveSeparation<R> {
        match label {
            WaveLabel::D2 => &self.d2,
            WaveLabel::D0 => &self.d0,
            WaveLabel::S => &self.s,
        }
    }
}

/// Finite-difference delays between adjacent sidebands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidpointRow<R: Real> {
    pub e_mid_ev: R,
    pub lower_order: u32,
    pub upper_order: u32,
    /// Wigner delay from the anchor ladder.
    pub wigner_delay_as: R,
    pub sigma_wigner_delay_as: R,
    pub coarse_sampling: bool,
    /// Dispersion of the per-wave cc phases (finite differences of the cc
    /// ladders; absorption sign for d2, emission sign for d0/s).
    pub cc_delay_d2_as: Option<R>,
    pub cc_delay_d0_as: Option<R>,
    pub cc_delay_s_as: Option<R>,
}

/// Full separation product for a sideband ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTable<R: Real> {
    pub omega_ev: R,
    pub calibration_source: String,
    pub rows: Vec<DelayRow<R>>,
    pub midpoints: Vec<MidpointRow<R>>,
}

impl<R: Real> DelayTable<R> {
    pub fn row(&self, order: u32) -> Option<&DelayRow<R>> {
        self.rows.iter().find(|r| r.order == order)
    }
}

struct ChannelPhases<R: Real> {
    phi_co: R,
    phi_counter: R,
    var_co: R,
    var_counter: R,
    cov: R,
    identifiable: bool,
}

fn channel<R: Real>(fit: &FitResult<R>, label: WaveLabel) -> ChannelPhases<R> {
    let co = fit.wave(Geometry::CoRotating, label);
    let ct = fit.wave(Geometry::CounterRotating, label);
    ChannelPhases {
        phi_co: co.phase,
        phi_counter: ct.phase,
        var_co: co.sigma_phase * co.sigma_phase,
        var_counter: ct.sigma_phase * ct.sigma_phase,
        cov: fit.phase_covariance(Geometry::CoRotating, label, Geometry::CounterRotating, label),
        identifiable: co.identifiable && ct.identifiable,
    }
}

/// Build the Wigner/cc table from calibrated per-sideband fits.
///
/// Requirements: at least one fit, strictly ascending sideband orders, a
/// common photon energy, and every fit gauge-calibrated (the separation
/// algebra needs absolute phases).
pub fn build_delay_table<R: Real>(
    fits: &[FitResult<R>],
    options: &SeparationOptions<R>,
) -> Result<DelayTable<R>> {
    if fits.is_empty() {
        return Err(Error::domain("separation needs at least one fitted sideband"));
    }
    let omega = fits[0].omega_ev;
    let mut source = String::new();
    let mut prev_order: Option<u32> = None;
    for f in fits {
        match &f.gauge {
            GaugeRecord::Raw { .. } => {
                return Err(Error::Gauge(format!(
                    "sideband {} is not calibrated; separation needs absolute phases",
                    f.sideband_order
                )))
            }
            GaugeRecord::Calibrated { source: s, .. } => {
                if source.is_empty() {
                    source = s.clone();
                }
            }
        }
        if let Some(p) = prev_order {
            if f.sideband_order <= p {
                return Err(Error::domain("fits must be ordered by ascending sideband order"));
            }
        }
        prev_order = Some(f.sideband_order);
        let rel = (f.omega_ev - omega).abs() <= real::<R>(1e-12) * omega.abs();
        if !rel {
            return Err(Error::AxisMismatch("fits disagree on the photon energy".into()));
        }
    }

    let n = fits.len();
    let energies: Vec<R> = fits.iter().map(|f| f.sideband_energy_ev).collect();

    // anchor ladder: d2 half-sums (exact branch via calibration)
    let anchor: Vec<(R, R)> = fits
        .iter()
        .map(|f| {
            let c = channel(f, WaveLabel::D2);
            let w = wigner_from_sum(c.phi_co, c.phi_counter, WaveLabel::D2.l());
            let var = (c.var_co + c.var_counter + real::<R>(2.0) * c.cov) * real::<R>(0.25);
            (w, var.max(R::zero()).sqrt())
        })
        .collect();

    // central-difference delay at each order from the anchor ladder
    let tau_at_order: Vec<Option<R>> = (0..n)
        .map(|k| {
            if n < 2 {
                return None;
            }
            let (i, j) = if k == 0 {
                (0, 1)
            } else if k == n - 1 {
                (n - 2, n - 1)
            } else {
                (k - 1, k + 1)
            };
            let de = energies[j] - energies[i];
            Some(real::<R>(HBAR_EV_AS) * (anchor[j].0 - anchor[i].0) / de)
        })
        .collect();

    let pi = R::PI();
    let half = real::<R>(0.5);

    let mut rows = Vec::with_capacity(n);
    for (k, fit) in fits.iter().enumerate() {
        let near_threshold = energies[k] - omega < options.near_threshold_floor_ev;
        let (anchor_w, anchor_sigma) = anchor[k];

        let mut waves = [None, None, None];
        for (wi, label) in WaveLabel::ALL.into_iter().enumerate() {
            let c = channel(fit, label);
            let raw_w = wigner_from_sum(c.phi_co, c.phi_counter, label.l());
            // land on the anchor's pi-branch (per-phase 2-pi freedom makes
            // the half-sum ambiguous by whole multiples of pi)
            let snap = if label == WaveLabel::D2 || !c.identifiable {
                R::zero()
            } else {
                ((anchor_w - raw_w) / pi).round()
            };
            let w = raw_w + snap * pi;
            let sigma_w =
                ((c.var_co + c.var_counter + real::<R>(2.0) * c.cov) * real::<R>(0.25))
                    .max(R::zero())
                    .sqrt();
            let consistent = c.identifiable
                && (w - anchor_w).abs() <= options.consistency_tolerance_rad;

            let (cc, sigma_cc, cc_moved, cc_ambiguous) = match tau_at_order[k] {
                Some(tau) if c.identifiable => {
                    let raw_cc = cc_from_difference(
                        c.phi_co,
                        c.phi_counter,
                        fit_is_absorption_in_co(label),
                        omega,
                        tau,
                    )?;
                    // the half-difference is defined modulo pi; choose the
                    // branch nearest zero
                    let moves = (raw_cc / pi).round();
                    let cc = raw_cc - moves * pi;
                    let sigma = ((c.var_co + c.var_counter
                        - real::<R>(2.0) * c.cov)
                        * real::<R>(0.25))
                    .max(R::zero())
                    .sqrt();
                    let ambiguous =
                        pi * half - cc.abs() < options.cc_ambiguity_margin_rad;
                    (Some(cc), Some(sigma), moves != R::zero(), ambiguous)
                }
                _ => (None, None, false, false),
            };

            waves[wi] = Some(WaveSeparation {
                wigner_phase_rad: w,
                sigma_wigner_rad: if c.identifiable { sigma_w } else { R::infinity() },
                snapped_by_pi: snap.to_f64().unwrap_or(0.0) as i32,
                consistent,
                cc_phase_rad: cc,
                sigma_cc_rad: sigma_cc,
                cc_branch_moved: cc_moved,
                cc_ambiguous,
            });
        }

        rows.push(DelayRow {
            order: fit.sideband_order,
            energy_ev: energies[k],
            near_threshold,
            wigner_phase_rad: anchor_w,
            sigma_wigner_rad: anchor_sigma,
            wigner_delay_at_order_as: tau_at_order[k],
            d2: waves[0].unwrap(),
            d0: waves[1].unwrap(),
            s: waves[2].unwrap(),
        });
    }

    // midpoint ladder: anchor Wigner delays plus per-wave cc dispersion
    let mut midpoints = Vec::new();
    if n >= 2 {
        let anchor_phases: Vec<R> = anchor.iter().map(|a| a.0).collect();
        let steps = finite_diff_delay(&energies, &anchor_phases)?;
        for (i, step) in steps.into_iter().enumerate() {
            let de = energies[i + 1] - energies[i];
            let var = anchor[i].1 * anchor[i].1 + anchor[i + 1].1 * anchor[i + 1].1;
            let sigma_delay = real::<R>(HBAR_EV_AS) * var.max(R::zero()).sqrt() / de;
            let cc_delay = |get: fn(&DelayRow<R>) -> &WaveSeparation<R>| -> Option<R> {
                let a = get(&rows[i]).cc_phase_rad?;
                let b = get(&rows[i + 1]).cc_phase_rad?;
                Some(real::<R>(HBAR_EV_AS) * (b - a) / de)
            };
            midpoints.push(MidpointRow {
                e_mid_ev: step.e_mid_ev,
                lower_order: rows[i].order,
                upper_order: rows[i + 1].order,
                wigner_delay_as: step.delay_as,
                sigma_wigner_delay_as: sigma_delay,
                coarse_sampling: step.coarse,
                cc_delay_d2_as: cc_delay(|r| &r.d2),
                cc_delay_d0_as: cc_delay(|r| &r.d0),
                cc_delay_s_as: cc_delay(|r| &r.s),
            });
        }
    }

    Ok(DelayTable { omega_ev: omega, calibration_source: source, rows, midpoints })
}

fn fit_is_absorption_in_co(label: WaveLabel) -> bool {
    Geometry::CoRotating.is_absorption(label)
}

// ---------------------------------------------------------------------------
// text formats (f64)
// ---------------------------------------------------------------------------

impl DelayTable<f64> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("delay table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("delay table: {e}")))
    }

    /// Per-sideband phases, one row per order.
    pub fn write_phases_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# bicirc separate v1 (phases)")?;
        writeln!(w, "# omega_ev: {}", self.omega_ev)?;
        writeln!(
            w,
            "order,energy_ev,near_threshold,wigner_phase_rad,sigma_wigner_rad,\
             cc_d2_rad,sigma_cc_d2_rad,cc_d0_rad,sigma_cc_d0_rad,cc_s_rad,sigma_cc_s_rad,flags"
        )?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::from("nan"), |x| format!("{x}"));
            let mut flags = Vec::new();
            if r.near_threshold {
                flags.push("near-threshold");
            }
            for (label, wsep) in
                [("d2", &r.d2), ("d0", &r.d0), ("s", &r.s)]
            {
                if !wsep.consistent {
                    flags.push(match label {
                        "d2" => "d2-inconsistent",
                        "d0" => "d0-inconsistent",
                        _ => "s-inconsistent",
                    });
                }
                if wsep.cc_ambiguous {
                    flags.push(match label {
                        "d2" => "d2-cc-ambiguous",
                        "d0" => "d0-cc-ambiguous",
                        _ => "s-cc-ambiguous",
                    });
                }
            }
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.order,
                r.energy_ev,
                u8::from(r.near_threshold),
                r.wigner_phase_rad,
                r.sigma_wigner_rad,
                opt(r.d2.cc_phase_rad),
                opt(r.d2.sigma_cc_rad),
                opt(r.d0.cc_phase_rad),
                opt(r.d0.sigma_cc_rad),
                opt(r.s.cc_phase_rad),
                opt(r.s.sigma_cc_rad),
                flags.join("+")
            )?;
        }
        Ok(())
    }

    /// Finite-difference delays, one row per midpoint.
    pub fn write_delays_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# bicirc separate v1 (delays)")?;
        writeln!(w, "# omega_ev: {}", self.omega_ev)?;
        writeln!(
            w,
            "e_mid_ev,lower_order,upper_order,wigner_delay_as,sigma_wigner_delay_as,\
             cc_delay_d2_as,cc_delay_d0_as,cc_delay_s_as,coarse"
        )?;
        for m in &self.midpoints {
            let opt = |v: Option<f64>| v.map_or(String::from("nan"), |x| format!("{x}"));
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                m.e_mid_ev,
                m.lower_order,
                m.upper_order,
                m.wigner_delay_as,
                m.sigma_wigner_delay_as,
                opt(m.cc_delay_d2_as),
                opt(m.cc_delay_d0_as),
                opt(m.cc_delay_s_as),
                u8::from(m.coarse_sampling)
            )?;
        }
        Ok(())
    }
}
