//! Three-wave sideband interference model.
//!
//! A sideband photoelectron amplitude along the light propagation axis is
//!
//! ```text
//! F(theta, tau) = A_d2 Y22(theta) exp(i(s*w*tau + phi_d2))
//!              + [A_d0 Y20(theta) exp(i phi_d0) + A_s Y00(theta) exp(i phi_s)] exp(-i s*w*tau)
//! ```
//!
//! with `s = +1` for co-rotating fields and `s = -1` for counter-rotating
//! fields, and the intensity is `|F|^2`: a DC part plus a beat at `2 omega`.
//! The azimuth is fixed at 0 where every harmonic is real, so the model is
//! azimuth-free.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{real, two_pi, wrap_phase, Real};
use crate::special::sph_harm_theta;
use crate::units::HBAR_EV_FS;

/// Which of the three partial waves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WaveLabel {
    /// (l, m) = (2, 2)
    D2,
    /// (l, m) = (2, 0)
    D0,
    /// (l, m) = (0, 0)
    S,
}

impl WaveLabel {
    pub const ALL: [WaveLabel; 3] = [WaveLabel::D2, WaveLabel::D0, WaveLabel::S];

    pub fn quantum_numbers(self) -> (u32, i32) {
        match self {
            WaveLabel::D2 => (2, 2),
            WaveLabel::D0 => (2, 0),
            WaveLabel::S => (0, 0),
        }
    }

    pub fn l(self) -> u32 {
        self.quantum_numbers().0
    }

    pub fn name(self) -> &'static str {
        match self {
            WaveLabel::D2 => "d2",
            WaveLabel::D0 => "d0",
            WaveLabel::S => "s",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "d2" => Ok(WaveLabel::D2),
            "d0" => Ok(WaveLabel::D0),
            "s" => Ok(WaveLabel::S),
            _ => Err(Error::domain(format!("unknown wave label '{s}' (expected d2, d0 or s)"))),
        }
    }
}

/// Relative helicity of the XUV and IR fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    CoRotating,
    CounterRotating,
}

impl Geometry {
    pub const BOTH: [Geometry; 2] = [Geometry::CoRotating, Geometry::CounterRotating];

    /// Sign of the delay phase carried by the d2 wave: the d2 wave rides
    /// `exp(+i w tau)` in the co-rotating geometry and `exp(-i w tau)` in the
    /// counter-rotating one; d0 and s always ride the opposite sign.
    pub fn d2_delay_sign(self) -> f64 {
        match self {
            Geometry::CoRotating => 1.0,
            Geometry::CounterRotating => -1.0,
        }
    }

    /// The wave fed by IR absorption in this geometry (the rest come from
    /// emission).
    pub fn absorption_waves(self) -> &'static [WaveLabel] {
        match self {
            Geometry::CoRotating => &[WaveLabel::D2],
            Geometry::CounterRotating => &[WaveLabel::D0, WaveLabel::S],
        }
    }

    pub fn is_absorption(self, wave: WaveLabel) -> bool {
        self.absorption_waves().contains(&wave)
    }

    pub fn name(self) -> &'static str {
        match self {
            Geometry::CoRotating => "co",
            Geometry::CounterRotating => "counter",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "co" => Ok(Geometry::CoRotating),
            "counter" => Ok(Geometry::CounterRotating),
            _ => Err(Error::domain(format!("unknown geometry '{s}' (expected co or counter)"))),
        }
    }

    pub fn other(self) -> Geometry {
        match self {
            Geometry::CoRotating => Geometry::CounterRotating,
            Geometry::CounterRotating => Geometry::CoRotating,
        }
    }
}

/// One partial wave: quantum numbers, non-negative amplitude, phase in
/// (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialWave<R: Real> {
    label: WaveLabel,
    amplitude: R,
    phase: R,
}

impl<R: Real> PartialWave<R> {
    pub fn new(label: WaveLabel, amplitude: R, phase: R) -> Result<Self> {
        if !(amplitude >= R::zero()) || !amplitude.is_finite() {
            return Err(Error::domain(format!(
                "amplitude of {} must be finite and >= 0, got {amplitude}",
                label.name()
            )));
        }
        if !phase.is_finite() {
            return Err(Error::domain(format!("phase of {} must be finite", label.name())));
        }
        Ok(PartialWave { label, amplitude, phase: wrap_phase(phase) })
    }

    pub fn label(&self) -> WaveLabel {
        self.label
    }

    pub fn amplitude(&self) -> R {
        self.amplitude
    }

    /// Phase in the canonical range (-pi, pi].
    pub fn phase(&self) -> R {
        self.phase
    }
}

/// A full sideband: the three partial waves in one geometry at one photon
/// configuration.
#[derive(Debug, Clone)]
pub struct SidebandModel<R: Real> {
    geometry: Geometry,
    waves: [PartialWave<R>; 3], // ordered d2, d0, s
    omega_ev: R,
    sideband_energy_ev: R,
}

impl<R: Real> SidebandModel<R> {
    /// `waves` may come in any order but must contain each of d2, d0, s
    /// exactly once.
    pub fn new(
        geometry: Geometry,
        waves: [PartialWave<R>; 3],
        omega_ev: R,
        sideband_energy_ev: R,
    ) -> Result<Self> {
        if !(omega_ev > R::zero()) {
            return Err(Error::domain(format!("photon energy must be > 0, got {omega_ev} eV")));
        }
        if !(sideband_energy_ev > R::zero()) {
            return Err(Error::domain(format!(
                "sideband kinetic energy must be > 0, got {sideband_energy_ev} eV"
            )));
        }
        let mut slots: [Option<PartialWave<R>>; 3] = [None, None, None];
        for w in waves {
            let idx = match w.label() {
                WaveLabel::D2 => 0,
                WaveLabel::D0 => 1,
                WaveLabel::S => 2,
            };
            if slots[idx].is_some() {
                return Err(Error::domain(format!("duplicate {} wave", w.label().name())));
            }
            slots[idx] = Some(w);
        }
        let waves = [slots[0].unwrap(), slots[1].unwrap(), slots[2].unwrap()];
        Ok(SidebandModel { geometry, waves, omega_ev, sideband_energy_ev })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn omega_ev(&self) -> R {
        self.omega_ev
    }

    pub fn sideband_energy_ev(&self) -> R {
        self.sideband_energy_ev
    }

    pub fn wave(&self, label: WaveLabel) -> &PartialWave<R> {
        match label {
            WaveLabel::D2 => &self.waves[0],
            WaveLabel::D0 => &self.waves[1],
            WaveLabel::S => &self.waves[2],
        }
    }

    /// Model with every phase shifted by the same constant (a gauge change;
    /// intensities are invariant).
    pub fn with_phase_offset(&self, offset: R) -> SidebandModel<R> {
        let mut m = self.clone();
        for w in m.waves.iter_mut() {
            w.phase = wrap_phase(w.phase + offset);
        }
        m
    }

    /// 2 omega angular frequency in rad/fs.
    fn two_omega_per_fs(&self) -> R {
        real::<R>(2.0) * self.omega_ev / real::<R>(HBAR_EV_FS)
    }

    /// Delay-independent and oscillating parts of the intensity at angle
    /// `theta`: `I(theta, tau) = dc(theta) + 2 Re[ c2(theta) e^{i 2 w tau s} ]`
    /// where `s` is the geometry's d2 delay sign.
    ///
    /// `c2` is the complex beat coefficient `u * conj(v)` of the
    /// `e^{+i s w tau}` side (d2) against the `e^{-i s w tau}` side (d0 + s).
    pub fn beat_decomposition(&self, theta: R) -> Result<(R, Complex<R>)> {
        let [d2, d0, s] = &self.waves;
        let y22 = sph_harm_theta(2, 2, theta)?;
        let y20 = sph_harm_theta(2, 0, theta)?;
        let y00 = sph_harm_theta(0, 0, theta)?;
        // from_polar scales linearly, so a signed harmonic value is fine
        let u = Complex::from_polar(d2.amplitude * y22, d2.phase);
        let v = Complex::from_polar(d0.amplitude * y20, d0.phase)
            + Complex::from_polar(s.amplitude * y00, s.phase);
        let dc = u.norm_sqr() + v.norm_sqr();
        Ok((dc, u * v.conj()))
    }

    /// Photoelectron intensity at polar angle `theta` (rad, measured from the
    /// light propagation axis) and delay `tau_fs`.
    pub fn intensity(&self, theta: R, tau_fs: R) -> Result<R> {
        let (dc, c2) = self.beat_decomposition(theta)?;
        let s = real::<R>(self.geometry.d2_delay_sign());
        let arg = s * self.two_omega_per_fs() * tau_fs;
        Ok(dc + real::<R>(2.0) * (c2 * Complex::from_polar(R::one(), arg)).re)
    }

    /// Phase of the `2 omega` beat at angle `theta` under the convention
    /// `I(theta, tau) ~ offset + 2 A cos(2 w tau + phase)`.
    ///
    /// For the co-rotating geometry this equals `phi_d2 - arg(emission sum)`;
    /// for the counter-rotating geometry the sign is reversed.  Errors when
    /// the beat amplitude vanishes (either side empty, or an angular node).
    pub fn rabbit_phase_analytic(&self, theta: R) -> Result<R> {
        let (_, c2) = self.beat_decomposition(theta)?;
        if c2.norm_sqr() == R::zero() {
            return Err(Error::UndefinedPhase(format!(
                "beat amplitude is zero at theta = {theta}"
            )));
        }
        let phase = c2.arg();
        Ok(match self.geometry {
            Geometry::CoRotating => phase,
            Geometry::CounterRotating => wrap_phase(-phase),
        })
    }

    /// Beat amplitude |c2| at `theta` (the cosine in `intensity` has
    /// peak-to-peak `4 |c2|`).
    pub fn beat_amplitude(&self, theta: R) -> Result<R> {
        Ok(self.beat_decomposition(theta)?.1.norm())
    }

    /// Exact integral of `intensity * sin(theta)` over `[theta_lo, theta_hi]`
    /// at delay `tau_fs`.  The integrand is a polynomial of degree <= 4 in
    /// cos(theta), so 3-point Gauss-Legendre in cos(theta) is exact.
    pub fn bin_intensity(&self, theta_lo: R, theta_hi: R, tau_fs: R) -> Result<R> {
        if !(theta_hi > theta_lo) {
            return Err(Error::domain(format!(
                "empty theta bin [{theta_lo}, {theta_hi}]"
            )));
        }
        let c_hi = theta_lo.cos(); // integration in c = cos(theta) reverses
        let c_lo = theta_hi.cos();
        let half = (c_hi - c_lo) * real::<R>(0.5);
        let mid = (c_hi + c_lo) * real::<R>(0.5);
        let mut acc = R::zero();
        for (node, weight) in gauss_legendre_3::<R>() {
            let c = mid + half * node;
            let theta = c.min(R::one()).max(-R::one()).acos();
            acc += weight * self.intensity(theta, tau_fs)?;
        }
        Ok(acc * half)
    }

    /// Exact integral of `intensity * sin(theta)` over the full sphere's
    /// polar range [0, pi] at delay `tau_fs`, assembled from closed-form
    /// angular overlap integrals (an independent algebra path from
    /// `bin_intensity`).
    pub fn integrated_intensity(&self, tau_fs: R) -> R {
        let [d2, d0, s] = &self.waves;
        let (a2, a0, a_s) = (d2.amplitude, d0.amplitude, s.amplitude);
        // int Y_lm(theta,0)^2 sin th dth = 1/(2pi); cross overlaps:
        let norm = (two_pi::<R>()).recip();
        let g_22_20 = real::<R>(crate::special::K22 * crate::special::K20 * (-8.0 / 15.0));
        let g_22_00 = real::<R>(crate::special::K22 * crate::special::Y00 * (4.0 / 3.0));
        // int Y20 Y00 sin = 0
        let dc = (a2 * a2 + a0 * a0 + a_s * a_s) * norm;
        let sg = real::<R>(self.geometry.d2_delay_sign());
        let beat_arg = sg * self.two_omega_per_fs() * tau_fs;
        let cross = real::<R>(2.0) * a2 * a0 * g_22_20 * (beat_arg + d2.phase - d0.phase).cos()
            + real::<R>(2.0) * a2 * a_s * g_22_00 * (beat_arg + d2.phase - s.phase).cos();
        dc + cross
    }
}

/// 3-point Gauss-Legendre nodes and weights on [-1, 1].
pub(crate) fn gauss_legendre_3<R: Real>() -> [(R, R); 3] {
    let n = real::<R>(0.774_596_669_241_483_4); // sqrt(3/5)
    let w_outer = real::<R>(5.0 / 9.0);
    let w_mid = real::<R>(8.0 / 9.0);
    [(-n, w_outer), (R::zero(), w_mid), (n, w_outer)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::photon_energy_ev;

    const OMEGA: f64 = 1.5517421581126441;

    fn simple_model(
        geometry: Geometry,
        amps: [f64; 3],
        phases: [f64; 3],
    ) -> SidebandModel<f64> {
        SidebandModel::new(
            geometry,
            [
                PartialWave::new(WaveLabel::D2, amps[0], phases[0]).unwrap(),
                PartialWave::new(WaveLabel::D0, amps[1], phases[1]).unwrap(),
                PartialWave::new(WaveLabel::S, amps[2], phases[2]).unwrap(),
            ],
            OMEGA,
            3.3439718460275935,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_waves() {
        assert!(PartialWave::new(WaveLabel::D2, -0.1f64, 0.0).is_err());
        assert!(PartialWave::new(WaveLabel::D2, f64::NAN, 0.0).is_err());
        assert!(PartialWave::new(WaveLabel::D2, 1.0, f64::INFINITY).is_err());
        let w = PartialWave::new(WaveLabel::S, 1.0f64, 7.0).unwrap();
        assert!((w.phase() - (7.0 - 2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn duplicate_wave_rejected() {
        let d2 = PartialWave::new(WaveLabel::D2, 1.0f64, 0.0).unwrap();
        let d0 = PartialWave::new(WaveLabel::D0, 1.0f64, 0.0).unwrap();
        assert!(SidebandModel::new(Geometry::CoRotating, [d2, d2, d0], OMEGA, 3.0).is_err());
    }

    #[test]
    fn all_zero_amplitudes_give_zero_intensity() {
        let m = simple_model(Geometry::CoRotating, [0.0, 0.0, 0.0], [0.3, -0.4, 0.9]);
        assert_eq!(m.intensity(0.7, 0.12).unwrap(), 0.0);
    }

    #[test]
    fn intensity_nonnegative_and_periodic() {
        let m = simple_model(Geometry::CounterRotating, [1.0, 0.6, 0.4], [0.3, -1.2, 2.2]);
        let period = std::f64::consts::PI * crate::units::HBAR_EV_FS / OMEGA; // pi/omega
        for i in 0..40 {
            let theta = 0.05 + 0.076 * i as f64;
            for j in 0..10 {
                let tau = -1.0 + 0.23 * j as f64;
                let v = m.intensity(theta, tau).unwrap();
                assert!(v >= 0.0, "negative intensity at ({theta}, {tau})");
                let v2 = m.intensity(theta, tau + period).unwrap();
                assert!((v - v2).abs() <= 1e-9 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn two_wave_reduction_is_pure_cosine() {
        // d2 and d0 only, equal amplitudes and phases
        let m = simple_model(Geometry::CoRotating, [0.8, 0.8, 0.0], [0.4, 0.4, 0.0]);
        // where the harmonic product is positive the beat phase is 0 ...
        let theta_lo = 30.0f64.to_radians();
        let (_, c2) = m.beat_decomposition(theta_lo).unwrap();
        assert!(c2.im.abs() < 1e-15 && c2.re > 0.0);
        assert!((m.rabbit_phase_analytic(theta_lo).unwrap()).abs() < 1e-12);
        // ... and in the polarization plane Y20 < 0 flips it to pi
        let theta_eq = std::f64::consts::FRAC_PI_2;
        let ph = m.rabbit_phase_analytic(theta_eq).unwrap();
        assert!((ph.abs() - std::f64::consts::PI).abs() < 1e-12);
        // pure cosine at each angle: I = dc + 2|c2| cos(2 w tau + ph)
        let w2 = 2.0 * OMEGA / crate::units::HBAR_EV_FS;
        for &theta in &[theta_lo, theta_eq] {
            let (dc_t, c2_t) = m.beat_decomposition(theta).unwrap();
            let ph_t = m.rabbit_phase_analytic(theta).unwrap();
            for j in 0..24 {
                let tau = j as f64 * 0.1;
                let expect = dc_t + 2.0 * c2_t.norm() * (w2 * tau + ph_t).cos();
                let got = m.intensity(theta, tau).unwrap();
                assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn equal_d2_s_beat_phase_is_isotropic() {
        let m = simple_model(Geometry::CoRotating, [0.7, 0.0, 0.7], [1.1, 0.0, 1.1]);
        for i in 1..60 {
            let theta = i as f64 * std::f64::consts::PI / 60.0;
            let ph = m.rabbit_phase_analytic(theta).unwrap();
            assert!(ph.abs() < 1e-12, "theta {theta}: {ph}");
        }
    }

    #[test]
    fn equal_d2_d0_pi_step_between_pole_and_plane() {
        let m = simple_model(Geometry::CounterRotating, [0.9, 0.9, 0.0], [0.7, 0.7, 0.0]);
        let near_pole = m.rabbit_phase_analytic(0.01).unwrap();
        let plane = m.rabbit_phase_analytic(std::f64::consts::FRAC_PI_2).unwrap();
        let step = crate::real::phase_distance(near_pole, plane);
        assert!((step - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn beat_phase_matches_side_arguments() {
        // single cross pair: d2 against d0
        let m = simple_model(Geometry::CoRotating, [1.0, 0.5, 0.0], [0.9, -0.3, 0.0]);
        let theta = 0.5; // Y20 > 0 here
        let ph = m.rabbit_phase_analytic(theta).unwrap();
        assert!((ph - (0.9 - (-0.3))).abs() < 1e-12);
        let mc = simple_model(Geometry::CounterRotating, [1.0, 0.5, 0.0], [0.9, -0.3, 0.0]);
        let phc = mc.rabbit_phase_analytic(theta).unwrap();
        assert!((phc + (0.9 - (-0.3))).abs() < 1e-12);
    }

    #[test]
    fn empty_side_has_undefined_phase() {
        let m = simple_model(Geometry::CoRotating, [1.0, 0.0, 0.0], [0.2, 0.0, 0.0]);
        assert!(matches!(m.rabbit_phase_analytic(0.8), Err(Error::UndefinedPhase(_))));
        // angular node of Y22 at the pole with only d-waves present
        let m2 = simple_model(Geometry::CoRotating, [1.0, 0.5, 0.0], [0.0, 0.0, 0.0]);
        assert!(m2.rabbit_phase_analytic(0.0).is_err());
    }

    #[test]
    fn counter_is_tau_reversed_co() {
        let amps = [1.0, 0.55, 0.40];
        let phases = [0.25, -0.85, 1.4];
        let co = simple_model(Geometry::CoRotating, amps, phases);
        let counter = simple_model(Geometry::CounterRotating, amps, phases);
        for i in 0..25 {
            let theta = 0.1 + i as f64 * 0.12;
            for j in 0..12 {
                let tau = -0.7 + 0.13 * j as f64;
                let a = co.intensity(theta, -tau).unwrap();
                let b = counter.intensity(theta, tau).unwrap();
                assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn gauge_shift_leaves_intensity_invariant() {
        let m = simple_model(Geometry::CoRotating, [1.0, 0.5, 0.3], [0.25, -0.85, 1.4]);
        let shifted = m.with_phase_offset(1.234);
        for i in 0..20 {
            let theta = 0.12 + i as f64 * 0.15;
            for j in 0..8 {
                let tau = 0.21 * j as f64;
                let a = m.intensity(theta, tau).unwrap();
                let b = shifted.intensity(theta, tau).unwrap();
                assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bin_integral_matches_fine_quadrature() {
        let m = simple_model(Geometry::CoRotating, [1.0, 0.6, 0.35], [0.3, -0.9, 2.0]);
        let (lo, hi) = (0.4, 0.6);
        let tau = 0.37;
        // 20k-slice midpoint rule in theta as a brute-force oracle
        let n = 20_000;
        let mut acc = 0.0;
        for i in 0..n {
            let th = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
            acc += m.intensity(th, tau).unwrap() * th.sin();
        }
        acc *= (hi - lo) / n as f64;
        let exact = m.bin_intensity(lo, hi, tau).unwrap();
        assert!((acc - exact).abs() < 1e-9 * exact.abs().max(1.0), "{acc} vs {exact}");
    }

    #[test]
    fn binned_sum_matches_closed_form_integral() {
        let m = simple_model(Geometry::CounterRotating, [1.1, 0.5, 0.42], [0.3, -0.9, 2.0]);
        let nbins = 60;
        for j in 0..5 {
            let tau = 0.09 * j as f64;
            let mut total = 0.0;
            for i in 0..nbins {
                let lo = std::f64::consts::PI * i as f64 / nbins as f64;
                let hi = std::f64::consts::PI * (i + 1) as f64 / nbins as f64;
                total += m.bin_intensity(lo, hi, tau).unwrap();
            }
            let closed = m.integrated_intensity(tau);
            assert!(
                (total - closed).abs() < 1e-9 * closed.abs().max(1.0),
                "tau {tau}: {total} vs {closed}"
            );
        }
    }

    #[test]
    fn photon_energy_layer_feeds_model() {
        let w: f64 = photon_energy_ev(799.0);
        assert!((w - OMEGA).abs() < 1e-12);
    }

    #[test]
    fn f32_instantiation_works() {
        let m = SidebandModel::new(
            Geometry::CoRotating,
            [
                PartialWave::new(WaveLabel::D2, 1.0f32, 0.1).unwrap(),
                PartialWave::new(WaveLabel::D0, 0.5f32, -0.4).unwrap(),
                PartialWave::new(WaveLabel::S, 0.3f32, 0.8).unwrap(),
            ],
            1.5517f32,
            3.34f32,
        )
        .unwrap();
        let v = m.intensity(1.0f32, 0.2f32).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }
}
