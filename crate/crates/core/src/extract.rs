//! Per-angle extraction of the 2-omega beat and dichroism spectra.
//!
//! Each theta row of a trace is reduced to the model
//!
//! ```text
//! counts(tau) ~= offset + 2 * amplitude * cos(2*omega*tau/hbar + phase)
//! ```
//!
//! by linear least squares in the basis {1, cos, sin}.  On a uniform delay
//! axis spanning an integer number of beat periods the normal matrix is
//! diagonal and the estimate coincides with the single-bin discrete Fourier
//! transform, so noiseless extraction is exact to rounding; on other axes the
//! same solve degrades gracefully.  The phase convention is shared by both
//! geometries (the physical sense of the beat is folded into the sign of the
//! phase, not into the basis).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Geometry;
use crate::real::{real, wrap_phase, Real};
use crate::trace::TraceGrid;
use crate::units::HBAR_EV_FS;

/// One theta row reduced to its beat parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatRow<R: Real> {
    pub offset: R,
    /// Half-amplitude of the beat (counts swing is 2x this).
    pub amplitude: R,
    /// Beat phase in radians, canonical (-pi, pi].
    pub phase: R,
    /// One-sigma statistical phase uncertainty under Poisson counting;
    /// infinite when the beat amplitude vanishes.
    pub sigma_phase: R,
    /// Set when the beat is within 3 sigma of the noise floor; the phase in
    /// this row should not be trusted.
    pub low_contrast: bool,
}

/// Extraction result for a full trace: one `BeatRow` per theta bin.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularPhaseProfile<R: Real> {
    pub geometry: Geometry,
    pub sideband_order: u32,
    pub sideband_energy_ev: R,
    pub omega_ev: R,
    pub theta_edges: Vec<R>,
    pub rows: Vec<BeatRow<R>>,
}

impl<R: Real> AngularPhaseProfile<R> {
    pub fn n_theta(&self) -> usize {
        self.rows.len()
    }

    pub fn theta_center(&self, i: usize) -> R {
        (self.theta_edges[i] + self.theta_edges[i + 1]) * real::<R>(0.5)
    }

    /// Rows that carry a usable phase.
    pub fn trusted_rows(&self) -> impl Iterator<Item = (usize, &BeatRow<R>)> {
        self.rows.iter().enumerate().filter(|(_, r)| !r.low_contrast)
    }
}

/// Statistical phase uncertainty of a single-bin Fourier phase under Poisson
/// counting: `sqrt(offset / (2 n_tau)) / amplitude`.
///
/// The per-sample shot variance is the mean count level (the offset); each
/// Fourier quadrature averages it down by `2 n_tau`, and the angular error is
/// the transverse quadrature over the beat radius.
pub fn phase_uncertainty<R: Real>(offset: R, amplitude: R, n_tau: usize) -> R {
    if !(amplitude > R::zero()) {
        return R::infinity();
    }
    let var = offset.max(R::zero()) / real::<R>(2.0 * n_tau as f64);
    var.sqrt() / amplitude
}

/// Extract the beat parameters of every theta row of a trace.
///
/// Fails with `InsufficientSampling` when fewer than 6 delay samples are
/// present or the delay axis cannot resolve the beat.  Rows without contrast
/// come back flagged rather than failing the whole trace.
pub fn fourier_rabbit<R: Real>(grid: &TraceGrid<R>) -> Result<AngularPhaseProfile<R>> {
    grid.validate()?;
    let n = grid.n_tau();
    if n < 6 {
        return Err(Error::InsufficientSampling(format!(
            "beat extraction needs at least 6 delay samples, got {n}"
        )));
    }
    // beat phase advance per sample; fails on non-uniform axes
    grid.tau_step()?;

    let two_w = real::<R>(2.0) * grid.omega_ev / real::<R>(HBAR_EV_FS);
    let x: Vec<R> = grid.tau_fs.iter().map(|&t| two_w * t).collect();
    let cos_x: Vec<R> = x.iter().map(|&v| v.cos()).collect();
    let sin_x: Vec<R> = x.iter().map(|&v| v.sin()).collect();

    // normal matrix of the {1, cos, sin} basis is shared by all rows
    let nf = real::<R>(n as f64);
    let sc = sum(&cos_x);
    let ss = sum(&sin_x);
    let scc = dot(&cos_x, &cos_x);
    let sss = dot(&sin_x, &sin_x);
    let scs = dot(&cos_x, &sin_x);
    let ata = [[nf, sc, ss], [sc, scc, scs], [ss, scs, sss]];

    let mut rows = Vec::with_capacity(grid.n_theta());
    for i in 0..grid.n_theta() {
        let c = grid.row(i);
        let rhs = [sum(c), dot(c, &cos_x), dot(c, &sin_x)];
        let [b, p, q] = solve3(ata, rhs).map_err(|_| {
            Error::InsufficientSampling(
                "delay axis cannot separate offset and beat quadratures".into(),
            )
        })?;
        // b + p cos x + q sin x = b + 2A cos(x + phi)
        let mut amplitude = (p * p + q * q).sqrt() * real::<R>(0.5);
        if amplitude <= real::<R>(1e-12) * b.abs().max(R::one()) {
            amplitude = R::zero(); // rounding residue of a flat row
        }
        let phase = if amplitude > R::zero() {
            wrap_phase((-q).atan2(p))
        } else {
            R::zero()
        };
        let sigma_phase = phase_uncertainty(b, amplitude, n);
        let low_contrast =
            !(amplitude > real::<R>(3.0) * (b.max(R::zero()) / (real::<R>(2.0) * nf)).sqrt());
        rows.push(BeatRow { offset: b, amplitude, phase, sigma_phase, low_contrast });
    }

    Ok(AngularPhaseProfile {
        geometry: grid.geometry,
        sideband_order: grid.sideband_order,
        sideband_energy_ev: grid.sideband_energy_ev,
        omega_ev: grid.omega_ev,
        theta_edges: grid.theta_edges.clone(),
        rows,
    })
}

fn sum<R: Real>(v: &[R]) -> R {
    v.iter().fold(R::zero(), |a, &b| a + b)
}

fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    a.iter().zip(b).fold(R::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Solve a symmetric 3x3 system by Gaussian elimination with partial
/// pivoting; errors on (near-)singular systems.
fn solve3<R: Real>(a: [[R; 3]; 3], b: [R; 3]) -> std::result::Result<[R; 3], ()> {
    let mut m = [
        [a[0][0], a[0][1], a[0][2], b[0]],
        [a[1][0], a[1][1], a[1][2], b[1]],
        [a[2][0], a[2][1], a[2][2], b[2]],
    ];
    let scale = m
        .iter()
        .flat_map(|r| r[..3].iter())
        .fold(R::zero(), |acc, &v| acc.max(v.abs()));
    let eps = real::<R>(1e-12) * scale.max(R::one());
    for col in 0..3 {
        let pivot_row = (col..3)
            .max_by(|&i, &j| {
                m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        if m[pivot_row][col].abs() <= eps {
            return Err(());
        }
        m.swap(col, pivot_row);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                let v = m[col][k];
                m[row][k] -= f * v;
            }
        }
    }
    let mut x = [R::zero(); 3];
    for col in (0..3).rev() {
        let mut acc = m[col][3];
        for k in col + 1..3 {
            acc -= m[col][k] * x[k];
        }
        x[col] = acc / m[col][col];
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// dichroism
// ---------------------------------------------------------------------------

/// Normalized circular-dichroism spectrum over a sideband ladder.
///
/// Each geometry's delay-averaged yields are first normalized to that
/// geometry's own total, which removes the arbitrary overall flux of either
/// acquisition; the dichroism of sideband n is then the asymmetry of the two
/// normalized shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdSpectrum<R: Real> {
    pub orders: Vec<u32>,
    pub energies_ev: Vec<R>,
    pub co_share: Vec<R>,
    pub counter_share: Vec<R>,
    pub cd: Vec<R>,
    /// Set where the combined share is too small for the ratio to mean much.
    pub flagged: Vec<bool>,
}

pub fn cd_spectrum<R: Real>(
    co: &[TraceGrid<R>],
    counter: &[TraceGrid<R>],
) -> Result<CdSpectrum<R>> {
    if co.is_empty() || counter.is_empty() {
        return Err(Error::domain("dichroism needs at least one sideband per geometry"));
    }
    if co.len() != counter.len() {
        return Err(Error::AxisMismatch(format!(
            "geometry ladders differ in length: {} vs {}",
            co.len(),
            counter.len()
        )));
    }
    let mut orders = Vec::new();
    let mut energies = Vec::new();
    for (a, b) in co.iter().zip(counter) {
        if a.geometry != Geometry::CoRotating || b.geometry != Geometry::CounterRotating {
            return Err(Error::AxisMismatch(
                "cd_spectrum expects (co ladder, counter ladder)".into(),
            ));
        }
        if a.sideband_order != b.sideband_order {
            return Err(Error::AxisMismatch(format!(
                "order mismatch: {} vs {}",
                a.sideband_order, b.sideband_order
            )));
        }
        if a.omega_ev != b.omega_ev {
            return Err(Error::AxisMismatch("omega differs between geometries".into()));
        }
        orders.push(a.sideband_order);
        energies.push(a.sideband_energy_ev);
    }

    let shares = |grids: &[TraceGrid<R>]| -> Result<Vec<R>> {
        let totals: Vec<R> = grids.iter().map(|g| g.total_counts()).collect();
        let sum_all = sum(&totals);
        if !(sum_all > R::zero()) {
            return Err(Error::domain("geometry ladder has zero total counts"));
        }
        Ok(totals.into_iter().map(|t| t / sum_all).collect())
    };
    let co_share = shares(co)?;
    let counter_share = shares(counter)?;

    // below this combined share a ratio of two tiny numbers is noise
    let floor = real::<R>(1e-6);
    let mut cd = Vec::with_capacity(orders.len());
    let mut flagged = Vec::with_capacity(orders.len());
    for i in 0..orders.len() {
        let denom = co_share[i] + counter_share[i];
        if denom > R::zero() {
            cd.push((co_share[i] - counter_share[i]) / denom);
            flagged.push(denom < floor);
        } else {
            cd.push(R::zero());
            flagged.push(true);
        }
    }

    Ok(CdSpectrum { orders, energies_ev: energies, co_share, counter_share, cd, flagged })
}

// ---------------------------------------------------------------------------
// text formats (f64)
// ---------------------------------------------------------------------------

impl AngularPhaseProfile<f64> {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# bicirc extract v1")?;
        writeln!(w, "# geometry: {}", self.geometry.name())?;
        writeln!(w, "# sideband_order: {}", self.sideband_order)?;
        writeln!(w, "# sideband_energy_ev: {}", self.sideband_energy_ev)?;
        writeln!(w, "# omega_ev: {}", self.omega_ev)?;
        writeln!(
            w,
            "theta_lo_rad,theta_hi_rad,offset,amplitude,phase_rad,sigma_phase_rad,low_contrast"
        )?;
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                self.theta_edges[i],
                self.theta_edges[i + 1],
                r.offset,
                r.amplitude,
                r.phase,
                r.sigma_phase,
                u8::from(r.low_contrast)
            )?;
        }
        Ok(())
    }
}

impl CdSpectrum<f64> {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# bicirc cd v1")?;
        writeln!(w, "order,energy_ev,co_share,counter_share,cd,flagged")?;
        for i in 0..self.orders.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.orders[i],
                self.energies_ev[i],
                self.co_share[i],
                self.counter_share[i],
                self.cd[i],
                u8::from(self.flagged[i])
            )?;
        }
        Ok(())
    }
}
