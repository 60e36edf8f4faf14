//! Delay-angle count grids and their on-disk format.
//!
//! A `TraceGrid` holds expected or Poisson-sampled counts on a theta x tau
//! grid for one sideband in one geometry.  The file format is CSV with `#`
//! comment headers:
//!
//! ```text
//! # bicirc trace v1
//! # geometry: co
//! # sideband_order: 18
//! # sideband_energy_ev: <f64>
//! # omega_ev: <f64>
//! # noise: none | poisson
//! # counts_budget: <f64>
//! # seed: <u64>
//! # theta_edges_rad: <f64> <f64> ... (theta_bins + 1 values)
//! # tau_fs: <f64> <f64> ...          (tau_points values)
//! # rows: theta bins, columns: tau samples
//! <counts row 0, comma separated>
//! ...
//! ```
//!
//! Numbers are written in shortest round-trip form, so write -> read -> write
//! is byte-identical.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::Geometry;
use crate::real::{real, Real};

/// Noise model applied to the expected counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    None,
    Poisson,
}

impl NoiseMode {
    pub fn name(self) -> &'static str {
        match self {
            NoiseMode::None => "none",
            NoiseMode::Poisson => "poisson",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseMode::None),
            "poisson" => Ok(NoiseMode::Poisson),
            _ => Err(Error::Parse(format!("unknown noise mode '{s}'"))),
        }
    }
}

/// Counts on a (theta bin) x (tau sample) grid for one sideband + geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceGrid<R: Real> {
    pub geometry: Geometry,
    pub sideband_order: u32,
    pub sideband_energy_ev: R,
    pub omega_ev: R,
    pub noise: NoiseMode,
    pub counts_budget: f64,
    pub seed: u64,
    /// theta bin edges, ascending, length = n_theta + 1.
    pub theta_edges: Vec<R>,
    /// delay samples (fs), uniformly spaced, length = n_tau.
    pub tau_fs: Vec<R>,
    /// row-major counts, row i = theta bin i, length = n_theta * n_tau.
    pub counts: Vec<R>,
}

impl<R: Real> TraceGrid<R> {
    pub fn n_theta(&self) -> usize {
        self.theta_edges.len() - 1
    }

    pub fn n_tau(&self) -> usize {
        self.tau_fs.len()
    }

    pub fn count(&self, theta_bin: usize, tau_idx: usize) -> R {
        self.counts[theta_bin * self.n_tau() + tau_idx]
    }

    pub fn row(&self, theta_bin: usize) -> &[R] {
        let n = self.n_tau();
        &self.counts[theta_bin * n..(theta_bin + 1) * n]
    }

    pub fn theta_center(&self, theta_bin: usize) -> R {
        (self.theta_edges[theta_bin] + self.theta_edges[theta_bin + 1]) * real::<R>(0.5)
    }

    pub fn theta_centers(&self) -> Vec<R> {
        (0..self.n_theta()).map(|i| self.theta_center(i)).collect()
    }

    pub fn total_counts(&self) -> R {
        self.counts.iter().fold(R::zero(), |a, &b| a + b)
    }

    /// Mean over the delay axis, one value per theta bin.
    pub fn mean_over_tau(&self) -> Vec<R> {
        let n_tau = real::<R>(self.n_tau() as f64);
        (0..self.n_theta())
            .map(|i| self.row(i).iter().fold(R::zero(), |a, &b| a + b) / n_tau)
            .collect()
    }

    /// Delay-averaged total yield (sum over theta of the tau mean).
    pub fn delay_averaged_yield(&self) -> R {
        self.mean_over_tau().iter().fold(R::zero(), |a, &b| a + b)
    }

    /// Uniform tau step (fs).  Errors if the axis is not uniform to 1e-9
    /// relative or has fewer than 2 samples.
    pub fn tau_step(&self) -> Result<R> {
        if self.tau_fs.len() < 2 {
            return Err(Error::InsufficientSampling(
                "tau axis needs at least 2 samples for a step".into(),
            ));
        }
        let step = self.tau_fs[1] - self.tau_fs[0];
        for w in self.tau_fs.windows(2) {
            let d = w[1] - w[0];
            if (d - step).abs() > real::<R>(1e-9) * step.abs() {
                return Err(Error::Domain("tau axis is not uniformly spaced".into()));
            }
        }
        Ok(step)
    }

    /// Structural checks: ascending edges, finite non-negative counts,
    /// matching dimensions.
    pub fn validate(&self) -> Result<()> {
        if self.theta_edges.len() < 2 {
            return Err(Error::domain("need at least one theta bin"));
        }
        for w in self.theta_edges.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::domain("theta edges must be strictly ascending"));
            }
        }
        if self.theta_edges[0] < -real::<R>(1e-12)
            || self.theta_edges[self.theta_edges.len() - 1] > R::PI() + real::<R>(1e-9)
        {
            return Err(Error::domain("theta edges must lie within [0, pi]"));
        }
        if self.tau_fs.is_empty() {
            return Err(Error::domain("tau axis is empty"));
        }
        if self.counts.len() != self.n_theta() * self.n_tau() {
            return Err(Error::domain(format!(
                "counts length {} != {} theta bins x {} tau samples",
                self.counts.len(),
                self.n_theta(),
                self.n_tau()
            )));
        }
        for &c in &self.counts {
            if !c.is_finite() || c < R::zero() {
                return Err(Error::domain("counts must be finite and >= 0"));
            }
        }
        if !(self.omega_ev > R::zero()) {
            return Err(Error::domain("omega must be > 0"));
        }
        Ok(())
    }

    /// Two grids that form a co/counter pair must share axes exactly.
    pub fn same_axes(&self, other: &TraceGrid<R>) -> bool {
        self.theta_edges == other.theta_edges && self.tau_fs == other.tau_fs
    }
}

impl TraceGrid<f64> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# bicirc trace v1")?;
        writeln!(w, "# geometry: {}", self.geometry.name())?;
        writeln!(w, "# sideband_order: {}", self.sideband_order)?;
        writeln!(w, "# sideband_energy_ev: {}", self.sideband_energy_ev)?;
        writeln!(w, "# omega_ev: {}", self.omega_ev)?;
        writeln!(w, "# noise: {}", self.noise.name())?;
        writeln!(w, "# counts_budget: {}", self.counts_budget)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# theta_edges_rad: {}", join_space(&self.theta_edges))?;
        writeln!(w, "# tau_fs: {}", join_space(&self.tau_fs))?;
        writeln!(w, "# rows: theta bins, columns: tau samples")?;
        for i in 0..self.n_theta() {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<Rd: BufRead>(r: Rd) -> Result<TraceGrid<f64>> {
        let mut geometry = None;
        let mut order = None;
        let mut energy = None;
        let mut omega = None;
        let mut noise = NoiseMode::None;
        let mut budget = 0.0f64;
        let mut seed = 0u64;
        let mut theta_edges: Vec<f64> = Vec::new();
        let mut tau: Vec<f64> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        let mut n_rows = 0usize;

        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some((key, val)) = rest.split_once(':') {
                    let val = val.trim();
                    match key.trim() {
                        "geometry" => geometry = Some(Geometry::from_name(val)?),
                        "sideband_order" => order = Some(parse::<u32>(val, "sideband_order")?),
                        "sideband_energy_ev" => {
                            energy = Some(parse::<f64>(val, "sideband_energy_ev")?)
                        }
                        "omega_ev" => omega = Some(parse::<f64>(val, "omega_ev")?),
                        "noise" => noise = NoiseMode::from_name(val)?,
                        "counts_budget" => budget = parse::<f64>(val, "counts_budget")?,
                        "seed" => seed = parse::<u64>(val, "seed")?,
                        "theta_edges_rad" => theta_edges = parse_floats(val)?,
                        "tau_fs" => tau = parse_floats(val)?,
                        _ => {} // ignore unknown headers (version line, comments)
                    }
                }
                continue;
            }
            for tok in line.split(',') {
                counts.push(parse::<f64>(tok.trim(), "count")?);
            }
            n_rows += 1;
        }

        let grid = TraceGrid {
            geometry: geometry.ok_or_else(|| Error::Parse("missing geometry header".into()))?,
            sideband_order: order
                .ok_or_else(|| Error::Parse("missing sideband_order header".into()))?,
            sideband_energy_ev: energy
                .ok_or_else(|| Error::Parse("missing sideband_energy_ev header".into()))?,
            omega_ev: omega.ok_or_else(|| Error::Parse("missing omega_ev header".into()))?,
            noise,
            counts_budget: budget,
            seed,
            theta_edges,
            tau_fs: tau,
            counts,
        };
        if n_rows + 1 != grid.theta_edges.len() {
            return Err(Error::Parse(format!(
                "{} count rows but {} theta edges",
                n_rows,
                grid.theta_edges.len()
            )));
        }
        grid.validate()?;
        Ok(grid)
    }
}

fn join_space<R: Real>(vals: &[R]) -> String {
    vals.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ")
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::Parse(format!("cannot parse {what} from '{s}'")))
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split_whitespace().map(|t| parse::<f64>(t, "float list")).collect()
}
