//! Pipeline stages.  Each stage reads its inputs from the output directory,
//! writes its artifacts atomically, and records what it wrote in
//! `manifest.json`.  All outputs are deterministic functions of the config
//! file and the command-line overrides, so re-running a stage reproduces its
//! artifacts byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use bicirc_core::extract::{cd_spectrum, fourier_rabbit};
use bicirc_core::fit::{fix_gauge, global_fit, FitOptions, FitResult, GeometryEstimates, Weighting};
use bicirc_core::model::{Geometry, PartialWave, SidebandModel, WaveLabel};
use bicirc_core::optim::LmOptions;
use bicirc_core::separate::{build_delay_table, DelayTable, MidpointRow, SeparationOptions};
use bicirc_core::synth::{generate_campaign, Sidecar};
use bicirc_core::trace::TraceGrid;
use bicirc_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Pipeline;
use crate::svg::{self, Series};

const SERIES_COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Ctx {
    pub pipeline: Pipeline,
    pub out: PathBuf,
    pub plots: bool,
    pub seed_override: Option<u64>,
    pub weighting_override: Option<String>,
    pub starts_override: Option<usize>,
}

impl Ctx {
    fn orders(&self) -> &[u32] {
        &self.pipeline.campaign.campaign.sideband_orders
    }

    fn master_seed(&self) -> u64 {
        self.seed_override.unwrap_or(self.pipeline.campaign.noise.seed)
    }

    fn fit_options(&self) -> Result<FitOptions<f64>> {
        let section = &self.pipeline.fit;
        let weighting_name =
            self.weighting_override.as_deref().unwrap_or(section.weighting.as_str());
        let starts = self.starts_override.unwrap_or(section.starts);
        if starts == 0 {
            return Err(Error::Parse("fit starts must be at least 1".into()));
        }
        Ok(FitOptions {
            weighting: Weighting::from_name(weighting_name)?,
            n_starts: starts,
            seed: section.seed,
            lm: LmOptions { max_iter: section.max_iter, ..LmOptions::default() },
        })
    }

    fn trace_rel(&self, order: u32, geometry: Geometry) -> String {
        format!("traces/sb{order}_{}.csv", geometry.name())
    }
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OutputRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    tool: String,
    version: String,
    config_sha256: String,
    master_seed: u64,
    stages: Vec<StageRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StageRecord {
    stage: String,
    outputs: Vec<OutputRecord>,
}

/// Accumulates artifact records; merged with any manifest already on disk so
/// single-stage runs extend rather than clobber earlier stage records.
pub struct Manifest {
    config_sha256: String,
    master_seed: u64,
    stages: BTreeMap<String, Vec<OutputRecord>>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl Manifest {
    pub fn open(ctx: &Ctx) -> Manifest {
        let config_sha256 = sha256_hex(ctx.pipeline.raw.as_bytes());
        let master_seed = ctx.master_seed();
        let mut stages = BTreeMap::new();
        // Adopt prior records only when they came from the same config and
        // seed; otherwise the old artifacts are stale and drop out.
        if let Ok(raw) = fs::read_to_string(ctx.out.join("manifest.json")) {
            if let Ok(old) = serde_json::from_str::<ManifestFile>(&raw) {
                if old.config_sha256 == config_sha256 && old.master_seed == master_seed {
                    for s in old.stages {
                        stages.insert(s.stage, s.outputs);
                    }
                }
            }
        }
        Manifest { config_sha256, master_seed, stages }
    }

    /// Start (or restart) a stage: its previous output records are dropped.
    fn begin(&mut self, stage: &str) {
        self.stages.insert(stage.to_string(), Vec::new());
    }

    /// Atomically write `bytes` under the output directory and record it.
    fn put(&mut self, out: &Path, stage: &str, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        atomic_write(&path, bytes)?;
        let rec = OutputRecord { path: rel.to_string(), sha256: sha256_hex(bytes) };
        self.stages.entry(stage.to_string()).or_default().push(rec);
        Ok(())
    }

    pub fn write(&mut self, out: &Path) -> Result<()> {
        let mut stages: Vec<StageRecord> = self
            .stages
            .iter()
            .map(|(stage, outputs)| {
                let mut outputs = outputs.clone();
                outputs.sort_by(|a, b| a.path.cmp(&b.path));
                StageRecord { stage: stage.clone(), outputs }
            })
            .collect();
        stages.sort_by(|a, b| a.stage.cmp(&b.stage));
        let file = ManifestFile {
            tool: "bicirc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.config_sha256.clone(),
            master_seed: self.master_seed,
            stages,
        };
        let json = serde_json::to_string_pretty(&file).expect("manifest serializes");
        fs::create_dir_all(out)?;
        atomic_write(&out.join("manifest.json"), json.as_bytes())
    }
}

/// Write via a temp file in the same directory, then rename into place, so a
/// crash never leaves a half-written artifact.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::domain(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!("{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// shared input loading
// ---------------------------------------------------------------------------

fn load_trace(path: &Path) -> Result<TraceGrid<f64>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::MissingDependency(format!("{}: {e}", path.display())))?;
    let grid = TraceGrid::<f64>::read_csv(BufReader::new(file))
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    grid.validate()?;
    Ok(grid)
}

fn load_sidecar(out: &Path) -> Option<Sidecar> {
    let raw = fs::read_to_string(out.join("traces/truth_sidecar.json")).ok()?;
    Sidecar::from_json(&raw).ok()
}

fn load_fit(path: &Path) -> Result<FitResult<f64>> {
    let raw = fs::read_to_string(path)
        .map_err(|e| Error::MissingDependency(format!("{}: {e}", path.display())))?;
    FitResult::from_json(&raw).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn generate(ctx: &Ctx, manifest: &mut Manifest) -> Result<()> {
    let truth = ctx.pipeline.campaign.ground_truth()?;
    let spec = ctx.pipeline.campaign.grid_spec();
    let mut noise = ctx.pipeline.campaign.noise_spec()?;
    if let Some(seed) = ctx.seed_override {
        noise.seed = seed;
    }
    let campaign = generate_campaign(&truth, &spec, &noise)?;

    manifest.begin("generate");
    for grid in &campaign.grids {
        let mut buf = Vec::new();
        grid.write_csv(&mut buf)?;
        let rel = ctx.trace_rel(grid.sideband_order, grid.geometry);
        manifest.put(&ctx.out, "generate", &rel, &buf)?;
    }
    manifest.put(
        &ctx.out,
        "generate",
        "traces/truth_sidecar.json",
        campaign.sidecar.to_json().as_bytes(),
    )?;

    if ctx.plots {
        for grid in &campaign.grids {
            let rows: Vec<Vec<f64>> =
                (0..grid.n_theta()).map(|i| grid.row(i).to_vec()).collect();
            let chart = svg::heatmap(
                &format!("sideband {} {} counts", grid.sideband_order, grid.geometry.name()),
                "pump-probe delay (fs)",
                "emission angle (rad)",
                (grid.tau_fs[0], *grid.tau_fs.last().unwrap()),
                (grid.theta_edges[0], *grid.theta_edges.last().unwrap()),
                &rows,
            );
            let rel =
                format!("plots/trace_sb{}_{}.svg", grid.sideband_order, grid.geometry.name());
            manifest.put(&ctx.out, "generate", &rel, chart.as_bytes())?;
        }
    }

    println!(
        "generate: {} traces ({} sidebands x 2 geometries), budget {:.3e} counts, seed {}",
        campaign.grids.len(),
        ctx.orders().len(),
        noise.counts_budget,
        noise.seed
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

type TracePair = (Option<TraceGrid<f64>>, Option<TraceGrid<f64>>);

pub fn extract(ctx: &Ctx, manifest: &mut Manifest) -> Result<()> {
    manifest.begin("extract");
    let mut failures: Vec<String> = Vec::new();
    let mut n_profiles = 0usize;
    let mut loaded: BTreeMap<u32, TracePair> = BTreeMap::new();

    for &order in ctx.orders() {
        for geometry in Geometry::BOTH {
            let rel = ctx.trace_rel(order, geometry);
            let path = ctx.out.join(&rel);
            let grid = match load_trace(&path) {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("error: {e}");
                    failures.push(rel);
                    continue;
                }
            };
            let profile = match fourier_rabbit(&grid) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: {}: {e}", path.display());
                    failures.push(rel);
                    continue;
                }
            };

            let mut buf = Vec::new();
            profile.write_csv(&mut buf)?;
            let prel = format!("extract/profile_sb{order}_{}.csv", geometry.name());
            manifest.put(&ctx.out, "extract", &prel, &buf)?;
            n_profiles += 1;

            if ctx.plots {
                let centers: Vec<f64> = (0..profile.n_theta())
                    .map(|i| profile.theta_center(i))
                    .collect();
                let phase = Series {
                    name: "beat phase",
                    points: centers
                        .iter()
                        .zip(&profile.rows)
                        .map(|(&t, r)| (t, r.phase))
                        .collect(),
                    sigma: profile.rows.iter().map(|r| r.sigma_phase).collect(),
                    color: SERIES_COLORS[0],
                    markers_only: false,
                };
                let chart = svg::line_chart(
                    &format!("sideband {order} {} beat phase", geometry.name()),
                    "emission angle (rad)",
                    "phase (rad)",
                    &[phase],
                );
                let rel = format!("plots/phase_sb{order}_{}.svg", geometry.name());
                manifest.put(&ctx.out, "extract", &rel, chart.as_bytes())?;
            }

            let slot = loaded.entry(order).or_insert((None, None));
            match geometry {
                Geometry::CoRotating => slot.0 = Some(grid),
                Geometry::CounterRotating => slot.1 = Some(grid),
            }
        }
    }

    // dichroism over the orders where both geometries are available
    let mut co = Vec::new();
    let mut counter = Vec::new();
    for (c, t) in loaded.values() {
        if let (Some(c), Some(t)) = (c, t) {
            co.push(c.clone());
            counter.push(t.clone());
        }
    }
    if !co.is_empty() {
        let cd = cd_spectrum(&co, &counter)?;
        let mut buf = Vec::new();
        cd.write_csv(&mut buf)?;
        manifest.put(&ctx.out, "extract", "extract/cd.csv", &buf)?;
        if ctx.plots {
            let series = Series {
                name: "dichroism",
                points: cd
                    .energies_ev
                    .iter()
                    .zip(&cd.cd)
                    .map(|(&e, &v)| (e, v))
                    .collect(),
                sigma: Vec::new(),
                color: SERIES_COLORS[1],
                markers_only: false,
            };
            let chart = svg::line_chart(
                "delay-averaged circular dichroism",
                "kinetic energy (eV)",
                "(co - counter) / (co + counter)",
                &[series],
            );
            manifest.put(&ctx.out, "extract", "plots/cd.svg", chart.as_bytes())?;
        }
        println!(
            "extract: {n_profiles} angular profiles, dichroism over {} sidebands",
            cd.orders.len()
        );
    } else {
        println!("extract: {n_profiles} angular profiles, no complete sideband pair for dichroism");
    }

    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Parse(format!(
            "{} trace file(s) unusable: {}",
            failures.len(),
            failures.join(", ")
        )))
    }
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn residual_rows(grid: &TraceGrid<f64>, est: &GeometryEstimates<f64>) -> Result<Vec<Vec<f64>>> {
    let model = SidebandModel::new(
        grid.geometry,
        [
            PartialWave::new(WaveLabel::D2, est.d2.amplitude, est.d2.phase)?,
            PartialWave::new(WaveLabel::D0, est.d0.amplitude, est.d0.phase)?,
            PartialWave::new(WaveLabel::S, est.s.amplitude, est.s.phase)?,
        ],
        grid.omega_ev,
        grid.sideband_energy_ev,
    )?;
    let mut rows = Vec::with_capacity(grid.n_theta());
    for i in 0..grid.n_theta() {
        let (lo, hi) = (grid.theta_edges[i], grid.theta_edges[i + 1]);
        let mut row = Vec::with_capacity(grid.n_tau());
        for (j, &tau) in grid.tau_fs.iter().enumerate() {
            row.push(grid.row(i)[j] - model.bin_intensity(lo, hi, tau)?);
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn fit(ctx: &Ctx, manifest: &mut Manifest) -> Result<()> {
    manifest.begin("fit");
    let opts = ctx.fit_options()?;
    let sidecar = load_sidecar(&ctx.out);
    let mut skipped: Vec<String> = Vec::new();
    let mut summary = String::new();
    let mut n_fit = 0usize;

    for &order in ctx.orders() {
        let co_path = ctx.out.join(ctx.trace_rel(order, Geometry::CoRotating));
        let counter_path = ctx.out.join(ctx.trace_rel(order, Geometry::CounterRotating));
        let pair = load_trace(&co_path).and_then(|co| Ok((co, load_trace(&counter_path)?)));
        let (co, counter) = match pair {
            Ok(p) => p,
            Err(e) => {
                eprintln!("error: sideband {order}: {e}");
                skipped.push(format!("sb{order}"));
                continue;
            }
        };

        let mut result = global_fit(&co, &counter, &opts)?;
        if let Some(sc) = &sidecar {
            if let Some(cal) = sc.calibration_row(order) {
                fix_gauge(&mut result, cal.co_phase_rad, cal.counter_phase_rad, "sidecar")?;
            }
        }

        manifest.put(
            &ctx.out,
            "fit",
            &format!("fit/sb{order}.json"),
            result.to_json().as_bytes(),
        )?;
        summary.push_str(&result.summary());
        summary.push('\n');
        n_fit += 1;

        if ctx.plots {
            for (grid, geometry) in [(&co, Geometry::CoRotating), (&counter, Geometry::CounterRotating)] {
                let rows = residual_rows(grid, result.waves(geometry))?;
                let chart = svg::heatmap(
                    &format!("sideband {order} {} fit residuals", geometry.name()),
                    "pump-probe delay (fs)",
                    "emission angle (rad)",
                    (grid.tau_fs[0], *grid.tau_fs.last().unwrap()),
                    (grid.theta_edges[0], *grid.theta_edges.last().unwrap()),
                    &rows,
                );
                let rel = format!("plots/residual_sb{order}_{}.svg", geometry.name());
                manifest.put(&ctx.out, "fit", &rel, chart.as_bytes())?;
            }
        }
    }

    if n_fit > 0 {
        manifest.put(&ctx.out, "fit", "fit/summary.txt", summary.as_bytes())?;
    }
    println!(
        "fit: {} sidebands fit ({} weighting, {} starts){}",
        n_fit,
        opts.weighting.name(),
        opts.n_starts,
        if sidecar.is_some() { ", calibrated against sidecar" } else { ", raw gauge" }
    );

    if skipped.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingDependency(format!(
            "{} sideband pair(s) skipped: {}",
            skipped.len(),
            skipped.join(", ")
        )))
    }
}

// ---------------------------------------------------------------------------
// separate
// ---------------------------------------------------------------------------

fn scoring_text(table: &DelayTable<f64>, sidecar: &Sidecar) -> String {
    let mut out = String::new();
    out.push_str("separation scoring against the generation-time oracle\n");
    out.push_str("status is ok while deviation <= sampling bound + 3 sigma\n\n");
    let verdict = |dev: f64, bound: f64, sigma: f64| {
        // small absolute floor so noiseless runs tolerate solver roundoff
        if dev <= bound + 3.0 * sigma + 5e-6 { "ok" } else { "EXCEEDS" }
    };
    for row in &table.rows {
        let Some(oracle) = sidecar.order(row.order) else {
            out.push_str(&format!("sb{:<3} not covered by the sidecar\n", row.order));
            continue;
        };
        let dw = (row.wigner_phase_rad - oracle.wigner_phase).abs();
        out.push_str(&format!(
            "sb{:<3} wigner phase dev {:.3e} rad (bound {:.3e}, sigma {:.3e})  {}\n",
            row.order,
            dw,
            oracle.wigner_sum_bound_rad,
            row.sigma_wigner_rad,
            verdict(dw, oracle.wigner_sum_bound_rad, row.sigma_wigner_rad)
        ));
        let cc_refs = [
            (WaveLabel::D2, oracle.cc_g_l2),
            (WaveLabel::D0, -oracle.cc_g_l2),
            (WaveLabel::S, -oracle.cc_g_l0),
        ];
        for (label, reference) in cc_refs {
            let wave = row.wave(label);
            let Some(got) = wave.cc_phase_rad else {
                out.push_str(&format!("      cc {:<2} not recovered\n", label.name()));
                continue;
            };
            let sigma = wave.sigma_cc_rad.unwrap_or(0.0);
            let d = (got - reference).abs();
            out.push_str(&format!(
                "      cc {:<2} dev {:.3e} rad (bound {:.3e}, sigma {:.3e})  {}\n",
                label.name(),
                d,
                oracle.cc_recovery_bound_rad,
                sigma,
                verdict(d, oracle.cc_recovery_bound_rad, sigma)
            ));
        }
    }
    out.push('\n');
    for m in &table.midpoints {
        let Some(side) = sidecar
            .midpoints
            .iter()
            .find(|s| s.lower_order == m.lower_order && s.upper_order == m.upper_order)
        else {
            continue;
        };
        let d = (m.wigner_delay_as - side.wigner_delay_analytic_as).abs();
        // same rule in attosecond units, with a coarser roundoff floor
        let ok = d <= side.fd_truncation_bound_as + 3.0 * m.sigma_wigner_delay_as + 1e-2;
        out.push_str(&format!(
            "midpoint {:7.3} eV wigner delay {:8.2} as, analytic {:8.2} as, dev {:.3e} (bound {:.3e})  {}\n",
            m.e_mid_ev,
            m.wigner_delay_as,
            side.wigner_delay_analytic_as,
            d,
            side.fd_truncation_bound_as,
            if ok { "ok" } else { "EXCEEDS" }
        ));
    }
    out
}

pub fn separate(ctx: &Ctx, manifest: &mut Manifest) -> Result<()> {
    manifest.begin("separate");
    let mut fits = Vec::new();
    for &order in ctx.orders() {
        let path = ctx.out.join(format!("fit/sb{order}.json"));
        let result = load_fit(&path)?;
        if !result.is_calibrated() {
            return Err(Error::Gauge(format!(
                "{} holds raw-gauge phases; separation needs calibrated fits \
                 (generate with a truth sidecar present, or calibrate externally)",
                path.display()
            )));
        }
        fits.push(result);
    }

    let options = SeparationOptions {
        near_threshold_floor_ev: ctx.pipeline.campaign.campaign.near_threshold_floor_ev,
        ..SeparationOptions::default()
    };
    let table = build_delay_table(&fits, &options)?;

    manifest.put(&ctx.out, "separate", "separate/table.json", table.to_json().as_bytes())?;
    let mut buf = Vec::new();
    table.write_phases_csv(&mut buf)?;
    manifest.put(&ctx.out, "separate", "separate/phases.csv", &buf)?;
    let mut buf = Vec::new();
    table.write_delays_csv(&mut buf)?;
    manifest.put(&ctx.out, "separate", "separate/delays.csv", &buf)?;

    let sidecar = load_sidecar(&ctx.out);
    if let Some(sc) = &sidecar {
        let text = scoring_text(&table, sc);
        manifest.put(&ctx.out, "separate", "separate/scoring.txt", text.as_bytes())?;
    }

    if ctx.plots {
        // recovered ionization delays across the ladder
        let mut series = vec![Series {
            name: "wigner delay",
            points: table.midpoints.iter().map(|m| (m.e_mid_ev, m.wigner_delay_as)).collect(),
            sigma: table.midpoints.iter().map(|m| m.sigma_wigner_delay_as).collect(),
            color: SERIES_COLORS[0],
            markers_only: false,
        }];
        type CcPick = fn(&MidpointRow<f64>) -> Option<f64>;
        let cc_picks: [(&str, CcPick); 3] = [
            ("cc delay d2", |m| m.cc_delay_d2_as),
            ("cc delay d0", |m| m.cc_delay_d0_as),
            ("cc delay s", |m| m.cc_delay_s_as),
        ];
        for (i, (label, pick)) in cc_picks.into_iter().enumerate() {
            let points: Vec<(f64, f64)> = table
                .midpoints
                .iter()
                .filter_map(|m| pick(m).map(|d| (m.e_mid_ev, d)))
                .collect();
            if !points.is_empty() {
                series.push(Series {
                    name: label,
                    points,
                    sigma: Vec::new(),
                    color: SERIES_COLORS[1 + i],
                    markers_only: false,
                });
            }
        }
        let chart = svg::line_chart(
            "separated photoemission delays",
            "kinetic energy (eV)",
            "delay (as)",
            &series,
        );
        manifest.put(&ctx.out, "separate", "plots/delays.svg", chart.as_bytes())?;

        let anchor = Series {
            name: "anchor phase",
            points: table.rows.iter().map(|r| (r.energy_ev, r.wigner_phase_rad)).collect(),
            sigma: table.rows.iter().map(|r| r.sigma_wigner_rad).collect(),
            color: SERIES_COLORS[0],
            markers_only: false,
        };
        let chart = svg::line_chart(
            "short-range scattering phase ladder",
            "kinetic energy (eV)",
            "phase (rad)",
            &[anchor],
        );
        manifest.put(&ctx.out, "separate", "plots/wigner_phase.svg", chart.as_bytes())?;
    }

    println!(
        "separate: {} sidebands -> {} delay midpoints{}",
        table.rows.len(),
        table.midpoints.len(),
        if sidecar.is_some() { ", scored against sidecar" } else { "" }
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn report(ctx: &Ctx, manifest: &mut Manifest) -> Result<()> {
    manifest.begin("report");
    let cfg = &ctx.pipeline.campaign;
    let omega = cfg.omega_ev()?;
    let mut out = String::new();
    out.push_str("bicircular sideband campaign report\n");
    out.push_str("===================================\n\n");
    out.push_str(&format!(
        "photon energy  {omega:.6} eV\nionization     {:.6} eV\nsidebands      {}\n",
        cfg.campaign.ionization_potential_ev,
        ctx.orders().iter().map(|o| o.to_string()).collect::<Vec<_>>().join(", ")
    ));
    out.push_str(&format!(
        "grid           {} angle bins x {} delay samples\nnoise          {} (budget {:.3e}, seed {})\n\n",
        cfg.grid.theta_bins,
        cfg.grid.tau_points,
        cfg.noise.mode,
        cfg.noise.counts_budget,
        ctx.master_seed()
    ));

    // dichroism
    match fs::read_to_string(ctx.out.join("extract/cd.csv")) {
        Ok(cd) => {
            out.push_str("delay-averaged circular dichroism\n");
            for line in cd.lines().filter(|l| !l.starts_with('#')) {
                out.push_str("  ");
                out.push_str(line);
                out.push('\n');
            }
            out.push('\n');
        }
        Err(_) => out.push_str("dichroism: extract stage has not run\n\n"),
    }

    // fits
    let mut any_fit = false;
    for &order in ctx.orders() {
        let path = ctx.out.join(format!("fit/sb{order}.json"));
        if let Ok(result) = load_fit(&path) {
            if !any_fit {
                out.push_str("per-sideband fits\n");
                any_fit = true;
            }
            let g = &result.goodness;
            out.push_str(&format!(
                "  sb{order}: cost {:.4e} over {} dof (reduced {:.3}), {} of {} starts converged, gauge {}\n",
                g.cost,
                g.dof,
                g.reduced,
                result.diagnostics.n_converged,
                result.diagnostics.n_starts,
                if result.is_calibrated() { "calibrated" } else { "raw" }
            ));
        }
    }
    if !any_fit {
        out.push_str("fits: fit stage has not run\n");
    }
    out.push('\n');

    // delay table
    match fs::read_to_string(ctx.out.join("separate/table.json")) {
        Ok(raw) => match DelayTable::<f64>::from_json(&raw) {
            Ok(table) => {
                out.push_str("separated delays\n");
                for m in &table.midpoints {
                    out.push_str(&format!(
                        "  {:7.3} eV: wigner {:8.2} +/- {:.2} as",
                        m.e_mid_ev, m.wigner_delay_as, m.sigma_wigner_delay_as
                    ));
                    if let Some(d) = m.cc_delay_d2_as {
                        out.push_str(&format!(", cc(d2) {d:8.2} as"));
                    }
                    if m.coarse_sampling {
                        out.push_str("  [coarse]");
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
            Err(e) => out.push_str(&format!("delay table unreadable: {e}\n\n")),
        },
        Err(_) => out.push_str("delays: separate stage has not run\n\n"),
    }

    if let Ok(scoring) = fs::read_to_string(ctx.out.join("separate/scoring.txt")) {
        out.push_str(&scoring);
    }

    manifest.put(&ctx.out, "report", "report.txt", out.as_bytes())?;
    println!("report: {}", ctx.out.join("report.txt").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// composite
// ---------------------------------------------------------------------------

pub fn run_all(ctx: &Ctx, manifest: &mut Manifest) -> Result<()> {
    generate(ctx, manifest)?;
    extract(ctx, manifest)?;
    fit(ctx, manifest)?;
    separate(ctx, manifest)?;
    report(ctx, manifest)
}
