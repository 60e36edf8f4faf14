//! Pipeline configuration.  One TOML file drives every stage: the campaign
//! tables are parsed by the core crate, and the optional `[fit]` table here
//! carries solver settings.  Command-line flags override both.

use bicirc_core::synth::CampaignConfig;
use bicirc_core::Error;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Multi-start count for the sideband solver.
    pub starts: usize,
    /// Seed for start-point dispersion, independent of the noise seed.
    pub seed: u64,
    /// "poisson" or "uniform".
    pub weighting: String,
    /// Iteration cap per solver start.
    pub max_iter: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection { starts: 24, seed: 0x5EED, weighting: "poisson".into(), max_iter: 150 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
struct FitWrapper {
    #[serde(default)]
    fit: FitSection,
}

/// Everything the stages need from the config file, parsed once.
pub struct Pipeline {
    pub campaign: CampaignConfig,
    pub fit: FitSection,
    /// Raw file bytes, hashed into the run manifest.
    pub raw: String,
}

impl Pipeline {
    pub fn from_str(raw: &str) -> Result<Self, Error> {
        let campaign = CampaignConfig::from_toml_str(raw)?;
        let wrapper: FitWrapper = toml::from_str(raw)
            .map_err(|e| Error::Parse(format!("bad [fit] section: {e}")))?;
        let fit = wrapper.fit;
        if !matches!(fit.weighting.as_str(), "poisson" | "uniform") {
            return Err(Error::Parse(format!(
                "fit.weighting must be \"poisson\" or \"uniform\", got {:?}",
                fit.weighting
            )));
        }
        if fit.starts == 0 {
            return Err(Error::Parse("fit.starts must be at least 1".into()));
        }
        Ok(Pipeline { campaign, fit, raw: raw.to_string() })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            Error::Parse(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_str(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [campaign]
        sideband_orders = [18, 20]
        ionization_potential_ev = 24.587387
        ir_photon_ev = 1.5517421581126441

        [wigner]
        model = "coulomb"
    "#;

    #[test]
    fn fit_section_defaults_when_absent() {
        let p = Pipeline::from_str(MINIMAL).unwrap();
        assert_eq!(p.fit.starts, 24);
        assert_eq!(p.fit.weighting, "poisson");
        assert_eq!(p.campaign.campaign.sideband_orders, vec![18, 20]);
    }

    #[test]
    fn fit_section_overrides_apply() {
        let s = format!("{MINIMAL}\n[fit]\nstarts = 6\nseed = 7\nweighting = \"uniform\"\n");
        let p = Pipeline::from_str(&s).unwrap();
        assert_eq!(p.fit.starts, 6);
        assert_eq!(p.fit.seed, 7);
        assert_eq!(p.fit.weighting, "uniform");
    }

    #[test]
    fn bad_weighting_is_rejected() {
        let s = format!("{MINIMAL}\n[fit]\nweighting = \"huber\"\n");
        assert!(Pipeline::from_str(&s).is_err());
    }

    #[test]
    fn unknown_fit_key_is_rejected() {
        let s = format!("{MINIMAL}\n[fit]\niterations = 3\n");
        assert!(Pipeline::from_str(&s).is_err());
    }

    #[test]
    fn zero_starts_is_rejected() {
        let s = format!("{MINIMAL}\n[fit]\nstarts = 0\n");
        assert!(Pipeline::from_str(&s).is_err());
    }
}
