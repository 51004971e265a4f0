//! Run configuration: a single TOML file with nested sections, every field
//! optional with the hardware defaults filled in. The resolved configuration
//! round-trips through serialization unchanged, and its canonical TOML form
//! is hashed into the run metadata.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use muxqkd_core::chip::{routing_config, ReceiverConfig, DEFAULT_EXTINCTION_DB};
use muxqkd_core::link::{ChannelParams, DetectorParams, LinkParams, SourceParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub rep_rate_hz: f64,
    pub mu_signal: f64,
    pub nu_decoy: f64,
    pub vacuum: f64,
    pub p_signal: f64,
    pub p_decoy: f64,
    pub p_vacuum: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        let s = SourceParams::default();
        Self {
            rep_rate_hz: s.rep_rate_hz,
            mu_signal: s.mu_signal,
            nu_decoy: s.nu_decoy,
            vacuum: s.vacuum,
            p_signal: s.p_signal,
            p_decoy: s.p_decoy,
            p_vacuum: s.p_vacuum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub atten_db_per_km: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            atten_db_per_km: ChannelParams::default().atten_db_per_km,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSection {
    pub loss_2dgc_db: f64,
    pub loss_output_gc_db: f64,
    pub loss_waveguide_db: f64,
    /// Extinction ratio applied to every switch.
    pub extinction_ratio_db: f64,
    /// Optional per-switch extinction override, MZI1..MZI8.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mzi_er_db: Option<[f64; 8]>,
    /// Optional heater calibration (phase = alpha * V^2), recorded with the
    /// run and used by the transmission-curve tooling.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_rad_per_v2: Option<f64>,
}

impl Default for ReceiverSection {
    fn default() -> Self {
        Self {
            loss_2dgc_db: 6.0,
            loss_output_gc_db: 5.0,
            loss_waveguide_db: 2.0,
            extinction_ratio_db: DEFAULT_EXTINCTION_DB,
            mzi_er_db: None,
            alpha_rad_per_v2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency: f64,
    pub dark_rate_cps: f64,
    pub gate_s: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorParams::default();
        Self {
            efficiency: d.efficiency,
            dark_rate_cps: d.dark_rate_cps,
            gate_s: d.gate_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub f_ec: f64,
    pub q_sift: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            f_ec: muxqkd_core::decoy::DEFAULT_F_EC,
            q_sift: muxqkd_core::decoy::DEFAULT_Q_SIFT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserOverride {
    pub e_misalign: f64,
    pub loss_offset_db: f64,
}

impl Default for UserOverride {
    fn default() -> Self {
        Self {
            e_misalign: 0.0,
            loss_offset_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit list of distances; takes precedence over min/max/step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances_km: Option<Vec<f64>>,
    pub min_km: f64,
    pub max_km: f64,
    pub step_km: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            distances_km: None,
            min_km: 0.0,
            max_km: 200.0,
            step_km: 10.0,
        }
    }
}

impl SweepSection {
    pub fn distances(&self) -> Result<Vec<f64>> {
        let list = match &self.distances_km {
            Some(list) => list.clone(),
            None => {
                if self.step_km.is_nan() || self.step_km <= 0.0 {
                    bail!("sweep step_km must be > 0, got {}", self.step_km);
                }
                if self.max_km < self.min_km {
                    bail!(
                        "sweep max_km {} is below min_km {}",
                        self.max_km,
                        self.min_km
                    );
                }
                let mut list = Vec::new();
                let mut km = self.min_km;
                while km <= self.max_km + 1e-9 {
                    list.push(km);
                    km += self.step_km;
                }
                list
            }
        };
        if list.is_empty() {
            bail!("sweep distance list is empty");
        }
        if list.iter().any(|&d| d < 0.0 || !d.is_finite()) {
            bail!("sweep distances must be finite and >= 0");
        }
        Ok(list)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstalkSection {
    pub selected_user: u8,
    pub length_km: f64,
    /// Single-user QBER the baseline is calibrated to before adding
    /// interferers.
    pub baseline_qber: f64,
    /// Extinction ratio used for the leakage estimate; defaults to the
    /// receiver's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub er_db: Option<f64>,
}

impl Default for CrosstalkSection {
    fn default() -> Self {
        Self {
            selected_user: 4,
            length_km: 20.0,
            baseline_qber: 0.0036,
            er_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub length_km: f64,
    /// Target signal-class QBER per user, keys "1".."4".
    pub targets: BTreeMap<String, f64>,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            length_km: 20.0,
            targets: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Analytic,
    Montecarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeSection {
    pub kind: ModeKind,
    pub n_pulses: u64,
    pub seed: u64,
}

impl Default for ModeSection {
    fn default() -> Self {
        Self {
            kind: ModeKind::Analytic,
            n_pulses: 10_000_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// The whole resolved run configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceSection,
    pub channel: ChannelSection,
    pub receiver: ReceiverSection,
    pub detectors: DetectorSection,
    pub protocol: ProtocolSection,
    /// Per-user overrides keyed "1".."4".
    pub users: BTreeMap<String, UserOverride>,
    pub sweep: SweepSection,
    pub crosstalk: CrosstalkSection,
    pub calibrate: CalibrateSection,
    pub mode: ModeSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for key in self.users.keys() {
            let idx: u8 = key
                .parse()
                .with_context(|| format!("user key '{key}' is not an index"))?;
            if !(1..=4).contains(&idx) {
                bail!("user key '{key}' out of range 1..4");
            }
        }
        if !(1..=4).contains(&self.crosstalk.selected_user) {
            bail!(
                "crosstalk selected_user {} out of range 1..4",
                self.crosstalk.selected_user
            );
        }
        if self.mode.n_pulses == 0 {
            bail!("mode.n_pulses must be >= 1");
        }
        // Surface link-parameter problems now rather than mid-run.
        self.link_for(1, 0.0).context("invalid link parameters")?;
        Ok(())
    }

    /// Canonical serialized form; hashed into the run metadata.
    pub fn canonical_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn user_override(&self, user: u8) -> UserOverride {
        self.users
            .get(&user.to_string())
            .cloned()
            .unwrap_or_default()
    }

    pub fn receiver_config(&self, user: u8) -> Result<ReceiverConfig> {
        let mut cfg = routing_config(user, self.receiver.extinction_ratio_db)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        if let Some(per_mzi) = self.receiver.mzi_er_db {
            for (slot, er) in cfg.mzi.iter_mut().zip(per_mzi) {
                slot.extinction_ratio_db = er;
            }
        }
        cfg.loss_2dgc_db = self.receiver.loss_2dgc_db;
        cfg.loss_output_gc_db = self.receiver.loss_output_gc_db;
        cfg.loss_waveguide_db = self.receiver.loss_waveguide_db;
        Ok(cfg)
    }

    /// Link parameters for `user` at `length_km`, with overrides applied.
    pub fn link_for(&self, user: u8, length_km: f64) -> Result<LinkParams> {
        let over = self.user_override(user);
        let params = LinkParams {
            source: SourceParams {
                rep_rate_hz: self.source.rep_rate_hz,
                mu_signal: self.source.mu_signal,
                nu_decoy: self.source.nu_decoy,
                vacuum: self.source.vacuum,
                p_signal: self.source.p_signal,
                p_decoy: self.source.p_decoy,
                p_vacuum: self.source.p_vacuum,
            },
            channel: ChannelParams {
                length_km,
                atten_db_per_km: self.channel.atten_db_per_km,
                extra_loss_db: over.loss_offset_db,
            },
            receiver: self.receiver_config(user)?,
            detectors: DetectorParams {
                efficiency: self.detectors.efficiency,
                dark_rate_cps: self.detectors.dark_rate_cps,
                gate_s: self.detectors.gate_s,
            },
            e_misalign: over.e_misalign,
            selected_user: user,
        };
        params.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(params)
    }
}
