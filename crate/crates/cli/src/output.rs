//! Report writing: CSV files, the gnuplot script, run metadata and the
//! output-directory lock.
//!
//! Everything written here is deterministic for a given resolved
//! configuration (and seed, in Monte Carlo mode): no timestamps, fixed
//! column orders, and shortest-round-trip float formatting.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Holds `<dir>/.muxqkd.lock` for the lifetime of a run so two invocations
/// cannot mutate one run directory concurrently.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let path = dir.join(".muxqkd.lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "output directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("cannot lock {}", dir.display())),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Write a file and report it on stdout.
pub fn write_report(path: &Path, contents: &str) -> Result<()> {
    let mut file =
        fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    file.write_all(contents.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn config_sha256(config: &RunConfig) -> Result<String> {
    let canonical = config.canonical_toml()?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

/// Run metadata: command, RNG provenance, config hash and a parameter echo.
/// Deliberately timestamp-free so reruns are byte-identical.
pub fn metadata_file(command: &str, config: &RunConfig, mc_used: bool) -> Result<String> {
    let mut out = String::new();
    out.push_str("# muxqkd run metadata\n");
    out.push_str(&format!("command = \"{command}\"\n"));
    out.push_str(&format!(
        "tool_version = \"{}\"\n",
        env!("CARGO_PKG_VERSION")
    ));
    out.push_str(&format!("config_sha256 = \"{}\"\n", config_sha256(config)?));
    if mc_used {
        out.push_str(&format!(
            "rng_algorithm = \"{}\"\nseed = {}\nn_pulses = {}\n",
            muxqkd_core::sim::RNG_ALGORITHM,
            config.mode.seed,
            config.mode.n_pulses
        ));
        out.push_str(
            "# per-run seeds derive as seed XOR (user << 56) XOR grid_index; \
             pulses split into 65536-pulse RNG streams\n",
        );
    }
    out.push_str("\n# resolved parameters\n");
    out.push_str("# source: 10 MHz pulsed laser attenuated to mean photon numbers\n");
    out.push_str("#   mu/nu/vacuum with class probabilities p_*\n");
    out.push_str("# channel: fiber-equivalent attenuator, atten_db_per_km\n");
    out.push_str("# receiver: measured chip insertion-loss budget (13 dB total)\n");
    out.push_str("#   and worst-case switch extinction ratio\n");
    out.push_str("# detectors: superconducting SPD efficiency, dark rate and the\n");
    out.push_str("#   per-pulse coincidence window (laser pulse width by default)\n");
    out.push_str("# protocol: error-correction inefficiency f_ec, sifting factor q_sift\n");
    out.push_str(&config.canonical_toml()?);
    Ok(out)
}

/// gnuplot script drawing rate and QBER vs distance from the sweep CSVs.
pub fn sweep_plot_script(users: &[u8]) -> String {
    let mut s = String::new();
    s.push_str("# gnuplot script for the distance sweep (run: gnuplot sweep.gp)\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 960,640\n");
    s.push_str("set xlabel 'fiber length (km)'\n\n");
    s.push_str("set output 'sweep_rate.png'\n");
    s.push_str("set ylabel 'secret key rate (bits/pulse)'\n");
    s.push_str("set logscale y\n");
    let rate_plots: Vec<String> = users
        .iter()
        .map(|u| format!("'user{u}_sweep.csv' every ::1 using 2:7 with lines title 'user {u}'"))
        .collect();
    s.push_str(&format!("plot {}\n\n", rate_plots.join(", \\\n     ")));
    s.push_str("set output 'sweep_qber.png'\n");
    s.push_str("set ylabel 'QBER'\n");
    s.push_str("unset logscale y\n");
    let qber_plots: Vec<String> = users
        .iter()
        .map(|u| format!("'user{u}_sweep.csv' every ::1 using 2:4 with lines title 'user {u}'"))
        .collect();
    s.push_str(&format!("plot {}\n", qber_plots.join(", \\\n     ")));
    s
}
