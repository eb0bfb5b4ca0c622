//! Layered settings: command-line flag, then `key=value` config file, then default.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use wasstv::phantom::{gaussian_blob, shepp_logan, DeformationSpec};
use wasstv::Image;

use crate::io::read_image;

/// Parsed `key=value` lines; blank lines and `#` comments are skipped. Keys
/// are the long flag names without dashes (`log-every`, `alpha-tv`, ...).
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value", n + 1))?;
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("line {}: unknown key {key:?}", n + 1);
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    /// `cli` if given, else the file value for `key`, else `None`.
    pub fn layer<T: FromStr>(&self, key: &str, cli: Option<T>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if cli.is_some() {
            return Ok(cli);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key}: {e}")),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "size", "spokes", "alpha", "beta", "tau", "sigma", "nt", "iters", "tol", "method", "image",
    "template", "warp", "remap", "mask", "out", "seed", "threads", "log-every", "alpha-tv", "from",
    "to",
];

/// Comma-separated `key=value` pairs, as in `amp=0.05,freq=2`.
fn pairs(spec: &str) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| anyhow!("expected key=value in {part:?}"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn take<T: FromStr>(map: &mut HashMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    map.remove(key)
        .map(|v| v.parse().map_err(|e| anyhow!("{key}={v}: {e}")))
        .transpose()
}

fn reject_rest(map: HashMap<String, String>, what: &str) -> Result<()> {
    if let Some(k) = map.keys().next() {
        bail!("unknown {what} parameter {k:?}");
    }
    Ok(())
}

/// `amp=..,freq=..` with optional per-axis `amp_x`, `amp_y`, `freq_x`, `freq_y`.
pub fn parse_warp(spec: &str, seed: u64) -> Result<DeformationSpec> {
    let mut m = pairs(spec)?;
    let amp: Option<f64> = take(&mut m, "amp")?;
    let freq: Option<u32> = take(&mut m, "freq")?;
    let amp_x = take(&mut m, "amp_x")?.or(amp).ok_or_else(|| anyhow!("warp needs amp"))?;
    let amp_y = take(&mut m, "amp_y")?.or(amp).ok_or_else(|| anyhow!("warp needs amp"))?;
    let freq_x = take(&mut m, "freq_x")?.or(freq).ok_or_else(|| anyhow!("warp needs freq"))?;
    let freq_y = take(&mut m, "freq_y")?.or(freq).ok_or_else(|| anyhow!("warp needs freq"))?;
    reject_rest(m, "warp")?;
    Ok(DeformationSpec::new(amp_x, amp_y, freq_x, freq_y, seed)?)
}

/// `gamma=..,invert=0|1`.
pub fn parse_remap(spec: &str) -> Result<(f64, bool)> {
    let mut m = pairs(spec)?;
    let gamma = take(&mut m, "gamma")?.unwrap_or(1.0);
    let invert = match m.remove("invert").as_deref() {
        None | Some("0") | Some("false") => false,
        Some("1") | Some("true") => true,
        Some(v) => bail!("invert must be 0 or 1, got {v:?}"),
    };
    reject_rest(m, "remap")?;
    Ok((gamma, invert))
}

/// `shepp-logan`, `gaussian:cx=..,cy=..,sigma=..[,mass=..]`, or an image file.
pub fn load_source(src: &str, size: usize) -> Result<Image> {
    if src == "shepp-logan" {
        return Ok(shepp_logan(size)?);
    }
    if let Some(rest) = src.strip_prefix("gaussian:") {
        let mut m = pairs(rest)?;
        let cx = take(&mut m, "cx")?.ok_or_else(|| anyhow!("gaussian needs cx"))?;
        let cy = take(&mut m, "cy")?.ok_or_else(|| anyhow!("gaussian needs cy"))?;
        let sigma = take(&mut m, "sigma")?.ok_or_else(|| anyhow!("gaussian needs sigma"))?;
        let mass = take(&mut m, "mass")?.unwrap_or(1.0);
        reject_rest(m, "gaussian")?;
        return Ok(gaussian_blob(size, (cx, cy), sigma, mass)?);
    }
    read_image(Path::new(src))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let file = ConfigFile::parse("# paper run\nalpha = 50\nlog_every=5\n").unwrap();
        assert_eq!(file.layer("alpha", Some(7.0)).unwrap(), Some(7.0));
        assert_eq!(file.layer::<f64>("alpha", None).unwrap(), Some(50.0));
        assert_eq!(file.layer::<usize>("log-every", None).unwrap(), Some(5));
        assert_eq!(file.layer::<f64>("beta", None).unwrap().unwrap_or(0.001), 0.001);
    }

    #[test]
    fn config_rejects_unknown_and_malformed_lines() {
        assert!(ConfigFile::parse("alpah=1").is_err());
        assert!(ConfigFile::parse("alpha").is_err());
        let file = ConfigFile::parse("alpha=abc").unwrap();
        assert!(file.layer::<f64>("alpha", None).is_err());
    }

    #[test]
    fn warp_spec_forms() {
        let w = parse_warp("amp=0.05,freq=2", 0).unwrap();
        assert_eq!((w.amp_x, w.amp_y, w.freq_x, w.freq_y), (0.05, 0.05, 2, 2));
        let w = parse_warp("amp=0.05,freq=2,amp_y=0.01,freq_x=3", 9).unwrap();
        assert_eq!((w.amp_x, w.amp_y, w.freq_x, w.freq_y, w.seed), (0.05, 0.01, 3, 2, 9));
        assert!(parse_warp("amp=0.5,freq=2", 0).is_err());
        assert!(parse_warp("freq=2", 0).is_err());
        assert!(parse_warp("amp=0.05,freq=2,bogus=1", 0).is_err());
    }

    #[test]
    fn remap_spec_forms() {
        assert_eq!(parse_remap("gamma=2,invert=1").unwrap(), (2.0, true));
        assert_eq!(parse_remap("gamma=0.5").unwrap(), (0.5, false));
        assert!(parse_remap("invert=yes").is_err());
    }

    #[test]
    fn generator_sources() {
        assert_eq!(load_source("shepp-logan", 32).unwrap().dim(), (32, 32));
        let g = load_source("gaussian:cx=0.5,cy=0.5,sigma=0.08,mass=2", 32).unwrap();
        let grid = wasstv::Grid::new(32, 32, 2).unwrap();
        assert!((wasstv::grid::total_mass(&g, &grid) - 2.0).abs() < 1e-12);
        assert!(load_source("gaussian:cx=0.5", 32).is_err());
        assert!(load_source("/nonexistent/file.pgm", 32).is_err());
    }
}
