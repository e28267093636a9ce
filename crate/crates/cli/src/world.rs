//! World manifest written next to a dataset: the generator settings of each
//! video, so that tracking can regenerate the per-pixel feature maps that the
//! tube file does not carry.
//!
//! ```text
//! IAIWORLD 1 <videos>
//! WORLD <video-id> <seed> <frames> <height> <width> <instances> <categories> <occlusion> <noise> <channels> <n-ids>
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use iai_core::synthworld::WorldConfig;

use crate::iaitrack::ParseError;

pub const MAGIC: &str = "IAIWORLD";

/// Sidecar path for a dataset file: `<dataset>.world`.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    let mut p = dataset.as_os_str().to_owned();
    p.push(".world");
    PathBuf::from(p)
}

pub fn write(worlds: &[(u64, WorldConfig)]) -> String {
    let mut out = format!("{MAGIC} 1 {}\n", worlds.len());
    for (id, c) in worlds {
        let _ = writeln!(
            out,
            "WORLD {id} {} {} {} {} {} {} {} {} {} {}",
            c.seed,
            c.frames,
            c.height,
            c.width,
            c.max_instances,
            c.categories,
            c.occlusion_rate,
            c.noise_sigma,
            c.channels,
            c.n_ids
        );
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<(u64, WorldConfig)>, ParseError> {
    let bad = |line: usize, reason: &str| ParseError::Malformed {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty manifest"))?;
    let h: Vec<&str> = header.split_ascii_whitespace().collect();
    if h.len() != 3 || h[0] != MAGIC || h[1] != "1" {
        return Err(bad(1, "expected `IAIWORLD 1 <videos>`"));
    }
    let declared: usize = h[2].parse().map_err(|_| bad(1, "invalid video count"))?;
    let mut out = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split_ascii_whitespace().collect();
        if f.len() != 12 || f[0] != "WORLD" {
            return Err(bad(n, "expected a WORLD record with 11 fields"));
        }
        let u = |i: usize| f[i].parse::<u64>().map_err(|_| bad(n, "invalid integer field"));
        let r = |i: usize| f[i].parse::<f64>().map_err(|_| bad(n, "invalid real field"));
        let cfg = WorldConfig {
            seed: u(2)?,
            frames: u(3)? as usize,
            height: u(4)? as usize,
            width: u(5)? as usize,
            max_instances: u(6)? as usize,
            categories: u(7)? as usize,
            occlusion_rate: r(8)?,
            noise_sigma: r(9)?,
            channels: u(10)? as usize,
            n_ids: u(11)? as usize,
        };
        cfg.validate().map_err(|e| bad(n, &e.to_string()))?;
        out.push((u(1)?, cfg));
    }
    if out.len() != declared {
        return Err(bad(1, "video count does not match the WORLD records"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_keeps_reals_exact() {
        let w = vec![(
            2,
            WorldConfig {
                occlusion_rate: 0.1 + 0.2,
                noise_sigma: 1e-7,
                seed: u64::MAX,
                ..WorldConfig::default()
            },
        )];
        assert_eq!(parse(&write(&w)).unwrap(), w);
    }
}
