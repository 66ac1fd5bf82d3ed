//! File formats: scenario documents (JSON) and binary configuration
//! checkpoints (versioned header + run-length-encoded priorities).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::MulticlassConfig;
use crate::error::{Error, Result};
use crate::profiles::{validate_meeting, CylinderFunction, MeetingScenario, StepProfile};

/// On-disk scenario document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub breakpoints: Vec<f64>,
    pub densities: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star_hint: Option<f64>,
}

impl ScenarioFile {
    pub fn to_scenario(&self) -> Result<MeetingScenario> {
        let profile = StepProfile::new(self.breakpoints.clone(), self.densities.clone())?;
        validate_meeting(profile, self.t_star_hint)
    }

    pub fn from_scenario(scenario: &MeetingScenario) -> Self {
        Self {
            breakpoints: scenario.profile().breakpoints().to_vec(),
            densities: scenario.profile().densities().to_vec(),
            t_star_hint: Some(scenario.t_star()),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<MeetingScenario> {
    let text = std::fs::read_to_string(path)?;
    let file: ScenarioFile = serde_json::from_str(&text)
        .map_err(|e| Error::BadInput(format!("{}: {e}", path.display())))?;
    file.to_scenario()
}

/// Cylinder-function specification for configuration files; `pattern` uses
/// one 0/1 entry per site over an odd-width window centered at the origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CylinderSpec {
    Occupancy,
    Indicator { pattern: Vec<u8> },
    Table { window_radius: usize, table: Vec<f64> },
}

impl CylinderSpec {
    pub fn build(&self) -> Result<CylinderFunction> {
        match self {
            Self::Occupancy => Ok(CylinderFunction::occupancy()),
            Self::Indicator { pattern } => {
                if pattern.iter().any(|&b| b > 1) {
                    return Err(Error::BadInput("pattern entries must be 0 or 1".into()));
                }
                let bools: Vec<bool> = pattern.iter().map(|&b| b == 1).collect();
                CylinderFunction::indicator(&bools)
            }
            Self::Table { window_radius, table } => {
                CylinderFunction::new(*window_radius, table.clone())
            }
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"MSHK";
const CHECKPOINT_VERSION: u8 = 1;

fn write_rle(values: &[u8], out: &mut impl Write) -> Result<()> {
    let mut run_value = values[0];
    let mut run_len = 0u32;
    for &p in values {
        if p == run_value {
            run_len += 1;
        } else {
            out.write_all(&[run_value])?;
            out.write_all(&run_len.to_le_bytes())?;
            run_value = p;
            run_len = 1;
        }
    }
    out.write_all(&[run_value])?;
    out.write_all(&run_len.to_le_bytes())?;
    Ok(())
}

fn read_rle(input: &mut impl Read, len: usize) -> Result<Vec<u8>> {
    let mut values = Vec::with_capacity(len);
    let mut buf1 = [0u8; 1];
    let mut buf4 = [0u8; 4];
    while values.len() < len {
        input.read_exact(&mut buf1)?;
        input.read_exact(&mut buf4)?;
        let run = u32::from_le_bytes(buf4) as usize;
        if run == 0 || values.len() + run > len {
            return Err(Error::BadCheckpoint("run length escapes the window".into()));
        }
        values.extend(std::iter::repeat_n(buf1[0], run));
    }
    Ok(values)
}

/// Writes a configuration checkpoint:
/// magic `MSHK`, version byte, window bounds (two little-endian i64),
/// simulation time (f64 bits), tagged count (u16) and positions (i64 each),
/// run-length-encoded priorities as (value u8, run length u32) pairs covering
/// the window exactly, then a presence byte for the companion configuration
/// followed by its run-length encoding when present.
pub fn write_checkpoint(config: &MulticlassConfig, out: &mut impl Write) -> Result<()> {
    let ((lo, hi), priorities, _, tagged, eta, time) = config.raw_parts();
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&[CHECKPOINT_VERSION])?;
    out.write_all(&lo.to_le_bytes())?;
    out.write_all(&hi.to_le_bytes())?;
    out.write_all(&time.to_bits().to_le_bytes())?;
    out.write_all(&(tagged.len() as u16).to_le_bytes())?;
    for &site in tagged {
        out.write_all(&site.to_le_bytes())?;
    }
    write_rle(priorities, out)?;
    match eta {
        Some(values) => {
            out.write_all(&[1])?;
            write_rle(values, out)?;
        }
        None => out.write_all(&[0])?,
    }
    Ok(())
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<MulticlassConfig> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::BadCheckpoint("bad magic".into()));
    }
    let mut version = [0u8; 1];
    input.read_exact(&mut version)?;
    if version[0] != CHECKPOINT_VERSION {
        return Err(Error::BadCheckpoint(format!("unsupported version {}", version[0])));
    }
    let mut buf8 = [0u8; 8];
    input.read_exact(&mut buf8)?;
    let lo = i64::from_le_bytes(buf8);
    input.read_exact(&mut buf8)?;
    let hi = i64::from_le_bytes(buf8);
    if hi <= lo {
        return Err(Error::BadCheckpoint("empty window".into()));
    }
    input.read_exact(&mut buf8)?;
    let time = f64::from_bits(u64::from_le_bytes(buf8));
    let mut buf2 = [0u8; 2];
    input.read_exact(&mut buf2)?;
    let n = u16::from_le_bytes(buf2) as usize;
    let mut tagged = Vec::with_capacity(n);
    for _ in 0..n {
        input.read_exact(&mut buf8)?;
        tagged.push(i64::from_le_bytes(buf8));
    }
    let len = (hi - lo + 1) as usize;
    let priorities = read_rle(input, len)?;
    let mut flag = [0u8; 1];
    input.read_exact(&mut flag)?;
    let eta = match flag[0] {
        0 => None,
        1 => Some(read_rle(input, len)?),
        other => return Err(Error::BadCheckpoint(format!("bad companion flag {other}"))),
    };
    let mut label_at = vec![0u8; len];
    for (idx, &site) in tagged.iter().enumerate() {
        if site < lo || site > hi {
            return Err(Error::BadCheckpoint(format!("tagged site {site} outside window")));
        }
        label_at[(site - lo) as usize] = (idx + 1) as u8;
    }
    MulticlassConfig::from_raw_parts((lo, hi), priorities, label_at, tagged, eta, time)
        .map_err(|e| Error::BadCheckpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::sample_initial;

    #[test]
    fn scenario_file_roundtrip() {
        let file = ScenarioFile {
            breakpoints: vec![-1.0, 1.0],
            densities: vec![0.0, 0.5, 1.0],
            t_star_hint: None,
        };
        let scenario = file.to_scenario().unwrap();
        assert_eq!(scenario.t_star(), 2.0);
        let back = ScenarioFile::from_scenario(&scenario);
        assert_eq!(back.breakpoints, file.breakpoints);
        assert_eq!(back.t_star_hint, Some(2.0));
        let json = serde_json::to_string(&file).unwrap();
        let parsed: ScenarioFile = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.to_scenario().unwrap(), scenario);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let file = ScenarioFile {
            breakpoints: vec![-1.0, 1.0],
            densities: vec![0.1, 0.5, 0.9],
            t_star_hint: None,
        };
        let scenario = file.to_scenario().unwrap();
        let mut config = sample_initial(&scenario, 0.1, (-60, 60), 42).unwrap();
        config.set_time(3.25);
        let mut bytes = Vec::new();
        write_checkpoint(&config, &mut bytes).unwrap();
        let restored = read_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(restored, config);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let mut bad = b"NOPE".to_vec();
        bad.extend_from_slice(&[0u8; 64]);
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
    }
}
