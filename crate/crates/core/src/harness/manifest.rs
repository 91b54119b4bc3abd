use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::agent::{Aggregation, Algorithm, NetPreset, QHead, QNetwork};
use crate::nn::Layer;

/// What a checkpoint holds, written beside it as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub algorithm: Algorithm,
    pub batch_norm: bool,
    pub aggregation: Aggregation,
    pub network: NetPreset,
    pub observation_shape: Vec<usize>,
    pub n_actions: usize,
    pub seed: u64,
    pub episodes: usize,
    pub train_steps: u64,
}

const FORMAT: &str = "dqnlab-manifest-1";

/// `model.ckpt` → `model.manifest`
pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("manifest")
}

fn enum_name<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => unreachable!("unit enum serializes to a string, got {other:?}"),
    }
}

fn enum_parse<T: serde::de::DeserializeOwned>(key: &str, s: &str) -> Result<T, HarnessError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| HarnessError::Manifest(format!("bad {key} {s:?}")))
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let shape: Vec<String> = self.observation_shape.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "format={FORMAT}");
        let _ = writeln!(out, "algorithm={}", self.algorithm);
        let _ = writeln!(out, "batch_norm={}", self.batch_norm);
        let _ = writeln!(out, "aggregation={}", enum_name(&self.aggregation));
        let _ = writeln!(out, "network={}", enum_name(&self.network));
        let _ = writeln!(out, "observation_shape={}", shape.join("x"));
        let _ = writeln!(out, "n_actions={}", self.n_actions);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "episodes={}", self.episodes);
        let _ = writeln!(out, "train_steps={}", self.train_steps);
        out
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Manifest(format!("line without '=': {line:?}")))?;
            map.insert(k.trim(), v.trim());
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| HarnessError::Manifest(format!("missing key {k}")));
        if get("format")? != FORMAT {
            return Err(HarnessError::Manifest(format!("unsupported format {:?}", get("format")?)));
        }
        let num = |k: &str| -> Result<u64, HarnessError> {
            get(k)?.parse().map_err(|_| HarnessError::Manifest(format!("bad {k} {:?}", map[k])))
        };
        let algorithm = Algorithm::parse(get("algorithm")?)
            .ok_or_else(|| HarnessError::Manifest(format!("unknown algorithm {:?}", map["algorithm"])))?;
        let batch_norm = match get("batch_norm")? {
            "true" => true,
            "false" => false,
            other => return Err(HarnessError::Manifest(format!("bad batch_norm {other:?}"))),
        };
        let observation_shape = get("observation_shape")?
            .split('x')
            .map(|d| d.parse().map_err(|_| HarnessError::Manifest(format!("bad observation_shape {d:?}"))))
            .collect::<Result<Vec<usize>, _>>()?;
        Ok(Self {
            algorithm,
            batch_norm,
            aggregation: enum_parse("aggregation", get("aggregation")?)?,
            network: enum_parse("network", get("network")?)?,
            observation_shape,
            n_actions: num("n_actions")? as usize,
            seed: num("seed")?,
            episodes: num("episodes")? as usize,
            train_steps: num("train_steps")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_text()).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Rejects a network whose structure disagrees with this manifest.
    pub fn check_network(&self, net: &QNetwork) -> Result<(), HarnessError> {
        let dueling = self.algorithm == Algorithm::Dueling;
        if net.is_dueling() != dueling {
            return Err(HarnessError::Manifest(format!(
                "manifest says {} but the checkpoint {} a dueling head",
                self.algorithm,
                if net.is_dueling() { "has" } else { "lacks" }
            )));
        }
        if let QHead::Dueling { aggregation, .. } = &net.head {
            if *aggregation != self.aggregation {
                return Err(HarnessError::Manifest("aggregation differs from checkpoint".into()));
            }
        }
        let has_bn = net.trunk.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)));
        if has_bn != self.batch_norm {
            return Err(HarnessError::Manifest(format!(
                "manifest batch_norm={} but the checkpoint {} batch norm layers",
                self.batch_norm,
                if has_bn { "has" } else { "has no" }
            )));
        }
        let out = net.output_len(&self.observation_shape)?;
        if out != self.n_actions {
            return Err(HarnessError::Manifest(format!("network emits {out} values, manifest says {} actions", self.n_actions)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        Manifest {
            algorithm: Algorithm::DqnPer,
            batch_norm: true,
            aggregation: Aggregation::MeanSubtract,
            network: NetPreset::Desk,
            observation_shape: vec![4, 84, 84],
            n_actions: 2,
            seed: 7,
            episodes: 12,
            train_steps: 345,
        }
    }

    #[test]
    fn text_round_trip() {
        let m = sample();
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
        assert!(m.to_text().contains("algorithm=dqn-per\n"));
    }

    #[test]
    fn rejects_damage() {
        let text = sample().to_text();
        assert!(Manifest::parse(&text.replace("n_actions=2", "n_actions=two")).is_err());
        assert!(Manifest::parse(&text.replace("format=dqnlab-manifest-1\n", "")).is_err());
        assert!(Manifest::parse(&text.replace("dqn-per", "a3c")).is_err());
    }
}
