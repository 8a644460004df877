//! Repeated and swept runs, parallel across seeds.

use qcity_core::network::{LINK_KEYS, NODE_KEYS};
use qcity_core::protocols::{run_once, ProtocolError, ProtocolStats};
use qcity_core::{NetworkError, RunSpec, Topology};
use rayon::prelude::*;
use std::str::FromStr;

/// Executes every run of `spec` in parallel; run `i` uses seed
/// `spec.seed + i` and results keep run order.
pub fn run_parallel(topology: &Topology, spec: &RunSpec) -> Result<ProtocolStats, ProtocolError> {
    topology.check_run(spec)?;
    let runs = (0..spec.runs)
        .into_par_iter()
        .map(|i| run_once(topology, spec, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProtocolStats {
        protocol: spec.protocol,
        participants: spec.participants.clone(),
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("expected KEY=START:STOP:STEP, got `{0}`")]
    Syntax(String),
    #[error("unknown sweep parameter `{0}`")]
    UnknownKey(String),
    #[error("sweep step must be positive and STOP at least START")]
    EmptyRange,
}

/// `KEY=START:STOP:STEP`, both ends included.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl FromStr for Sweep {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || SweepError::Syntax(s.to_string());
        let (key, range) = s.split_once('=').ok_or_else(syntax)?;
        let parts: Vec<f64> = range
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| syntax()))
            .collect::<Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(syntax());
        };
        let key = key.trim().to_string();
        if !LINK_KEYS.contains(&key.as_str()) && !NODE_KEYS.contains(&key.as_str()) {
            return Err(SweepError::UnknownKey(key));
        }
        if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
            return Err(SweepError::EmptyRange);
        }
        Ok(Sweep { key, start, stop, step })
    }
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }

    /// The topology with the swept value applied. Link parameters change on
    /// the links of the run's participants; node parameters change on every
    /// node.
    pub fn apply(&self, topology: &Topology, spec: &RunSpec, value: f64) -> Result<Topology, NetworkError> {
        let mut t = topology.clone();
        if LINK_KEYS.contains(&self.key.as_str()) {
            let hub = t.qonnector().name.clone();
            for p in spec.participants.iter().filter(|p| **p != hub) {
                t.set_link_param(p, &self.key, value)?;
            }
        } else {
            t.set_everywhere(&self.key, value)?;
        }
        Ok(t)
    }
}
