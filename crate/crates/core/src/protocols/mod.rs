//! Protocol runs over a [`Topology`].
//!
//! Photonic protocols (BB84 in both directions, transmitted BB84, BBM92,
//! MDI-QKD, delegated transmission and GHZ sharing) are event driven: the
//! source schedules its next successful attempt, photons hop between nodes
//! in 1 ns per fiber, and each receiver resolves a detection gate once the
//! photon and any dark count of that gate are in. The verification and
//! anonymous-entanglement protocols evolve every delivered GHZ state on the
//! dense backend.
//!
//! Every run is seeded; the same topology, participants, duration and seed
//! give the same statistics.

mod ghz;
mod photonic;

pub use ghz::{
    anonymous_entanglement_round, draw_inputs, estimate_verification_budget,
    exact_accept_probability, run_anonymous_entanglement, run_ghz_verification,
    verification_accepts, verification_circuit, verification_round, AnonymousRun, Arrival, Budget, Transcript, VerificationBudget, VerificationRun,
};
pub use photonic::{
    run_bb84, run_bb84_transmitted, run_bbm92, run_delegated_transmission, run_ghz_share,
    run_mdi_qkd, GhzShareRun, QkdRun,
};

use crate::engine::{attempt_time, EngineError, SimTime};
use crate::hardware::{ghz_success_probability, Component, HardwareError};
use crate::metrics::{accumulate_curve, expected_rate, expected_throughput, MetricsError, OracleChain};
use crate::network::{NetworkError, ProtocolKind, RunSpec, Topology};
use crate::qstate::StateError;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Hardware(#[from] HardwareError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("usage probability {0} exceeds 1")]
    BadBudget(f64),
    #[error("bad parameter: {0}")]
    BadParameter(&'static str),
    #[error("sender and receiver must differ")]
    SameEndpoints,
    #[error("`{0}` is not a participant")]
    NotParticipant(String),
}

impl From<crate::engine::BadProbability> for ProtocolError {
    fn from(e: crate::engine::BadProbability) -> Self {
        ProtocolError::Hardware(e.into())
    }
}

/// One GHZ round as seen by the parties, in participant order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GhzRoundRecord {
    pub step: u64,
    /// `None` where the party had no usable click.
    pub outcomes: Vec<Option<bool>>,
    /// Verification inputs, when the round was a test round.
    pub inputs: Option<Vec<bool>>,
}

impl GhzRoundRecord {
    pub fn is_delivered(&self) -> bool {
        !self.outcomes.is_empty() && self.outcomes.iter().all(Option::is_some)
    }
}

/// Number of checkpoints in a run's cumulative curve.
pub const CURVE_POINTS: usize = 20;

/// Aggregate of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    /// Counted events: sifted key bits, successful BSM rounds, delivered
    /// qubits or delivered GHZ rounds, depending on the protocol.
    pub sifted_bits: u64,
    /// Successful source emissions (for MDI-QKD: timesteps where both
    /// qlients emitted).
    pub channel_uses: u64,
    /// Counted events violating the expected correlation.
    pub flipped_bits: u64,
    pub simulated_seconds: f64,
    /// Protocol-specific total: accepted rounds for verification, summed
    /// Bell fidelity for anonymous entanglement, zero otherwise.
    pub score: f64,
    /// Cumulative counted events at evenly spaced checkpoints.
    pub curve: Vec<(f64, u64)>,
}

impl RunStats {
    pub fn rate(&self) -> f64 {
        if self.simulated_seconds > 0.0 {
            self.sifted_bits as f64 / self.simulated_seconds
        } else {
            0.0
        }
    }

    pub fn throughput(&self) -> Option<f64> {
        (self.channel_uses > 0).then(|| self.sifted_bits as f64 / self.channel_uses as f64)
    }

    pub fn error_rate(&self) -> Option<f64> {
        (self.sifted_bits > 0).then(|| self.flipped_bits as f64 / self.sifted_bits as f64)
    }
}

/// Builds the cumulative curve from the times of counted events.
pub(crate) fn curve_from_times(
    event_times: impl IntoIterator<Item = SimTime>,
    duration: SimTime,
) -> Vec<(f64, u64)> {
    let mut bins = [0u64; CURVE_POINTS];
    let total = duration.as_nanos().max(1);
    for t in event_times {
        let b = ((t.as_nanos() as u128 * CURVE_POINTS as u128) / total as u128) as usize;
        bins[b.min(CURVE_POINTS - 1)] += 1;
    }
    let secs = duration.as_secs_f64();
    let points: Vec<(f64, u64)> = bins
        .iter()
        .enumerate()
        .map(|(i, n)| (secs * (i + 1) as f64 / CURVE_POINTS as f64, *n))
        .collect();
    accumulate_curve(&points).expect("checkpoints are increasing")
}

pub(crate) fn step_times(steps: impl IntoIterator<Item = u64>, f: f64) -> impl Iterator<Item = SimTime> {
    steps.into_iter().map(move |s| attempt_time(s, f))
}

/// Statistics over repeated runs of one protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolStats {
    pub protocol: ProtocolKind,
    pub participants: Vec<String>,
    pub runs: Vec<RunStats>,
}

impl ProtocolStats {
    pub fn sifted_bits(&self) -> u64 {
        self.runs.iter().map(|r| r.sifted_bits).sum()
    }

    pub fn channel_uses(&self) -> u64 {
        self.runs.iter().map(|r| r.channel_uses).sum()
    }

    pub fn flipped_bits(&self) -> u64 {
        self.runs.iter().map(|r| r.flipped_bits).sum()
    }

    pub fn simulated_seconds(&self) -> f64 {
        self.runs.iter().map(|r| r.simulated_seconds).sum()
    }

    pub fn score(&self) -> f64 {
        self.runs.iter().map(|r| r.score).sum()
    }

    /// Counted events per simulated second, pooled over runs.
    pub fn rate(&self) -> f64 {
        let t = self.simulated_seconds();
        if t > 0.0 {
            self.sifted_bits() as f64 / t
        } else {
            0.0
        }
    }

    pub fn throughput(&self) -> Option<f64> {
        let uses = self.channel_uses();
        (uses > 0).then(|| self.sifted_bits() as f64 / uses as f64)
    }

    pub fn error_rate(&self) -> Option<f64> {
        let n = self.sifted_bits();
        (n > 0).then(|| self.flipped_bits() as f64 / n as f64)
    }

    /// Mean of [`RunStats::score`] per counted event.
    pub fn mean_score(&self) -> Option<f64> {
        let n = self.sifted_bits();
        (n > 0).then(|| self.score() / n as f64)
    }

    /// Three standard errors of the pooled rate. With several runs this is
    /// the spread of per-run rates; a single run falls back to Poisson
    /// counting error.
    pub fn rate_ci_halfwidth(&self) -> f64 {
        let n = self.runs.len();
        if n >= 2 {
            let rates: Vec<f64> = self.runs.iter().map(RunStats::rate).collect();
            let mean = rates.iter().sum::<f64>() / n as f64;
            let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
            3.0 * libm::sqrt(var / n as f64)
        } else {
            let t = self.simulated_seconds();
            if t > 0.0 {
                3.0 * libm::sqrt(self.sifted_bits() as f64) / t
            } else {
                0.0
            }
        }
    }
}

fn participants<'a>(spec: &'a RunSpec) -> Vec<&'a str> {
    spec.participants.iter().map(String::as_str).collect()
}

/// Executes run `index` of `spec` with seed `spec.seed + index`.
pub fn run_once(topology: &Topology, spec: &RunSpec, index: u32) -> Result<RunStats, ProtocolError> {
    topology.check_run(spec)?;
    let seed = spec.seed.wrapping_add(u64::from(index));
    let p = participants(spec);
    let t = spec.duration_s;
    Ok(match spec.protocol {
        ProtocolKind::Bb84 => run_bb84(topology, p[0], p[1], t, seed)?.stats,
        ProtocolKind::Bb84Transmitted => run_bb84_transmitted(topology, p[0], p[1], t, seed)?.stats,
        ProtocolKind::Bbm92 => run_bbm92(topology, p[0], p[1], t, seed)?.stats,
        ProtocolKind::Mdi => run_mdi_qkd(topology, p[0], p[1], t, seed)?.stats,
        ProtocolKind::Delegated => run_delegated_transmission(topology, p[0], p[1], t, seed)?,
        ProtocolKind::GhzShare => run_ghz_share(topology, &p, t, seed)?.stats,
        ProtocolKind::GhzVerify => {
            run_ghz_verification(topology, &p, p[0], Budget::Duration(t), seed)?.stats
        }
        ProtocolKind::AnonEntangle => {
            run_anonymous_entanglement(topology, &p, p[0], p[1], Budget::Duration(t), seed)?.stats
        }
    })
}

/// Executes every run of `spec` sequentially.
pub fn run_all(topology: &Topology, spec: &RunSpec) -> Result<ProtocolStats, ProtocolError> {
    let runs = (0..spec.runs)
        .map(|i| run_once(topology, spec, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProtocolStats {
        protocol: spec.protocol,
        participants: spec.participants.clone(),
        runs,
    })
}

/// Closed-form expectation for a photonic protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    pub chain: OracleChain,
    pub frequency_hz: f64,
    /// Probability that one attempt yields a channel use.
    pub source_success: f64,
}

impl Oracle {
    pub fn throughput(&self) -> Result<f64, MetricsError> {
        expected_throughput(&self.chain)
    }

    pub fn rate(&self) -> Result<f64, MetricsError> {
        expected_rate(&self.chain, self.frequency_hz, self.source_success)
    }
}

/// The oracle of our component model for a photonic run, or `None` for the
/// dense-backend protocols.
pub fn oracle(topology: &Topology, spec: &RunSpec) -> Result<Option<Oracle>, ProtocolError> {
    topology.check_run(spec)?;
    let p = participants(spec);
    let hub = topology.qonnector();
    let link = |name: &str| -> Result<Vec<Component>, ProtocolError> {
        Ok(Component::link(topology.fiber_of(name)?).to_vec())
    };
    let detector = |name: &str| -> Result<Component, ProtocolError> {
        Ok(Component::Detector(topology.node(name)?.hardware.detector.p_det))
    };
    let oracle = match spec.protocol {
        ProtocolKind::Bb84 => {
            let src = topology.node(p[0])?;
            let endpoint = if src.name == hub.name { p[1] } else { p[0] };
            let mut arm = link(endpoint)?;
            arm.push(detector(p[1])?);
            Oracle {
                chain: OracleChain { arms: vec![arm], bsm: None, sifting: 0.5 },
                frequency_hz: src.hardware.source.f_qubit,
                source_success: src.hardware.source.p_qubit,
            }
        }
        ProtocolKind::Bb84Transmitted | ProtocolKind::Delegated => {
            let src = topology.node(p[0])?;
            let mut arm = link(p[0])?;
            arm.push(Component::Switch(hub.hardware.p_transmit));
            arm.extend(link(p[1])?);
            arm.push(detector(p[1])?);
            let sifting = if spec.protocol == ProtocolKind::Delegated { 1.0 } else { 0.5 };
            Oracle {
                chain: OracleChain { arms: vec![arm], bsm: None, sifting },
                frequency_hz: src.hardware.source.f_qubit,
                source_success: src.hardware.source.p_qubit,
            }
        }
        ProtocolKind::Bbm92 | ProtocolKind::GhzShare => {
            let arms = p
                .iter()
                .map(|n| {
                    let mut arm = link(n)?;
                    arm.push(detector(n)?);
                    Ok(arm)
                })
                .collect::<Result<Vec<_>, ProtocolError>>()?;
            let s = hub.hardware.source;
            if spec.protocol == ProtocolKind::Bbm92 {
                Oracle {
                    chain: OracleChain { arms, bsm: None, sifting: 0.5 },
                    frequency_hz: s.f_epr,
                    source_success: s.p_epr,
                }
            } else {
                Oracle {
                    chain: OracleChain { arms, bsm: None, sifting: 1.0 },
                    frequency_hz: s.f_ghz,
                    source_success: ghz_success_probability(p.len(), &s)?,
                }
            }
        }
        ProtocolKind::Mdi => {
            let (a, b) = (topology.node(p[0])?, topology.node(p[1])?);
            Oracle {
                chain: OracleChain {
                    arms: vec![link(p[0])?, link(p[1])?],
                    bsm: Some(hub.hardware.p_bsm),
                    sifting: 1.0,
                },
                frequency_hz: a.hardware.source.f_qubit,
                source_success: a.hardware.source.p_qubit * b.hardware.source.p_qubit,
            }
        }
        ProtocolKind::GhzVerify | ProtocolKind::AnonEntangle => return Ok(None),
    };
    Ok(Some(oracle))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::paris_preset;

    #[test]
    fn curve_is_cumulative_and_spans_the_run() {
        let d = SimTime::from_nanos(1_000);
        let c = curve_from_times([10, 60, 999, 999].map(SimTime::from_nanos), d);
        assert_eq!(c.len(), CURVE_POINTS);
        assert!((c[0].0 - 50e-9).abs() < 1e-18 && c[0].1 == 1);
        assert_eq!(c[1].1, 2);
        assert_eq!(c.last().unwrap().1, 4);
        assert!((c.last().unwrap().0 - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn oracles_for_paris() {
        let t = paris_preset();
        let spec = RunSpec::new(ProtocolKind::Bb84, &["qonnector", "alice"], 1e-3, 1, 0);
        let o = oracle(&t, &spec).unwrap().unwrap();
        assert!((o.rate().unwrap() - 273_600.0).abs() < 30.0);
        let spec = RunSpec::new(ProtocolKind::GhzShare, &["alice", "bob", "charlie", "dina"], 1e-3, 1, 0);
        let o = oracle(&t, &spec).unwrap().unwrap();
        assert!((o.rate().unwrap() - 5025.0).abs() < 5.0, "{}", o.rate().unwrap());
        let spec = RunSpec::new(ProtocolKind::GhzVerify, &["alice", "bob", "charlie"], 1e-3, 1, 0);
        assert!(oracle(&t, &spec).unwrap().is_none());
    }

    #[test]
    fn aggregate_stats() {
        let r = |bits, uses, flips| RunStats {
            sifted_bits: bits,
            channel_uses: uses,
            flipped_bits: flips,
            simulated_seconds: 0.5,
            score: 0.0,
            curve: Vec::new(),
        };
        let s = ProtocolStats {
            protocol: ProtocolKind::Bb84,
            participants: Vec::new(),
            runs: vec![r(10, 40, 1), r(30, 40, 1)],
        };
        assert_eq!(s.rate(), 40.0);
        assert_eq!(s.throughput(), Some(0.5));
        assert_eq!(s.error_rate(), Some(0.05));
        // per-run rates 20 and 60: sd = 28.28, se = 20
        assert!((s.rate_ci_halfwidth() - 60.0).abs() < 1e-9);
    }
}
