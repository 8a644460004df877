//! Estimators and closed-form oracles.

use crate::hardware::{Component, DetectionRecord, HardwareError};
use crate::protocols::GhzRoundRecord;
use crate::qstate::Basis;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("the sifted key is empty")]
    EmptyKey,
    #[error("no GHZ round was delivered to every party")]
    NoDeliveredRounds,
    #[error("malformed oracle chain: {0}")]
    MalformedChain(&'static str),
    #[error(transparent)]
    Component(#[from] HardwareError),
    #[error("curve checkpoints are out of order")]
    OutOfOrder,
}

/// A bit known to one party at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyRecord {
    pub step: u64,
    pub basis: Basis,
    pub bit: bool,
}

impl KeyRecord {
    /// The bit of a signal or dark click; `None` for empty or discarded gates.
    pub fn from_detection(r: &DetectionRecord) -> Option<KeyRecord> {
        r.outcome.map(|bit| KeyRecord {
            step: r.step,
            basis: r.basis,
            bit,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SiftedPair {
    pub step: u64,
    pub basis: Basis,
    pub sender_bit: bool,
    pub receiver_bit: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftedKey {
    pub pairs: Vec<SiftedPair>,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Inner join of two step-sorted record lists on timestep, keeping entries
/// whose bases agree.
pub fn sift(sender: &[KeyRecord], receiver: &[KeyRecord]) -> SiftedKey {
    debug_assert!(sender.windows(2).all(|w| w[0].step <= w[1].step));
    debug_assert!(receiver.windows(2).all(|w| w[0].step <= w[1].step));
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < sender.len() && j < receiver.len() {
        let (s, r) = (sender[i], receiver[j]);
        match s.step.cmp(&r.step) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                if s.basis == r.basis {
                    pairs.push(SiftedPair {
                        step: s.step,
                        basis: s.basis,
                        sender_bit: s.bit,
                        receiver_bit: r.bit,
                    });
                }
                i += 1;
                j += 1;
            }
        }
    }
    SiftedKey { pairs }
}

/// [`sift`] against raw detection records; empty and discarded gates drop out.
pub fn sift_detections(sender: &[KeyRecord], receiver: &[DetectionRecord]) -> SiftedKey {
    let rx: Vec<KeyRecord> = receiver.iter().filter_map(KeyRecord::from_detection).collect();
    sift(sender, &rx)
}

/// Expected relation between the two bits of a sifted pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationRule {
    Equal,
    /// Singlet pairs: anticorrelated in both bases.
    Anticorrelated,
}

impl CorrelationRule {
    pub fn is_error(self, pair: &SiftedPair) -> bool {
        let equal = pair.sender_bit == pair.receiver_bit;
        match self {
            CorrelationRule::Equal => !equal,
            CorrelationRule::Anticorrelated => equal,
        }
    }
}

pub fn flipped_bits(key: &SiftedKey, rule: CorrelationRule) -> usize {
    key.pairs.iter().filter(|p| rule.is_error(p)).count()
}

/// Fraction of sifted pairs violating `rule`.
pub fn qber(key: &SiftedKey, rule: CorrelationRule) -> Result<f64, MetricsError> {
    if key.is_empty() {
        return Err(MetricsError::EmptyKey);
    }
    Ok(flipped_bits(key, rule) as f64 / key.len() as f64)
}

/// Closed-form description of what a channel use goes through: one arm per
/// photon of the emitted state, optionally joined by a Bell measurement,
/// times the basis-sifting factor.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChain {
    pub arms: Vec<Vec<Component>>,
    pub bsm: Option<f64>,
    pub sifting: f64,
}

impl OracleChain {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.arms.is_empty() {
            return Err(MetricsError::MalformedChain("no arms"));
        }
        if !(self.sifting > 0.0 && self.sifting <= 1.0) {
            return Err(MetricsError::MalformedChain("sifting factor outside (0, 1]"));
        }
        for arm in &self.arms {
            for c in arm {
                c.validate()?;
            }
            let detectors = arm.iter().filter(|c| matches!(c, Component::Detector(_))).count();
            match self.bsm {
                Some(_) if detectors != 0 => {
                    return Err(MetricsError::MalformedChain("a BSM arm ends at the station, not a detector"))
                }
                None if detectors != 1 || !matches!(arm.last(), Some(Component::Detector(_))) => {
                    return Err(MetricsError::MalformedChain("each arm must end with its only detector"))
                }
                _ => {}
            }
        }
        if let Some(p) = self.bsm {
            if self.arms.len() != 2 {
                return Err(MetricsError::MalformedChain("a BSM joins exactly two arms"));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(MetricsError::MalformedChain("p_BSM outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Probability that one channel use yields a counted event.
pub fn expected_throughput(chain: &OracleChain) -> Result<f64, MetricsError> {
    chain.validate()?;
    let arms: f64 = chain
        .arms
        .iter()
        .map(|arm| arm.iter().map(Component::survival).product::<f64>())
        .product();
    Ok(arms * chain.bsm.unwrap_or(1.0) * chain.sifting)
}

/// Counted events per second for a source attempting at `frequency_hz`
/// with per-attempt success `source_success`.
pub fn expected_rate(chain: &OracleChain, frequency_hz: f64, source_success: f64) -> Result<f64, MetricsError> {
    Ok(frequency_hz * source_success * expected_throughput(chain)?)
}

/// Fraction of fully delivered rounds whose outcomes are not all equal.
pub fn ghz_error_rate(rounds: &[GhzRoundRecord]) -> Result<f64, MetricsError> {
    let (delivered, errors) = ghz_round_counts(rounds);
    if delivered == 0 {
        return Err(MetricsError::NoDeliveredRounds);
    }
    Ok(errors as f64 / delivered as f64)
}

/// `(delivered, erroneous)` round counts.
pub fn ghz_round_counts(rounds: &[GhzRoundRecord]) -> (usize, usize) {
    let mut delivered = 0;
    let mut errors = 0;
    for r in rounds.iter().filter(|r| r.is_delivered()) {
        delivered += 1;
        let first = r.outcomes[0];
        if r.outcomes.iter().any(|o| *o != first) {
            errors += 1;
        }
    }
    (delivered, errors)
}

/// Turns per-interval counts at increasing checkpoint times into a
/// cumulative series.
pub fn accumulate_curve(checkpoints: &[(f64, u64)]) -> Result<Vec<(f64, u64)>, MetricsError> {
    if checkpoints.windows(2).any(|w| !(w[0].0 <= w[1].0)) {
        return Err(MetricsError::OutOfOrder);
    }
    let mut total = 0u64;
    Ok(checkpoints
        .iter()
        .map(|&(t, n)| {
            total += n;
            (t, total)
        })
        .collect())
}

/// Standard deviation of a binomial proportion.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    libm::sqrt(p * (1.0 - p) / trials as f64)
}

/// Whether an observed proportion lies within `k` binomial standard
/// deviations of `p`.
pub fn within_sigma(observed: f64, p: f64, trials: u64, k: f64) -> bool {
    libm::fabs(observed - p) <= k * binomial_sigma(p, trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::FiberParams;
    use crate::RngStream;
    use alloc::vec;

    fn rec(step: u64, basis: Basis, bit: bool) -> KeyRecord {
        KeyRecord { step, basis, bit }
    }

    #[test]
    fn sift_joins_on_step_and_basis() {
        let a = [rec(1, Basis::Z, true), rec(3, Basis::X, false), rec(5, Basis::Z, false)];
        let b = [rec(2, Basis::Z, true), rec(3, Basis::X, true), rec(5, Basis::X, false)];
        let key = sift(&a, &b);
        assert_eq!(key.len(), 1);
        assert_eq!(key.pairs[0].step, 3);
        assert_eq!(qber(&key, CorrelationRule::Equal).unwrap(), 1.0);
        assert_eq!(qber(&key, CorrelationRule::Anticorrelated).unwrap(), 0.0);
        let disjoint = sift(&a[..1], &b[..1]);
        assert!(disjoint.is_empty());
        assert_eq!(qber(&disjoint, CorrelationRule::Equal), Err(MetricsError::EmptyKey));
        assert_eq!(sift(&a, &a).len(), a.len());
    }

    #[test]
    fn random_bases_keep_half() {
        let mut rng = RngStream::new(1, 0);
        let n = 100_000u64;
        let a: Vec<_> = (0..n).map(|s| rec(s, Basis::from_bit(rng.coin()), false)).collect();
        let b: Vec<_> = (0..n).map(|s| rec(s, Basis::from_bit(rng.coin()), false)).collect();
        let frac = sift(&a, &b).len() as f64 / n as f64;
        assert!(within_sigma(frac, 0.5, n, 3.0), "{frac}");
    }

    fn bb84_chain(km: f64) -> OracleChain {
        let f = FiberParams::with_length(km);
        let mut arm = Component::link(&f).to_vec();
        arm.push(Component::Detector(0.95));
        OracleChain {
            arms: vec![arm],
            bsm: None,
            sifting: 0.5,
        }
    }

    #[test]
    fn throughput_examples() {
        let bob = expected_throughput(&bb84_chain(3.0)).unwrap();
        assert!((bob - 0.9 * libm::pow(10.0, -0.054) * 0.95 * 0.5).abs() < 1e-12);
        assert!((bob - 0.3776).abs() < 1e-4);
        let charlie = expected_throughput(&bb84_chain(6.0)).unwrap();
        assert!((charlie - 0.3334).abs() < 1e-4);
        let unit = OracleChain {
            arms: vec![vec![Component::Detector(1.0)]],
            bsm: None,
            sifting: 0.5,
        };
        assert_eq!(expected_throughput(&unit).unwrap(), 0.5);
        let alice = expected_rate(&bb84_chain(0.001), 80e6, 8e-3).unwrap();
        assert!((alice - 273_600.0).abs() < 50.0, "{alice}");
        assert_eq!(expected_rate(&bb84_chain(1.0), 0.0, 8e-3).unwrap(), 0.0);
    }

    #[test]
    fn splitting_a_fiber_is_neutral() {
        let whole = bb84_chain(17.0);
        let split = OracleChain {
            arms: vec![vec![
                Component::Coupling(0.9),
                Component::Fiber { length_km: 5.5, eta_fiber: 0.18 },
                Component::Fiber { length_km: 11.5, eta_fiber: 0.18 },
                Component::Detector(0.95),
            ]],
            ..whole.clone()
        };
        let a = expected_throughput(&whole).unwrap();
        let b = expected_throughput(&split).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn malformed_chains() {
        let no_detector = OracleChain {
            arms: vec![vec![Component::Coupling(0.9)]],
            bsm: None,
            sifting: 1.0,
        };
        assert!(matches!(expected_throughput(&no_detector), Err(MetricsError::MalformedChain(_))));
        let detector_first = OracleChain {
            arms: vec![vec![Component::Detector(0.9), Component::Coupling(0.9)]],
            bsm: None,
            sifting: 1.0,
        };
        assert!(expected_throughput(&detector_first).is_err());
        let one_arm_bsm = OracleChain {
            arms: vec![vec![Component::Coupling(0.9)]],
            bsm: Some(0.36),
            sifting: 1.0,
        };
        assert!(expected_throughput(&one_arm_bsm).is_err());
        let mdi = OracleChain {
            arms: vec![vec![Component::Coupling(0.9)], vec![Component::Coupling(0.5)]],
            bsm: Some(0.36),
            sifting: 1.0,
        };
        assert!((expected_throughput(&mdi).unwrap() - 0.9 * 0.5 * 0.36).abs() < 1e-15);
        assert!(expected_throughput(&OracleChain { arms: vec![], bsm: None, sifting: 1.0 }).is_err());
    }

    #[test]
    fn ghz_rounds() {
        let r = |o: &[Option<bool>]| GhzRoundRecord {
            step: 0,
            outcomes: o.to_vec(),
            inputs: None,
        };
        assert_eq!(ghz_error_rate(&[]), Err(MetricsError::NoDeliveredRounds));
        assert_eq!(
            ghz_error_rate(&[r(&[Some(true), None, Some(true)])]),
            Err(MetricsError::NoDeliveredRounds)
        );
        let rounds = [
            r(&[Some(true), Some(true), Some(true)]),
            r(&[Some(false), Some(true), Some(false)]),
            r(&[Some(false), Some(false), Some(false)]),
            r(&[Some(false), None, Some(false)]),
        ];
        assert!((ghz_error_rate(&rounds).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn curves() {
        assert!(accumulate_curve(&[]).unwrap().is_empty());
        let c = accumulate_curve(&[(0.1, 5), (0.2, 0), (0.3, 7)]).unwrap();
        assert_eq!(c, vec![(0.1, 5), (0.2, 5), (0.3, 12)]);
        assert_eq!(accumulate_curve(&[(0.2, 1), (0.1, 1)]), Err(MetricsError::OutOfOrder));
    }
}
