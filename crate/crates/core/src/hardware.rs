//! Physical component models: sources, fibers, the routing switch,
//! gated detectors and the Bell-measurement station.
//!
//! Components act on qubits held in a [`QuantumBackend`]. A photon that is
//! lost anywhere is discarded from the backend, so entangled partners see
//! the reduced state.

use crate::engine::{check_probability, BadProbability, RngStream};
use crate::qstate::{
    Basis, Bb84Payload, BellLabel, QuantumBackend, QubitId, StateError, GHZ_WIDTHS,
};
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HardwareError {
    #[error(transparent)]
    BadProbability(#[from] BadProbability),
    #[error("GHZ width {0} is outside 3..=6")]
    UnsupportedWidth(usize),
    #[error("parameter {name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    State(#[from] StateError),
}

fn probability(name: &'static str, value: f64) -> Result<(), HardwareError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(HardwareError::OutOfRange { name, value })
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), HardwareError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(HardwareError::OutOfRange { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), HardwareError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(HardwareError::OutOfRange { name, value })
    }
}

/// Photon sources of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Single-qubit attempt frequency (Hz).
    pub f_qubit: f64,
    pub p_qubit: f64,
    /// Probability that an emitted BB84 payload has its bit inverted.
    pub p_flip: f64,
    pub f_epr: f64,
    /// EPR success probability for two-party experiments.
    pub p_epr: f64,
    /// EPR success probability used when fusing pairs into GHZ states.
    pub p_epr_multi: f64,
    pub f_ghz: f64,
    pub p_fusion: f64,
    pub eta_herald: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            f_qubit: 80e6,
            p_qubit: 8e-3,
            p_flip: 0.0,
            f_epr: 80e6,
            p_epr: 1e-2,
            p_epr_multi: 0.1,
            f_ghz: 8e6,
            p_fusion: 0.36,
            eta_herald: 0.7,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<(), HardwareError> {
        positive("f_qubit", self.f_qubit)?;
        positive("f_EPR", self.f_epr)?;
        positive("f_GHZ", self.f_ghz)?;
        probability("p_qubit", self.p_qubit)?;
        probability("p_flip", self.p_flip)?;
        probability("p_EPR", self.p_epr)?;
        probability("p_EPR_multi", self.p_epr_multi)?;
        probability("p_fusion", self.p_fusion)?;
        probability("eta_herald", self.eta_herald)
    }
}

/// A gated single-photon detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub p_det: f64,
    pub p_crosstalk: f64,
    /// Dark count rate (Hz).
    pub r_dark: f64,
    /// Gate width (s).
    pub dt_det: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            p_det: 0.95,
            p_crosstalk: 1e-5,
            r_dark: 100.0,
            dt_det: 1e-10,
        }
    }
}

impl DetectorParams {
    /// Probability of a dark click within one gate.
    pub fn p_dark(&self) -> f64 {
        self.r_dark * self.dt_det
    }

    pub fn validate(&self) -> Result<(), HardwareError> {
        probability("p_det", self.p_det)?;
        probability("p_crosstalk", self.p_crosstalk)?;
        non_negative("R_dark", self.r_dark)?;
        non_negative("dt_det", self.dt_det)?;
        probability("R_dark*dt_det", self.p_dark())
    }
}

/// A fiber link including the coupling at its entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberParams {
    pub length_km: f64,
    /// Attenuation (dB/km).
    pub eta_fiber: f64,
    pub p_coupling: f64,
    pub p_dephase: f64,
}

impl Default for FiberParams {
    fn default() -> Self {
        FiberParams {
            length_km: 0.0,
            eta_fiber: 0.18,
            p_coupling: 0.9,
            p_dephase: 0.02,
        }
    }
}

impl FiberParams {
    pub fn with_length(length_km: f64) -> Self {
        FiberParams {
            length_km,
            ..Self::default()
        }
    }

    /// `10^(-eta * L / 10)`.
    pub fn transmission(&self) -> f64 {
        libm::pow(10.0, -self.eta_fiber * self.length_km / 10.0)
    }

    /// Coupling times transmission.
    pub fn survival(&self) -> f64 {
        self.p_coupling * self.transmission()
    }

    pub fn validate(&self) -> Result<(), HardwareError> {
        non_negative("length_km", self.length_km)?;
        non_negative("eta_fiber", self.eta_fiber)?;
        probability("p_coupling", self.p_coupling)?;
        probability("p_dephase", self.p_dephase)
    }
}

/// Everything a node owns apart from its fiber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareParams {
    pub source: SourceParams,
    pub detector: DetectorParams,
    pub p_transmit: f64,
    /// Duration of one gate (s).
    pub t_gate: f64,
    pub p_bsm: f64,
    /// Retention probability of a depolarizing channel applied to every
    /// photon this node detects. `1` disables it.
    pub lambda_depol: f64,
}

impl Default for HardwareParams {
    fn default() -> Self {
        HardwareParams {
            source: SourceParams::default(),
            detector: DetectorParams::default(),
            p_transmit: 0.9,
            t_gate: 1e-9,
            p_bsm: 0.36,
            lambda_depol: 1.0,
        }
    }
}

impl HardwareParams {
    pub fn validate(&self) -> Result<(), HardwareError> {
        self.source.validate()?;
        self.detector.validate()?;
        probability("p_transmit", self.p_transmit)?;
        non_negative("t_gate", self.t_gate)?;
        probability("p_BSM", self.p_bsm)?;
        probability("lambda_depol", self.lambda_depol)
    }
}

/// Index of the first successful attempt at or after `from`, sampled with a
/// single draw. `None` when `p == 0`.
pub fn next_success(rng: &mut RngStream, p: f64, from: u64) -> Result<Option<u64>, BadProbability> {
    Ok(rng.geometric(p)?.and_then(|k| from.checked_add(k)))
}

/// Prepares an emitted BB84 photon, applying the source bit flip.
pub fn emit_single_qubit<B: QuantumBackend>(
    src: &SourceParams,
    payload: Bb84Payload,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<QubitId, HardwareError> {
    let payload = if rng.bernoulli(src.p_flip)? {
        payload.flipped()
    } else {
        payload
    };
    Ok(backend.prepare_bb84(payload)?)
}

/// One attempt of the single-qubit source.
pub fn attempt_single_qubit<B: QuantumBackend>(
    src: &SourceParams,
    payload: Bb84Payload,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<Option<QubitId>, HardwareError> {
    if !rng.bernoulli(src.p_qubit)? {
        return Ok(None);
    }
    emit_single_qubit(src, payload, backend, rng).map(Some)
}

/// One attempt of the EPR source.
pub fn attempt_epr<B: QuantumBackend>(
    src: &SourceParams,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<Option<[QubitId; 2]>, HardwareError> {
    if !rng.bernoulli(src.p_epr)? {
        return Ok(None);
    }
    Ok(Some(backend.prepare_epr()?))
}

/// Success probability of creating an `n`-photon GHZ state by fusing EPR
/// pairs: `m` pairs and `m - 1` fusions for `n = 2m`, plus a heralding step
/// for odd `n = 2m - 1`.
pub fn ghz_success_probability(n: usize, src: &SourceParams) -> Result<f64, HardwareError> {
    if !GHZ_WIDTHS.contains(&n) {
        return Err(HardwareError::UnsupportedWidth(n));
    }
    let m = n.div_ceil(2) as i32;
    let base = libm::pow(src.p_epr_multi, f64::from(m)) * libm::pow(src.p_fusion, f64::from(m - 1));
    Ok(if n % 2 == 1 { base * src.eta_herald } else { base })
}

/// One attempt of the GHZ source.
pub fn attempt_ghz<B: QuantumBackend>(
    src: &SourceParams,
    n: usize,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<Option<Vec<QubitId>>, HardwareError> {
    let p = ghz_success_probability(n, src)?;
    if !rng.bernoulli(p)? {
        return Ok(None);
    }
    Ok(Some(backend.prepare_ghz(n)?))
}

/// Couples a photon into a fiber and sends it through. Survivors are
/// dephased; lost photons are discarded from the backend.
pub fn fiber_transmit<B: QuantumBackend>(
    q: QubitId,
    fiber: &FiberParams,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<Option<QubitId>, HardwareError> {
    if !rng.bernoulli(fiber.survival())? {
        backend.discard(q, rng)?;
        return Ok(None);
    }
    backend.dephase(q, fiber.p_dephase, rng)?;
    Ok(Some(q))
}

/// Routes a photon through the hub's switch.
pub fn switch_route<B: QuantumBackend>(
    q: QubitId,
    p_transmit: f64,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<Option<QubitId>, HardwareError> {
    if !rng.bernoulli(p_transmit)? {
        backend.discard(q, rng)?;
        return Ok(None);
    }
    Ok(Some(q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClickKind {
    Signal,
    Dark,
    None,
    DoubleDiscard,
}

/// What a receiver saw in the gate of source timestep `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectionRecord {
    pub step: u64,
    pub basis: Basis,
    pub kind: ClickKind,
    /// Present only for signal and dark clicks.
    pub outcome: Option<bool>,
}

impl DetectionRecord {
    pub fn is_click(&self) -> bool {
        self.outcome.is_some()
    }
}

/// Photon part of a detection: with probability `p_det` the photon is
/// measured in `basis` and the outcome passes through crosstalk; otherwise
/// it is discarded. Returns the outcome of a click.
pub fn photon_click<B: QuantumBackend>(
    q: QubitId,
    det: &DetectorParams,
    basis: Basis,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<Option<bool>, HardwareError> {
    if !rng.bernoulli(det.p_det)? {
        backend.discard(q, rng)?;
        return Ok(None);
    }
    let outcome = backend.measure(q, basis, rng)?;
    Ok(Some(outcome ^ rng.bernoulli(det.p_crosstalk)?))
}

/// Combines the photon click and a dark click of one gate.
pub fn resolve_gate(
    step: u64,
    basis: Basis,
    photon: Option<bool>,
    dark: bool,
    rng: &mut RngStream,
) -> DetectionRecord {
    let (kind, outcome) = match (photon, dark) {
        (Some(_), true) => (ClickKind::DoubleDiscard, None),
        (Some(b), false) => (ClickKind::Signal, Some(b)),
        (None, true) => (ClickKind::Dark, Some(rng.coin())),
        (None, false) => (ClickKind::None, None),
    };
    DetectionRecord {
        step,
        basis,
        kind,
        outcome,
    }
}

/// One full detection gate.
pub fn detect<B: QuantumBackend>(
    photon: Option<QubitId>,
    det: &DetectorParams,
    basis: Basis,
    step: u64,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<DetectionRecord, HardwareError> {
    let click = match photon {
        Some(q) => photon_click(q, det, basis, backend, rng)?,
        None => None,
    };
    let dark = rng.bernoulli(det.p_dark())?;
    Ok(resolve_gate(step, basis, click, dark, rng))
}

/// A photon at the BSM station, tagged with its emission timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedPhoton {
    pub qubit: QubitId,
    pub step: u64,
}

/// Bell measurement at the hub. Both photons must be present with the same
/// timestep and the measurement succeeds with probability `p_bsm`. Photons
/// that are not measured are discarded.
pub fn bsm_station<B: QuantumBackend>(
    a: Option<TaggedPhoton>,
    b: Option<TaggedPhoton>,
    p_bsm: f64,
    backend: &mut B,
    rng: &mut RngStream,
) -> Result<Option<BellLabel>, HardwareError> {
    check_probability(p_bsm)?;
    match (a, b) {
        (Some(x), Some(y)) if x.step == y.step => {
            if rng.bernoulli(p_bsm)? {
                Ok(Some(backend.bsm(x.qubit, y.qubit, rng)?))
            } else {
                backend.discard(x.qubit, rng)?;
                backend.discard(y.qubit, rng)?;
                Ok(None)
            }
        }
        (x, y) => {
            for p in [x, y].into_iter().flatten() {
                backend.discard(p.qubit, rng)?;
            }
            Ok(None)
        }
    }
}

/// A lossy stage a photon passes through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Coupling(f64),
    Fiber { length_km: f64, eta_fiber: f64 },
    Switch(f64),
    Detector(f64),
}

impl Component {
    pub fn survival(&self) -> f64 {
        match *self {
            Component::Coupling(p) | Component::Switch(p) | Component::Detector(p) => p,
            Component::Fiber {
                length_km,
                eta_fiber,
            } => libm::pow(10.0, -eta_fiber * length_km / 10.0),
        }
    }

    pub fn validate(&self) -> Result<(), HardwareError> {
        match *self {
            Component::Coupling(p) => probability("p_coupling", p),
            Component::Switch(p) => probability("p_transmit", p),
            Component::Detector(p) => probability("p_det", p),
            Component::Fiber {
                length_km,
                eta_fiber,
            } => {
                non_negative("length_km", length_km)?;
                non_negative("eta_fiber", eta_fiber)
            }
        }
    }

    /// The coupling and span of a fiber link.
    pub fn link(fiber: &FiberParams) -> [Component; 2] {
        [
            Component::Coupling(fiber.p_coupling),
            Component::Fiber {
                length_km: fiber.length_km,
                eta_fiber: fiber.eta_fiber,
            },
        ]
    }

    /// One stochastic passage.
    pub fn pass(&self, rng: &mut RngStream) -> Result<bool, BadProbability> {
        rng.bernoulli(self.survival())
    }
}

/// Whether a photon survives every component, one draw per component,
/// stopping at the first loss.
pub fn pass_chain(chain: &[Component], rng: &mut RngStream) -> Result<bool, BadProbability> {
    for c in chain {
        if !c.pass(rng)? {
            return Ok(false);
        }
    }
    Ok(true)
}
