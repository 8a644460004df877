//! GHZ verification and anonymous entanglement, evolved exactly on the
//! dense backend for every delivered round.

use super::{curve_from_times, step_times, GhzRoundRecord, ProtocolError, RunStats};
use crate::engine::{attempt_time, attempts_in, RngStream, SimTime};
use crate::hardware::{ghz_success_probability, next_success};
use crate::network::{ProtocolKind, RunSpec, Topology};
use crate::qstate::{Basis, Circuit, CircuitOp, DenseRegister, Gate, QuantumBackend, QubitId, Readout};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;

/// How long a run lasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Duration(f64),
    /// Stop after `delivered` rounds or `max_seconds`, whichever comes first.
    Rounds { delivered: usize, max_seconds: f64 },
}

impl Budget {
    fn horizon_s(self) -> f64 {
        match self {
            Budget::Duration(t) => t,
            Budget::Rounds { max_seconds, .. } => max_seconds,
        }
    }

    fn target(self) -> Option<usize> {
        match self {
            Budget::Duration(_) => None,
            Budget::Rounds { delivered, .. } => Some(delivered),
        }
    }
}

/// Noise seen by one party's share of a delivered GHZ state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    /// `false` when the party's click was a dark count: the photon is gone
    /// and the reported bit is a coin flip.
    pub present: bool,
    pub p_dephase: f64,
    pub lambda_depol: f64,
    pub p_crosstalk: f64,
}

impl Arrival {
    pub const IDEAL: Arrival = Arrival {
        present: true,
        p_dephase: 0.0,
        lambda_depol: 1.0,
        p_crosstalk: 0.0,
    };
}

fn apply_noise(reg: &mut DenseRegister, q: QubitId, a: &Arrival, rng: &mut RngStream) -> Result<(), ProtocolError> {
    reg.dephase(q, a.p_dephase, rng)?;
    if a.lambda_depol < 1.0 {
        reg.depolarize(q, a.lambda_depol, rng)?;
    }
    Ok(())
}

fn basis_change(input: bool) -> Gate {
    if input {
        Gate::SqrtX
    } else {
        Gate::H
    }
}

fn check_inputs(n: usize, inputs: &[bool]) -> Result<(), ProtocolError> {
    if inputs.len() != n {
        return Err(ProtocolError::BadParameter("one input per party"));
    }
    if inputs.iter().filter(|&&x| x).count() % 2 == 1 {
        return Err(ProtocolError::BadParameter("inputs must have even parity"));
    }
    Ok(())
}

/// Draws verification inputs: independent coins with the last one fixing
/// even parity.
pub fn draw_inputs(n: usize, rng: &mut RngStream) -> Vec<bool> {
    let mut x: Vec<bool> = (0..n.saturating_sub(1)).map(|_| rng.coin()).collect();
    let parity = x.iter().fold(false, |p, &b| p ^ b);
    x.push(parity);
    x
}

/// A test round passes when the outcome parity equals half the number of
/// `Y` measurements, mod 2.
pub fn verification_accepts(inputs: &[bool], outcomes: &[bool]) -> bool {
    let ys = inputs.iter().filter(|&&x| x).count();
    let ones = outcomes.iter().filter(|&&y| y).count();
    ones % 2 == (ys / 2) % 2
}

/// One verification test: party `i` measures `X` when `inputs[i]` is false
/// and `Y` otherwise. An optional `Z` error hits one share first.
pub fn verification_circuit(n: usize, inputs: &[bool], z_error_on: Option<usize>) -> Result<Circuit, ProtocolError> {
    check_inputs(n, inputs)?;
    let mut c = Circuit::new().op(CircuitOp::PrepareGhz(n));
    if let Some(i) = z_error_on {
        if i >= n {
            return Err(ProtocolError::BadParameter("error target out of range"));
        }
        c = c.op(CircuitOp::Gate(i, Gate::Z));
    }
    for (i, &x) in inputs.iter().enumerate() {
        c = c.op(CircuitOp::Gate(i, basis_change(x)));
    }
    for i in 0..n {
        c = c.readout(Readout::Single(i, Basis::Z));
    }
    Ok(c)
}

pub fn exact_accept_probability(n: usize, inputs: &[bool], z_error_on: Option<usize>) -> Result<f64, ProtocolError> {
    let dist = verification_circuit(n, inputs, z_error_on)?.exact_distribution()?;
    Ok(dist
        .iter()
        .enumerate()
        .filter(|(word, _)| {
            let outcomes: Vec<bool> = (0..n).map(|i| word >> (n - 1 - i) & 1 == 1).collect();
            verification_accepts(inputs, &outcomes)
        })
        .map(|(_, p)| p)
        .sum())
}

/// Plays one verification test on a fresh noisy GHZ state and returns the
/// reported bits.
pub fn verification_round(arrivals: &[Arrival], inputs: &[bool], rng: &mut RngStream) -> Result<Vec<bool>, ProtocolError> {
    let n = arrivals.len();
    check_inputs(n, inputs)?;
    let mut reg = DenseRegister::new();
    let qs = reg.prepare_ghz(n)?;
    let mut out = Vec::with_capacity(n);
    for ((&q, a), &x) in qs.iter().zip(arrivals).zip(inputs) {
        if !a.present {
            reg.discard(q, rng)?;
            out.push(rng.coin());
            continue;
        }
        apply_noise(&mut reg, q, a, rng)?;
        reg.apply_gate(q, basis_change(x))?;
        let bit = reg.measure(q, Basis::Z, rng)?;
        out.push(bit ^ rng.bernoulli(a.p_crosstalk)?);
    }
    Ok(out)
}

/// Public broadcast of one anonymous-entanglement round, in participant
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub bits: Vec<bool>,
}

/// One anonymous-entanglement round. Every other party measures `X` and
/// broadcasts the result; sender and receiver broadcast coins. The sender
/// applies `Z` on its coin, the receiver on that coin xor the parity of the
/// others. Returns the fidelity of the shared pair with `Φ+`.
///
/// `present` is only consulted for the other parties.
pub fn anonymous_entanglement_round(
    arrivals: &[Arrival],
    sender: usize,
    receiver: usize,
    rng: &mut RngStream,
) -> Result<(f64, Transcript), ProtocolError> {
    let n = arrivals.len();
    if sender == receiver {
        return Err(ProtocolError::SameEndpoints);
    }
    if sender >= n || receiver >= n {
        return Err(ProtocolError::BadParameter("endpoint out of range"));
    }
    let mut reg = DenseRegister::new();
    let qs = reg.prepare_ghz(n)?;
    let mut bits = vec![false; n];
    let mut parity = false;
    for (i, (&q, a)) in qs.iter().zip(arrivals).enumerate() {
        if i == sender || i == receiver {
            continue;
        }
        let m = if a.present {
            apply_noise(&mut reg, q, a, rng)?;
            reg.apply_gate(q, Gate::H)?;
            reg.measure(q, Basis::Z, rng)? ^ rng.bernoulli(a.p_crosstalk)?
        } else {
            reg.discard(q, rng)?;
            rng.coin()
        };
        bits[i] = m;
        parity ^= m;
    }
    for i in [sender, receiver] {
        apply_noise(&mut reg, qs[i], &arrivals[i], rng)?;
    }
    let coin = rng.coin();
    bits[sender] = coin;
    bits[receiver] = rng.coin();
    if coin {
        reg.apply_gate(qs[sender], Gate::Z)?;
    }
    if coin ^ parity {
        reg.apply_gate(qs[receiver], Gate::Z)?;
    }
    let pair = reg.reduced(&[qs[sender], qs[receiver]])?;
    let s = Complex64::new(core::f64::consts::FRAC_1_SQRT_2, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let fidelity = pair.fidelity_with_pure(&[s, zero, zero, s]);
    Ok((fidelity, Transcript { bits }))
}

struct Channel {
    survival: f64,
    p_det: f64,
    p_dark: f64,
    darks: bool,
    noise: Arrival,
    link: RngStream,
    det: RngStream,
    dark: RngStream,
}

/// GHZ emissions at the qonnector and their delivery to every party.
struct Feed {
    hub: RngStream,
    p_emit: f64,
    clock_hz: f64,
    steps: u64,
    next: u64,
    channels: Vec<Channel>,
}

impl Feed {
    fn new(topology: &Topology, parties: &[&str], darks: &[bool], horizon_s: f64, seed: u64) -> Result<Self, ProtocolError> {
        let hub = topology.qonnector();
        let src = hub.hardware.source;
        let channels = parties
            .iter()
            .zip(darks)
            .map(|(&p, &darks)| {
                let node = topology.node(p)?;
                let fiber = topology.fiber_of(p)?;
                let det = node.hardware.detector;
                Ok(Channel {
                    survival: fiber.survival(),
                    p_det: det.p_det,
                    p_dark: det.p_dark(),
                    darks,
                    noise: Arrival {
                        present: true,
                        p_dephase: fiber.p_dephase,
                        lambda_depol: node.hardware.lambda_depol,
                        p_crosstalk: det.p_crosstalk,
                    },
                    link: RngStream::for_name(seed, &format!("{}-{p}", hub.name)),
                    det: RngStream::for_name(seed, p),
                    dark: RngStream::for_name(seed, &format!("{p}/dark")),
                })
            })
            .collect::<Result<Vec<_>, ProtocolError>>()?;
        Ok(Feed {
            hub: RngStream::for_name(seed, &hub.name),
            p_emit: ghz_success_probability(parties.len(), &src)?,
            clock_hz: src.f_ghz,
            steps: attempts_in(SimTime::from_secs_f64(horizon_s), src.f_ghz),
            next: 0,
            channels,
        })
    }

    /// The next emitted step, with every party's arrival when all of them
    /// have a usable click.
    fn next_round(&mut self) -> Result<Option<(u64, Option<Vec<Arrival>>)>, ProtocolError> {
        let Some(step) = next_success(&mut self.hub, self.p_emit, self.next)? else {
            return Ok(None);
        };
        if step >= self.steps {
            return Ok(None);
        }
        self.next = step + 1;
        let mut arrivals = Vec::with_capacity(self.channels.len());
        let mut delivered = true;
        for c in &mut self.channels {
            let photon = c.link.bernoulli(c.survival)? && c.det.bernoulli(c.p_det)?;
            let dark = c.darks && c.dark.bernoulli(c.p_dark)?;
            match (photon, dark) {
                (true, false) => arrivals.push(c.noise),
                (false, true) => arrivals.push(Arrival { present: false, ..c.noise }),
                _ => delivered = false,
            }
        }
        Ok(Some((step, delivered.then_some(arrivals))))
    }

    fn elapsed_s(&self, budget: Budget, delivered: usize, last_step: Option<u64>) -> f64 {
        match (budget.target(), last_step) {
            (Some(t), Some(s)) if delivered >= t => attempt_time(s + 1, self.clock_hz).as_secs_f64(),
            _ => budget.horizon_s(),
        }
    }

    fn stats(&self, seconds: f64, emitted: u64, delivered: Vec<u64>, flipped: u64, score: f64) -> RunStats {
        RunStats {
            sifted_bits: delivered.len() as u64,
            channel_uses: emitted,
            flipped_bits: flipped,
            simulated_seconds: seconds,
            score,
            curve: curve_from_times(step_times(delivered, self.clock_hz), SimTime::from_secs_f64(seconds)),
        }
    }
}

fn position(parties: &[&str], name: &str) -> Result<usize, ProtocolError> {
    parties
        .iter()
        .position(|p| *p == name)
        .ok_or_else(|| ProtocolError::NotParticipant(name.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRun {
    /// Counted events are delivered test rounds; flipped ones are rejected
    /// rounds and the score counts accepted ones.
    pub stats: RunStats,
    pub rounds: Vec<GhzRoundRecord>,
}

/// Distributes GHZ states and tests every delivered one, with `verifier`
/// drawing the inputs.
pub fn run_ghz_verification(
    topology: &Topology,
    parties: &[&str],
    verifier: &str,
    budget: Budget,
    seed: u64,
) -> Result<VerificationRun, ProtocolError> {
    let horizon = budget.horizon_s();
    topology.check_run(&RunSpec::new(ProtocolKind::GhzVerify, parties, horizon, 1, seed))?;
    let v = position(parties, verifier)?;
    let n = parties.len();
    let mut feed = Feed::new(topology, parties, &vec![true; n], horizon, seed)?;
    let mut state_rng = RngStream::for_name(seed, &format!("{}/state", topology.qonnector().name));
    let (mut emitted, mut accepted) = (0u64, 0u64);
    let mut rounds = Vec::new();
    while let Some((step, arrivals)) = feed.next_round()? {
        emitted += 1;
        let Some(arrivals) = arrivals else { continue };
        let inputs = draw_inputs(n, &mut feed.channels[v].det);
        let outcomes = verification_round(&arrivals, &inputs, &mut state_rng)?;
        if verification_accepts(&inputs, &outcomes) {
            accepted += 1;
        }
        rounds.push(GhzRoundRecord {
            step,
            outcomes: outcomes.into_iter().map(Some).collect(),
            inputs: Some(inputs),
        });
        if budget.target().is_some_and(|t| rounds.len() >= t) {
            break;
        }
    }
    let seconds = feed.elapsed_s(budget, rounds.len(), rounds.last().map(|r| r.step));
    let delivered: Vec<u64> = rounds.iter().map(|r| r.step).collect();
    let rejected = delivered.len() as u64 - accepted;
    let stats = feed.stats(seconds, emitted, delivered, rejected, accepted as f64);
    Ok(VerificationRun { stats, rounds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnonymousRun {
    /// Counted events are delivered rounds; the score sums their fidelity.
    pub stats: RunStats,
    pub fidelities: Vec<f64>,
    pub transcripts: Vec<Transcript>,
}

/// Creates anonymous entanglement between `sender` and `receiver` out of
/// shared GHZ states. The two designated parties keep their photons, so a
/// dark count cannot stand in for them.
pub fn run_anonymous_entanglement(
    topology: &Topology,
    parties: &[&str],
    sender: &str,
    receiver: &str,
    budget: Budget,
    seed: u64,
) -> Result<AnonymousRun, ProtocolError> {
    if sender == receiver {
        return Err(ProtocolError::SameEndpoints);
    }
    let horizon = budget.horizon_s();
    topology.check_run(&RunSpec::new(ProtocolKind::AnonEntangle, parties, horizon, 1, seed))?;
    let (s, r) = (position(parties, sender)?, position(parties, receiver)?);
    let darks: Vec<bool> = (0..parties.len()).map(|i| i != s && i != r).collect();
    let mut feed = Feed::new(topology, parties, &darks, horizon, seed)?;
    let mut state_rng = RngStream::for_name(seed, &format!("{}/state", topology.qonnector().name));
    let mut emitted = 0u64;
    let (mut steps, mut fidelities, mut transcripts) = (Vec::new(), Vec::new(), Vec::new());
    while let Some((step, arrivals)) = feed.next_round()? {
        emitted += 1;
        let Some(arrivals) = arrivals else { continue };
        let (f, t) = anonymous_entanglement_round(&arrivals, s, r, &mut state_rng)?;
        steps.push(step);
        fidelities.push(f);
        transcripts.push(t);
        if budget.target().is_some_and(|t| steps.len() >= t) {
            break;
        }
    }
    let seconds = feed.elapsed_s(budget, steps.len(), steps.last().copied());
    let score = fidelities.iter().sum();
    let stats = feed.stats(seconds, emitted, steps, 0, score);
    Ok(AnonymousRun { stats, fidelities, transcripts })
}

/// Cost of verifying one GHZ state to precision `epsilon` with confidence
/// parameter `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationBudget {
    /// Probability that a delivered state is kept for use rather than tested.
    pub usage_probability: f64,
    pub rounds_per_used_state: f64,
    pub seconds_per_verified_state: f64,
}

/// Budget for `n` parties receiving `delivered_rate` GHZ states per second.
pub fn estimate_verification_budget(
    n: usize,
    epsilon: f64,
    delta: f64,
    delivered_rate: f64,
) -> Result<VerificationBudget, ProtocolError> {
    if n == 0 || !(epsilon > 0.0) || !(delta > 0.0) || !(delivered_rate >= 0.0) {
        return Err(ProtocolError::BadParameter("budget needs n, epsilon, delta > 0 and a non-negative rate"));
    }
    let rounds = 4.0 * n as f64 * delta / (epsilon * epsilon);
    let usage = 1.0 / rounds;
    if usage > 1.0 {
        return Err(ProtocolError::BadBudget(usage));
    }
    Ok(VerificationBudget {
        usage_probability: usage,
        rounds_per_used_state: rounds,
        seconds_per_verified_state: if delivered_rate > 0.0 { rounds / delivered_rate } else { f64::INFINITY },
    })
}
