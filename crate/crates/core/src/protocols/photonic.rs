//! Event-driven photonic runs on the trajectory backend.

use super::{curve_from_times, step_times, GhzRoundRecord, ProtocolError, RunStats};
use crate::engine::{attempt_time, attempts_in, stream_id_for, RngStream, Scheduler, SimTime};
use crate::hardware::{
    bsm_station, emit_single_qubit, fiber_transmit, ghz_success_probability, next_success,
    photon_click, resolve_gate, switch_route, DetectionRecord, DetectorParams, FiberParams,
    SourceParams, TaggedPhoton,
};
use crate::metrics::{flipped_bits, ghz_round_counts, sift, sift_detections, CorrelationRule, KeyRecord, SiftedKey};
use crate::network::{ProtocolKind, RunSpec, Topology};
use crate::qstate::{Basis, Bb84Payload, BellLabel, QuantumBackend, QubitId, TrajectoryRegister};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Result of a QKD run: statistics plus the sifted key.
#[derive(Debug, Clone, PartialEq)]
pub struct QkdRun {
    pub stats: RunStats,
    pub key: SiftedKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GhzShareRun {
    pub stats: RunStats,
    pub rounds: Vec<GhzRoundRecord>,
}

#[derive(Debug, Clone, Copy)]
enum SourceKind {
    Bb84,
    /// One of eight equatorial angles, carried opaquely.
    Angle,
    Epr,
    Ghz(usize),
}

struct Source {
    kind: SourceKind,
    params: SourceParams,
    p_success: f64,
    clock_hz: f64,
    steps: u64,
    arms: Vec<usize>,
    stream: usize,
    records: Vec<KeyRecord>,
    emitted: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
enum Stage {
    Fiber { fiber: FiberParams, stream: usize },
    Switch { p_transmit: f64, stream: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BasisPolicy {
    Random,
    Fixed(Basis),
    /// Arrival heralding only; the photon is not measured.
    Herald,
}

enum Terminal {
    Detector {
        det: DetectorParams,
        lambda_depol: f64,
        policy: BasisPolicy,
        stream: usize,
        dark_stream: usize,
        records: Vec<DetectionRecord>,
    },
    Bsm {
        side: usize,
    },
}

struct Arm {
    stages: Vec<Stage>,
    terminal: Terminal,
    clock_hz: f64,
    steps: u64,
    hops: u64,
}

impl Arm {
    fn gate_time(&self, step: u64) -> SimTime {
        attempt_time(step, self.clock_hz).after(self.hops)
    }
}

struct GateState {
    basis: Basis,
    photon: Option<bool>,
    dark: bool,
    closing: bool,
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Emit { source: usize, step: u64 },
    Travel { arm: usize, stage: usize, qubit: QubitId, step: u64 },
    Dark { arm: usize, step: u64 },
    Close { arm: usize, step: u64 },
    BsmClose { step: u64 },
}

/// Everything one photonic run owns.
struct World {
    seed: u64,
    stream_names: Vec<String>,
    streams: Vec<RngStream>,
    backend: TrajectoryRegister,
    sources: Vec<Source>,
    arms: Vec<Arm>,
    gates: BTreeMap<(usize, u64), GateState>,
    hub_pending: BTreeMap<u64, [Option<TaggedPhoton>; 2]>,
    p_bsm: f64,
    hub_stream: usize,
    bsm_successes: Vec<(u64, BellLabel)>,
    duration: SimTime,
}

impl World {
    fn new(topology: &Topology, seed: u64, duration_s: f64) -> Self {
        let hub = topology.qonnector();
        let mut w = World {
            seed,
            stream_names: Vec::new(),
            streams: Vec::new(),
            backend: TrajectoryRegister::new(),
            sources: Vec::new(),
            arms: Vec::new(),
            gates: BTreeMap::new(),
            hub_pending: BTreeMap::new(),
            p_bsm: hub.hardware.p_bsm,
            hub_stream: 0,
            bsm_successes: Vec::new(),
            duration: SimTime::from_secs_f64(duration_s),
        };
        w.hub_stream = w.stream(&hub.name);
        w
    }

    /// Index of the named stream, creating it on first use.
    fn stream(&mut self, name: &str) -> usize {
        if let Some(i) = self.stream_names.iter().position(|n| n == name) {
            return i;
        }
        self.stream_names.push(name.into());
        self.streams.push(RngStream::new(self.seed, stream_id_for(name)));
        self.streams.len() - 1
    }

    fn link_stage(&mut self, topology: &Topology, endpoint: &str) -> Result<Stage, ProtocolError> {
        let fiber = *topology.fiber_of(endpoint)?;
        let hub = &topology.qonnector().name;
        let stream = self.stream(&format!("{hub}-{endpoint}"));
        Ok(Stage::Fiber { fiber, stream })
    }

    fn switch_stage(&mut self, topology: &Topology) -> Stage {
        Stage::Switch {
            p_transmit: topology.qonnector().hardware.p_transmit,
            stream: self.hub_stream,
        }
    }

    fn add_source(&mut self, topology: &Topology, node: &str, kind: SourceKind) -> Result<usize, ProtocolError> {
        let params = topology.node(node)?.hardware.source;
        let (p_success, clock_hz) = match kind {
            SourceKind::Bb84 | SourceKind::Angle => (params.p_qubit, params.f_qubit),
            SourceKind::Epr => (params.p_epr, params.f_epr),
            SourceKind::Ghz(n) => (ghz_success_probability(n, &params)?, params.f_ghz),
        };
        let stream = self.stream(node);
        self.sources.push(Source {
            kind,
            params,
            p_success,
            clock_hz,
            steps: attempts_in(self.duration, clock_hz),
            arms: Vec::new(),
            stream,
            records: Vec::new(),
            emitted: Vec::new(),
        });
        Ok(self.sources.len() - 1)
    }

    fn add_detector_arm(
        &mut self,
        topology: &Topology,
        source: usize,
        stages: Vec<Stage>,
        receiver: &str,
        policy: BasisPolicy,
    ) -> Result<usize, ProtocolError> {
        let hw = topology.node(receiver)?.hardware;
        let stream = self.stream(receiver);
        let dark_stream = self.stream(&format!("{receiver}/dark"));
        let terminal = Terminal::Detector {
            det: hw.detector,
            lambda_depol: hw.lambda_depol,
            policy,
            stream,
            dark_stream,
            records: Vec::new(),
        };
        Ok(self.add_arm(source, stages, terminal))
    }

    fn add_arm(&mut self, source: usize, stages: Vec<Stage>, terminal: Terminal) -> usize {
        let src = &self.sources[source];
        let hops = stages.iter().filter(|s| matches!(s, Stage::Fiber { .. })).count() as u64;
        self.arms.push(Arm {
            stages,
            terminal,
            clock_hz: src.clock_hz,
            steps: src.steps,
            hops,
        });
        let arm = self.arms.len() - 1;
        self.sources[source].arms.push(arm);
        arm
    }

    fn run(&mut self) -> Result<(), ProtocolError> {
        let mut sched: Scheduler<Event> = Scheduler::new();
        for s in 0..self.sources.len() {
            let src = &self.sources[s];
            let (p, n) = (src.p_success, src.steps);
            if let Some(step) = next_success(&mut self.streams[src.stream], p, 0)? {
                if step < n {
                    sched.schedule(attempt_time(step, src.clock_hz), Event::Emit { source: s, step })?;
                }
            }
        }
        for a in 0..self.arms.len() {
            self.schedule_next_dark(&mut sched, a, 0)?;
        }
        let max_hops = self.arms.iter().map(|a| a.hops).max().unwrap_or(0);
        let end = self.duration.after(max_hops + 1);
        let mut failure = None;
        sched.run_until(end, |sched, ev| {
            if failure.is_none() {
                if let Err(e) = self.handle(sched, ev.action) {
                    failure = Some(e);
                }
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn schedule_next_dark(&mut self, sched: &mut Scheduler<Event>, arm: usize, from: u64) -> Result<(), ProtocolError> {
        let a = &self.arms[arm];
        let Terminal::Detector { det, dark_stream, .. } = a.terminal else {
            return Ok(());
        };
        if let Some(step) = next_success(&mut self.streams[dark_stream], det.p_dark(), from)? {
            if step < a.steps {
                sched.schedule(a.gate_time(step), Event::Dark { arm, step })?;
            }
        }
        Ok(())
    }

    fn handle(&mut self, sched: &mut Scheduler<Event>, ev: Event) -> Result<(), ProtocolError> {
        match ev {
            Event::Emit { source, step } => self.emit(sched, source, step),
            Event::Travel { arm, stage, qubit, step } => self.advance(sched, arm, stage, qubit, step),
            Event::Dark { arm, step } => {
                self.open_gate(arm, step).dark = true;
                self.close_later(sched, arm, step);
                self.schedule_next_dark(sched, arm, step + 1)
            }
            Event::Close { arm, step } => {
                let gate = self.gates.remove(&(arm, step)).expect("gate opened before closing");
                if let Terminal::Detector { stream, ref mut records, .. } = self.arms[arm].terminal {
                    let rec = resolve_gate(step, gate.basis, gate.photon, gate.dark, &mut self.streams[stream]);
                    records.push(rec);
                }
                Ok(())
            }
            Event::BsmClose { step } => {
                let [a, b] = self.hub_pending.remove(&step).unwrap_or([None, None]);
                let rng = &mut self.streams[self.hub_stream];
                if let Some(label) = bsm_station(a, b, self.p_bsm, &mut self.backend, rng)? {
                    self.bsm_successes.push((step, label));
                }
                Ok(())
            }
        }
    }

    fn emit(&mut self, sched: &mut Scheduler<Event>, source: usize, step: u64) -> Result<(), ProtocolError> {
        let src = &mut self.sources[source];
        let rng = &mut self.streams[src.stream];
        let qubits: Vec<QubitId> = match src.kind {
            SourceKind::Bb84 => {
                let bit = rng.coin();
                let basis = Basis::from_bit(rng.coin());
                src.records.push(KeyRecord { step, basis, bit });
                vec![emit_single_qubit(&src.params, Bb84Payload::new(bit, basis), &mut self.backend, rng)?]
            }
            SourceKind::Angle => {
                let angle = rng.below(8);
                let carrier = Bb84Payload::new(angle >= 4, Basis::X);
                vec![self.backend.prepare_bb84(carrier)?]
            }
            SourceKind::Epr => self.backend.prepare_epr()?.to_vec(),
            SourceKind::Ghz(n) => self.backend.prepare_ghz(n)?,
        };
        src.emitted.push(step);
        let arms = src.arms.clone();
        let (p, n, f, stream) = (src.p_success, src.steps, src.clock_hz, src.stream);
        for (arm, q) in arms.into_iter().zip(qubits) {
            self.advance(sched, arm, 0, q, step)?;
        }
        if let Some(next) = next_success(&mut self.streams[stream], p, step + 1)? {
            if next < n {
                sched.schedule(attempt_time(next, f), Event::Emit { source, step: next })?;
            }
        }
        Ok(())
    }

    /// Moves a photon through the arm from `stage` on. Crossing a fiber
    /// takes 1 ns; reaching the end hands it to the terminal.
    fn advance(
        &mut self,
        sched: &mut Scheduler<Event>,
        arm: usize,
        stage: usize,
        qubit: QubitId,
        step: u64,
    ) -> Result<(), ProtocolError> {
        let mut i = stage;
        while let Some(&s) = self.arms[arm].stages.get(i) {
            match s {
                Stage::Switch { p_transmit, stream } => {
                    let rng = &mut self.streams[stream];
                    if switch_route(qubit, p_transmit, &mut self.backend, rng)?.is_none() {
                        return Ok(());
                    }
                    i += 1;
                }
                Stage::Fiber { fiber, stream } => {
                    let rng = &mut self.streams[stream];
                    if fiber_transmit(qubit, &fiber, &mut self.backend, rng)?.is_some() {
                        sched.schedule_in(1, Event::Travel { arm, stage: i + 1, qubit, step });
                    }
                    return Ok(());
                }
            }
        }
        self.arrive(sched, arm, qubit, step)
    }

    fn arrive(&mut self, sched: &mut Scheduler<Event>, arm: usize, qubit: QubitId, step: u64) -> Result<(), ProtocolError> {
        match self.arms[arm].terminal {
            Terminal::Bsm { side } => {
                let entry = self.hub_pending.entry(step).or_insert([None, None]);
                let first = entry.iter().all(Option::is_none);
                entry[side] = Some(TaggedPhoton { qubit, step });
                if first {
                    sched.schedule_in(0, Event::BsmClose { step });
                }
                Ok(())
            }
            Terminal::Detector { det, lambda_depol, policy, stream, .. } => {
                let basis = self.open_gate(arm, step).basis;
                let rng = &mut self.streams[stream];
                if lambda_depol < 1.0 {
                    self.backend.depolarize(qubit, lambda_depol, rng)?;
                }
                let click = if policy == BasisPolicy::Herald {
                    let hit = rng.bernoulli(det.p_det)?;
                    self.backend.discard(qubit, rng)?;
                    hit.then_some(false)
                } else {
                    photon_click(qubit, &det, basis, &mut self.backend, rng)?
                };
                self.gates.get_mut(&(arm, step)).expect("gate just opened").photon = click;
                self.close_later(sched, arm, step);
                Ok(())
            }
        }
    }

    /// The gate of `step` at the arm's detector, choosing its basis when it
    /// first opens.
    fn open_gate(&mut self, arm: usize, step: u64) -> &mut GateState {
        let Terminal::Detector { policy, stream, .. } = self.arms[arm].terminal else {
            unreachable!("gates exist only at detectors");
        };
        let rng = &mut self.streams[stream];
        self.gates.entry((arm, step)).or_insert_with(|| GateState {
            basis: match policy {
                BasisPolicy::Random => Basis::from_bit(rng.coin()),
                BasisPolicy::Fixed(b) => b,
                BasisPolicy::Herald => Basis::Z,
            },
            photon: None,
            dark: false,
            closing: false,
        })
    }

    /// Schedules the gate's resolution after everything already queued for
    /// this instant. Photon arrivals and dark counts of a gate are queued
    /// before its time comes, so the first of them to fire closes it.
    fn close_later(&mut self, sched: &mut Scheduler<Event>, arm: usize, step: u64) {
        let gate = self.gates.get_mut(&(arm, step)).expect("gate is open");
        if !gate.closing {
            gate.closing = true;
            sched.schedule_in(0, Event::Close { arm, step });
        }
    }

    fn detector_records(&self, arm: usize) -> &[DetectionRecord] {
        match &self.arms[arm].terminal {
            Terminal::Detector { records, .. } => records,
            Terminal::Bsm { .. } => &[],
        }
    }
}

impl World {
    fn stats(&self, counted_steps: impl IntoIterator<Item = u64>, clock_hz: f64, channel_uses: u64, flipped: u64) -> RunStats {
        let steps: Vec<u64> = counted_steps.into_iter().collect();
        RunStats {
            sifted_bits: steps.len() as u64,
            channel_uses,
            flipped_bits: flipped,
            simulated_seconds: self.duration.as_secs_f64(),
            score: 0.0,
            curve: curve_from_times(step_times(steps, clock_hz), self.duration),
        }
    }

    fn qkd_result(&self, source: usize, key: SiftedKey, rule: CorrelationRule) -> QkdRun {
        let src = &self.sources[source];
        let flipped = flipped_bits(&key, rule) as u64;
        let stats = self.stats(key.pairs.iter().map(|p| p.step), src.clock_hz, src.emitted.len() as u64, flipped);
        QkdRun { stats, key }
    }
}

fn check(topology: &Topology, protocol: ProtocolKind, parts: &[&str], duration_s: f64, seed: u64) -> Result<(), ProtocolError> {
    topology.check_run(&RunSpec::new(protocol, parts, duration_s, 1, seed))?;
    Ok(())
}

/// Prepare-and-measure BB84 between the qonnector and one of its qlients,
/// in either direction.
pub fn run_bb84(topology: &Topology, sender: &str, receiver: &str, duration_s: f64, seed: u64) -> Result<QkdRun, ProtocolError> {
    check(topology, ProtocolKind::Bb84, &[sender, receiver], duration_s, seed)?;
    let endpoint = if sender == topology.qonnector().name { receiver } else { sender };
    let mut w = World::new(topology, seed, duration_s);
    let src = w.add_source(topology, sender, SourceKind::Bb84)?;
    let stage = w.link_stage(topology, endpoint)?;
    let arm = w.add_detector_arm(topology, src, vec![stage], receiver, BasisPolicy::Random)?;
    w.run()?;
    let key = sift_detections(&w.sources[src].records, w.detector_records(arm));
    Ok(w.qkd_result(src, key, CorrelationRule::Equal))
}

/// BB84 between two qlients, with the qonnector switching the photon from
/// the sender's fiber into the receiver's.
pub fn run_bb84_transmitted(
    topology: &Topology,
    sender: &str,
    receiver: &str,
    duration_s: f64,
    seed: u64,
) -> Result<QkdRun, ProtocolError> {
    check(topology, ProtocolKind::Bb84Transmitted, &[sender, receiver], duration_s, seed)?;
    let mut w = World::new(topology, seed, duration_s);
    let src = w.add_source(topology, sender, SourceKind::Bb84)?;
    let stages = vec![
        w.link_stage(topology, sender)?,
        w.switch_stage(topology),
        w.link_stage(topology, receiver)?,
    ];
    let arm = w.add_detector_arm(topology, src, stages, receiver, BasisPolicy::Random)?;
    w.run()?;
    let key = sift_detections(&w.sources[src].records, w.detector_records(arm));
    Ok(w.qkd_result(src, key, CorrelationRule::Equal))
}

/// Entanglement-based QKD: the qonnector emits singlets, each qlient
/// measures its half in a random basis.
pub fn run_bbm92(topology: &Topology, a: &str, b: &str, duration_s: f64, seed: u64) -> Result<QkdRun, ProtocolError> {
    check(topology, ProtocolKind::Bbm92, &[a, b], duration_s, seed)?;
    let hub = topology.qonnector().name.clone();
    let mut w = World::new(topology, seed, duration_s);
    let src = w.add_source(topology, &hub, SourceKind::Epr)?;
    let sa = w.link_stage(topology, a)?;
    let arm_a = w.add_detector_arm(topology, src, vec![sa], a, BasisPolicy::Random)?;
    let sb = w.link_stage(topology, b)?;
    let arm_b = w.add_detector_arm(topology, src, vec![sb], b, BasisPolicy::Random)?;
    w.run()?;
    let ka: Vec<KeyRecord> = w.detector_records(arm_a).iter().filter_map(KeyRecord::from_detection).collect();
    let kb: Vec<KeyRecord> = w.detector_records(arm_b).iter().filter_map(KeyRecord::from_detection).collect();
    let key = sift(&ka, &kb);
    Ok(w.qkd_result(src, key, CorrelationRule::Anticorrelated))
}

/// Measurement-device-independent QKD: both qlients send BB84 photons to a
/// Bell measurement at the qonnector. A round counts when the Bell
/// measurement succeeds; channel uses are timesteps where both emitted.
pub fn run_mdi_qkd(topology: &Topology, a: &str, b: &str, duration_s: f64, seed: u64) -> Result<QkdRun, ProtocolError> {
    check(topology, ProtocolKind::Mdi, &[a, b], duration_s, seed)?;
    let mut w = World::new(topology, seed, duration_s);
    let src_a = w.add_source(topology, a, SourceKind::Bb84)?;
    let src_b = w.add_source(topology, b, SourceKind::Bb84)?;
    let sa = w.link_stage(topology, a)?;
    w.add_arm(src_a, vec![sa], Terminal::Bsm { side: 0 });
    let sb = w.link_stage(topology, b)?;
    w.add_arm(src_b, vec![sb], Terminal::Bsm { side: 1 });
    w.run()?;
    let both = count_common(&w.sources[src_a].emitted, &w.sources[src_b].emitted);
    let clock = w.sources[src_a].clock_hz;
    let stats = w.stats(w.bsm_successes.iter().map(|(s, _)| *s), clock, both, 0);
    Ok(QkdRun {
        stats,
        key: SiftedKey::default(),
    })
}

fn count_common(a: &[u64], b: &[u64]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Routes single qubits from a qlient to a qomputer through the qonnector
/// and counts heralded arrivals at emitted timesteps.
pub fn run_delegated_transmission(
    topology: &Topology,
    qlient: &str,
    qomputer: &str,
    duration_s: f64,
    seed: u64,
) -> Result<RunStats, ProtocolError> {
    check(topology, ProtocolKind::Delegated, &[qlient, qomputer], duration_s, seed)?;
    let mut w = World::new(topology, seed, duration_s);
    let src = w.add_source(topology, qlient, SourceKind::Angle)?;
    let stages = vec![
        w.link_stage(topology, qlient)?,
        w.switch_stage(topology),
        w.link_stage(topology, qomputer)?,
    ];
    let arm = w.add_detector_arm(topology, src, stages, qomputer, BasisPolicy::Herald)?;
    w.run()?;
    let emitted = &w.sources[src].emitted;
    let clicks: Vec<u64> = w
        .detector_records(arm)
        .iter()
        .filter(|r| r.is_click())
        .map(|r| r.step)
        .collect();
    let mut arrived = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < emitted.len() && j < clicks.len() {
        match emitted[i].cmp(&clicks[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                arrived.push(emitted[i]);
                i += 1;
                j += 1;
            }
        }
    }
    let src = &w.sources[src];
    Ok(w.stats(arrived, src.clock_hz, src.emitted.len() as u64, 0))
}

/// Distributes GHZ states from the qonnector to 3 to 5 qlients, each
/// measuring in the computational basis. A round is delivered when every
/// party clicks; it is in error when the outcomes are not all equal.
pub fn run_ghz_share(topology: &Topology, parties: &[&str], duration_s: f64, seed: u64) -> Result<GhzShareRun, ProtocolError> {
    check(topology, ProtocolKind::GhzShare, parties, duration_s, seed)?;
    let hub = topology.qonnector().name.clone();
    let mut w = World::new(topology, seed, duration_s);
    let src = w.add_source(topology, &hub, SourceKind::Ghz(parties.len()))?;
    let mut arms = Vec::new();
    for p in parties {
        let stage = w.link_stage(topology, p)?;
        arms.push(w.add_detector_arm(topology, src, vec![stage], p, BasisPolicy::Fixed(Basis::Z))?);
    }
    w.run()?;
    let n = parties.len();
    let mut by_step: BTreeMap<u64, Vec<Option<bool>>> = BTreeMap::new();
    for &s in &w.sources[src].emitted {
        by_step.insert(s, vec![None; n]);
    }
    for (i, &arm) in arms.iter().enumerate() {
        for r in w.detector_records(arm).iter().filter(|r| r.is_click()) {
            by_step.entry(r.step).or_insert_with(|| vec![None; n])[i] = r.outcome;
        }
    }
    let rounds: Vec<GhzRoundRecord> = by_step
        .into_iter()
        .map(|(step, outcomes)| GhzRoundRecord {
            step,
            outcomes,
            inputs: None,
        })
        .collect();
    let (_, errors) = ghz_round_counts(&rounds);
    let source = &w.sources[src];
    let delivered = rounds.iter().filter(|r| r.is_delivered()).map(|r| r.step);
    let stats = w.stats(delivered, source.clock_hz, source.emitted.len() as u64, errors as u64);
    Ok(GhzShareRun { stats, rounds })
}
