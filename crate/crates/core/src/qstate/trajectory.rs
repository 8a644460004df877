//! Sampled state representation for long protocol runs.
//!
//! A qubit's pre-gate state is either a Bloch vector or membership in a
//! group `(|0..0> + e^{i phase}|1..1>)/sqrt(2)`. The physical state is
//! `U F rho F U†`, where `F` is the qubit's [`PauliFrame`] and `U` the gates
//! recorded in its [`CliffordMap`]. Measuring `O` after the gates is measuring
//! `U† O U` on `F rho F`, which only needs the pre-gate state.

use super::{
    Basis, Bb84Payload, BellLabel, CliffordMap, Gate, Pauli, PauliFrame, QuantumBackend, QubitId,
    StateError, GHZ_WIDTHS,
};
use crate::engine::{check_probability, RngStream};
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Local {
    Single([f64; 3]),
    Member(u32),
}

#[derive(Debug, Clone, Copy)]
struct Qubit {
    local: Local,
    frame: PauliFrame,
    map: CliffordMap,
}

#[derive(Debug, Clone)]
struct Slot {
    generation: u32,
    qubit: Option<Qubit>,
}

#[derive(Debug, Clone)]
struct Group {
    members: Vec<u32>,
    /// Relative phase in quarter turns, mod 4.
    quarter_turns: u8,
}

fn axis(p: Pauli) -> usize {
    match p {
        Pauli::X => 0,
        Pauli::Y => 1,
        Pauli::Z => 2,
        Pauli::I => unreachable!("identity has no Bloch axis"),
    }
}

fn pauli_from_index(i: u32) -> Pauli {
    [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z][i as usize]
}

/// Register of sampled qubits with slot reuse.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryRegister {
    slots: Vec<Slot>,
    free: Vec<u32>,
    groups: Vec<Option<Group>>,
    free_groups: Vec<u32>,
    live: usize,
}

impl TrajectoryRegister {
    pub fn new() -> Self {
        Self::default()
    }

    /// Qubits that are prepared and not yet consumed.
    pub fn live_count(&self) -> usize {
        self.live
    }

    pub fn is_live(&self, q: QubitId) -> bool {
        self.get(q).is_ok()
    }

    /// The accumulated error frame, in pre-gate coordinates.
    pub fn frame(&self, q: QubitId) -> Result<PauliFrame, StateError> {
        Ok(self.get(q)?.frame)
    }

    /// Applies the Pauli `p` to the qubit as it is now (after its gates).
    pub fn apply_pauli(&mut self, q: QubitId, p: Pauli) -> Result<(), StateError> {
        let qb = self.get_mut(q)?;
        if p != Pauli::I {
            qb.frame ^= PauliFrame::from_pauli(qb.map.image(p).pauli);
        }
        Ok(())
    }

    fn get(&self, q: QubitId) -> Result<&Qubit, StateError> {
        match self.slots.get(q.index as usize) {
            Some(Slot {
                generation,
                qubit: Some(qb),
            }) if *generation == q.generation => Ok(qb),
            _ => Err(StateError::AlreadyMeasured),
        }
    }

    fn get_mut(&mut self, q: QubitId) -> Result<&mut Qubit, StateError> {
        match self.slots.get_mut(q.index as usize) {
            Some(Slot {
                generation,
                qubit: Some(qb),
            }) if *generation == q.generation => Ok(qb),
            _ => Err(StateError::AlreadyMeasured),
        }
    }

    fn alloc(&mut self, qubit: Qubit) -> QubitId {
        self.live += 1;
        if let Some(index) = self.free.pop() {
            let slot = &mut self.slots[index as usize];
            slot.qubit = Some(qubit);
            QubitId {
                index,
                generation: slot.generation,
            }
        } else {
            self.slots.push(Slot {
                generation: 0,
                qubit: Some(qubit),
            });
            QubitId {
                index: (self.slots.len() - 1) as u32,
                generation: 0,
            }
        }
    }

    fn release(&mut self, index: u32) {
        let slot = &mut self.slots[index as usize];
        slot.qubit = None;
        slot.generation = slot.generation.wrapping_add(1);
        self.free.push(index);
        self.live -= 1;
    }

    fn new_group(&mut self, n: usize, quarter_turns: u8) -> Vec<QubitId> {
        let gid = match self.free_groups.pop() {
            Some(g) => g,
            None => {
                self.groups.push(None);
                (self.groups.len() - 1) as u32
            }
        };
        let ids: Vec<QubitId> = (0..n)
            .map(|_| {
                self.alloc(Qubit {
                    local: Local::Member(gid),
                    frame: PauliFrame::IDENTITY,
                    map: CliffordMap::IDENTITY,
                })
            })
            .collect();
        self.groups[gid as usize] = Some(Group {
            members: ids.iter().map(|q| q.index).collect(),
            quarter_turns,
        });
        ids
    }

    fn group(&self, gid: u32) -> &Group {
        self.groups[gid as usize]
            .as_ref()
            .expect("member of a dissolved group")
    }

    fn group_mut(&mut self, gid: u32) -> &mut Group {
        self.groups[gid as usize]
            .as_mut()
            .expect("member of a dissolved group")
    }

    fn dissolve(&mut self, gid: u32) {
        self.groups[gid as usize] = None;
        self.free_groups.push(gid);
    }

    fn set_single(&mut self, index: u32, bloch: [f64; 3]) {
        if let Some(qb) = self.slots[index as usize].qubit.as_mut() {
            qb.local = Local::Single(bloch);
        }
    }

    /// Measures the pre-gate observable `p` on the qubit at slot `index`,
    /// returning the eigenvalue sign `+1`/`-1` of the pre-gate state (no frame
    /// correction) and consuming the qubit.
    fn measure_pre_gate(&mut self, index: u32, p: Pauli, rng: &mut RngStream) -> i8 {
        let qb = self.slots[index as usize].qubit.expect("live qubit");
        let lambda = match qb.local {
            Local::Single(r) => {
                let p_plus = ((1.0 + r[axis(p)]) / 2.0).clamp(0.0, 1.0);
                if rng.next_unit() < p_plus {
                    1
                } else {
                    -1
                }
            }
            Local::Member(gid) => {
                let lambda: i8 = if rng.coin() { -1 } else { 1 };
                self.collapse_group(gid, index, p, lambda);
                lambda
            }
        };
        self.release(index);
        lambda
    }

    fn collapse_group(&mut self, gid: u32, measured: u32, p: Pauli, lambda: i8) {
        let group = self.group_mut(gid);
        group.members.retain(|&m| m != measured);
        match p {
            Pauli::Z => {
                let others = core::mem::take(&mut group.members);
                for m in others {
                    self.set_single(m, [0.0, 0.0, f64::from(lambda)]);
                }
                self.dissolve(gid);
                return;
            }
            Pauli::X => {
                if lambda < 0 {
                    group.quarter_turns = (group.quarter_turns + 2) % 4;
                }
            }
            Pauli::Y => {
                group.quarter_turns = if lambda > 0 {
                    (group.quarter_turns + 3) % 4
                } else {
                    (group.quarter_turns + 1) % 4
                };
            }
            Pauli::I => unreachable!("measurement of the identity"),
        }
        if group.members.len() == 1 {
            let survivor = group.members[0];
            let bloch = match group.quarter_turns {
                0 => [1.0, 0.0, 0.0],
                1 => [0.0, 1.0, 0.0],
                2 => [-1.0, 0.0, 0.0],
                _ => [0.0, -1.0, 0.0],
            };
            self.set_single(survivor, bloch);
            self.dissolve(gid);
        }
    }

    /// Sign relating the physical observable `o` to its pre-gate image,
    /// including the frame, and that image.
    fn pre_image(qb: &Qubit, o: Pauli) -> (i8, Pauli) {
        let img = qb.map.image(o);
        let mut sign: i8 = if img.negative { -1 } else { 1 };
        if qb.frame.flips(img.pauli) {
            sign = -sign;
        }
        (sign, img.pauli)
    }

    /// Pre-gate `<P_a P_b>` for two qubits that are either independent
    /// singles or the two members of one group.
    fn pre_correlator(&self, a: &Qubit, pa: Pauli, b: &Qubit, pb: Pauli) -> f64 {
        match (a.local, b.local) {
            (Local::Single(ra), Local::Single(rb)) => ra[axis(pa)] * rb[axis(pb)],
            (Local::Member(gid), Local::Member(_)) => {
                let t = i32::from(self.group(gid).quarter_turns);
                match (pa, pb) {
                    (Pauli::Z, Pauli::Z) => 1.0,
                    (Pauli::Z, _) | (_, Pauli::Z) => 0.0,
                    _ => {
                        let ys = i32::from(pa == Pauli::Y) + i32::from(pb == Pauli::Y);
                        match (ys - t).rem_euclid(4) {
                            0 => 1.0,
                            2 => -1.0,
                            _ => 0.0,
                        }
                    }
                }
            }
            _ => unreachable!("checked by the caller"),
        }
    }
}

impl QuantumBackend for TrajectoryRegister {
    fn prepare_bb84(&mut self, payload: Bb84Payload) -> Result<QubitId, StateError> {
        let s = if payload.bit { -1.0 } else { 1.0 };
        let bloch = match payload.basis {
            Basis::Z => [0.0, 0.0, s],
            Basis::X => [s, 0.0, 0.0],
        };
        Ok(self.alloc(Qubit {
            local: Local::Single(bloch),
            frame: PauliFrame::IDENTITY,
            map: CliffordMap::IDENTITY,
        }))
    }

    fn prepare_epr(&mut self) -> Result<[QubitId; 2], StateError> {
        // X_b (|00> - |11>)/sqrt(2) = (|01> - |10>)/sqrt(2)
        let ids = self.new_group(2, 2);
        self.get_mut(ids[1])?.map = CliffordMap::of_gate(Gate::X);
        Ok([ids[0], ids[1]])
    }

    fn prepare_ghz(&mut self, n: usize) -> Result<Vec<QubitId>, StateError> {
        if !GHZ_WIDTHS.contains(&n) {
            return Err(StateError::UnsupportedWidth(n));
        }
        Ok(self.new_group(n, 0))
    }

    fn depolarize(
        &mut self,
        q: QubitId,
        lambda1: f64,
        rng: &mut RngStream,
    ) -> Result<(), StateError> {
        let l = check_probability(lambda1)?;
        self.get(q)?;
        if rng.bernoulli(1.0 - l)? {
            let p = pauli_from_index(rng.below(4));
            self.apply_pauli(q, p)?;
        }
        Ok(())
    }

    fn dephase(
        &mut self,
        q: QubitId,
        p_flip: f64,
        rng: &mut RngStream,
    ) -> Result<(), StateError> {
        let p = check_probability(p_flip)?;
        self.get(q)?;
        if rng.bernoulli(p)? {
            self.apply_pauli(q, Pauli::Z)?;
        }
        Ok(())
    }

    fn apply_gate(&mut self, q: QubitId, gate: Gate) -> Result<(), StateError> {
        let qb = self.get_mut(q)?;
        qb.map = qb.map.then(gate);
        Ok(())
    }

    fn measure(
        &mut self,
        q: QubitId,
        basis: Basis,
        rng: &mut RngStream,
    ) -> Result<bool, StateError> {
        let qb = *self.get(q)?;
        let (sign, pre) = Self::pre_image(&qb, basis.pauli());
        let lambda = self.measure_pre_gate(q.index, pre, rng);
        Ok(sign * lambda < 0)
    }

    fn bsm(
        &mut self,
        a: QubitId,
        b: QubitId,
        rng: &mut RngStream,
    ) -> Result<BellLabel, StateError> {
        let qa = *self.get(a)?;
        let qb = *self.get(b)?;
        if a == b {
            return Err(StateError::SameQubit);
        }
        let supported = match (qa.local, qb.local) {
            (Local::Single(_), Local::Single(_)) => true,
            (Local::Member(ga), Local::Member(gb)) => {
                ga == gb && self.group(ga).members.len() == 2
            }
            _ => false,
        };
        if !supported {
            return Err(StateError::Unsupported(
                "Bell measurement on part of a larger entangled state",
            ));
        }
        let correlators = [Pauli::X, Pauli::Y, Pauli::Z].map(|o| {
            let (sa, pa) = Self::pre_image(&qa, o);
            let (sb, pb) = Self::pre_image(&qb, o);
            f64::from(sa * sb) * self.pre_correlator(&qa, pa, &qb, pb)
        });
        let probs = BellLabel::ALL.map(|label| {
            let s = label.correlator_signs();
            ((1.0 + s[0] * correlators[0] + s[1] * correlators[1] + s[2] * correlators[2]) / 4.0)
                .max(0.0)
        });
        let total: f64 = probs.iter().sum();
        let u = rng.next_unit() * total;
        let mut acc = 0.0;
        let mut pick = BellLabel::PsiMinus;
        for (label, p) in BellLabel::ALL.iter().zip(probs) {
            acc += p;
            if u < acc {
                pick = *label;
                break;
            }
        }
        if let Local::Member(gid) = qa.local {
            self.dissolve(gid);
        }
        self.release(a.index);
        self.release(b.index);
        Ok(pick)
    }

    fn discard(&mut self, q: QubitId, rng: &mut RngStream) -> Result<(), StateError> {
        let qb = *self.get(q)?;
        match qb.local {
            Local::Single(_) => self.release(q.index),
            Local::Member(_) => {
                self.measure_pre_gate(q.index, Pauli::Z, rng);
            }
        }
        Ok(())
    }
}
