//! Small fixed circuits that run on either backend, used to compare their
//! outcome statistics.

use super::dense::Projection;
use super::{Bb84Payload, DenseRegister, Gate, QuantumBackend, QubitId, StateError};
use crate::engine::RngStream;
use alloc::vec::Vec;

/// Qubits are referred to by preparation order: the first prepared qubit is
/// `0`, an EPR pair occupies the next two indices, and so on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CircuitOp {
    PrepareBb84(Bb84Payload),
    PrepareEpr,
    PrepareGhz(usize),
    Depolarize(usize, f64),
    Dephase(usize, f64),
    Gate(usize, Gate),
}

/// Final measurement of one qubit or a Bell measurement of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    Single(usize, super::Basis),
    Bell(usize, usize),
}

impl Readout {
    fn width(self) -> usize {
        match self {
            Readout::Single(..) => 1,
            Readout::Bell(..) => 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Circuit {
    pub ops: Vec<CircuitOp>,
    pub readouts: Vec<Readout>,
}

impl Circuit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn op(mut self, op: CircuitOp) -> Self {
        self.ops.push(op);
        self
    }

    pub fn readout(mut self, r: Readout) -> Self {
        self.readouts.push(r);
        self
    }

    /// Number of distinct outcomes; outcome words concatenate the readouts in
    /// order, with a Bell readout contributing its two-bit label index.
    pub fn outcome_count(&self) -> usize {
        1 << self.readouts.iter().map(|r| r.width()).sum::<usize>()
    }

    fn build<B: QuantumBackend>(
        &self,
        backend: &mut B,
        rng: &mut RngStream,
    ) -> Result<Vec<QubitId>, StateError> {
        let mut qubits = Vec::new();
        for op in &self.ops {
            match *op {
                CircuitOp::PrepareBb84(p) => qubits.push(backend.prepare_bb84(p)?),
                CircuitOp::PrepareEpr => qubits.extend(backend.prepare_epr()?),
                CircuitOp::PrepareGhz(n) => qubits.extend(backend.prepare_ghz(n)?),
                CircuitOp::Depolarize(q, l) => backend.depolarize(qubits[q], l, rng)?,
                CircuitOp::Dephase(q, p) => backend.dephase(qubits[q], p, rng)?,
                CircuitOp::Gate(q, g) => backend.apply_gate(qubits[q], g)?,
            }
        }
        Ok(qubits)
    }

    /// Exact outcome distribution from the dense backend.
    pub fn exact_distribution(&self) -> Result<Vec<f64>, StateError> {
        let mut reg = DenseRegister::new();
        // Dense channels are exact and draw nothing.
        let mut unused = RngStream::new(0, 0);
        let qubits = self.build(&mut reg, &mut unused)?;
        let slots: Vec<Projection> = self
            .readouts
            .iter()
            .map(|r| match *r {
                Readout::Single(q, b) => reg.position(qubits[q]).map(|i| Projection::Single(i, b)),
                Readout::Bell(a, b) => Ok(Projection::Bell(
                    reg.position(qubits[a])?,
                    reg.position(qubits[b])?,
                )),
            })
            .collect::<Result<_, _>>()?;
        reg.distribution(&slots)
    }

    /// One sampled outcome word on `backend`.
    pub fn sample<B: QuantumBackend>(
        &self,
        backend: &mut B,
        rng: &mut RngStream,
    ) -> Result<usize, StateError> {
        let qubits = self.build(backend, rng)?;
        let mut word = 0usize;
        for r in &self.readouts {
            match *r {
                Readout::Single(q, b) => {
                    word = word << 1 | usize::from(backend.measure(qubits[q], b, rng)?);
                }
                Readout::Bell(a, b) => {
                    word = word << 2 | backend.bsm(qubits[a], qubits[b], rng)?.index();
                }
            }
        }
        Ok(word)
    }
}
