//! Quantum state representations.
//!
//! Two backends share one interface, [`QuantumBackend`]:
//!
//! - [`DenseRegister`]: an exact density operator over at most
//!   [`MAX_DENSE_QUBITS`] qubits. Channels are applied exactly and only
//!   measurements consume randomness.
//! - [`TrajectoryRegister`]: a sampled representation for protocol runs.
//!   Each qubit carries its logical payload, a Pauli error frame and the
//!   Clifford map of the gates applied so far; entangled photons reference a
//!   shared GHZ-type group that collapses as members are measured. It covers
//!   the Clifford gates and X/Z measurements used by the network protocols.

mod circuit;
mod dense;
mod pauli;
mod trajectory;

pub use circuit::{Circuit, CircuitOp, Readout};
pub use dense::{DenseRegister, DenseState};
pub use pauli::{CliffordMap, Pauli, PauliFrame, SignedPauli};
pub use trajectory::TrajectoryRegister;

use crate::engine::{BadProbability, RngStream};
use alloc::vec::Vec;

/// Largest register the dense backend accepts.
pub const MAX_DENSE_QUBITS: usize = 8;

/// Measurement / encoding basis. `Z` is the computational basis, `X` the
/// diagonal `{|+>, |->}` basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn from_bit(b: bool) -> Self {
        if b {
            Basis::X
        } else {
            Basis::Z
        }
    }

    pub(crate) fn pauli(self) -> Pauli {
        match self {
            Basis::Z => Pauli::Z,
            Basis::X => Pauli::X,
        }
    }
}

/// One of the four BB84 states: `bit` encoded in `basis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bb84Payload {
    pub bit: bool,
    pub basis: Basis,
}

impl Bb84Payload {
    pub fn new(bit: bool, basis: Basis) -> Self {
        Bb84Payload { bit, basis }
    }

    pub fn flipped(self) -> Self {
        Bb84Payload {
            bit: !self.bit,
            ..self
        }
    }
}

/// Single-qubit gates used by the protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    H,
    SqrtX,
    Z,
    X,
}

/// Bell basis labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellLabel {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [
        BellLabel::PhiPlus,
        BellLabel::PhiMinus,
        BellLabel::PsiPlus,
        BellLabel::PsiMinus,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Signs of `<XX>`, `<YY>`, `<ZZ>` for this Bell state.
    pub(crate) fn correlator_signs(self) -> [f64; 3] {
        match self {
            BellLabel::PhiPlus => [1.0, -1.0, 1.0],
            BellLabel::PhiMinus => [-1.0, 1.0, 1.0],
            BellLabel::PsiPlus => [1.0, 1.0, -1.0],
            BellLabel::PsiMinus => [-1.0, -1.0, -1.0],
        }
    }
}

/// Handle to a qubit inside a register. Stale handles (the qubit was
/// measured or discarded) are rejected with [`StateError::AlreadyMeasured`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QubitId {
    pub(crate) index: u32,
    pub(crate) generation: u32,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StateError {
    #[error(transparent)]
    BadProbability(#[from] BadProbability),
    #[error("GHZ width {0} is outside the supported range")]
    UnsupportedWidth(usize),
    #[error("qubit was already measured or discarded")]
    AlreadyMeasured,
    #[error("dense register is limited to {MAX_DENSE_QUBITS} qubits")]
    CapacityExceeded,
    #[error("the two qubits of a Bell measurement must differ")]
    SameQubit,
    #[error("operation not supported by the trajectory backend: {0}")]
    Unsupported(&'static str),
}

/// GHZ widths accepted by [`QuantumBackend::prepare_ghz`]. The largest state
/// the network creates is a 6-photon state before heralding.
pub const GHZ_WIDTHS: core::ops::RangeInclusive<usize> = 3..=6;

/// Common operations of the dense and trajectory backends.
pub trait QuantumBackend {
    fn prepare_bb84(&mut self, payload: Bb84Payload) -> Result<QubitId, StateError>;

    /// `|psi-> = (|01> - |10>)/sqrt(2)`.
    fn prepare_epr(&mut self) -> Result<[QubitId; 2], StateError>;

    /// `(|0...0> + |1...1>)/sqrt(2)` on `n` qubits, `n` in [`GHZ_WIDTHS`].
    fn prepare_ghz(&mut self, n: usize) -> Result<Vec<QubitId>, StateError>;

    /// `lambda1 * rho + (1 - lambda1) * I/2` on one qubit.
    fn depolarize(
        &mut self,
        q: QubitId,
        lambda1: f64,
        rng: &mut RngStream,
    ) -> Result<(), StateError>;

    /// `(1 - p_flip) * rho + p_flip * Z rho Z` on one qubit.
    fn dephase(&mut self, q: QubitId, p_flip: f64, rng: &mut RngStream)
        -> Result<(), StateError>;

    fn apply_gate(&mut self, q: QubitId, gate: Gate) -> Result<(), StateError>;

    /// Projective measurement; `false` is the `+1` eigenvalue (`|0>` or `|+>`).
    fn measure(
        &mut self,
        q: QubitId,
        basis: Basis,
        rng: &mut RngStream,
    ) -> Result<bool, StateError>;

    /// Projective Bell measurement of two qubits; both are consumed.
    fn bsm(
        &mut self,
        a: QubitId,
        b: QubitId,
        rng: &mut RngStream,
    ) -> Result<BellLabel, StateError>;

    /// Drops a qubit (photon loss). Remaining entangled partners are left in
    /// the reduced state.
    fn discard(&mut self, q: QubitId, rng: &mut RngStream) -> Result<(), StateError>;
}
