//! Single-qubit Pauli bookkeeping for the trajectory backend.

use super::Gate;
use core::ops::{BitXor, BitXorAssign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::I => (false, false),
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Pauli::I,
            (true, false) => Pauli::X,
            (true, true) => Pauli::Y,
            (false, true) => Pauli::Z,
        }
    }

    pub fn commutes_with(self, other: Pauli) -> bool {
        let (ax, az) = self.bits();
        let (bx, bz) = other.bits();
        !((ax & bz) ^ (az & bx))
    }
}

/// Accumulated X/Z errors on a qubit; composition is XOR-wise (global phase
/// is irrelevant for a frame).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PauliFrame {
    pub x_flip: bool,
    pub z_flip: bool,
}

impl PauliFrame {
    pub const IDENTITY: PauliFrame = PauliFrame {
        x_flip: false,
        z_flip: false,
    };

    pub fn from_pauli(p: Pauli) -> Self {
        let (x_flip, z_flip) = p.bits();
        PauliFrame { x_flip, z_flip }
    }

    pub fn pauli(self) -> Pauli {
        Pauli::from_bits(self.x_flip, self.z_flip)
    }

    /// Whether this error flips the outcome of measuring `observable`.
    pub fn flips(self, observable: Pauli) -> bool {
        !self.pauli().commutes_with(observable)
    }
}

impl BitXor for PauliFrame {
    type Output = PauliFrame;

    fn bitxor(self, rhs: PauliFrame) -> PauliFrame {
        PauliFrame {
            x_flip: self.x_flip ^ rhs.x_flip,
            z_flip: self.z_flip ^ rhs.z_flip,
        }
    }
}

impl BitXorAssign for PauliFrame {
    fn bitxor_assign(&mut self, rhs: PauliFrame) {
        *self = *self ^ rhs;
    }
}

/// A Pauli operator with a sign, `-P` when `negative`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedPauli {
    pub negative: bool,
    pub pauli: Pauli,
}

impl SignedPauli {
    const fn pos(pauli: Pauli) -> Self {
        SignedPauli {
            negative: false,
            pauli,
        }
    }

    const fn neg(pauli: Pauli) -> Self {
        SignedPauli {
            negative: true,
            pauli,
        }
    }

    pub fn sign(self) -> f64 {
        if self.negative {
            -1.0
        } else {
            1.0
        }
    }

    fn negate_if(self, flag: bool) -> Self {
        SignedPauli {
            negative: self.negative ^ flag,
            pauli: self.pauli,
        }
    }
}

/// Heisenberg-picture action `P -> U† P U` of the gates applied to a qubit.
///
/// Measuring `P` after the gates equals measuring `map(P)` before them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CliffordMap {
    x_image: SignedPauli,
    z_image: SignedPauli,
}

impl Default for CliffordMap {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl CliffordMap {
    pub const IDENTITY: CliffordMap = CliffordMap {
        x_image: SignedPauli::pos(Pauli::X),
        z_image: SignedPauli::pos(Pauli::Z),
    };

    pub fn of_gate(gate: Gate) -> Self {
        let (x_image, z_image) = match gate {
            Gate::H => (SignedPauli::pos(Pauli::Z), SignedPauli::pos(Pauli::X)),
            Gate::X => (SignedPauli::pos(Pauli::X), SignedPauli::neg(Pauli::Z)),
            Gate::Z => (SignedPauli::neg(Pauli::X), SignedPauli::pos(Pauli::Z)),
            // sqrt(X)† Z sqrt(X) = Y
            Gate::SqrtX => (SignedPauli::pos(Pauli::X), SignedPauli::pos(Pauli::Y)),
        };
        CliffordMap { x_image, z_image }
    }

    /// Image of a Pauli. `Y = iXZ`, so its image is `i * map(X) * map(Z)`.
    pub fn image(&self, p: Pauli) -> SignedPauli {
        match p {
            Pauli::I => SignedPauli::pos(Pauli::I),
            Pauli::X => self.x_image,
            Pauli::Z => self.z_image,
            Pauli::Y => {
                let (a, b) = (self.x_image, self.z_image);
                // i * A * B = i * (i * eps * C) = -eps * C for distinct A, B.
                let (third, eps) = product_axis(a.pauli, b.pauli);
                SignedPauli {
                    negative: a.negative ^ b.negative ^ (eps > 0),
                    pauli: third,
                }
            }
        }
    }

    /// The map after additionally applying `gate` (the gate acts last).
    pub fn then(self, gate: Gate) -> Self {
        let g = Self::of_gate(gate);
        let lift = |sp: SignedPauli| self.image(sp.pauli).negate_if(sp.negative);
        CliffordMap {
            x_image: lift(g.x_image),
            z_image: lift(g.z_image),
        }
    }
}

/// For distinct non-identity Paulis `A != B`, `A * B = i * eps * C`.
fn product_axis(a: Pauli, b: Pauli) -> (Pauli, i8) {
    use Pauli::*;
    match (a, b) {
        (X, Y) => (Z, 1),
        (Y, Z) => (X, 1),
        (Z, X) => (Y, 1),
        (Y, X) => (Z, -1),
        (Z, Y) => (X, -1),
        (X, Z) => (Y, -1),
        _ => unreachable!("images of X and Z under a Clifford are distinct Paulis"),
    }
}
