//! Exact density-operator backend.
//!
//! Qubit `0` is the most significant bit of a basis index, so the state of
//! `|q0 q1 ... q(n-1)>` sits at index `q0 * 2^(n-1) + ... + q(n-1)`.

use super::{
    Basis, Bb84Payload, BellLabel, Gate, QuantumBackend, QubitId, StateError, GHZ_WIDTHS,
    MAX_DENSE_QUBITS,
};
use crate::engine::{BadProbability, RngStream};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;
use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Density operator on `n <= MAX_DENSE_QUBITS` qubits, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    qubits: usize,
    rho: Vec<Complex64>,
}

impl DenseState {
    /// `|0...0><0...0|`.
    pub fn zero(qubits: usize) -> Self {
        let dim = 1usize << qubits;
        let mut rho = vec![ZERO; dim * dim];
        rho[0] = ONE;
        DenseState { qubits, rho }
    }

    /// `|psi><psi|` for a normalized amplitude vector of length `2^n`.
    pub fn from_pure(amplitudes: &[Complex64]) -> Self {
        let dim = amplitudes.len();
        assert!(dim.is_power_of_two(), "amplitude count must be a power of two");
        let qubits = dim.trailing_zeros() as usize;
        let mut rho = vec![ZERO; dim * dim];
        for (r, a) in amplitudes.iter().enumerate() {
            for (col, b) in amplitudes.iter().enumerate() {
                rho[r * dim + col] = a * b.conj();
            }
        }
        DenseState { qubits, rho }
    }

    pub fn qubit_count(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.rho[row * self.dim() + col]
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.rho
    }

    pub fn trace(&self) -> Complex64 {
        let dim = self.dim();
        (0..dim).map(|i| self.rho[i * dim + i]).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let dim = self.dim();
        (0..dim).all(|r| {
            (r..dim).all(|col| (self.rho[r * dim + col] - self.rho[col * dim + r].conj()).norm() <= tol)
        })
    }

    /// `self ⊗ other`; `self`'s qubits come first.
    pub fn tensor(&self, other: &DenseState) -> DenseState {
        let (da, db) = (self.dim(), other.dim());
        let dim = da * db;
        let mut rho = vec![ZERO; dim * dim];
        for ra in 0..da {
            for ca in 0..da {
                let a = self.rho[ra * da + ca];
                if a == ZERO {
                    continue;
                }
                for rb in 0..db {
                    for cb in 0..db {
                        rho[(ra * db + rb) * dim + ca * db + cb] = a * other.rho[rb * db + cb];
                    }
                }
            }
        }
        DenseState {
            qubits: self.qubits + other.qubits,
            rho,
        }
    }

    fn bit_of(&self, q: usize) -> usize {
        1 << (self.qubits - 1 - q)
    }

    /// Index offsets, in matrix order, of the sub-basis spanned by `targets`.
    fn offsets(&self, targets: &[usize]) -> Vec<usize> {
        let k = targets.len();
        (0..1usize << k)
            .map(|j| {
                targets.iter().enumerate().fold(0, |acc, (i, &t)| {
                    if j >> (k - 1 - i) & 1 == 1 {
                        acc | self.bit_of(t)
                    } else {
                        acc
                    }
                })
            })
            .collect()
    }

    fn target_mask(&self, targets: &[usize]) -> usize {
        targets.iter().fold(0, |acc, &t| acc | self.bit_of(t))
    }

    /// `rho <- M rho` for an operator `m` on `targets` (row-major, `2^k x 2^k`).
    fn left_mul(&mut self, targets: &[usize], m: &[Complex64]) {
        let dim = self.dim();
        let offs = self.offsets(targets);
        let mask = self.target_mask(targets);
        let k = offs.len();
        let mut buf = vec![ZERO; k];
        for col in 0..dim {
            for base in (0..dim).filter(|r| r & mask == 0) {
                for (j, o) in offs.iter().enumerate() {
                    buf[j] = self.rho[(base | o) * dim + col];
                }
                for (i, o) in offs.iter().enumerate() {
                    let row = &m[i * k..(i + 1) * k];
                    self.rho[(base | o) * dim + col] = row.iter().zip(&buf).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// `rho <- rho M†`.
    fn right_mul_adj(&mut self, targets: &[usize], m: &[Complex64]) {
        let dim = self.dim();
        let offs = self.offsets(targets);
        let mask = self.target_mask(targets);
        let k = offs.len();
        let mut buf = vec![ZERO; k];
        for r in 0..dim {
            for base in (0..dim).filter(|col| col & mask == 0) {
                for (j, o) in offs.iter().enumerate() {
                    buf[j] = self.rho[r * dim + (base | o)];
                }
                for (i, o) in offs.iter().enumerate() {
                    let row = &m[i * k..(i + 1) * k];
                    self.rho[r * dim + (base | o)] =
                        row.iter().zip(&buf).map(|(a, b)| a.conj() * b).sum();
                }
            }
        }
    }

    /// `rho <- M rho M†`.
    pub fn conjugate(&mut self, targets: &[usize], m: &[Complex64]) {
        self.left_mul(targets, m);
        self.right_mul_adj(targets, m);
    }

    /// `rho <- sum_P w_P P rho P` over `[I, X, Y, Z]` on one qubit.
    pub fn pauli_mix(&mut self, q: usize, weights: [f64; 4]) {
        let mut out: Vec<Complex64> = self.rho.iter().map(|v| v * weights[0]).collect();
        for (p, w) in [pauli_x(), pauli_y(), pauli_z()].iter().zip(&weights[1..]) {
            if *w == 0.0 {
                continue;
            }
            let mut term = self.clone();
            term.conjugate(&[q], p);
            for (o, t) in out.iter_mut().zip(&term.rho) {
                *o += t * *w;
            }
        }
        self.rho = out;
    }

    /// `tr(M rho)` for an operator on `targets`.
    pub fn expectation(&self, targets: &[usize], m: &[Complex64]) -> Complex64 {
        let mut t = self.clone();
        t.left_mul(targets, m);
        t.trace()
    }

    /// Applies the projector `|v><v|` on `targets` without renormalizing and
    /// returns the resulting probability.
    fn project_unnormalized(&mut self, targets: &[usize], v: &[Complex64]) -> f64 {
        let p = outer(v);
        self.conjugate(targets, &p);
        self.trace().re
    }

    fn scale(&mut self, s: f64) {
        for v in &mut self.rho {
            *v *= s;
        }
    }

    /// Reduced state of `keep` (in the given order).
    pub fn partial_trace(&self, keep: &[usize]) -> DenseState {
        let dim = self.dim();
        let keep_offs = self.offsets(keep);
        let keep_mask = self.target_mask(keep);
        let kd = keep_offs.len();
        let mut rho = vec![ZERO; kd * kd];
        for env in (0..dim).filter(|i| i & keep_mask == 0) {
            for (i, oi) in keep_offs.iter().enumerate() {
                for (j, oj) in keep_offs.iter().enumerate() {
                    rho[i * kd + j] += self.rho[(env | oi) * dim + (env | oj)];
                }
            }
        }
        DenseState {
            qubits: keep.len(),
            rho,
        }
    }

    /// `<psi| rho |psi>` for a pure state on all qubits.
    pub fn fidelity_with_pure(&self, psi: &[Complex64]) -> f64 {
        let dim = self.dim();
        let mut acc = ZERO;
        for r in 0..dim {
            for col in 0..dim {
                acc += psi[r].conj() * self.rho[r * dim + col] * psi[col];
            }
        }
        acc.re
    }
}

pub(crate) fn outer(v: &[Complex64]) -> Vec<Complex64> {
    let k = v.len();
    let mut m = vec![ZERO; k * k];
    for i in 0..k {
        for j in 0..k {
            m[i * k + j] = v[i] * v[j].conj();
        }
    }
    m
}

fn pauli_x() -> Vec<Complex64> {
    vec![ZERO, ONE, ONE, ZERO]
}

fn pauli_y() -> Vec<Complex64> {
    vec![ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]
}

fn pauli_z() -> Vec<Complex64> {
    vec![ONE, ZERO, ZERO, -ONE]
}

pub(crate) fn gate_matrix(gate: Gate) -> Vec<Complex64> {
    let s = FRAC_1_SQRT_2;
    match gate {
        Gate::H => vec![c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)],
        Gate::X => pauli_x(),
        Gate::Z => pauli_z(),
        Gate::SqrtX => vec![c(0.5, 0.5), c(0.5, -0.5), c(0.5, -0.5), c(0.5, 0.5)],
    }
}

/// Eigenvector of `basis` for outcome `bit`.
pub(crate) fn basis_vector(basis: Basis, bit: bool) -> [Complex64; 2] {
    let s = FRAC_1_SQRT_2;
    match (basis, bit) {
        (Basis::Z, false) => [ONE, ZERO],
        (Basis::Z, true) => [ZERO, ONE],
        (Basis::X, false) => [c(s, 0.0), c(s, 0.0)],
        (Basis::X, true) => [c(s, 0.0), c(-s, 0.0)],
    }
}

pub(crate) fn bell_vector(label: BellLabel) -> [Complex64; 4] {
    let s = c(FRAC_1_SQRT_2, 0.0);
    match label {
        BellLabel::PhiPlus => [s, ZERO, ZERO, s],
        BellLabel::PhiMinus => [s, ZERO, ZERO, -s],
        BellLabel::PsiPlus => [ZERO, s, s, ZERO],
        BellLabel::PsiMinus => [ZERO, s, -s, ZERO],
    }
}

fn ghz_vector(n: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; 1 << n];
    v[0] = c(FRAC_1_SQRT_2, 0.0);
    v[(1 << n) - 1] = c(FRAC_1_SQRT_2, 0.0);
    v
}

fn check(p: f64) -> Result<f64, StateError> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(BadProbability(p).into())
    }
}

/// A growing register of qubits held in one [`DenseState`]. Measured or
/// discarded qubits stay in the matrix (in their post-measurement state) but
/// can no longer be addressed.
#[derive(Debug, Clone)]
pub struct DenseRegister {
    state: Option<DenseState>,
    consumed: Vec<bool>,
}

impl Default for DenseRegister {
    fn default() -> Self {
        Self::new()
    }
}

/// One outcome slot of [`DenseRegister::distribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Projection {
    Single(usize, Basis),
    Bell(usize, usize),
}

impl DenseRegister {
    pub fn new() -> Self {
        DenseRegister {
            state: None,
            consumed: Vec::new(),
        }
    }

    pub fn state(&self) -> Option<&DenseState> {
        self.state.as_ref()
    }

    pub fn qubit_count(&self) -> usize {
        self.consumed.len()
    }

    /// Position of a live qubit inside the matrix.
    pub fn position(&self, q: QubitId) -> Result<usize, StateError> {
        let i = q.index as usize;
        match self.consumed.get(i) {
            Some(false) => Ok(i),
            _ => Err(StateError::AlreadyMeasured),
        }
    }

    fn append(&mut self, part: DenseState) -> Result<Vec<QubitId>, StateError> {
        let start = self.consumed.len();
        let added = part.qubit_count();
        if start + added > MAX_DENSE_QUBITS {
            return Err(StateError::CapacityExceeded);
        }
        self.state = Some(match self.state.take() {
            Some(s) => s.tensor(&part),
            None => part,
        });
        self.consumed.extend(core::iter::repeat_n(false, added));
        Ok((start..start + added)
            .map(|i| QubitId {
                index: i as u32,
                generation: 0,
            })
            .collect())
    }

    fn state_mut(&mut self) -> &mut DenseState {
        self.state.as_mut().expect("a live qubit implies a state")
    }

    /// Exact `tr(M rho)` of a single-qubit operator.
    pub fn expectation(&self, q: QubitId, m: &[Complex64]) -> Result<Complex64, StateError> {
        let i = self.position(q)?;
        Ok(self.state.as_ref().expect("live qubit").expectation(&[i], m))
    }

    /// Reduced state of the given live qubits.
    pub fn reduced(&self, qubits: &[QubitId]) -> Result<DenseState, StateError> {
        let keep = qubits
            .iter()
            .map(|&q| self.position(q))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.state.as_ref().expect("live qubit").partial_trace(&keep))
    }

    /// Exact joint distribution of a sequence of final measurements, indexed
    /// by the outcome bits concatenated in order (a Bell slot contributes two
    /// bits, its label index). Does not modify the register.
    pub(crate) fn distribution(&self, slots: &[Projection]) -> Result<Vec<f64>, StateError> {
        let Some(state) = self.state.as_ref() else {
            return Ok(vec![1.0]);
        };
        let widths: Vec<usize> = slots
            .iter()
            .map(|s| match s {
                Projection::Single(..) => 1,
                Projection::Bell(..) => 2,
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; 1 << total];
        for (outcome, slot) in out.iter_mut().enumerate() {
            let mut st = state.clone();
            let mut shift = total;
            for (s, w) in slots.iter().zip(&widths) {
                shift -= w;
                let bits = (outcome >> shift) & ((1 << w) - 1);
                match *s {
                    Projection::Single(q, basis) => {
                        st.project_unnormalized(&[q], &basis_vector(basis, bits == 1));
                    }
                    Projection::Bell(a, b) => {
                        st.project_unnormalized(&[a, b], &bell_vector(BellLabel::ALL[bits]));
                    }
                }
            }
            *slot = st.trace().re.max(0.0);
        }
        Ok(out)
    }

    fn sample_projection(
        &mut self,
        targets: &[usize],
        candidates: &[&[Complex64]],
        rng: &mut RngStream,
    ) -> usize {
        let state = self.state_mut();
        let probs: Vec<f64> = candidates
            .iter()
            .map(|v| {
                let mut t = state.clone();
                t.project_unnormalized(targets, v).max(0.0)
            })
            .collect();
        let total: f64 = probs.iter().sum();
        let u = rng.next_unit() * total;
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let p = state.project_unnormalized(targets, candidates[pick]);
        state.scale(1.0 / p);
        pick
    }
}

impl QuantumBackend for DenseRegister {
    fn prepare_bb84(&mut self, payload: Bb84Payload) -> Result<QubitId, StateError> {
        let v = basis_vector(payload.basis, payload.bit);
        Ok(self.append(DenseState::from_pure(&v))?[0])
    }

    fn prepare_epr(&mut self) -> Result<[QubitId; 2], StateError> {
        let ids = self.append(DenseState::from_pure(&bell_vector(BellLabel::PsiMinus)))?;
        Ok([ids[0], ids[1]])
    }

    fn prepare_ghz(&mut self, n: usize) -> Result<Vec<QubitId>, StateError> {
        if !GHZ_WIDTHS.contains(&n) {
            return Err(StateError::UnsupportedWidth(n));
        }
        self.append(DenseState::from_pure(&ghz_vector(n)))
    }

    fn depolarize(
        &mut self,
        q: QubitId,
        lambda1: f64,
        _rng: &mut RngStream,
    ) -> Result<(), StateError> {
        let l = check(lambda1)?;
        let i = self.position(q)?;
        if l < 1.0 {
            let w = (1.0 - l) / 4.0;
            self.state_mut().pauli_mix(i, [l + w, w, w, w]);
        }
        Ok(())
    }

    fn dephase(
        &mut self,
        q: QubitId,
        p_flip: f64,
        _rng: &mut RngStream,
    ) -> Result<(), StateError> {
        let p = check(p_flip)?;
        let i = self.position(q)?;
        if p > 0.0 {
            self.state_mut().pauli_mix(i, [1.0 - p, 0.0, 0.0, p]);
        }
        Ok(())
    }

    fn apply_gate(&mut self, q: QubitId, gate: Gate) -> Result<(), StateError> {
        let i = self.position(q)?;
        self.state_mut().conjugate(&[i], &gate_matrix(gate));
        Ok(())
    }

    fn measure(
        &mut self,
        q: QubitId,
        basis: Basis,
        rng: &mut RngStream,
    ) -> Result<bool, StateError> {
        let i = self.position(q)?;
        let v0 = basis_vector(basis, false);
        let v1 = basis_vector(basis, true);
        let pick = self.sample_projection(&[i], &[&v0, &v1], rng);
        self.consumed[i] = true;
        Ok(pick == 1)
    }

    fn bsm(
        &mut self,
        a: QubitId,
        b: QubitId,
        rng: &mut RngStream,
    ) -> Result<BellLabel, StateError> {
        let (ia, ib) = (self.position(a)?, self.position(b)?);
        if ia == ib {
            return Err(StateError::SameQubit);
        }
        let vs = BellLabel::ALL.map(bell_vector);
        let refs: Vec<&[Complex64]> = vs.iter().map(|v| v.as_slice()).collect();
        let pick = self.sample_projection(&[ia, ib], &refs, rng);
        self.consumed[ia] = true;
        self.consumed[ib] = true;
        Ok(BellLabel::ALL[pick])
    }

    fn discard(&mut self, q: QubitId, _rng: &mut RngStream) -> Result<(), StateError> {
        let i = self.position(q)?;
        self.consumed[i] = true;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RngStream {
        RngStream::new(5, 5)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    fn plus() -> [Complex64; 2] {
        basis_vector(Basis::X, false)
    }

    #[test]
    fn bb84_states_are_pure_and_correct() {
        let mut reg = DenseRegister::new();
        let q = reg.prepare_bb84(Bb84Payload::new(false, Basis::Z)).unwrap();
        let s = reg.reduced(&[q]).unwrap();
        assert!(close(s.entry(0, 0).re, 1.0));
        let mut reg = DenseRegister::new();
        let q = reg.prepare_bb84(Bb84Payload::new(true, Basis::X)).unwrap();
        let s = reg.reduced(&[q]).unwrap();
        // |-><-| = 1/2 [[1, -1], [-1, 1]]
        assert!(close(s.entry(0, 1).re, -0.5));
        assert!(close(s.entry(1, 1).re, 0.5));
    }

    #[test]
    fn bb84_round_trip() {
        let mut r = rng();
        for bit in [false, true] {
            for basis in [Basis::Z, Basis::X] {
                let mut reg = DenseRegister::new();
                let q = reg.prepare_bb84(Bb84Payload::new(bit, basis)).unwrap();
                assert_eq!(reg.measure(q, basis, &mut r).unwrap(), bit);
            }
        }
    }

    #[test]
    fn epr_correlations() {
        let mut reg = DenseRegister::new();
        let [a, b] = reg.prepare_epr().unwrap();
        let d = reg
            .distribution(&[Projection::Single(0, Basis::Z), Projection::Single(1, Basis::Z)])
            .unwrap();
        assert!(close(d[0b00], 0.0) && close(d[0b11], 0.0) && close(d[0b01], 0.5));
        let d = reg
            .distribution(&[Projection::Single(0, Basis::X), Projection::Single(1, Basis::X)])
            .unwrap();
        assert!(close(d[0b00] + d[0b11], 0.0), "{d:?}");
        // <XX> = -1 on psi-
        let xx = [ZERO, ZERO, ZERO, ONE, ZERO, ZERO, ONE, ZERO, ZERO, ONE, ZERO, ZERO, ONE, ZERO, ZERO, ZERO];
        let st = reg.state().unwrap();
        assert!(close(st.expectation(&[0, 1], &xx).re, -1.0));
        let m = reg.reduced(&[a]).unwrap();
        assert!(close(m.entry(0, 0).re, 0.5) && close(m.entry(0, 1).norm(), 0.0));
        let _ = b;
    }

    #[test]
    fn ghz_parities_and_marginals() {
        for n in 3..=6 {
            let mut reg = DenseRegister::new();
            let qs = reg.prepare_ghz(n).unwrap();
            let zs: Vec<_> = (0..n).map(|i| Projection::Single(i, Basis::Z)).collect();
            let d = reg.distribution(&zs).unwrap();
            assert!(close(d[0], 0.5) && close(d[(1 << n) - 1], 0.5));
            let xs: Vec<_> = (0..n).map(|i| Projection::Single(i, Basis::X)).collect();
            let d = reg.distribution(&xs).unwrap();
            let odd: f64 = d
                .iter()
                .enumerate()
                .filter(|(k, _)| k.count_ones() % 2 == 1)
                .map(|(_, p)| p)
                .sum();
            assert!(close(odd, 0.0));
            let m = reg.reduced(&qs[1..2]).unwrap();
            assert!(close(m.entry(0, 0).re, 0.5) && close(m.entry(1, 0).norm(), 0.0));
        }
        let mut reg = DenseRegister::new();
        assert_eq!(reg.prepare_ghz(2), Err(StateError::UnsupportedWidth(2)));
        assert_eq!(reg.prepare_ghz(7), Err(StateError::UnsupportedWidth(7)));
    }

    #[test]
    fn depolarize_cases() {
        let mut r = rng();
        let mut reg = DenseRegister::new();
        let q = reg.prepare_bb84(Bb84Payload::new(false, Basis::Z)).unwrap();
        let before = reg.state().unwrap().clone();
        reg.depolarize(q, 1.0, &mut r).unwrap();
        assert_eq!(reg.state().unwrap(), &before);
        reg.depolarize(q, 0.0, &mut r).unwrap();
        let s = reg.state().unwrap();
        assert!(close(s.entry(0, 0).re, 0.5) && close(s.entry(1, 1).re, 0.5));

        let mut reg = DenseRegister::new();
        let q = reg.prepare_bb84(Bb84Payload::new(false, Basis::X)).unwrap();
        reg.depolarize(q, 0.5, &mut r).unwrap();
        assert!(close(reg.state().unwrap().fidelity_with_pure(&plus()), 0.75));
        assert_eq!(
            reg.depolarize(q, 1.2, &mut r),
            Err(StateError::BadProbability(BadProbability(1.2)))
        );
    }

    #[test]
    fn dephase_cases() {
        let mut r = rng();
        let mut reg = DenseRegister::new();
        let q = reg.prepare_bb84(Bb84Payload::new(false, Basis::Z)).unwrap();
        let before = reg.state().unwrap().clone();
        reg.dephase(q, 0.3, &mut r).unwrap();
        assert_eq!(reg.state().unwrap(), &before);

        let mut reg = DenseRegister::new();
        let q = reg.prepare_bb84(Bb84Payload::new(false, Basis::X)).unwrap();
        reg.dephase(q, 1.0, &mut r).unwrap();
        let minus = basis_vector(Basis::X, true);
        assert!(close(reg.state().unwrap().fidelity_with_pure(&minus), 1.0));

        let mut reg = DenseRegister::new();
        reg.prepare_bb84(Bb84Payload::new(false, Basis::X)).unwrap();
        let q = QubitId { index: 0, generation: 0 };
        reg.dephase(q, 0.02, &mut r).unwrap();
        let d = reg.distribution(&[Projection::Single(0, Basis::X)]).unwrap();
        assert!(close(d[1], 0.02));
    }

    #[test]
    fn dephase_twice_composes() {
        let mut r = rng();
        let (p, q) = (0.13, 0.31);
        let mut a = DenseRegister::new();
        let qa = a.prepare_bb84(Bb84Payload::new(false, Basis::X)).unwrap();
        a.dephase(qa, p, &mut r).unwrap();
        a.dephase(qa, q, &mut r).unwrap();
        let mut b = DenseRegister::new();
        let qb = b.prepare_bb84(Bb84Payload::new(false, Basis::X)).unwrap();
        b.dephase(qb, p * (1.0 - q) + q * (1.0 - p), &mut r).unwrap();
        let (sa, sb) = (a.state().unwrap(), b.state().unwrap());
        for (x, y) in sa.matrix().iter().zip(sb.matrix()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn gates() {
        let mut r = rng();
        let mut reg = DenseRegister::new();
        let q = reg.prepare_bb84(Bb84Payload::new(false, Basis::Z)).unwrap();
        reg.apply_gate(q, Gate::H).unwrap();
        assert!(close(reg.state().unwrap().fidelity_with_pure(&plus()), 1.0));
        reg.apply_gate(q, Gate::Z).unwrap();
        let minus = basis_vector(Basis::X, true);
        assert!(close(reg.state().unwrap().fidelity_with_pure(&minus), 1.0));
        assert!(reg.measure(q, Basis::X, &mut r).unwrap());
        assert_eq!(reg.measure(q, Basis::X, &mut r), Err(StateError::AlreadyMeasured));
    }

    #[test]
    fn sqrt_x_squared_is_x() {
        let s = gate_matrix(Gate::SqrtX);
        let mut prod = [ZERO; 4];
        for i in 0..2 {
            for j in 0..2 {
                prod[i * 2 + j] = (0..2).map(|k| s[i * 2 + k] * s[k * 2 + j]).sum();
            }
        }
        for (a, b) in prod.iter().zip(pauli_x()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn measurement_of_plus_in_z_is_uniform() {
        let mut reg = DenseRegister::new();
        reg.prepare_bb84(Bb84Payload::new(false, Basis::X)).unwrap();
        let d = reg.distribution(&[Projection::Single(0, Basis::Z)]).unwrap();
        assert!(close(d[0], 0.5) && close(d[1], 0.5));
        let mut reg = DenseRegister::new();
        reg.prepare_bb84(Bb84Payload::new(true, Basis::Z)).unwrap();
        let d = reg.distribution(&[Projection::Single(0, Basis::Z)]).unwrap();
        assert!(close(d[1], 1.0));
    }

    #[test]
    fn ghz4_with_z_error_has_odd_x_parity() {
        let mut r = rng();
        let mut reg = DenseRegister::new();
        let qs = reg.prepare_ghz(4).unwrap();
        reg.dephase(qs[2], 1.0, &mut r).unwrap();
        let xs: Vec<_> = (0..4).map(|i| Projection::Single(i, Basis::X)).collect();
        let d = reg.distribution(&xs).unwrap();
        let even: f64 = d
            .iter()
            .enumerate()
            .filter(|(k, _)| k.count_ones() % 2 == 0)
            .map(|(_, p)| p)
            .sum();
        assert!(close(even, 0.0));
    }

    #[test]
    fn bell_measurements() {
        let mut r = rng();
        let mut reg = DenseRegister::new();
        let [a, b] = reg.prepare_epr().unwrap();
        assert_eq!(reg.bsm(a, b, &mut r).unwrap(), BellLabel::PsiMinus);

        let mut reg = DenseRegister::new();
        reg.prepare_bb84(Bb84Payload::new(false, Basis::Z)).unwrap();
        reg.prepare_bb84(Bb84Payload::new(false, Basis::Z)).unwrap();
        let d = reg.distribution(&[Projection::Bell(0, 1)]).unwrap();
        assert!(close(d[0], 0.5) && close(d[1], 0.5) && close(d[2], 0.0) && close(d[3], 0.0));

        let mut reg = DenseRegister::new();
        reg.prepare_bb84(Bb84Payload::new(false, Basis::Z)).unwrap();
        reg.prepare_bb84(Bb84Payload::new(false, Basis::X)).unwrap();
        let d = reg.distribution(&[Projection::Bell(0, 1)]).unwrap();
        assert!(d.iter().all(|p| close(*p, 0.25)));

        let mut reg = DenseRegister::new();
        let a = reg.prepare_bb84(Bb84Payload::new(false, Basis::Z)).unwrap();
        assert_eq!(reg.bsm(a, a, &mut r), Err(StateError::SameQubit));
    }

    #[test]
    fn capacity_is_enforced() {
        let mut reg = DenseRegister::new();
        reg.prepare_ghz(6).unwrap();
        reg.prepare_epr().unwrap();
        assert_eq!(reg.prepare_epr(), Err(StateError::CapacityExceeded));
        assert_eq!(reg.qubit_count(), 8);
    }
}
