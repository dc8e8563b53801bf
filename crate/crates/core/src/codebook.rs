//! Codeword construction and OFDM grid placement.
//!
//! Rows of a codeword are subcarrier slots and columns are transmit antennas.
//! The 8×4 sum/difference codeword stacks two 4×4 quasi-orthogonal blocks,
//! the first built from `x_p + x̃_{p+4}` and the second from `x_p − x̃_{p+4}`.

use num_complex::Complex;

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::{czero, Real};

/// Which codeword template a matrix was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodeKind {
    /// 4×4 quasi-orthogonal block of four symbols.
    Qostbc4,
    /// 8×4 sum/difference stack of two quasi-orthogonal blocks, eight symbols.
    Qostftc8,
    /// 4×2 sum/difference stack of two Alamouti blocks, four symbols
    /// (two-antenna comparison code).
    AlamoutiSd,
}

impl CodeKind {
    pub const ALL: [CodeKind; 3] = [CodeKind::Qostbc4, CodeKind::Qostftc8, CodeKind::AlamoutiSd];

    /// Stable identifier used in text formats.
    pub fn name(self) -> &'static str {
        match self {
            CodeKind::Qostbc4 => "qostbc4",
            CodeKind::Qostftc8 => "qostftc8",
            CodeKind::AlamoutiSd => "alamouti-sd",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn rows(self) -> usize {
        match self {
            CodeKind::Qostbc4 | CodeKind::AlamoutiSd => 4,
            CodeKind::Qostftc8 => 8,
        }
    }

    pub fn tx_antennas(self) -> usize {
        match self {
            CodeKind::Qostbc4 | CodeKind::Qostftc8 => 4,
            CodeKind::AlamoutiSd => 2,
        }
    }

    pub fn symbols(self) -> usize {
        match self {
            CodeKind::Qostbc4 | CodeKind::AlamoutiSd => 4,
            CodeKind::Qostftc8 => 8,
        }
    }

    /// Rows sharing one inner block (the channel is treated as constant over
    /// these when deriving the decoupling pattern).
    pub fn inner_block_rows(self) -> usize {
        match self {
            CodeKind::Qostbc4 | CodeKind::Qostftc8 => 4,
            CodeKind::AlamoutiSd => 2,
        }
    }

    /// `(x_p, x̃_{p+h})` symbol position pairs of the sum/difference
    /// structure; each symbol alone for the plain block.
    pub fn symbol_pairs(self) -> Vec<Vec<usize>> {
        match self {
            CodeKind::Qostbc4 => (0..4).map(|p| vec![p]).collect(),
            CodeKind::Qostftc8 => (0..4).map(|p| vec![p, p + 4]).collect(),
            CodeKind::AlamoutiSd => (0..2).map(|p| vec![p, p + 2]).collect(),
        }
    }

    /// Builds the template matrix from a symbol tuple.
    pub fn build<T: Real>(self, symbols: &[Complex<T>]) -> StfCodeword<T> {
        assert_eq!(symbols.len(), self.symbols(), "symbol tuple length for {self:?}");
        match self {
            CodeKind::Qostbc4 => qostbc4([symbols[0], symbols[1], symbols[2], symbols[3]]),
            CodeKind::Qostftc8 => qostftc8(
                [symbols[0], symbols[1], symbols[2], symbols[3]],
                [symbols[4], symbols[5], symbols[6], symbols[7]],
            ),
            CodeKind::AlamoutiSd => {
                alamouti_sd([symbols[0], symbols[1]], [symbols[2], symbols[3]])
            }
        }
    }

    /// Factor applied on top of the template so that a codeword of
    /// unit-modulus symbols carries unit energy per row (per subcarrier).
    pub fn power_scale<T: Real>(self) -> T {
        match self {
            // ‖Q(c)‖² = 4·Σ|c|² = 16 over 4 rows
            CodeKind::Qostbc4 => T::lit(0.5),
            // (1/4)·Σ_p 4·(|x+x̃|² + |x−x̃|²) = 16 over 8 rows
            CodeKind::Qostftc8 => T::FRAC_1_SQRT_2(),
            // (1/2)·Σ_p 2·(|x+x̃|² + |x−x̃|²) = 8 over 4 rows
            CodeKind::AlamoutiSd => T::FRAC_1_SQRT_2(),
        }
    }

    /// Linear model of the template: every entry is
    /// `Σ_k a_k z_k + b_k z_k*`. Recovered by probing the template with unit
    /// and imaginary-unit symbol vectors.
    pub fn dispersion<T: Real>(self) -> Dispersion<T> {
        let n = self.symbols();
        let rows = self.rows();
        let cols = self.tx_antennas();
        let zero = vec![czero::<T>(); n];
        let mut lin = vec![vec![czero::<T>(); n]; rows * cols];
        let mut anti = vec![vec![czero::<T>(); n]; rows * cols];
        let half = T::lit(0.5);
        let i = Complex::new(T::zero(), T::one());
        for k in 0..n {
            let mut e = zero.clone();
            e[k] = Complex::new(T::one(), T::zero());
            let re = self.build(&e).matrix;
            e[k] = i;
            let im = self.build(&e).matrix;
            for r in 0..rows {
                for c in 0..cols {
                    // f(1) = a + b, f(i) = i(a − b)
                    let s = re[(r, c)];
                    let d = im[(r, c)] * (-i);
                    lin[r * cols + c][k] = (s + d) * half;
                    anti[r * cols + c][k] = (s - d) * half;
                }
            }
        }
        Dispersion {
            kind: self,
            rows,
            cols,
            symbols: n,
            lin,
            anti,
        }
    }
}

/// Entry-wise linear/antilinear decomposition of a codeword template.
#[derive(Clone, Debug)]
pub struct Dispersion<T> {
    pub kind: CodeKind,
    pub rows: usize,
    pub cols: usize,
    pub symbols: usize,
    lin: Vec<Vec<Complex<T>>>,
    anti: Vec<Vec<Complex<T>>>,
}

impl<T: Real> Dispersion<T> {
    /// Coefficient of `z_k` in entry `(r, c)`.
    pub fn linear(&self, r: usize, c: usize, k: usize) -> Complex<T> {
        self.lin[r * self.cols + c][k]
    }

    /// Coefficient of `z_k*` in entry `(r, c)`.
    pub fn antilinear(&self, r: usize, c: usize, k: usize) -> Complex<T> {
        self.anti[r * self.cols + c][k]
    }

    /// `Some(true)` if row `r` only involves conjugated symbols,
    /// `Some(false)` if only plain ones, `None` if mixed.
    pub fn row_conjugated(&self, r: usize) -> Option<bool> {
        let tiny = T::lit(1e-12);
        let mut has_lin = false;
        let mut has_anti = false;
        for c in 0..self.cols {
            for k in 0..self.symbols {
                has_lin |= self.linear(r, c, k).norm() > tiny;
                has_anti |= self.antilinear(r, c, k).norm() > tiny;
            }
        }
        match (has_lin, has_anti) {
            (true, true) => None,
            (_, anti) => Some(anti),
        }
    }

    /// Evaluates the model; must agree with [`CodeKind::build`].
    pub fn evaluate(&self, z: &[Complex<T>]) -> CMatrix<T> {
        CMatrix::from_fn(self.rows, self.cols, |r, c| {
            (0..self.symbols).fold(czero(), |acc, k| {
                acc + self.linear(r, c, k) * z[k] + self.antilinear(r, c, k) * z[k].conj()
            })
        })
    }
}

/// A codeword matrix together with the symbols that generated it.
#[derive(Clone, Debug, PartialEq)]
pub struct StfCodeword<T> {
    pub kind: CodeKind,
    /// Template matrix including its printed prefactor.
    pub matrix: CMatrix<T>,
    pub symbols: Vec<Complex<T>>,
    /// Prefactor already applied to `matrix`.
    pub scale: T,
}

impl<T: Real> StfCodeword<T> {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    /// Matrix as transmitted: unit average energy per subcarrier.
    pub fn transmit_matrix(&self) -> CMatrix<T> {
        self.matrix.scale(self.kind.power_scale())
    }
}

fn quasi_orthogonal_rows<T: Real>(c: [Complex<T>; 4]) -> [[Complex<T>; 4]; 4] {
    let [c1, c2, c3, c4] = c;
    [
        [c1, c2, c3, c4],
        [-c2.conj(), c1.conj(), -c4.conj(), c3.conj()],
        [-c3.conj(), -c4.conj(), c1.conj(), c2.conj()],
        [c4, -c3, -c2, c1],
    ]
}

/// The 4×4 quasi-orthogonal block, unscaled.
pub fn qostbc4<T: Real>(c: [Complex<T>; 4]) -> StfCodeword<T> {
    StfCodeword {
        kind: CodeKind::Qostbc4,
        matrix: CMatrix::from_rows(&quasi_orthogonal_rows(c)),
        symbols: c.to_vec(),
        scale: T::one(),
    }
}

/// The 8×4 codeword: `(1/√4)·[Q(x + x̃); Q(x − x̃)]`.
pub fn qostftc8<T: Real>(x: [Complex<T>; 4], xt: [Complex<T>; 4]) -> StfCodeword<T> {
    let scale = T::lit(0.5);
    let sum: [Complex<T>; 4] = std::array::from_fn(|p| x[p] + xt[p]);
    let diff: [Complex<T>; 4] = std::array::from_fn(|p| x[p] - xt[p]);
    let top = quasi_orthogonal_rows(sum);
    let bottom = quasi_orthogonal_rows(diff);
    let rows: Vec<[Complex<T>; 4]> = top
        .iter()
        .chain(bottom.iter())
        .map(|r| r.map(|z| z * scale))
        .collect();
    let mut symbols = x.to_vec();
    symbols.extend_from_slice(&xt);
    StfCodeword {
        kind: CodeKind::Qostftc8,
        matrix: CMatrix::from_rows(&rows),
        symbols,
        scale,
    }
}

/// Two-antenna comparison code: `(1/√2)·[Alamouti(x + x̃); Alamouti(x − x̃)]`.
pub fn alamouti_sd<T: Real>(x: [Complex<T>; 2], xt: [Complex<T>; 2]) -> StfCodeword<T> {
    let scale = T::FRAC_1_SQRT_2();
    let (s1, s2) = (x[0] + xt[0], x[1] + xt[1]);
    let (t1, t2) = (x[0] - xt[0], x[1] - xt[1]);
    let rows = [
        [s1, s2],
        [-s2.conj(), s1.conj()],
        [t1, t2],
        [-t2.conj(), t1.conj()],
    ]
    .map(|r| r.map(|z| z * scale));
    StfCodeword {
        kind: CodeKind::AlamoutiSd,
        matrix: CMatrix::from_rows(&rows),
        symbols: vec![x[0], x[1], xt[0], xt[1]],
        scale,
    }
}

/// All codewords of one template whose symbol positions draw from fixed
/// (possibly rotated) alphabets.
///
/// Codeword indices are mixed-radix numbers over the per-position phase
/// indices, position 0 most significant; the bit label of a codeword is the
/// concatenation of the per-position Gray labels in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeFamily<T> {
    kind: CodeKind,
    alphabets: Vec<Constellation<T>>,
}

impl<T: Real> CodeFamily<T> {
    pub fn new(kind: CodeKind, alphabets: Vec<Constellation<T>>) -> Result<Self> {
        if alphabets.len() != kind.symbols() {
            return Err(Error::Config(format!(
                "{kind:?} needs {} alphabets, got {}",
                kind.symbols(),
                alphabets.len()
            )));
        }
        Ok(Self { kind, alphabets })
    }

    /// 8×4 family over QPSK with an explicit rotation per symbol position
    /// `(x₁..x₄, x̃₅..x̃₈)`.
    pub fn qostftc_qpsk(angles: [T; 8]) -> Self {
        Self {
            kind: CodeKind::Qostftc8,
            alphabets: angles.iter().map(|&a| Constellation::qpsk(a)).collect(),
        }
    }

    /// Rotation pattern `(φ₁, φ₂, φ₃, φ₄) = (0, 0, φ, φ)` with `φ_p` shared by
    /// `x_p` and `x̃_{p+4}`.
    pub fn family_a(phi: T) -> Self {
        let z = T::zero();
        Self::qostftc_qpsk([z, z, phi, phi, z, z, phi, phi])
    }

    /// Rotation pattern `(φ, φ, 0, 0)`, the complementary constellation.
    pub fn family_b(phi: T) -> Self {
        let z = T::zero();
        Self::qostftc_qpsk([phi, phi, z, z, phi, phi, z, z])
    }

    /// `x₁..x₄` unrotated and every `x̃` rotated by `φ`.
    pub fn tilde_rotated(phi: T) -> Self {
        let z = T::zero();
        Self::qostftc_qpsk([z, z, z, z, phi, phi, phi, phi])
    }

    /// Two-antenna comparison family: `x` unrotated, `x̃` rotated by `φ`.
    pub fn baseline_2tx(phi: T) -> Self {
        let z = T::zero();
        Self {
            kind: CodeKind::AlamoutiSd,
            alphabets: [z, z, phi, phi].iter().map(|&a| Constellation::qpsk(a)).collect(),
        }
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn alphabets(&self) -> &[Constellation<T>] {
        &self.alphabets
    }

    pub fn alphabet(&self, position: usize) -> &Constellation<T> {
        &self.alphabets[position]
    }

    /// Number of codewords.
    pub fn len(&self) -> usize {
        self.alphabets.iter().map(|a| a.order()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bits_per_codeword(&self) -> usize {
        self.alphabets
            .iter()
            .map(|a| a.bits_per_symbol().unwrap_or(0))
            .sum()
    }

    /// Per-position phase indices of codeword `index`.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut d = vec![0; self.alphabets.len()];
        for (pos, a) in self.alphabets.iter().enumerate().rev() {
            d[pos] = index % a.order();
            index /= a.order();
        }
        d
    }

    pub fn index_of_digits(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.alphabets)
            .fold(0, |acc, (&k, a)| acc * a.order() + k)
    }

    pub fn symbols(&self, index: usize) -> Vec<Complex<T>> {
        self.digits(index)
            .iter()
            .zip(&self.alphabets)
            .map(|(&k, a)| a.point(k))
            .collect()
    }

    pub fn codeword(&self, index: usize) -> StfCodeword<T> {
        self.kind.build(&self.symbols(index))
    }

    pub fn bits_of(&self, index: usize) -> Vec<u8> {
        self.digits(index)
            .iter()
            .zip(&self.alphabets)
            .flat_map(|(&k, a)| a.bits_of_index(k))
            .collect()
    }

    pub fn index_of_bits(&self, bits: &[u8]) -> Result<usize> {
        let expected = self.bits_per_codeword();
        if bits.len() != expected {
            return Err(Error::BitGroupLength {
                expected,
                got: bits.len(),
            });
        }
        let mut digits = Vec::with_capacity(self.alphabets.len());
        let mut off = 0;
        for a in &self.alphabets {
            let w = a.bits_per_symbol().ok_or(Error::InvalidOrder(a.order()))?;
            digits.push(a.index_of_bits(&bits[off..off + w])?);
            off += w;
        }
        Ok(self.index_of_digits(&digits))
    }

    /// Same template and alphabet orders with new per-position rotations.
    pub fn with_rotations(&self, angles: &[T]) -> Self {
        Self {
            kind: self.kind,
            alphabets: self
                .alphabets
                .iter()
                .zip(angles)
                .map(|(a, &r)| Constellation::mpsk(a.order(), r).expect("valid order"))
                .collect(),
        }
    }
}

/// Space-frequency symbols of one frame, indexed (OFDM symbol, subcarrier,
/// transmit antenna).
#[derive(Clone, Debug, PartialEq)]
pub struct StfGrid<T> {
    subcarriers: usize,
    tx: usize,
    ofdm_symbols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> StfGrid<T> {
    pub fn zeros(subcarriers: usize, tx: usize, ofdm_symbols: usize) -> Self {
        Self {
            subcarriers,
            tx,
            ofdm_symbols,
            data: vec![czero(); subcarriers * tx * ofdm_symbols],
        }
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn tx(&self) -> usize {
        self.tx
    }

    pub fn ofdm_symbols(&self) -> usize {
        self.ofdm_symbols
    }

    #[inline]
    pub fn get(&self, t: usize, n: usize, p: usize) -> Complex<T> {
        self.data[(t * self.subcarriers + n) * self.tx + p]
    }

    #[inline]
    pub fn set(&mut self, t: usize, n: usize, p: usize, v: Complex<T>) {
        self.data[(t * self.subcarriers + n) * self.tx + p] = v;
    }

    /// Writes `block` (rows × tx) into OFDM symbol `t` at block index `m`,
    /// i.e. subcarriers `m·rows .. (m+1)·rows`.
    pub fn place(&mut self, t: usize, m: usize, block: &CMatrix<T>) -> Result<()> {
        let rows = block.rows();
        if block.cols() != self.tx {
            return Err(Error::ShapeMismatch {
                left: block.shape(),
                right: (rows, self.tx),
            });
        }
        if (m + 1) * rows > self.subcarriers || t >= self.ofdm_symbols {
            return Err(Error::Capacity {
                count: m + 1,
                rows,
                subcarriers: self.subcarriers,
            });
        }
        for r in 0..rows {
            for p in 0..self.tx {
                self.set(t, m * rows + r, p, block[(r, p)]);
            }
        }
        Ok(())
    }

    /// Squared Frobenius norm of OFDM symbol `t`.
    pub fn symbol_energy(&self, t: usize) -> T {
        let w = self.subcarriers * self.tx;
        self.data[t * w..(t + 1) * w]
            .iter()
            .fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    pub fn energy(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }
}

/// Places transmit-normalised codewords on consecutive subcarrier blocks of a
/// single OFDM symbol; unused trailing subcarriers stay zero.
pub fn assemble_grid<T: Real>(codewords: &[StfCodeword<T>], subcarriers: usize) -> Result<StfGrid<T>> {
    let Some(first) = codewords.first() else {
        return Ok(StfGrid::zeros(subcarriers, 4, 1));
    };
    let rows = first.rows();
    let tx = first.matrix.cols();
    if codewords.len() > subcarriers / rows {
        return Err(Error::Capacity {
            count: codewords.len(),
            rows,
            subcarriers,
        });
    }
    let mut grid = StfGrid::zeros(subcarriers, tx, 1);
    for (m, cw) in codewords.iter().enumerate() {
        if cw.matrix.shape() != (rows, tx) {
            return Err(Error::ShapeMismatch {
                left: cw.matrix.shape(),
                right: (rows, tx),
            });
        }
        grid.place(0, m, &cw.transmit_matrix())?;
    }
    Ok(grid)
}

/// Reads `count` blocks of `rows` subcarriers back out of OFDM symbol `t`.
pub fn disassemble<T: Real>(grid: &StfGrid<T>, t: usize, rows: usize, count: usize) -> Result<Vec<CMatrix<T>>> {
    if count * rows > grid.subcarriers() {
        return Err(Error::Capacity {
            count,
            rows,
            subcarriers: grid.subcarriers(),
        });
    }
    Ok((0..count)
        .map(|m| CMatrix::from_fn(rows, grid.tx(), |r, p| grid.get(t, m * rows + r, p)))
        .collect())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    fn random_symbols(rng: &mut impl Rng, n: usize) -> Vec<C> {
        (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn qostbc4_identity_and_row_two() {
        let one = c(1.0, 0.0);
        let z = c(0.0, 0.0);
        let m = qostbc4([one, z, z, z]).matrix;
        assert_eq!(m, CMatrix::identity(4));

        let m = qostbc4([one; 4]).matrix;
        let row2: Vec<f64> = m.row(1).iter().map(|v| v.re).collect();
        assert_eq!(row2, vec![-1.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn qostbc4_gram_diagonal_is_symbol_energy() {
        // Symbolic expansion: column p of the template holds each c_k exactly
        // once up to sign and conjugation, so (GᴴG)_pp = Σ|c_k|².
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let s = random_symbols(&mut rng, 4);
            let g = qostbc4([s[0], s[1], s[2], s[3]]).matrix.gram();
            let energy: f64 = s.iter().map(|v| v.norm_sqr()).sum();
            for p in 0..4 {
                assert!((g[(p, p)].re - energy).abs() < 1e-12);
                assert!(g[(p, p)].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn qostftc8_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_symbols(&mut rng, 4);
        let x = [s[0], s[1], s[2], s[3]];
        let zero = [c(0.0, 0.0); 4];

        let cw = qostftc8(x, zero).matrix;
        let half = qostbc4(x).matrix.scale(0.5);
        for r in 0..4 {
            for p in 0..4 {
                assert!((cw[(r, p)] - half[(r, p)]).norm() < 1e-14);
                assert!((cw[(r + 4, p)] - half[(r, p)]).norm() < 1e-14);
            }
        }

        let cw = qostftc8(zero, x).matrix;
        for r in 0..4 {
            for p in 0..4 {
                assert!((cw[(r + 4, p)] + cw[(r, p)]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn qostftc8_energy() {
        // |a+b|² + |a−b|² = 2(|a|²+|b|²): the template carries exactly 16 for
        // unit-modulus symbols, the transmitted matrix exactly 8 = rows.
        let fam = CodeFamily::<f64>::family_a(FRAC_PI_4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mean = 0.0;
        let draws = 2000;
        for _ in 0..draws {
            let cw = fam.codeword(rng.gen_range(0..fam.len()));
            assert!((cw.matrix.frobenius_sq() - 16.0).abs() < 1e-12);
            mean += cw.transmit_matrix().frobenius_sq();
        }
        mean /= draws as f64;
        assert!((mean - 8.0).abs() < 1e-9);
    }

    #[test]
    fn dispersion_matches_templates_and_rows_are_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [CodeKind::Qostbc4, CodeKind::Qostftc8, CodeKind::AlamoutiSd] {
            let d = kind.dispersion::<f64>();
            for r in 0..kind.rows() {
                assert!(d.row_conjugated(r).is_some(), "{kind:?} row {r} mixed");
            }
            for _ in 0..20 {
                let z = random_symbols(&mut rng, kind.symbols());
                let a = kind.build(&z).matrix;
                let b = d.evaluate(&z);
                assert!(a.try_sub(&b).unwrap().max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn family_indexing_round_trips() {
        let fam = CodeFamily::<f64>::family_b(FRAC_PI_4);
        assert_eq!(fam.len(), 65536);
        assert_eq!(fam.bits_per_codeword(), 16);
        for idx in [0usize, 1, 4, 255, 4097, 65535] {
            let bits = fam.bits_of(idx);
            assert_eq!(fam.index_of_bits(&bits).unwrap(), idx);
            assert_eq!(fam.index_of_digits(&fam.digits(idx)), idx);
        }
        assert!(fam.index_of_bits(&[0; 3]).is_err());
        let base = CodeFamily::<f64>::baseline_2tx(FRAC_PI_4);
        assert_eq!(base.len(), 256);
        assert_eq!(base.codeword(17).matrix.shape(), (4, 2));
    }

    #[test]
    fn grid_placement() {
        let fam = CodeFamily::<f64>::family_a(FRAC_PI_4);
        let cws: Vec<_> = (0..8).map(|i| fam.codeword(i * 1000)).collect();
        let grid = assemble_grid(&cws, 64).unwrap();
        assert!((grid.symbol_energy(0) - 64.0).abs() < 1e-9);
        let back = disassemble(&grid, 0, 8, 8).unwrap();
        for (a, b) in back.iter().zip(&cws) {
            assert!(a.try_sub(&b.transmit_matrix()).unwrap().max_abs() < 1e-15);
        }

        let grid = assemble_grid(&cws[..1], 64).unwrap();
        for n in 0..64 {
            for p in 0..4 {
                let populated = grid.get(0, n, p).norm() > 0.0;
                if n >= 8 {
                    assert!(!populated);
                }
            }
        }
        assert!((grid.symbol_energy(0) - 8.0).abs() < 1e-12);

        let too_many: Vec<_> = (0..9).map(|i| fam.codeword(i)).collect();
        assert!(matches!(
            assemble_grid(&too_many, 64),
            Err(Error::Capacity { count: 9, .. })
        ));
    }

    #[test]
    fn leftover_subcarriers_are_zero() {
        let fam = CodeFamily::<f64>::family_a(FRAC_PI_4);
        let cws: Vec<_> = (0..8).map(|i| fam.codeword(i)).collect();
        let grid = assemble_grid(&cws, 70).unwrap();
        for n in 64..70 {
            for p in 0..4 {
                assert_eq!(grid.get(0, n, p), c(0.0, 0.0));
            }
        }
    }

    #[test]
    fn grid_power_constraint() {
        let fam = CodeFamily::<f64>::family_a(FRAC_PI_4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let cws: Vec<_> = (0..8).map(|_| fam.codeword(rng.gen_range(0..fam.len()))).collect();
            acc += assemble_grid(&cws, 64).unwrap().energy() / 64.0;
        }
        assert!((acc / draws as f64 - 1.0).abs() < 0.01);
    }

    fn off_block(i: usize, j: usize) -> bool {
        i != j && !matches!((i, j), (0, 3) | (3, 0) | (1, 2) | (2, 1))
    }

    proptest! {
        #[test]
        fn quasi_orthogonal_gram(v in proptest::collection::vec(-2.0f64..2.0, 8)) {
            let s = [c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5]), c(v[6], v[7])];
            let g = qostbc4(s).matrix.gram();
            for i in 0..4 {
                for j in 0..4 {
                    if off_block(i, j) {
                        prop_assert!(g[(i, j)].norm() <= 1e-12);
                    }
                }
            }
        }

        #[test]
        fn stacked_gram_is_sum_of_halves(v in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let x = [c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5]), c(v[6], v[7])];
            let xt = [c(v[8], v[9]), c(v[10], v[11]), c(v[12], v[13]), c(v[14], v[15])];
            let g = qostftc8(x, xt).matrix.gram();
            let top = qostbc4(std::array::from_fn(|p| x[p] + xt[p])).matrix.gram().scale(0.25);
            let bot = qostbc4(std::array::from_fn(|p| x[p] - xt[p])).matrix.gram().scale(0.25);
            let sum = top.try_add(&bot).unwrap();
            prop_assert!(g.try_sub(&sum).unwrap().max_abs() < 1e-12);
        }
    }
}
