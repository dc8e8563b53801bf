//! M-PSK alphabets.
//!
//! Points are ordered by phase index `k`: point `k` is
//! `exp(i(2πk/M + rotation))`. Bit groups are Gray mapped onto that index so
//! that neighbouring phases differ in a single bit.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cis, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct Constellation<T> {
    order: usize,
    rotation: T,
    points: Vec<Complex<T>>,
}

impl<T: Real> Constellation<T> {
    /// `M`-PSK with every point rotated by `rotation` radians.
    pub fn mpsk(order: usize, rotation: T) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidOrder(order));
        }
        let step = T::TAU() / T::from_usize(order).unwrap();
        let points = (0..order)
            .map(|k| cis(step * T::from_usize(k).unwrap() + rotation))
            .collect();
        Ok(Self {
            order,
            rotation,
            points,
        })
    }

    pub fn qpsk(rotation: T) -> Self {
        Self::mpsk(4, rotation).expect("order 4 is valid")
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn rotation(&self) -> T {
        self.rotation
    }

    #[inline]
    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    #[inline]
    pub fn point(&self, index: usize) -> Complex<T> {
        self.points[index]
    }

    /// Same constellation with an extra rotation applied.
    pub fn rotated(&self, by: T) -> Self {
        Self::mpsk(self.order, self.rotation + by).expect("order already validated")
    }

    /// Bits carried per symbol; `None` unless `M` is a power of two.
    pub fn bits_per_symbol(&self) -> Option<usize> {
        self.order
            .is_power_of_two()
            .then(|| self.order.trailing_zeros() as usize)
    }

    /// Phase index whose Gray label equals `bits` (MSB first).
    pub fn index_of_bits(&self, bits: &[u8]) -> Result<usize> {
        let expected = self
            .bits_per_symbol()
            .ok_or(Error::InvalidOrder(self.order))?;
        if bits.len() != expected {
            return Err(Error::BitGroupLength {
                expected,
                got: bits.len(),
            });
        }
        let gray = bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1));
        Ok(gray_decode(gray))
    }

    /// Gray label of phase index `index`, MSB first.
    pub fn bits_of_index(&self, index: usize) -> Vec<u8> {
        let width = self.bits_per_symbol().unwrap_or(0);
        let g = gray_encode(index);
        (0..width).rev().map(|i| ((g >> i) & 1) as u8).collect()
    }

    pub fn map_bits(&self, bits: &[u8]) -> Result<Complex<T>> {
        Ok(self.points[self.index_of_bits(bits)?])
    }

    /// Hard decision: nearest point's Gray label.
    pub fn demap(&self, symbol: Complex<T>) -> Vec<u8> {
        self.bits_of_index(self.nearest(symbol))
    }

    pub fn nearest(&self, symbol: Complex<T>) -> usize {
        let mut best = 0;
        let mut best_d = T::infinity();
        for (k, p) in self.points.iter().enumerate() {
            let d = (symbol - p).norm_sqr();
            if d < best_d {
                best = k;
                best_d = d;
            }
        }
        best
    }

    /// Index of `symbol` if it is (numerically) one of the points.
    pub fn index_of(&self, symbol: Complex<T>) -> Option<usize> {
        let k = self.nearest(symbol);
        ((self.points[k] - symbol).norm() < T::lit(1e-6)).then_some(k)
    }
}

/// Rotation that maximises the coding gain of the rotated quasi-orthogonal
/// structure: `π/M` for even `M`, `π/2` for odd `M`.
pub fn optimal_rotation<T: Real>(order: usize) -> Result<T> {
    if order < 2 {
        return Err(Error::InvalidOrder(order));
    }
    Ok(if order.is_multiple_of(2) {
        T::PI() / T::from_usize(order).unwrap()
    } else {
        T::FRAC_PI_2()
    })
}

#[inline]
fn gray_encode(i: usize) -> usize {
    i ^ (i >> 1)
}

#[inline]
fn gray_decode(mut g: usize) -> usize {
    let mut i = g;
    while g > 1 {
        g >>= 1;
        i ^= g;
    }
    i
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

    use proptest::prelude::*;

    use super::*;

    fn close(a: Complex<f64>, b: Complex<f64>) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn bpsk_and_qpsk_points() {
        let b = Constellation::<f64>::mpsk(2, 0.0).unwrap();
        assert!(close(b.point(0), Complex::new(1.0, 0.0)));
        assert!(close(b.point(1), Complex::new(-1.0, 0.0)));

        let q = Constellation::<f64>::mpsk(4, 0.0).unwrap();
        let expect = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (p, e) in q.points().iter().zip(expect) {
            assert!(close(*p, Complex::new(e.0, e.1)));
        }
    }

    #[test]
    fn rotated_qpsk() {
        let q = Constellation::<f64>::mpsk(4, FRAC_PI_4).unwrap();
        for (k, p) in q.points().iter().enumerate() {
            let ang = FRAC_PI_4 + k as f64 * FRAC_PI_2;
            assert!(close(*p, Complex::from_polar(1.0, ang)));
        }
    }

    #[test]
    fn invalid_order() {
        assert!(matches!(
            Constellation::<f64>::mpsk(1, 0.0),
            Err(Error::InvalidOrder(1))
        ));
        assert!(optimal_rotation::<f64>(0).is_err());
    }

    #[test]
    fn rotation_rule() {
        assert!((optimal_rotation::<f64>(4).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!((optimal_rotation::<f64>(8).unwrap() - FRAC_PI_8).abs() < 1e-15);
        assert!((optimal_rotation::<f64>(3).unwrap() - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn gray_mapping_qpsk() {
        let q = Constellation::<f64>::qpsk(0.0);
        assert!(close(q.map_bits(&[0, 0]).unwrap(), Complex::new(1.0, 0.0)));
        let pts: Vec<_> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|b| q.map_bits(b).unwrap())
            .collect();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(!close(pts[i], pts[j]));
            }
        }
        // neighbouring phases differ in exactly one bit
        for k in 0..4 {
            let a = q.bits_of_index(k);
            let b = q.bits_of_index((k + 1) % 4);
            let diff = a.iter().zip(&b).filter(|(x, y)| x != y).count();
            assert_eq!(diff, 1);
        }
        assert!(matches!(
            q.map_bits(&[1]),
            Err(Error::BitGroupLength { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn odd_order_has_no_bit_mapping() {
        let c = Constellation::<f64>::mpsk(3, 0.0).unwrap();
        assert!(c.bits_per_symbol().is_none());
        assert!(c.map_bits(&[0]).is_err());
    }

    #[test]
    fn single_precision_works() {
        let q = Constellation::<f32>::qpsk(std::f32::consts::FRAC_PI_4);
        assert!((q.point(0).norm() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn unit_energy(m in 2usize..33, rot in -4.0f64..4.0) {
            let c = Constellation::<f64>::mpsk(m, rot).unwrap();
            let mean: f64 = c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            prop_assert!((mean - 1.0).abs() < 1e-12);
            for p in c.points() {
                prop_assert!((p.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn rotation_is_pointwise_multiplication(m in 2usize..17, rot in -4.0f64..4.0) {
            let base = Constellation::<f64>::mpsk(m, 0.0).unwrap();
            let rotated = Constellation::<f64>::mpsk(m, rot).unwrap();
            let w = Complex::from_polar(1.0, rot);
            for (a, b) in base.points().iter().zip(rotated.points()) {
                prop_assert!(close(a * w, *b));
            }
        }

        #[test]
        fn demap_inverts_map(order_log in 1usize..4, seed in 0usize..1000) {
            let m = 1 << order_log;
            let c = Constellation::<f64>::mpsk(m, 0.3).unwrap();
            let idx = seed % m;
            let bits = c.bits_of_index(idx);
            let sym = c.map_bits(&bits).unwrap();
            prop_assert_eq!(c.demap(sym), bits);
        }
    }
}
