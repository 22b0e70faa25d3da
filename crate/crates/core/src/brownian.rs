//! Discretised free Brownian motion.
//!
//! Each increment is `ΔW = √(Δt / 2N) (A + Aᵀ)` with `A` an `N × N` matrix of
//! independent standard normals: off-diagonal entries have variance `Δt/N`,
//! diagonal entries `2Δt/N`, and `E φ(ΔW²) = Δt (N + 1) / N`. Only the upper
//! triangle is drawn, one normal per entry with exactly that variance, which
//! is the same law at half the draws.
//!
//! Randomness is keyed on `(seed, path_index)`: every path owns an
//! independent xoshiro256++ stream seeded from a SplitMix64 hash of the pair,
//! so ensembles reproduce bit-for-bit under any scheduling.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::matrix::HermitianMatrix;
use crate::scalar::{lit, Real, Scalar};

/// Random stream owned by one path.
pub type PathRng = Xoshiro256PlusPlus;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The stream for `path_index` under master `seed`.
pub fn path_rng(seed: u64, path_index: u64) -> PathRng {
    let key = splitmix64(seed ^ splitmix64(path_index ^ 0x6a09_e667_f3bc_c909));
    Xoshiro256PlusPlus::seed_from_u64(key)
}

fn check_increment_args<T: Real>(n: usize, dt: T) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension n must be at least 1".into()));
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    Ok(())
}

/// One increment `√(dt/2n) (A + Aᵀ)`; the upper triangle is drawn
/// row-major from `rng`.
pub fn sample_increment<T: Real, R: Rng + ?Sized>(
    n: usize,
    dt: T,
    rng: &mut R,
) -> Result<HermitianMatrix<T>> {
    check_increment_args(n, dt)?;
    Ok(draw_increment(n, increment_scale(n, dt), rng))
}

fn increment_scale<T: Real>(n: usize, dt: T) -> T {
    (dt / lit::<T>(2.0 * n as f64)).sqrt()
}

fn draw_increment<T: Real, R: Rng + ?Sized>(n: usize, scale: T, rng: &mut R) -> HermitianMatrix<T> {
    // a_ij + a_ji ~ N(0, 2) off the diagonal, 2a_ii ~ N(0, 4) on it.
    let off = scale * lit::<T>(std::f64::consts::SQRT_2);
    let diag = scale + scale;
    HermitianMatrix::from_upper_fn(n, |i, j| {
        let z = T::standard_normal(rng);
        if i == j {
            diag * z
        } else {
            off * z
        }
    })
}

/// Lazily generated increments of one path. Yields exactly the sequence
/// [`sample_path`] would store.
#[derive(Clone, Debug)]
pub struct IncrementStream<T> {
    n: usize,
    scale: T,
    rng: PathRng,
}

impl<T: Real> IncrementStream<T> {
    pub fn new(n: usize, dt: T, seed: u64, path_index: u64) -> Result<Self> {
        check_increment_args(n, dt)?;
        Ok(Self {
            n,
            scale: increment_scale(n, dt),
            rng: path_rng(seed, path_index),
        })
    }

    pub fn next_increment(&mut self) -> HermitianMatrix<T> {
        draw_increment(self.n, self.scale, &mut self.rng)
    }
}

impl<T: Real> Iterator for IncrementStream<T> {
    type Item = HermitianMatrix<T>;

    fn next(&mut self) -> Option<Self::Item> {
        Some(self.next_increment())
    }
}

/// A stored path of `L` increments of one free Brownian motion.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementSequence<T> {
    pub n: usize,
    pub dt: T,
    pub increments: Vec<HermitianMatrix<T>>,
    pub seed: u64,
    pub path_index: u64,
}

impl<T: Scalar> IncrementSequence<T> {
    /// Wraps explicit increments, for instance exact ones in tests.
    pub fn from_increments(
        dt: T,
        increments: Vec<HermitianMatrix<T>>,
        seed: u64,
        path_index: u64,
    ) -> Result<Self> {
        let n = increments.first().map(HermitianMatrix::n).ok_or_else(|| {
            Error::InvalidArgument("an increment sequence needs at least one step".into())
        })?;
        if let Some(bad) = increments.iter().find(|m| m.n() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.n(),
            });
        }
        Ok(Self {
            n,
            dt,
            increments,
            seed,
            path_index,
        })
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// Entrywise sum of all increments, accumulated in order.
    pub fn total(&self) -> HermitianMatrix<T> {
        let mut acc = HermitianMatrix::zeros(self.n);
        for m in &self.increments {
            acc.add_assign(m).expect("uniform dimension");
        }
        acc
    }
}

/// `L` increments of step `dt` from the stream keyed on `(seed, path_index)`.
/// Each call is self-contained: it always starts at the head of the stream.
pub fn sample_path<T: Real>(
    n: usize,
    dt: T,
    steps: usize,
    seed: u64,
    path_index: u64,
) -> Result<IncrementSequence<T>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("step count L must be at least 1".into()));
    }
    let stream = IncrementStream::new(n, dt, seed, path_index)?;
    Ok(IncrementSequence {
        n,
        dt,
        increments: stream.take(steps).collect(),
        seed,
        path_index,
    })
}

/// Streaming version of [`coarsen`]: push fine increments in order and get a
/// coarse increment back after every `factor` of them.
#[derive(Clone, Debug)]
pub struct Coarsener<T> {
    factor: usize,
    pending: usize,
    acc: Option<HermitianMatrix<T>>,
}

impl<T: Scalar> Coarsener<T> {
    pub fn new(factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("coarsening factor must be positive".into()));
        }
        Ok(Self {
            factor,
            pending: 0,
            acc: None,
        })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn push(&mut self, increment: &HermitianMatrix<T>) -> Option<HermitianMatrix<T>> {
        match self.acc.as_mut() {
            None => self.acc = Some(increment.clone()),
            Some(acc) => acc.add_assign(increment).expect("uniform dimension"),
        }
        self.pending += 1;
        if self.pending == self.factor {
            self.pending = 0;
            self.acc.take()
        } else {
            None
        }
    }
}

/// Sums consecutive blocks of `factor` increments: the coarse path of step
/// `factor * dt` driven by the same Brownian motion.
pub fn coarsen<T: Scalar>(seq: &IncrementSequence<T>, factor: usize) -> Result<IncrementSequence<T>> {
    if factor == 0 || seq.len() % factor != 0 {
        return Err(Error::InvalidArgument(format!(
            "coarsening factor {factor} does not divide the step count {}",
            seq.len()
        )));
    }
    let mut coarsener = Coarsener::new(factor)?;
    let increments = seq
        .increments
        .iter()
        .filter_map(|m| coarsener.push(m))
        .collect();
    let factor_t = T::from_usize(factor).expect("factor representable");
    Ok(IncrementSequence {
        n: seq.n,
        dt: factor_t * seq.dt.clone(),
        increments,
        seed: seq.seed,
        path_index: seq.path_index,
    })
}

/// Contents of a binary matrix dump.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixDump {
    pub n: usize,
    pub dt: f64,
    pub seed: u64,
    pub path_index: u64,
    pub matrices: Vec<HermitianMatrix<f64>>,
}

/// Header `n, dt, count, seed, path_index` (little-endian 64-bit each), then
/// every matrix row-major as little-endian `f64`.
pub fn write_matrices<W: Write>(
    mut w: W,
    n: usize,
    dt: f64,
    seed: u64,
    path_index: u64,
    matrices: &[HermitianMatrix<f64>],
) -> Result<()> {
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&dt.to_le_bytes())?;
    w.write_all(&(matrices.len() as u64).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&path_index.to_le_bytes())?;
    for m in matrices {
        if m.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.n(),
            });
        }
        for x in m.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrices<R: Read>(mut r: R) -> Result<MatrixDump> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let dt = f64::from_le_bytes(next(&mut r)?);
    let count = u64::from_le_bytes(next(&mut r)?) as usize;
    let seed = u64::from_le_bytes(next(&mut r)?);
    let path_index = u64::from_le_bytes(next(&mut r)?);
    let mut matrices = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            data.push(f64::from_le_bytes(next(&mut r)?));
        }
        matrices.push(HermitianMatrix::new_exact(n, data)?);
    }
    Ok(MatrixDump {
        n,
        dt,
        seed,
        path_index,
        matrices,
    })
}

impl IncrementSequence<f64> {
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        write_matrices(w, self.n, self.dt, self.seed, self.path_index, &self.increments)
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let dump = read_matrices(r)?;
        Ok(Self {
            n: dump.n,
            dt: dump.dt,
            increments: dump.matrices,
            seed: dump.seed,
            path_index: dump.path_index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    }

    #[test]
    fn scalar_increment_has_variance_two_dt() {
        let dt = 0.3;
        let mut rng = path_rng(42, 0);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| *sample_increment(1, dt, &mut rng).unwrap().get(0, 0))
            .collect();
        let (mean, se) = mean_and_stderr(&draws);
        assert!(mean.abs() < 3.0 * se);
        let squares: Vec<f64> = draws.iter().map(|x| x * x).collect();
        let (var, se_var) = mean_and_stderr(&squares);
        assert!((var - 2.0 * dt).abs() < 3.0 * se_var, "var {var}");
    }

    #[test]
    fn increments_are_exactly_symmetric() {
        let mut rng = path_rng(1, 1);
        let m = sample_increment(7, 0.01f64, &mut rng).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn increment_rejects_bad_arguments() {
        let mut rng = path_rng(0, 0);
        assert!(sample_increment(0, 0.1, &mut rng).is_err());
        assert!(sample_increment(3, 0.0, &mut rng).is_err());
        assert!(sample_increment(3, -1.0, &mut rng).is_err());
        assert!(sample_path(3, 0.1, 0, 0, 0).is_err());
    }

    #[test]
    fn second_moment_matches_finite_n_value() {
        let (n, dt) = (50, 0.01);
        let mut rng = path_rng(7, 3);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| {
                let w = sample_increment(n, dt, &mut rng).unwrap();
                w.matmul(&w).unwrap().normalized_trace()
            })
            .collect();
        let (mean, se) = mean_and_stderr(&xs);
        let expected = dt * (n as f64 + 1.0) / n as f64;
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} ± {se}");
    }

    #[test]
    fn paths_are_reproducible_and_distinct() {
        let a = sample_path::<f64>(4, 0.1, 5, 99, 3).unwrap();
        let b = sample_path::<f64>(4, 0.1, 5, 99, 3).unwrap();
        assert_eq!(a, b);
        let firsts: Vec<Vec<u64>> = (0..100)
            .map(|p| {
                sample_path::<f64>(3, 0.1, 1, 99, p).unwrap().increments[0]
                    .as_slice()
                    .iter()
                    .map(|x| x.to_bits())
                    .collect()
            })
            .collect();
        for i in 0..firsts.len() {
            for j in (i + 1)..firsts.len() {
                assert_ne!(firsts[i], firsts[j], "paths {i} and {j} collide");
            }
        }
        let other_seed = sample_path::<f64>(4, 0.1, 5, 100, 3).unwrap();
        assert_ne!(a.increments, other_seed.increments);
    }

    #[test]
    fn stream_matches_stored_path() {
        let stored = sample_path::<f64>(5, 0.02, 6, 1, 2).unwrap();
        let streamed: Vec<_> = IncrementStream::new(5, 0.02, 1, 2).unwrap().take(6).collect();
        assert_eq!(stored.increments, streamed);
    }

    #[test]
    fn coarsen_identity_and_full() {
        let seq = sample_path::<f64>(3, 0.1, 8, 5, 0).unwrap();
        assert_eq!(coarsen(&seq, 1).unwrap(), seq);
        let full = coarsen(&seq, 8).unwrap();
        assert_eq!(full.len(), 1);
        assert!((full.dt - 0.8).abs() < 1e-15);
        assert_eq!(full.increments[0], seq.total());
        assert!(coarsen(&seq, 3).is_err());
        assert!(coarsen(&seq, 0).is_err());
    }

    fn exact_sequence(len: usize, n: usize, numerators: &[i64]) -> IncrementSequence<BigRational> {
        let mut it = numerators.iter().cycle();
        let increments = (0..len)
            .map(|_| {
                HermitianMatrix::from_upper_fn(n, |_, _| {
                    let num = *it.next().unwrap();
                    BigRational::new(num.into(), (1 + num.rem_euclid(7)).into())
                })
            })
            .collect();
        IncrementSequence::from_increments(BigRational::new(1.into(), 64.into()), increments, 0, 0)
            .unwrap()
    }

    #[test]
    fn coarsen_preserves_sum_exactly() {
        let seq = exact_sequence(8, 3, &[3, -5, 7, 11, -2, 13, 1, -9, 4]);
        let coarse = coarsen(&seq, 4).unwrap();
        assert_eq!(coarse.len(), 2);
        assert_eq!(coarse.total(), seq.total());
        assert_eq!(coarse.dt, BigRational::new(1.into(), 16.into()));
    }

    proptest! {
        #[test]
        fn coarsening_is_associative_in_exact_arithmetic(
            nums in proptest::collection::vec(-50i64..50, 1..40),
            r1 in 1usize..4, r2 in 1usize..4, blocks in 1usize..4,
        ) {
            let len = r1 * r2 * blocks;
            let seq = exact_sequence(len, 2, &nums);
            let twice = coarsen(&coarsen(&seq, r1).unwrap(), r2).unwrap();
            let once = coarsen(&seq, r1 * r2).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert_eq!(twice.total(), seq.total());
        }

        #[test]
        fn float_coarsening_preserves_sum_to_rounding(seed in 0u64..1000, r in 1usize..5) {
            let seq = sample_path::<f64>(3, 0.01, 4 * r, seed, 0).unwrap();
            let coarse = coarsen(&seq, r).unwrap();
            let diff = coarse.total().sub(&seq.total()).unwrap().frobenius_norm();
            prop_assert!(diff <= 1e-14 * (1.0 + seq.total().frobenius_norm()));
        }
    }

    #[test]
    fn binary_round_trip() {
        let seq = sample_path::<f64>(3, 0.125, 4, 77, 9).unwrap();
        let mut buf = Vec::new();
        seq.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 40 + 4 * 9 * 8);
        assert_eq!(&buf[0..8], &3u64.to_le_bytes());
        assert_eq!(&buf[8..16], &0.125f64.to_le_bytes());
        assert_eq!(&buf[16..24], &4u64.to_le_bytes());
        assert_eq!(&buf[24..32], &77u64.to_le_bytes());
        assert_eq!(&buf[32..40], &9u64.to_le_bytes());
        assert_eq!(&buf[40..48], &seq.increments[0].get(0, 0).to_le_bytes());
        assert_eq!(&buf[48..56], &seq.increments[0].get(0, 1).to_le_bytes());
        let back = IncrementSequence::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, seq);
        assert!(IncrementSequence::read_binary(&buf[..50]).is_err());
    }
}
