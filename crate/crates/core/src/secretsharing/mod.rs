//! Shamir (t+1)-out-of-n secret sharing over a prime field.
//!
//! A secret `s` is hidden as `f(0)` of a random degree-`t` polynomial and
//! party `i` receives the point `(i + 1, f(i + 1))`. Any `t + 1` points
//! interpolate back to `s`; `t` or fewer are jointly uniform. Shares are
//! additively homomorphic, which is all the aggregation circuit needs.

mod field;

pub use field::{is_prime, FieldElement, PrimeField, MERSENNE_61};

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SharingError {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("invalid threshold: t = {t}, n = {n} (need t < n < p)")]
    InvalidThreshold { t: usize, n: usize },
    #[error("insufficient shares: need {needed}, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("duplicate evaluation point x = {0}")]
    DuplicatePoint(u64),
    #[error("evaluation point must be non-zero")]
    ZeroPoint,
    #[error("shares carry different thresholds")]
    MixedThreshold,
    #[error("shares belong to different fields")]
    MixedField,
    #[error("share vectors have different lengths ({0} vs {1})")]
    ShapeMismatch(usize, usize),
    #[error("evaluation points do not match ({0} vs {1})")]
    PointMismatch(u64, u64),
    #[error("decoded value {0} is at least p/2; aggregate probably wrapped around")]
    OverflowSuspected(u64),
    #[error("count {0} does not fit below p/2")]
    CountTooLarge(u64),
    #[error("non-canonical field encoding {0}")]
    NonCanonical(u64),
    #[error("truncated share encoding: {0} bytes")]
    Truncated(usize),
}

/// One party's point on a sharing polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Share {
    pub x: u64,
    pub y: FieldElement,
    pub threshold: usize,
}

/// Serialized size of one share: 8-byte x then 8-byte y, both big-endian.
pub const SHARE_BYTES: usize = 16;

impl Share {
    pub fn to_bytes(&self) -> [u8; SHARE_BYTES] {
        let mut out = [0u8; SHARE_BYTES];
        out[..8].copy_from_slice(&self.x.to_be_bytes());
        out[8..].copy_from_slice(&self.y.to_be_bytes());
        out
    }

    /// The threshold is not on the wire; the caller supplies it from the
    /// session parameters.
    pub fn from_bytes(
        field: PrimeField,
        threshold: usize,
        bytes: &[u8],
    ) -> Result<Self, SharingError> {
        if bytes.len() != SHARE_BYTES {
            return Err(SharingError::Truncated(bytes.len()));
        }
        let x = u64::from_be_bytes(bytes[..8].try_into().unwrap());
        if x == 0 {
            return Err(SharingError::ZeroPoint);
        }
        let y = field.decode(bytes[8..].try_into().unwrap())?;
        Ok(Self { x, y, threshold })
    }
}

fn check_params(field: PrimeField, t: usize, n: usize) -> Result<(), SharingError> {
    if t >= n || n as u64 >= field.modulus() {
        return Err(SharingError::InvalidThreshold { t, n });
    }
    Ok(())
}

/// Evaluates `secret + c_1 x + ... + c_t x^t` at `x = 1..=n` (Horner).
fn evaluate_polynomial(
    secret: FieldElement,
    coefficients: &[FieldElement],
    n: usize,
) -> Vec<Share> {
    let field = secret.field();
    let t = coefficients.len();
    (1..=n as u64)
        .map(|x| {
            let xe = field.element(x);
            let mut acc = field.zero();
            for c in coefficients.iter().rev() {
                acc = acc.add(*c).mul(xe);
            }
            Share {
                x,
                y: acc.add(secret),
                threshold: t,
            }
        })
        .collect()
}

/// Splits `secret` into `n` shares, any `t + 1` of which reconstruct it.
pub fn share_secret<R: Rng + ?Sized>(
    secret: FieldElement,
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Share>, SharingError> {
    let field = secret.field();
    check_params(field, t, n)?;
    let coefficients: Vec<_> = (0..t).map(|_| field.random(rng)).collect();
    Ok(evaluate_polynomial(secret, &coefficients, n))
}

/// Sharing with caller-chosen coefficients, for golden-value tests only.
#[cfg(test)]
pub(crate) fn share_secret_with_coefficients(
    secret: FieldElement,
    coefficients: &[FieldElement],
    n: usize,
) -> Result<Vec<Share>, SharingError> {
    check_params(secret.field(), coefficients.len(), n)?;
    Ok(evaluate_polynomial(secret, coefficients, n))
}

/// Lagrange basis values at zero for the given evaluation points.
pub fn lagrange_at_zero(
    field: PrimeField,
    points: &[u64],
) -> Result<Vec<FieldElement>, SharingError> {
    let mut seen = BTreeSet::new();
    for &x in points {
        if x == 0 {
            return Err(SharingError::ZeroPoint);
        }
        if !seen.insert(x % field.modulus()) {
            return Err(SharingError::DuplicatePoint(x));
        }
    }
    points
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let mut num = field.one();
            let mut den = field.one();
            for (j, &xj) in points.iter().enumerate() {
                if i != j {
                    num = num.mul(field.element(xj));
                    den = den.mul(field.element(xj).sub(field.element(xi)));
                }
            }
            // den is non-zero: points are distinct mod p
            Ok(num.mul(den.inverse().expect("distinct points")))
        })
        .collect()
}

/// Interpolates the shared secret at `x = 0` from the first `t + 1` shares.
pub fn reconstruct(shares: &[Share]) -> Result<FieldElement, SharingError> {
    let first = shares
        .first()
        .ok_or(SharingError::InsufficientShares { needed: 1, got: 0 })?;
    let t = first.threshold;
    let field = first.y.field();
    for s in shares {
        if s.threshold != t {
            return Err(SharingError::MixedThreshold);
        }
        if s.y.field() != field {
            return Err(SharingError::MixedField);
        }
    }
    let mut seen = BTreeSet::new();
    for s in shares {
        if !seen.insert(s.x) {
            return Err(SharingError::DuplicatePoint(s.x));
        }
    }
    if shares.len() < t + 1 {
        return Err(SharingError::InsufficientShares {
            needed: t + 1,
            got: shares.len(),
        });
    }
    let used = &shares[..t + 1];
    let points: Vec<u64> = used.iter().map(|s| s.x).collect();
    let basis = lagrange_at_zero(field, &points)?;
    Ok(used
        .iter()
        .zip(basis)
        .fold(field.zero(), |acc, (s, l)| acc.add(s.y.mul(l))))
}

/// Component-wise sum of two share sequences held at the same points.
pub fn add_share_vectors(a: &[Share], b: &[Share]) -> Result<Vec<Share>, SharingError> {
    if a.len() != b.len() {
        return Err(SharingError::ShapeMismatch(a.len(), b.len()));
    }
    a.iter()
        .zip(b)
        .map(|(sa, sb)| {
            if sa.x != sb.x {
                return Err(SharingError::PointMismatch(sa.x, sb.x));
            }
            if sa.threshold != sb.threshold {
                return Err(SharingError::MixedThreshold);
            }
            Ok(Share {
                x: sa.x,
                y: sa.y.add(sb.y),
                threshold: sa.threshold,
            })
        })
        .collect()
}

/// Maps a histogram count onto a field wire. Counts must stay below `p / 2`
/// so that an aggregate can be told apart from a wrapped-around value.
pub fn encode_count(field: PrimeField, count: u64) -> Result<FieldElement, SharingError> {
    if count >= field.modulus() / 2 {
        return Err(SharingError::CountTooLarge(count));
    }
    Ok(field.element(count))
}

pub fn decode_count(value: FieldElement) -> Result<u64, SharingError> {
    if value.value() >= value.field().modulus() / 2 {
        return Err(SharingError::OverflowSuspected(value.value()));
    }
    Ok(value.value())
}

/// All of one party's shares for a vector of secrets: a single evaluation
/// point, one field element per cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareVector {
    pub x: u64,
    pub threshold: usize,
    pub values: Vec<FieldElement>,
}

impl ShareVector {
    pub fn zeros(field: PrimeField, x: u64, threshold: usize, len: usize) -> Self {
        Self {
            x,
            threshold,
            values: vec![field.zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn share(&self, cell: usize) -> Share {
        Share {
            x: self.x,
            y: self.values[cell],
            threshold: self.threshold,
        }
    }

    /// In-place `self += other`.
    pub fn accumulate(&mut self, other: &ShareVector) -> Result<(), SharingError> {
        if self.len() != other.len() {
            return Err(SharingError::ShapeMismatch(self.len(), other.len()));
        }
        if self.x != other.x {
            return Err(SharingError::PointMismatch(self.x, other.x));
        }
        if self.threshold != other.threshold {
            return Err(SharingError::MixedThreshold);
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = a.add(*b);
        }
        Ok(())
    }

    /// Wire form: each cell as a 16-byte (x, y) share.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * SHARE_BYTES);
        for i in 0..self.len() {
            out.extend_from_slice(&self.share(i).to_bytes());
        }
        out
    }

    pub fn from_bytes(
        field: PrimeField,
        threshold: usize,
        bytes: &[u8],
    ) -> Result<Self, SharingError> {
        if bytes.len() % SHARE_BYTES != 0 {
            return Err(SharingError::Truncated(bytes.len()));
        }
        let mut x = None;
        let mut values = Vec::with_capacity(bytes.len() / SHARE_BYTES);
        for chunk in bytes.chunks_exact(SHARE_BYTES) {
            let share = Share::from_bytes(field, threshold, chunk)?;
            match x {
                None => x = Some(share.x),
                Some(prev) if prev != share.x => {
                    return Err(SharingError::PointMismatch(prev, share.x))
                }
                _ => {}
            }
            values.push(share.y);
        }
        Ok(Self {
            // an empty vector carries no point; 1 is a placeholder
            x: x.unwrap_or(1),
            threshold,
            values,
        })
    }
}

/// Shares every entry of `secrets`, returning one [`ShareVector`] per party
/// (party `j` evaluates at `x = j + 1`).
pub fn share_vector<R: Rng + ?Sized>(
    field: PrimeField,
    secrets: &[FieldElement],
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ShareVector>, SharingError> {
    check_params(field, t, n)?;
    let mut parties: Vec<ShareVector> = (0..n)
        .map(|j| ShareVector {
            x: j as u64 + 1,
            threshold: t,
            values: Vec::with_capacity(secrets.len()),
        })
        .collect();
    for &secret in secrets {
        for share in share_secret(secret, t, n, rng)? {
            parties[(share.x - 1) as usize].values.push(share.y);
        }
    }
    Ok(parties)
}

/// Reconstructs every cell from `t + 1` or more party vectors.
pub fn reconstruct_vectors(vectors: &[ShareVector]) -> Result<Vec<FieldElement>, SharingError> {
    let first = vectors
        .first()
        .ok_or(SharingError::InsufficientShares { needed: 1, got: 0 })?;
    let t = first.threshold;
    let len = first.len();
    for v in vectors {
        if v.threshold != t {
            return Err(SharingError::MixedThreshold);
        }
        if v.len() != len {
            return Err(SharingError::ShapeMismatch(len, v.len()));
        }
    }
    if vectors.len() < t + 1 {
        return Err(SharingError::InsufficientShares {
            needed: t + 1,
            got: vectors.len(),
        });
    }
    let used = &vectors[..t + 1];
    let field = match used[0].values.first() {
        Some(v) => v.field(),
        None => return Ok(Vec::new()),
    };
    let points: Vec<u64> = used.iter().map(|v| v.x).collect();
    let basis = lagrange_at_zero(field, &points)?;
    Ok((0..len)
        .map(|cell| {
            used.iter()
                .zip(&basis)
                .fold(field.zero(), |acc, (v, l)| acc.add(v.values[cell].mul(*l)))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f97() -> PrimeField {
        PrimeField::new(97).unwrap()
    }

    #[test]
    fn degree_zero_is_constant() {
        let f = PrimeField::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let shares = share_secret(f.element(42), 0, 3, &mut rng).unwrap();
        assert!(shares.iter().all(|s| s.y.value() == 42));
    }

    #[test]
    fn golden_linear_sharing() {
        let f = f97();
        let shares = share_secret_with_coefficients(f.element(42), &[f.element(7)], 3).unwrap();
        let pts: Vec<_> = shares.iter().map(|s| (s.x, s.y.value())).collect();
        assert_eq!(pts, vec![(1, 49), (2, 56), (3, 63)]);
    }

    #[test]
    fn golden_reconstruction() {
        let f = f97();
        let s = |x, y| Share {
            x,
            y: f.element(y),
            threshold: 1,
        };
        assert_eq!(reconstruct(&[s(1, 49), s(2, 56)]).unwrap().value(), 42);
        assert_eq!(
            reconstruct(&[s(1, 49), s(1, 63)]),
            Err(SharingError::DuplicatePoint(1))
        );
        assert_eq!(
            reconstruct(&[s(1, 49)]),
            Err(SharingError::InsufficientShares { needed: 2, got: 1 })
        );
        let single = Share {
            x: 4,
            y: f.element(11),
            threshold: 0,
        };
        assert_eq!(reconstruct(&[single]).unwrap().value(), 11);
        let mixed = Share {
            threshold: 2,
            ..s(3, 63)
        };
        assert_eq!(
            reconstruct(&[s(1, 49), mixed]),
            Err(SharingError::MixedThreshold)
        );
    }

    #[test]
    fn invalid_threshold() {
        let f = f97();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(share_secret(f.element(1), 3, 3, &mut rng).is_err());
        assert!(share_secret(f.element(1), 1, 97, &mut rng).is_err());
    }

    #[test]
    fn homomorphic_addition() {
        let f = PrimeField::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = share_secret(f.element(5), 1, 3, &mut rng).unwrap();
        let b = share_secret(f.element(9), 1, 3, &mut rng).unwrap();
        let sum = add_share_vectors(&a, &b).unwrap();
        assert_eq!(reconstruct(&sum).unwrap().value(), 14);

        let zero = share_secret(f.zero(), 1, 3, &mut rng).unwrap();
        let same = add_share_vectors(&a, &zero).unwrap();
        assert_eq!(reconstruct(&same).unwrap().value(), 5);

        assert_eq!(
            add_share_vectors(&a, &b[..2]),
            Err(SharingError::ShapeMismatch(3, 2))
        );
        let mut shifted = b.clone();
        shifted.rotate_left(1);
        assert!(matches!(
            add_share_vectors(&a, &shifted),
            Err(SharingError::PointMismatch(..))
        ));
    }

    #[test]
    fn homomorphism_against_plaintext_oracle() {
        let f = PrimeField::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s1 = f.random(&mut rng);
            let s2 = f.random(&mut rng);
            let a = share_secret(s1, 1, 3, &mut rng).unwrap();
            let b = share_secret(s2, 1, 3, &mut rng).unwrap();
            let expected = ((s1.value() as u128 + s2.value() as u128) % MERSENNE_61 as u128) as u64;
            let got = reconstruct(&add_share_vectors(&a, &b).unwrap()).unwrap();
            assert_eq!(got.value(), expected);
        }
    }

    #[test]
    fn count_codec() {
        let f = PrimeField::default();
        assert_eq!(decode_count(encode_count(f, 0).unwrap()).unwrap(), 0);
        assert_eq!(
            decode_count(encode_count(f, 10_000).unwrap()).unwrap(),
            10_000
        );
        assert_eq!(
            decode_count(f.element(MERSENNE_61 - 1)),
            Err(SharingError::OverflowSuspected(MERSENNE_61 - 1))
        );
        assert!(encode_count(f, MERSENNE_61 / 2).is_err());
    }

    #[test]
    fn share_vector_round_trip_and_wire() {
        let f = PrimeField::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let secrets: Vec<_> = (0..10).map(|c| f.element(c * 3)).collect();
        let parties = share_vector(f, &secrets, 1, 3, &mut rng).unwrap();
        assert_eq!(parties.len(), 3);
        assert_eq!(parties[0].to_bytes().len(), 160);
        let decoded = ShareVector::from_bytes(f, 1, &parties[2].to_bytes()).unwrap();
        assert_eq!(decoded, parties[2]);
        assert_eq!(reconstruct_vectors(&parties[1..]).unwrap(), secrets);
        assert!(ShareVector::from_bytes(f, 1, &[0u8; 15]).is_err());
    }

    #[test]
    fn share_vector_accumulate_rejects_shape_mismatch() {
        let f = PrimeField::default();
        let mut a = ShareVector::zeros(f, 1, 1, 4);
        let b = ShareVector::zeros(f, 1, 1, 5);
        assert_eq!(a.accumulate(&b), Err(SharingError::ShapeMismatch(4, 5)));
        let c = ShareVector::zeros(f, 2, 1, 4);
        assert_eq!(a.accumulate(&c), Err(SharingError::PointMismatch(1, 2)));
    }

    proptest! {
        #[test]
        fn any_subset_reconstructs(secret in 0u64..MERSENNE_61, t in 0usize..4, extra in 0usize..3, seed: u64) {
            let f = PrimeField::default();
            let n = t + 1 + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shares = share_secret(f.element(secret), t, n, &mut rng).unwrap();
            // every window of t+1 consecutive shares (cyclically) yields the secret
            for start in 0..n {
                let subset: Vec<_> = (0..=t).map(|k| shares[(start + k) % n]).collect();
                prop_assert_eq!(reconstruct(&subset).unwrap().value(), secret);
            }
        }

        #[test]
        fn share_wire_round_trip(x in 1u64..u64::MAX, y in 0u64..MERSENNE_61) {
            let f = PrimeField::default();
            let share = Share { x, y: f.element(y), threshold: 2 };
            prop_assert_eq!(Share::from_bytes(f, 2, &share.to_bytes()).unwrap(), share);
        }
    }
}
