//! Prime-field arithmetic over a runtime-configured modulus.

use std::fmt;

use super::SharingError;

/// The Mersenne prime 2^61 - 1, the default field modulus.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// A prime field `Z_p`. Cheap to copy; every [`FieldElement`] remembers the
/// modulus it was created under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    modulus: u64,
}

impl Default for PrimeField {
    fn default() -> Self {
        Self {
            modulus: MERSENNE_61,
        }
    }
}

impl PrimeField {
    pub fn new(modulus: u64) -> Result<Self, SharingError> {
        if !is_prime(modulus) {
            return Err(SharingError::NotPrime(modulus));
        }
        Ok(Self { modulus })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Reduces an arbitrary integer into the field.
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.modulus,
            modulus: self.modulus,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.element(0)
    }

    pub fn one(&self) -> FieldElement {
        self.element(1)
    }

    /// Uniform element of the field (rejection sampling, no modulo bias).
    pub fn random<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        let bits = 64 - self.modulus.leading_zeros();
        let mask = if bits == 64 {
            u64::MAX
        } else {
            (1u64 << bits) - 1
        };
        loop {
            let candidate = rng.next_u64() & mask;
            if candidate < self.modulus {
                return FieldElement {
                    value: candidate,
                    modulus: self.modulus,
                };
            }
        }
    }

    /// Parses a canonical 8-byte big-endian encoding.
    pub fn decode(&self, bytes: [u8; 8]) -> Result<FieldElement, SharingError> {
        let value = u64::from_be_bytes(bytes);
        if value >= self.modulus {
            return Err(SharingError::NonCanonical(value));
        }
        Ok(FieldElement {
            value,
            modulus: self.modulus,
        })
    }
}

/// Canonical residue `0 <= value < p`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: u64,
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn field(&self) -> PrimeField {
        PrimeField {
            modulus: self.modulus,
        }
    }

    pub fn to_be_bytes(&self) -> [u8; 8] {
        self.value.to_be_bytes()
    }

    fn check(&self, other: &Self) {
        debug_assert_eq!(self.modulus, other.modulus, "mixed field moduli");
    }

    pub fn add(self, other: Self) -> Self {
        self.check(&other);
        let sum = (self.value as u128 + other.value as u128) % self.modulus as u128;
        Self {
            value: sum as u64,
            modulus: self.modulus,
        }
    }

    pub fn sub(self, other: Self) -> Self {
        self.check(&other);
        let diff = (self.value as u128 + self.modulus as u128 - other.value as u128)
            % self.modulus as u128;
        Self {
            value: diff as u64,
            modulus: self.modulus,
        }
    }

    pub fn mul(self, other: Self) -> Self {
        self.check(&other);
        let prod = (self.value as u128 * other.value as u128) % self.modulus as u128;
        Self {
            value: prod as u64,
            modulus: self.modulus,
        }
    }

    pub fn neg(self) -> Self {
        self.field().zero().sub(self)
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = self.field().one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc.mul(base);
            }
            base = base.mul(base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        if self.value == 0 {
            None
        } else {
            Some(self.pow(self.modulus - 2))
        }
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every `u64`.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
