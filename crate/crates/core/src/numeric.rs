//! Small numeric helpers: compensated summation and 128-bit gcd.

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm_u128(a: u128, b: u128) -> Option<u128> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd_u128(a, b)).checked_mul(b)
}

/// Accumulates `-Σ p ln p` for weights over a common denominator.
#[derive(Clone, Copy, Debug)]
pub struct EntropyAccumulator {
    ln_denom: f64,
    inv_denom: f64,
    sum: CompensatedSum,
    atoms: u64,
}

impl EntropyAccumulator {
    pub fn new(denom: u128) -> Self {
        let d = denom as f64;
        Self { ln_denom: d.ln(), inv_denom: 1.0 / d, sum: CompensatedSum::new(), atoms: 0 }
    }

    #[inline]
    pub fn push(&mut self, weight: u128) {
        if weight == 0 {
            return;
        }
        let w = weight as f64;
        self.sum.add(w * self.inv_denom * (self.ln_denom - w.ln()));
        self.atoms += 1;
    }

    pub fn entropy(&self) -> f64 {
        self.sum.value().max(0.0)
    }

    pub fn atoms(&self) -> u64 {
        self.atoms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_beats_naive() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn gcd_lcm() {
        assert_eq!(gcd_u128(12, 18), 6);
        assert_eq!(lcm_u128(4, 6), Some(12));
        assert_eq!(lcm_u128(u128::MAX, u128::MAX - 1), None);
    }
}
