//! Subset-sum counting: the coefficients of `∏ (1 + x^{a_i})`.
//!
//! Products are formed pairwise in a balanced tree. Small or sparse factors
//! are multiplied term by term; dense ones go through a number-theoretic
//! transform over three primes and are recombined exactly by CRT.

use crate::error::{Error, Result};

/// Default cap on the number of table entries.
pub const DEFAULT_BUDGET: usize = 1 << 22;
/// Counts are exact 64-bit integers up to this many items.
pub const MAX_ITEMS: usize = 60;

const PRIMES: [u64; 3] = [998_244_353, 167_772_161, 469_762_049];
const ROOT: u64 = 3;

/// Sparse polynomial: `(degree, coefficient)` with increasing degree.
type Sparse = Vec<(usize, u64)>;

/// `counts[j] = #{S : Σ_{i∈S} a_i = j}` for `j = 0..=Σ a_i`.
pub fn convolve_all(a: &[u64]) -> Result<Vec<u64>> {
    convolve_all_with_budget(a, DEFAULT_BUDGET)
}

pub fn convolve_all_with_budget(a: &[u64], budget: usize) -> Result<Vec<u64>> {
    if a.len() > MAX_ITEMS {
        return Err(Error::Budget { needed: a.len(), budget: MAX_ITEMS });
    }
    if let Some(i) = a.iter().position(|&x| x == 0) {
        return Err(Error::InvalidParameter(format!("a[{i}] = 0")));
    }
    let total: u64 = a.iter().sum();
    let len = total as usize + 1;
    if len > budget {
        return Err(Error::Budget { needed: len, budget });
    }
    let mut out = vec![0u64; len];
    for (d, c) in product(a, usize::MAX) {
        out[d] = c;
    }
    Ok(out)
}

/// Nonzero counts with degree at most `max_degree`; zeros in `a` double
/// every count.
pub(crate) fn convolve_truncated(a: &[u64], max_degree: usize) -> Result<Sparse> {
    if a.len() > MAX_ITEMS {
        return Err(Error::Budget { needed: a.len(), budget: MAX_ITEMS });
    }
    let positive: Vec<u64> = a.iter().copied().filter(|&x| x > 0).collect();
    let zeros = (a.len() - positive.len()) as u32;
    let mut terms = product(&positive, max_degree);
    for t in &mut terms {
        t.1 <<= zeros;
    }
    Ok(terms)
}

fn product(a: &[u64], max_degree: usize) -> Sparse {
    match a.len() {
        0 => vec![(0, 1)],
        1 => {
            let d = a[0] as usize;
            if d <= max_degree {
                vec![(0, 1), (d, 1)]
            } else {
                vec![(0, 1)]
            }
        }
        n => {
            let (l, r) = a.split_at(n / 2);
            multiply(&product(l, max_degree), &product(r, max_degree), max_degree)
        }
    }
}

fn multiply(x: &Sparse, y: &Sparse, max_degree: usize) -> Sparse {
    let deg_x = x.last().map_or(0, |t| t.0);
    let deg_y = y.last().map_or(0, |t| t.0);
    let deg = (deg_x + deg_y).min(max_degree);
    let size = (deg_x + deg_y + 1).next_power_of_two();
    let dense_cost = 9 * size * (size.trailing_zeros() as usize + 1);
    if x.len().saturating_mul(y.len()) <= dense_cost {
        sparse_multiply(x, y, deg)
    } else {
        let a = densify(x);
        let b = densify(y);
        let c = ntt_multiply(&a, &b);
        c.into_iter().take(deg + 1).enumerate().filter(|t| t.1 != 0).collect()
    }
}

fn sparse_multiply(x: &Sparse, y: &Sparse, max_degree: usize) -> Sparse {
    let mut terms: Vec<(usize, u64)> = Vec::with_capacity(x.len() * y.len());
    for &(dx, cx) in x {
        for &(dy, cy) in y {
            if dx + dy <= max_degree {
                terms.push((dx + dy, cx * cy));
            }
        }
    }
    terms.sort_unstable_by_key(|t| t.0);
    let mut out: Sparse = Vec::with_capacity(terms.len());
    for (d, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == d => last.1 += c,
            _ => out.push((d, c)),
        }
    }
    out
}

fn densify(x: &Sparse) -> Vec<u64> {
    let mut v = vec![0; x.last().map_or(0, |t| t.0) + 1];
    for &(d, c) in x {
        v[d] = c;
    }
    v
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut r = 1;
    b %= p;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

fn ntt(a: &mut [u64], p: u64, invert: bool) {
    let n = a.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let mut w = pow_mod(ROOT, (p - 1) / len as u64, p);
        if invert {
            w = pow_mod(w, p - 2, p);
        }
        for start in (0..n).step_by(len) {
            let mut wn = 1;
            for i in 0..len / 2 {
                let u = a[start + i];
                let v = a[start + i + len / 2] * wn % p;
                a[start + i] = if u + v >= p { u + v - p } else { u + v };
                a[start + i + len / 2] = if u >= v { u - v } else { u + p - v };
                wn = wn * w % p;
            }
        }
        len <<= 1;
    }
    if invert {
        let inv = pow_mod(n as u64, p - 2, p);
        a.iter_mut().for_each(|x| *x = *x * inv % p);
    }
}

/// Exact product of nonnegative integer polynomials whose result fits in u64.
fn ntt_multiply(a: &[u64], b: &[u64]) -> Vec<u64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let residues: Vec<Vec<u64>> = PRIMES
        .iter()
        .map(|&p| {
            let mut fa: Vec<u64> = a.iter().map(|x| x % p).chain(std::iter::repeat(0)).take(size).collect();
            let mut fb: Vec<u64> = b.iter().map(|x| x % p).chain(std::iter::repeat(0)).take(size).collect();
            ntt(&mut fa, p, false);
            ntt(&mut fb, p, false);
            fa.iter_mut().zip(&fb).for_each(|(x, y)| *x = *x * y % p);
            ntt(&mut fa, p, true);
            fa.truncate(len);
            fa
        })
        .collect();
    let (p0, p1, p2) = (PRIMES[0] as u128, PRIMES[1] as u128, PRIMES[2] as u128);
    let inv_p0_mod_p1 = pow_mod(PRIMES[0] % PRIMES[1], PRIMES[1] - 2, PRIMES[1]) as u128;
    let p01_mod_p2 = p0 * p1 % p2;
    let inv_p01_mod_p2 = pow_mod(p01_mod_p2 as u64, PRIMES[2] - 2, PRIMES[2]) as u128;
    (0..len)
        .map(|i| {
            // Garner: x = r0 + p0 * (c1 + p1 * c2)
            let (r0, r1, r2) = (residues[0][i] as u128, residues[1][i] as u128, residues[2][i] as u128);
            let c1 = (r1 + p1 - r0 % p1) % p1 * inv_p0_mod_p1 % p1;
            let x01 = r0 + p0 * c1;
            let c2 = (r2 + p2 - x01 % p2) % p2 * inv_p01_mod_p2 % p2;
            (x01 + p0 * p1 * c2) as u64
        })
        .collect()
}
