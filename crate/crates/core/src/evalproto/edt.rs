//! Exact squared Euclidean distance transform (lower envelope of parabolas,
//! one pass per axis). Breakpoints are kept as exact rationals.

use super::mask::BinaryMask;

/// Squared distance from every set pixel to the nearest unset pixel, where
/// the ring just outside the image counts as unset. Unset pixels get 0.
pub fn squared_edt(mask: &BinaryMask) -> Vec<u64> {
    let (h, w) = (mask.h(), mask.w());
    let (ph, pw) = (h + 2, w + 2);
    let inside = |y: usize, x: usize| y >= 1 && y <= h && x >= 1 && x <= w && mask.get(y - 1, x - 1);

    // Every padded row has an unset pixel at both ends, so row distances are finite.
    let mut g = vec![0i64; ph * pw];
    let mut f = vec![0i64; pw.max(ph)];
    let mut d = vec![0i64; pw.max(ph)];
    for y in 0..ph {
        for x in 0..pw {
            f[x] = if inside(y, x) { i64::MAX } else { 0 };
        }
        envelope(&f[..pw], &mut d[..pw]);
        g[y * pw..(y + 1) * pw].copy_from_slice(&d[..pw]);
    }
    let mut out = vec![0u64; h * w];
    for x in 1..=w {
        for y in 0..ph {
            f[y] = g[y * pw + x];
        }
        envelope(&f[..ph], &mut d[..ph]);
        for y in 1..=h {
            out[(y - 1) * w + (x - 1)] = d[y] as u64;
        }
    }
    out
}

/// Rational `num / den` with `den > 0`.
#[derive(Clone, Copy)]
struct Frac {
    num: i128,
    den: i128,
}

impl Frac {
    fn le(self, o: Frac) -> bool {
        self.num * o.den <= o.num * self.den
    }

    fn lt_int(self, q: i128) -> bool {
        self.num < q * self.den
    }
}

/// 1D transform `d(q) = min_p (q − p)² + f(p)` over sites with finite `f`.
fn envelope(f: &[i64], d: &mut [i64]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<Frac> = Vec::with_capacity(n + 1);
    let inf = Frac { num: 1, den: 0 };
    let intersect = |p: usize, q: usize| {
        let (p2, q2) = (p as i128 * p as i128, q as i128 * q as i128);
        Frac {
            num: (f[q] as i128 + q2) - (f[p] as i128 + p2),
            den: 2 * (q as i128 - p as i128),
        }
    };
    for q in 0..n {
        if f[q] == i64::MAX {
            continue;
        }
        if v.is_empty() {
            v.push(q);
            z.clear();
            z.push(Frac { num: -1, den: 0 });
            z.push(inf);
            continue;
        }
        let mut s = intersect(*v.last().unwrap(), q);
        while v.len() > 1 && s.le(z[v.len() - 1]) {
            v.pop();
            z.pop();
            s = intersect(*v.last().unwrap(), q);
        }
        z.pop();
        z.push(s);
        z.push(inf);
        v.push(q);
    }
    if v.is_empty() {
        d.fill(i64::MAX);
        return;
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        // z[k + 1] = +∞ (den 0) never compares below q.
        while z[k + 1].den != 0 && z[k + 1].lt_int(q as i128) {
            k += 1;
        }
        let dq = q as i64 - v[k] as i64;
        *out = dq * dq + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(mask: &BinaryMask) -> Vec<u64> {
        let (h, w) = (mask.h() as i64, mask.w() as i64);
        let mut bg = Vec::new();
        for y in -1..=h {
            for x in -1..=w {
                let inside = y >= 0 && y < h && x >= 0 && x < w && mask.get(y as usize, x as usize);
                if !inside {
                    bg.push((y, x));
                }
            }
        }
        (0..h * w)
            .map(|i| {
                let (y, x) = (i / w, i % w);
                bg.iter()
                    .map(|&(by, bx)| ((by - y).pow(2) + (bx - x).pow(2)) as u64)
                    .min()
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn full_mask_measures_to_border() {
        let m = BinaryMask::from_fn(5, 5, |_, _| true).unwrap();
        let d = squared_edt(&m);
        assert_eq!(d[12], 9);
        assert_eq!(d[0], 1);
        assert_eq!(d, brute(&m));
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut r = crate::rng::SplitMix64::new(17);
        for _ in 0..100 {
            let h = 1 + r.below(20);
            let w = 1 + r.below(20);
            let p = r.next_f64();
            let bits = (0..h * w).map(|_| r.next_f64() < p).collect();
            let m = BinaryMask::new(h, w, bits).unwrap();
            assert_eq!(squared_edt(&m), brute(&m));
        }
    }
}
