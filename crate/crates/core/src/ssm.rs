//! Linear time-invariant state-space models with diagonal `A`.
//!
//! Every channel carries its own `N`-dimensional state. Continuous
//! parameters `(A, B, C, Δ)` are discretized by zero-order hold and run
//! either as a recurrence ([`ssm_scan`]) or as a causal convolution with the
//! unrolled kernel ([`ssm_kernel`], [`ssm_conv`]).
//!
//! [`cycle_scan`] runs the recurrence over the sequence repeated three
//! times back to back and sums the three output segments, so every token
//! sees state accumulated from the whole sequence.

use crate::error::{contract_err, shape_err, Result};
use crate::rng::SplitMix64;
use crate::tensor::{lit, Scalar, Tensor};

/// Below this `|Δa|` the input matrix uses its second-order Taylor form.
pub const TAYLOR_THRESHOLD: f64 = 1e-8;

/// Continuous parameters for `C` channels with `N` states each.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams<T> {
    /// Diagonal of `A`, `[C, N]`, all negative.
    pub a: Tensor<T>,
    /// `[C, N]`
    pub b: Tensor<T>,
    /// `[C, N]`
    pub c: Tensor<T>,
    /// Per-channel step `Δ`, `[C]`, all positive.
    pub delta: Tensor<T>,
}

impl<T: Scalar> SsmParams<T> {
    pub fn new(a: Tensor<T>, b: Tensor<T>, c: Tensor<T>, delta: Tensor<T>) -> Result<Self> {
        let p = Self { a, b, c, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn channels(&self) -> usize {
        self.a.shape()[0]
    }

    pub fn state_dim(&self) -> usize {
        self.a.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let (ch, n) = self.a.dims2()?;
        if self.b.shape() != [ch, n] || self.c.shape() != [ch, n] || self.delta.shape() != [ch] {
            return shape_err(format!(
                "SSM parameter shapes disagree: A {:?}, B {:?}, C {:?}, Δ {:?}",
                self.a.shape(),
                self.b.shape(),
                self.c.shape(),
                self.delta.shape()
            ));
        }
        if let Some(d) = self.delta.data().iter().find(|&&d| !(d > T::zero())) {
            return contract_err(format!("Δ must be positive, got {d:?}"));
        }
        if let Some(a) = self.a.data().iter().find(|&&a| !(a < T::zero())) {
            return contract_err(format!("A entries must be negative, got {a:?}"));
        }
        Ok(())
    }

    /// `A_n = −(n + 1)`, `B = 1`, `C ~ N(0, 1/N)`, `Δ` log-uniform in
    /// `[0.001, 0.1]` per channel.
    pub fn init(channels: usize, n: usize, rng: &mut SplitMix64) -> Result<Self> {
        let a = Tensor::from_fn(&[channels, n], |i| lit(-((i % n) as f64 + 1.0)))?;
        let b = Tensor::full(&[channels, n], T::one())?;
        let std = 1.0 / (n as f64).sqrt();
        let c = Tensor::from_fn(&[channels, n], |_| lit(rng.next_normal() * std))?;
        let (lo, hi) = (0.001f64.ln(), 0.1f64.ln());
        let delta = Tensor::from_fn(&[channels], |_| lit((lo + (hi - lo) * rng.next_f64()).exp()))?;
        Self::new(a, b, c, delta)
    }
}

/// Discretized parameters, `[C, N]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmDiscrete<T> {
    pub a_bar: Tensor<T>,
    pub b_bar: Tensor<T>,
    pub c_bar: Tensor<T>,
}

impl<T: Scalar> SsmDiscrete<T> {
    pub fn channels(&self) -> usize {
        self.a_bar.shape()[0]
    }

    pub fn state_dim(&self) -> usize {
        self.a_bar.shape()[1]
    }

    /// `(Ā, B̄, C̄)` rows of one channel.
    pub fn channel(&self, ch: usize) -> (&[T], &[T], &[T]) {
        (self.a_bar.row(ch), self.b_bar.row(ch), self.c_bar.row(ch))
    }
}

/// Zero-order hold: `Ā = exp(Δa)`, `B̄ = (exp(Δa) − 1)/a · B`, `C̄ = C`.
///
/// For `|Δa| < 1e-8` the input matrix uses `B̄ = Δ·B·(1 + Δa/2)`.
pub fn zoh_discretize<T: Scalar>(p: &SsmParams<T>) -> Result<SsmDiscrete<T>> {
    p.validate()?;
    let (ch, n) = p.a.dims2()?;
    let mut a_bar = Vec::with_capacity(ch * n);
    let mut b_bar = Vec::with_capacity(ch * n);
    for c in 0..ch {
        let delta = p.delta.data()[c];
        for (&a, &b) in p.a.row(c).iter().zip(p.b.row(c)) {
            let da = delta * a;
            a_bar.push(da.exp());
            let coeff = if da.abs() < lit(TAYLOR_THRESHOLD) {
                delta * (T::one() + da / lit(2.0))
            } else {
                da.exp_m1() / a
            };
            b_bar.push(coeff * b);
        }
    }
    Ok(SsmDiscrete {
        a_bar: Tensor::new(&[ch, n], a_bar)?,
        b_bar: Tensor::new(&[ch, n], b_bar)?,
        c_bar: p.c.clone(),
    })
}

/// Recurrence for one channel: `h_t = Ā⊙h_{t−1} + B̄·x_t`, `y_t = ⟨C̄, h_t⟩`.
pub fn scan_channel<T: Scalar>(a_bar: &[T], b_bar: &[T], c_bar: &[T], x: &[T]) -> Vec<T> {
    let mut h = vec![T::zero(); a_bar.len()];
    scan_channel_from(&mut h, a_bar, b_bar, c_bar, x.iter().copied())
}

/// Continues a recurrence from state `h`, which is updated in place.
fn scan_channel_from<T: Scalar>(
    h: &mut [T],
    a_bar: &[T],
    b_bar: &[T],
    c_bar: &[T],
    x: impl Iterator<Item = T>,
) -> Vec<T> {
    x.map(|xt| {
        let mut y = T::zero();
        for (((hn, &a), &b), &c) in h.iter_mut().zip(a_bar).zip(b_bar).zip(c_bar) {
            *hn = a * *hn + b * xt;
            y += c * *hn;
        }
        y
    })
    .collect()
}

fn channel_column<T: Scalar>(x: &Tensor<T>, ch: usize) -> Vec<T> {
    let (l, c) = x.dims2().expect("checked by caller");
    (0..l).map(|t| x.data()[t * c + ch]).collect()
}

fn check_tokens<T: Scalar>(x: &Tensor<T>, channels: usize) -> Result<usize> {
    let (l, c) = x.dims2()?;
    if c != channels {
        return shape_err(format!("{c} token channels, SSM has {channels}"));
    }
    Ok(l)
}

/// Runs every channel of an `[L, C]` sequence through its own recurrence.
pub fn ssm_scan<T: Scalar>(d: &SsmDiscrete<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let l = check_tokens(x, d.channels())?;
    let c = d.channels();
    let mut out = vec![T::zero(); l * c];
    for ch in 0..c {
        let (a, b, cc) = d.channel(ch);
        let y = scan_channel(a, b, cc, &channel_column(x, ch));
        for (t, v) in y.into_iter().enumerate() {
            out[t * c + ch] = v;
        }
    }
    Tensor::new(&[l, c], out)
}

/// Convolution kernel `K̄_j = ⟨C̄, Ā^j ⊙ B̄⟩` for `j < len`, one channel.
pub fn ssm_kernel<T: Scalar>(d: &SsmDiscrete<T>, ch: usize, len: usize) -> Vec<T> {
    let (a, b, c) = d.channel(ch);
    let mut pow_b = b.to_vec();
    (0..len)
        .map(|_| {
            let k = pow_b.iter().zip(c).map(|(&p, &cc)| cc * p).sum();
            for (p, &aa) in pow_b.iter_mut().zip(a) {
                *p *= aa;
            }
            k
        })
        .collect()
}

/// Causal convolution `y_t = Σ_{j ≤ t} K̄_j · x_{t−j}` (direct, `O(L²)`).
pub fn ssm_conv<T: Scalar>(x: &[T], kernel: &[T]) -> Vec<T> {
    (0..x.len())
        .map(|t| (0..=t.min(kernel.len().saturating_sub(1))).map(|j| kernel[j] * x[t - j]).sum())
        .collect()
}

/// Scan over `[T; T; T]`, then sum the three `L`-long output segments.
///
/// The tripled sequence is never built: the recurrence runs three passes
/// over the input, carrying its state between them.
pub fn cycle_scan<T: Scalar>(tokens: &Tensor<T>, p: &SsmParams<T>) -> Result<Tensor<T>> {
    let d = zoh_discretize(p)?;
    cycle_scan_discrete(tokens, &d)
}

pub fn cycle_scan_discrete<T: Scalar>(tokens: &Tensor<T>, d: &SsmDiscrete<T>) -> Result<Tensor<T>> {
    let l = check_tokens(tokens, d.channels())?;
    let c = d.channels();
    let mut out = vec![T::zero(); l * c];
    let mut h = vec![T::zero(); d.state_dim()];
    for ch in 0..c {
        let (a, b, cc) = d.channel(ch);
        let col = channel_column(tokens, ch);
        h.fill(T::zero());
        let segments: Vec<Vec<T>> = (0..3)
            .map(|_| scan_channel_from(&mut h, a, b, cc, col.iter().copied()))
            .collect();
        for t in 0..l {
            out[t * c + ch] = segments[0][t] + segments[1][t] + segments[2][t];
        }
    }
    Tensor::new(&[l, c], out)
}

/// How cycle-scan treats a multi-scale token set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanMode {
    /// Each scale scanned on its own.
    Single,
    /// All scales concatenated (in order) and scanned as one sequence.
    Multi,
}

pub fn multi_scale_cycle_scan<T: Scalar>(
    scales: &[Tensor<T>],
    p: &SsmParams<T>,
    mode: ScanMode,
) -> Result<Vec<Tensor<T>>> {
    if scales.is_empty() {
        return contract_err("multi-scale cycle-scan needs at least one scale");
    }
    let d = zoh_discretize(p)?;
    match mode {
        ScanMode::Single => scales.iter().map(|s| cycle_scan_discrete(s, &d)).collect(),
        ScanMode::Multi => {
            let c = d.channels();
            let mut lens = Vec::with_capacity(scales.len());
            let mut all = Vec::new();
            for s in scales {
                lens.push(check_tokens(s, c)?);
                all.extend_from_slice(s.data());
            }
            let total: usize = lens.iter().sum();
            let out = cycle_scan_discrete(&Tensor::new(&[total, c], all)?, &d)?;
            let mut parts = Vec::with_capacity(lens.len());
            let mut rest = out.data();
            for l in lens {
                let (head, tail) = rest.split_at(l * c);
                parts.push(Tensor::new(&[l, c], head.to_vec())?);
                rest = tail;
            }
            Ok(parts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_fill;

    fn params(ch: usize, n: usize, seed: u64) -> SsmParams<f64> {
        SsmParams::init(ch, n, &mut SplitMix64::new(seed)).unwrap()
    }

    fn single(a: f64, b: f64, c: f64, delta: f64) -> SsmParams<f64> {
        let t = |v: f64| Tensor::new(&[1, 1], vec![v]).unwrap();
        SsmParams::new(t(a), t(b), t(c), Tensor::new(&[1], vec![delta]).unwrap()).unwrap()
    }

    #[test]
    fn zoh_small_step_limit() {
        let d = zoh_discretize(&single(-1.0, 2.0, 1.0, 1e-12)).unwrap();
        assert!((d.a_bar.data()[0] - 1.0).abs() < 1e-11);
        assert!((d.b_bar.data()[0] - 2e-12).abs() < 1e-22);
    }

    #[test]
    fn zoh_ln2_closed_form() {
        let d = zoh_discretize(&single(-1.0, 3.0, 0.7, std::f64::consts::LN_2)).unwrap();
        assert!((d.a_bar.data()[0] - 0.5).abs() <= 1e-16);
        assert!((d.b_bar.data()[0] - 1.5).abs() <= 1e-15);
        assert_eq!(d.c_bar.data()[0].to_bits(), 0.7f64.to_bits());
    }

    #[test]
    fn zoh_branches_agree_at_threshold() {
        let a = -1.0;
        for delta in [0.999_999e-8, 1.000_001e-8] {
            let d = zoh_discretize(&single(a, 1.0, 1.0, delta)).unwrap();
            let exact = (delta * a).exp_m1() / a;
            let taylor = delta * (1.0 + delta * a / 2.0);
            assert!((d.b_bar.data()[0] - exact).abs() <= 1e-10);
            assert!((exact - taylor).abs() <= 1e-10);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let t = |v: f64| Tensor::new(&[1, 1], vec![v]).unwrap();
        let delta = |v: f64| Tensor::new(&[1], vec![v]).unwrap();
        assert!(SsmParams::new(t(-1.0), t(1.0), t(1.0), delta(0.0)).is_err());
        assert!(SsmParams::new(t(0.5), t(1.0), t(1.0), delta(0.1)).is_err());
    }

    #[test]
    fn impulse_response_is_kernel() {
        let p = params(1, 8, 3);
        let d = zoh_discretize(&p).unwrap();
        let (a, b, c) = d.channel(0);
        let mut x = vec![0.0; 12];
        x[0] = 1.0;
        let y = scan_channel(a, b, c, &x);
        let k = ssm_kernel(&d, 0, 12);
        for (yy, kk) in y.iter().zip(&k) {
            assert!((yy - kk).abs() <= 1e-15);
        }
        let k0: f64 = b.iter().zip(c).map(|(x, y)| x * y).sum();
        assert_eq!(k[0], k0);
    }

    fn memoryless(ch: usize, n: usize) -> SsmDiscrete<f64> {
        let p = params(ch, n, 4);
        let mut d = zoh_discretize(&p).unwrap();
        d.a_bar = Tensor::zeros(&[ch, n]).unwrap();
        d
    }

    #[test]
    fn zero_memory_scan_and_kernel() {
        let d = memoryless(2, 4);
        let x = rng_fill::<f64>(&[10, 2], 5, -1.0, 1.0).unwrap();
        let y = ssm_scan(&d, &x).unwrap();
        for ch in 0..2 {
            let (_, b, c) = d.channel(ch);
            let cb: f64 = b.iter().zip(c).map(|(x, y)| x * y).sum();
            for t in 0..10 {
                assert!((y.row(t)[ch] - cb * x.row(t)[ch]).abs() <= 1e-15);
            }
            let k = ssm_kernel(&d, ch, 5);
            assert_eq!(k[0], cb);
            assert!(k[1..].iter().all(|&v| v == 0.0));
        }
        let cyc = cycle_scan_discrete(&x, &d).unwrap();
        assert!(cyc.max_abs_diff(&y.scale(3.0)).unwrap() <= 1e-14);
    }

    #[test]
    fn scan_equals_conv() {
        for n in [1, 8, 32] {
            let d = zoh_discretize(&params(3, n, n as u64)).unwrap();
            for l in [1, 2, 17, 256] {
                let x = rng_fill::<f64>(&[l, 3], l as u64, -1.0, 1.0).unwrap();
                let y = ssm_scan(&d, &x).unwrap();
                for ch in 0..3 {
                    let col: Vec<f64> = (0..l).map(|t| x.row(t)[ch]).collect();
                    let conv = ssm_conv(&col, &ssm_kernel(&d, ch, l));
                    for t in 0..l {
                        assert!((conv[t] - y.row(t)[ch]).abs() <= 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn single_token_cycle_scan() {
        let p = params(2, 4, 6);
        let d = zoh_discretize(&p).unwrap();
        let x = rng_fill::<f64>(&[1, 2], 7, -1.0, 1.0).unwrap();
        let out = cycle_scan(&x, &p).unwrap();
        for ch in 0..2 {
            let (a, b, c) = d.channel(ch);
            let xv = x.data()[ch];
            let y = scan_channel(a, b, c, &[xv, xv, xv]);
            assert_eq!(out.data()[ch], y[0] + y[1] + y[2]);
        }
    }

    #[test]
    fn cycle_scan_equals_explicit_tripling() {
        let p = params(4, 8, 8);
        let d = zoh_discretize(&p).unwrap();
        let x = rng_fill::<f64>(&[19, 4], 9, -1.0, 1.0).unwrap();
        let out = cycle_scan(&x, &p).unwrap();
        let mut tripled = x.data().to_vec();
        tripled.extend_from_slice(x.data());
        tripled.extend_from_slice(x.data());
        let y = ssm_scan(&d, &Tensor::new(&[57, 4], tripled).unwrap()).unwrap();
        for t in 0..19 {
            for ch in 0..4 {
                let s = y.row(t)[ch] + y.row(t + 19)[ch] + y.row(t + 38)[ch];
                assert!((out.row(t)[ch] - s).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn channel_permutation_equivariance() {
        let p = params(3, 4, 10);
        let perm = [2usize, 0, 1];
        let permute = |t: &Tensor<f64>| {
            let (r, c) = t.dims2().unwrap();
            Tensor::from_fn(&[r, c], |i| t.data()[(i / c) * c + perm[i % c]]).unwrap()
        };
        let pp = SsmParams::new(
            p.a.permute_rows(&perm),
            p.b.permute_rows(&perm),
            p.c.permute_rows(&perm),
            Tensor::from_fn(&[3], |i| p.delta.data()[perm[i]]).unwrap(),
        )
        .unwrap();
        let x = rng_fill::<f64>(&[9, 3], 11, -1.0, 1.0).unwrap();
        let a = permute(&cycle_scan(&x, &p).unwrap());
        let b = cycle_scan(&permute(&x), &pp).unwrap();
        assert!(a.bit_eq(&b));
    }

    trait RowPerm {
        fn permute_rows(&self, perm: &[usize]) -> Self;
    }

    impl RowPerm for Tensor<f64> {
        fn permute_rows(&self, perm: &[usize]) -> Self {
            let (r, c) = self.dims2().unwrap();
            Tensor::from_fn(&[r, c], |i| self.row(perm[i / c])[i % c]).unwrap()
        }
    }

    #[test]
    fn multi_scale_modes() {
        let p = params(2, 4, 12);
        let one = [rng_fill::<f64>(&[6, 2], 1, -1.0, 1.0).unwrap()];
        let s = multi_scale_cycle_scan(&one, &p, ScanMode::Single).unwrap();
        let m = multi_scale_cycle_scan(&one, &p, ScanMode::Multi).unwrap();
        assert!(s[0].bit_eq(&m[0]));

        let two = [
            rng_fill::<f64>(&[6, 2], 2, -1.0, 1.0).unwrap(),
            rng_fill::<f64>(&[3, 2], 3, -1.0, 1.0).unwrap(),
        ];
        let s = multi_scale_cycle_scan(&two, &p, ScanMode::Single).unwrap();
        let m = multi_scale_cycle_scan(&two, &p, ScanMode::Multi).unwrap();
        assert_eq!(m[1].shape(), &[3, 2]);
        let diff = s[0].max_abs_diff(&m[0]).unwrap().max(s[1].max_abs_diff(&m[1]).unwrap());
        assert!(diff >= 1e-6);
        assert!(multi_scale_cycle_scan::<f64>(&[], &p, ScanMode::Multi).is_err());
    }

    #[test]
    fn bounded_over_long_sequences() {
        let d = zoh_discretize(&params(2, 32, 13)).unwrap();
        assert!(d.a_bar.data().iter().all(|&a| a.abs() < 1.0));
        let x = rng_fill::<f64>(&[4096, 2], 14, -1.0, 1.0).unwrap();
        let y = cycle_scan_discrete(&x, &d).unwrap();
        assert!(y.data().iter().all(|v| v.is_finite()));
    }
}
