use crate::error::{contract_err, shape_err, Result};
use crate::tensor::{Scalar, Tensor};

pub const ROPE_BASE: f64 = 10_000.0;

/// 2D axial rotary embedding with the default base.
pub fn rope_apply<T: Scalar>(x: &Tensor<T>, positions: &[(i64, i64)]) -> Result<Tensor<T>> {
    rope_apply_with_base(x, positions, ROPE_BASE)
}

/// Rotates channel pairs of each row by position-dependent angles.
///
/// The first `d/2` channels encode `px`, the last `d/2` encode `py`. Within
/// each half, the pair `(2j, 2j+1)` turns by `θ_j · p` with
/// `θ_j = base^(−2j/(d/2))`.
pub fn rope_apply_with_base<T: Scalar>(
    x: &Tensor<T>,
    positions: &[(i64, i64)],
    base: f64,
) -> Result<Tensor<T>> {
    let (len, d) = x.dims2()?;
    if d % 4 != 0 {
        return contract_err(format!("RoPE width {d} is not divisible by 4"));
    }
    if positions.len() != len {
        return shape_err(format!("{} positions for {len} rows", positions.len()));
    }
    let half = d / 2;
    let theta: Vec<f64> = (0..half / 2)
        .map(|j| base.powf(-2.0 * j as f64 / half as f64))
        .collect();
    let mut out = x.clone();
    for (row, &(px, py)) in positions.iter().enumerate() {
        let r = out.row_mut(row);
        for (axis, p) in [px, py].into_iter().enumerate() {
            if p == 0 {
                continue;
            }
            let chans = &mut r[axis * half..(axis + 1) * half];
            for (pair, &t) in chans.chunks_exact_mut(2).zip(&theta) {
                let (sin, cos) = (t * p as f64).sin_cos();
                let (s, c) = (T::from_f64(sin), T::from_f64(cos));
                let (a, b) = (pair[0], pair[1]);
                pair[0] = a * c - b * s;
                pair[1] = a * s + b * c;
            }
        }
    }
    Ok(out)
}
