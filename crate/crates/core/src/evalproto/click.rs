use super::edt::squared_edt;
use super::mask::BinaryMask;
use crate::error::{contract_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Click {
    pub x: usize,
    pub y: usize,
    pub polarity: Polarity,
}

impl Click {
    pub fn is_positive(&self) -> bool {
        self.polarity == Polarity::Positive
    }
}

/// Deepest pixel of a region: `(squared distance, row-major index)`, the
/// smallest index among ties.
fn deepest(region: &BinaryMask) -> Option<(u64, usize)> {
    let d = squared_edt(region);
    let mut best: Option<(u64, usize)> = None;
    for (i, &v) in d.iter().enumerate() {
        if region.bits()[i] && best.is_none_or(|(b, _)| v > b) {
            best = Some((v, i));
        }
    }
    best
}

/// Click at the center of the larger error region.
///
/// False negatives (`gt ∖ pred`) and false positives (`pred ∖ gt`) each
/// get an exact distance transform to their complement, with the image
/// border as boundary. The region whose deepest pixel is farther from its
/// boundary wins, false negatives on ties; the click goes on that pixel and
/// is positive iff it fixes a false negative.
pub fn next_click(pred: &BinaryMask, gt: &BinaryMask) -> Result<Click> {
    pred.same_extents(gt)?;
    let fn_best = deepest(&gt.minus(pred)?);
    let fp_best = deepest(&pred.minus(gt)?);
    let (idx, polarity) = match (fn_best, fp_best) {
        (None, None) => return contract_err("prediction equals ground truth; no click needed"),
        (Some((_, i)), None) => (i, Polarity::Positive),
        (None, Some((_, i))) => (i, Polarity::Negative),
        (Some((dn, i)), Some((dp, j))) => {
            if dn >= dp {
                (i, Polarity::Positive)
            } else {
                (j, Polarity::Negative)
            }
        }
    };
    Ok(Click {
        x: idx % gt.w(),
        y: idx / gt.w(),
        polarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_square_gets_center_click() {
        let gt = BinaryMask::from_fn(9, 9, |y, x| (2..7).contains(&y) && (2..7).contains(&x)).unwrap();
        let c = next_click(&BinaryMask::empty(9, 9).unwrap(), &gt).unwrap();
        assert_eq!((c.x, c.y, c.polarity), (4, 4, Polarity::Positive));
    }

    #[test]
    fn single_false_positive_pixel() {
        let mut pred = BinaryMask::empty(6, 6).unwrap();
        pred.set(3, 1, true);
        let c = next_click(&pred, &BinaryMask::empty(6, 6).unwrap()).unwrap();
        assert_eq!((c.x, c.y, c.polarity), (1, 3, Polarity::Negative));
    }

    #[test]
    fn tie_goes_to_false_negative() {
        // Mirror-image single-pixel errors of equal depth.
        let gt = BinaryMask::from_fn(3, 6, |y, x| y == 1 && x == 1).unwrap();
        let pred = BinaryMask::from_fn(3, 6, |y, x| y == 1 && x == 4).unwrap();
        let c = next_click(&pred, &gt).unwrap();
        assert_eq!((c.x, c.y, c.polarity), (1, 1, Polarity::Positive));
    }

    #[test]
    fn no_error_is_a_contract_error() {
        let m = BinaryMask::from_fn(3, 3, |y, _| y == 0).unwrap();
        assert!(matches!(next_click(&m, &m), Err(crate::Error::Contract(_))));
    }
}
