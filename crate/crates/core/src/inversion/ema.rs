use crate::error::{Error, Result};
use crate::generator::GeneratorParams;

/// `beta * anchored + (1 - beta) * tuned` over every array, mapping included.
/// Elements that already agree are copied, so untouched arrays stay bit-exact.
pub fn ema_blend(anchored: &GeneratorParams, tuned: &GeneratorParams, beta: f64) -> Result<GeneratorParams> {
    anchored.check_compatible(tuned)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("ema beta must lie in [0, 1], got {beta}")));
    }
    // endpoints are exact copies (no signed-zero drift from 0 * x)
    if beta == 1.0 {
        return Ok(anchored.clone());
    }
    if beta == 0.0 {
        return Ok(tuned.clone());
    }
    let mut out = anchored.clone();
    for ((_, dst), (_, src)) in out.iter_mut().zip(tuned.iter()) {
        dst.data
            .iter_mut()
            .zip(&src.data)
            .filter(|(a, t)| a.to_bits() != t.to_bits())
            .for_each(|(a, t)| *a = beta * *a + (1.0 - beta) * t);
    }
    Ok(out)
}
