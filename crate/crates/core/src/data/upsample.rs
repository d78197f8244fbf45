use crate::error::{Error, Result};

/// Inserts `factor - 1` linear interpolants between consecutive points.
/// Output length is `factor * (n - 1) + 1`.
pub fn upsample_bilinear(values: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor < 2 {
        return Err(Error::Config(format!("upsampling factor must be at least 2, got {factor}")));
    }
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "cannot interpolate a series of length {}",
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(factor * (values.len() - 1) + 1);
    for w in values.windows(2) {
        out.push(w[0]);
        for j in 1..factor {
            let a = j as f64 / factor as f64;
            out.push(w[0] + a * (w[1] - w[0]));
        }
    }
    out.push(values[values.len() - 1]);
    Ok(out)
}
