use crate::error::{Error, Result};
use crate::types::TactileFrame;

use super::render::{heat_rows, MarkerLayout};

/// Analytic inverse of the renderer: centroid of the heat-channel row
/// profile, weighted by its square, mapped back to `u`.
pub fn oracle_decode(frame: &TactileFrame, layout: &MarkerLayout) -> Result<f64> {
    if frame.size != layout.size {
        return Err(Error::validation(
            "frame",
            format!("frame is {0}x{0}, layout is {1}x{1}", frame.size, layout.size),
        ));
    }
    let rows = heat_rows(frame);
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, h) in rows.iter().enumerate() {
        let w = h * h;
        num += w * (r as f64 + 0.5);
        den += w;
    }
    if den == 0.0 {
        return Err(Error::NoContact);
    }
    Ok((num / den / frame.size as f64).clamp(0.0, 1.0))
}
