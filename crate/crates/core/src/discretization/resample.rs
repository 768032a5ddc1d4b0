//! Transfer of profiles between grids by local cubic interpolation of
//! `u / r^|m|`, which is smooth and even in `r` for equivariant states.

use num_complex::Complex64;

use super::grid::RadialGrid;
use crate::error::Result;

pub fn resample(u: &[Complex64], from: &RadialGrid, to: &RadialGrid, m: i64) -> Result<Vec<Complex64>> {
    from.check_len(u.len())?;
    let k = m.unsigned_abs() as i32;
    let src = from.nodes();
    // even extension through the origin
    let mut xs = vec![-src[1], -src[0]];
    xs.extend_from_slice(src);
    let mut vs = vec![u[1] / src[1].powi(k), u[0] / src[0].powi(k)];
    vs.extend(u.iter().zip(src).map(|(v, r)| v / r.powi(k)));
    let last = *src.last().unwrap();
    Ok(to
        .nodes()
        .iter()
        .map(|&r| {
            if r > from.rmax() {
                return Complex64::new(0.0, 0.0);
            }
            let x = r.min(last);
            let pos = xs.partition_point(|&p| p < x);
            let lo = pos.saturating_sub(2).min(xs.len() - 4);
            let pts = &xs[lo..lo + 4];
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..4 {
                let mut l = 1.0;
                for a in 0..4 {
                    if a != j {
                        l *= (x - pts[a]) / (pts[j] - pts[a]);
                    }
                }
                acc += vs[lo + j] * l;
            }
            acc * r.powi(k)
        })
        .collect())
}
