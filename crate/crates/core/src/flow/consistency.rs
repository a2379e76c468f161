use crate::error::{Error, Result};
use crate::kernels::{sample_into, BinaryMap};

use super::FlowPair;

/// Default forward–backward tolerance in pixels.
pub const DEFAULT_EPS: f64 = 0.5;

/// Forward–backward check: `valid(p)` iff
/// `‖forward(p) + backward(p + forward(p))‖₂ < eps`, with the backward field
/// sampled bilinearly (border clamp). In the returned map `true` = valid.
pub fn flow_consistency(pair: &FlowPair, eps: f64) -> Result<BinaryMap> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let (h, w) = (pair.forward.height(), pair.forward.width());
    let back = pair.backward.as_map();
    let mut b = [0.0; 2];
    Ok(BinaryMap::from_fn(h, w, |y, x| {
        let (u, v) = (pair.forward.u(y, x), pair.forward.v(y, x));
        sample_into(back, y as f64 + v, x as f64 + u, &mut b);
        (u + b[0]).hypot(v + b[1]) < eps
    }))
}
