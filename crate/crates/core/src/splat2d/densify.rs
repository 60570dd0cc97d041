use super::gaussian::{Gaussian2D, GaussianCloud};

/// Scale divisor applied to both halves of a split primitive.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyParams {
    /// Mean positional-gradient magnitude above which a primitive densifies.
    pub grad_threshold: f64,
    /// Primitives whose largest scale (px) exceeds this are split, smaller
    /// ones are cloned.
    pub scale_split_threshold: f64,
    /// Primitives with opacity below this are removed.
    pub opacity_floor: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyStats {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Clone or split high-gradient primitives, drop transparent ones, reset the
/// gradient statistics and update the peak count.
///
/// Clones are exact copies with the color of both copies halved, so the
/// additive rendering is unchanged. Splits replace a primitive by two
/// copies offset by half its major scale along the major axis, each with
/// scales divided by [`SPLIT_SCALE_DIVISOR`].
pub fn densify_and_prune(cloud: &mut GaussianCloud, params: &DensifyParams) -> DensifyStats {
    let n = cloud.len();
    let mut stats = DensifyStats::default();
    let mut keep = vec![true; n];
    let mut born: Vec<Gaussian2D> = Vec::new();
    for i in 0..n {
        let count = cloud.grad_count[i];
        if count == 0 || cloud.grad_accum[i] / count as f64 <= params.grad_threshold {
            continue;
        }
        let g = cloud.gaussians[i];
        if g.max_scale() <= params.scale_split_threshold {
            let mut half = g;
            half.color.iter_mut().for_each(|c| *c *= 0.5);
            cloud.gaussians[i] = half;
            born.push(half);
            stats.cloned += 1;
        } else {
            let axis = g.major_axis();
            let offset = 0.5 * g.max_scale();
            let shrink = SPLIT_SCALE_DIVISOR.ln();
            for sign in [1.0, -1.0] {
                let mut child = g;
                child.mean = [g.mean[0] + sign * offset * axis[0], g.mean[1] + sign * offset * axis[1]];
                child.log_scale = [g.log_scale[0] - shrink, g.log_scale[1] - shrink];
                born.push(child);
            }
            keep[i] = false;
            stats.split += 1;
        }
    }
    for g in born {
        cloud.push(g);
        keep.push(true);
    }
    cloud.update_peak();
    for (k, g) in keep.iter_mut().zip(&cloud.gaussians) {
        if *k && g.opacity() < params.opacity_floor {
            *k = false;
            stats.pruned += 1;
        }
    }
    cloud.retain_mask(&keep);
    cloud.reset_stats();
    stats
}
