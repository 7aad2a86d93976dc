use alloc::vec;

use super::DeformationField2D;
use crate::image::Image2D;

/// Thirion's demons: the intensity difference drives each node along the
/// fixed-image gradient, normalized by `|grad F|^2 + diff^2`; the whole field
/// is Gaussian-smoothed after every iteration.
pub fn register_demons(fixed: &Image2D, moving: &Image2D, iters: usize, sigma: f64) -> DeformationField2D {
    let (w, h) = fixed.dims();
    let n = w * h;
    let (gx, gy) = fixed.gradient();
    let mut dx = Image2D::new(w, h);
    let mut dy = Image2D::new(w, h);
    let mut buf = vec![0.0; n];
    for _ in 0..iters {
        let mut moved = false;
        for j in 0..h {
            for i in 0..w {
                let k = j * w + i;
                buf[k] = moving.sample(i as f64 + dx.data[k], j as f64 + dy.data[k]);
            }
        }
        for k in 0..n {
            let diff = buf[k] - fixed.data[k];
            let (ax, ay) = (gx.data[k], gy.data[k]);
            let den = ax * ax + ay * ay + diff * diff;
            if den > 1e-12 && diff != 0.0 {
                // moving(x + d) ~ moving(x) + grad . d; step against the residual
                dx.data[k] -= diff * ax / den;
                dy.data[k] -= diff * ay / den;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        dx = dx.gaussian(sigma);
        dy = dy.gaussian(sigma);
    }
    DeformationField2D::from_displacements(w, h, dx.data, dy.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images_give_zero_field() {
        let a = Image2D::from_fn(20, 18, |x, y| ((x * 7 + y * 3) % 11) as f64 / 11.0);
        let f = register_demons(&a, &a, 50, 5.0);
        assert_eq!(f.max_displacement(), 0.0);
    }
}
