use rand::Rng as _;
use visaid::features::{footprint_cells, gaussian_radius, render_heatmap, GridSpec};
use visaid::geometry::Box3D;
use visaid::rng;

use super::{ensure, Check};

/// Fine grid so that car-sized boxes span several cells.
fn fine_grid() -> GridSpec {
    GridSpec {
        origin: (-8.8, -41.6),
        cell_length: 0.26,
        cell_width: 0.22,
        nx: 80,
        ny: 320,
    }
}

/// Renders random boxes and checks the peak value and the window support.
pub fn keypoint_and_window(cases: usize) -> Check {
    let g = fine_grid();
    let mut r = rng::stream(201, &[]);
    for k in 0..cases {
        let b = Box3D::on_ground(
            r.random_range(2.5..12.0),
            r.random_range(1.5..3.3),
            1.5,
            r.random_range(-8.0..8.0),
            r.random_range(-40.0..40.0),
            0.0,
        );
        let t = render_heatmap(&b, &g, 0.3).map_err(|e| e.to_string())?;
        let (kx, ky) = g.cell_of(b.center[0], b.center[1]).ok_or("center off the grid")?;
        ensure(t.get(0, kx, ky) == 1.0, || format!("case {k}: keypoint holds {}", t.get(0, kx, ky)))?;
        let (l, w) = footprint_cells(&b, &g);
        let radius = gaussian_radius(l, w, 0.3).map_err(|e| e.to_string())?.floor() as i64;
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let reach = (ix as i64 - kx as i64).abs().max((iy as i64 - ky as i64).abs());
                let v = t.get(0, ix, iy);
                let ok = if reach > radius { v == 0.0 } else { v > 0.0 && v <= 1.0 };
                ensure(ok, || format!("case {k}: cell ({ix}, {iy}) at reach {reach} of {radius} holds {v}"))?;
            }
        }
    }
    Ok(())
}

/// IoU of two axis-aligned rectangles given as `(x0, y0, x1, y1)`.
fn rect_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let area = |r: [f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let inter = area([a[0].max(b[0]), a[1].max(b[1]), a[2].min(b[2]), a[3].min(b[3])]);
    inter / (area(a) + area(b) - inter)
}

/// Moves the corners of random rectangles by the computed radius in the
/// three ways it guards against. The worst case must keep the overlap
/// target, and meet it exactly since the radius is the largest safe one.
pub fn corner_displacement(sizes: usize, min_iou: f64) -> Check {
    let mut r = rng::stream(202, &[]);
    for _ in 0..sizes {
        let (l, w) = (r.random_range(1..=40usize), r.random_range(1..=40usize));
        let rad = gaussian_radius(l, w, min_iou).map_err(|e| e.to_string())?;
        let (lf, wf) = (l as f64, w as f64);
        let base = [0.0, 0.0, lf, wf];
        let worst = [
            [rad, rad, lf + rad, wf + rad],
            [rad, rad, lf - rad, wf - rad],
            [-rad, -rad, lf + rad, wf + rad],
        ]
        .into_iter()
        .map(|moved| rect_iou(base, moved))
        .fold(f64::INFINITY, f64::min);
        ensure(worst >= min_iou - 1e-6, || {
            format!("{l}x{w}: radius {rad} leaves iou {worst} < {min_iou}")
        })?;
        ensure((worst - min_iou).abs() < 1e-6, || {
            format!("{l}x{w}: radius {rad} is not tight, worst iou {worst}")
        })?;
    }
    Ok(())
}
