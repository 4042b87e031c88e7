//! 2D convex hulls of integer points, used for the per-slice rib-cage hull.

pub type Point = (i64, i64);

fn cross(o: Point, a: Point, b: Point) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull without collinear vertices (monotone chain).
/// Fewer than three distinct points, or all collinear, give a 1- or 2-vertex hull.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Inclusive point-in-hull test for a hull from [`convex_hull`].
pub fn contains(hull: &[Point], p: Point) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0] == p,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, p) == 0
                && p.0 >= a.0.min(b.0)
                && p.0 <= a.0.max(b.0)
                && p.1 >= a.1.min(b.1)
                && p.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
    }
}

/// Rasterizes a hull onto an `nx` by `ny` grid, x fastest.
pub fn rasterize(hull: &[Point], nx: usize, ny: usize) -> Vec<bool> {
    let mut out = vec![false; nx * ny];
    if hull.is_empty() {
        return out;
    }
    let ymin = hull.iter().map(|p| p.1).min().unwrap().max(0) as usize;
    let ymax = (hull.iter().map(|p| p.1).max().unwrap() as usize).min(ny - 1);
    let xmin = hull.iter().map(|p| p.0).min().unwrap().max(0) as usize;
    let xmax = (hull.iter().map(|p| p.0).max().unwrap() as usize).min(nx - 1);
    for y in ymin..=ymax {
        for x in xmin..=xmax {
            out[x + nx * y] = contains(hull, (x as i64, y as i64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_interior_and_collinear_points() {
        let pts = [(0, 0), (2, 0), (4, 0), (4, 4), (0, 4), (2, 2), (0, 2)];
        let h = convex_hull(&pts);
        assert_eq!(h, vec![(0, 0), (4, 0), (4, 4), (0, 4)]);
        assert!(contains(&h, (2, 2)));
        assert!(contains(&h, (4, 2)));
        assert!(!contains(&h, (5, 2)));
        assert_eq!(rasterize(&h, 6, 6).iter().filter(|&&b| b).count(), 25);
    }

    #[test]
    fn degenerate_hulls() {
        let seg = convex_hull(&[(0, 0), (1, 1), (3, 3), (2, 2)]);
        assert_eq!(seg, vec![(0, 0), (3, 3)]);
        assert!(contains(&seg, (2, 2)));
        assert!(!contains(&seg, (2, 1)));
        assert_eq!(convex_hull(&[(1, 1), (1, 1)]), vec![(1, 1)]);
        assert!(!contains(&[], (0, 0)));
    }

    #[test]
    fn disk_area_close_to_analytic() {
        let r = 20.0f64;
        let pts: Vec<Point> = (0..360)
            .map(|d| {
                let t = (d as f64).to_radians();
                ((30.0 + r * t.cos()).round() as i64, (30.0 + r * t.sin()).round() as i64)
            })
            .collect();
        let area = rasterize(&convex_hull(&pts), 64, 64).iter().filter(|&&b| b).count() as f64;
        // inclusive lattice count runs about half a voxel past the boundary
        let analytic = std::f64::consts::PI * (r + 0.5) * (r + 0.5);
        assert!((area - analytic).abs() / analytic < 0.02, "{area} vs {analytic}");
    }
}
