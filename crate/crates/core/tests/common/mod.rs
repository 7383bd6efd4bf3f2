//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;

/// Star-shaped simple polygon as `(lat, lon)` vertices around a center.
pub fn star_polygon<R: Rng>(rng: &mut R, center: (f64, f64), n: usize, r_min: f64, r_max: f64) -> Vec<(f64, f64)> {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    angles
        .into_iter()
        .map(|a| {
            let r = rng.gen_range(r_min..r_max);
            (center.0 + r * a.sin(), center.1 + r * a.cos())
        })
        .collect()
}

/// Winding number of a closed `(lat, lon)` ring around `(lat, lon)`, using
/// x = lon and y = lat.
pub fn winding_number(ring: &[(f64, f64)], p: (f64, f64)) -> i32 {
    let (px, py) = (p.1, p.0);
    let mut wn = 0;
    for i in 0..ring.len() {
        let (ay, ax) = ring[i];
        let (by, bx) = ring[(i + 1) % ring.len()];
        let cross = (bx - ax) * (py - ay) - (px - ax) * (by - ay);
        if ay <= py {
            if by > py && cross > 0.0 {
                wn += 1;
            }
        } else if by <= py && cross < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Planar distance in degrees from `p` to the nearest edge of `ring`.
pub fn distance_to_ring(ring: &[(f64, f64)], p: (f64, f64)) -> f64 {
    let (px, py) = (p.1, p.0);
    (0..ring.len())
        .map(|i| {
            let (ay, ax) = ring[i];
            let (by, bx) = ring[(i + 1) % ring.len()];
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let t = if len2 == 0.0 {
                0.0
            } else {
                (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
            };
            let (cx, cy) = (ax + t * dx, ay + t * dy);
            ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Great-circle distance by the spherical law of cosines, meters.
pub fn law_of_cosines_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la, lb) = (a.0.to_radians(), b.0.to_radians());
    let dl = (b.1 - a.1).to_radians();
    let c = (la.sin() * lb.sin() + la.cos() * lb.cos() * dl.cos()).clamp(-1.0, 1.0);
    6_371_000.0 * c.acos()
}
