//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use trajex::geometry::OrientedRect;
use trajex::grid::{BinaryOccupancy, GridSpec, Raster};

/// Random mask with each cell occupied with probability `density`.
pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> Raster<bool> {
    let data = (0..w * h).map(|_| rng.gen_bool(density)).collect();
    Raster::from_vec(w, h, data).unwrap()
}

pub fn single_step(spec: GridSpec, mask: Raster<bool>) -> BinaryOccupancy {
    BinaryOccupancy {
        spec,
        occ: vec![mask],
    }
}

/// All-pairs signed distance between cell centers, in meters.
pub fn brute_force_sdf(mask: &Raster<bool>, resolution: f64) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let sentinel = (w + h) as f64 * resolution;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let here = *mask.get(x, y);
            let mut best = f64::INFINITY;
            for qy in 0..h {
                for qx in 0..w {
                    if *mask.get(qx, qy) != here {
                        let dx = x as f64 - qx as f64;
                        let dy = y as f64 - qy as f64;
                        best = best.min((dx * dx + dy * dy).sqrt());
                    }
                }
            }
            let d = if best.is_finite() {
                best * resolution
            } else {
                sentinel
            };
            out.push(if here { -d } else { d });
        }
    }
    out
}

/// Area of the intersection of two convex polygons by Sutherland-Hodgman clipping.
pub fn intersection_area(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let mut poly: Vec<[f64; 2]> = a.to_vec();
    let orient = signed_area(b).signum();
    for i in 0..b.len() {
        if poly.is_empty() {
            break;
        }
        let p = b[i];
        let q = b[(i + 1) % b.len()];
        let inside = |v: [f64; 2]| orient * cross(p, q, v) >= 0.0;
        let input = std::mem::take(&mut poly);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(cur), inside(prev));
            if ci != pi {
                poly.push(line_hit(prev, cur, p, q));
            }
            if ci {
                poly.push(cur);
            }
        }
    }
    if poly.len() < 3 {
        0.0
    } else {
        signed_area(&poly).abs()
    }
}

pub fn rect_overlap_area(a: &OrientedRect, b: &OrientedRect) -> f64 {
    intersection_area(&a.corners(), &b.corners())
}

fn cross(p: [f64; 2], q: [f64; 2], v: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (v[1] - p[1]) - (q[1] - p[1]) * (v[0] - p[0])
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

fn line_hit(a: [f64; 2], b: [f64; 2], p: [f64; 2], q: [f64; 2]) -> [f64; 2] {
    let ca = cross(p, q, a);
    let cb = cross(p, q, b);
    let t = ca / (ca - cb);
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// `-sum p ln p`, written out independently of the library.
pub fn direct_entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &v in p {
        if v > 0.0 {
            h -= v * v.ln();
        }
    }
    h
}
