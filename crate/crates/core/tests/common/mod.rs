//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use poresim::network::{BallNode, PoreNetwork};

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        assert!(p != 0.0, "singular matrix");
        for row in col + 1..n {
            let f = a[row][col] / p;
            if f == 0.0 {
                continue;
            }
            let (top, bottom) = a.split_at_mut(row);
            for (x, p) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Implicit system matrix built densely from the arc list.
pub fn dense_implicit_matrix(net: &PoreNetwork, nodes: &[usize], d_c: f64, dt: f64) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut local = vec![usize::MAX; net.node_count()];
    for (k, &g) in nodes.iter().enumerate() {
        local[g] = k;
    }
    let mut a = vec![vec![0.0; n]; n];
    for (k, &g) in nodes.iter().enumerate() {
        a[k][k] = net.node(g).volume;
    }
    for arc in net.arcs() {
        let (i, j) = (local[arc.i], local[arc.j]);
        if i == usize::MAX || j == usize::MAX {
            continue;
        }
        let theta = d_c * arc.contact_area / arc.distance * dt;
        a[i][i] += theta;
        a[j][j] += theta;
        a[i][j] -= theta;
        a[j][i] -= theta;
    }
    a
}

/// 5x5 matrix exponential by scaling and squaring of a Taylor series.
pub fn expm5(k: [[f64; 5]; 5], t: f64) -> [[f64; 5]; 5] {
    let norm: f64 = k.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) * t;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let h = t / 2f64.powi(squarings);
    let mut result = identity5();
    let mut term = identity5();
    for n in 1..30 {
        term = mul5(&term, &k);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v *= h / n as f64;
            }
        }
        for i in 0..5 {
            for j in 0..5 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul5(&result, &result);
    }
    result
}

fn identity5() -> [[f64; 5]; 5] {
    let mut m = [[0.0; 5]; 5];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn mul5(a: &[[f64; 5]; 5], b: &[[f64; 5]; 5]) -> [[f64; 5]; 5] {
    let mut c = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            c[i][j] = (0..5).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn apply5(m: &[[f64; 5]; 5], x: [f64; 5]) -> [f64; 5] {
    let mut y = [0.0; 5];
    for i in 0..5 {
        y[i] = (0..5).map(|k| m[i][k] * x[k]).sum();
    }
    y
}

/// Copy of `net` shifted so that the lowest ball bottom sits at z = 0.
pub fn lift_to_origin(net: &PoreNetwork) -> PoreNetwork {
    let z0 = net
        .nodes()
        .iter()
        .map(|n| n.center[2] - n.radius)
        .fold(f64::INFINITY, f64::min);
    let nodes: Vec<BallNode> = net
        .nodes()
        .iter()
        .map(|n| {
            let mut m = n.clone();
            m.center[2] -= z0;
            m
        })
        .collect();
    PoreNetwork::new(nodes, net.arcs().to_vec()).unwrap()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn rel_linf(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    num / den
}
