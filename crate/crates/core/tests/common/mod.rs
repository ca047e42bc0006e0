#![allow(dead_code)]

use meshcrash::mesh::fit_norm_stats;
use meshcrash::{MeshGraph, NodeRole, NormStats, Sample, Tensor, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_rows(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// Jittered `nx × ny` grid with 4-neighbour edges plus one diagonal per
/// cell; the first row is RIGID.
pub fn grid_graph(rng: &mut ChaCha8Rng, nx: usize, ny: usize, spacing: f64) -> MeshGraph {
    let n = nx * ny;
    let mut pos = Vec::with_capacity(2 * n);
    for j in 0..ny {
        for i in 0..nx {
            pos.push(i as f64 * spacing + rng.gen_range(-0.1..0.1) * spacing);
            pos.push(j as f64 * spacing + rng.gen_range(-0.1..0.1) * spacing);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut pairs = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                pairs.push((id(i, j), id(i + 1, j)));
            }
            if j + 1 < ny {
                pairs.push((id(i, j), id(i, j + 1)));
            }
            if i + 1 < nx && j + 1 < ny {
                pairs.push((id(i, j), id(i + 1, j + 1)));
            }
        }
    }
    let roles = (0..n)
        .map(|k| if k < nx { NodeRole::Rigid } else { NodeRole::Free })
        .collect();
    let thickness: Vec<f64> = (0..n).map(|_| rng.gen_range(0.8..1.8)).collect();
    MeshGraph::from_undirected(Tensor::from_rows(n, 2, pos).unwrap(), &pairs, roles, &thickness).unwrap()
}

/// Smooth synthetic trajectory: FREE nodes translate and shear in -y with
/// a node-dependent wobble; RIGID nodes stay put.
pub fn synthetic_sample(rng: &mut ChaCha8Rng, graph: &MeshGraph, id: u64, horizon: usize, dt: f64) -> Sample {
    let n = graph.node_count();
    let x0 = graph.reference_positions().clone();
    let speed = rng.gen_range(0.3..0.8);
    let phase: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..6.0)).collect();
    let mut frames = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let time = t as f64 * dt;
        let mut x = x0.clone();
        for k in 0..n {
            if !graph.roles()[k].is_free() {
                continue;
            }
            let y0 = x0.get(k, 1);
            let d = x.data_mut();
            d[2 * k] += 0.4 * (0.05 * time + phase[k]).sin() - 0.4 * phase[k].sin();
            d[2 * k + 1] -= speed * time * (1.0 - 0.002 * time) * (1.0 + 0.01 * y0);
        }
        frames.push(x);
    }
    let mut v0 = Tensor::zeros(n, 2);
    for k in 0..n {
        if graph.roles()[k].is_free() {
            v0.data_mut()[2 * k + 1] = -speed;
        }
    }
    let traj = Trajectory::from_positions(frames, v0, dt, None, (n - 1, n / 2)).unwrap();
    Sample {
        id,
        graph: graph.clone(),
        trajectory: traj,
    }
}

pub fn synthetic_set(seed: u64, count: usize, nx: usize, ny: usize, horizon: usize) -> Vec<Sample> {
    let mut r = rng(seed);
    let g = grid_graph(&mut r, nx, ny, 10.0);
    (0..count)
        .map(|i| synthetic_sample(&mut r, &g, i as u64, horizon, 5.0))
        .collect()
}

pub fn fitted_stats(samples: &[Sample]) -> NormStats {
    fit_norm_stats(samples).unwrap()
}

/// Scalar reference implementations of the model layers, reading weights
/// straight from the store.
pub mod scalar {
    use meshcrash::engine::{Activation, ParamStore};
    use meshcrash::model::{Linear, Mlp, Norm};

    pub fn linear(store: &ParamStore, l: &Linear, x: &[f64]) -> Vec<f64> {
        let w = store.value(l.w);
        let (fi, fo) = (w.rows(), w.cols());
        assert_eq!(x.len(), fi);
        let mut y = vec![0.0; fo];
        for (j, yj) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, xi) in x.iter().enumerate() {
                s += xi * w.get(i, j);
            }
            if let Some(b) = l.b {
                s += store.value(b).get(0, j);
            }
            *yj = s;
        }
        y
    }

    pub fn act(a: Activation, x: f64) -> f64 {
        match a {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
            }
        }
    }

    pub fn layer_norm(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n;
        x.iter().map(|a| (a - m) / (v + 1e-5).sqrt()).collect()
    }

    pub fn norm(store: &ParamStore, n: &Norm, x: &[f64]) -> Vec<f64> {
        let g = store.value(n.g);
        let b = store.value(n.b);
        layer_norm(x)
            .iter()
            .enumerate()
            .map(|(j, v)| v * g.get(0, j) + b.get(0, j))
            .collect()
    }

    pub fn mlp(store: &ParamStore, m: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (i, l) in m.layers.iter().enumerate() {
            h = linear(store, l, &h);
            if i + 1 < m.layers.len() {
                h = h.into_iter().map(|v| act(m.act, v)).collect();
            }
        }
        match &m.norm {
            Some(n) => norm(store, n, &h),
            None => h,
        }
    }

    pub fn softmax(x: &[f64]) -> Vec<f64> {
        let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = x.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }
}

/// Fill every parameter with draws from `[-scale, scale]`.
pub fn randomise(store: &mut meshcrash::engine::ParamStore, seed: u64, scale: f64) {
    let mut r = rng(seed);
    for p in store.iter_mut() {
        for v in p.value.data_mut() {
            *v = r.gen_range(-scale..scale);
        }
    }
}
