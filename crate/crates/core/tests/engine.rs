use std::sync::Arc;

use meshcrash::engine::{
    check_gradients, Activation, AdamWConfig, CosineSchedule, GradCheckConfig, Init, OptimState, ParamStore, Tape,
    Tensor, Var,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_rows(r, c, (0..r * c).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
}

/// Reduces an op's output to a scalar with fixed random weights, then
/// compares reverse-mode gradients of every input against central
/// differences.
fn check<F>(inputs: Vec<Tensor>, seed: u64, f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let weights = {
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&mut t, &vars);
        let (r, c) = t.shape(out);
        rand_t(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xabc), r, c)
    };
    let eval = |inp: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = inp.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&mut t, &vars);
        t.value(out).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
    let out = f(&mut t, &vars);
    let w = t.constant(weights.clone());
    let prod = t.mul(out, w).unwrap();
    let loss = t.sum(prod);
    t.backward(loss).unwrap();
    let h = 1e-5;
    for (k, x) in inputs.iter().enumerate() {
        let g = t
            .grad(vars[k])
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; x.len()]);
        for e in 0..x.len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[e] += h;
            let mut minus = inputs.clone();
            minus[k].data_mut()[e] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let scale = g[e].abs().max(fd.abs());
            let err = (g[e] - fd).abs();
            assert!(
                err <= 1e-7 || err / scale <= 1e-4,
                "input {k} entry {e}: analytic {} vs numeric {fd}",
                g[e]
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_op_matches_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_t(&mut rng, 4, 3);
        let b = rand_t(&mut rng, 3, 2);
        let c = rand_t(&mut rng, 4, 3);
        let row = rand_t(&mut rng, 1, 3);
        let col = rand_t(&mut rng, 4, 1);
        let s = rand_t(&mut rng, 1, 1);
        check(vec![a.clone(), b.clone()], seed, |t, v| t.matmul(v[0], v[1]).unwrap());
        check(vec![a.clone()], seed, |t, v| t.transpose(v[0]));
        check(vec![a.clone(), c.clone()], seed, |t, v| t.add(v[0], v[1]).unwrap());
        check(vec![a.clone(), c.clone()], seed, |t, v| t.sub(v[0], v[1]).unwrap());
        check(vec![a.clone(), c.clone()], seed, |t, v| t.mul(v[0], v[1]).unwrap());
        check(vec![a.clone(), row.clone()], seed, |t, v| t.add_row(v[0], v[1]).unwrap());
        check(vec![a.clone(), row.clone()], seed, |t, v| t.mul_row(v[0], v[1]).unwrap());
        check(vec![a.clone(), col.clone()], seed, |t, v| t.mul_col(v[0], v[1]).unwrap());
        check(vec![a.clone()], seed, |t, v| t.scale(v[0], -0.7));
        check(vec![a.clone(), s.clone()], seed, |t, v| t.scale_by(v[0], v[1]).unwrap());
        let pos = Tensor::from_rows(4, 3, a.data().iter().map(|x| x.abs() + 0.5).collect()).unwrap();
        check(vec![pos], seed, |t, v| t.recip(v[0]));
        check(vec![a.clone(), col.clone()], seed, |t, v| t.concat(&[v[0], v[1]]).unwrap());
        check(vec![a.clone()], seed, |t, v| t.slice_cols(v[0], 1, 2).unwrap());
        let idx: Arc<[usize]> = vec![3, 0, 0, 2, 1].into();
        check(vec![a.clone()], seed, |t, v| t.gather_rows(v[0], idx.clone()).unwrap());
        check(vec![a.clone()], seed, |t, v| t.scatter_add_rows(v[0], vec![1, 1, 0, 4].into(), 5).unwrap());
        check(vec![a.clone()], seed, |t, v| t.row_softmax(v[0]).unwrap());
        check(vec![a.clone()], seed, |t, v| t.layer_norm(v[0]));
        check(vec![a.clone()], seed, |t, v| t.gelu(v[0]));
        let away = Tensor::from_rows(4, 3, a.data().iter().map(|x| if x.abs() < 0.05 { 0.3 } else { *x }).collect()).unwrap();
        check(vec![away], seed, |t, v| t.relu(v[0]));
        check(vec![a.clone()], seed, |t, v| t.row_norm(v[0]));
        check(vec![a.clone(), c.clone()], seed, |t, v| t.mse(v[0], v[1]).unwrap());
        check(vec![a], seed, |t, v| t.sum(v[0]));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_ignore_shifts(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&mut rng, 5, 4);
        let shifted = Tensor::from_rows(5, 4, x.data().iter().enumerate().map(|(i, v)| v + shift * (i / 4) as f64).collect()).unwrap();
        let mut t = Tape::new();
        let a = t.constant(x);
        let b = t.constant(shifted);
        let sa = t.row_softmax(a).unwrap();
        let sb = t.row_softmax(b).unwrap();
        for r in 0..5 {
            let sum: f64 = t.value(sa).row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for c in 0..4 {
                prop_assert!((t.value(sa).get(r, c) - t.value(sb).get(r, c)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn scatter_sum_is_order_independent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_rows(6, 2, (0..12).map(|_| rng.gen_range(-4i32..4) as f64 * 0.25).collect()).unwrap();
        let idx = vec![0usize, 2, 0, 1, 2, 0];
        let perm = [5usize, 3, 1, 0, 4, 2];
        let px = Tensor::from_rows(6, 2, perm.iter().flat_map(|&p| x.row(p).to_vec()).collect()).unwrap();
        let pidx: Vec<usize> = perm.iter().map(|&p| idx[p]).collect();
        let mut t = Tape::new();
        let a = t.constant(x);
        let b = t.constant(px);
        let sa = t.scatter_add_rows(a, idx.into(), 3).unwrap();
        let sb = t.scatter_add_rows(b, pidx.into(), 3).unwrap();
        prop_assert_eq!(t.value(sa), t.value(sb));
    }
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::from_rows(1, 2, vec![0.0, 0.0]).unwrap());
    let s = t.row_softmax(x).unwrap();
    assert_eq!(t.value(s).data(), &[0.5, 0.5]);
}

#[test]
fn softmax_over_empty_row_is_an_error() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros(2, 0));
    assert!(t.row_softmax(x).is_err());
}

#[test]
fn scatter_then_gather_on_disjoint_indices_is_identity() {
    let x = Tensor::from_rows(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let idx: Arc<[usize]> = vec![4, 1, 2].into();
    let mut t = Tape::new();
    let a = t.constant(x.clone());
    let s = t.scatter_add_rows(a, idx.clone(), 5).unwrap();
    let g = t.gather_rows(s, idx).unwrap();
    assert_eq!(t.value(g), &x);
}

#[test]
fn shape_mismatch_is_reported() {
    let mut t = Tape::new();
    let a = t.constant(Tensor::zeros(2, 3));
    let b = t.constant(Tensor::zeros(2, 3));
    assert!(t.matmul(a, b).is_err());
    let c = t.constant(Tensor::zeros(3, 2));
    assert!(t.add(a, c).is_err());
}

#[test]
fn backward_of_sum_is_ones() {
    let mut t = Tape::new();
    let p = t.leaf(Tensor::from_rows(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap());
    let s = t.sum(p);
    t.backward(s).unwrap();
    assert_eq!(t.grad(p).unwrap(), &[1.0; 4]);
}

#[test]
fn backward_of_square_error() {
    let mut t = Tape::new();
    let p = t.leaf(Tensor::scalar(3.0));
    let z = t.constant(Tensor::scalar(0.0));
    let l = t.mse(p, z).unwrap();
    t.backward(l).unwrap();
    assert_eq!(t.grad(p).unwrap(), &[6.0]);
}

#[test]
fn backward_requires_scalar_loss() {
    let mut t = Tape::new();
    let p = t.leaf(Tensor::zeros(2, 1));
    assert!(t.backward(p).is_err());
}

#[test]
fn repeated_backward_accumulates() {
    let mut t = Tape::new();
    let p = t.leaf(Tensor::scalar(3.0));
    let z = t.constant(Tensor::scalar(0.0));
    let l = t.mse(p, z).unwrap();
    t.backward(l).unwrap();
    t.backward(l).unwrap();
    assert_eq!(t.grad(p).unwrap(), &[12.0]);
    t.zero_grads();
    assert!(t.grad(p).is_none());
}

#[test]
fn composite_mlp_parameter_gradients_match_differences() {
    let mut store = ParamStore::new();
    let w1 = store.add("w1", 3, 5, Init::FanIn, 11).unwrap();
    let b1 = store.add("b1", 1, 5, Init::Constant(0.1), 11).unwrap();
    let w2 = store.add("w2", 5, 2, Init::FanIn, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_t(&mut rng, 6, 3);
    let y = rand_t(&mut rng, 6, 2);
    let loss_of = |store: &ParamStore, grads: bool| -> (f64, Option<ParamStore>) {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let yv = t.constant(y.clone());
        let h = {
            let w = t.param(store, w1);
            let b = t.param(store, b1);
            let h = t.matmul(xv, w).unwrap();
            let h = t.add_row(h, b).unwrap();
            let h = t.activation(h, Activation::Gelu);
            t.layer_norm(h)
        };
        let w = t.param(store, w2);
        let o = t.matmul(h, w).unwrap();
        let l = t.mse(o, yv).unwrap();
        let lv = t.value(l).data()[0];
        if !grads {
            return (lv, None);
        }
        t.backward(l).unwrap();
        let mut s = store.clone();
        s.zero_grads();
        s.accumulate_grads(&t);
        (lv, Some(s))
    };
    let (_, g) = loss_of(&store, true);
    let g = g.unwrap();
    for name in ["w1", "b1", "w2"] {
        let n = store.value(store.id(name).unwrap()).len();
        for e in 0..n {
            let mut p = store.clone();
            p.by_name_mut(name).unwrap().data_mut()[e] += 1e-5;
            let mut m = store.clone();
            m.by_name_mut(name).unwrap().data_mut()[e] -= 1e-5;
            let fd = (loss_of(&p, false).0 - loss_of(&m, false).0) / 2e-5;
            let an = g.get(g.id(name).unwrap()).grad.as_ref().unwrap()[e];
            let err = (an - fd).abs();
            assert!(
                err <= 1e-7 || err / an.abs().max(fd.abs()) <= 1e-5,
                "{name}[{e}]: {an} vs {fd}"
            );
        }
    }
}

#[test]
fn adamw_first_step_closed_form() {
    let mut store = ParamStore::new();
    let id = store.add("p", 1, 1, Init::Constant(0.5), 0).unwrap();
    store.get_mut(id).grad = Some(vec![1.0]);
    let cfg = AdamWConfig {
        weight_decay: 0.0,
        ..AdamWConfig::default()
    };
    let sched = CosineSchedule {
        initial_lr: 1e-4,
        floor_lr: 0.0,
        total_steps: 10,
    };
    let mut opt = OptimState::new(&store, cfg, sched);
    assert_eq!(opt.current_lr(), 1e-4);
    opt.step(&mut store).unwrap();
    // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
    let expected = 0.5 - 1e-4 * 1.0 / (1.0 + 1e-8);
    assert!((store.value(id).data()[0] - expected).abs() < 1e-15);
}

#[test]
fn cosine_schedule_endpoints_and_monotone() {
    let s = CosineSchedule {
        initial_lr: 1e-4,
        floor_lr: 1e-6,
        total_steps: 100,
    };
    assert_eq!(s.lr(0), 1e-4);
    assert!((s.lr(100) - 1e-6).abs() < 1e-18);
    for k in 0..100 {
        assert!(s.lr(k + 1) <= s.lr(k));
    }
}

fn cubic_store(xs: &[f64], grad_scale: f64) -> ParamStore {
    let mut s = ParamStore::new();
    let id = s.add("x", 1, xs.len(), Init::Zeros, 0).unwrap();
    *s.value_mut(id) = Tensor::from_rows(1, xs.len(), xs.to_vec()).unwrap();
    s.get_mut(id).grad = Some(xs.iter().map(|x| 3.0 * x * x * grad_scale).collect());
    s
}

fn cubic(s: &ParamStore) -> meshcrash::Result<f64> {
    Ok(s.iter().flat_map(|p| p.value.data()).map(|x| x * x * x).sum())
}

#[test]
fn gradient_check_accepts_exact_and_flags_wrong_gradients() {
    let xs = [0.7, -1.3, 2.1, 0.05];
    let cfg = GradCheckConfig::default();
    let good = check_gradients(&cubic_store(&xs, 1.0), &cfg, cubic).unwrap();
    assert!(good.passed());
    assert_eq!((good.checked, good.refined), (4, 0));
    assert!(good.max_rel_error < 1e-8);
    let bad = check_gradients(&cubic_store(&xs, 1.0 + 1e-3), &cfg, cubic).unwrap();
    assert_eq!(bad.failures.len(), 4);
    assert_eq!(bad.failures[0].param, "x");
}

#[test]
fn gradient_check_refines_the_step_across_kinks() {
    let cfg = GradCheckConfig::default();
    let c = 0.3 * cfg.step;
    let mut s = ParamStore::new();
    let id = s.add("x", 1, 1, Init::Zeros, 0).unwrap();
    s.get_mut(id).grad = Some(vec![1.0]);
    let rep = check_gradients(&s, &cfg, |p| Ok((p.value(id).data()[0] + c).abs())).unwrap();
    assert_eq!((rep.checked, rep.refined, rep.failures.len()), (1, 1, 0));
    s.get_mut(id).grad = Some(vec![-1.0]);
    let far = check_gradients(&s, &cfg, |p| Ok((p.value(id).data()[0] + 1.0).abs())).unwrap();
    assert_eq!((far.checked, far.refined, far.failures.len()), (1, 0, 1));
}
