mod common;

use common::scalar;
use meshcrash::contact::build_contacts;
use meshcrash::engine::{check_gradients, Activation, GradCheckConfig, ParamStore, Tape, Tensor};
use meshcrash::mesh::{invert_permutation, permute_rows, FeatureSet};
use meshcrash::model::{
    hybrid_forward, Family, FlareMixer, GlobalBlock, HybridModel, Mixer, Mlp, ModelConfig, MpnnBlock, TokenMixer,
};
use meshcrash::rollout::Surrogate;
use meshcrash::train::{loss_and_grads, sample_loss};
use meshcrash::{ContactParams, Error, MeshGraph, NodeRole, NodeState, PreparedGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn small_config(family: Family) -> ModelConfig {
    let mut c = ModelConfig::desk(family, 2);
    c.d_hidden = 8;
    c.tokens = 4;
    c.heads = 2;
    c.routes = 2;
    if let Some(p) = c.contact.as_mut() {
        p.radius = Some(15.0);
        p.k = 4;
        p.alpha_init = 0.5;
    }
    c
}

fn perturbed_state(graph: &MeshGraph, seed: u64) -> NodeState {
    let mut r = common::rng(seed);
    let mut x = graph.reference_positions().clone();
    let mut v = Tensor::zeros(x.rows(), 2);
    for k in 0..graph.node_count() {
        if graph.roles()[k].is_free() {
            for c in 0..2 {
                x.data_mut()[2 * k + c] += r.gen_range(-3.0..3.0);
                v.data_mut()[2 * k + c] = r.gen_range(-1.0..1.0);
            }
        }
    }
    NodeState::new(x, v, 0).unwrap()
}

#[test]
fn full_scale_stage_counts_and_widths() {
    let mt = ModelConfig::full_scale(Family::MeshTransolver, 3);
    assert_eq!((mt.l_pre, mt.l_attn, mt.l_post), (1, 6, 2));
    assert_eq!(mt.d_hidden, 128);
    assert_eq!(mt.tokens, 128);
    assert_eq!(mt.d_node(), 11);
    let mgf = ModelConfig::full_scale(Family::MeshGeoFlare, 3);
    assert_eq!((mgf.l_pre, mgf.l_attn, mgf.l_post), (1, 4, 2));
    assert_eq!(mgf.contact.unwrap().k, 16);
    assert_eq!(
        ModelConfig::full_scale(Family::MeshTransolverContact, 3)
            .contact
            .unwrap()
            .k,
        32
    );
}

#[test]
fn zero_encoder_gives_zero_latents() {
    let mut s = ParamStore::new();
    let enc = Mlp::new(&mut s, "enc", &[5, 8, 8], Activation::Relu, false, 1).unwrap();
    for p in s.iter_mut() {
        p.value.data_mut().fill(0.0);
    }
    let mut t = Tape::new();
    let x = t.constant(common::random_tensor(&mut common::rng(1), 6, 5, 3.0));
    let h = enc.forward(&mut t, &s, x).unwrap();
    assert!(t.value(h).data().iter().all(|&v| v == 0.0));
}

#[test]
fn one_by_one_encoder_hand_value() {
    let mut s = ParamStore::new();
    let enc = Mlp::new(&mut s, "enc", &[1, 1, 1], Activation::Relu, false, 1).unwrap();
    s.set("enc.l0.w", Tensor::scalar(2.0)).unwrap();
    s.set("enc.l0.b", Tensor::scalar(-1.0)).unwrap();
    s.set("enc.l1.w", Tensor::scalar(3.0)).unwrap();
    s.set("enc.l1.b", Tensor::scalar(0.5)).unwrap();
    let mut t = Tape::new();
    let x = t.constant(Tensor::scalar(1.5));
    let h = enc.forward(&mut t, &s, x).unwrap();
    assert_eq!(t.value(h).data(), &[6.5]);
    let x = t.constant(Tensor::scalar(0.25));
    let h = enc.forward(&mut t, &s, x).unwrap();
    assert_eq!(t.value(h).data(), &[0.5]);
}

fn path_graph() -> MeshGraph {
    MeshGraph::from_undirected(
        Tensor::from_rows(3, 2, vec![0.0, 0.0, 1.0, 0.0, 2.0, 0.0]).unwrap(),
        &[(0, 1), (1, 2)],
        vec![NodeRole::Free; 3],
        &[1.0; 3],
    )
    .unwrap()
}

#[test]
fn mpnn_path_graph_matches_loop_oracle() {
    let d = 3;
    let mut s = ParamStore::new();
    let block = MpnnBlock::new(&mut s, "b", d, 0).unwrap();
    common::randomise(&mut s, 5, 0.8);
    let ctx = PreparedGraph::identity(&path_graph()).unwrap();
    let mut r = common::rng(6);
    let h0 = common::random_tensor(&mut r, 3, d, 1.0);
    let e0 = common::random_tensor(&mut r, ctx.receivers.len(), d, 1.0);
    let mut t = Tape::new();
    let hv = t.constant(h0.clone());
    let ev = t.constant(e0.clone());
    let (h1, e1) = block.forward(&mut t, &s, &ctx, hv, Some(ev)).unwrap();

    let mut agg = vec![vec![0.0; d]; 3];
    let mut msgs = Vec::new();
    for k in 0..ctx.receivers.len() {
        let (ri, si) = (ctx.receivers[k], ctx.senders[k]);
        let inp: Vec<f64> = [h0.row(ri), h0.row(si), e0.row(k)].concat();
        let m = scalar::add(e0.row(k), &scalar::mlp(&s, &block.edge, &inp));
        agg[ri] = scalar::add(&agg[ri], &m);
        msgs.push(m);
    }
    for i in 0..3 {
        let inp: Vec<f64> = [h0.row(i), &agg[i][..]].concat();
        let expect = scalar::add(h0.row(i), &scalar::mlp(&s, &block.node, &inp));
        assert!(scalar::close(t.value(h1).row(i), &expect, 1e-12));
    }
    let e1 = e1.unwrap();
    for (k, m) in msgs.iter().enumerate() {
        assert!(scalar::close(t.value(e1).row(k), m, 1e-12));
    }
}

#[test]
fn mpnn_without_edges_uses_zero_aggregate() {
    let d = 4;
    let mut s = ParamStore::new();
    let block = MpnnBlock::new(&mut s, "b", d, 0).unwrap();
    common::randomise(&mut s, 8, 0.8);
    let g = MeshGraph::from_undirected(
        Tensor::from_rows(2, 2, vec![0.0, 0.0, 5.0, 0.0]).unwrap(),
        &[],
        vec![NodeRole::Free; 2],
        &[1.0; 2],
    )
    .unwrap();
    let ctx = PreparedGraph::identity(&g).unwrap();
    let h0 = common::random_tensor(&mut common::rng(9), 2, d, 1.0);
    let mut t = Tape::new();
    let hv = t.constant(h0.clone());
    let (h1, e) = block.forward(&mut t, &s, &ctx, hv, None).unwrap();
    assert!(e.is_none());
    for i in 0..2 {
        let inp: Vec<f64> = [h0.row(i), &[0.0; 4][..]].concat();
        let expect = scalar::add(h0.row(i), &scalar::mlp(&s, &block.node, &inp));
        assert!(scalar::close(t.value(h1).row(i), &expect, 1e-12));
    }
}

#[test]
fn mpnn_rejects_mismatched_latents() {
    let mut s = ParamStore::new();
    let block = MpnnBlock::new(&mut s, "b", 2, 0).unwrap();
    let ctx = PreparedGraph::identity(&path_graph()).unwrap();
    let mut t = Tape::new();
    let h = t.constant(Tensor::zeros(4, 2));
    assert!(block.forward(&mut t, &s, &ctx, h, None).is_err());
}

fn global_block(tokens: usize, d: usize, mixer: TokenMixer, geo: bool, seed: u64) -> (GlobalBlock, ParamStore) {
    let mut cfg = ModelConfig::desk(Family::Transolver, 2);
    cfg.d_hidden = d;
    cfg.tokens = tokens;
    cfg.heads = 2;
    cfg.routes = 2;
    cfg.mixer = mixer;
    cfg.geometry_aware = geo;
    let mut s = ParamStore::new();
    let b = GlobalBlock::new(&mut s, "g", &cfg, 0).unwrap();
    common::randomise(&mut s, seed, 0.7);
    (b, s)
}

#[test]
fn single_token_matches_pooled_oracle() {
    let d = 4;
    let (block, s) = global_block(1, d, TokenMixer::Dense, false, 21);
    let Mixer::Dense(attn) = &block.mixer else {
        unreachable!()
    };
    let h0 = common::random_tensor(&mut common::rng(22), 5, d, 1.0);
    let mut t = Tape::new();
    let hv = t.constant(h0.clone());
    let out = block.forward(&mut t, &s, hv, None).unwrap();
    assert!(t.value(out.slice_weights).data().iter().all(|&w| w == 1.0));

    let mut pooled = vec![0.0; d];
    for i in 0..5 {
        pooled = scalar::add(&pooled, &scalar::norm(&s, &block.ln_in, h0.row(i)));
    }
    let tn = scalar::norm(&s, &block.tok_ln, &pooled);
    // one token attends only to itself, so each head returns its value row
    let mixed = scalar::linear(&s, &attn.o, &scalar::linear(&s, &attn.v, &tn));
    let u = scalar::add(&tn, &mixed);
    let tt = scalar::add(
        &u,
        &scalar::mlp(&s, &block.tok_ffn, &scalar::norm(&s, &block.tok_ffn_ln, &u)),
    );
    let back = scalar::linear(&s, &block.out, &tt);
    for i in 0..5 {
        let h1 = scalar::add(h0.row(i), &back);
        let h2 = scalar::add(&h1, &scalar::mlp(&s, &block.ffn, &scalar::norm(&s, &block.ffn_ln, &h1)));
        assert!(scalar::close(t.value(out.h).row(i), &h2, 1e-12));
    }
}

#[test]
fn geometry_slice_weights_hand_oracle() {
    let (block, mut s) = global_block(2, 2, TokenMixer::Dense, true, 3);
    s.set(
        "g.slice_keys",
        Tensor::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
    )
    .unwrap();
    s.set("g.geo_keys", Tensor::from_rows(2, 2, vec![0.0, 2.0, 0.0, 0.0]).unwrap())
        .unwrap();
    let mut t = Tape::new();
    let hn = t.constant(Tensor::from_rows(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let geo = t.constant(Tensor::from_rows(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap());
    let w = block.slice_weights(&mut t, &s, hn, Some(geo)).unwrap();
    // logits: row 0 = [1, 0] + [0, 2], row 1 = [0, 1]
    let e = std::f64::consts::E;
    let expect = [1.0 / (1.0 + e), e / (1.0 + e)];
    for r in 0..2 {
        assert!(scalar::close(t.value(w).row(r), &expect, 1e-15));
    }
}

#[test]
fn flare_matches_loop_oracle() {
    let d = 4;
    let mut s = ParamStore::new();
    let f = FlareMixer::new(&mut s, "f", d, 2, 0).unwrap();
    common::randomise(&mut s, 31, 0.9);
    let tok = common::random_tensor(&mut common::rng(32), 4, d, 1.0);
    let mut t = Tape::new();
    let tv = t.constant(tok.clone());
    let y = f.forward(&mut t, &s, tv).unwrap();

    let routes = s.value(f.routes).clone();
    let proj = |l| (0..4).map(|m| scalar::linear(&s, l, tok.row(m))).collect::<Vec<_>>();
    let (q, k, v) = (proj(&f.q), proj(&f.k), proj(&f.v));
    let sc = 1.0 / (d as f64).sqrt();
    let z: Vec<Vec<f64>> = (0..2)
        .map(|r| {
            let p = scalar::softmax(
                &(0..4)
                    .map(|m| scalar::dot(routes.row(r), &k[m]) * sc)
                    .collect::<Vec<_>>(),
            );
            (0..d).map(|c| (0..4).map(|m| p[m] * v[m][c]).sum()).collect()
        })
        .collect();
    for m in 0..4 {
        let b = scalar::softmax(
            &(0..2)
                .map(|r| scalar::dot(&q[m], routes.row(r)) * sc)
                .collect::<Vec<_>>(),
        );
        let read: Vec<f64> = (0..d).map(|c| b[0] * z[0][c] + b[1] * z[1][c]).collect();
        let expect = scalar::linear(&s, &f.o, &read);
        assert!(scalar::close(t.value(y).row(m), &expect, 1e-12));
    }
}

#[test]
fn flare_has_dense_shape_and_zero_inner_weights_vanish() {
    let d = 4;
    let (dense, ds) = global_block(4, d, TokenMixer::Dense, false, 1);
    let (flare, mut fs) = global_block(4, d, TokenMixer::Flare, false, 1);
    let tok = common::random_tensor(&mut common::rng(2), 4, d, 1.0);
    let mut t = Tape::new();
    let tv = t.constant(tok);
    let a = dense.mixer.forward(&mut t, &ds, tv).unwrap();
    for name in ["g.flare.q.w", "g.flare.k.w", "g.flare.v.w", "g.flare.o.w"] {
        fs.by_name_mut(name).unwrap().data_mut().fill(0.0);
    }
    let b = flare.mixer.forward(&mut t, &fs, tv).unwrap();
    assert_eq!(t.shape(a), t.shape(b));
    assert!(t.value(b).data().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_geometry_embedding_reduces_to_physics_attention() {
    let g = common::grid_graph(&mut common::rng(4), 4, 4, 10.0);
    let st = perturbed_state(&g, 5);
    let stats = common::fitted_stats(&common::synthetic_set(6, 2, 4, 4, 3));
    let (geo_model, mut gs) = HybridModel::new(small_config(Family::GeoTransolver), 7).unwrap();
    let names: Vec<String> = gs
        .iter()
        .filter(|p| p.name.starts_with("geo_embed"))
        .map(|p| p.name.clone())
        .collect();
    assert!(!names.is_empty());
    for n in names {
        gs.by_name_mut(&n).unwrap().data_mut().fill(0.0);
    }
    let mut cfg = small_config(Family::Transolver);
    cfg.sharpen = geo_model.config.sharpen;
    let (plain, mut ps) = HybridModel::new(cfg, 99).unwrap();
    assert_eq!(ps.copy_matching(&gs), ps.len());
    let a = hybrid_forward(&geo_model, &gs, &stats, &g, &st, None).unwrap();
    let b = hybrid_forward(&plain, &ps, &stats, &g, &st, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn translated_mesh_keeps_slice_weights() {
    let g = common::grid_graph(&mut common::rng(14), 4, 3, 10.0);
    let st = perturbed_state(&g, 15);
    let stats = common::fitted_stats(&common::synthetic_set(16, 2, 4, 3, 3));
    let shift = [137.25, -48.5];
    let mut xr = g.reference_positions().clone();
    let mut xs = st.positions.clone();
    for k in 0..g.node_count() {
        for c in 0..2 {
            xr.data_mut()[2 * k + c] += shift[c];
            xs.data_mut()[2 * k + c] += shift[c];
        }
    }
    let g2 = MeshGraph::new(xr, g.edges().to_vec(), g.roles().to_vec(), g.static_features().clone()).unwrap();
    let st2 = NodeState::new(xs, st.velocities.clone(), 0).unwrap();
    for fam in [Family::GeoTransolver, Family::GeoFlare] {
        let (m, s) = HybridModel::new(small_config(fam), 1).unwrap();
        let weights = |graph: &MeshGraph, state: &NodeState| {
            let ctx = PreparedGraph::canonical(graph).unwrap();
            let mut t = Tape::new();
            let x = t.constant(ctx.to_internal(&state.positions));
            let v = t.constant(ctx.to_internal(&state.velocities));
            let f = m.forward(&mut t, &s, &ctx, &stats, x, v, None).unwrap();
            f.slice_weights.iter().map(|w| t.value(*w).clone()).collect::<Vec<_>>()
        };
        for (a, b) in weights(&g, &st).iter().zip(weights(&g2, &st2)) {
            assert!(scalar::close(a.data(), b.data(), 1e-12));
        }
    }
}

#[test]
fn zero_decoder_predicts_zero() {
    let g = common::grid_graph(&mut common::rng(40), 3, 3, 10.0);
    let st = perturbed_state(&g, 41);
    let stats = common::fitted_stats(&common::synthetic_set(42, 2, 3, 3, 3));
    for fam in Family::ALL {
        let (m, mut s) = HybridModel::new(small_config(fam), 1).unwrap();
        for p in s.iter_mut().filter(|p| p.name.starts_with("decoder.")) {
            p.value.data_mut().fill(0.0);
        }
        let contacts = m
            .config
            .contact
            .map(|p| build_contacts(&st.positions, &g, &p, 0).unwrap());
        let a = hybrid_forward(&m, &s, &stats, &g, &st, contacts.as_ref()).unwrap();
        assert!(a.data().iter().all(|&v| v == 0.0), "{fam}");
    }
}

#[test]
fn contact_for_contact_free_family_is_rejected() {
    let g = common::grid_graph(&mut common::rng(1), 3, 3, 10.0);
    let st = perturbed_state(&g, 2);
    let stats = common::fitted_stats(&common::synthetic_set(3, 2, 3, 3, 3));
    let (m, s) = HybridModel::new(small_config(Family::MeshTransolver), 1).unwrap();
    let c = build_contacts(&st.positions, &g, &ContactParams::default(), 0).unwrap();
    let r = hybrid_forward(&m, &s, &stats, &g, &st, Some(&c));
    assert!(matches!(r, Err(Error::UnexpectedContact(_))));
    let (m, s) = HybridModel::new(small_config(Family::MeshTransolverContact), 1).unwrap();
    assert!(hybrid_forward(&m, &s, &stats, &g, &st, None).is_err());
}

#[test]
fn mesh_transolver_without_attention_is_an_mgn_stack() {
    let g = common::grid_graph(&mut common::rng(50), 4, 4, 10.0);
    let st = perturbed_state(&g, 51);
    let stats = common::fitted_stats(&common::synthetic_set(52, 2, 4, 4, 3));
    let mut mt = small_config(Family::MeshTransolver);
    mt.l_attn = 0;
    let mut mgn = small_config(Family::MeshGraphNet);
    mgn.l_pre = mt.l_pre + mt.l_post;
    mgn.feature_set = mt.feature_set;
    let (a, sa) = HybridModel::new(mt, 3).unwrap();
    let (b, mut sb) = HybridModel::new(mgn, 77).unwrap();
    assert_eq!(sb.copy_matching(&sa), sb.len());
    let ya = hybrid_forward(&a, &sa, &stats, &g, &st, None).unwrap();
    let yb = hybrid_forward(&b, &sb, &stats, &g, &st, None).unwrap();
    assert_eq!(ya, yb);
}

#[test]
fn every_family_is_permutation_equivariant() {
    let g = common::grid_graph(&mut common::rng(60), 4, 4, 10.0);
    let st = perturbed_state(&g, 61);
    let stats = common::fitted_stats(&common::synthetic_set(62, 2, 4, 4, 3));
    let mut perm: Vec<usize> = (0..g.node_count()).collect();
    perm.shuffle(&mut common::rng(63));
    let g2 = g.relabel(&perm).unwrap();
    let order = invert_permutation(&perm, perm.len()).unwrap();
    let st2 = NodeState::new(
        permute_rows(&st.positions, &order),
        permute_rows(&st.velocities, &order),
        0,
    )
    .unwrap();
    for fam in Family::ALL {
        let (m, s) = HybridModel::new(small_config(fam), 5).unwrap();
        let c = m
            .config
            .contact
            .map(|p| build_contacts(&st.positions, &g, &p, 0).unwrap());
        let c2 = c.as_ref().map(|c| c.relabel(&perm));
        let a = hybrid_forward(&m, &s, &stats, &g, &st, c.as_ref()).unwrap();
        let b = hybrid_forward(&m, &s, &stats, &g2, &st2, c2.as_ref()).unwrap();
        assert_eq!(permute_rows(&a, &order), b, "{fam}");
    }
}

#[test]
fn desk_models_have_finite_latents_and_normalised_slices() {
    let g = common::grid_graph(&mut common::rng(70), 5, 4, 10.0);
    let stats = common::fitted_stats(&common::synthetic_set(71, 2, 5, 4, 3));
    for fam in Family::ALL {
        let (m, s) = HybridModel::new(ModelConfig::desk(fam, 2), 9).unwrap();
        for trial in 0..3 {
            let st = perturbed_state(&g, 100 + trial);
            let ctx = PreparedGraph::canonical(&g).unwrap();
            let mut t = Tape::new();
            let x = t.constant(ctx.to_internal(&st.positions));
            let v = t.constant(ctx.to_internal(&st.velocities));
            let c = m
                .config
                .contact
                .map(|p| build_contacts(t.value(x), &ctx.graph, &p, 0).unwrap());
            let f = m.forward(&mut t, &s, &ctx, &stats, x, v, c.as_ref()).unwrap();
            for l in &f.latents {
                assert!(t.value(*l).is_finite(), "{fam}");
            }
            assert_eq!(f.slice_weights.len(), m.config.l_attn);
            for w in &f.slice_weights {
                let w = t.value(*w);
                for r in 0..w.rows() {
                    assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn rollout_loss_gradients_match_differences_for_every_family() {
    let set = common::synthetic_set(80, 1, 4, 4, 2);
    let stats = common::fitted_stats(&set);
    let cfg = GradCheckConfig::default();
    for fam in Family::ALL {
        let (m, mut s) = HybridModel::new(small_config(fam), 11).unwrap();
        for p in s.iter_mut() {
            if p.name.ends_with(".b") {
                for (k, v) in p.value.data_mut().iter_mut().enumerate() {
                    *v = 0.05 * ((k % 5) as f64 - 2.0);
                }
            }
        }
        let sur = Surrogate::new(m, s, stats.clone()).unwrap();
        let (l, mut grads) = loss_and_grads(&sur, &set[0], None).unwrap();
        grads.scale_grads(1.0 / l);
        let report = check_gradients(&grads, &cfg, |p| Ok(sample_loss(&sur, p, &set[0], None)? / l)).unwrap();
        assert!(
            report.passed(),
            "{fam}: {:?}",
            &report.failures[..report.failures.len().min(5)]
        );
        assert!(report.max_rel_error <= 1e-4, "{fam}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn slice_rows_sum_to_one(seed in any::<u64>(), geo in any::<bool>()) {
        let (block, s) = global_block(6, 4, TokenMixer::Dense, geo, seed);
        let mut r = common::rng(seed ^ 1);
        let mut t = Tape::new();
        let hn = t.constant(common::random_tensor(&mut r, 9, 4, 5.0));
        let g = t.constant(common::random_tensor(&mut r, 9, 4, 5.0));
        let w = block.slice_weights(&mut t, &s, hn, if geo { Some(g) } else { None }).unwrap();
        for row in 0..9 {
            prop_assert!((t.value(w).row(row).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn flare_is_token_permutation_equivariant(seed in any::<u64>()) {
        let mut s = ParamStore::new();
        let f = FlareMixer::new(&mut s, "f", 4, 2, seed).unwrap();
        let mut r = common::rng(seed);
        let tok = common::random_tensor(&mut r, 6, 4, 1.0);
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut r);
        let mut t = Tape::new();
        let a = t.constant(tok.clone());
        let b = t.constant(permute_rows(&tok, &perm));
        let ya = f.forward(&mut t, &s, a).unwrap();
        let yb = f.forward(&mut t, &s, b).unwrap();
        let pa = permute_rows(t.value(ya), &perm);
        prop_assert!(scalar::close(pa.data(), t.value(yb).data(), 1e-12));
    }

    #[test]
    fn mpnn_is_permutation_equivariant(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let g = common::grid_graph(&mut r, 3, 3, 10.0);
        let mut perm: Vec<usize> = (0..9).collect();
        perm.shuffle(&mut r);
        let g2 = g.relabel(&perm).unwrap();
        let order = invert_permutation(&perm, 9).unwrap();
        let mut s = ParamStore::new();
        let block = MpnnBlock::new(&mut s, "b", 4, seed).unwrap();
        let h = common::random_tensor(&mut r, 9, 4, 1.0);
        let run = |graph: &MeshGraph, h: Tensor| {
            let ctx = PreparedGraph::identity(graph).unwrap();
            let mut t = Tape::new();
            let hv = t.constant(h);
            let e = t.constant(Tensor::filled(ctx.receivers.len(), 4, 0.1));
            let (y, _) = block.forward(&mut t, &s, &ctx, hv, Some(e)).unwrap();
            t.value(y).clone()
        };
        let a = run(&g, h.clone());
        let b = run(&g2, permute_rows(&h, &order));
        prop_assert!(scalar::close(permute_rows(&a, &order).data(), b.data(), 1e-12));
    }
}

#[test]
fn feature_sets_per_family() {
    assert_eq!(Family::MeshTransolver.feature_set(), FeatureSet::Hybrid);
    assert_eq!(small_config(Family::MeshTransolver).d_node(), 9);
}
