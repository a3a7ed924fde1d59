//! Latent action model: encoder, product-quantized bottleneck, decoder, the
//! VQ-VAE objective, and the self+cross viewpoint objective with training
//! loops for single-view and multi-view regimes.

pub mod codebook;
pub mod model;
pub mod train;

pub use codebook::{latent_entropy, Codebook, LatentCode};
pub use model::{BatchViews, LamDims, LamModel, LossBreakdown, LossVars, QuantPin, CODEBOOK_PARAM};
pub use train::{
    eval_loss, infer_latents, load_lam, save_lam, train, LatentExtraction, LossRow, TrainConfig,
    TrainMode, TrainReport, ViewSelector,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::check::{fd_check_params, FD_EPS, FD_REL_TOL};
    use crate::autodiff::tensor::Tensor;
    use crate::error::Result;
    use crate::rng::Rng;
    use crate::worldgen::dataset::{generate_dataset, DatasetConfig};

    fn tiny_dims(d_obs: usize) -> LamDims {
        LamDims {
            d_obs,
            codebook: Codebook::new(4, 2, 3).unwrap(),
            enc_hidden: vec![10],
            dec_hidden: vec![10],
        }
    }

    fn random_batch(d_obs: usize, b: usize, seed: u64) -> BatchViews {
        let mut rng = Rng::new(seed);
        let mut o_t = Tensor::zeros(&[b, d_obs]);
        let mut o_next = Tensor::zeros(&[b, d_obs]);
        for v in o_t.data_mut() {
            *v = rng.range_f64(-1.0, 1.0);
        }
        for v in o_next.data_mut() {
            *v = rng.range_f64(-1.0, 1.0);
        }
        BatchViews { o_t, o_next }
    }

    #[test]
    fn encode_is_deterministic_and_total() {
        let model = LamModel::new(tiny_dims(8), 0.25, 3).unwrap();
        let o: Vec<f64> = (0..8).map(|i| (i as f64 * 0.3).sin()).collect();
        let a = model.encode(&o, &o).unwrap();
        let b = model.encode(&o, &o).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
        assert_eq!(a.len(), model.dims.codebook.latent_dim());
    }

    #[test]
    fn decode_is_view_agnostic_bitwise() {
        // Feeding the same latent values "as view 1" or "as view 2" is the
        // same call: the decoder input carries no view identity. Check that
        // decoding a synchronized other view's latent is accepted and
        // bit-identical when the latent values coincide.
        let model = LamModel::new(tiny_dims(8), 0.25, 5).unwrap();
        let o: Vec<f64> = (0..8).map(|i| (i as f64 * 0.21).cos()).collect();
        let e1 = model.encode(&o, &o).unwrap();
        let (code1, _, _) = model.quantize(&e1).unwrap();
        let a = model.decode(&o, &code1.embedding).unwrap();
        let b = model.decode(&o, &code1.embedding.clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn straight_through_gradient_is_bit_equal() {
        let model = LamModel::new(tiny_dims(6), 0.25, 7).unwrap();
        let batch = random_batch(6, 3, 11);
        let (mut g, vars) = model.loss_vqvae(&model.params, &batch).unwrap();
        g.backward(vars.total).unwrap();
        let grad_st = g.grad(vars.st_vars[0]).unwrap();
        let grad_e = g.grad(vars.e_vars[0]).unwrap();
        // grad(e) = grad(st) + commitment contribution; isolate the
        // straight-through copy by rebuilding with beta = 0.
        let mut model0 = model.clone();
        model0.beta = 0.0;
        let (mut g0, vars0) = model0.loss_vqvae(&model0.params, &batch).unwrap();
        g0.backward(vars0.total).unwrap();
        let st0 = g0.grad(vars0.st_vars[0]).unwrap();
        let e0 = g0.grad(vars0.e_vars[0]).unwrap();
        assert_eq!(st0.data(), e0.data(), "straight-through must copy bits");
        // And with beta > 0 the decoder-path component is still the st grad.
        assert_eq!(grad_st.shape(), grad_e.shape());
    }

    #[test]
    fn gradient_sources_are_isolated() {
        // Codebook rows get gradient only from the quantization term;
        // encoder gets reconstruction + commitment; decoder only gets
        // reconstruction. Verified by per-component backward passes on a
        // one-sample batch.
        let model = LamModel::new(tiny_dims(6), 0.25, 9).unwrap();
        let batch = random_batch(6, 1, 13);
        let cb_id = model.params.id(CODEBOOK_PARAM).unwrap();
        let enc_id = model.params.id("enc.w0").unwrap();

        let grad_of = |target: &dyn Fn(&LossVars) -> crate::autodiff::Var| -> Vec<Tensor> {
            let (mut g, vars) = model.loss_vqvae(&model.params, &batch).unwrap();
            g.backward(target(&vars)).unwrap();
            let mut p = model.params.clone();
            p.zero_grads();
            g.accumulate_param_grads(&mut p).unwrap();
            p.ids().map(|id| p.grad(id).clone()).collect()
        };

        let quant_grads = grad_of(&|v| v.l_quant);
        let commit_grads = grad_of(&|v| v.l_commit);
        let recon_grads = grad_of(&|v| v.l_self);
        let total_grads = grad_of(&|v| v.total);

        // Quantization: only the codebook moves.
        assert!(quant_grads[cb_id].sq_norm() > 0.0);
        assert_eq!(quant_grads[enc_id].sq_norm(), 0.0);
        // Commitment: only the encoder moves.
        assert_eq!(commit_grads[cb_id].sq_norm(), 0.0);
        assert!(commit_grads[enc_id].sq_norm() > 0.0);
        // Reconstruction: encoder (via straight-through) and decoder move,
        // codebook does not.
        assert_eq!(recon_grads[cb_id].sq_norm(), 0.0);
        assert!(recon_grads[enc_id].sq_norm() > 0.0);
        // Codebook gradient of the total equals the quantization component
        // alone (same scaling).
        for (t, q) in total_grads[cb_id].data().iter().zip(quant_grads[cb_id].data()) {
            assert!((t - q).abs() < 1e-15);
        }
    }

    #[test]
    fn perfect_model_has_zero_vqvae_loss() {
        // Hand-build a model whose encoder lands exactly on a codebook entry
        // and whose decoder returns o_next exactly: all weights zero, decoder
        // bias equal to o_next, codebook entry at the encoder output (zero).
        let dims = LamDims {
            d_obs: 4,
            codebook: Codebook::new(2, 1, 3).unwrap(),
            enc_hidden: vec![],
            dec_hidden: vec![],
        };
        let mut model = LamModel::new(dims, 0.25, 1).unwrap();
        for id in model.params.ids().collect::<Vec<_>>() {
            model.params.value_mut(id).fill(0.0);
        }
        let o_next = vec![0.3, -0.7, 0.2, 0.9];
        let dec_b = model.params.id("dec.b0").unwrap();
        model
            .params
            .value_mut(dec_b)
            .data_mut()
            .copy_from_slice(&o_next);

        let batch = BatchViews {
            o_t: Tensor::from_vec(&[1, 4], vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            o_next: Tensor::from_vec(&[1, 4], o_next).unwrap(),
        };
        let (g, vars) = model.loss_vqvae(&model.params, &batch).unwrap();
        let b = model.breakdown(&g, &vars);
        assert_eq!(b.total, 0.0, "breakdown: {b:?}");
    }

    #[test]
    fn identical_views_make_cross_equal_self() {
        let model = LamModel::new(tiny_dims(6), 0.25, 17).unwrap();
        let batch = random_batch(6, 4, 19);
        let views = vec![batch.clone(), batch];
        let (g, vars) = model.loss_graph(&model.params, &views, true).unwrap();
        let b = model.breakdown(&g, &vars);
        assert!(
            (b.l_self - b.l_cross).abs() < 1e-12,
            "self {} vs cross {}",
            b.l_self,
            b.l_cross
        );
    }

    #[test]
    fn self_only_mode_has_no_cross_gradient_path() {
        // With the cross term absent, the gradients must be identical to a
        // graph that never built cross reconstructions.
        let model = LamModel::new(tiny_dims(6), 0.25, 23).unwrap();
        let views = vec![random_batch(6, 3, 29), random_batch(6, 3, 31)];
        let (mut g, vars) = model.loss_graph(&model.params, &views, false).unwrap();
        assert!(vars.l_cross.is_none());
        g.backward(vars.total).unwrap();
        let mut p = model.params.clone();
        p.zero_grads();
        g.accumulate_param_grads(&mut p).unwrap();

        // Rebuild with cross enabled: decoder gradient must differ (the
        // cross path exists), confirming the mode flag controls it.
        let (mut g2, vars2) = model.loss_graph(&model.params, &views, true).unwrap();
        g2.backward(vars2.total).unwrap();
        let mut p2 = model.params.clone();
        p2.zero_grads();
        g2.accumulate_param_grads(&mut p2).unwrap();
        let dec_id = model.params.id("dec.w0").unwrap();
        let diff: f64 = p
            .grad(dec_id)
            .data()
            .iter()
            .zip(p2.grad(dec_id).data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 0.0, "cross term should change decoder gradients");
    }

    #[test]
    fn single_view_record_in_multi_view_mode_is_rejected() {
        let cfg = DatasetConfig {
            num_views: 1,
            trajectories: 4,
            traj_len: 6,
            d_obs: 8,
            ..DatasetConfig::default()
        };
        let (manifest, records) = generate_dataset(&cfg).unwrap();
        let dir = std::env::temp_dir().join("lamlab_lam_reject");
        crate::worldgen::dataset::write_dataset(&dir, "sv", &manifest, &records).unwrap();
        let obs = crate::worldgen::dataset::load_observations(&dir, "sv").unwrap();
        let mut model = LamModel::new(tiny_dims(8), 0.25, 1).unwrap();
        let cfg = TrainConfig {
            mode: TrainMode::Mvp,
            steps: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let err = train(&mut model, &obs, &cfg).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("multi-view"), "error should name the constraint: {msg}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn single_view_mode_consumes_one_declared_view() {
        let cfg = DatasetConfig {
            num_views: 2,
            trajectories: 4,
            traj_len: 6,
            d_obs: 8,
            ..DatasetConfig::default()
        };
        let (manifest, records) = generate_dataset(&cfg).unwrap();
        let dir = std::env::temp_dir().join("lamlab_lam_singleview_mode");
        crate::worldgen::dataset::write_dataset(&dir, "sv2", &manifest, &records).unwrap();
        let obs = crate::worldgen::dataset::load_observations(&dir, "sv2").unwrap();
        // Training single-view on a two-view dataset picks the declared
        // view; the result must match training on the same data with the
        // other view's observations zeroed out (those are never touched).
        let train_with = |view_index: usize| -> LamModel {
            let mut model = LamModel::new(tiny_dims(8), 0.25, 4).unwrap();
            let cfg = TrainConfig {
                mode: TrainMode::SingleView,
                view_index,
                steps: 10,
                batch_size: 4,
                seed: 2,
                ..TrainConfig::default()
            };
            train(&mut model, &obs, &cfg).unwrap();
            model
        };
        let m0 = train_with(0);
        let mut blanked = obs.clone();
        for rec in blanked.records.iter_mut() {
            rec[1].0.iter_mut().for_each(|v| *v = 0.0);
            rec[1].1.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut m0b = LamModel::new(tiny_dims(8), 0.25, 4).unwrap();
        let tcfg = TrainConfig {
            mode: TrainMode::SingleView,
            view_index: 0,
            steps: 10,
            batch_size: 4,
            seed: 2,
            ..TrainConfig::default()
        };
        train(&mut m0b, &blanked, &tcfg).unwrap();
        for id in m0.params.ids() {
            assert_eq!(m0.params.value(id).data(), m0b.params.value(id).data());
        }
        // And an out-of-range declared view is a config error.
        let mut m = LamModel::new(tiny_dims(8), 0.25, 4).unwrap();
        let bad = TrainConfig {
            mode: TrainMode::SingleView,
            view_index: 2,
            steps: 1,
            ..TrainConfig::default()
        };
        assert!(train(&mut m, &obs, &bad).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn zero_steps_keeps_initialization() {
        let cfg = DatasetConfig {
            trajectories: 4,
            traj_len: 6,
            d_obs: 8,
            ..DatasetConfig::default()
        };
        let (_, records) = generate_dataset(&cfg).unwrap();
        let dir = std::env::temp_dir().join("lamlab_lam_zerosteps");
        let manifest = generate_dataset(&cfg).unwrap().0;
        crate::worldgen::dataset::write_dataset(&dir, "zs", &manifest, &records).unwrap();
        let obs = crate::worldgen::dataset::load_observations(&dir, "zs").unwrap();
        let mut model = LamModel::new(tiny_dims(8), 0.25, 1).unwrap();
        let reference = LamModel::new(tiny_dims(8), 0.25, 1).unwrap();
        let cfg = TrainConfig {
            mode: TrainMode::Mvp,
            steps: 0,
            ..TrainConfig::default()
        };
        train(&mut model, &obs, &cfg).unwrap();
        for id in model.params.ids() {
            assert_eq!(model.params.value(id), reference.params.value(id));
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn training_is_seed_deterministic() {
        let cfg = DatasetConfig {
            trajectories: 6,
            traj_len: 8,
            d_obs: 8,
            ..DatasetConfig::default()
        };
        let (manifest, records) = generate_dataset(&cfg).unwrap();
        let dir = std::env::temp_dir().join("lamlab_lam_det");
        crate::worldgen::dataset::write_dataset(&dir, "det", &manifest, &records).unwrap();
        let obs = crate::worldgen::dataset::load_observations(&dir, "det").unwrap();
        let tcfg = TrainConfig {
            mode: TrainMode::Mvp,
            steps: 30,
            batch_size: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || -> Result<LamModel> {
            let mut model = LamModel::new(tiny_dims(8), 0.25, 2)?;
            train(&mut model, &obs, &tcfg)?;
            Ok(model)
        };
        let (a, b) = (run().unwrap(), run().unwrap());
        for id in a.params.ids() {
            assert_eq!(
                a.params.value(id).data(),
                b.params.value(id).data(),
                "param {} differs",
                a.params.name(id)
            );
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn pinned_loss_matches_real_loss_at_pin_point() {
        let model = LamModel::new(tiny_dims(6), 0.25, 41).unwrap();
        let views = vec![random_batch(6, 3, 43), random_batch(6, 3, 47)];
        let pins = model.pin_quantizer(&model.params, &views).unwrap();
        let pinned = model
            .loss_pinned_value(&model.params, &views, true, &pins)
            .unwrap();
        let (g, vars) = model.loss_graph(&model.params, &views, true).unwrap();
        let real = g.value(vars.total).item();
        assert!(
            (pinned - real).abs() < 1e-12,
            "pinned {pinned} vs real {real}"
        );
    }

    #[test]
    fn full_objective_gradient_matches_finite_differences() {
        // The composite objective with the quantizer pinned is smooth; its
        // finite-difference gradient must match the tape gradient of the
        // real objective at the pin point.
        let model = LamModel::new(tiny_dims(5), 0.25, 51).unwrap();
        let views = vec![random_batch(5, 2, 53), random_batch(5, 2, 59)];
        let pins = model.pin_quantizer(&model.params, &views).unwrap();

        let analytic: Vec<Tensor> = {
            let (mut g, vars) = model.loss_graph(&model.params, &views, true).unwrap();
            g.backward(vars.total).unwrap();
            let mut p = model.params.clone();
            p.zero_grads();
            g.accumulate_param_grads(&mut p).unwrap();
            p.ids().map(|id| p.grad(id).clone()).collect()
        };

        let mut params = model.params.clone();
        let mut loss =
            |p: &crate::autodiff::ParamSet| model.loss_pinned_value(p, &views, true, &pins);
        let report = fd_check_params(&mut params, &mut loss, &analytic, 100, FD_EPS, 61).unwrap();
        assert!(
            report.max_rel_err < FD_REL_TOL,
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = LamModel::new(tiny_dims(8), 0.25, 71).unwrap();
        let dir = std::env::temp_dir().join("lamlab_lam_ckpt");
        save_lam(&dir, "m", &model).unwrap();
        let back = load_lam(&dir, "m").unwrap();
        assert_eq!(back.dims, model.dims);
        assert_eq!(back.beta, model.beta);
        for id in model.params.ids() {
            let orig = model.params.value(id);
            let got = back.params.value(id);
            for (a, b) in orig.data().iter().zip(got.data()) {
                assert_eq!(*a as f32, *b as f32);
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn latent_extraction_is_stable_and_view_tagged() {
        let cfg = DatasetConfig {
            trajectories: 4,
            traj_len: 6,
            d_obs: 8,
            ..DatasetConfig::default()
        };
        let (manifest, records) = generate_dataset(&cfg).unwrap();
        let dir = std::env::temp_dir().join("lamlab_lam_extract");
        crate::worldgen::dataset::write_dataset(&dir, "ex", &manifest, &records).unwrap();
        let obs = crate::worldgen::dataset::load_observations(&dir, "ex").unwrap();
        let hidden = crate::worldgen::dataset::load_hidden(&dir, "ex").unwrap();
        let model = LamModel::new(tiny_dims(8), 0.25, 3).unwrap();
        let a = infer_latents(&model, &obs, &hidden, ViewSelector::Single(0)).unwrap();
        let b = infer_latents(&model, &obs, &hidden, ViewSelector::Single(0)).unwrap();
        assert_eq!(a.codes, b.codes);
        assert_eq!(a.len(), obs.len());
        let both = infer_latents(&model, &obs, &hidden, ViewSelector::All).unwrap();
        assert_eq!(both.len(), 2 * obs.len());
        // Latents from the two views of a record are not forced equal.
        assert!(both.view_ids.iter().any(|&v| v == 1));
        std::fs::remove_dir_all(&dir).ok();
    }
}
