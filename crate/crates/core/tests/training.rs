use taylorcast_core::data::{ClipSource, ShapesSource};
use taylorcast_core::model::{HeadInit, Model, ModelConfig, TemporalKind, TrainSample, Trainer};
use taylorcast_core::tensor::ParamId;

fn small(temporal: TemporalKind) -> ModelConfig {
    ModelConfig {
        gamma: 2,
        height: 8,
        width: 8,
        clip_length: 3,
        latent_channels: 4,
        encoder_channels: 2,
        spatial_down: 2,
        horizon: 3,
        temporal,
        head_init: HeadInit::He,
        derivative_scale: 3.0,
        lr: 3e-3,
        ..ModelConfig::default()
    }
}

fn sample(cfg: &ModelConfig, index: u64) -> TrainSample {
    let src = ShapesSource::new((cfg.height, cfg.width), cfg.clip_length, cfg.horizon, 11);
    let (clip, future) = src.sample(index).unwrap();
    TrainSample::from_future(clip, &future, &cfg.train_taus()).unwrap()
}

#[test]
fn memorises_a_single_clip() {
    let cfg = small(TemporalKind::Taylor);
    let mut trainer = Trainer::new(Model::new(cfg.clone()).unwrap());
    let batch = vec![sample(&cfg, 0)];
    let first = trainer.train_step(&batch).unwrap().loss;
    let mut last = first;
    for _ in 1..200 {
        last = trainer.train_step(&batch).unwrap().loss;
    }
    assert!(last < 0.1 * first, "loss {first} -> {last}");
}

fn batch_loss(trainer: &mut Trainer, batch: &[TrainSample]) -> f64 {
    trainer.model.params_mut().zero_grad();
    let loss = trainer.accumulate_gradients(batch).unwrap().loss;
    trainer.model.params_mut().zero_grad();
    loss
}

#[test]
fn gradients_match_finite_differences() {
    for kind in [TemporalKind::Taylor, TemporalKind::Expand] {
        let cfg = small(kind);
        let mut trainer = Trainer::new(Model::new(cfg.clone()).unwrap());
        let batch = vec![sample(&cfg, 1), sample(&cfg, 2)];
        trainer.model.params_mut().zero_grad();
        trainer.accumulate_gradients(&batch).unwrap();
        let probes: Vec<(ParamId, usize, f64)> = trainer
            .model
            .params()
            .iter()
            .filter(|(_, name, _)| name.ends_with("weight"))
            .step_by(3)
            .map(|(id, _, t)| {
                let g = t.grad().unwrap();
                let (i, _) = g
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .unwrap();
                (id, i, g[i])
            })
            .collect();
        assert!(probes.len() >= 3);
        for (id, i, analytic) in probes {
            let eps = 1e-6;
            let orig = trainer.model.params().get(id).data()[i];
            trainer.model.params_mut().get_mut(id).data_mut()[i] = orig + eps;
            let up = batch_loss(&mut trainer, &batch);
            trainer.model.params_mut().get_mut(id).data_mut()[i] = orig - eps;
            let down = batch_loss(&mut trainer, &batch);
            trainer.model.params_mut().get_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (numeric - analytic).abs() / analytic.abs().max(1e-8);
            let name = trainer.model.params().name(id).to_string();
            assert!(
                rel < 1e-3,
                "{kind} {name}[{i}]: analytic {analytic} numeric {numeric}"
            );
        }
    }
}

#[test]
fn every_parameter_receives_a_finite_gradient() {
    for kind in [
        TemporalKind::Taylor,
        TemporalKind::Expand,
        TemporalKind::Flatten,
    ] {
        let mut cfg = small(kind);
        if kind == TemporalKind::Flatten {
            cfg.height = 16;
            cfg.width = 16;
        }
        let mut trainer = Trainer::new(Model::new(cfg.clone()).unwrap());
        trainer.model.params_mut().zero_grad();
        trainer.accumulate_gradients(&[sample(&cfg, 4)]).unwrap();
        for (_, name, t) in trainer.model.params().iter() {
            let g = t
                .grad()
                .unwrap_or_else(|| panic!("{kind}: {name} has no gradient"));
            assert!(g.iter().all(|v| v.is_finite()), "{kind}: {name}");
            assert!(
                g.iter().any(|&v| v != 0.0),
                "{kind}: {name} gradient is zero"
            );
        }
    }
}

#[test]
fn point_estimates_deterministic_and_tau_sensitive() {
    for kind in [TemporalKind::Expand, TemporalKind::Flatten] {
        let cfg = ModelConfig {
            height: 16,
            width: 16,
            ..small(kind)
        };
        let model = Model::new(cfg.clone()).unwrap();
        let clip = sample(&cfg, 5).clip;
        let a = model.forward(&clip, &[1.0, 2.5]).unwrap();
        let b = model.forward(&clip, &[1.0, 2.5]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1], "{kind} ignores tau");
        assert!(a.iter().all(|f| f.shape() == [1, 16, 16]));
        model.pass_counts().reset();
        model.forward(&clip, &[0.5, 1.0, 1.5, 2.0]).unwrap();
        assert_eq!(model.pass_counts().encoder(), 1);
        let ck = model.estimate_derivatives(&model.encode(&clip).unwrap());
        assert!(ck.is_err());
    }
}

#[test]
fn identical_seeds_train_identically() {
    let cfg = ModelConfig {
        steps_per_epoch: 2,
        batch: 2,
        ..small(TemporalKind::Taylor)
    };
    let src = ShapesSource::new((8, 8), 3, 3, 5);
    let run = || {
        let mut t = Trainer::new(Model::new(cfg.clone()).unwrap());
        t.run_epoch(&src).unwrap()
    };
    assert_eq!(run(), run());
}
