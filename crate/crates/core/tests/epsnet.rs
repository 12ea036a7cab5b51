use inversion_ad::epsnet::{
    decode_model, encode_model, epoch_loss, epoch_loss_at, grad_check, load_model, save_model, train_eps,
    AnalyticGaussianModel, EpsilonModel, MlpConfig, TrainConfig, ZeroModel,
};
use inversion_ad::numerics::Tensor;
use inversion_ad::schedule::NoiseSchedule;
use inversion_ad::{Result, Rng};

fn sched() -> NoiseSchedule<f64> {
    NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap()
}

/// Recovers the injected noise exactly when the clean sample is zero.
struct NoiseOracle {
    schedule: NoiseSchedule<f64>,
    shape: Vec<usize>,
}

impl EpsilonModel<f64> for NoiseOracle {
    fn sample_shape(&self) -> &[usize] {
        &self.shape
    }
    fn timesteps(&self) -> usize {
        self.schedule.len()
    }
    fn predict(&self, x: &Tensor<f64>, t: usize) -> Result<Tensor<f64>> {
        Ok(x.scale(1.0 / (1.0 - self.schedule.alpha_bar(t)).sqrt()))
    }
}

#[test]
fn loss_of_exact_noise_predictor_is_zero() {
    let s = sched();
    let m = NoiseOracle {
        schedule: s.clone(),
        shape: vec![2, 2, 2],
    };
    let batch = vec![Tensor::zeros(&[2, 2, 2]); 8];
    let l = epoch_loss(&m, &batch, &s, &mut Rng::new(0, 0)).unwrap();
    assert!(l < 1e-20, "{l}");
}

#[test]
fn loss_levels_match_conditional_variances() {
    let s = sched();
    let shape = [4, 4, 4];
    let mut rng = Rng::new(1, 0);
    let batch: Vec<Tensor<f64>> = (0..200).map(|_| rng.normal_tensor(&shape)).collect();
    let d = 64.0;
    let n = 200.0 * d;

    // zero model: E‖ε‖²/d = 1, per-element sd √2
    let zero = ZeroModel::new(&shape, 1000);
    let l = epoch_loss(&zero, &batch, &s, &mut rng).unwrap() / d;
    assert!((l - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "{l}");

    // analytic model at fixed t: residual variance ᾱ_t per element
    let m = AnalyticGaussianModel::standard_normal(&shape, s.clone());
    for t in [100, 500, 900] {
        let ab = s.alpha_bar(t);
        let l = epoch_loss_at(&m, &batch, &s, t, &mut rng).unwrap() / d;
        assert!((l - ab).abs() < 4.0 * ab * (2.0 / n).sqrt(), "t={t}: {l} vs {ab}");
    }
    assert!(epoch_loss_at(&m, &batch, &s, 1000, &mut rng).is_err());
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 16,
        warmup_epochs: 1,
        seed: 5,
        model: MlpConfig {
            depth: 1,
            width: 16,
            time_dim: 8,
        },
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_bit_reproducible() {
    let s = sched();
    let mut rng = Rng::new(2, 0);
    let data: Vec<Tensor<f64>> = (0..64).map(|_| rng.normal_tensor(&[2, 2, 2])).collect();
    let (a, la) = train_eps(&data, &s, &small_cfg()).unwrap();
    let (b, lb) = train_eps(&data, &s, &small_cfg()).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(la, lb);
    let other = TrainConfig { seed: 6, ..small_cfg() };
    let (c, _) = train_eps(&data, &s, &other).unwrap();
    assert_ne!(a.params(), c.params());
}

#[test]
fn training_rejects_inconsistent_shapes() {
    let s = sched();
    let data = vec![Tensor::zeros(&[2, 2, 2]), Tensor::zeros(&[2, 2, 3])];
    assert!(train_eps(&data, &s, &small_cfg()).is_err());
}

#[test]
fn exploding_training_reports_numeric_failure() {
    let s = sched();
    let data = vec![Tensor::full(&[1, 2, 2], 1e300); 4];
    let cfg = TrainConfig {
        peak_lr: 1e300,
        initial_lr: 1e300,
        ..small_cfg()
    };
    let err = train_eps(&data, &s, &cfg).unwrap_err();
    assert!(
        matches!(err, inversion_ad::Error::NumericFailure(ref m) if m.contains("epoch")),
        "{err}"
    );
}

#[test]
fn early_epoch_losses_do_not_rise() {
    let s = sched();
    let mut rng = Rng::new(3, 0);
    let data: Vec<Tensor<f64>> = (0..2000).map(|_| rng.normal_tensor(&[8, 4, 4])).collect();
    let (_, logs) = train_eps(&data, &s, &TrainConfig::default()).unwrap();
    let mut ups = 0;
    for w in logs[..10].windows(2) {
        if w[1].loss > w[0].loss {
            ups += 1;
            assert!(w[1].loss <= 1.05 * w[0].loss, "{:?}", &logs[..10]);
        }
    }
    assert!(ups <= 1, "{:?}", &logs[..10]);
    assert!(logs.last().unwrap().loss < logs[0].loss);
}

#[test]
fn model_file_roundtrip_through_disk() {
    let s = sched();
    let mut rng = Rng::new(4, 0);
    let data: Vec<Tensor<f64>> = (0..32).map(|_| rng.normal_tensor(&[2, 2, 2])).collect();
    let (m, _) = train_eps(&data, &s, &small_cfg()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    save_model(&path, &m, &s).unwrap();
    let (back, s2) = load_model::<f64>(&path).unwrap();
    assert_eq!(s2, s);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(encode_model(&back, &s2).unwrap(), bytes);
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    assert_eq!(stored, crc32fast::hash(&bytes[..bytes.len() - 4]));
    assert!(decode_model::<f64>(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn gradient_check_on_fresh_and_randomized_models() {
    let cfg = MlpConfig {
        depth: 3,
        width: 6,
        time_dim: 6,
    };
    let mut rng = Rng::new(5, 0);
    let mut m = inversion_ad::epsnet::MlpEpsModel::<f64>::new(&[3, 2, 1], 1000, cfg, &mut rng).unwrap();
    assert!(grad_check(&m, 1e-4, 1).unwrap().passed);
    m.randomize(&mut rng, 1.0);
    let r = grad_check(&m, 1e-4, 2).unwrap();
    assert!(r.passed, "{r:?}");
}
