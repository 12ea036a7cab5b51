//! Test-set evaluation shared by the subcommands. Samples are processed in
//! parallel and collected in order, so outputs do not depend on scheduling.

use inversion_ad::diffusion::{invert, perturbation_index, reconstruct_with_noise};
use inversion_ad::epsnet::{CountingModel, EpsilonModel, MlpEpsModel};
use inversion_ad::metrics::{au_roc, MetricsReport};
use inversion_ad::numerics::Tensor;
use inversion_ad::schedule::{NoiseSchedule, TimestepSubset};
use inversion_ad::scoring::{anomaly_result, mahalanobis_score, recon_score, AnomalyResult, LocationStats, ScoreMode};
use inversion_ad::synthbench::LabeledSample;
use inversion_ad::{Mask, Rng};
use rayon::prelude::*;

use crate::error::{config_err, CliResult};

/// Per-sample results of one scoring pass.
#[derive(Clone, Debug)]
pub struct Scored {
    pub results: Vec<AnomalyResult<f64>>,
    /// Model evaluations per sample.
    pub nfe: Vec<usize>,
}

impl Scored {
    pub fn scores(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.score).collect()
    }
}

#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    test: &'a [LabeledSample<f64>],
    model: Option<(&'a MlpEpsModel<f64>, &'a NoiseSchedule<f64>)>,
    out_h: usize,
    out_w: usize,
    fpr_cap: f64,
    seed: u64,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        test: &'a [LabeledSample<f64>],
        (out_h, out_w): (usize, usize),
        fpr_cap: f64,
        seed: u64,
    ) -> CliResult<Self> {
        if test.is_empty() {
            return config_err("test set is empty");
        }
        Ok(Self {
            test,
            model: None,
            out_h,
            out_w,
            fpr_cap,
            seed,
        })
    }

    /// Attaches a trained model after checking it against the test shapes.
    pub fn with_model(self, model: &'a MlpEpsModel<f64>, schedule: &'a NoiseSchedule<f64>) -> CliResult<Self> {
        for (i, s) in self.test.iter().enumerate() {
            if s.features.shape() != model.sample_shape() {
                return config_err(format!(
                    "test sample {i} has shape {:?}, model expects {:?}",
                    s.features.shape(),
                    model.sample_shape()
                ));
            }
        }
        Ok(Self {
            model: Some((model, schedule)),
            ..self
        })
    }

    fn model(&self) -> CliResult<(&'a MlpEpsModel<f64>, &'a NoiseSchedule<f64>)> {
        match self.model {
            Some(m) => Ok(m),
            None => config_err("this scoring mode needs a trained model"),
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        self.test.iter().map(|s| s.label).collect()
    }

    pub fn len(&self) -> usize {
        self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test.is_empty()
    }

    /// Terminal latents for every test sample, with per-sample NFE.
    pub fn invert_all(&self, subset: &TimestepSubset) -> CliResult<(Vec<Tensor<f64>>, Vec<usize>)> {
        let (model, schedule) = self.model()?;
        let out: Vec<(Tensor<f64>, usize)> = self
            .test
            .par_iter()
            .map(|s| {
                let counted = CountingModel::new(model);
                let z = invert(&counted, schedule, &s.features, subset)?.check_finite("inverted latent")?;
                Ok((z, counted.nfe()))
            })
            .collect::<inversion_ad::Result<_>>()?;
        Ok(out.into_iter().unzip())
    }

    pub fn score_latents(&self, latents: &[Tensor<f64>], mode: ScoreMode) -> CliResult<Vec<AnomalyResult<f64>>> {
        Ok(latents
            .par_iter()
            .map(|z| anomaly_result(z, self.out_h, self.out_w, mode))
            .collect::<inversion_ad::Result<_>>()?)
    }

    pub fn inversion(&self, subset: &TimestepSubset, mode: ScoreMode) -> CliResult<Scored> {
        let (latents, nfe) = self.invert_all(subset)?;
        Ok(Scored {
            results: self.score_latents(&latents, mode)?,
            nfe,
        })
    }

    /// Reconstruction baseline at ratio `r`; `None` when `r·S` selects no step.
    pub fn reconstruction(&self, subset: &TimestepSubset, r: f64) -> CliResult<Option<Scored>> {
        let Some(k) = perturbation_index(r, subset.len())? else {
            return Ok(None);
        };
        let (model, schedule) = self.model()?;
        let cell = ((subset.len() as u64) << 40) | (((r * 1000.0).round() as u64) << 24);
        let out: Vec<(AnomalyResult<f64>, usize)> = self
            .test
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let noise = Rng::new(self.seed, cell | i as u64).normal_tensor(s.features.shape());
                let counted = CountingModel::new(model);
                let z0_hat = reconstruct_with_noise(&counted, schedule, &s.features, subset, k, &noise)?
                    .check_finite("reconstruction")?;
                let res = recon_score(&s.features, &z0_hat, self.out_h, self.out_w)?;
                Ok((res, counted.nfe()))
            })
            .collect::<inversion_ad::Result<_>>()?;
        let (results, nfe) = out.into_iter().unzip();
        Ok(Some(Scored { results, nfe }))
    }

    /// Training-free Gaussian baseline on the raw features.
    pub fn mahalanobis(&self, stats: &LocationStats<f64>) -> CliResult<Scored> {
        let results = self
            .test
            .par_iter()
            .map(|s| mahalanobis_score(stats, &s.features, self.out_h, self.out_w))
            .collect::<inversion_ad::Result<Vec<_>>>()?;
        let nfe = vec![0; results.len()];
        Ok(Scored { results, nfe })
    }

    pub fn image_auroc(&self, scored: &Scored) -> CliResult<f64> {
        Ok(au_roc(&scored.scores(), &self.labels())?)
    }

    /// Full metrics; pixel metrics only when some mask marks a pixel.
    pub fn report(&self, scored: &Scored) -> CliResult<MetricsReport> {
        let masks = self
            .test
            .iter()
            .map(|s| s.mask.resize_nearest(self.out_h, self.out_w))
            .collect::<inversion_ad::Result<Vec<Mask>>>()?;
        let maps: Vec<Tensor<f64>> = scored.results.iter().map(|r| r.map.clone()).collect();
        let localized = masks.iter().any(|m| !m.is_empty());
        let loc = localized.then_some((&maps[..], &masks[..]));
        Ok(MetricsReport::compute(
            &scored.scores(),
            &self.labels(),
            loc,
            self.fpr_cap,
        )?)
    }
}
