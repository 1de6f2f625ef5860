//! Shared fixtures for the criterion benches.

use survey_impute::impute::Sampler;
use survey_impute::{
    apply_missingness, calibrate_response_model, draw_sample, generate_frame, DesignSpec, Frame,
    GeneratorConfig, ImputationModelSpec, ResponseModel, SampleDraw, Scenario, StudyDataset,
};

pub const SEED: u64 = 7;

/// Default-sized frame, sample, and study dataset.
pub struct Fixture {
    pub frame: Frame,
    pub design: DesignSpec,
    pub draw: SampleDraw,
    pub study: StudyDataset,
}

impl Fixture {
    pub fn new() -> Self {
        let frame = generate_frame(&GeneratorConfig::default(), SEED).unwrap();
        let design = DesignSpec::default();
        let draw = draw_sample(&frame, &design, SEED).unwrap();
        let model = calibrate_response_model(&frame, &draw, &ResponseModel::default()).unwrap();
        let study = apply_missingness(&frame, &draw, &[], &model, SEED).unwrap();
        Fixture { frame, design, draw, study }
    }

    /// A sampler past initialization on the frame-covariate scenario.
    pub fn sampler(&self) -> Sampler {
        let spec = ImputationModelSpec {
            predictor_columns: Scenario::Mi1.columns().frame_covariates,
            ..ImputationModelSpec::default()
        };
        Sampler::new(&self.study, &spec, SEED).unwrap()
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}
