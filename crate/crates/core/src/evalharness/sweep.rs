//! Mode sweep: replays every clip once per mode and aggregates the report.

use std::sync::Arc;

use thiserror::Error;

use super::report::{aggregate_report, evaluate_clip, ClipResult, EvalOptions, MetricsReport};
use super::EvalError;
use crate::alertgate::{Mode, PipelineConfig};
use crate::alertnet::MeshTopology;
use crate::clipstore::Clip;
use crate::controlplane::{run_replay, ClipSource, ControlError, RunSpec};
use crate::num::Scalar;
use crate::runlog::CaptureMode;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Run(#[from] ControlError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone)]
pub struct SweepOptions<T> {
    pub modes: Vec<Mode>,
    /// Base config; each mode's preset is applied on top.
    pub config: PipelineConfig<T>,
    pub topology: MeshTopology,
    pub duplication: u32,
    pub seed: u64,
    pub capture: CaptureMode,
    pub eval: EvalOptions<T>,
}

impl<T: Scalar> Default for SweepOptions<T> {
    fn default() -> Self {
        Self {
            modes: Mode::ALL.to_vec(),
            config: PipelineConfig::for_mode(Mode::Default),
            topology: MeshTopology::single_band("band0"),
            duplication: crate::controlplane::DEFAULT_DUPLICATION,
            seed: 0,
            capture: CaptureMode::Internal,
            eval: EvalOptions::default(),
        }
    }
}

/// Each clip is its own run, so debounce state never crosses clips.
pub fn sweep_clips<T: Scalar>(
    clips: &[Arc<Clip<T>>],
    opts: &SweepOptions<T>,
) -> Result<Vec<ClipResult<T>>, SweepError> {
    let mut out = Vec::with_capacity(clips.len() * opts.modes.len());
    for &mode in &opts.modes {
        let mut config = opts.config.clone();
        config.set_mode(mode);
        for clip in clips {
            let mut spec = RunSpec::new(
                vec![ClipSource::Loaded(clip.clone())],
                config.clone(),
                opts.topology.clone(),
            );
            spec.duplication = opts.duplication;
            spec.seed = opts.seed;
            spec.capture = opts.capture;
            let log = run_replay(&spec)?;
            out.push(evaluate_clip(&log, clip, &opts.eval)?);
        }
    }
    Ok(out)
}

pub fn sweep_report<T: Scalar>(
    clips: &[Arc<Clip<T>>],
    opts: &SweepOptions<T>,
) -> Result<MetricsReport<T>, SweepError> {
    let results = sweep_clips(clips, opts)?;
    Ok(aggregate_report(&results, &opts.eval)?)
}
