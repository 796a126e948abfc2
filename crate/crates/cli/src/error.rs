use std::fmt;

/// A failure reported as one line `error: <kind>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        // Keep the report on one line.
        let message = message.into().split_whitespace().collect::<Vec<_>>().join(" ");
        Self { kind, message }
    }

    pub fn usage(m: impl Into<String>) -> Self {
        Self::new("usage", m)
    }

    pub fn config(m: impl Into<String>) -> Self {
        Self::new("config", m)
    }

    pub fn io(m: impl Into<String>) -> Self {
        Self::new("io", m)
    }

    pub fn data(m: impl Into<String>) -> Self {
        Self::new("data", m)
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            "usage" | "config" => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}: {}", self.kind, self.message)
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::data(e.to_string())
            }
        }
    )*};
}

data_error!(
    pim_core::graph::GraphError,
    pim_core::features::FeaturesError,
    pim_core::downstream::DownstreamError,
    pim_core::synth::SynthError,
    pim_core::pipeline::PipelineError,
    pim_core::encoder::EncoderError
);

impl From<pim_core::sampling::SampleError> for CliError {
    fn from(e: pim_core::sampling::SampleError) -> Self {
        match e {
            pim_core::sampling::SampleError::Conflict(m) => CliError::config(m),
            other => CliError::data(other.to_string()),
        }
    }
}

impl From<pim_core::training::TrainError> for CliError {
    fn from(e: pim_core::training::TrainError) -> Self {
        match e {
            pim_core::training::TrainError::Config(m) => CliError::config(m),
            other => CliError::new("train", other.to_string()),
        }
    }
}
