use enginecal::baselines::BaselineError;
use enginecal::dataset::DatasetError;
use enginecal::drive_cycle::DriveCycleError;
use enginecal::evaluation::EvaluationError;
use enginecal::sampling::SamplingError;
use enginecal::surrogate::SurrogateError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("compute: {0}")]
    Compute(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Compute(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) | DatasetError::Parse { .. } | DatasetError::SchemaMismatch(_) => CliError::Io(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<DriveCycleError> for CliError {
    fn from(e: DriveCycleError) -> Self {
        match e {
            DriveCycleError::InvalidConfig(_) | DriveCycleError::InvalidTrace(_) => CliError::Config(e.to_string()),
            DriveCycleError::Io(_) | DriveCycleError::Csv(_) | DriveCycleError::Aborted { .. } => CliError::Io(e.to_string()),
            DriveCycleError::Dataset(d) => d.into(),
        }
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Io(_) | SurrogateError::Parse(_) | SurrogateError::VersionMismatch { .. } => {
                CliError::Io(e.to_string())
            }
            SurrogateError::InvalidConfig(_) | SurrogateError::InvalidFreezeMask(_) => CliError::Config(e.to_string()),
            SurrogateError::Dataset(d) => d.into(),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Io(_) | BaselineError::Json(_) | BaselineError::Format(_) => CliError::Io(e.to_string()),
            BaselineError::InvalidConfig(_) => CliError::Config(e.to_string()),
            BaselineError::Dataset(d) => d.into(),
            BaselineError::RankDeficient { .. } => CliError::Compute(e.to_string()),
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<SamplingError> for CliError {
    fn from(e: SamplingError) -> Self {
        CliError::Io(e.to_string())
    }
}
