use thiserror::Error;
use umo_core::dataset::DatasetError;
use umo_core::motion::MotionError;
use umo_nn::NnError;

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn motion_code(e: &MotionError) -> i32 {
    match e {
        MotionError::Io(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

fn dataset_code(e: &DatasetError) -> i32 {
    match e {
        DatasetError::Io(_) => EXIT_IO,
        DatasetError::Motion(m) => motion_code(m),
        _ => EXIT_INVALID,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Io(_) => EXIT_IO,
            CliError::Motion(e) => motion_code(e),
            CliError::Dataset(e) => dataset_code(e),
            CliError::Nn(e) => match e {
                NnError::NonFinite { .. } => EXIT_NUMERIC,
                NnError::Io(_) => EXIT_IO,
                NnError::Motion(m) => motion_code(m),
                NnError::Dataset(d) => dataset_code(d),
                _ => EXIT_INVALID,
            },
        }
    }
}
