use casimir_core::{AssemblyError, EnergyError, GeometryError, SpectralError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            kind: ErrorKind::Numerical,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.kind {
            ErrorKind::Config => "config error",
            ErrorKind::Numerical => "numerical failure",
        };
        // one line on the error stream
        write!(f, "{tag}: {}", self.message.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

fn assembly_kind(e: &AssemblyError) -> ErrorKind {
    match e {
        AssemblyError::InvalidScene(_) | AssemblyError::Geometry(_) => ErrorKind::Config,
        _ => ErrorKind::Numerical,
    }
}

fn spectral_kind(e: &SpectralError) -> ErrorKind {
    match e {
        SpectralError::Assembly(a) => assembly_kind(a),
        SpectralError::Geometry(_) | SpectralError::InvalidRange { .. } => ErrorKind::Config,
        _ => ErrorKind::Numerical,
    }
}

fn energy_kind(e: &EnergyError) -> ErrorKind {
    match e {
        EnergyError::Spectral(s) => spectral_kind(s),
        EnergyError::Assembly(a) => assembly_kind(a),
        EnergyError::WrongScene(_) | EnergyError::InvalidSweep(_) | EnergyError::InsufficientData(_) => {
            ErrorKind::Config
        }
        EnergyError::SweepPoint { source, .. } => energy_kind(source),
        _ => ErrorKind::Numerical,
    }
}

impl From<EnergyError> for CliError {
    fn from(e: EnergyError) -> Self {
        CliError {
            kind: energy_kind(&e),
            message: e.to_string(),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        CliError {
            kind: spectral_kind(&e),
            message: e.to_string(),
        }
    }
}

impl From<AssemblyError> for CliError {
    fn from(e: AssemblyError) -> Self {
        CliError {
            kind: assembly_kind(&e),
            message: e.to_string(),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::config(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::config(format!("json: {e}"))
    }
}
