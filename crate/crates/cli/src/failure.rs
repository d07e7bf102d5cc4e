use std::fmt;
use std::path::Path;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or unusable input files.
    Usage(String),
    /// A numerical routine failed to converge.
    Numerical(String),
    /// Reading or writing a file failed.
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }

    /// Attribute a library error to the file it came from.
    pub fn reading(path: &Path, e: cfbound::Error) -> Self {
        match Failure::from(e) {
            Failure::Usage(m) => Failure::Usage(format!("{}: {m}", path.display())),
            Failure::Numerical(m) => Failure::Numerical(format!("{}: {m}", path.display())),
            Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<cfbound::Error> for Failure {
    fn from(e: cfbound::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else if matches!(e, cfbound::Error::Io(_)) {
            Failure::Io(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}
