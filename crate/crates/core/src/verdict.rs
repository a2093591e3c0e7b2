use std::fmt;
use std::str::FromStr;

/// Outcome of a check or rule verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Holds,
    /// Holds at every grid point tested; grid-qualified.
    HoldsOnGrid,
    Violated,
    Inconclusive,
    /// A hypothesis could not be established; the rule was not tested.
    PreconditionFailed,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::HoldsOnGrid => "holds_on_grid",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
            Verdict::PreconditionFailed => "precondition_failed",
        }
    }

    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Holds | Verdict::HoldsOnGrid)
    }

    pub const ALL: [Verdict; 5] = [
        Verdict::Holds,
        Verdict::HoldsOnGrid,
        Verdict::Violated,
        Verdict::Inconclusive,
        Verdict::PreconditionFailed,
    ];
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Verdict::ALL
            .iter()
            .find(|v| v.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown verdict '{s}'"))
    }
}
