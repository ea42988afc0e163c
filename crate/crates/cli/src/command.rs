use std::fmt;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verify {
    Ubound,
    MergedUbound,
    Hardy,
    AlmostHardy,
    Ckn,
    Fsobolev,
    Spi,
}

impl Verify {
    pub const ALL: [Verify; 7] = [
        Verify::Ubound,
        Verify::MergedUbound,
        Verify::Hardy,
        Verify::AlmostHardy,
        Verify::Ckn,
        Verify::Fsobolev,
        Verify::Spi,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Verify::Ubound => "ubound",
            Verify::MergedUbound => "merged_ubound",
            Verify::Hardy => "hardy",
            Verify::AlmostHardy => "almost_hardy",
            Verify::Ckn => "ckn",
            Verify::Fsobolev => "fsobolev",
            Verify::Spi => "spi",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    CheckEstimates,
    Sample,
    Verify(Verify),
    SpiScan,
    SpiProbe,
    Isoperimetry,
    Cheeger,
    Report,
}

impl Command {
    /// Stem of the report files the command writes.
    pub fn stem(&self) -> String {
        match self {
            Command::Verify(v) => format!("verify_{}", v.name()),
            other => other.to_string().replace('-', "_"),
        }
    }

    /// Whether the command draws from `μ` (or reads a sample file) in MC mode.
    pub fn uses_samples(&self) -> bool {
        matches!(
            self,
            Command::Sample | Command::Verify(_) | Command::Isoperimetry | Command::Cheeger
        )
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::CheckEstimates => f.write_str("check-estimates"),
            Command::Sample => f.write_str("sample"),
            Command::Verify(v) => write!(f, "verify:{}", v.name()),
            Command::SpiScan => f.write_str("spi-scan"),
            Command::SpiProbe => f.write_str("spi-probe"),
            Command::Isoperimetry => f.write_str("isoperimetry"),
            Command::Cheeger => f.write_str("cheeger"),
            Command::Report => f.write_str("report"),
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(name) = s.strip_prefix("verify:") {
            let name = name.replace('-', "_");
            return Verify::ALL
                .iter()
                .find(|v| v.name() == name)
                .map(|v| Command::Verify(*v))
                .ok_or_else(|| CliError::UnknownCommand(s.to_string()));
        }
        match s {
            "check-estimates" => Ok(Command::CheckEstimates),
            "sample" => Ok(Command::Sample),
            "spi-scan" => Ok(Command::SpiScan),
            "spi-probe" => Ok(Command::SpiProbe),
            "isoperimetry" => Ok(Command::Isoperimetry),
            "cheeger" => Ok(Command::Cheeger),
            "report" => Ok(Command::Report),
            _ => Err(CliError::UnknownCommand(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let mut all = vec![
            Command::CheckEstimates,
            Command::Sample,
            Command::SpiScan,
            Command::SpiProbe,
            Command::Isoperimetry,
            Command::Cheeger,
            Command::Report,
        ];
        all.extend(Verify::ALL.iter().map(|v| Command::Verify(*v)));
        for c in all {
            assert_eq!(c.to_string().parse::<Command>().unwrap(), c);
        }
        assert_eq!("verify:merged-ubound".parse::<Command>().unwrap(), Command::Verify(Verify::MergedUbound));
        assert!("verify:poincare".parse::<Command>().is_err());
        assert_eq!(Command::Verify(Verify::Ckn).stem(), "verify_ckn");
        assert_eq!(Command::CheckEstimates.stem(), "check_estimates");
    }
}
