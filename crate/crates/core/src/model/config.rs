use std::fmt;
use std::str::FromStr;

use crate::dsp::DspConfig;
use crate::error::{Error, Result};

/// Length of every speaker embedding.
pub const EMBEDDING_DIM: usize = 192;

/// Which network is built, and where (if anywhere) the speaker embedding enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariantKind {
    /// Single encoder, no embedding.
    Baseline,
    /// Single encoder with the embedding joined where the two branches meet.
    Unified,
    /// Independent encoders, embedding in both branches.
    DualBoth,
    /// Independent encoders, embedding in the ERB branch only.
    DualErb,
    /// Independent encoders, embedding in the deep-filter branch only.
    DualDf,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::Baseline,
        VariantKind::Unified,
        VariantKind::DualBoth,
        VariantKind::DualErb,
        VariantKind::DualDf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Baseline => "baseline",
            VariantKind::Unified => "unified",
            VariantKind::DualBoth => "dual_both",
            VariantKind::DualErb => "dual_erb",
            VariantKind::DualDf => "dual_df",
        }
    }

    pub fn is_personalized(self) -> bool {
        self != VariantKind::Baseline
    }

    pub fn is_dual(self) -> bool {
        matches!(
            self,
            VariantKind::DualBoth | VariantKind::DualErb | VariantKind::DualDf
        )
    }

    pub fn embedding_in_erb_branch(self) -> bool {
        matches!(self, VariantKind::DualBoth | VariantKind::DualErb)
    }

    pub fn embedding_in_df_branch(self) -> bool {
        matches!(self, VariantKind::DualBoth | VariantKind::DualDf)
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown variant {s:?} (expected baseline, unified, dual_both, dual_erb or dual_df)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dsp: DspConfig,
    pub variant: VariantKind,
    pub conv_channels: usize,
    /// Width of the grouped-linear layers between convolutions and GRUs.
    pub linear_width: usize,
    pub linear_groups: usize,
    pub erb_gru_hidden: usize,
    pub df_gru_hidden: usize,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(dsp: DspConfig, variant: VariantKind) -> Self {
        Self {
            dsp,
            variant,
            conv_channels: 64,
            linear_width: 256,
            linear_groups: 8,
            erb_gru_hidden: 256,
            df_gru_hidden: 256,
            embedding_dim: EMBEDDING_DIM,
            seed: 0,
        }
    }

    /// Narrow network for quick experiments and tests.
    pub fn small(dsp: DspConfig, variant: VariantKind) -> Self {
        Self {
            conv_channels: 8,
            linear_width: 32,
            linear_groups: 4,
            erb_gru_hidden: 32,
            df_gru_hidden: 32,
            ..Self::new(dsp, variant)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        crate::dsp::identity_tap(self.dsp.df_order, self.dsp.lookahead_frames)?;
        let dims = [
            self.conv_channels,
            self.linear_width,
            self.linear_groups,
            self.erb_gru_hidden,
            self.df_gru_hidden,
        ];
        if dims.contains(&0) {
            return Err(Error::config("model widths must be positive"));
        }
        if self.variant.is_personalized() && self.embedding_dim != EMBEDDING_DIM {
            return Err(Error::config(format!(
                "personalized variants take {EMBEDDING_DIM}-dim embeddings, got {}",
                self.embedding_dim
            )));
        }
        if self.linear_width % self.linear_groups != 0 {
            return Err(Error::config(format!(
                "linear width {} is not divisible by {} groups",
                self.linear_width, self.linear_groups
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in VariantKind::ALL {
            assert_eq!(v.as_str().parse::<VariantKind>().unwrap(), v);
        }
        assert!(matches!("dual".parse::<VariantKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_bad_widths() {
        let mut cfg = ModelConfig::new(DspConfig::default(), VariantKind::Unified);
        cfg.validate().unwrap();
        cfg.linear_groups = 7;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::new(DspConfig::default(), VariantKind::Unified);
        cfg.embedding_dim = 128;
        assert!(cfg.validate().is_err());
    }
}
