use serde::{Deserialize, Serialize};

use super::range::DosageRange;
use crate::{Error, Result};

/// Layer layout of the hierarchical network.
///
/// Base layers are shared by all units, each treatment owns a stack of
/// treatment layers, and each `(treatment, stratum)` pair owns a head that
/// predicts the outcome for dosages inside that stratum. The baselines reuse
/// the same fields: TARNET is the `num_strata = 1`, `repeat_dosage = false`
/// case, and the MLP stacks the same depths and widths into one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrNetConfig {
    pub num_features: usize,
    pub num_treatments: usize,
    pub num_strata: usize,
    pub base_depth: usize,
    pub base_width: usize,
    pub treatment_depth: usize,
    pub treatment_width: usize,
    pub head_depth: usize,
    pub head_width: usize,
    /// Append the dosage to the input of every head layer instead of only
    /// the first.
    pub repeat_dosage: bool,
    pub dosage_ranges: Vec<DosageRange>,
}

impl DrNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_treatments < 2 {
            return bad(format!("need >= 2 treatments, got {}", self.num_treatments));
        }
        if self.num_strata == 0 {
            return bad("need >= 1 dosage stratum".into());
        }
        if self.num_features == 0 {
            return bad("need >= 1 covariate".into());
        }
        let layout = [
            ("base", self.base_depth, self.base_width),
            ("treatment", self.treatment_depth, self.treatment_width),
            ("head", self.head_depth, self.head_width),
        ];
        for (name, depth, width) in layout {
            if depth == 0 || width == 0 {
                return bad(format!("{name} layers need depth and width >= 1"));
            }
        }
        if self.dosage_ranges.len() != self.num_treatments {
            return bad(format!(
                "{} dosage ranges for {} treatments",
                self.dosage_ranges.len(),
                self.num_treatments
            ));
        }
        for r in &self.dosage_ranges {
            DosageRange::new(r.min, r.max)?;
        }
        Ok(())
    }

    /// The TARNET degenerate case of this configuration.
    pub fn as_tarnet(&self) -> Self {
        Self {
            num_strata: 1,
            repeat_dosage: false,
            ..self.clone()
        }
    }

    pub fn num_heads(&self) -> usize {
        self.num_treatments * self.num_strata
    }

    /// Parameter count of the hierarchical network, from the layout alone.
    pub fn num_params(&self) -> usize {
        fn dense(inp: usize, out: usize) -> usize {
            inp * out + out
        }
        let base = dense(self.num_features, self.base_width)
            + (self.base_depth - 1) * dense(self.base_width, self.base_width);
        let treatment = dense(self.base_width, self.treatment_width)
            + (self.treatment_depth - 1) * dense(self.treatment_width, self.treatment_width);
        let repeat = usize::from(self.repeat_dosage);
        let head = dense(self.treatment_width + 1, self.head_width)
            + (self.head_depth - 1) * dense(self.head_width + repeat, self.head_width)
            + dense(self.head_width + repeat, 1);
        base + self.num_treatments * treatment + self.num_heads() * head
    }
}
