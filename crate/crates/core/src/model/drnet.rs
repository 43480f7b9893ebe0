//! The hierarchical dose-response network.

use rand::{Rng, RngCore};

use super::config::DrNetConfig;
use super::range::DosageRange;
use super::{check_batch, Batch, StepHooks, StepOutcome};
use crate::data::{OutcomeScale, Standardizer};
use crate::nn::{Activation, Adam, Matrix, SideInput, Stack, StackGrad};
use crate::{Error, Result};

/// Shared base layers, `k` treatment stacks and `k × E` dosage-stratum heads.
///
/// A unit with treatment `t` and dosage `s` is routed through
/// `base → treatment[t] → head[t][stratum(s)]`. The dosage is appended to the
/// head input, and with `repeat_dosage` to every head layer's input.
/// Covariates are z-scored and outcomes scaled with statistics fitted on the
/// training split; predictions are returned on the original outcome scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DrNet {
    config: DrNetConfig,
    normalizer: Standardizer,
    outcome_scale: OutcomeScale,
    base: Stack,
    treatment: Vec<Stack>,
    heads: Vec<Stack>,
}

fn hidden(depth: usize, width: usize) -> Vec<(usize, Activation)> {
    vec![(width, Activation::Relu); depth]
}

fn grads_or_none<'a>(g: &'a Option<StackGrad>, stack: &Stack, out: &mut Vec<Option<&'a [f64]>>) {
    match g {
        Some(g) => out.extend(g.tensors().into_iter().map(Some)),
        None => out.extend(std::iter::repeat_n(None, 2 * stack.layers().len())),
    }
}

impl DrNet {
    pub fn new<R: Rng + ?Sized>(
        config: DrNetConfig,
        normalizer: Standardizer,
        outcome_scale: OutcomeScale,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if normalizer.dim() != config.num_features {
            return Err(Error::DimensionMismatch {
                context: "normalizer features",
                expected: config.num_features,
                actual: normalizer.dim(),
            });
        }
        let base = Stack::new(
            config.num_features,
            &hidden(config.base_depth, config.base_width),
            SideInput::None,
            rng,
        )?;
        let treatment = (0..config.num_treatments)
            .map(|_| {
                Stack::new(
                    config.base_width,
                    &hidden(config.treatment_depth, config.treatment_width),
                    SideInput::None,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut head_layers = hidden(config.head_depth, config.head_width);
        head_layers.push((1, Activation::Linear));
        let side = if config.repeat_dosage {
            SideInput::Every(1)
        } else {
            SideInput::First(1)
        };
        let heads = (0..config.num_heads())
            .map(|_| {
                let mut head = Stack::new(config.treatment_width, &head_layers, side, rng)?;
                super::zero_output_layer(&mut head);
                Ok(head)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            normalizer,
            outcome_scale,
            base,
            treatment,
            heads,
        })
    }

    pub fn config(&self) -> &DrNetConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &Standardizer {
        &self.normalizer
    }

    pub fn outcome_scale(&self) -> OutcomeScale {
        self.outcome_scale
    }

    pub fn base(&self) -> &Stack {
        &self.base
    }

    pub fn treatment_stack(&self, t: usize) -> &Stack {
        &self.treatment[t]
    }

    pub fn head(&self, t: usize, stratum: usize) -> &Stack {
        &self.heads[t * self.config.num_strata + stratum]
    }

    pub fn base_mut(&mut self) -> &mut Stack {
        &mut self.base
    }

    pub fn treatment_stack_mut(&mut self, t: usize) -> &mut Stack {
        &mut self.treatment[t]
    }

    pub fn head_mut(&mut self, t: usize, stratum: usize) -> &mut Stack {
        &mut self.heads[t * self.config.num_strata + stratum]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameter tensors: base, then treatment stacks, then heads in
    /// `(t, stratum)` row-major order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.base.tensors();
        for s in self.treatment.iter().chain(&self.heads) {
            out.extend(s.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.base.tensors_mut();
        for s in self.treatment.iter_mut().chain(self.heads.iter_mut()) {
            out.extend(s.tensors_mut());
        }
        out
    }

    pub fn dosage_range(&self, t: usize) -> DosageRange {
        self.config.dosage_ranges[t]
    }

    pub fn stratum_index(&self, t: usize, s: f64) -> Result<usize> {
        self.config.dosage_ranges[t].stratum_index(s, self.config.num_strata)
    }

    fn check_treatment(&self, t: usize) -> Result<()> {
        if t >= self.config.num_treatments {
            return Err(Error::TreatmentOutOfRange {
                treatment: t,
                num_treatments: self.config.num_treatments,
            });
        }
        Ok(())
    }

    /// Treatment-layer representation of one unit.
    pub fn representation(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_treatment(t)?;
        if x.len() != self.config.num_features {
            return Err(Error::DimensionMismatch {
                context: "covariate length",
                expected: self.config.num_features,
                actual: x.len(),
            });
        }
        let z = self.normalizer.transform_row(x);
        let h0 = self.base.predict_row(&z, &[]);
        Ok(self.treatment[t].predict_row(&h0, &[]))
    }

    /// Head output for a precomputed representation. `s` must lie in range.
    pub fn predict_from_representation(&self, rep: &[f64], t: usize, s: f64) -> Result<f64> {
        let e = self.stratum_index(t, s)?;
        let out = self.head(t, e).predict_row(rep, &[s]);
        Ok(self.outcome_scale.denormalize(out[0]))
    }

    /// Predicted outcome `ŷ_t(s)` for covariates `x`.
    pub fn predict(&self, x: &[f64], t: usize, s: f64) -> Result<f64> {
        self.check_treatment(t)?;
        self.dosage_range(t).check(s)?;
        let rep = self.representation(x, t)?;
        self.predict_from_representation(&rep, t, s)
    }

    /// One optimisation step on the factual mean squared error of `batch`
    /// (on the standardised outcome scale) plus any active penalty.
    ///
    /// Each unit contributes gradient to the base layers, its own treatment
    /// stack and the head of its dosage stratum only. Tensors that receive no
    /// gradient are skipped by the optimiser.
    pub fn train_step(
        &mut self,
        batch: &Batch,
        hooks: &StepHooks<'_>,
        optimizer: &mut Adam,
        rng: &mut dyn RngCore,
    ) -> Result<StepOutcome> {
        let (outcome, grads) = self.gradients(batch, hooks, rng)?;
        let refs: Vec<Option<&[f64]>> = grads.iter().map(|g| g.as_deref()).collect();
        optimizer.step(&mut self.tensors_mut(), &refs)?;
        Ok(outcome)
    }

    /// Loss of `batch` and its gradient for every tensor in
    /// [`DrNet::tensors`] order; `None` marks tensors the batch does not
    /// reach.
    pub fn gradients(
        &mut self,
        batch: &Batch,
        hooks: &StepHooks<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<(StepOutcome, Vec<Option<Vec<f64>>>)> {
        check_batch(batch, self.config.num_features, &self.config.dosage_ranges)?;
        let n = batch.len();
        if let Some(rates) = hooks.dropout_rates {
            if rates.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "dropout rates",
                    expected: n,
                    actual: rates.len(),
                });
            }
        }
        let k = self.config.num_treatments;
        let strata = self.config.num_strata;
        let x = self.normalizer.transform(&batch.x);
        let target: Vec<f64> = batch
            .outcome
            .iter()
            .map(|&y| self.outcome_scale.normalize(y))
            .collect();

        let h0 = match hooks.dropout_rates {
            Some(rates) => self.base.forward_with_dropout(&x, None, rates, rng)?,
            None => self.base.forward(&x, None)?,
        };

        let mut by_treatment: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &t) in batch.treatment.iter().enumerate() {
            by_treatment[t].push(i);
        }

        let mut loss = 0.0;
        let mut grad_h0 = Matrix::zeros(n, h0.cols());
        let mut treatment_grads: Vec<Option<StackGrad>> = vec![None; k];
        let mut head_grads: Vec<Option<StackGrad>> = vec![None; k * strata];
        for (t, rows) in by_treatment.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let input = h0.gather_rows(rows);
            let h1 = match hooks.dropout_rates {
                Some(rates) => {
                    let sub: Vec<f64> = rows.iter().map(|&i| rates[i]).collect();
                    self.treatment[t].forward_with_dropout(&input, None, &sub, rng)?
                }
                None => self.treatment[t].forward(&input, None)?,
            };

            let mut by_stratum: Vec<Vec<usize>> = vec![Vec::new(); strata];
            for (pos, &i) in rows.iter().enumerate() {
                let e = self.config.dosage_ranges[t].stratum_index(batch.dosage[i], strata)?;
                by_stratum[e].push(pos);
            }
            let mut grad_h1 = Matrix::zeros(rows.len(), h1.cols());
            for (e, positions) in by_stratum.iter().enumerate() {
                if positions.is_empty() {
                    continue;
                }
                let dose: Vec<f64> = positions.iter().map(|&p| batch.dosage[rows[p]]).collect();
                let head = &mut self.heads[t * strata + e];
                let pred = head.forward(&h1.gather_rows(positions), Some(&Matrix::column(&dose)))?;
                let mut grad_out = Matrix::zeros(positions.len(), 1);
                for (r, &p) in positions.iter().enumerate() {
                    let residual = pred.get(r, 0) - target[rows[p]];
                    loss += residual * residual;
                    grad_out.set(r, 0, 2.0 * residual / n as f64);
                }
                let g = head.backward(&grad_out)?;
                grad_h1.scatter_add_rows(positions, &g.input);
                head_grads[t * strata + e] = Some(g);
            }
            let g = self.treatment[t].backward(&grad_h1)?;
            grad_h0.scatter_add_rows(rows, &g.input);
            treatment_grads[t] = Some(g);
        }
        let loss = loss / n as f64;
        if !loss.is_finite() {
            self.clear_traces();
            return Err(Error::NonFinite {
                value: loss,
                location: "training loss".into(),
            });
        }

        let mut penalty = 0.0;
        if let Some(p) = hooks.penalty {
            let (value, grad) = p.penalty(&h0, &batch.treatment)?;
            penalty = value;
            for (g, pg) in grad_h0.data_mut().iter_mut().zip(grad.data()) {
                *g += pg;
            }
        }
        let base_grad = Some(self.base.backward(&grad_h0)?);

        let mut grads: Vec<Option<&[f64]>> = Vec::new();
        grads_or_none(&base_grad, &self.base, &mut grads);
        for (g, s) in treatment_grads.iter().zip(&self.treatment) {
            grads_or_none(g, s, &mut grads);
        }
        for (g, s) in head_grads.iter().zip(&self.heads) {
            grads_or_none(g, s, &mut grads);
        }
        let owned = grads.iter().map(|g| g.map(<[f64]>::to_vec)).collect();
        Ok((StepOutcome { loss, penalty }, owned))
    }

    fn clear_traces(&mut self) {
        self.base.clear_trace();
        for s in self.treatment.iter_mut().chain(self.heads.iter_mut()) {
            s.clear_trace();
        }
    }
}
