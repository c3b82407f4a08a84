use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::scalar::Real;

use super::{Tape, Tensor, Var};

/// Tolerance on row sums accepted by [`Tape::lovasz_softmax`].
pub const PROB_SUM_TOL: f64 = 1e-6;

/// Which classes the Lovász-softmax loss averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LovaszClasses {
    /// Classes that appear in the labels.
    Present,
    /// Classes in the labels, plus absent classes that receive any
    /// predicted probability mass.
    #[default]
    PresentOrPredicted,
    /// Every class.
    All,
}

fn valid_rows(labels: &[usize], ignore_index: Option<usize>, classes: usize) -> Result<Vec<(usize, usize)>> {
    let mut rows = Vec::with_capacity(labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if Some(l) == ignore_index {
            continue;
        }
        if l >= classes {
            return Err(Error::OutOfRange(format!("label {l} at row {i} outside [0, {classes})")));
        }
        rows.push((i, l));
    }
    if rows.is_empty() {
        return Err(Error::DegenerateBatch("every entry is ignored".into()));
    }
    Ok(rows)
}

fn rows_cols<T: Real>(tape: &Tape<T>, v: Var, labels: &[usize], what: &str) -> Result<(usize, usize)> {
    match *tape.shape(v) {
        [n, c] if n == labels.len() => Ok((n, c)),
        ref s => Err(shape_err(format!("{what}: expected [{}xC] input, got {s:?}", labels.len()))),
    }
}

/// Lovász-extension gradient of the Jaccard loss for one class, given the
/// ground-truth indicator already sorted by descending error.
pub(crate) fn lovasz_grad<T: Real>(gt_sorted: &[bool]) -> Vec<T> {
    let total: f64 = gt_sorted.iter().filter(|&&g| g).count() as f64;
    let mut cum_gt = 0.0;
    let mut cum_bg = 0.0;
    let mut prev = 0.0;
    gt_sorted
        .iter()
        .map(|&g| {
            if g {
                cum_gt += 1.0;
            } else {
                cum_bg += 1.0;
            }
            let inter = total - cum_gt;
            let union = total + cum_bg;
            let jac = 1.0 - inter / union;
            let step = jac - prev;
            prev = jac;
            T::lit(step)
        })
        .collect()
}

impl<T: Real> Tape<T> {
    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits[N×C]`, skipping rows labelled `ignore_index`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], ignore_index: Option<usize>) -> Result<Var> {
        let (_, c) = rows_cols(self, logits, labels, "cross_entropy")?;
        let rows = valid_rows(labels, ignore_index, c)?;
        let x = self.value(logits).data();
        let count = T::lit(rows.len() as f64);
        let mut total = T::zero();
        let mut soft = Vec::with_capacity(rows.len() * c);
        for &(i, l) in &rows {
            let row = &x[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + z.ln();
            total += lse - row[l];
            soft.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let value = Tensor::scalar(total / count);
        Ok(self.record(value, &[logits], move |ctx| {
            let scale = ctx.grad.item() / count;
            let mut d = Tensor::zeros(ctx.inputs[0].shape());
            let out = d.data_mut();
            for (r, &(i, l)) in rows.iter().enumerate() {
                for k in 0..c {
                    let onehot = if k == l { T::one() } else { T::zero() };
                    out[i * c + k] = scale * (soft[r * c + k] - onehot);
                }
            }
            vec![Some(d)]
        }))
    }

    /// Lovász-softmax over `probs[N×C]` (rows must sum to one). Rows
    /// labelled `ignore_index` are dropped before sorting.
    pub fn lovasz_softmax(
        &mut self,
        probs: Var,
        labels: &[usize],
        ignore_index: Option<usize>,
        classes: LovaszClasses,
    ) -> Result<Var> {
        let (_, c) = rows_cols(self, probs, labels, "lovasz_softmax")?;
        let rows = valid_rows(labels, ignore_index, c)?;
        let p = self.value(probs).data();
        for (i, row) in p.chunks(c).enumerate() {
            let s: f64 = row.iter().map(|v| v.as_f64()).sum();
            if !s.is_finite() || (s - 1.0).abs() > PROB_SUM_TOL || row.iter().any(|&v| v < T::zero()) {
                return Err(Error::Contract(format!("row {i} of probabilities sums to {s}")));
            }
        }

        // (class, per-row loss gradient coefficient) for each contributing class
        let mut terms: Vec<(usize, Vec<T>)> = Vec::new();
        let mut total = T::zero();
        for class in 0..c {
            let present = rows.iter().any(|&(_, l)| l == class);
            let include = match classes {
                LovaszClasses::Present => present,
                LovaszClasses::All => true,
                LovaszClasses::PresentOrPredicted => {
                    present || rows.iter().any(|&(i, _)| p[i * c + class] > T::zero())
                }
            };
            if !include {
                continue;
            }
            let errors: Vec<T> = rows
                .iter()
                .map(|&(i, l)| {
                    let pc = p[i * c + class];
                    if l == class { T::one() - pc } else { pc }
                })
                .collect();
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| errors[b].partial_cmp(&errors[a]).unwrap_or(std::cmp::Ordering::Equal));
            let gt_sorted: Vec<bool> = order.iter().map(|&r| rows[r].1 == class).collect();
            let g = lovasz_grad::<T>(&gt_sorted);
            let mut coeff = vec![T::zero(); rows.len()];
            for (rank, &r) in order.iter().enumerate() {
                total += errors[r] * g[rank];
                coeff[r] = g[rank];
            }
            terms.push((class, coeff));
        }
        if terms.is_empty() {
            return Err(Error::DegenerateBatch("no class contributes to the Lovász loss".into()));
        }
        let k = T::lit(terms.len() as f64);
        let value = Tensor::scalar(total / k);
        Ok(self.record(value, &[probs], move |ctx| {
            let scale = ctx.grad.item() / k;
            let mut d = Tensor::zeros(ctx.inputs[0].shape());
            let out = d.data_mut();
            for (class, coeff) in &terms {
                for (r, &(i, l)) in rows.iter().enumerate() {
                    // error is 1 − p for the labelled class, p otherwise
                    let sign = if l == *class { -T::one() } else { T::one() };
                    out[i * c + class] += scale * sign * coeff[r];
                }
            }
            vec![Some(d)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(tape: &mut Tape<f64>, n: usize, c: usize, data: &[f64]) -> Var {
        tape.constant(Tensor::from_f64(&[n, c], data).unwrap())
    }

    #[test]
    fn confident_correct_cross_entropy_is_zero() {
        let mut tape = Tape::new();
        let logits = probs(&mut tape, 2, 3, &[1e3, 0., 0., 0., 0., 1e3]);
        let l = tape.cross_entropy(logits, &[0, 2], None).unwrap();
        assert!(tape.value(l).item().abs() < 1e-12);
    }

    #[test]
    fn uniform_cross_entropy_is_log_classes() {
        let mut tape = Tape::new();
        let logits = probs(&mut tape, 3, 4, &[0.0; 12]);
        let l = tape.cross_entropy(logits, &[0, 3, 1], None).unwrap();
        assert!((tape.value(l).item() - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn all_ignored_is_degenerate() {
        let mut tape = Tape::new();
        let logits = probs(&mut tape, 2, 2, &[0.0; 4]);
        assert!(matches!(tape.cross_entropy(logits, &[9, 9], Some(9)), Err(Error::DegenerateBatch(_))));
        assert!(matches!(tape.cross_entropy(logits, &[0, 2], None), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn perfect_one_hot_lovasz_is_zero() {
        for variant in [LovaszClasses::Present, LovaszClasses::PresentOrPredicted, LovaszClasses::All] {
            let mut tape = Tape::new();
            let p = probs(&mut tape, 3, 3, &[1., 0., 0., 0., 0., 1., 0., 1., 0.]);
            let l = tape.lovasz_softmax(p, &[0, 2, 1], None, variant).unwrap();
            assert_eq!(tape.value(l).item(), 0.0);
        }
    }

    #[test]
    fn unnormalized_rows_violate_contract() {
        let mut tape = Tape::new();
        let p = probs(&mut tape, 1, 2, &[0.5, 0.6]);
        assert!(matches!(tape.lovasz_softmax(p, &[0], None, LovaszClasses::Present), Err(Error::Contract(_))));
    }

    #[test]
    fn lovasz_grad_of_single_positive() {
        // one foreground element sorted first: jaccard jumps to 1 immediately
        let g: Vec<f64> = lovasz_grad(&[true, false, false]);
        assert_eq!(g, vec![1.0, 0.0, 0.0]);
        let g: Vec<f64> = lovasz_grad(&[false, true]);
        assert_eq!(g, vec![0.5, 0.5]);
    }
}
