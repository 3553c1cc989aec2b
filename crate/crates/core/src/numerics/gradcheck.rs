//! Central finite-difference verification of tape gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{ParamId, ParamSet, Tape, Var};
use super::NumericsError;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn eval<F>(params: &ParamSet, model_fn: &F) -> Result<f64, NumericsError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new(params);
    let loss = model_fn(&mut tape)?;
    tape.value(loss).item().ok_or_else(|| NumericsError::NotScalar {
        shape: tape.value(loss).shape().to_vec(),
    })
}

/// Compares analytic gradients of `model_fn` with central differences at
/// `probe_count` scalar parameters drawn uniformly over all of `params`.
///
/// `model_fn` records a forward pass on the given tape and returns the scalar
/// loss node. `params` is restored bit-exactly before returning.
pub fn gradient_check<F>(
    params: &mut ParamSet,
    probe_count: usize,
    seed: u64,
    model_fn: F,
) -> Result<GradCheckReport, NumericsError>
where
    F: Fn(&mut Tape<'_>) -> Result<Var, NumericsError>,
{
    if probe_count == 0 {
        return Err(NumericsError::GradCheck("probe_count must be at least 1".into()));
    }
    let total = params.scalar_count();
    if total == 0 {
        return Err(NumericsError::GradCheck("no parameters to probe".into()));
    }

    let grads = {
        let mut tape = Tape::new(params);
        let loss = model_fn(&mut tape)?;
        let first = tape.value(loss).item();
        let second = eval(params, &model_fn)?;
        if first.map(f64::to_bits) != Some(second.to_bits()) {
            return Err(NumericsError::NonDeterministic {
                first: first.unwrap_or(f64::NAN),
                second,
            });
        }
        tape.backward(loss)?
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::with_capacity(probe_count);
    for _ in 0..probe_count {
        let (id, index) = locate(params, rng.gen_range(0..total));
        let analytic = grads.get(id).map_or(0.0, |g| g.data()[index]);

        let original = params.get(id).value.data()[index];
        params.get_mut(id).value.data_mut()[index] = original + FD_STEP;
        let plus = eval(params, &model_fn);
        params.get_mut(id).value.data_mut()[index] = original - FD_STEP;
        let minus = eval(params, &model_fn);
        params.get_mut(id).value.data_mut()[index] = original;
        let numeric = (plus? - minus?) / (2.0 * FD_STEP);

        probes.push(Probe {
            param: params.get(id).name.clone(),
            index,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    let max_rel_error = probes.iter().map(|p| p.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        probes,
        max_rel_error,
    })
}

fn locate(params: &ParamSet, mut flat: usize) -> (ParamId, usize) {
    for (i, p) in params.iter().enumerate() {
        if flat < p.value.len() {
            return (ParamId(i), flat);
        }
        flat -= p.value.len();
    }
    unreachable!("flat index beyond parameter count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ParamKind, ParamTensor, Tensor};
    use std::cell::Cell;

    fn linear() -> (ParamSet, ParamId, ParamId) {
        let mut ps = ParamSet::new();
        let w = ps
            .insert(ParamTensor::new(
                "w",
                ParamKind::Weight,
                Tensor::new(vec![2, 3], vec![0.3, -0.1, 0.2, 0.5, 0.4, -0.6]).unwrap(),
            ))
            .unwrap();
        let b = ps
            .insert(ParamTensor::new(
                "b",
                ParamKind::Bias,
                Tensor::from_vec(vec![0.1, -0.1]),
            ))
            .unwrap();
        (ps, w, b)
    }

    #[test]
    fn linear_model_is_exact() {
        let (mut ps, w, b) = linear();
        let before = ps.clone();
        // Loss linear in every parameter: sum of dense outputs via a fixed readout.
        let report = gradient_check(&mut ps, 20, 7, |tape| {
            let x = tape.input(Tensor::from_vec(vec![1.0, 2.0, -0.5]));
            let (wv, bv) = (tape.param(w), tape.param(b));
            let y = tape.dense(x, wv, bv)?;
            let ones = tape.input(Tensor::new(vec![1, 2], vec![1.0, -2.0])?);
            let zero = tape.input(Tensor::from_vec(vec![0.0]));
            let s = tape.dense(y, ones, zero)?;
            Ok(tape.flatten(s))
        });
        // Shape [1] is a single element, accepted as scalar.
        let report = report.unwrap();
        assert!(report.max_rel_error < 1e-8, "{:?}", report.worst());
        assert_eq!(ps, before);
    }

    #[test]
    fn flat_direction_gives_zero_on_both_sides() {
        let mut ps = ParamSet::new();
        let used = ps
            .insert(ParamTensor::new("used", ParamKind::Weight, Tensor::from_vec(vec![0.5])))
            .unwrap();
        ps.insert(ParamTensor::new("unused", ParamKind::Weight, Tensor::from_vec(vec![0.5; 4])))
            .unwrap();
        let report = gradient_check(&mut ps, 30, 1, |tape| {
            let u = tape.param(used);
            Ok(tape.sum_squares(u))
        })
        .unwrap();
        for p in report.probes.iter().filter(|p| p.param == "unused") {
            assert_eq!(p.analytic, 0.0);
            assert_eq!(p.numeric, 0.0);
        }
        assert!(report.probes.iter().any(|p| p.param == "unused"));
    }

    #[test]
    fn nondeterminism_detected() {
        let (mut ps, w, _) = linear();
        let calls = Cell::new(0.0);
        let err = gradient_check(&mut ps, 1, 0, |tape| {
            calls.set(calls.get() + 1.0);
            let x = tape.input(Tensor::scalar(calls.get()));
            let wv = tape.param(w);
            let s = tape.sum_squares(wv);
            let t = tape.sum_squares(x);
            // Shapes differ ([] vs []) only in value.
            tape.add(s, t)
        })
        .unwrap_err();
        assert!(matches!(err, NumericsError::NonDeterministic { .. }));
    }

    #[test]
    fn zero_probes_rejected() {
        let (mut ps, w, _) = linear();
        assert!(gradient_check(&mut ps, 0, 0, |t| {
            let v = t.param(w);
            Ok(t.sum_squares(v))
        })
        .is_err());
    }
}
