use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::Gradients;
use super::tensor::{ParamId, ParamStore};
use super::RuntimeError;

/// Compares analytic gradients against central differences.
///
/// `loss` must be a deterministic function of the parameters returning the
/// scalar loss and its analytic gradient. At least `samples` (minimum 100)
/// coordinates are drawn, biased toward those with a nonzero analytic
/// gradient but always including some untouched ones. Returns the largest
/// `|analytic - numeric| / max(floor, |analytic| + |numeric|)`, where
/// `floor = max(1e-7, 1e4 * f64::EPSILON * max(1, |loss|) / epsilon)` sits
/// above the rounding noise of the central difference.
pub fn finite_diff_check<F>(
    params: &mut ParamStore,
    mut loss: F,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<f64, RuntimeError>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients), RuntimeError>,
{
    assert!(
        (1e-6..=1e-3).contains(&epsilon),
        "epsilon must lie in [1e-6, 1e-3]"
    );
    let samples = samples.max(100);
    let (value, analytic) = loss(params)?;
    let floor = (1e-7f64).max(1e4 * f64::EPSILON * value.abs().max(1.0) / epsilon);

    let mut nonzero = Vec::new();
    let mut zero = Vec::new();
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            if analytic.value(id, k) != 0.0 {
                nonzero.push((id, k));
            } else {
                zero.push((id, k));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    nonzero.shuffle(&mut rng);
    zero.shuffle(&mut rng);
    let want_zero = (samples / 5).min(zero.len());
    let want_nonzero = (samples - want_zero).min(nonzero.len());
    let mut coords: Vec<(ParamId, usize)> = nonzero[..want_nonzero].to_vec();
    coords.extend_from_slice(&zero[..(samples - coords.len()).min(zero.len())]);

    let mut worst: f64 = 0.0;
    for (id, k) in coords {
        let original = params.get(id).data[k];
        let plus = (original as f64 + epsilon) as f32;
        let minus = (original as f64 - epsilon) as f32;
        params.get_mut(id).data[k] = plus;
        let (lp, _) = loss(params)?;
        params.get_mut(id).data[k] = minus;
        let (lm, _) = loss(params)?;
        params.get_mut(id).data[k] = original;
        let numeric = (lp - lm) / (plus as f64 - minus as f64);
        let a = analytic.value(id, k);
        let err = (a - numeric).abs() / floor.max(a.abs() + numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{Linear, Tape, Tensor};

    #[test]
    fn linear_squared_loss_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "lin", 12, 10, &mut rng).unwrap();
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let target: Vec<f64> = (0..10).map(|i| (i as f64 * 0.11).cos()).collect();
        let err = finite_diff_check(
            &mut store,
            |p| {
                let mut tape = Tape::new(p);
                let xi = tape.constant(x.clone());
                let y = lin.apply(&mut tape, xi)?;
                let diff: Vec<f64> = tape.value(y).iter().zip(&target).map(|(a, b)| a - b).collect();
                let l = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
                let g = tape.backward(&[(y, diff)])?;
                Ok((l, g))
            },
            1e-4,
            100,
            7,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::from_vec(2, 1, vec![0.3, 0.7])).unwrap();
        let err = finite_diff_check(
            &mut store,
            |p| {
                let v = &p.get(id).data;
                let l = (v[0] as f64).powi(2) + (v[1] as f64).powi(2);
                let mut g = Gradients::for_params(p);
                // deliberately off by a factor of two
                g.set(id, 0, v[0] as f64);
                g.set(id, 1, v[1] as f64);
                Ok((l, g))
            },
            1e-4,
            100,
            0,
        )
        .unwrap();
        assert!(err > 0.1);
    }
}
