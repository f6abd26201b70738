use crate::error::{Error, Result};

/// Generalized advantage estimates and returns.
///
/// `values` holds one more entry than `rewards`: the bootstrap value of the
/// state after the last transition. `terminals[t]` marks that transition `t`
/// ended its episode.
///
/// ```text
/// delta_t = r_t + gamma (1 - term_t) V_{t+1} - V_t
/// A_t     = delta_t + gamma lambda (1 - term_t) A_{t+1}
/// ```
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminals: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 {
        return Err(Error::DimensionMismatch {
            expected: n + 1,
            got: values.len(),
        });
    }
    if terminals.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: terminals.len(),
        });
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * values[t + 1] - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Shifts and scales to zero mean and unit population std. Leaves the slice
/// centred only when it has one element or no spread.
pub fn normalize(xs: &mut [f64]) {
    let n = xs.len();
    if n == 0 {
        return;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter_mut().for_each(|x| *x -= mean);
    if n < 2 {
        return;
    }
    let std = (xs.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    if std > 1e-12 {
        xs.iter_mut().for_each(|x| *x /= std);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_recursion() {
        let (a, r) = compute_gae(&[1.0, 1.0], &[0.0; 3], &[false, false], 0.99, 0.95).unwrap();
        assert!((a[0] - 1.9405).abs() < 1e-12 && (a[1] - 1.0).abs() < 1e-12);
        assert_eq!(a, r);
    }

    #[test]
    fn td_zero_limit() {
        let rw = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, -0.3, 0.4];
        let (a, _) = compute_gae(&rw, &v, &[false, true, false], 0.9, 0.0).unwrap();
        assert!((a[0] - (0.5 + 0.9 * 0.2 - 0.1)).abs() < 1e-15);
        assert!((a[1] - (-1.0 - 0.2)).abs() < 1e-15);
        assert!((a[2] - (2.0 + 0.9 * 0.4 + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn zeros_and_mismatches() {
        let (a, _) = compute_gae(&[0.0; 4], &[0.0; 5], &[false; 4], 0.99, 0.95).unwrap();
        assert!(a.iter().all(|x| *x == 0.0));
        assert!(compute_gae(&[0.0; 4], &[0.0; 4], &[false; 4], 0.99, 0.95).is_err());
        assert!(compute_gae(&[0.0; 4], &[0.0; 5], &[false; 3], 0.99, 0.95).is_err());
    }

    #[test]
    fn normalized_moments() {
        let mut xs = vec![1.0, 4.0, -2.0, 7.5, 0.25];
        normalize(&mut xs);
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12 && (var.sqrt() - 1.0).abs() < 1e-12);
    }
}
