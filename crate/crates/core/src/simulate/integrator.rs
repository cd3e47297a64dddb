use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

/// Time at which a right-hand side is evaluated inside one step.
///
/// `end_of_step` marks the last RK4 stage at `t_n + dt`. Piecewise inputs
/// whose breakpoints sit on the step grid use it to take their left limit
/// there, so a switch at `t_n + dt` does not leak into step `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTime {
    pub t: f64,
    pub end_of_step: bool,
}

impl StageTime {
    pub fn start(t: f64) -> Self {
        Self { t, end_of_step: false }
    }
}

fn checked(t: f64, d: Vec<f64>, len: usize) -> Result<Vec<f64>> {
    if d.len() != len {
        return Err(Error::Dimension(format!(
            "right-hand side returned {} components for a state of {len}",
            d.len()
        )));
    }
    if let Some(i) = d.iter().position(|v| !v.is_finite()) {
        return Err(Error::Integration {
            t,
            quantity: format!("derivative component {i}"),
            detail: "is not finite".into(),
        });
    }
    Ok(d)
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
}

/// Advances `state` by one fixed step. Every sub-state packed in the vector
/// moves on the same stage evaluations.
pub fn integrate_step<F>(
    method: Integrator,
    mut rhs: F,
    t: f64,
    state: &[f64],
    dt: f64,
) -> Result<Vec<f64>>
where
    F: FnMut(StageTime, &[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let n = state.len();
    let mut eval = |st: StageTime, x: &[f64]| -> Result<Vec<f64>> { checked(st.t, rhs(st, x)?, n) };
    match method {
        Integrator::Euler => {
            let k1 = eval(StageTime::start(t), state)?;
            Ok(axpy(state, dt, &k1))
        }
        Integrator::Rk4 => {
            let half = StageTime::start(t + 0.5 * dt);
            let k1 = eval(StageTime::start(t), state)?;
            let k2 = eval(half, &axpy(state, 0.5 * dt, &k1))?;
            let k3 = eval(half, &axpy(state, 0.5 * dt, &k2))?;
            let k4 = eval(
                StageTime {
                    t: t + dt,
                    end_of_step: true,
                },
                &axpy(state, dt, &k3),
            )?;
            Ok((0..n)
                .map(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(_: StageTime, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().map(|v| -v).collect())
    }

    #[test]
    fn rk4_matches_taylor_truncation() {
        // RK4 on ẋ = −x multiplies by 1 − h + h²/2 − h³/6 + h⁴/24
        let h: f64 = 0.1;
        let x = integrate_step(Integrator::Rk4, decay, 0.0, &[2.0], h).unwrap();
        let factor = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x[0] - 2.0 * factor).abs() < 1e-15);
        assert!((factor - (1.0 - 0.1 + 0.005 - 0.000_166_666_666_666_666_7 + 0.000_004_166_666_666_666_667)).abs() < 1e-16);
    }

    #[test]
    fn zero_field_is_identity() {
        let x = integrate_step(Integrator::Rk4, |_, x: &[f64]| Ok(vec![0.0; x.len()]), 0.0, &[1.0, -3.0], 0.5).unwrap();
        assert_eq!(x, vec![1.0, -3.0]);
    }

    #[test]
    fn global_order_is_four() {
        // ẋ = cos(t)·x on [0, 2], exact x = exp(sin t)
        let run = |steps: usize| {
            let dt = 2.0 / steps as f64;
            let mut x = vec![1.0];
            for k in 0..steps {
                let t = k as f64 * dt;
                x = integrate_step(Integrator::Rk4, |st, x: &[f64]| Ok(vec![st.t.cos() * x[0]]), t, &x, dt).unwrap();
            }
            (x[0] - 2.0f64.sin().exp()).abs()
        };
        let ratio = run(50) / run(100);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn non_finite_derivative_fails() {
        let r = integrate_step(Integrator::Rk4, |_, _: &[f64]| Ok(vec![f64::NAN]), 1.5, &[0.0], 0.1);
        assert!(matches!(r, Err(Error::Integration { t, .. }) if t == 1.5));
    }

    #[test]
    fn last_stage_is_flagged() {
        let mut seen = Vec::new();
        integrate_step(Integrator::Rk4, |st, _: &[f64]| { seen.push(st); Ok(vec![0.0]) }, 0.0, &[0.0], 1.0).unwrap();
        assert_eq!(seen.iter().filter(|s| s.end_of_step).count(), 1);
        assert!(seen[3].end_of_step && seen[3].t == 1.0);
    }
}
