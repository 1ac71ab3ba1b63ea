//! Dormand-Prince 5(4) step with 4th-order dense output.
//!
//! Fixed state dimension: (theta, logR, cumulative |sin 2theta| integral,
//! cumulative |sin 2theta|/(1+x) integral).

use crate::error::Result;

pub(crate) const DIM: usize = 4;
pub(crate) type State = [f64; DIM];

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
// b - b_hat (embedded 4th order error weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output weights (Hairer's contd5)
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Result of one attempted step of size `h` from `(x, y)`.
pub(crate) struct Step {
    pub y: State,
    /// Scaled error norm; accept iff <= 1.
    pub err: f64,
    /// Derivative at the step end (FSAL: reusable as the next k1).
    pub f_end: State,
    /// Dense output coefficients, valid on the step interval.
    pub dense: [State; 5],
}

impl Step {
    /// Evaluate the dense interpolant at fraction `t` of the step.
    pub fn eval(&self, t: f64) -> State {
        let s = 1.0 - t;
        let mut out = [0.0; DIM];
        for i in 0..DIM {
            let [r0, r1, r2, r3, r4] =
                [self.dense[0][i], self.dense[1][i], self.dense[2][i], self.dense[3][i], self.dense[4][i]];
            out[i] = r0 + t * (r1 + s * (r2 + t * (r3 + s * r4)));
        }
        out
    }
}

fn axpy(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for i in 0..DIM {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Take one DOPRI5(4) step. `k1` must be `f(x, y)`.
pub(crate) fn step<F>(
    f: &mut F,
    x: f64,
    y: &State,
    k1: &State,
    h: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Step>
where
    F: FnMut(f64, &State) -> Result<State>,
{
    let k2 = f(x + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(x + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(x + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(
        x + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = f(
        x + h,
        &axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    )?;
    let ynew = axpy(
        y,
        h,
        &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = f(x + h, &ynew)?;

    let mut err = 0.0;
    for i in 0..DIM {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = abs_tol + rel_tol * y[i].abs().max(ynew[i].abs());
        let r = e / scale;
        err += r * r;
    }
    err = (err / DIM as f64).sqrt();

    let mut dense = [[0.0; DIM]; 5];
    for i in 0..DIM {
        let ydiff = ynew[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        dense[0][i] = y[i];
        dense[1][i] = ydiff;
        dense[2][i] = bspl;
        dense[3][i] = ydiff - h * k7[i] - bspl;
        dense[4][i] = h
            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }

    Ok(Step {
        y: ynew,
        err,
        f_end: k7,
        dense,
    })
}

/// Step-size update from the scaled error norm of an attempted step.
pub(crate) fn next_step_size(h: f64, err: f64) -> f64 {
    let factor = if err <= f64::EPSILON {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    };
    h * factor
}
