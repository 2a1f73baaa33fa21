//! Explicit adaptive Runge-Kutta integration for complex-valued systems.
//!
//! The stepper is the Dormand-Prince 8(5,3) pair: an eighth-order solution
//! with a combined fifth/third-order embedded error estimate. Errors are
//! measured in the max norm over components, so a long state vector made of
//! many independent blocks is controlled block by block rather than on
//! average.

#![allow(clippy::excessive_precision)]

use num_complex::Complex64;
use thiserror::Error;

/// State vectors the integrator can advance.
pub trait OdeState: Clone {
    fn components(&self) -> &[Complex64];
    fn components_mut(&mut self) -> &mut [Complex64];
}

impl<const D: usize> OdeState for [Complex64; D] {
    fn components(&self) -> &[Complex64] {
        self
    }

    fn components_mut(&mut self) -> &mut [Complex64] {
        self
    }
}

impl OdeState for Vec<Complex64> {
    fn components(&self) -> &[Complex64] {
        self
    }

    fn components_mut(&mut self) -> &mut [Complex64] {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("step limit {max_steps} reached at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("cannot integrate backwards from t = {from} to t = {to}")]
    Backwards { from: f64, to: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on |h|; `f64::INFINITY` disables it.
    pub h_max: f64,
}

/// Drivers run the stepper at their accuracy target divided by this, so
/// that norm drift accumulated over a long ramp stays within the target.
pub const LOCAL_TOL_DIVISOR: f64 = 10.0;

/// Largest acceptable |‖ψ‖² − 1| after integrating at accuracy `tol`. Drift
/// grows like steps × local error, so the bound has an absolute floor.
pub fn norm_drift_limit(tol: f64) -> f64 {
    (100.0 * tol).max(1e-6)
}

impl StepControl {
    /// Relative and absolute tolerance both set to `tol`.
    pub fn with_tolerance(tol: f64) -> Self {
        StepControl {
            rtol: tol,
            atol: tol,
            max_steps: 50_000_000,
            h_max: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.333; // h_new / h >= FAC_MIN
const FAC_MAX: f64 = 6.0; // h_new / h <= FAC_MAX
const EXPO: f64 = 1.0 / 8.0;

/// Dormand-Prince 8(5,3) stepper that owns its state and can be advanced to
/// successive target times.
pub struct Dop853<S, F> {
    rhs: F,
    control: StepControl,
    t: f64,
    y: S,
    /// f(t, y), kept between steps (first-same-as-last).
    f0: S,
    stages: Vec<S>,
    scratch: S,
    y_new: S,
    h: Option<f64>,
    stats: Stats,
}

impl<S, F> Dop853<S, F>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    pub fn new(mut rhs: F, t0: f64, y0: S, control: StepControl) -> Self {
        let mut f0 = y0.clone();
        rhs(t0, &y0, &mut f0);
        let stages = (0..12).map(|_| y0.clone()).collect();
        Dop853 {
            rhs,
            control,
            t: t0,
            scratch: y0.clone(),
            y_new: y0.clone(),
            y: y0,
            f0,
            stages,
            h: None,
            stats: Stats {
                evaluations: 1,
                ..Stats::default()
            },
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &S {
        &self.y
    }

    pub fn into_state(self) -> S {
        self.y
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    /// Advance until `t_end`, landing on it exactly.
    pub fn advance_to(&mut self, t_end: f64) -> Result<(), IntegrationError> {
        if t_end < self.t {
            return Err(IntegrationError::Backwards {
                from: self.t,
                to: t_end,
            });
        }
        if t_end == self.t {
            return Ok(());
        }
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(t_end),
        };
        let mut last_rejected = false;
        while self.t < t_end {
            if self.stats.accepted + self.stats.rejected >= self.control.max_steps {
                return Err(IntegrationError::TooManySteps {
                    t: self.t,
                    max_steps: self.control.max_steps,
                });
            }
            h = h.min(self.control.h_max);
            let remaining = t_end - self.t;
            // avoid leaving a sliver shorter than round-off at the end
            let clipped = h >= remaining || remaining - h <= 1e-12 * remaining;
            let h_step = if clipped { remaining } else { h };
            if h_step <= 16.0 * f64::EPSILON * self.t.abs().max(1.0) {
                return Err(IntegrationError::StepSizeUnderflow { t: self.t, h: h_step });
            }

            let err = self.attempt(h_step);
            if !err.is_finite() {
                // treat as a rejection with maximal shrink
                self.stats.rejected += 1;
                h = h_step * FAC_MIN;
                last_rejected = true;
                continue;
            }
            let fac11 = err.powf(EXPO);
            let fac = (fac11 / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h_step / fac;
            if err <= 1.0 {
                self.stats.accepted += 1;
                self.t = if clipped { t_end } else { self.t + h_step };
                std::mem::swap(&mut self.y, &mut self.y_new);
                (self.rhs)(self.t, &self.y, &mut self.f0);
                self.stats.evaluations += 1;
                if self
                    .y
                    .components()
                    .iter()
                    .any(|z| !z.re.is_finite() || !z.im.is_finite())
                {
                    return Err(IntegrationError::NonFinite { t: self.t });
                }
                if last_rejected {
                    h_new = h_new.min(h_step);
                }
                last_rejected = false;
                // a step shortened to hit t_end says nothing about the natural size
                h = if clipped { h.max(h_new) } else { h_new };
            } else {
                self.stats.rejected += 1;
                h = h_step / (1.0 / FAC_MIN).min(fac11 / SAFE);
                last_rejected = true;
            }
        }
        self.h = Some(h);
        Ok(())
    }

    fn initial_step(&mut self, t_end: f64) -> f64 {
        let span = t_end - self.t;
        let (rtol, atol) = (self.control.rtol, self.control.atol);
        let y = self.y.components();
        let f = self.f0.components();
        let mut d0: f64 = 0.0;
        let mut d1: f64 = 0.0;
        for (yi, fi) in y.iter().zip(f) {
            let sk = atol + rtol * yi.norm();
            d0 = d0.max(yi.norm() / sk);
            d1 = d1.max(fi.norm() / sk);
        }
        let mut h0 = if d0 <= 1e-10 || d1 <= 1e-10 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h0 = h0.min(span).min(self.control.h_max);

        // explicit Euler probe for a second-derivative estimate
        {
            let (y, f0, probe) = (&self.y, &self.f0, &mut self.scratch);
            for ((p, yi), fi) in probe
                .components_mut()
                .iter_mut()
                .zip(y.components())
                .zip(f0.components())
            {
                *p = yi + fi * h0;
            }
        }
        let mut f1 = self.stages[0].clone();
        (self.rhs)(self.t + h0, &self.scratch, &mut f1);
        self.stats.evaluations += 1;
        let mut d2: f64 = 0.0;
        for ((yi, fa), fb) in self
            .y
            .components()
            .iter()
            .zip(self.f0.components())
            .zip(f1.components())
        {
            let sk = atol + rtol * yi.norm();
            d2 = d2.max((fb - fa).norm() / sk);
        }
        d2 /= h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(EXPO)
        };
        (100.0 * h0).min(h1).min(span).min(self.control.h_max)
    }

    /// One trial step of size `h` from (t, y). Leaves the candidate in
    /// `y_new` and returns the scaled error (accept when <= 1).
    fn attempt(&mut self, h: f64) -> f64 {
        let t = self.t;
        let n = self.y.components().len();
        let k1 = &self.f0;

        // stage k_s lives in stages[s - 2] for s = 2..=12; stages[11] holds the
        // high-order increment
        macro_rules! stage {
            ($idx:expr, $c:expr, [$( ($a:expr, $k:expr) ),*]) => {{
                {
                    let ys = self.scratch.components_mut();
                    let y0 = self.y.components();
                    let f1 = k1.components();
                    for i in 0..n {
                        #[allow(unused_mut)]
                        let mut acc = f1[i] * A_FIRST[$idx];
                        $( acc += self.stages[$k].components()[i] * $a; )*
                        ys[i] = y0[i] + acc * h;
                    }
                }
                (self.rhs)(t + $c * h, &self.scratch, &mut self.stages[$idx]);
            }};
        }

        // indices: stages[0]=k2, [1]=k3, [2]=k4, [3]=k5, [4]=k6, [5]=k7,
        // [6]=k8, [7]=k9, [8]=k10, [9]=k11, [10]=k12
        stage!(0, C2, []);
        stage!(1, C3, [(A32, 0)]);
        stage!(2, C4, [(A43, 1)]);
        stage!(3, C5, [(A53, 1), (A54, 2)]);
        stage!(4, C6, [(A64, 2), (A65, 3)]);
        stage!(5, C7, [(A74, 2), (A75, 3), (A76, 4)]);
        stage!(6, C8, [(A84, 2), (A85, 3), (A86, 4), (A87, 5)]);
        stage!(7, C9, [(A94, 2), (A95, 3), (A96, 4), (A97, 5), (A98, 6)]);
        stage!(
            8,
            C10,
            [(A104, 2), (A105, 3), (A106, 4), (A107, 5), (A108, 6), (A109, 7)]
        );
        stage!(
            9,
            C11,
            [
                (A114, 2),
                (A115, 3),
                (A116, 4),
                (A117, 5),
                (A118, 6),
                (A119, 7),
                (A1110, 8)
            ]
        );
        stage!(
            10,
            1.0,
            [
                (A124, 2),
                (A125, 3),
                (A126, 4),
                (A127, 5),
                (A128, 6),
                (A129, 7),
                (A1210, 8),
                (A1211, 9)
            ]
        );
        self.stats.evaluations += 11;

        let (rtol, atol) = (self.control.rtol, self.control.atol);
        let mut err5: f64 = 0.0;
        let mut err3: f64 = 0.0;
        {
            let y0 = self.y.components();
            let f1 = k1.components();
            let s = |j: usize, i: usize| self.stages[j].components()[i];
            let yn = self.y_new.components_mut();
            for i in 0..n {
                let incr = f1[i] * B1
                    + s(4, i) * B6
                    + s(5, i) * B7
                    + s(6, i) * B8
                    + s(7, i) * B9
                    + s(8, i) * B10
                    + s(9, i) * B11
                    + s(10, i) * B12;
                yn[i] = y0[i] + incr * h;
                let sk = atol + rtol * y0[i].norm().max(yn[i].norm());
                let e3 = incr - f1[i] * BHH1 - s(7, i) * BHH2 - s(10, i) * BHH3;
                let e5 = f1[i] * ER1
                    + s(4, i) * ER6
                    + s(5, i) * ER7
                    + s(6, i) * ER8
                    + s(7, i) * ER9
                    + s(8, i) * ER10
                    + s(9, i) * ER11
                    + s(10, i) * ER12;
                err3 = err3.max((e3.norm() / sk).powi(2));
                err5 = err5.max((e5.norm() / sk).powi(2));
            }
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        h.abs() * err5 / deno.sqrt()
    }
}

/// Integrate from `t0` to `t1` and return the final state.
pub fn integrate<S, F>(rhs: F, t0: f64, t1: f64, y0: S, control: StepControl) -> Result<S, IntegrationError>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    let mut stepper = Dop853::new(rhs, t0, y0, control);
    stepper.advance_to(t1)?;
    Ok(stepper.into_state())
}

const A_FIRST: [f64; 11] = [A21, A31, A41, A51, A61, A71, A81, A91, A101, A111, A121];

const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;
