//! Explicit Runge-Kutta integration with the Dormand-Prince 8(5,3) pair.
//!
//! States are fixed-size arrays so that the per-mode systems used throughout
//! the crate (2 to 4 components) stay on the stack. The stepper lands exactly
//! on every requested output time; the step size suggested by the controller
//! is carried over between output segments.

const N_STAGES: usize = 12;

const C: [f64; N_STAGES] = [
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
];

#[rustfmt::skip]
const A: [[f64; N_STAGES]; N_STAGES + 1] = [
    [0.0; N_STAGES],
    [5.26001519587677318785587544488e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.95875854768068491816892993775e-2, 0.0, 8.87627564304205475450678981324e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.41365134159266685502369798665e-1, 0.0, -8.84549479328286085344864962717e-1, 9.24834003261792003115737966543e-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.7037037037037037037037037037e-2, 0.0, 0.0, 1.70828608729473871279604482173e-1, 1.25467687566822425016691814123e-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.7109375e-2, 0.0, 0.0, 1.70252211019544039314978060272e-1, 6.02165389804559606850219397283e-2, -1.7578125e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.70920001185047927108779319836e-2, 0.0, 0.0, 1.70383925712239993810214054705e-1, 1.07262030446373284651809199168e-1, -1.53194377486244017527936158236e-2, 8.27378916381402288758473766002e-3, 0.0, 0.0, 0.0, 0.0, 0.0],
    [6.24110958716075717114429577812e-1, 0.0, 0.0, -3.36089262944694129406857109825, -8.68219346841726006818189891453e-1, 2.75920996994467083049415600797e1, 2.01540675504778934086186788979e1, -4.34898841810699588477366255144e1, 0.0, 0.0, 0.0, 0.0],
    [4.77662536438264365890433908527e-1, 0.0, 0.0, -2.48811461997166764192642586468, -5.90290826836842996371446475743e-1, 2.12300514481811942347288949897e1, 1.52792336328824235832596922938e1, -3.32882109689848629194453265587e1, -2.03312017085086261358222928593e-2, 0.0, 0.0, 0.0],
    [-9.3714243008598732571704021658e-1, 0.0, 0.0, 5.18637242884406370830023853209, 1.09143734899672957818500254654, -8.14978701074692612513997267357, -1.85200656599969598641566180701e1, 2.27394870993505042818970056734e1, 2.49360555267965238987089396762, -3.0467644718982195003823669022, 0.0, 0.0],
    [2.27331014751653820792359768449, 0.0, 0.0, -1.05344954667372501984066689879e1, -2.00087205822486249909675718444, -1.79589318631187989172765950534e1, 2.79488845294199600508499808837e1, -2.85899827713502369474065508674, -8.87285693353062954433549289258, 1.23605671757943030647266201528e1, 6.43392746015763530355970484046e-1, 0.0],
    // weights of the 8th-order solution
    [5.42937341165687622380535766363e-2, 0.0, 0.0, 0.0, 0.0, 4.45031289275240888144113950566, 1.89151789931450038304281599044, -5.8012039600105847814672114227, 3.1116436695781989440891606237e-1, -1.52160949662516078556178806805e-1, 2.01365400804030348374776537501e-1, 4.47106157277725905176885569043e-2],
];

#[rustfmt::skip]
const E5: [f64; N_STAGES] = [
    0.1312004499419488073250102996e-1, 0.0, 0.0, 0.0, 0.0,
    -0.1225156446376204440720569753e+1, -0.4957589496572501915214079952,
    0.1664377182454986536961530415e+1, -0.3503288487499736816886487290,
    0.3341791187130174790297318841, 0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1,
];

const fn e3_weights() -> [f64; N_STAGES] {
    let mut e = A[N_STAGES];
    e[0] -= 0.244094488188976377952755905512;
    e[8] -= 0.733846688281611857341361741547;
    e[11] -= 0.220588235294117647058823529412e-1;
    e
}

const E3: [f64; N_STAGES] = e3_weights();

/// How component errors are weighted against the solution size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    /// `atol + rtol * |y_i|` for each component separately.
    Componentwise,
    /// Components `(2j, 2j+1)` share the scale `atol + rtol * max(|y_2j|, |y_2j+1|)`.
    /// Used for (value, momentum) pairs whose individual components cross zero.
    Paired,
}

/// Reasons an integration can stop early.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeFailure {
    StepUnderflow { t: f64 },
    TooManySteps { t: f64 },
    NonFinite { t: f64 },
}

impl OdeFailure {
    pub fn time(&self) -> f64 {
        match *self {
            OdeFailure::StepUnderflow { t }
            | OdeFailure::TooManySteps { t }
            | OdeFailure::NonFinite { t } => t,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Adaptive Dormand-Prince 8(5,3) integrator.
#[derive(Debug, Clone, Copy)]
pub struct Dop853 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub norm: ErrorNorm,
}

impl Dop853 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            max_steps: 20_000_000,
            norm: ErrorNorm::Componentwise,
        }
    }

    pub fn with_norm(mut self, norm: ErrorNorm) -> Self {
        self.norm = norm;
        self
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
    pub fn integrate<const D: usize, F>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; D],
        t1: f64,
    ) -> Result<[f64; D], OdeFailure>
    where
        F: FnMut(f64, &[f64; D]) -> [f64; D],
    {
        let mut run = Run::start(self, &mut f, t0, y0, t1);
        run.advance(self, &mut f, t1)?;
        Ok(run.y)
    }

    /// Integrates through a monotone sequence of output times, calling `sink`
    /// with the state at each of them. Times equal to `t0` are reported
    /// without stepping.
    pub fn integrate_through<const D: usize, F, S>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; D],
        times: &[f64],
        mut sink: S,
    ) -> Result<(OdeStats, [f64; D]), OdeFailure>
    where
        F: FnMut(f64, &[f64; D]) -> [f64; D],
        S: FnMut(usize, &[f64; D]),
    {
        let Some(&last) = times.last() else {
            return Ok((OdeStats::default(), y0));
        };
        let mut run = Run::start(self, &mut f, t0, y0, last);
        for (i, &t) in times.iter().enumerate() {
            run.advance(self, &mut f, t)?;
            sink(i, &run.y);
        }
        Ok((run.stats, run.y))
    }
}

struct Run<const D: usize> {
    t: f64,
    y: [f64; D],
    f0: [f64; D],
    h: f64,
    stats: OdeStats,
}

impl<const D: usize> Run<D> {
    fn start<F>(cfg: &Dop853, f: &mut F, t0: f64, y0: [f64; D], t_end: f64) -> Self
    where
        F: FnMut(f64, &[f64; D]) -> [f64; D],
    {
        let f0 = f(t0, &y0);
        let mut stats = OdeStats {
            evaluations: 1,
            ..OdeStats::default()
        };
        let h = initial_step(cfg, f, t0, &y0, &f0, t_end, &mut stats);
        Self {
            t: t0,
            y: y0,
            f0,
            h,
            stats,
        }
    }

    fn advance<F>(&mut self, cfg: &Dop853, f: &mut F, target: f64) -> Result<(), OdeFailure>
    where
        F: FnMut(f64, &[f64; D]) -> [f64; D],
    {
        if self.t == target {
            return Ok(());
        }
        let dir = (target - self.t).signum();
        self.h = dir * self.h.abs();
        let mut rejected_last = false;
        let mut k = [[0.0; D]; N_STAGES + 1];
        loop {
            let remaining = target - self.t;
            if remaining * dir <= 0.0 {
                return Ok(());
            }
            if self.stats.accepted + self.stats.rejected >= cfg.max_steps {
                return Err(OdeFailure::TooManySteps { t: self.t });
            }
            let min_step = 16.0 * f64::EPSILON * self.t.abs().max(f64::MIN_POSITIVE);
            if self.h.abs() < min_step {
                return Err(OdeFailure::StepUnderflow { t: self.t });
            }
            let clamped = self.h.abs() >= remaining.abs();
            let h = if clamped { remaining } else { self.h };

            k[0] = self.f0;
            for s in 1..N_STAGES {
                let mut ys = self.y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for d in 0..D {
                            ys[d] += h * a * kj[d];
                        }
                    }
                }
                k[s] = f(self.t + C[s] * h, &ys);
            }
            let mut y_new = self.y;
            for (j, kj) in k.iter().enumerate().take(N_STAGES) {
                let b = A[N_STAGES][j];
                if b != 0.0 {
                    for d in 0..D {
                        y_new[d] += h * b * kj[d];
                    }
                }
            }
            let t_new = if clamped { target } else { self.t + h };
            self.stats.evaluations += N_STAGES - 1;

            if y_new.iter().any(|v| !v.is_finite()) {
                self.stats.rejected += 1;
                self.h *= 0.2;
                rejected_last = true;
                if self.h.abs() < min_step {
                    return Err(OdeFailure::NonFinite { t: self.t });
                }
                continue;
            }

            let err = error_norm(cfg, &k, h, &self.y, &y_new);
            if err < 1.0 {
                let mut factor = if err == 0.0 {
                    10.0
                } else {
                    (0.9 * err.powf(-1.0 / 8.0)).min(10.0)
                };
                if rejected_last {
                    factor = factor.min(1.0);
                }
                self.t = t_new;
                self.y = y_new;
                self.f0 = f(self.t, &self.y);
                self.stats.evaluations += 1;
                self.stats.accepted += 1;
                if !clamped {
                    self.h = h * factor;
                } else if h.abs() * factor < self.h.abs() {
                    self.h = dir * h.abs() * factor;
                }
                rejected_last = false;
            } else {
                self.stats.rejected += 1;
                self.h = h * (0.9 * err.powf(-1.0 / 8.0)).max(0.2);
                rejected_last = true;
            }
        }
    }
}

fn scale_of<const D: usize>(cfg: &Dop853, y: &[f64; D], y_new: &[f64; D]) -> [f64; D] {
    let mut sc = [0.0; D];
    match cfg.norm {
        ErrorNorm::Componentwise => {
            for d in 0..D {
                sc[d] = cfg.atol + cfg.rtol * y[d].abs().max(y_new[d].abs());
            }
        }
        ErrorNorm::Paired => {
            for d in (0..D).step_by(2) {
                let mut m = y[d].abs().max(y_new[d].abs());
                if d + 1 < D {
                    m = m.max(y[d + 1].abs()).max(y_new[d + 1].abs());
                }
                let s = cfg.atol + cfg.rtol * m;
                sc[d] = s;
                if d + 1 < D {
                    sc[d + 1] = s;
                }
            }
        }
    }
    sc
}

fn error_norm<const D: usize>(
    cfg: &Dop853,
    k: &[[f64; D]; N_STAGES + 1],
    h: f64,
    y: &[f64; D],
    y_new: &[f64; D],
) -> f64 {
    let sc = scale_of(cfg, y, y_new);
    let mut e5 = 0.0;
    let mut e3 = 0.0;
    for d in 0..D {
        let mut a5 = 0.0;
        let mut a3 = 0.0;
        for (j, kj) in k.iter().enumerate().take(N_STAGES) {
            a5 += E5[j] * kj[d];
            a3 += E3[j] * kj[d];
        }
        e5 += (a5 / sc[d]).powi(2);
        e3 += (a3 / sc[d]).powi(2);
    }
    if e5 == 0.0 && e3 == 0.0 {
        return 0.0;
    }
    let denom = e5 + 0.01 * e3;
    h.abs() * e5 / (denom * D as f64).sqrt()
}

fn rms<const D: usize>(v: &[f64; D], sc: &[f64; D]) -> f64 {
    (v.iter().zip(sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / D as f64).sqrt()
}

fn initial_step<const D: usize, F>(
    cfg: &Dop853,
    f: &mut F,
    t0: f64,
    y0: &[f64; D],
    f0: &[f64; D],
    t_end: f64,
    stats: &mut OdeStats,
) -> f64
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let span = (t_end - t0).abs();
    if span == 0.0 {
        return 1e-6;
    }
    let dir = (t_end - t0).signum();
    let sc = scale_of(cfg, y0, y0);
    let d0 = rms(y0, &sc);
    let d1 = rms(f0, &sc);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
    .min(span);
    let mut y1 = *y0;
    for d in 0..D {
        y1[d] += dir * h0 * f0[d];
    }
    let f1 = f(t0 + dir * h0, &y1);
    stats.evaluations += 1;
    let mut diff = [0.0; D];
    for d in 0..D {
        diff[d] = f1[d] - f0[d];
    }
    let d2 = rms(&diff, &sc) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_is_accurate() {
        let ode = Dop853::new(1e-12, 1e-14);
        let y = ode.integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], 2.0).unwrap();
        assert!((y[0] - 2f64.exp()).abs() < 1e-11 * 2f64.exp());
    }

    #[test]
    fn harmonic_oscillator_backward_and_forward() {
        let ode = Dop853::new(1e-12, 1e-14).with_norm(ErrorNorm::Paired);
        let rhs = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let y1 = ode.integrate(rhs, 0.0, [1.0, 0.0], 50.0).unwrap();
        assert!((y1[0] - 50f64.cos()).abs() < 1e-9);
        assert!((y1[1] + 50f64.sin()).abs() < 1e-9);
        let y0 = ode.integrate(rhs, 50.0, y1, 0.0).unwrap();
        assert!((y0[0] - 1.0).abs() < 1e-9 && y0[1].abs() < 1e-9);
    }

    #[test]
    fn output_times_are_hit_exactly() {
        let ode = Dop853::new(1e-10, 1e-12);
        let times = [0.0, 0.1, 0.35, 1.0, 3.0];
        let mut seen = Vec::new();
        ode.integrate_through(
            |t, _y: &[f64; 1]| [t.cos()],
            0.0,
            [0.0],
            &times,
            |i, y| seen.push((times[i], y[0])),
        )
        .unwrap();
        assert_eq!(seen.len(), times.len());
        for (t, y) in seen {
            assert!((y - t.sin()).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn eighth_order_convergence_on_fixed_steps() {
        // Errors of the accepted solution shrink at least like h^7 when the
        // tolerance is tightened by 2^8.
        let run = |tol: f64| {
            let ode = Dop853::new(tol, tol * 1e-3);
            let y = ode
                .integrate(|t, y: &[f64; 1]| [-2.0 * t * y[0]], 0.0, [1.0], 1.5)
                .unwrap();
            (y[0] - (-2.25f64).exp()).abs()
        };
        let coarse = run(1e-6);
        let fine = run(1e-10);
        assert!(fine < coarse * 1e-2, "coarse {coarse:e} fine {fine:e}");
    }

    #[test]
    fn blowup_is_reported() {
        let ode = Dop853::new(1e-10, 1e-12);
        let res = ode.integrate(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0);
        assert!(res.is_err());
    }
}
