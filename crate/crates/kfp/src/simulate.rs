//! Time integration of the deflated bilinear dynamics
//! `dζ̂/dt = Âζ̂ + Σᵢ uᵢ(N̂ᵢζ̂ + b̂ᵢ)` with feedback `uᵢ = −(Kζ̂)ᵢ` (or
//! `u ≡ 0` for the open loop), plus initial-state construction, observable
//! extraction, and decay-rate fitting.
//!
//! The simulation runs in **unscaled** variables: the shift δ enters only
//! through the gain `K` (computed from the δ-shifted Riccati equation), and
//! the feedback identity `u(t) = −(1/β)B̂ᵀΠŷ(t)` holds verbatim for the
//! unscaled state, so the success criterion becomes a fitted decay slope
//! ≤ −δ instead of boundedness of an exponentially rescaled trajectory.
//!
//! The full symmetrized state decomposes as `ŷ = lift(ζ̂) + m₀ŝ` with the
//! mass coordinate `m₀ = ⟨ŝ, Ty₀⟩` frozen by construction; the affine
//! control vector seen by the deflated dynamics is therefore the stored
//! `b̂ᵢ = restrict(Ñᵢ T𝟙)` rescaled by `m₀/‖T𝟙‖`.
//!
//! Time stepping uses the Bogacki–Shampine 2(3) embedded pair (first-same-
//! as-last) with a standard PI step-size controller and cubic Hermite dense
//! output at the requested sample times; the local error is controlled
//! componentwise against `atol + rtol·|state|`.

use crate::deflate::DeflatedSystem;
use crate::discretize::{weighted_inner, OperatorBundle};
use crate::error::{KfpError, Result};
use matkernel::{dot, DenseMatrix};

/// Which initial condition to construct.
pub enum InitialKind {
    /// `y₀ = 1 + a·cos(2πx)·sin(πv/2)`, the separated low-mode perturbation.
    Perturbed,
    /// Density mixture `ρ₀ = (1−θ)μ + θ·(μ∘R₉₀)` with the quarter rotation
    /// `R₉₀(x,v) = (v, −x)`, sampled by bilinear interpolation of μ.
    Rotated { theta: f64 },
    /// Caller-supplied direct-coordinate values on the grid (normalized here).
    Custom(Vec<f64>),
}

/// An initial state in both coordinate systems, normalized to unit mass.
pub struct InitialState {
    pub label: String,
    /// Direct coordinates `y₀ = ρ₀/μ`, with `⟨y₀, 𝟙⟩_Y = 1`.
    pub y: Vec<f64>,
    /// Deflated coordinates `ζ̂₀ = restrict(Ty₀ − ŝ⟨ŝ, Ty₀⟩)`.
    pub zeta_hat: Vec<f64>,
    pub amplitude: f64,
    /// Frozen mass coordinate `m₀ = ⟨ŝ, Ty₀⟩`.
    pub mass_mode: f64,
}

/// Bilinear interpolation of grid values at `(x, v)`; zero outside the grid
/// (where the weight has decayed below relevance anyway).
fn bilinear(grid: &crate::grid::PhaseGrid, vals: &[f64], x: f64, v: f64) -> f64 {
    let (px, pv) = (grid.points_x(), grid.points_v());
    let ux = (x - grid.x(0)) / grid.hx();
    let uv = (v - grid.v(0)) / grid.hv();
    if !(0.0..=(px - 1) as f64).contains(&ux) || !(0.0..=(pv - 1) as f64).contains(&uv) {
        return 0.0;
    }
    let i0 = (ux.floor() as usize).min(px - 2);
    let j0 = (uv.floor() as usize).min(pv - 2);
    let fx = ux - i0 as f64;
    let fv = uv - j0 as f64;
    let at = |i: usize, j: usize| vals[i * pv + j];
    (1.0 - fx) * ((1.0 - fv) * at(i0, j0) + fv * at(i0, j0 + 1))
        + fx * ((1.0 - fv) * at(i0 + 1, j0) + fv * at(i0 + 1, j0 + 1))
}

pub fn make_initial(
    kind: &InitialKind,
    bundle: &OperatorBundle,
    deflated: &DeflatedSystem,
    amplitude: f64,
) -> Result<InitialState> {
    let grid = &bundle.grid;
    let n = grid.n();
    let pv = grid.points_v();
    let (mut y, label) = match kind {
        InitialKind::Perturbed => {
            if !amplitude.is_finite() {
                return Err(KfpError::Simulate(format!(
                    "perturbation amplitude must be finite, got {amplitude}"
                )));
            }
            let mut y = vec![0.0; n];
            for i in 0..grid.points_x() {
                let cx = (2.0 * std::f64::consts::PI * grid.x(i)).cos();
                for j in 0..pv {
                    let sv = (0.5 * std::f64::consts::PI * grid.v(j)).sin();
                    y[i * pv + j] = 1.0 + amplitude * cx * sv;
                }
            }
            (y, format!("perturbed(a={amplitude})"))
        }
        InitialKind::Rotated { theta } => {
            if !(0.0..=1.0).contains(theta) {
                return Err(KfpError::Simulate(format!(
                    "rotation mixing weight must lie in [0, 1], got {theta}"
                )));
            }
            let mu = &bundle.weight.mu;
            let mut rho = vec![0.0; n];
            for i in 0..grid.points_x() {
                for j in 0..pv {
                    // R₉₀ sends (x, v) to (v, −x): sample μ there.
                    let rotated = bilinear(grid, mu, grid.v(j), -grid.x(i));
                    rho[i * pv + j] = (1.0 - theta) * mu[i * pv + j] + theta * rotated;
                }
            }
            if rho.iter().cloned().fold(0.0f64, f64::max) < 1e-300 {
                return Err(KfpError::Simulate(
                    "rotated density underflowed at every node; the rotated support \
                     does not meet the grid"
                        .into(),
                ));
            }
            let mut y = vec![0.0; n];
            for k in 0..n {
                if mu[k] == 0.0 {
                    if rho[k] != 0.0 {
                        return Err(KfpError::Simulate(
                            "rotated density is positive where the invariant weight \
                             underflowed; shrink the domain"
                                .into(),
                        ));
                    }
                } else {
                    y[k] = rho[k] / mu[k];
                }
            }
            (y, format!("rotated(θ={theta})"))
        }
        InitialKind::Custom(vals) => {
            if vals.len() != n {
                return Err(KfpError::Simulate(format!(
                    "custom initial state has {} values but the grid has {n} nodes",
                    vals.len()
                )));
            }
            (vals.clone(), "custom".to_string())
        }
    };

    let ones = vec![1.0; n];
    let m = weighted_inner(&y, &ones, &bundle.t_diag);
    if !(m.is_finite() && m > 0.0) {
        return Err(KfpError::Simulate(format!(
            "initial state has non-positive or non-finite mass {m}; cannot normalize"
        )));
    }
    for v in &mut y {
        *v /= m;
    }

    let y_sym: Vec<f64> = y.iter().zip(&bundle.t_diag).map(|(a, t)| a * t).collect();
    let mass_mode = dot(&bundle.s_hat, &y_sym);
    // The zero-amplitude perturbed state is uniform, and a uniform state's
    // deflated representation is exactly zero; routing it through the
    // reflector would leave ~1e−16 arithmetic noise instead, which the
    // strongly non-normal generator can amplify ten orders of magnitude
    // through its transient before decay sets in. Use the exact projection.
    let zeta_hat = if matches!(kind, InitialKind::Perturbed) && amplitude == 0.0 {
        vec![0.0; deflated.dim()]
    } else {
        let centered: Vec<f64> = y_sym
            .iter()
            .zip(&bundle.s_hat)
            .map(|(a, s)| a - mass_mode * s)
            .collect();
        deflated.restrict(&centered)
    };
    Ok(InitialState { label, y, zeta_hat, amplitude, mass_mode })
}

/// Sampled solution with observables. `states` holds the deflated state at
/// each sample; `controls` and `mass` are filled by [`run_simulation`] and
/// left empty by the raw integrator.
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `‖ζ̂(t)‖₂` (equals the weighted norm of the projected direct state).
    pub norm_zeta: Vec<f64>,
    /// Feedback values per sample, one entry per control channel.
    pub controls: Vec<Vec<f64>>,
    /// `⟨y(t), 𝟙⟩_Y` reconstructed from the lifted state plus mass mode.
    pub mass: Vec<f64>,
}

impl Trajectory {
    /// CSV with columns `t, norm_zeta, u_1..u_m, mass`.
    pub fn to_csv(&self) -> String {
        let m = self.controls.first().map_or(0, Vec::len);
        let mut s = String::from("t,norm_zeta");
        for i in 1..=m {
            s.push_str(&format!(",u_{i}"));
        }
        s.push_str(",mass\n");
        for (k, &t) in self.times.iter().enumerate() {
            s.push_str(&format!("{:.16e},{:.16e}", t, self.norm_zeta[k]));
            for i in 0..m {
                s.push_str(&format!(",{:.16e}", self.controls[k][i]));
            }
            let mass = self.mass.get(k).copied().unwrap_or(f64::NAN);
            s.push_str(&format!(",{mass:.16e}\n"));
        }
        s
    }
}

/// Step-size and output controls for the embedded 2(3) pair.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Cap on the step size; default: a quarter of the span.
    pub max_step: Option<f64>,
    /// Sample times (strictly increasing, inside the span); default: 401
    /// uniform samples including both endpoints.
    pub output_times: Option<Vec<f64>>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rtol: 1e-3, atol: 1e-6, max_step: None, output_times: None }
    }
}

impl IntegratorConfig {
    fn validate(&self) -> Result<()> {
        for (name, v) in [("rtol", self.rtol), ("atol", self.atol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(KfpError::Simulate(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if let Some(h) = self.max_step {
            if !(h.is_finite() && h > 0.0) {
                return Err(KfpError::Simulate(format!(
                    "max_step must be positive and finite, got {h}"
                )));
            }
        }
        Ok(())
    }

    fn outputs(&self, t0: f64, t1: f64) -> Result<Vec<f64>> {
        let times = match &self.output_times {
            Some(ts) => ts.clone(),
            None => {
                let k = 400;
                (0..=k).map(|i| t0 + (t1 - t0) * i as f64 / k as f64).collect()
            }
        };
        if times.is_empty() {
            return Err(KfpError::Simulate("output grid is empty".into()));
        }
        let eps = 1e-12 * (t1 - t0).abs();
        if times.windows(2).any(|w| w[1] <= w[0])
            || times[0] < t0 - eps
            || *times.last().unwrap() > t1 + eps
        {
            return Err(KfpError::Simulate(
                "output times must be strictly increasing and lie within the span".into(),
            ));
        }
        Ok(times)
    }
}

/// Bogacki–Shampine 2(3) with PI step control and cubic Hermite dense
/// output. `rhs(t, state, out)` writes the derivative into `out`.
pub fn integrate_rk23<F>(
    mut rhs: F,
    z0: &[f64],
    tspan: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    let (t0, t1) = tspan;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(KfpError::Simulate(format!(
            "time span must be finite with t1 > t0, got ({t0}, {t1})"
        )));
    }
    let span = t1 - t0;
    let hmax = cfg.max_step.unwrap_or(span / 4.0).min(span);
    let outputs = cfg.outputs(t0, t1)?;
    let n = z0.len();

    let mut y = z0.to_vec();
    let mut ynew = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];

    let mut times = Vec::with_capacity(outputs.len());
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(outputs.len());
    let mut next_out = 0usize;
    let eps_t = 1e-12 * span;

    // Emit samples at (or numerically at) the start.
    while next_out < outputs.len() && outputs[next_out] <= t0 + eps_t {
        times.push(outputs[next_out]);
        states.push(y.clone());
        next_out += 1;
    }

    let mut t = t0;
    rhs(t, &y, &mut k1);

    // Starting step from the scaled magnitudes of state and derivative.
    let scale = |yi: f64| cfg.atol + cfg.rtol * yi.abs();
    let d0 = (y.iter().map(|&v| (v / scale(v)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (y
        .iter()
        .zip(&k1)
        .map(|(&v, &f)| (f / scale(v)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let mut h = if d0 > 1e-10 && d1 > 1e-10 { 0.01 * d0 / d1 } else { span / 1000.0 };
    h = h.clamp(1e-10 * span, hmax);

    let mut err_prev: f64 = 1e-4;
    while next_out < outputs.len() {
        if t1 - t <= eps_t {
            // Roundoff left trailing samples at the endpoint.
            while next_out < outputs.len() {
                times.push(outputs[next_out]);
                states.push(y.clone());
                next_out += 1;
            }
            break;
        }
        h = h.min(t1 - t);
        if h < 1e-12 * span {
            return Err(KfpError::StepUnderflow { t });
        }

        for i in 0..n {
            ytmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(t + 0.5 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + 0.75 * h * k2[i];
        }
        rhs(t + 0.75 * h, &ytmp, &mut k3);
        for i in 0..n {
            ynew[i] = y[i] + h * (2.0 * k1[i] + 3.0 * k2[i] + 4.0 * k3[i]) / 9.0;
        }
        rhs(t + h, &ynew, &mut k4);

        let mut e: f64 = 0.0;
        for i in 0..n {
            let err = h
                * (-5.0 / 72.0 * k1[i] + k2[i] / 12.0 + k3[i] / 9.0 - k4[i] / 8.0);
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(ynew[i].abs());
            let r = (err / sc).abs();
            if !(r <= e) {
                // Also catches NaN, which must count as a failed step.
                e = if r.is_nan() { f64::INFINITY } else { r };
            }
        }

        if e <= 1.0 {
            // Dense output by cubic Hermite on [t, t+h].
            let t_new = t + h;
            while next_out < outputs.len() && outputs[next_out] <= t_new + eps_t {
                let s = outputs[next_out];
                let th = ((s - t) / h).clamp(0.0, 1.0);
                // Written as y + correction so a constant step (Δ = 0,
                // k = 0) reproduces the state bitwise; the endpoints return
                // the step states verbatim.
                let u = if th == 0.0 {
                    y.clone()
                } else if th == 1.0 {
                    ynew.clone()
                } else {
                    let mut u = vec![0.0; n];
                    for i in 0..n {
                        let dy = ynew[i] - y[i];
                        u[i] = y[i]
                            + th * dy
                            + th * (th - 1.0)
                                * ((1.0 - 2.0 * th) * dy
                                    + (th - 1.0) * h * k1[i]
                                    + th * h * k4[i]);
                    }
                    u
                };
                times.push(s);
                states.push(u);
                next_out += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k4); // first-same-as-last
            let el = e.max(1e-10);
            let fac = (0.9 * el.powf(-0.7 / 3.0) * err_prev.powf(0.4 / 3.0))
                .clamp(0.2, 5.0);
            h = (h * fac).min(hmax);
            err_prev = el;
        } else {
            let shrink = if e.is_finite() { (0.9 * e.powf(-1.0 / 3.0)).max(0.2) } else { 0.2 };
            h *= shrink;
        }
    }

    let norm_zeta = states
        .iter()
        .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Ok(Trajectory { times, states, norm_zeta, controls: Vec::new(), mass: Vec::new() })
}

/// The deflated closed-loop right-hand side in its literal (dense-matrix)
/// form: `u = −Kζ̂`, `dζ̂/dt = Âζ̂ + Σ uᵢ(N̂ᵢζ̂ + b̂ᵢ)`. This is the reference
/// route used by tests; [`FastRhs`] is the factored production route.
pub struct ClosedLoopRhs<'a> {
    system: &'a DeflatedSystem,
    /// Affine forcing per channel: `(m₀/‖T𝟙‖)·b̂ᵢ`.
    b_eff: Vec<Vec<f64>>,
    gain: Option<&'a DenseMatrix>,
}

/// `u = −Kζ̂` (empty when no gain is installed).
pub fn control_values(gain: Option<&DenseMatrix>, zeta: &[f64]) -> Vec<f64> {
    match gain {
        None => Vec::new(),
        Some(k) => (0..k.rows()).map(|i| -dot(k.row(i), zeta)).collect(),
    }
}

fn scaled_controls(
    controls: &[crate::deflate::DeflatedControl],
    b_scale: f64,
) -> Vec<Vec<f64>> {
    controls
        .iter()
        .map(|c| c.b_hat.iter().map(|&b| b_scale * b).collect())
        .collect()
}

impl<'a> ClosedLoopRhs<'a> {
    pub fn new(
        system: &'a DeflatedSystem,
        b_scale: f64,
        gain: Option<&'a DenseMatrix>,
    ) -> Self {
        let b_eff = scaled_controls(&system.controls, b_scale);
        Self { system, b_eff, gain }
    }

    pub fn eval(&self, _t: f64, zeta: &[f64], out: &mut [f64]) {
        let az = self.system.a_hat.matvec(zeta);
        out.copy_from_slice(&az);
        let u = control_values(self.gain, zeta);
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            let nz = self.system.controls[i].n_hat.matvec(zeta);
            for (k, o) in out.iter_mut().enumerate() {
                *o += ui * (nz[k] + self.b_eff[i][k]);
            }
        }
    }
}

/// Factored right-hand side: lifts `ζ̂` to the full symmetrized state,
/// applies the Kronecker-factored operators, and restricts back. Identical
/// mathematics to [`ClosedLoopRhs`] at a small fraction of the cost.
pub struct FastRhs<'a> {
    bundle: &'a OperatorBundle,
    system: &'a DeflatedSystem,
    b_eff: Vec<Vec<f64>>,
    gain: Option<&'a DenseMatrix>,
    w_full: Vec<f64>,
}

impl<'a> FastRhs<'a> {
    pub fn new(
        bundle: &'a OperatorBundle,
        system: &'a DeflatedSystem,
        b_scale: f64,
        gain: Option<&'a DenseMatrix>,
    ) -> Self {
        let b_eff = scaled_controls(&system.controls, b_scale);
        let n = bundle.n();
        Self { bundle, system, b_eff, gain, w_full: vec![0.0; n] }
    }

    pub fn eval(&mut self, _t: f64, zeta: &[f64], out: &mut [f64]) {
        let y = self.system.lift(zeta);
        self.bundle.apply.apply_sym(&y, &mut self.w_full);
        let az = self.system.restrict(&self.w_full);
        out.copy_from_slice(&az);
        let u = control_values(self.gain, zeta);
        for (i, &ui) in u.iter().enumerate() {
            if ui == 0.0 {
                continue;
            }
            self.bundle.apply.apply_control(i, &y, &mut self.w_full);
            let nz = self.system.restrict(&self.w_full);
            for (k, o) in out.iter_mut().enumerate() {
                *o += ui * (nz[k] + self.b_eff[i][k]);
            }
        }
    }
}

/// Integrate the (un)controlled system over `[0, horizon]` and attach the
/// observables: feedback values and reconstructed mass per sample.
pub fn run_simulation(
    bundle: &OperatorBundle,
    deflated: &DeflatedSystem,
    gain: Option<&DenseMatrix>,
    initial: &InitialState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if let Some(k) = gain {
        if k.cols() != deflated.dim() || k.rows() != deflated.controls.len() {
            return Err(KfpError::Simulate(format!(
                "gain is {}×{} but the system has {} controls in dimension {}",
                k.rows(),
                k.cols(),
                deflated.controls.len(),
                deflated.dim()
            )));
        }
    }
    let t_norm = dot(&bundle.t_diag, &bundle.t_diag).sqrt();
    let b_scale = initial.mass_mode / t_norm;
    let mut rhs = FastRhs::new(bundle, deflated, b_scale, gain);
    let mut traj =
        integrate_rk23(|t, z, out| rhs.eval(t, z, out), &initial.zeta_hat, (0.0, horizon), cfg)?;

    traj.controls = traj.states.iter().map(|z| control_values(gain, z)).collect();
    traj.mass = traj
        .states
        .iter()
        .map(|z| {
            let mut y_sym = deflated.lift(z);
            for (yk, s) in y_sym.iter_mut().zip(&bundle.s_hat) {
                *yk += initial.mass_mode * s;
            }
            dot(&bundle.t_diag, &y_sym)
        })
        .collect();
    Ok(traj)
}

/// Least-squares decay-rate fit of `log‖ζ̂(t)‖` over a window.
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the linear fit.
    pub residual: f64,
    /// Set when the fit stopped early because the norm underflowed.
    pub truncated: bool,
}

/// Norms at or below this are machine zero for fitting purposes.
const NORM_FLOOR: f64 = 1e-280;

/// Fit `log‖ζ̂‖ ≈ slope·t + intercept` over `window` (default: the second
/// half of the span). If the norm underflows inside the window the fit uses
/// the pre-underflow segment and flags `truncated`.
pub fn decay_fit(traj: &Trajectory, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let (first, last) = match (traj.times.first(), traj.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(KfpError::Simulate("trajectory has no samples".into())),
    };
    let (wa, wb) = window.unwrap_or((first + 0.5 * (last - first), last));
    if !(wa < wb) || wa < first - 1e-12 || wb > last + 1e-12 {
        return Err(KfpError::Simulate(format!(
            "fit window ({wa}, {wb}) must lie inside the sampled span ({first}, {last})"
        )));
    }
    let mut ts = Vec::new();
    let mut logs = Vec::new();
    let mut truncated = false;
    for (k, &t) in traj.times.iter().enumerate() {
        if t < wa - 1e-12 || t > wb + 1e-12 {
            continue;
        }
        let nv = traj.norm_zeta[k];
        if !(nv > NORM_FLOOR) {
            truncated = true;
            break;
        }
        ts.push(t);
        logs.push(nv.ln());
    }
    if ts.len() < 2 {
        return Err(KfpError::Simulate(
            "decay fit needs at least two samples with norms above machine zero in \
             the window"
                .into(),
        ));
    }
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let lm = logs.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stl = 0.0;
    for (t, l) in ts.iter().zip(&logs) {
        stt += (t - tm) * (t - tm);
        stl += (t - tm) * (l - lm);
    }
    if stt == 0.0 {
        return Err(KfpError::Simulate("fit window collapses to a single time".into()));
    }
    let slope = stl / stt;
    let intercept = lm - slope * tm;
    let residual = (ts
        .iter()
        .zip(&logs)
        .map(|(t, l)| {
            let r = l - (slope * t + intercept);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit { slope, intercept, residual, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deflate::deflate;
    use crate::grid::PhaseGrid;
    use crate::model::{default_logistic_shapes, ConfinementPotential};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Quadratic-potential workhorse: small enough for fast tests, fine
    /// enough that the invariant direction is resolved.
    fn small_system() -> (OperatorBundle, DeflatedSystem) {
        let grid = PhaseGrid::new(-6.0, 6.0, 21, -6.0, 6.0, 21).unwrap();
        let pot = ConfinementPotential::polynomial(vec![0.0, 0.0, 0.5]).unwrap();
        let bundle =
            OperatorBundle::assemble(&pot, &default_logistic_shapes(), &grid, 1.0, 1.0)
                .unwrap();
        let deflated = deflate(&bundle.a_sym, &bundle.controls, &bundle.s_hat).unwrap();
        (bundle, deflated)
    }

    #[test]
    fn perturbed_state_is_normalized_and_equilibrium_projects_to_zero() {
        let (bundle, deflated) = small_system();
        let ones = vec![1.0; bundle.n()];

        let eq = make_initial(&InitialKind::Perturbed, &bundle, &deflated, 0.0).unwrap();
        let z0: f64 = eq.zeta_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(z0 <= 1e-12, "equilibrium leaked into deflated coordinates: {z0:.3e}");
        let spread = eq.y.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - eq.y.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread <= 1e-12, "amplitude-0 state is not uniform: {spread:.3e}");

        let p = make_initial(&InitialKind::Perturbed, &bundle, &deflated, 0.5).unwrap();
        let mass = weighted_inner(&p.y, &ones, &bundle.t_diag);
        assert!((mass - 1.0).abs() <= 1e-14, "mass {mass}");
        assert!(p.zeta_hat.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-3);
    }

    #[test]
    fn rotation_free_mixture_is_the_equilibrium() {
        let (bundle, deflated) = small_system();
        let r0 =
            make_initial(&InitialKind::Rotated { theta: 0.0 }, &bundle, &deflated, 0.0)
                .unwrap();
        let z0: f64 = r0.zeta_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(z0 <= 1e-12, "θ = 0 should reproduce equilibrium, got ‖ζ̂₀‖ = {z0:.3e}");

        // An isotropic weight (G = x²/2, β = 1) is invariant under the
        // quarter rotation, so θ only produces a nontrivial state when the
        // x- and v-marginals differ: use a stiffer well G = x².
        let grid = PhaseGrid::new(-6.0, 6.0, 21, -6.0, 6.0, 21).unwrap();
        let pot = ConfinementPotential::polynomial(vec![0.0, 0.0, 1.0]).unwrap();
        let aniso =
            OperatorBundle::assemble(&pot, &default_logistic_shapes(), &grid, 1.0, 1.0)
                .unwrap();
        let adeflated = deflate(&aniso.a_sym, &aniso.controls, &aniso.s_hat).unwrap();
        let r = make_initial(&InitialKind::Rotated { theta: 0.5 }, &aniso, &adeflated, 0.0)
            .unwrap();
        let ones = vec![1.0; aniso.n()];
        let mass = weighted_inner(&r.y, &ones, &aniso.t_diag);
        assert!((mass - 1.0).abs() <= 1e-12, "mass {mass}");
        assert!(r.y.iter().all(|&v| v >= 0.0), "bilinear mixing must stay nonnegative");
        assert!(r.zeta_hat.iter().map(|v| v * v).sum::<f64>().sqrt() > 1e-3);
        assert!(make_initial(
            &InitialKind::Rotated { theta: 1.5 },
            &aniso,
            &adeflated,
            0.0
        )
        .is_err());
    }

    #[test]
    fn scalar_decay_hits_the_exponential() {
        let cfg = IntegratorConfig::default();
        let traj =
            integrate_rk23(|_, z, out| out[0] = -z[0], &[1.0], (0.0, 1.0), &cfg).unwrap();
        assert_eq!(*traj.times.last().unwrap(), 1.0);
        let got = traj.states.last().unwrap()[0];
        let want = (-1.0f64).exp();
        assert!(
            (got - want).abs() / want <= 1e-3,
            "e⁻¹ missed: got {got}, want {want}"
        );
        // First sample is the initial state verbatim.
        assert_eq!(traj.states[0][0], 1.0);
        assert_eq!(traj.times[0], 0.0);
    }

    #[test]
    fn zero_rhs_is_bitwise_constant() {
        let z0 = [0.3, -1.7, 2.25e-7];
        let cfg = IntegratorConfig::default();
        let traj = integrate_rk23(|_, _, out| out.fill(0.0), &z0, (0.0, 5.0), &cfg).unwrap();
        for s in &traj.states {
            assert_eq!(s.as_slice(), &z0);
        }
    }

    #[test]
    fn harmonic_oscillator_returns_after_one_period() {
        let cfg = IntegratorConfig { rtol: 1e-4, atol: 1e-8, ..Default::default() };
        let period = 2.0 * std::f64::consts::PI;
        let traj = integrate_rk23(
            |_, z, out| {
                out[0] = z[1];
                out[1] = -z[0];
            },
            &[1.0, 0.0],
            (0.0, period),
            &cfg,
        )
        .unwrap();
        let end = traj.states.last().unwrap();
        let err = ((end[0] - 1.0).powi(2) + end[1].powi(2)).sqrt();
        assert!(err <= 5e-3, "period return error {err:.3e}");
    }

    #[test]
    fn finite_time_blowup_reports_step_underflow() {
        let cfg = IntegratorConfig::default();
        // z′ = z² from z(0) = 1 blows up at t = 1; the controller must stall
        // and say where.
        let res = integrate_rk23(|_, z, out| out[0] = z[0] * z[0], &[1.0], (0.0, 2.0), &cfg);
        match res {
            Err(KfpError::StepUnderflow { t }) => {
                assert!((t - 1.0).abs() < 0.05, "stall reported at t = {t}")
            }
            other => panic!("expected step underflow, got {other:?}", other = other.map(|_| ())),
        }
    }

    #[test]
    fn halving_tolerances_moves_the_terminal_state_less_than_the_error_estimate() {
        // Horizon chosen so the terminal state sits well above atol (the
        // regime where the per-state error estimate is meaningful; measured
        // margin ≈ 4× there). In the deep-decay crossover where accumulated
        // early error dominates both tolerance terms, no per-state estimate
        // can bound the drift.
        let coarse = IntegratorConfig::default();
        let fine = IntegratorConfig { rtol: 5e-4, atol: 5e-7, ..Default::default() };
        let run = |cfg: &IntegratorConfig| {
            integrate_rk23(|_, z, out| out[0] = -z[0], &[1.0], (0.0, 2.0), cfg)
                .unwrap()
                .states
                .last()
                .unwrap()[0]
        };
        let nc = run(&coarse);
        let nf = run(&fine);
        let budget = coarse.rtol * nc.abs() + coarse.atol;
        assert!(
            (nc - nf).abs() < budget,
            "terminal drift {:.3e} exceeds the coarse error estimate {budget:.3e}",
            (nc - nf).abs()
        );
    }

    #[test]
    fn synthetic_exponential_is_fit_exactly() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let norm_zeta: Vec<f64> = times.iter().map(|&t| (-0.3 * t).exp()).collect();
        let n = times.len();
        let traj = Trajectory {
            times,
            states: vec![Vec::new(); n],
            norm_zeta,
            controls: Vec::new(),
            mass: Vec::new(),
        };
        let fit = decay_fit(&traj, None).unwrap();
        assert!((fit.slope + 0.3).abs() <= 1e-6, "slope {})", fit.slope);
        assert!(!fit.truncated);
        assert!(fit.residual <= 1e-9);

        // Underflow mid-window truncates the fit and says so.
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let steep: Vec<f64> = times.iter().map(|&t| (-80.0 * t).exp()).collect();
        let traj = Trajectory {
            times,
            states: vec![Vec::new(); n],
            norm_zeta: steep,
            controls: Vec::new(),
            mass: Vec::new(),
        };
        let fit = decay_fit(&traj, Some((0.0, 10.0))).unwrap();
        assert!(fit.truncated);
        assert!((fit.slope + 80.0).abs() <= 1e-6);
    }

    #[test]
    fn fast_and_dense_right_hand_sides_agree() {
        let (bundle, deflated) = small_system();
        let dim = deflated.dim();
        let m = deflated.controls.len();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gain = DenseMatrix::from_fn(m, dim, |_, _| rng.gen_range(-0.5..0.5));
        let zeta: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let dense = ClosedLoopRhs::new(&deflated, 0.97, Some(&gain));
        let mut fast = FastRhs::new(&bundle, &deflated, 0.97, Some(&gain));
        let mut out_d = vec![0.0; dim];
        let mut out_f = vec![0.0; dim];
        dense.eval(0.0, &zeta, &mut out_d);
        fast.eval(0.0, &zeta, &mut out_f);
        let scale = out_d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = out_d
            .iter()
            .zip(&out_f)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-10 * scale.max(1.0), "rhs routes disagree: {diff:.3e}");
    }

    #[test]
    fn linearization_at_equilibrium_matches_the_closed_loop_matrix() {
        let (_bundle, deflated) = small_system();
        let dim = deflated.dim();
        let m = deflated.controls.len();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let gain = DenseMatrix::from_fn(m, dim, |_, _| rng.gen_range(-0.2..0.2));
        let b_scale = 1.0;
        let rhs = ClosedLoopRhs::new(&deflated, b_scale, Some(&gain));

        // Assembled linearization Â − Σᵢ b̂ᵢKᵢ.
        let mut lin = deflated.a_hat.clone();
        for (i, c) in deflated.controls.iter().enumerate() {
            for r in 0..dim {
                let br = b_scale * c.b_hat[r];
                for cix in 0..dim {
                    lin[(r, cix)] -= br * gain[(i, cix)];
                }
            }
        }

        // Central differences are exact for this quadratic rhs up to
        // roundoff, so a tight tolerance is honest.
        let eps = 1e-4;
        let mut fd = DenseMatrix::zeros(dim, dim);
        let mut zp = vec![0.0; dim];
        let mut zm = vec![0.0; dim];
        let mut op = vec![0.0; dim];
        let mut om = vec![0.0; dim];
        for j in 0..dim {
            zp[j] = eps;
            zm[j] = -eps;
            rhs.eval(0.0, &zp, &mut op);
            rhs.eval(0.0, &zm, &mut om);
            for r in 0..dim {
                fd[(r, j)] = (op[r] - om[r]) / (2.0 * eps);
            }
            zp[j] = 0.0;
            zm[j] = 0.0;
        }
        let rel = fd.sub(&lin).norm_fro() / lin.norm_fro();
        assert!(rel <= 1e-6, "finite-difference Jacobian off by {rel:.3e}");
    }

    #[test]
    fn equilibrium_is_a_fixed_point_to_machine_precision() {
        let (bundle, deflated) = small_system();
        let dim = deflated.dim();
        let m = deflated.controls.len();
        let gain = DenseMatrix::from_fn(m, dim, |i, j| 0.1 * ((i + j) as f64 * 0.01).sin());
        let initial = InitialState {
            label: "equilibrium".into(),
            y: vec![1.0; bundle.n()],
            zeta_hat: vec![0.0; dim],
            amplitude: 0.0,
            mass_mode: 1.0,
        };
        let traj = run_simulation(
            &bundle,
            &deflated,
            Some(&gain),
            &initial,
            10.0,
            &IntegratorConfig::default(),
        )
        .unwrap();
        for s in &traj.states {
            assert!(s.iter().all(|&v| v == 0.0), "equilibrium drifted");
        }
        for u in &traj.controls {
            assert!(u.iter().all(|&v| v == 0.0));
        }
        let m0 = traj.mass[0];
        for &mv in &traj.mass {
            assert_eq!(mv, m0);
        }
    }

    #[test]
    fn dominant_mode_sets_the_fitted_slope() {
        // Uncoupled linear test system with known spectrum: the slow mode at
        // −0.3 owns the late-time slope.
        let a = DenseMatrix::from_rows(&[
            &[-0.3, 0.0, 0.0],
            &[0.0, -1.0, 0.0],
            &[0.0, 0.0, -2.0],
        ]);
        let cfg = IntegratorConfig { rtol: 1e-6, atol: 1e-10, ..Default::default() };
        let traj = integrate_rk23(
            |_, z, out| {
                let az = a.matvec(z);
                out.copy_from_slice(&az);
            },
            &[1.0, 1.0, 1.0],
            (0.0, 20.0),
            &cfg,
        )
        .unwrap();
        let fit = decay_fit(&traj, None).unwrap();
        assert!(
            (fit.slope + 0.3).abs() <= 2e-3,
            "slope {:.5} should track the dominant eigenvalue −0.3",
            fit.slope
        );
    }

    #[test]
    fn mass_is_conserved_along_controlled_runs() {
        let (bundle, deflated) = small_system();
        let initial =
            make_initial(&InitialKind::Perturbed, &bundle, &deflated, 0.5).unwrap();
        let dim = deflated.dim();
        let m = deflated.controls.len();
        // A small arbitrary gain keeps the loop stable while exercising the
        // bilinear and affine control terms.
        let gain = DenseMatrix::from_fn(m, dim, |i, j| 1e-3 * ((i * dim + j) as f64).cos());
        let cfg = IntegratorConfig::default();
        for g in [None, Some(&gain)] {
            let traj = run_simulation(&bundle, &deflated, g, &initial, 5.0, &cfg).unwrap();
            let drift = traj
                .mass
                .iter()
                .map(|&mv| (mv - 1.0).abs())
                .fold(0.0f64, f64::max);
            assert!(drift <= 1e-6, "mass drifted by {drift:.3e}");
            assert_eq!(traj.times[0], 0.0);
            assert_eq!(traj.norm_zeta.len(), traj.times.len());
        }
    }
}
