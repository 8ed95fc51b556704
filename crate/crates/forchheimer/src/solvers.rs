//! Outer nonlinear iteration and time stepping.
//!
//! The nonlinear discrete systems are solved by Picard (frozen-coefficient)
//! iteration: the face weight `F(|m|)` is evaluated at the previous iterate
//! and one linear saddle solve produces the next. Monotonicity of the law
//! makes the undamped iteration robust; an optional damping factor is exposed
//! for strongly nonlinear runs.
//!
//! The stationary problem runs the iteration over a decreasing schedule of
//! regularization parameters with warm starts (`eps_rho = eps` at each
//! level). Implicit-Euler steps reuse the smallest scheduled eps on the face
//! block only; the `phi/dt` mass term already provides the coercivity the
//! `eps (rho, q)` term supplies in the stationary case.
//!
//! Each transient step evaluates the discrete energy identity and the
//! a-priori norm monitors, exposed per step as [`StepDiagnostics`].

use crate::assembly::{assemble_system, solve_saddle, AssemblyError, LinearSolveConfig};
use crate::constitutive::{ConstitutiveError, ForchheimerLaw, RootOpts};
use crate::grid::{
    divergence, face_flux_magnitude, BoundaryTrace, CartesianGrid, CellField, Face, FaceField,
};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("Picard iteration did not converge: residual {residual:e} after {iters} iterations")]
    PicardNonConvergence {
        iters: usize,
        residual: f64,
        /// Residual after each iteration, for post-mortems.
        history: Vec<f64>,
    },
    #[error("stationary continuation failed at eps = {eps:e}: {source}")]
    ContinuationFailed {
        eps: f64,
        #[source]
        source: Box<SolverError>,
    },
    #[error("transient step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<SolverError>,
    },
    #[error("time step dt = {dt} violates the Gronwall window dt < phi_min/2 = {limit}")]
    GronwallWindow { dt: f64, limit: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
}

/// Damped Picard + continuation settings.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Strictly decreasing regularization schedule.
    pub eps_schedule: Vec<f64>,
    /// Nonlinear tolerance on the re-assembled block residual and the
    /// iterate change (both relative).
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Damping factor in (0, 1]; 1 = undamped.
    pub damping: f64,
    pub lin: LinearSolveConfig,
    pub root: RootOpts,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps_schedule: vec![1e-2, 1e-4, 1e-6, 1e-8],
            picard_tol: 1e-10,
            picard_max_iter: 200,
            damping: 1.0,
            lin: LinearSolveConfig::default(),
            root: RootOpts::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.eps_schedule.is_empty() || self.eps_schedule.iter().any(|e| !(*e > 0.0)) {
            return Err(SolverError::InvalidProblem(
                "eps schedule must be non-empty and positive".into(),
            ));
        }
        if self.eps_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(SolverError::InvalidProblem(
                "eps schedule must be strictly decreasing".into(),
            ));
        }
        if !(self.picard_tol > 0.0) || !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverError::InvalidProblem(
                "picard_tol must be positive and damping in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn smallest_eps(&self) -> f64 {
        *self.eps_schedule.last().expect("non-empty schedule")
    }
}

/// Stationary Dirichlet problem data.
#[derive(Debug, Clone)]
pub struct StationaryProblem {
    pub law: ForchheimerLaw,
    pub grid: CartesianGrid,
    pub f: CellField,
    pub rho_b: BoundaryTrace,
}

/// Transient Dirichlet problem on `t in [0, T]` with `J` implicit-Euler steps.
pub struct TransientProblem {
    pub law: ForchheimerLaw,
    pub grid: CartesianGrid,
    pub phi: CellField,
    pub f: Box<dyn Fn(f64) -> CellField>,
    pub rho_b: Box<dyn Fn(f64) -> BoundaryTrace>,
    pub rho0: CellField,
    pub t_final: f64,
    pub steps: usize,
    /// Declared Lipschitz-in-time constant of coefficients and source
    /// (metadata; spot-checked by the verification harness, not enforced).
    pub lipschitz: f64,
}

/// Record of one Picard solve.
#[derive(Debug, Clone, Default)]
pub struct PicardReport {
    /// Number of linear solves performed.
    pub iters: usize,
    /// Relative block residual of the returned pair under its own weights.
    pub residual: f64,
    pub flux_change: f64,
    pub lin_residual: f64,
    pub history: Vec<f64>,
}

/// Per-step monitors: the discrete energy identity and the quantities the
/// a-priori estimates bound.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub picard_iters: usize,
    pub nonlinear_residual: f64,
    /// Residual of the discrete energy identity
    /// `2 dt a_eps(m,m) + (phi, rho^2 - rho_prev^2 + (rho-rho_prev)^2)
    ///  = 2 dt (f, rho) + 2 dt <rho_b, m.nu>`;
    /// vanishes at the exact discrete solution.
    pub energy_identity_residual: f64,
    pub norm_rho_l2: f64,
    pub norm_m_l2: f64,
    pub norm_m_ls: f64,
    /// Running sum of `dt ||(rho^j - rho^{j-1}) / dt||^2`.
    pub cum_dt_drho2: f64,
    /// `||rho^j||^2 / (e^{2 l T} (||rho0||^2 + T max_i ||f^i||^2))`,
    /// `l = 1/phi_min`.
    pub gronwall_ratio: f64,
    /// `||rho|| + ||F(|m|) m||_{L^{s*}}` — graph norm of the primal density.
    pub r_norm_rho: f64,
    /// `||f|| + ||m||_{L^s}` — dual-norm bound for the time difference
    /// quotient.
    pub dual_time_diff: f64,
    /// `||f|| + phi_max ||(rho - rho_prev)/dt||` — dual-norm bound for
    /// `div m`.
    pub dual_div_m: f64,
}

/// Per-eps record of the stationary continuation.
#[derive(Debug, Clone)]
pub struct EpsLevelReport {
    pub eps: f64,
    pub picard: PicardReport,
    /// `||rho_eps - rho_{previous eps}||` (first level: `||rho_eps||`).
    pub diff_prev_rho_l2: f64,
    pub norm_m_l2: f64,
    pub norm_m_ls: f64,
    pub norm_rho_l2: f64,
    /// `||m||_{L^s}^s` against the data envelope [`k1_envelope`].
    pub k1_ratio: f64,
}

/// Stationary continuation trail.
#[derive(Debug, Clone)]
pub struct StationaryReport {
    pub levels: Vec<EpsLevelReport>,
    pub k1_envelope: f64,
}

/// One Picard solve of the regularized system at fixed data.
///
/// Returns once the block residual of the re-assembled system (weights frozen
/// at the returned iterate) is below `picard_tol` and the linearization has
/// settled: either the flux change of the last update or the relative change
/// of the Picard weights is below `picard_tol`. The weight-change disjunct
/// lets linear laws, whose weights never move, finish after a single solve.
#[allow(clippy::too_many_arguments)]
pub fn picard_solve(
    law: &ForchheimerLaw,
    grid: &CartesianGrid,
    t: f64,
    eps: f64,
    eps_rho: f64,
    c_mass: f64,
    phi: &CellField,
    f_bar: &CellField,
    rho_b: &BoundaryTrace,
    m_init: Option<&FaceField>,
    config: &SolverConfig,
) -> Result<(FaceField, CellField, PicardReport), SolverError> {
    let mut m = match m_init {
        Some(m0) => {
            if !m0.matches(grid) {
                return Err(SolverError::InvalidProblem("m_init shape mismatch".into()));
            }
            m0.clone()
        }
        None => FaceField::zeros(grid),
    };
    let mut rho: Option<CellField> = None;
    let mut prev_weights: Option<Vec<f64>> = None;
    let mut report = PicardReport::default();
    let mut flux_change = f64::INFINITY;

    for solves in 0..=config.picard_max_iter {
        let system =
            assemble_system(grid, law, &m, t, eps, eps_rho, c_mass, phi, f_bar, rho_b)?;
        let weight_change = match &prev_weights {
            Some(prev) => {
                let num: f64 = system
                    .face_weights
                    .iter()
                    .zip(prev)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let den: f64 = system.face_weights.iter().map(|w| w * w).sum();
                (num / den).sqrt()
            }
            None => f64::INFINITY,
        };
        if let Some(rho_cur) = &rho {
            let res = system.relative_residual(&m.to_vec(), &rho_cur.values);
            report.residual = res;
            report.history.push(res);
            log::debug!(
                "picard solve {solves}: residual {res:e}, flux change {flux_change:e}, \
                 weight change {weight_change:e}"
            );
            if res <= config.picard_tol
                && (flux_change <= config.picard_tol || weight_change <= config.picard_tol)
            {
                report.iters = solves;
                report.flux_change = flux_change;
                return Ok((m, rho.expect("set above"), report));
            }
        }
        if solves == config.picard_max_iter {
            break;
        }
        let (m_new, rho_new, lin_res) = solve_saddle(&system, &config.lin)?;
        report.lin_residual = lin_res;
        let mut m_next = m_new;
        if config.damping < 1.0 {
            let theta = config.damping;
            for (next, old) in m_next
                .x_normals
                .iter_mut()
                .chain(m_next.y_normals.iter_mut())
                .zip(m.x_normals.iter().chain(m.y_normals.iter()))
            {
                *next = theta * *next + (1.0 - theta) * old;
            }
        }
        let mut diff = m_next.clone();
        diff.axpy(-1.0, &m);
        flux_change = diff.norm_l2(grid) / (1.0 + m_next.norm_l2(grid));
        m = m_next;
        rho = Some(rho_new);
        prev_weights = Some(system.face_weights);
    }

    Err(SolverError::PicardNonConvergence {
        iters: config.picard_max_iter,
        residual: report.residual,
        history: report.history,
    })
}

/// Data envelope `K1 = (nb + nf)(nb + nf^2) + nb^s + nf^s + 1` with `nb` the
/// boundary-L2 proxy for the trace norm and `nf = ||f||`. The flux norm
/// `||m||_{L^s}^s` stays bounded by a constant multiple of it, uniformly in
/// eps.
pub fn k1_envelope(
    grid: &CartesianGrid,
    law: &ForchheimerLaw,
    f: &CellField,
    rho_b: &BoundaryTrace,
) -> f64 {
    let nb = rho_b.norm_boundary_l2(grid);
    let nf = f.norm_l2(grid);
    let s = law.s();
    (nb + nf) * (nb + nf * nf) + nb.powf(s) + nf.powf(s) + 1.0
}

/// Stationary solve by eps-continuation with warm starts.
pub fn solve_stationary(
    problem: &StationaryProblem,
    config: &SolverConfig,
) -> Result<(FaceField, CellField, StationaryReport), SolverError> {
    config.validate()?;
    if !problem.f.is_finite() || !problem.rho_b.is_finite() {
        return Err(SolverError::InvalidProblem("non-finite data".into()));
    }
    let grid = &problem.grid;
    let law = &problem.law;
    let s = law.s();
    let k1 = k1_envelope(grid, law, &problem.f, &problem.rho_b);
    let ones = CellField::constant(grid, 1.0);
    let mut levels = Vec::with_capacity(config.eps_schedule.len());
    let mut m = FaceField::zeros(grid);
    let mut rho = CellField::zeros(grid);
    let mut rho_prev: Option<CellField> = None;
    for &eps in &config.eps_schedule {
        let (m_eps, rho_eps, picard) = picard_solve(
            law,
            grid,
            0.0,
            eps,
            eps,
            0.0,
            &ones,
            &problem.f,
            &problem.rho_b,
            Some(&m),
            config,
        )
        .map_err(|e| SolverError::ContinuationFailed { eps, source: Box::new(e) })?;
        let diff = match &rho_prev {
            Some(prev) => {
                let mut d = rho_eps.clone();
                d.axpy(-1.0, prev);
                d.norm_l2(grid)
            }
            None => rho_eps.norm_l2(grid),
        };
        let norm_m_ls = m_eps.norm_ls(grid, s);
        log::info!("eps {eps:e}: {} picard solves, |rho - prev| = {diff:e}", picard.iters);
        levels.push(EpsLevelReport {
            eps,
            picard,
            diff_prev_rho_l2: diff,
            norm_m_l2: m_eps.norm_l2(grid),
            norm_m_ls,
            norm_rho_l2: rho_eps.norm_l2(grid),
            k1_ratio: norm_m_ls.powf(s) / k1,
        });
        rho_prev = Some(rho_eps.clone());
        m = m_eps;
        rho = rho_eps;
    }
    Ok((m, rho, StationaryReport { levels, k1_envelope: k1 }))
}

/// `a_eps(m, m) = sum_f F(|m|_f) m_f^2 vol_f + eps ||div_h m||^2`, the energy
/// of the regularized operator at the solved step.
fn energy_a_term(
    grid: &CartesianGrid,
    law: &ForchheimerLaw,
    m: &FaceField,
    t: f64,
    eps: f64,
) -> Result<f64, ConstitutiveError> {
    let mut acc = 0.0;
    for face in grid.faces() {
        let mag = face_flux_magnitude(grid, m, face);
        let f = law.at(grid.face_center(face), t).eval_f(mag)?;
        let normal = m.normal(grid, face);
        acc += f * normal * normal * grid.face_volume(face);
    }
    if eps > 0.0 {
        let div = divergence(grid, m);
        acc += eps * div.norm_l2(grid).powi(2);
    }
    Ok(acc)
}

/// Boundary work `<rho_b, m . nu>` (face-area weighted). Completes the energy
/// identity for inhomogeneous traces; vanishes for homogeneous ones.
fn boundary_work(grid: &CartesianGrid, rho_b: &BoundaryTrace, m: &FaceField) -> f64 {
    let mut acc = 0.0;
    for face in grid.faces() {
        if let (Some(val), Some(sign)) =
            (rho_b.at(grid, face), BoundaryTrace::outward_sign(grid, face))
        {
            acc += val * sign * grid.face_area(face) * m.normal(grid, face);
        }
    }
    acc
}

/// One implicit-Euler step: solve the semi-discrete system with
/// `c_mass = 1/dt`, `eps_rho = 0` and the smallest scheduled `eps`, then
/// evaluate the step diagnostics at the converged pair.
///
/// `gronwall_ratio` and the accumulation of `cum_dt_drho2` are trajectory
/// quantities filled in by [`run_transient`]; a standalone step reports the
/// single-step `dt ||(rho - rho_prev)/dt||^2` and a zero ratio.
#[allow(clippy::too_many_arguments)]
pub fn step_transient(
    law: &ForchheimerLaw,
    grid: &CartesianGrid,
    phi: &CellField,
    rho_prev: &CellField,
    t_j: f64,
    dt: f64,
    f_j: &CellField,
    rho_b_j: &BoundaryTrace,
    m_init: Option<&FaceField>,
    config: &SolverConfig,
) -> Result<(FaceField, CellField, StepDiagnostics), SolverError> {
    if !(dt > 0.0) {
        return Err(SolverError::InvalidProblem(format!("dt = {dt} must be positive")));
    }
    if !rho_prev.is_finite() {
        return Err(SolverError::InvalidProblem("rho_prev not finite".into()));
    }
    let eps = config.smallest_eps();
    // f_bar = f^j + (phi/dt) rho^{j-1}
    let mut f_bar = f_j.clone();
    for (fb, (p, r)) in f_bar
        .values
        .iter_mut()
        .zip(phi.values.iter().zip(&rho_prev.values))
    {
        *fb += p * r / dt;
    }
    let (m, rho, picard) = picard_solve(
        law, grid, t_j, eps, 0.0, 1.0 / dt, phi, &f_bar, rho_b_j, m_init, config,
    )?;

    let a_term = energy_a_term(grid, law, &m, t_j, eps)?;
    let v = grid.cell_volume();
    let mut mass_term = 0.0;
    let mut f_rho = 0.0;
    let mut drho2 = 0.0;
    for c in 0..grid.n_cells() {
        let r = rho.values[c];
        let rp = rho_prev.values[c];
        let d = r - rp;
        mass_term += phi.values[c] * (r * r - rp * rp + d * d) * v;
        f_rho += f_j.values[c] * r * v;
        drho2 += d * d * v;
    }
    let work = boundary_work(grid, rho_b_j, &m);
    let energy_residual =
        (2.0 * dt * a_term + mass_term - 2.0 * dt * f_rho - 2.0 * dt * work).abs();

    let s = law.s();
    let s_star = law.s_star();
    // ||F(|m|) m||_{L^{s*}} from face magnitudes
    let mut fstar = 0.0;
    for face in grid.faces() {
        let mag = face_flux_magnitude(grid, &m, face);
        let f = law.at(grid.face_center(face), t_j).eval_f(mag)?;
        fstar += (f * mag).powf(s_star) * grid.face_volume(face);
    }
    let grad_norm = (0.5 * fstar).powf(1.0 / s_star);

    let norm_rho_l2 = rho.norm_l2(grid);
    let norm_f = f_j.norm_l2(grid);
    let phi_max = phi.values.iter().cloned().fold(0.0_f64, f64::max);
    let diag = StepDiagnostics {
        step: 0,
        time: t_j,
        picard_iters: picard.iters,
        nonlinear_residual: picard.residual,
        energy_identity_residual: energy_residual,
        norm_rho_l2,
        norm_m_l2: m.norm_l2(grid),
        norm_m_ls: m.norm_ls(grid, s),
        cum_dt_drho2: drho2 / dt,
        gronwall_ratio: 0.0,
        r_norm_rho: norm_rho_l2 + grad_norm,
        dual_time_diff: norm_f + m.norm_ls(grid, s),
        dual_div_m: norm_f + phi_max * (drho2.sqrt() / dt),
    };
    Ok((m, rho, diag))
}

/// Full implicit-Euler trajectory with running a-priori monitors.
pub fn run_transient(
    problem: &TransientProblem,
    config: &SolverConfig,
) -> Result<(Vec<(FaceField, CellField)>, Vec<StepDiagnostics>), SolverError> {
    config.validate()?;
    let grid = &problem.grid;
    let phi_min = problem.phi.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let phi_max = problem.phi.values.iter().cloned().fold(0.0_f64, f64::max);
    if !(phi_min > 0.0) || !phi_max.is_finite() {
        return Err(SolverError::InvalidProblem(format!(
            "porosity must satisfy 0 < phi_min <= phi_max < inf, got [{phi_min}, {phi_max}]"
        )));
    }
    if problem.steps == 0 || !(problem.t_final > 0.0) {
        return Err(SolverError::InvalidProblem("need steps >= 1 and T > 0".into()));
    }
    let dt = problem.t_final / problem.steps as f64;
    // Gronwall validity window: 1 - dt/phi_min > 1/2
    if !(1.0 - dt / phi_min > 0.5) {
        return Err(SolverError::GronwallWindow { dt, limit: 0.5 * phi_min });
    }
    if !problem.rho0.matches(grid) || !problem.rho0.is_finite() {
        return Err(SolverError::InvalidProblem("bad initial density".into()));
    }

    let ell = 1.0 / phi_min;
    let rho0_sq = problem.rho0.norm_l2(grid).powi(2);
    let mut max_f_sq = 0.0_f64;
    let mut cum = 0.0;
    let mut rho_prev = problem.rho0.clone();
    let mut m_prev: Option<FaceField> = None;
    let mut trajectory = Vec::with_capacity(problem.steps);
    let mut diagnostics = Vec::with_capacity(problem.steps);

    for j in 1..=problem.steps {
        let t_j = dt * j as f64;
        let f_j = (problem.f)(t_j);
        let rho_b_j = (problem.rho_b)(t_j);
        let (m, rho, mut diag) = step_transient(
            &problem.law,
            grid,
            &problem.phi,
            &rho_prev,
            t_j,
            dt,
            &f_j,
            &rho_b_j,
            m_prev.as_ref(),
            config,
        )
        .map_err(|e| SolverError::StepFailed { step: j, source: Box::new(e) })?;
        cum += diag.cum_dt_drho2;
        max_f_sq = max_f_sq.max(f_j.norm_l2(grid).powi(2));
        let envelope =
            (2.0 * ell * problem.t_final).exp() * (rho0_sq + problem.t_final * max_f_sq);
        diag.step = j;
        diag.cum_dt_drho2 = cum;
        diag.gronwall_ratio =
            if envelope > 0.0 { diag.norm_rho_l2.powi(2) / envelope } else { 0.0 };
        log::info!(
            "step {j}/{}: t = {t_j:.6}, {} picard solves, energy residual {:e}",
            problem.steps,
            diag.picard_iters,
            diag.energy_identity_residual
        );
        diagnostics.push(diag);
        rho_prev = rho.clone();
        m_prev = Some(m.clone());
        trajectory.push((m, rho));
    }
    Ok((trajectory, diagnostics))
}

/// Mixed-primal equivalence check: reconstruct face gradients from the cell
/// densities and the Dirichlet data, push them through the flux law, and
/// return the per-face difference to the solved flux. Small residuals certify
/// that the mixed solution also solves the density-only formulation.
pub fn primal_residual(
    law: &ForchheimerLaw,
    grid: &CartesianGrid,
    rho: &CellField,
    rho_b: &BoundaryTrace,
    t: f64,
    m: &FaceField,
    root: RootOpts,
) -> Result<FaceField, SolverError> {
    if !rho.matches(grid) || !m.matches(grid) {
        return Err(SolverError::InvalidProblem("shape mismatch".into()));
    }
    // normal gradient components per face; boundary faces use one-sided
    // half-spacing differences against the wall value -rho_b
    let mut grad = FaceField::zeros(grid);
    for j in 0..grid.ny {
        for i in 0..=grid.nx {
            let idx = grid.x_face(i, j);
            grad.x_normals[idx] = if i == 0 {
                (rho.at(grid, 0, j) - (-rho_b.left[j])) / (0.5 * grid.hx)
            } else if i == grid.nx {
                ((-rho_b.right[j]) - rho.at(grid, grid.nx - 1, j)) / (0.5 * grid.hx)
            } else {
                (rho.at(grid, i, j) - rho.at(grid, i - 1, j)) / grid.hx
            };
        }
    }
    for j in 0..=grid.ny {
        for i in 0..grid.nx {
            let idx = grid.y_face(i, j);
            grad.y_normals[idx] = if j == 0 {
                (rho.at(grid, i, 0) - (-rho_b.bottom[i])) / (0.5 * grid.hy)
            } else if j == grid.ny {
                ((-rho_b.top[i]) - rho.at(grid, i, grid.ny - 1)) / (0.5 * grid.hy)
            } else {
                (rho.at(grid, i, j) - rho.at(grid, i, j - 1)) / grid.hy
            };
        }
    }
    let mut residual = FaceField::zeros(grid);
    for face in grid.faces() {
        let center = grid.face_center(face);
        let normal = grad.normal(grid, face);
        let tang = tangential_average(grid, &grad, face);
        let g = match face {
            Face::X { .. } => [normal, tang],
            Face::Y { .. } => [tang, normal],
        };
        let flux = law.flux_from_gradient(center, t, g, root)?;
        let flux_normal = match face {
            Face::X { .. } => flux[0],
            Face::Y { .. } => flux[1],
        };
        let r = flux_normal - m.normal(grid, face);
        match face {
            Face::X { i, j } => residual.x_normals[grid.x_face(i, j)] = r,
            Face::Y { i, j } => residual.y_normals[grid.y_face(i, j)] = r,
        }
    }
    Ok(residual)
}

/// Signed 4-neighbor tangential average (the stencil behind the magnitude
/// reconstruction).
fn tangential_average(grid: &CartesianGrid, field: &FaceField, face: Face) -> f64 {
    match face {
        Face::X { i, j } => {
            let mut sum = 0.0;
            let mut count = 0usize;
            if i > 0 {
                sum += field.y_normals[grid.y_face(i - 1, j)]
                    + field.y_normals[grid.y_face(i - 1, j + 1)];
                count += 2;
            }
            if i < grid.nx {
                sum += field.y_normals[grid.y_face(i, j)]
                    + field.y_normals[grid.y_face(i, j + 1)];
                count += 2;
            }
            sum / count as f64
        }
        Face::Y { i, j } => {
            let mut sum = 0.0;
            let mut count = 0usize;
            if j > 0 {
                sum += field.x_normals[grid.x_face(i, j - 1)]
                    + field.x_normals[grid.x_face(i + 1, j - 1)];
                count += 2;
            }
            if j < grid.ny {
                sum += field.x_normals[grid.x_face(i, j)]
                    + field.x_normals[grid.x_face(i + 1, j)];
                count += 2;
            }
            sum / count as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const GOLDEN_FLUX: f64 = 0.618033988749894848; // positive root of m(1+m)=1

    fn ward() -> ForchheimerLaw {
        ForchheimerLaw::ward(1.0, 1.0)
    }

    fn ward_strip(nx: usize) -> StationaryProblem {
        let grid = build_grid(nx, 4, 1.0, 1.0).unwrap();
        StationaryProblem {
            law: ward(),
            grid,
            f: CellField::zeros(&grid),
            rho_b: BoundaryTrace::from_density(&grid, |p| 1.0 - p[0]),
        }
    }

    #[test]
    fn linear_law_converges_in_one_solve() {
        let grid = build_grid(6, 4, 1.0, 1.0).unwrap();
        let law = ForchheimerLaw::darcy(1.0);
        let config = SolverConfig::default();
        let rho_b = BoundaryTrace::from_density(&grid, |p| 1.0 - p[0]);
        let (_, _, report) = picard_solve(
            &law,
            &grid,
            0.0,
            1e-8,
            1e-8,
            0.0,
            &CellField::constant(&grid, 1.0),
            &CellField::zeros(&grid),
            &rho_b,
            None,
            &config,
        )
        .unwrap();
        assert_eq!(report.iters, 1, "history: {:?}", report.history);
    }

    #[test]
    fn ward_strip_flux_matches_quadratic_root() {
        let problem = ward_strip(16);
        let config = SolverConfig::default();
        let (m, _, _) = solve_stationary(&problem, &config).unwrap();
        for v in &m.x_normals {
            assert!((v - GOLDEN_FLUX).abs() < 1e-8, "flux {v}");
        }
        for v in &m.y_normals {
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn picard_is_initialization_independent() {
        let problem = ward_strip(12);
        let config = SolverConfig::default();
        let grid = problem.grid;
        let eps = config.smallest_eps();
        let ones = CellField::constant(&grid, 1.0);
        let run = |m0: Option<&FaceField>| {
            picard_solve(
                &problem.law,
                &grid,
                0.0,
                eps,
                eps,
                0.0,
                &ones,
                &problem.f,
                &problem.rho_b,
                m0,
                &config,
            )
            .unwrap()
        };
        let (m_zero, _, _) = run(None);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut m_rand = FaceField::zeros(&grid);
        for v in m_rand.x_normals.iter_mut().chain(m_rand.y_normals.iter_mut()) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let (m_from_rand, _, _) = run(Some(&m_rand));
        let mut diff = m_from_rand.clone();
        diff.axpy(-1.0, &m_zero);
        assert!(diff.norm_l2(&grid) < 1e-8, "diff = {}", diff.norm_l2(&grid));
    }

    #[test]
    fn stationary_zero_data_is_zero_at_every_eps() {
        let grid = build_grid(5, 5, 1.0, 1.0).unwrap();
        let problem = StationaryProblem {
            law: ward(),
            grid,
            f: CellField::zeros(&grid),
            rho_b: BoundaryTrace::zero(&grid),
        };
        let config = SolverConfig::default();
        let (m, rho, report) = solve_stationary(&problem, &config).unwrap();
        assert!(m.norm_l2(&grid) < 1e-13);
        assert!(rho.norm_l2(&grid) < 1e-13);
        for level in &report.levels {
            assert!(level.norm_m_l2 < 1e-13);
        }
    }

    #[test]
    fn eps_differences_shrink_on_2d_problem() {
        let grid = build_grid(12, 12, 1.0, 1.0).unwrap();
        let problem = StationaryProblem {
            law: ward(),
            grid,
            f: CellField::zeros(&grid),
            rho_b: BoundaryTrace::from_density(&grid, |p| {
                1.0 + 0.5 * p[0] - 0.3 * p[1] + 0.2 * p[0] * p[1]
            }),
        };
        let config = SolverConfig::default();
        let (_, _, report) = solve_stationary(&problem, &config).unwrap();
        let diffs: Vec<f64> =
            report.levels[1..].iter().map(|l| l.diff_prev_rho_l2).collect();
        for w in diffs.windows(2) {
            assert!(w[1] < w[0], "diffs not decreasing: {diffs:?}");
        }
    }

    #[test]
    fn transient_zero_data_stays_zero() {
        let grid = build_grid(4, 4, 1.0, 1.0).unwrap();
        let law = ward();
        let config = SolverConfig::default();
        let phi = CellField::constant(&grid, 1.0);
        let rho_prev = CellField::zeros(&grid);
        let (m, rho, diag) = step_transient(
            &law,
            &grid,
            &phi,
            &rho_prev,
            0.1,
            0.1,
            &CellField::zeros(&grid),
            &BoundaryTrace::zero(&grid),
            None,
            &config,
        )
        .unwrap();
        assert!(m.norm_l2(&grid) < 1e-14);
        assert!(rho.norm_l2(&grid) < 1e-14);
        assert!(diag.energy_identity_residual < 1e-14);
    }

    #[test]
    fn gronwall_window_is_enforced() {
        let grid = build_grid(4, 4, 1.0, 1.0).unwrap();
        let problem = TransientProblem {
            law: ward(),
            grid,
            phi: CellField::constant(&grid, 0.1),
            f: Box::new(move |_| CellField::zeros(&grid)),
            rho_b: Box::new(move |_| BoundaryTrace::zero(&grid)),
            rho0: CellField::zeros(&grid),
            t_final: 1.0,
            steps: 10, // dt = 0.1 >= phi_min/2 = 0.05
            lipschitz: 0.0,
        };
        let config = SolverConfig::default();
        assert!(matches!(
            run_transient(&problem, &config),
            Err(SolverError::GronwallWindow { .. })
        ));
    }

    #[test]
    fn dissipation_with_zero_forcing() {
        let grid = build_grid(8, 8, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut rho0 = CellField::zeros(&grid);
        for v in rho0.values.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let problem = TransientProblem {
            law: ward(),
            grid,
            phi: CellField::constant(&grid, 1.0),
            f: Box::new(move |_| CellField::zeros(&grid)),
            rho_b: Box::new(move |_| BoundaryTrace::zero(&grid)),
            rho0,
            t_final: 0.2,
            steps: 40,
            lipschitz: 0.0,
        };
        let config = SolverConfig::default();
        let (_, diags) = run_transient(&problem, &config).unwrap();
        let mut prev = f64::INFINITY;
        for d in &diags {
            assert!(
                d.norm_rho_l2 <= prev,
                "norm increased at step {}: {} > {prev}",
                d.step,
                d.norm_rho_l2
            );
            prev = d.norm_rho_l2;
            assert!(d.energy_identity_residual <= 1e-9 * (1.0 + d.norm_rho_l2));
        }
    }

    #[test]
    fn primal_residual_small_on_darcy_strip() {
        let grid = build_grid(10, 4, 1.0, 1.0).unwrap();
        let problem = StationaryProblem {
            law: ForchheimerLaw::darcy(1.0),
            grid,
            f: CellField::zeros(&grid),
            rho_b: BoundaryTrace::from_density(&grid, |p| 1.0 - p[0]),
        };
        let config = SolverConfig::default();
        let (m, rho, _) = solve_stationary(&problem, &config).unwrap();
        let res =
            primal_residual(&problem.law, &grid, &rho, &problem.rho_b, 0.0, &m, config.root)
                .unwrap();
        let norm = res.norm_l2(&grid);
        assert!(norm < 1e-8, "primal residual {norm}");
    }

    #[test]
    fn primal_residual_zero_on_zero_problem() {
        let grid = build_grid(4, 4, 1.0, 1.0).unwrap();
        let law = ward();
        let res = primal_residual(
            &law,
            &grid,
            &CellField::zeros(&grid),
            &BoundaryTrace::zero(&grid),
            0.0,
            &FaceField::zeros(&grid),
            RootOpts::default(),
        )
        .unwrap();
        assert_eq!(res.norm_l2(&grid), 0.0);
    }
}
