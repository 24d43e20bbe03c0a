"""Primal-dual interior-point solver for linear objectives over LMI and sign
constraints.

The problem

    minimize c'y  subject to  F0_k + sum_i y_i F_k[i] ⪯ 0 (k = 1..K),  G y <= h

is treated as the dual side of a conic pair in standard form and solved in a
homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector. The embedding needs no feasible starting point and
produces certificates for infeasible and unbounded problems: a ray with
positive dual objective certifies an unbounded objective, a ray with negative
primal objective certifies infeasibility.
"""

from __future__ import annotations

import numpy as np

from ..assembly import LinearObjective, LmiProblem
from .common import Solution, SolveStatus, SolverOptions

_CERT_GUARD = 1e-2  # certificates are only trusted once tau has collapsed


class _Embedding:
    """State and linear algebra of the homogeneous embedding."""

    def __init__(self, problem: LmiProblem, options: SolverOptions):
        margin = options.strict_margin
        self.fs = [np.ascontiguousarray(f, dtype=float) for f in problem.fs]
        self.fmats = [f.reshape(f.shape[0], -1) for f in self.fs]
        self.C = [-(f0 + margin * np.eye(f0.shape[0])) for f0 in problem.f0]
        self.dims = [f0.shape[0] for f0 in problem.f0]
        self.G = np.asarray(problem.g, dtype=float)
        self.h = np.asarray(problem.h, dtype=float)
        if not isinstance(problem.objective, LinearObjective):
            raise ValueError("linear solver needs a linear objective")
        self.c_obj = np.asarray(problem.objective.c, dtype=float)
        self.q = problem.n_vars
        self.p = self.G.shape[0]

        # Column equilibration. Every variable lives in a cone that positive
        # scaling leaves invariant (free or nonneg), so substituting
        # y_i -> y_i / d_i is exact; it removes order-of-magnitude spread
        # between multiplier classes that otherwise wrecks the conditioning
        # of the reduced system. Row equilibration of the sign rows keeps
        # them unit-sized afterwards. Solutions are mapped back on exit.
        col = np.zeros(self.q)
        for f in self.fs:
            if f.size:
                col = np.maximum(col, np.abs(f).max(axis=(1, 2)))
        self.col_scale = np.where(col > 0, col, 1.0)
        self.fs = [f / self.col_scale[:, None, None] for f in self.fs]
        self.fmats = [f.reshape(f.shape[0], -1) for f in self.fs]
        self.c_obj = self.c_obj / self.col_scale
        if self.p:
            self.G = self.G / self.col_scale[None, :]
            row = np.abs(self.G).max(axis=1)
            self.row_scale = np.where(row > 0, row, 1.0)
            self.G = self.G / self.row_scale[:, None]
            self.h = self.h / self.row_scale
        else:
            self.row_scale = np.ones(0)

        self.b = -self.c_obj
        self.total_deg = sum(self.dims) + self.p + 1

        self.X = [np.eye(n) for n in self.dims]
        self.S = [np.eye(n) for n in self.dims]
        self.x_lp = np.ones(self.p)
        self.s_lp = np.ones(self.p)
        self.y = np.zeros(self.q)
        self.tau = 1.0
        self.kappa = 1.0

        self.norm_b = max(1.0, np.abs(self.b).max()) if self.q else 1.0
        data_scale = [np.abs(C).max() if C.size else 0.0 for C in self.C]
        self.norm_c = max([1.0] + data_scale + ([np.abs(self.h).max()] if self.p else []))

    # -- basic operators ----------------------------------------------------

    def unscale_y(self, v: np.ndarray) -> np.ndarray:
        """Map a scaled decision vector back to the caller's coordinates."""
        return v / self.col_scale

    def unscale_lp(self, v: np.ndarray) -> np.ndarray:
        """Map scaled sign-row duals back to the caller's coordinates."""
        return v / self.row_scale if self.p else v

    def lincomb(self, v) -> list[np.ndarray]:
        """sum_i v_i F_k[i] per block."""
        return [np.tensordot(v, f, axes=1) for f in self.fs]

    def adjoint(self, mats, v_lp) -> np.ndarray:
        """[<F_k[i], M_k>]_i summed over blocks, plus G' v_lp."""
        out = np.zeros(self.q)
        for fmat, m in zip(self.fmats, mats):
            out += fmat @ m.ravel()
        if self.p:
            out += self.G.T @ v_lp
        return out

    def residuals(self):
        r_p = self.adjoint(self.X, self.x_lp) - self.b * self.tau
        R_d = [
            lc + s - c * self.tau for lc, s, c in zip(self.lincomb(self.y), self.S, self.C)
        ]
        r_lp = (self.G @ self.y + self.s_lp - self.h * self.tau) if self.p else np.zeros(0)
        pin = sum(float(np.tensordot(c, x)) for c, x in zip(self.C, self.X))
        pin += float(self.h @ self.x_lp) if self.p else 0.0
        r_g = float(self.b @ self.y) - pin - self.kappa
        return r_p, R_d, r_lp, r_g, pin

    def mu(self) -> float:
        total = sum(float(np.tensordot(x, s)) for x, s in zip(self.X, self.S))
        total += float(self.x_lp @ self.s_lp) + self.tau * self.kappa
        return total / self.total_deg


def _nt_scaling(X: np.ndarray, S: np.ndarray):
    """Nesterov-Todd scaling point: R with R'SR = inv(R)X inv(R)' = diag(lam)."""
    lx = np.linalg.cholesky(X)
    ls = np.linalg.cholesky(S)
    u, lam, vt = np.linalg.svd(ls.T @ lx)
    if lam.min() <= 0.0:
        raise np.linalg.LinAlgError("NT scaling broke down")
    inv_sqrt = 1.0 / np.sqrt(lam)
    r = lx @ vt.T * inv_sqrt
    r_inv = (u * inv_sqrt).T @ ls.T
    return r, r_inv, lam


def _gram(fs: np.ndarray, fmat: np.ndarray, w: np.ndarray) -> np.ndarray:
    wfw = np.matmul(w, np.matmul(fs, w))
    return fmat @ wfw.reshape(fs.shape[0], -1).T


def _max_step_psd(direction_scaled: np.ndarray, lam: np.ndarray) -> float:
    scale = np.sqrt(np.outer(lam, lam))
    m = np.linalg.eigvalsh(0.5 * (direction_scaled + direction_scaled.T) / scale).min()
    return np.inf if m >= -1e-16 else -1.0 / m


def _max_step_vec(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float((-x[neg] / dx[neg]).min())


def solve_linear(problem: LmiProblem, options: SolverOptions | None = None) -> Solution:
    """Minimize a linear objective subject to LMI blocks and sign rows.

    Deterministic: identical inputs produce identical iterates. Statuses:
    OPTIMAL with tolerances met, INFEASIBLE / UNBOUNDED_OBJECTIVE with a
    certificate, MAX_ITERATIONS when the budget or the stall monitor fires,
    NUMERICAL_FAILURE when the linear algebra breaks down.
    """
    opts = options or SolverOptions()
    emb = _Embedding(problem, opts)
    mu0 = emb.mu()
    mu_hist = [mu0]
    diag = {"iterations": 0, "mu": mu0}
    best = {"phi": np.inf, "y": None, "objective": None}
    collapse_count = 0

    def finish(status: SolveStatus, note: str | None = None) -> Solution:
        """Non-optimal exit: hand back the best iterate seen, not the last."""
        if note is not None:
            diag["stall"] = note
        if best["y"] is None:
            return Solution(status, diagnostics=diag)
        diag["best"] = best["metrics"]
        return Solution(
            status, y=best["y"], objective=best["objective"], diagnostics=diag
        )

    for iteration in range(opts.max_iter):
        r_p, R_d, r_lp, r_g, pin = emb.residuals()
        mu = emb.mu()
        diag["iterations"] = iteration
        diag["mu"] = mu

        # Convergence of the tau-normalized iterate.
        tau = emb.tau
        pobj = pin / tau
        dobj = float(emb.b @ emb.y) / tau
        gap_abs = abs(pobj - dobj)
        gap_rel = gap_abs / (1.0 + max(abs(pobj), abs(dobj)))
        pres = np.abs(emb.adjoint(emb.X, emb.x_lp) / tau - emb.b).max() / (1.0 + emb.norm_b)
        dres_terms = [np.abs(rd).max() for rd in R_d]
        dres = max(dres_terms + [np.abs(r_lp).max() if emb.p else 0.0]) / tau
        dres /= 1.0 + emb.norm_c
        diag.update(
            gap_rel=gap_rel, gap_abs=gap_abs, prim_res=pres, dual_res=dres,
            pobj=pobj, dobj=dobj,
        )
        phi = max(pres, dres, gap_rel)
        if phi < best["phi"]:
            y_best = emb.y / tau
            best.update(
                phi=phi,
                y=emb.unscale_y(y_best),
                objective=float(emb.c_obj @ y_best),
                metrics={
                    "prim_res": pres, "dual_res": dres, "gap_rel": gap_rel,
                    "iteration": iteration,
                },
            )
        if opts.verbose:
            extra = ""
            if opts.verbose >= 2 and "alpha" in diag:
                extra = (
                    f"  alpha {diag['alpha']:7.2e}  sigma {diag['sigma']:7.2e}"
                    f"  kap {emb.kappa:8.2e}"
                )
            print(
                f"  it {iteration:3d}  mu {mu:9.2e}  gap {gap_rel:9.2e}  "
                f"pres {pres:9.2e}  dres {dres:9.2e}  tau {tau:8.2e}" + extra
            )
        if gap_rel <= opts.tol_gap and pres <= opts.tol_feas and dres <= opts.tol_feas:
            y = emb.y / tau
            return Solution(
                SolveStatus.OPTIMAL,
                y=emb.unscale_y(y),
                objective=float(emb.c_obj @ y),
                diagnostics=diag,
                duals={
                    "X": [x / tau for x in emb.X],
                    "x_lp": emb.unscale_lp(emb.x_lp / tau),
                    "pobj": pobj,
                    "dobj": dobj,
                },
            )

        # Infeasibility certificates: rays matter only once tau has collapsed.
        if emb.tau <= _CERT_GUARD * min(1.0, emb.kappa):
            dual_val = float(emb.b @ emb.y)
            ray_res = max(
                [np.abs(lc + s).max() for lc, s in zip(emb.lincomb(emb.y), emb.S)]
                + ([np.abs(emb.G @ emb.y + emb.s_lp).max()] if emb.p else [0.0])
            )
            if dual_val > 0 and ray_res <= opts.tol_feas * emb.norm_c * dual_val:
                return Solution(
                    SolveStatus.UNBOUNDED_OBJECTIVE,
                    diagnostics=diag | {"certificate": "dual ray"},
                    duals={"ray_y": emb.unscale_y(emb.y)},
                )
            prim_val = -pin
            ray_feas = np.abs(emb.adjoint(emb.X, emb.x_lp)).max()
            if prim_val > 0 and ray_feas <= opts.tol_feas * emb.norm_b * prim_val:
                return Solution(
                    SolveStatus.INFEASIBLE,
                    diagnostics=diag | {"certificate": "primal ray"},
                    duals={
                        "ray_X": [x.copy() for x in emb.X],
                        "ray_x_lp": emb.unscale_lp(emb.x_lp),
                    },
                )

        # Stall monitor on the complementarity measure.
        mu_hist.append(mu)
        w = opts.stall_window
        if len(mu_hist) > w and mu > mu_hist[-1 - w] / opts.stall_factor:
            diag["stalled"] = True
            return finish(SolveStatus.MAX_ITERATIONS, "complementarity plateau")

        # NT scalings.
        try:
            scalings = [_nt_scaling(x, s) for x, s in zip(emb.X, emb.S)]
        except np.linalg.LinAlgError:
            diag["failure_site"] = "nt-scaling"
            return finish(SolveStatus.NUMERICAL_FAILURE)
        w_mats = [r @ r.T for r, _, _ in scalings]
        w_lp2 = emb.x_lp / emb.s_lp if emb.p else np.zeros(0)

        h_mat = np.zeros((emb.q, emb.q))
        for fs_k, fmat_k, wm in zip(emb.fs, emb.fmats, w_mats):
            h_mat += _gram(fs_k, fmat_k, wm)
        if emb.p:
            h_mat += (emb.G.T * w_lp2) @ emb.G
        h_mat = 0.5 * (h_mat + h_mat.T)
        # Jacobi scaling plus iterative refinement: the reduced system gets
        # severely ill-conditioned near convergence, and a plain factor-solve
        # floors the attainable residuals orders of magnitude too early.
        # Heavier shifts keep the factor well-posed; refinement against the
        # unshifted matrix recovers the accuracy the shift gave up.
        diag_h = np.diag(h_mat)
        d_scale = np.where(diag_h > 0, np.sqrt(np.clip(diag_h, 1e-300, None)), 1.0)
        h_scaled = h_mat / d_scale[:, None] / d_scale[None, :]
        chol = None
        for reg in (1e-14, 1e-10, 1e-6, 1e-2):
            try:
                chol = np.linalg.cholesky(h_scaled + reg * np.eye(emb.q))
                if reg > 1e-14:
                    diag["regularized"] = reg
                break
            except np.linalg.LinAlgError:
                continue
        if chol is None:
            diag["failure_site"] = "h-factorization"
            return finish(SolveStatus.NUMERICAL_FAILURE)

        def solve_h(rhs):
            def once(r):
                z = np.linalg.solve(chol, r / d_scale)
                return np.linalg.solve(chol.T, z) / d_scale

            scale = float(np.abs(rhs).max()) + 1e-300
            v = once(rhs)
            best_v, best_res = v, np.inf
            for _ in range(10):
                r = rhs - h_mat @ v
                res = float(np.abs(r).max()) / scale
                if res < best_res:
                    best_v, best_res = v, res
                if res <= 1e-11:
                    break
                v = v + once(r)
            return best_v

        wcw = [wm @ c @ wm for wm, c in zip(w_mats, emb.C)]
        u_vec = emb.adjoint(wcw, w_lp2 * emb.h if emb.p else np.zeros(0))
        h_vec = u_vec + emb.b
        v2 = solve_h(h_vec)
        d_c = sum(float(np.tensordot(c, wc)) for c, wc in zip(emb.C, wcw))
        d_c += float(emb.h @ (w_lp2 * emb.h)) if emb.p else 0.0
        denom_const = d_c + emb.kappa / emb.tau

        lams = [sc[2] for sc in scalings]
        denom = float((emb.b - u_vec) @ v2) + denom_const

        def core(rhs_p, rhs_d, rhs_lp, rhs_g, g_psd, g_lp, g_tk):
            """One pass of the reduced solve plus exact back-substitution."""
            rgr = [r @ g @ r.T for (r, _, _), g in zip(scalings, g_psd)]
            wrw = [wm @ rd @ wm for wm, rd in zip(w_mats, rhs_d)]
            r1 = rhs_p - emb.adjoint(rgr, g_lp) + emb.adjoint(
                wrw, w_lp2 * rhs_lp if emb.p else np.zeros(0)
            )
            r2 = rhs_g + g_tk
            r2 += sum(float(np.tensordot(c, m)) for c, m in zip(emb.C, rgr))
            r2 -= sum(float(np.tensordot(c, m)) for c, m in zip(emb.C, wrw))
            if emb.p:
                r2 += float(emb.h @ g_lp) - float(emb.h @ (w_lp2 * rhs_lp))

            v1 = solve_h(r1)
            d_tau = (r2 - float((emb.b - u_vec) @ v1)) / denom
            d_y = v1 + d_tau * v2
            d_s = [rd - lc + c * d_tau for rd, lc, c in zip(rhs_d, emb.lincomb(d_y), emb.C)]
            d_x = [
                rg - wm @ ds @ wm for rg, wm, ds in zip(rgr, w_mats, d_s)
            ]
            d_slp = (rhs_lp - emb.G @ d_y + emb.h * d_tau) if emb.p else np.zeros(0)
            d_xlp = (g_lp - w_lp2 * d_slp) if emb.p else np.zeros(0)
            d_kappa = g_tk - (emb.kappa / emb.tau) * d_tau
            return [d_x, d_s, d_xlp, d_slp, d_y, d_tau, d_kappa]

        def build_step(sigma, corr_psd, corr_lp, corr_tk):
            one_minus = 1.0 - sigma
            rhs_p = -one_minus * r_p
            rhs_d = [-one_minus * rd for rd in R_d]
            rhs_lp = -one_minus * r_lp if emb.p else np.zeros(0)
            rhs_g = -one_minus * r_g

            g_psd = []
            for k, (_, _, lam) in enumerate(scalings):
                target = -np.diag(lam * lam) + sigma * mu * np.eye(lam.size)
                if corr_psd is not None:
                    target -= corr_psd[k]
                g_psd.append(2.0 * target / np.add.outer(lam, lam))
            if emb.p:
                g_lp = (sigma * mu - emb.x_lp * emb.s_lp - corr_lp) / emb.s_lp
            else:
                g_lp = np.zeros(0)
            g_tk = (sigma * mu - emb.tau * emb.kappa - corr_tk) / emb.tau

            cur = core(rhs_p, rhs_d, rhs_lp, rhs_g, g_psd, g_lp, g_tk)

            # Refinement of the two equations the elimination satisfies only
            # approximately (the primal row and the gap row); the eliminated
            # rows hold exactly by back-substitution, and superposed exact
            # rows stay exact, so corrections need zero targets there.
            zero_d = [np.zeros_like(rd) for rd in rhs_d]
            zero_psd = [np.zeros_like(g) for g in g_psd]
            zero_lp = np.zeros(emb.p)
            scale = max(
                float(np.abs(rhs_p).max()) if rhs_p.size else 0.0, abs(rhs_g), 1e-300
            )

            def defect(d):
                d_x, _, d_xlp, _, d_y, d_tau, d_kappa = d
                res_p = rhs_p - (emb.adjoint(d_x, d_xlp) - emb.b * d_tau)
                res_g = rhs_g - (
                    float(emb.b @ d_y)
                    - sum(float(np.tensordot(c, m)) for c, m in zip(emb.C, d_x))
                    - (float(emb.h @ d_xlp) if emb.p else 0.0)
                    - d_kappa
                )
                err = max(float(np.abs(res_p).max()) if res_p.size else 0.0, abs(res_g))
                return res_p, res_g, err / scale

            best_dir, best_err = cur, np.inf
            for _ in range(3):
                res_p, res_g, err = defect(cur)
                if err < best_err:
                    best_dir, best_err = cur, err
                if err <= 1e-12:
                    break
                cor = core(res_p, zero_d, zero_lp, res_g, zero_psd, zero_lp, 0.0)
                cur = [
                    [a + b for a, b in zip(p, q)] if isinstance(p, list) else p + q
                    for p, q in zip(cur, cor)
                ]
            return best_dir

        def max_step(d_x, d_s, d_xlp, d_slp, d_tau, d_kappa):
            alpha = np.inf
            scaled = []
            for k, (r, r_inv, lam) in enumerate(scalings):
                dxs = r_inv @ d_x[k] @ r_inv.T
                dss = r.T @ d_s[k] @ r
                scaled.append((dxs, dss))
                alpha = min(alpha, _max_step_psd(dxs, lam), _max_step_psd(dss, lam))
            if emb.p:
                alpha = min(
                    alpha,
                    _max_step_vec(emb.x_lp, d_xlp),
                    _max_step_vec(emb.s_lp, d_slp),
                )
            if d_tau < 0:
                alpha = min(alpha, -emb.tau / d_tau)
            if d_kappa < 0:
                alpha = min(alpha, -emb.kappa / d_kappa)
            return alpha, scaled

        # Predictor.
        aff = build_step(0.0, None, 0.0, 0.0)
        alpha_aff, scaled_aff = max_step(aff[0], aff[1], aff[2], aff[3], aff[5], aff[6])
        alpha_aff = min(1.0, alpha_aff)
        ax, as_, axlp, aslp, ay, atau, akap = aff
        total = 0.0
        for k in range(len(emb.X)):
            total += float(
                np.tensordot(emb.X[k] + alpha_aff * ax[k], emb.S[k] + alpha_aff * as_[k])
            )
        if emb.p:
            total += float((emb.x_lp + alpha_aff * axlp) @ (emb.s_lp + alpha_aff * aslp))
        total += (emb.tau + alpha_aff * atau) * (emb.kappa + alpha_aff * akap)
        mu_aff = max(total / emb.total_deg, 0.0)
        sigma = min(max((mu_aff / mu) ** 3, 1e-8), 0.999)

        corr_psd = []
        for dxs, dss in scaled_aff:
            prod = dxs @ dss
            corr_psd.append(0.5 * (prod + prod.T))
        corr_lp = axlp * aslp if emb.p else 0.0
        corr_tk = atau * akap

        step = build_step(sigma, corr_psd, corr_lp, corr_tk)
        alpha_max, _ = max_step(step[0], step[1], step[2], step[3], step[5], step[6])
        alpha = min(1.0, opts.step_fraction * alpha_max)
        diag["alpha"] = alpha
        diag["sigma"] = sigma
        if not np.isfinite(alpha) or alpha <= 0:
            diag["failure_site"] = "bad-step-length"
            return finish(SolveStatus.NUMERICAL_FAILURE)

        dx, ds, dxlp, dslp, dy, dtau, dkap = step

        def apply(a):
            """Candidate iterate at step length a, or None if it leaves the cone."""
            xs, ss = [], []
            for k in range(len(emb.X)):
                xn = emb.X[k] + a * dx[k]
                sn = emb.S[k] + a * ds[k]
                xs.append(0.5 * (xn + xn.T))
                ss.append(0.5 * (sn + sn.T))
            xlp = emb.x_lp + a * dxlp if emb.p else emb.x_lp
            slp = emb.s_lp + a * dslp if emb.p else emb.s_lp
            tau = emb.tau + a * dtau
            kappa = emb.kappa + a * dkap
            if not np.isfinite(tau) or tau <= 0 or kappa <= 0:
                return None
            if emb.p and (xlp.min() <= 0 or slp.min() <= 0):
                return None
            try:
                for m in xs + ss:
                    np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                return None
            return xs, ss, xlp, slp, tau, kappa

        def phi_of(cand, y_c):
            """Convergence measure of a candidate, mirroring the loop-top one."""
            xs, ss, xlp, slp, tau_c, _ = cand
            pres_c = np.abs(emb.adjoint(xs, xlp) / tau_c - emb.b).max()
            pres_c /= 1.0 + emb.norm_b
            terms = [
                np.abs(lc + s - c * tau_c).max()
                for lc, s, c in zip(emb.lincomb(y_c), ss, emb.C)
            ]
            if emb.p:
                terms.append(np.abs(emb.G @ y_c + slp - emb.h * tau_c).max())
            dres_c = max(terms) / tau_c / (1.0 + emb.norm_c)
            pin_c = sum(float(np.tensordot(c, x)) for c, x in zip(emb.C, xs))
            if emb.p:
                pin_c += float(emb.h @ xlp)
            pobj_c = pin_c / tau_c
            dobj_c = float(emb.b @ y_c) / tau_c
            gap_c = abs(pobj_c - dobj_c) / (1.0 + max(abs(pobj_c), abs(dobj_c)))
            val = max(pres_c, dres_c, gap_c)
            return val if np.isfinite(val) else np.inf

        # The eigenvalue-based step bound can overshoot in ill-conditioned
        # late iterations, and an inaccurate direction can wreck an almost
        # converged iterate outright.  Back the step off until the candidate
        # is certified interior and does not degrade the convergence measure.
        state = None
        saw_interior = False
        for _ in range(12):
            cand = apply(alpha)
            if cand is not None:
                saw_interior = True
                if phi_of(cand, emb.y + alpha * dy) <= 1.5 * phi:
                    state = cand
                    break
            alpha *= 0.5
        if state is None:
            if not saw_interior:
                diag["failure_site"] = "cone-backtrack"
                return finish(SolveStatus.NUMERICAL_FAILURE)
            collapse_count += 1
            if collapse_count >= 3:
                return finish(SolveStatus.MAX_ITERATIONS, "step length collapsed")
            continue
        diag["alpha"] = alpha
        emb.X, emb.S, emb.x_lp, emb.s_lp, emb.tau, emb.kappa = state
        emb.y = emb.y + alpha * dy
        collapse_count = collapse_count + 1 if alpha < 1e-6 else 0
        if collapse_count >= 3:
            return finish(SolveStatus.MAX_ITERATIONS, "step length collapsed")

    return finish(SolveStatus.MAX_ITERATIONS, "iteration budget")
