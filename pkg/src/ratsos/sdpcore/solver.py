"""Primal-dual interior-point solver for block SDPs.

The problem is rewritten in standard form over cone variables ``X_k`` and
free variables ``y_f``::

    minimize    <C, X> + c_f^T y_f
    subject to  A(X) + B y_f = b,   X_k PSD

Blocks whose variables are exclusive single-entry coordinates (Gram
matrices, the common case for SOS programs) map directly onto ``X_k``; any
other block is lifted with one equality per upper-triangle entry.

The standard form is solved through its homogeneous self-dual embedding
with Nesterov-Todd scaling and a Mehrotra predictor-corrector. The scaled
iterate is kept as ``X = R diag(lam) R^T``, ``Z = R^{-T} diag(lam) R^{-1}``
and the scaling matrices are updated multiplicatively. A vanishing ``tau``
with growing ``kappa`` yields an infeasibility certificate.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .problem import Block, SDPProblem, SDPSolution, Status

log = logging.getLogger(__name__)


@dataclass
class SolverOptions:
    gap_tol: float = 1e-8
    feas_tol: float = 1e-8
    psd_tol: float = 1e-9
    max_iter: int = 200
    step: float = 0.99
    pivot_tol: float = 1e-10
    verbose: bool = False


# ----------------------------------------------------------------------------
# standard-form conversion


@dataclass
class _Cone:
    dim: int
    source: int              # index of the originating problem block
    offset: int              # diagonal position inside a diagonal source block
    F0: np.ndarray


class _StandardForm:
    """Standard-form data plus the bookkeeping needed to map results back."""

    def __init__(self, prob: SDPProblem):
        self.prob = prob
        cones: list[_Cone] = []
        cone_entries: list[list[tuple[int, int, int, float]]] = []
        for k, blk in enumerate(prob.blocks):
            ents = blk.canonical_entries()
            if blk.diagonal:
                per = defaultdict(list)
                for v, i, j, val in ents:
                    per[i].append((v, 0, 0, val))
                for i in range(blk.dim):
                    F0 = np.zeros((1, 1))
                    for v, _, _, val in per[i]:
                        if v < 0:
                            F0[0, 0] += val
                    cones.append(_Cone(1, k, i, F0))
                    cone_entries.append([e for e in per[i] if e[0] >= 0])
            else:
                F0 = np.zeros((blk.dim, blk.dim))
                for v, i, j, val in ents:
                    if v < 0:
                        F0[i, j] += val
                        if i != j:
                            F0[j, i] += val
                cones.append(_Cone(blk.dim, k, 0, F0))
                cone_entries.append([e for e in ents if e[0] >= 0])
        self.cones = cones

        var_cones = defaultdict(list)
        for c, ents in enumerate(cone_entries):
            for v, i, j, val in ents:
                var_cones[v].append((c, i, j, val))
        direct = []
        for c, ents in enumerate(cone_entries):
            positions = set()
            ok = True
            for v, i, j, val in ents:
                if len(var_cones[v]) != 1 or (i, j) in positions:
                    ok = False
                    break
                positions.add((i, j))
            direct.append(ok)
        self.direct = direct

        var_map = {}                     # var -> (cone, i, j, val)
        for c, ents in enumerate(cone_entries):
            if direct[c]:
                for v, i, j, val in ents:
                    var_map[v] = (c, i, j, val)
        self.var_map = var_map
        free = [v for v in range(prob.n_vars) if v not in var_map]
        self.free = np.array(free, dtype=int)
        free_idx = {v: t for t, v in enumerate(free)}

        # rows: (cone, i, j, coef) contributions, free contributions, rhs
        A = prob.A.tocoo()
        n_orig = prob.n_eq
        rows_cone: list[list[tuple[int, int, int, float]]] = [[] for _ in range(n_orig)]
        rows_free: list[list[tuple[int, float]]] = [[] for _ in range(n_orig)]
        rhs = list(prob.b.astype(float))
        for r, v, a in zip(A.row, A.col, A.data):
            if a == 0.0:
                continue
            if v in var_map:
                c, i, j, val = var_map[v]
                rows_cone[r].append((c, i, j, a / val))
                rhs[r] -= a * cones[c].F0[i, j] / val
            else:
                rows_free[r].append((free_idx[v], a))
        origin = list(range(n_orig))
        for c, ents in enumerate(cone_entries):
            n = cones[c].dim
            F0 = cones[c].F0
            if direct[c]:
                covered = {(i, j) for _, i, j, _ in ents}
                for i in range(n):
                    for j in range(i, n):
                        if (i, j) not in covered:
                            rows_cone.append([(c, i, j, 1.0)])
                            rows_free.append([])
                            rhs.append(-F0[i, j])
                            origin.append(-1)
            else:
                lift = defaultdict(list)
                for v, i, j, val in ents:
                    lift[(i, j)].append((free_idx[v], -val))
                for i in range(n):
                    for j in range(i, n):
                        rows_cone.append([(c, i, j, 1.0)])
                        rows_free.append(lift.get((i, j), []))
                        rhs.append(-F0[i, j])
                        origin.append(-1)
        m = len(rhs)
        self.origin = np.array(origin, dtype=int)
        b = np.array(rhs, dtype=float)

        # cone row matrices over full vec(X_c): <Ahat_r, X> = sum coef * X_ij
        trip = [([], [], []) for _ in cones]
        for r, ents in enumerate(rows_cone):
            for c, i, j, coef in ents:
                n = cones[c].dim
                rr, cc, vv = trip[c]
                if i == j:
                    rr.append(r); cc.append(i * n + i); vv.append(coef)
                else:
                    rr += [r, r]; cc += [i * n + j, j * n + i]; vv += [0.5 * coef, 0.5 * coef]
        Acone = [sp.csr_matrix((vv, (rr, cc)), shape=(m, cones[c].dim ** 2))
                 for c, (rr, cc, vv) in enumerate(trip)]
        fr, fc, fv = [], [], []
        for r, ents in enumerate(rows_free):
            for t, a in ents:
                fr.append(r); fc.append(t); fv.append(a)
        Bf = sp.csr_matrix((fv, (fr, fc)), shape=(m, len(free))).toarray()

        # objective
        cvec = np.zeros(prob.n_vars) if prob.c is None else prob.c
        self.obj_const = 0.0
        C = [np.zeros((cn.dim, cn.dim)) for cn in cones]
        for v, (c, i, j, val) in var_map.items():
            cv = cvec[v]
            if cv == 0.0:
                continue
            if i == j:
                C[c][i, i] += cv / val
            else:
                C[c][i, j] += 0.5 * cv / val
                C[c][j, i] += 0.5 * cv / val
            self.obj_const += cv * cones[c].F0[i, j] / val
        cf = cvec[self.free] if len(free) else np.zeros(0)

        # row equilibration
        norms = np.sqrt(sum(np.asarray(Ac.multiply(Ac).sum(axis=1)).ravel() for Ac in Acone)
                        + (Bf ** 2).sum(axis=1)) if m else np.zeros(0)
        if not cones:
            norms = np.sqrt((Bf ** 2).sum(axis=1)) if m else np.zeros(0)
        scale = np.where(norms > 0, norms, 1.0)
        D = sp.diags(1.0 / scale) if m else None
        if m:
            Acone = [sp.csr_matrix(D @ Ac) for Ac in Acone]
            Bf = Bf / scale[:, None]
            b = b / scale
        self.row_scale = scale
        self.Acone = Acone
        self.B = Bf
        self.b = b
        self.C = C
        self.cf = cf
        self.m = m
        self.inconsistent = None
        self._reduce_rows(pivot_tol=1e-10)
        self._reduce_free(pivot_tol=1e-10)

    def _stack(self, rows=None) -> np.ndarray:
        parts = [Ac.toarray() if rows is None else Ac[rows].toarray() for Ac in self.Acone]
        parts.append(self.B if rows is None else self.B[rows])
        return np.hstack(parts) if parts else np.zeros((self.m, 0))

    def _reduce_rows(self, pivot_tol):
        m = self.m
        self.kept_rows = np.arange(m)
        if m == 0:
            return
        M = self._stack()
        zero = np.abs(M).max(axis=1) == 0.0
        if M.shape[1] == 0 or m == 1 and not zero.any():
            return
        _, R, piv = la.qr(M.T, mode="economic", pivoting=True)
        d = np.abs(np.diag(R))
        rank = int(np.sum(d > pivot_tol * max(d[0] if d.size else 0.0, 1e-300))) if d.size else 0
        if rank == m:
            return
        kept = np.sort(piv[:rank])
        dropped = np.sort(piv[rank:])
        if rank:
            alpha, *_ = la.lstsq(M[kept].T, M[dropped].T)
            resid = self.b[dropped] - alpha.T @ self.b[kept]
        else:
            alpha = np.zeros((0, dropped.size))
            resid = self.b[dropped].copy()
        bscale = max(1.0, float(np.max(np.abs(self.b))))
        bad = np.abs(resid) > 1e-9 * bscale
        if bad.any():
            t = int(np.argmax(np.abs(resid)))
            v = np.zeros(m)
            v[dropped[t]] = 1.0
            v[kept] = -alpha[:, t]
            # internal multiplier with b^T v < 0
            if self.b @ v > 0:
                v = -v
            self.inconsistent = v / abs(self.b @ v)
        self.kept_rows = kept
        self.Acone = [Ac[kept] for Ac in self.Acone]
        self.B = self.B[kept]
        self.b = self.b[kept]
        self.m = len(kept)

    def _reduce_free(self, pivot_tol):
        nf = self.B.shape[1]
        self.kept_free = np.arange(nf)
        self.unbounded_direction = False
        if nf == 0:
            return
        colmax = np.abs(self.B).max(axis=0) if self.m else np.zeros(nf)
        if self.m == 0:
            kept = np.zeros(0, dtype=int)
        else:
            _, R, piv = la.qr(self.B, mode="economic", pivoting=True)
            d = np.abs(np.diag(R))
            rank = int(np.sum(d > pivot_tol * max(d[0] if d.size else 0.0, 1e-300))) if d.size else 0
            if d.size and d[0] == 0.0:
                rank = 0
            kept = np.sort(piv[:rank])
        del colmax
        if len(kept) == nf:
            return
        dropped = np.setdiff1d(np.arange(nf), kept)
        if len(kept):
            beta, *_ = la.lstsq(self.B[:, kept], self.B[:, dropped])
            red = self.cf[dropped] - beta.T @ self.cf[kept]
        else:
            red = self.cf[dropped]
        if np.any(np.abs(red) > 1e-12 * max(1.0, float(np.max(np.abs(self.cf), initial=0.0)))):
            self.unbounded_direction = True
        self.kept_free = kept
        self.B = self.B[:, kept]
        self.cf = self.cf[kept]


# ----------------------------------------------------------------------------
# interior-point iterations


def _sym(M):
    return 0.5 * (M + M.T)


def _max_step(lam, D):
    """Largest ``a`` with ``diag(lam) + a*D`` PSD (``inf`` if unbounded)."""
    s = 1.0 / np.sqrt(lam)
    ev = la.eigvalsh(_sym(D * s[:, None] * s[None, :]))
    lo = ev[0]
    return math.inf if lo >= 0 else -1.0 / lo


def _circ(A, B):
    return 0.5 * (A @ B + B @ A)


def _lam_div(lam, M):
    """Solve ``diag(lam) o D = M`` for symmetric ``D``."""
    return 2.0 * M / (lam[:, None] + lam[None, :])


class _KKTFactor:
    """Solver for ``[[S, -B], [-B^T, 0]]`` with ``S`` positive definite.

    ``S`` is factored by Cholesky and the free variables are handled through
    the small Schur complement ``B^T S^{-1} B``, which keeps the accuracy of
    the definite part as ``S`` becomes ill-conditioned near optimality.
    """

    def __init__(self, S, B):
        m = S.shape[0]
        self.m = m
        scale = max(1.0, float(np.max(np.diag(S), initial=0.0))) if m else 1.0
        reg = 0.0
        for _ in range(6):
            try:
                self.cho = la.cho_factor(S + reg * np.eye(m), check_finite=False) if m else None
                break
            except la.LinAlgError:
                reg = 1e-14 * scale if reg == 0.0 else reg * 100.0
        else:
            raise la.LinAlgError("Schur complement not positive definite")
        self.B = B
        if B.shape[1]:
            self.SiB = la.cho_solve(self.cho, B, check_finite=False) if m else np.zeros((0, B.shape[1]))
            M = B.T @ self.SiB
            self.lu = la.lu_factor(M + 1e-15 * max(1.0, float(np.max(np.abs(M), initial=0.0))) * np.eye(M.shape[0]),
                                   check_finite=False)

    def solve(self, rhs):
        m = self.m
        r1, r2 = rhs[:m], rhs[m:]
        Sr1 = la.cho_solve(self.cho, r1, check_finite=False) if m else np.zeros(0)
        if self.B.shape[1] == 0:
            return Sr1
        dyf = la.lu_solve(self.lu, -r2 - self.B.T @ Sr1, check_finite=False)
        dw = Sr1 + self.SiB @ dyf
        return np.concatenate([dw, dyf])


class _IPM:
    def __init__(self, sf: _StandardForm, opts: SolverOptions):
        self.sf = sf
        self.opts = opts
        self.dims = [cn.dim for cn in sf.cones]
        self.rows = []
        self.Adense = []
        for Ac in sf.Acone:
            Ac = sp.csr_matrix(Ac)
            nz = np.flatnonzero(np.diff(Ac.indptr))
            self.rows.append(nz)
            n = int(round(math.sqrt(Ac.shape[1])))
            self.Adense.append(Ac[nz].toarray().reshape(len(nz), n, n))

    def A_op(self, Ms):
        out = np.zeros(self.sf.m)
        for Ac, M in zip(self.sf.Acone, Ms):
            out += Ac @ M.ravel()
        return out

    def At_op(self, w):
        return [(Ac.T @ w).reshape(n, n) for Ac, n in zip(self.sf.Acone, self.dims)]

    def solve(self) -> dict:
        sf, opts = self.sf, self.opts
        m, nf = sf.m, sf.B.shape[1]
        K = len(self.dims)
        R = [np.eye(n) for n in self.dims]
        Rti = [np.eye(n) for n in self.dims]
        lam = [np.ones(n) for n in self.dims]
        w = np.zeros(m)
        yf = np.zeros(nf)
        tau, kappa = 1.0, 1.0
        nu = sum(self.dims)
        bnorm = max(1.0, float(np.linalg.norm(sf.b)))
        cnorm = max(1.0, math.sqrt(sum(float(np.sum(C * C)) for C in sf.C) + float(sf.cf @ sf.cf)))

        status = Status.UNKNOWN
        message = "maximum iterations reached"
        best_merit, stall, best = math.inf, 0, None
        info = {}
        it = 0
        for it in range(opts.max_iter + 1):
            X = [Rk * lk[None, :] @ Rk.T for Rk, lk in zip(R, lam)]
            Z = [Tk * lk[None, :] @ Tk.T for Tk, lk in zip(Rti, lam)]
            Atw = self.At_op(w)
            rd = [Atw[k] - Z[k] + sf.C[k] * tau for k in range(K)]
            rf = sf.B.T @ w + sf.cf * tau
            AX = self.A_op(X)
            rp = -AX - sf.B @ yf + sf.b * tau
            cx = sum(float(np.sum(sf.C[k] * X[k])) for k in range(K)) + float(sf.cf @ yf)
            bw = float(sf.b @ w)
            rg = kappa + cx + bw
            xz = sum(float(lk @ lk) for lk in lam)
            mu = (xz + tau * kappa) / (nu + 1)

            pres = float(np.linalg.norm(rp)) / tau / bnorm
            dres = math.sqrt(sum(float(np.sum(r * r)) for r in rd) + float(rf @ rf)) / tau / cnorm
            pcost = cx / tau
            dcost = -bw / tau
            gap = xz / tau ** 2
            relgap = max(gap, abs(pcost - dcost)) / (1.0 + abs(pcost) + abs(dcost))
            info = dict(pres=pres, dres=dres, gap=relgap, abs_gap=gap, pcost=pcost,
                        dcost=dcost, tau=tau, kappa=kappa)
            if opts.verbose:
                log.info("it %3d pcost % .6e dcost % .6e gap %.2e pres %.2e dres %.2e tau %.2e kap %.2e",
                         it, pcost, dcost, relgap, pres, dres, tau, kappa)
            if pres <= opts.feas_tol and dres <= opts.feas_tol and relgap <= opts.gap_tol:
                status, message = Status.FEASIBLE, "optimal"
                break
            if bw < 0:
                hres = math.sqrt(sum(float(np.sum((Atw[k] - Z[k]) ** 2)) for k in range(K))
                                 + float(np.sum((sf.B.T @ w) ** 2)))
                pinf = hres / (-bw) / cnorm
                info["pinfres"] = pinf
                if pinf <= opts.feas_tol:
                    status, message = Status.INFEASIBLE, "primal infeasible"
                    break
            if cx < 0:
                hres = float(np.linalg.norm(AX + sf.B @ yf))
                dinf = hres / (-cx) / bnorm
                if dinf <= opts.feas_tol:
                    status, message = Status.UNKNOWN, "dual infeasible (problem unbounded)"
                    break
            if tau < 1e-12:
                message = "ill-posed: tau vanished without an infeasibility certificate"
                break
            merit = max(pres, dres, relgap)
            if merit < best_merit:
                best_merit, stall = merit, 0
                best = (it, [r.copy() for r in R], [r.copy() for r in Rti], [l.copy() for l in lam],
                        w.copy(), yf.copy(), tau, kappa, dict(info))
            else:
                stall += 1
                if stall >= 8 and best_merit < 1e-5:
                    message = "progress stalled"
                    break
            if it == opts.max_iter:
                break

            # Schur complement in scaled coordinates
            T = []
            S = np.zeros((m, m))
            for k in range(K):
                Tk = np.matmul(np.matmul(R[k].T, self.Adense[k]), R[k])
                Tk = Tk.reshape(len(self.rows[k]), self.dims[k] ** 2)
                T.append(Tk)
                if len(self.rows[k]):
                    S[np.ix_(self.rows[k], self.rows[k])] += Tk @ Tk.T
            KKT = np.zeros((m + nf, m + nf))
            KKT[:m, :m] = S
            KKT[:m, m:] = -sf.B
            KKT[m:, :m] = -sf.B.T
            try:
                fac = _KKTFactor(S, sf.B)
            except (ValueError, la.LinAlgError):
                message = "singular Newton system"
                break
            Ct = [R[k].T @ sf.C[k] @ R[k] for k in range(K)]

            def kkt_solve(E1t, e2, e3, Dm):
                # E1t = R^T E1 R (scaled); Dm = lam-div of complementarity rhs
                rhs1 = e3.copy()
                for k in range(K):
                    if len(self.rows[k]):
                        rhs1[self.rows[k]] += T[k] @ (Dm[k] + E1t[k]).ravel()
                rhs = np.concatenate([rhs1, -e2])
                sol = fac.solve(rhs)
                for _ in range(2):
                    sol = sol + fac.solve(rhs - KKT @ sol)
                dw, dyf = sol[:m], sol[m:]
                dZt = []
                for k in range(K):
                    n = self.dims[k]
                    M = (T[k].T @ dw[self.rows[k]]).reshape(n, n) if len(self.rows[k]) else np.zeros((n, n))
                    dZt.append(_sym(M - E1t[k]))
                dXt = [_sym(Dm[k] - dZt[k]) for k in range(K)]
                return dw, dyf, dZt, dXt

            zeroD = [np.zeros((n, n)) for n in self.dims]
            d1 = kkt_solve([-c for c in Ct], -sf.cf, -sf.b, zeroD)
            z1sq = sum(float(np.sum(dz * dz)) for dz in d1[2])

            def direction(eta, Dm, rkap):
                E1t = [-eta * (R[k].T @ rd[k] @ R[k]) for k in range(K)]
                d2 = kkt_solve(E1t, -eta * rf, -eta * rp, Dm)
                cx2 = sum(float(np.sum(Ct[k] * d2[3][k])) for k in range(K)) + float(sf.cf @ d2[1])
                bw2 = float(sf.b @ d2[0])
                dtau = (-eta * rg - rkap / tau - cx2 - bw2) / (-kappa / tau - z1sq)
                dkap = (rkap - kappa * dtau) / tau
                dw = d2[0] + dtau * d1[0]
                dyf = d2[1] + dtau * d1[1]
                dZt = [d2[2][k] + dtau * d1[2][k] for k in range(K)]
                dXt = [_sym(Dm[k] - dZt[k]) for k in range(K)]
                return dw, dyf, dXt, dZt, dtau, dkap

            def step_to_boundary(dXt, dZt, dtau, dkap):
                a = math.inf
                for k in range(K):
                    a = min(a, _max_step(lam[k], dXt[k]), _max_step(lam[k], dZt[k]))
                if dtau < 0:
                    a = min(a, -tau / dtau)
                if dkap < 0:
                    a = min(a, -kappa / dkap)
                return a

            # predictor
            Dp = [np.diag(-lk) for lk in lam]
            pa = direction(1.0, Dp, -tau * kappa)
            a_aff = min(1.0, step_to_boundary(pa[2], pa[3], pa[4], pa[5]))
            sigma = (1.0 - a_aff) ** 3
            # corrector
            Dc = []
            for k in range(K):
                rc = -np.diag(lam[k] ** 2) - _circ(pa[2][k], pa[3][k]) + sigma * mu * np.eye(self.dims[k])
                Dc.append(_lam_div(lam[k], rc))
            rkap = -tau * kappa - pa[4] * pa[5] + sigma * mu
            dw, dyf, dXt, dZt, dtau, dkap = direction(1.0 - sigma, Dc, rkap)
            amax = step_to_boundary(dXt, dZt, dtau, dkap)
            alpha = min(1.0, opts.step * amax)

            for _attempt in range(8):
                try:
                    newR, newRti, newlam = [], [], []
                    for k in range(K):
                        Xn = _sym(np.diag(lam[k]) + alpha * dXt[k])
                        Zn = _sym(np.diag(lam[k]) + alpha * dZt[k])
                        L1 = np.linalg.cholesky(Xn)
                        L2 = np.linalg.cholesky(Zn)
                        U, s, Vt = np.linalg.svd(L2.T @ L1)
                        if s[-1] <= 0:
                            raise np.linalg.LinAlgError("degenerate scaling")
                        isq = 1.0 / np.sqrt(s)
                        newR.append(R[k] @ L1 @ Vt.T * isq[None, :])
                        newRti.append(Rti[k] @ L2 @ U * isq[None, :])
                        newlam.append(s)
                    break
                except np.linalg.LinAlgError:
                    alpha *= 0.5
            else:
                message = "step length collapsed"
                break
            R, Rti, lam = newR, newRti, newlam
            w = w + alpha * dw
            yf = yf + alpha * dyf
            tau = tau + alpha * dtau
            kappa = kappa + alpha * dkap
            if alpha < 1e-12:
                message = "step length collapsed"
                break

        if status == Status.UNKNOWN and best is not None:
            it, R, Rti, lam, w, yf, tau, kappa, info = best
        X = [Rk * lk[None, :] @ Rk.T for Rk, lk in zip(R, lam)]
        Z = [Tk * lk[None, :] @ Tk.T for Tk, lk in zip(Rti, lam)]
        return dict(status=status, message=message, X=X, Z=Z, w=w, yf=yf, tau=tau,
                    kappa=kappa, iterations=it, info=info)


# ----------------------------------------------------------------------------
# public entry point


def _assemble_blocks(prob: SDPProblem, sf: _StandardForm, mats):
    """Reassemble per-cone matrices into per-block matrices."""
    out = [np.zeros((blk.dim, blk.dim)) for blk in prob.blocks]
    for cn, M in zip(sf.cones, mats):
        if cn.dim == 1 and prob.blocks[cn.source].diagonal:
            out[cn.source][cn.offset, cn.offset] = M[0, 0]
        else:
            out[cn.source] = M
    return out


def _original_multipliers(prob: SDPProblem, sf: _StandardForm, w_kept):
    """Map internal equality multipliers to the conventional sign on A y = b."""
    w_full = np.zeros(len(sf.row_scale))
    w_full[sf.kept_rows] = w_kept
    w_full = w_full / sf.row_scale
    v = np.zeros(prob.n_eq)
    mask = sf.origin >= 0
    v[sf.origin[mask]] = w_full[mask]
    return -v


def _recover(problem: SDPProblem, sf: _StandardForm, X, yf_int, tau):
    """Scalar variables and PSD block values from an embedding iterate.

    Block values are the cone iterates themselves (PSD by construction);
    ``F_k(y)`` agrees with them up to the reported primal residual.
    """
    y = np.zeros(problem.n_vars)
    for v, (c, i, j, val) in sf.var_map.items():
        y[v] = (X[c][i, j] / tau + sf.cones[c].F0[i, j]) / val
    if len(sf.free):
        yf = np.zeros(len(sf.free))
        yf[sf.kept_free] = yf_int / tau
        y[sf.free] = yf
    blocks = [_sym(M / tau) for M in _assemble_blocks(problem, sf, X)]
    return y, blocks


def solve(problem: SDPProblem, opts: SolverOptions | None = None, **kwargs) -> SDPSolution:
    """Solve ``problem``; see :class:`SolverOptions` for tolerances."""
    if opts is None:
        opts = SolverOptions(**kwargs)
    elif kwargs:
        opts = SolverOptions(**{**opts.__dict__, **kwargs})
    problem.validate()
    sf = _StandardForm(problem)
    n = problem.n_vars

    if sf.inconsistent is not None:
        # the row combination vanishes on every column, so pins and lifts
        # carry zero weight and the certificate lives on A y = b alone
        w_full = sf.inconsistent / sf.row_scale
        v = np.zeros(problem.n_eq)
        mask = sf.origin >= 0
        v[sf.origin[mask]] = -w_full[mask]
        Zs = [np.zeros((blk.dim, blk.dim)) for blk in problem.blocks]
        return SDPSolution(Status.INFEASIBLE, np.full(n, np.nan), [], {}, math.nan,
                           (math.nan, math.nan), 0, certificate={"Z": Zs, "v": v},
                           message="inconsistent linear equalities")

    if not sf.cones and sf.m == 0:
        y = np.zeros(n)
        status = Status.UNKNOWN if sf.unbounded_direction else Status.FEASIBLE
        return SDPSolution(status, y, [], {"Z": [], "v": np.zeros(problem.n_eq)}, 0.0,
                           (0.0, 0.0), 0, problem.objective(y), problem.objective(y),
                           message="trivial")

    with np.errstate(all="ignore"):
        res = _IPM(sf, opts).solve()
    tau = res["tau"]
    status = res["status"]
    Z = [z / tau for z in res["Z"]]
    y, block_values = _recover(problem, sf, res["X"], res["yf"], tau)
    info = res["info"]
    v = _original_multipliers(problem, sf, res["w"] / tau)
    dual = {"Z": _assemble_blocks(problem, sf, Z), "v": v}
    certificate = None
    message = res["message"]
    if status == Status.FEASIBLE:
        if sf.unbounded_direction:
            status = Status.UNKNOWN
            message = "objective unbounded along a free direction"
    elif status == Status.INFEASIBLE:
        bw = float(sf.b @ res["w"])
        scale = -bw
        Zc = [z / scale for z in res["Z"]]
        vc = _original_multipliers(problem, sf, res["w"] / scale)
        certificate = {"Z": _assemble_blocks(problem, sf, Zc), "v": vc}
    pobj = problem.objective(y) if status == Status.FEASIBLE else info.get("pcost", math.nan) + sf.obj_const
    dobj = info.get("dcost", math.nan) + sf.obj_const
    return SDPSolution(
        status=status, y=y, block_values=block_values, dual=dual,
        gap=info.get("gap", math.nan), residuals=(info.get("pres", math.nan), info.get("dres", math.nan)),
        iterations=res["iterations"], primal_objective=pobj, dual_objective=dobj,
        certificate=certificate, message=message,
    )


__all__ = ["SolverOptions", "solve", "Block"]
