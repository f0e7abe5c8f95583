"""Method of moving asymptotes with the primal-dual interior-point subsolver.

Solves problems of the form

    min  f0(x) + a0 z + sum(c_i y_i + d_i y_i^2 / 2)
    s.t. f_i(x) - a_i z - y_i <= 0,   xmin <= x <= xmax,   y, z >= 0

one convex separable approximation at a time.  With the default large ``c``
the elastic variables ``y`` vanish whenever the constraints can be met.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MMAError(RuntimeError):
    """Subproblem produced a non-finite or otherwise unusable point."""


@dataclass
class MMAState:
    """Asymptotes and design history carried between MMA iterations."""

    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    xold1: np.ndarray | None = None
    xold2: np.ndarray | None = None
    iteration: int = 0


@dataclass
class MMASettings:
    move: float = 0.5
    asyinit: float = 0.5
    asyincr: float = 1.2
    asydecr: float = 0.7
    asymin: float = 0.01      # closest asymptote distance, fraction of range
    asymax: float = 10.0
    albefa: float = 0.1
    raa0: float = 1e-5
    c: float = 1000.0
    d: float = 1.0
    a0: float = 1.0
    epsimin: float = 1e-7


@dataclass
class MMAResult:
    x: np.ndarray
    y: np.ndarray
    z: float
    lam: np.ndarray
    state: MMAState = field(repr=False, default=None)


def mma_update(x, f0_grad, f_vals, f_grads, xmin, xmax,
               state: MMAState | None = None,
               settings: MMASettings | None = None) -> MMAResult:
    """One MMA step from ``x``.

    ``f_vals`` (m,) and ``f_grads`` (m, n) describe the constraints
    ``f_i(x) <= 0``; ``f0_grad`` is the objective gradient.  Returns the new
    point, the subproblem multipliers and the updated asymptote state.
    """
    st = MMAState() if state is None else state
    cfg = MMASettings() if settings is None else settings
    x = np.asarray(x, dtype=float)
    xmin = np.broadcast_to(np.asarray(xmin, dtype=float), x.shape)
    xmax = np.broadcast_to(np.asarray(xmax, dtype=float), x.shape)
    df0 = np.asarray(f0_grad, dtype=float)
    fval = np.atleast_1d(np.asarray(f_vals, dtype=float))
    dfdx = np.asarray(f_grads, dtype=float).reshape(fval.size, x.size)
    if not (np.all(np.isfinite(df0)) and np.all(np.isfinite(dfdx))
            and np.all(np.isfinite(fval))):
        raise MMAError("non-finite function values or gradients")
    m, n = fval.size, x.size
    span = np.maximum(xmax - xmin, 1e-12)

    it = st.iteration + 1
    if it <= 2 or st.low is None or st.xold2 is None:
        low = x - cfg.asyinit * span
        upp = x + cfg.asyinit * span
    else:
        zzz = (x - st.xold1) * (st.xold1 - st.xold2)
        factor = np.ones(n)
        factor[zzz > 0] = cfg.asyincr
        factor[zzz < 0] = cfg.asydecr
        low = x - factor * (st.xold1 - st.low)
        upp = x + factor * (st.upp - st.xold1)
        low = np.clip(low, x - cfg.asymax * span, x - cfg.asymin * span)
        upp = np.clip(upp, x + cfg.asymin * span, x + cfg.asymax * span)

    alfa = np.maximum.reduce([low + cfg.albefa * (x - low),
                              x - cfg.move * span, xmin])
    beta = np.minimum.reduce([upp - cfg.albefa * (upp - x),
                              x + cfg.move * span, xmax])
    # degenerate boxes (x pinned at a bound with zero span)
    beta = np.maximum(beta, alfa)

    ux1, xl1 = upp - x, x - low
    ux2, xl2 = ux1 ** 2, xl1 ** 2
    xmami = np.maximum(span, 1e-5)
    p0 = np.maximum(df0, 0.0)
    q0 = np.maximum(-df0, 0.0)
    pq0 = 0.001 * (p0 + q0) + cfg.raa0 / xmami
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2
    P = np.maximum(dfdx, 0.0)
    Q = np.maximum(-dfdx, 0.0)
    PQ = 0.001 * (P + Q) + cfg.raa0 / xmami[None, :]
    P = (P + PQ) * ux2[None, :]
    Q = (Q + PQ) * xl2[None, :]
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - fval

    a = np.zeros(m)
    c = np.full(m, cfg.c)
    d = np.full(m, cfg.d)
    xnew, y, z, lam = _subsolv(m, n, cfg.epsimin, low, upp, alfa, beta,
                               p0, q0, P, Q, cfg.a0, a, b, c, d)
    if not np.all(np.isfinite(xnew)):
        raise MMAError("MMA subproblem returned non-finite design")
    xnew = np.clip(xnew, xmin, xmax)
    new_state = MMAState(low=low, upp=upp, xold1=x.copy(),
                         xold2=None if st.xold1 is None else st.xold1.copy(),
                         iteration=it)
    return MMAResult(xnew, y, z, lam, new_state)


class MMA:
    """Stateful convenience wrapper around :func:`mma_update`."""

    def __init__(self, n: int, xmin, xmax, settings: MMASettings | None = None):
        self.n = n
        self.xmin = np.broadcast_to(np.asarray(xmin, dtype=float), (n,)).copy()
        self.xmax = np.broadcast_to(np.asarray(xmax, dtype=float), (n,)).copy()
        self.settings = MMASettings() if settings is None else settings
        self.state = MMAState()
        self.last: MMAResult | None = None

    def reset(self):
        self.state = MMAState()

    def step(self, x, f0_grad, f_vals, f_grads) -> np.ndarray:
        res = mma_update(x, f0_grad, f_vals, f_grads, self.xmin, self.xmax,
                         self.state, self.settings)
        self.state = res.state
        self.last = res
        return res.x


def _subsolv(m, n, epsimin, low, upp, alfa, beta, p0, q0, P, Q, a0, a, b, c, d):
    """Primal-dual interior-point solve of the MMA subproblem."""
    een, eem = np.ones(n), np.ones(m)
    epsi = 1.0
    x = 0.5 * (alfa + beta)
    y = eem.copy()
    z = 1.0
    lam = eem.copy()
    with np.errstate(divide="ignore"):
        xsi = np.maximum(1.0 / (x - alfa), een)
        eta = np.maximum(1.0 / (beta - x), een)
    xsi[~np.isfinite(xsi)] = 1.0
    eta[~np.isfinite(eta)] = 1.0
    mu = np.maximum(eem, 0.5 * c)
    zet = 1.0
    s = eem.copy()
    # guard pinned variables (alfa == beta)
    gap = np.maximum(beta - alfa, 1e-14)
    alfa_s = np.where(beta - alfa < 1e-14, x - 0.5 * gap, alfa)
    beta_s = np.where(beta - alfa < 1e-14, x + 0.5 * gap, beta)
    alfa, beta = alfa_s, beta_s

    def residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi):
        ux1, xl1 = upp - x, x - low
        plam = p0 + P.T @ lam
        qlam = q0 + Q.T @ lam
        gvec = P @ (1 / ux1) + Q @ (1 / xl1)
        dpsidx = plam / ux1 ** 2 - qlam / xl1 ** 2
        r = np.concatenate([
            dpsidx - xsi + eta,
            c + d * y - mu - lam,
            [a0 - zet - a @ lam],
            gvec - a * z - y + s - b,
            xsi * (x - alfa) - epsi,
            eta * (beta - x) - epsi,
            mu * y - epsi,
            [zet * z - epsi],
            lam * s - epsi,
        ])
        return r

    while epsi > epsimin:
        res = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
        residunorm = np.linalg.norm(res)
        residumax = np.max(np.abs(res))
        ittt = 0
        while residumax > 0.9 * epsi and ittt < 200:
            ittt += 1
            ux1, xl1 = upp - x, x - low
            ux2, xl2 = ux1 ** 2, xl1 ** 2
            ux3, xl3 = ux1 * ux2, xl1 * xl2
            uxinv2, xlinv2 = 1 / ux2, 1 / xl2
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ (1 / ux1) + Q @ (1 / xl1)
            GG = P * uxinv2[None, :] - Q * xlinv2[None, :]
            dpsidx = plam / ux2 - qlam / xl2
            delx = dpsidx - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / z
            dellam = gvec - a * z - y - b + epsi / lam
            diagx = 2 * (plam / ux3 + qlam / xl3) + xsi / (x - alfa) + eta / (beta - x)
            diagxinv = 1 / diagx
            diagy = d + mu / y
            diagyinv = 1 / diagy
            diaglam = s / lam
            diaglamyi = diaglam + diagyinv
            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                bb = np.concatenate([blam, [delz]])
                Alam = np.diag(diaglamyi) + (GG * diagxinv[None, :]) @ GG.T
                AA = np.block([[Alam, a[:, None]], [a[None, :], np.array([[-zet / z]])]])
                sol = np.linalg.solve(AA, bb)
                dlam, dz = sol[:m], sol[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                diaglamyiinv = 1 / diaglamyi
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + (GG.T * diaglamyiinv[None, :]) @ GG
                azz = zet / z + a @ (a / diaglamyi)
                axz = -GG.T @ (a / diaglamyi)
                bx = delx + GG.T @ (dellamyi / diaglamyi)
                bz = delz - a @ (dellamyi / diaglamyi)
                AA = np.block([[Axx, axz[:, None]], [axz[None, :], np.array([[azz]])]])
                sol = np.linalg.solve(AA, -np.concatenate([bx, [bz]]))
                dx, dz = sol[:n], sol[n]
                dlam = (GG @ dx) / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi
            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / z - zet * dz / z
            ds = -s + epsi / lam - (s * dlam) / lam
            xx = np.concatenate([y, [z], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stmxx = np.max(-1.01 * dxx / xx)
            stmalfa = np.max(-1.01 * dx / (x - alfa))
            stmbeta = np.max(1.01 * dx / (beta - x))
            steg = 1.0 / max(stmalfa, stmbeta, stmxx, 1.0)
            old = (x, y, z, lam, xsi, eta, mu, zet, s)
            itto = 0
            resinew = 2 * residunorm
            while resinew > residunorm and itto < 50:
                itto += 1
                x = old[0] + steg * dx
                y = old[1] + steg * dy
                z = old[2] + steg * dz
                lam = old[3] + steg * dlam
                xsi = old[4] + steg * dxsi
                eta = old[5] + steg * deta
                mu = old[6] + steg * dmu
                zet = old[7] + steg * dzet
                s = old[8] + steg * ds
                res = residual(x, y, z, lam, xsi, eta, mu, zet, s, epsi)
                resinew = np.linalg.norm(res)
                steg /= 2
            residunorm = resinew
            residumax = np.max(np.abs(res))
        epsi *= 0.1
    return x, y, z, lam
