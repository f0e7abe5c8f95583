# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Q4 force/tangent kernel (same contract as ``_kernels_py``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow

cnp.import_array()


cdef inline double kron(int a, int b) nogil:
    return 1.0 if a == b else 0.0


cdef int _kernel(const double[:, :, :, ::1] dNdX, const double[:, ::1] wdet,
                 const double[:, ::1] ue, const double[::1] eta,
                 const double[::1] E_nl, const double[::1] E_lin, double nu,
                 double[:, ::1] fe, double[:, :, ::1] ke) noexcept nogil:
    cdef Py_ssize_t ne = ue.shape[0], ngp = dNdX.shape[1]
    cdef Py_ssize_t e, g, a, b, i, j, k, l, m, n
    cdef double H[2][2]
    cdef double F[2][2]
    cdef double G[2][2]
    cdef double D[2][2]
    cdef double S[2][2]
    cdef double At[4][4]
    cdef double C[4][4]
    cdef double J, Jm23, I1b, kap, mu, lamL, muL, et, wn, wl, bb, cc, s
    for e in range(ne):
        et = eta[e]
        kap = E_nl[e] / (3.0 * (1.0 - 2.0 * nu))
        mu = E_nl[e] / (2.0 * (1.0 + nu))
        lamL = E_lin[e] * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        muL = E_lin[e] / (2.0 * (1.0 + nu))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for l in range(2):
                        C[2 * i + j][2 * k + l] = (lamL * kron(i, j) * kron(k, l)
                            + muL * (kron(i, k) * kron(j, l) + kron(i, l) * kron(j, k)))
        for g in range(ngp):
            for i in range(2):
                for j in range(2):
                    s = 0.0
                    for a in range(4):
                        s = s + ue[e, 2 * a + i] * dNdX[e, g, a, j]
                    H[i][j] = s
                    F[i][j] = kron(i, j) + et * s
            J = F[0][0] * F[1][1] - F[0][1] * F[1][0]
            if J <= 0.0:
                return <int>e
            G[0][0] = F[1][1] / J
            G[0][1] = -F[1][0] / J
            G[1][0] = -F[0][1] / J
            G[1][1] = F[0][0] / J
            Jm23 = pow(J, -2.0 / 3.0)
            I1b = Jm23 * (F[0][0] * F[0][0] + F[0][1] * F[0][1]
                          + F[1][0] * F[1][0] + F[1][1] * F[1][1] + 1.0)
            bb = kap * (2.0 * J - 1.0) * J
            cc = kap * (J - 1.0) * J - mu / 3.0 * I1b
            wn = wdet[e, g]
            wl = wn * (1.0 - et * et)
            for i in range(2):
                for j in range(2):
                    D[i][j] = 2.0 * Jm23 * F[i][j] - 2.0 / 3.0 * I1b * G[i][j]
            for i in range(2):
                for j in range(2):
                    s = 0.0
                    for k in range(2):
                        for l in range(2):
                            s = s + C[2 * i + j][2 * k + l] * H[k][l]
                    S[i][j] = wn * et * (cc * G[i][j] + mu * Jm23 * F[i][j]) + wl * s
            for i in range(2):
                for j in range(2):
                    for k in range(2):
                        for l in range(2):
                            At[2 * i + j][2 * k + l] = wn * et * et * (
                                bb * G[i][j] * G[k][l] - cc * G[i][l] * G[k][j]
                                + mu * Jm23 * kron(i, k) * kron(j, l)
                                - 2.0 / 3.0 * mu * Jm23 * F[i][j] * G[k][l]
                                - mu / 3.0 * G[i][j] * D[k][l]) \
                                + wl * C[2 * i + j][2 * k + l]
            # B[2i+j, 2a+i] = dN_a/dX_j
            for a in range(4):
                for i in range(2):
                    s = 0.0
                    for j in range(2):
                        s = s + dNdX[e, g, a, j] * S[i][j]
                    fe[e, 2 * a + i] += s
                    for b in range(4):
                        for k in range(2):
                            s = 0.0
                            for j in range(2):
                                for l in range(2):
                                    s = s + dNdX[e, g, a, j] * At[2 * i + j][2 * k + l] \
                                        * dNdX[e, g, b, l]
                            ke[e, 2 * a + i, 2 * b + k] += s
    return -1


def element_force_tangent(dNdX, wdet, ue, eta, E_nl, E_lin, double nu):
    from ._kernels_py import ElementInversionError
    dNdX = np.ascontiguousarray(dNdX, dtype=np.float64)
    wdet = np.ascontiguousarray(wdet, dtype=np.float64)
    ue = np.ascontiguousarray(ue, dtype=np.float64)
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    E_nl = np.ascontiguousarray(E_nl, dtype=np.float64)
    E_lin = np.ascontiguousarray(E_lin, dtype=np.float64)
    ne = ue.shape[0]
    fe = np.zeros((ne, 8))
    ke = np.zeros((ne, 8, 8))
    cdef const double[:, :, :, ::1] d_v = dNdX
    cdef const double[:, ::1] w_v = wdet
    cdef const double[:, ::1] u_v = ue
    cdef const double[::1] eta_v = eta
    cdef const double[::1] en_v = E_nl
    cdef const double[::1] el_v = E_lin
    cdef double[:, ::1] f_v = fe
    cdef double[:, :, ::1] k_v = ke
    cdef int bad
    with nogil:
        bad = _kernel(d_v, w_v, u_v, eta_v, en_v, el_v, nu, f_v, k_v)
    if bad >= 0:
        raise ElementInversionError(bad)
    return fe, ke
