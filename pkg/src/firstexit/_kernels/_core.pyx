# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled performance kernels.

Same contracts and the same random number generator as `_fallback`; the
coefficient programs are executed with an identical floating-point operation
order, so the two backends differ at most by libm rounding of log/cos.
"""

from libc.math cimport cos, isfinite, log, sqrt
from libc.stdint cimport int32_t, int64_t, uint8_t, uint64_t
from libc.stdlib cimport free, malloc

import numpy as np

BACKEND = "compiled"

STATUS_EXITED = 0
STATUS_CENSORED = 1
STATUS_ABORTED = 2

cdef int _EXITED = 0
cdef int _CENSORED = 1
cdef int _ABORTED = 2

cdef double TWO_PI = 6.283185307179586
cdef double U53 = 1.0 / 9007199254740992.0
cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15UL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9UL
cdef uint64_t MIX2 = 0x94D049BB133111EBUL


def csr_matvec(double[::1] data, int64_t[::1] indices, int64_t[::1] indptr,
               double[::1] x):
    """y = A @ x for a CSR matrix given by (data, indices, indptr)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t i, t
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for t in range(indptr[i], indptr[i + 1]):
                acc += data[t] * x[indices[t]]
            y[i] = acc
    return out


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t state, uint64_t draw) nogil:
    cdef uint64_t raw = _mix(state + (draw + 1UL) * GOLDEN)
    return (<double> (raw >> 11) + 0.5) * U53


cdef inline double _run_one(const int32_t[:, ::1] code, int32_t start, int32_t stop,
                            const double[::1] consts, double* x, double* stack) nogil:
    cdef int32_t t, op, arg
    cdef int sp = 0, r
    cdef double base, acc
    for t in range(start, stop):
        op = code[t, 0]
        arg = code[t, 1]
        if op == 0:
            stack[sp] = consts[arg]
            sp += 1
        elif op == 1:
            stack[sp] = x[arg]
            sp += 1
        elif op == 2:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == 3:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == 4:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == 5:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == 6:
            stack[sp - 1] = -stack[sp - 1]
        else:
            base = stack[sp - 1]
            acc = 1.0
            for r in range(arg):
                acc = acc * base
            stack[sp - 1] = acc
    return stack[0]


def run_programs(int32_t[:, ::1] code, int32_t[::1] offsets, double[::1] consts,
                 int max_stack, double[:, ::1] points):
    """Evaluate every compiled program at each point; returns (n_points, n_programs)."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t n_prog = offsets.shape[0] - 1
    out = np.empty((n, n_prog), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double* stack = <double*> malloc(max_stack * sizeof(double))
    cdef double x[3]
    cdef Py_ssize_t i, k, j
    if stack == NULL:
        raise MemoryError()
    if d > 3:
        free(stack)
        raise ValueError("at most 3 variables are supported")
    with nogil:
        for i in range(n):
            for j in range(d):
                x[j] = points[i, j]
            for k in range(n_prog):
                o[i, k] = _run_one(code, offsets[k], offsets[k + 1], consts, x, stack)
    free(stack)
    return out


cdef inline bint _cholesky(double* a_flat, int dim, double* L) nogil:
    # a_flat holds the upper triangle row-major; L is dim*dim row-major
    cdef double full[9]
    cdef int i, j, k, t
    cdef double acc
    t = 0
    for i in range(dim):
        for j in range(i, dim):
            full[i * dim + j] = a_flat[t]
            full[j * dim + i] = a_flat[t]
            t += 1
    for i in range(dim * dim):
        L[i] = 0.0
    for j in range(dim):
        acc = full[j * dim + j]
        for k in range(j):
            acc -= L[j * dim + k] * L[j * dim + k]
        if not acc > 0.0:
            return 0
        L[j * dim + j] = sqrt(acc)
        for i in range(j + 1, dim):
            acc = full[i * dim + j]
            for k in range(j):
                acc -= L[i * dim + k] * L[j * dim + k]
            L[i * dim + j] = acc / L[j * dim + j]
    return 1


def simulate_paths(int32_t[:, ::1] code, int32_t[::1] offsets, double[::1] consts,
                   int max_stack, int dim, double[::1] x0, double[::1] lo,
                   double[::1] hi, double dt, int64_t max_steps, uint64_t seed,
                   Py_ssize_t n_paths, int64_t path_offset):
    """Euler-Maruyama paths from x0 until leaving the open box (lo, hi).

    Program layout and return values match `_fallback.simulate_paths`.
    """
    status_arr = np.empty(n_paths, dtype=np.uint8)
    steps_arr = np.zeros(n_paths, dtype=np.int64)
    cdef uint8_t[::1] status = status_arr
    cdef int64_t[::1] steps = steps_arr
    if n_paths == 0:
        return status_arr, steps_arr
    if dim > 3:
        raise ValueError("at most 3 dimensions are supported")

    cdef Py_ssize_t n_prog = offsets.shape[0] - 1
    cdef double* stack = <double*> malloc(max_stack * sizeof(double))
    if stack == NULL:
        raise MemoryError()

    cdef double coeff[9]
    cdef double L[9]
    cdef double x[3]
    cdef double xn[3]
    cdef double z[3]
    cdef double u1, u2, acc
    cdef double sqdt = sqrt(dt)
    cdef uint64_t root = _mix(seed)
    cdef uint64_t state, base_draw
    cdef Py_ssize_t p
    cdef int64_t m
    cdef int i, j, k, outcome
    # outcome: -1 keep running, otherwise a STATUS_* value

    with nogil:
        for p in range(n_paths):
            state = _mix(root + (<uint64_t> (path_offset + p + 1)) * GOLDEN)
            for i in range(dim):
                x[i] = x0[i]
            outcome = _CENSORED
            steps[p] = max_steps
            for m in range(max_steps):
                for k in range(n_prog):
                    coeff[k] = _run_one(code, offsets[k], offsets[k + 1], consts, x, stack)
                if not _cholesky(&coeff[dim], dim, L):
                    outcome = _ABORTED
                    steps[p] = m
                    break
                base_draw = 2UL * (<uint64_t> m) * (<uint64_t> dim)
                for j in range(dim):
                    u1 = _uniform(state, base_draw + 2UL * (<uint64_t> j))
                    u2 = _uniform(state, base_draw + 2UL * (<uint64_t> j) + 1UL)
                    z[j] = sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)
                for i in range(dim):
                    acc = 0.0
                    for j in range(dim):
                        acc += L[i * dim + j] * z[j]
                    xn[i] = x[i] + coeff[i] * dt + sqdt * acc
                outcome = -1
                for i in range(dim):
                    if not isfinite(xn[i]):
                        outcome = _ABORTED
                        steps[p] = m + 1
                        break
                if outcome != -1:
                    break
                for i in range(dim):
                    if xn[i] <= lo[i] or xn[i] >= hi[i]:
                        outcome = _EXITED
                        steps[p] = m + 1
                        break
                if outcome != -1:
                    break
                for i in range(dim):
                    x[i] = xn[i]
                outcome = _CENSORED
            status[p] = <uint8_t> outcome

    free(stack)
    return status_arr, steps_arr
