"""Pure-numpy implementations of the performance kernels.

Mirrors the compiled extension in `_core`.  Both backends implement the same
counter-based random number generator and evaluate coefficient programs with
the same floating-point operation order, so results agree bitwise except for
libm-level rounding of log/cos.
"""

import numpy as np

BACKEND = "python"

# postfix opcodes, shared with firstexit.expressions
_OP_CONST = 0
_OP_VAR = 1
_OP_ADD = 2
_OP_SUB = 3
_OP_MUL = 4
_OP_DIV = 5
_OP_NEG = 6
_OP_POW = 7

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 2.0**-53

STATUS_EXITED = 0
STATUS_CENSORED = 1
STATUS_ABORTED = 2


def csr_matvec(data, indices, indptr, x):
    """y = A @ x for a CSR matrix given by (data, indices, indptr)."""
    n = indptr.size - 1
    y = np.zeros(n, dtype=np.float64)
    if data.size == 0:
        return y
    prod = data * x[indices]
    starts = indptr[:-1]
    nonempty = starts < indptr[1:]
    y[nonempty] = np.add.reduceat(prod, starts[nonempty])
    return y


def _mix(z):
    z = np.bitwise_xor(z, z >> np.uint64(30)) * _MIX1
    z = np.bitwise_xor(z, z >> np.uint64(27)) * _MIX2
    return np.bitwise_xor(z, z >> np.uint64(31))


def path_states(seed, start, count):
    """Root counter-states for paths ``start .. start+count-1``."""
    # scalar uint64 overflow warns in numpy, 1-element arrays wrap silently
    root = _mix(np.array([seed], dtype=np.uint64))
    ids = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    return _mix(root + ids * _GOLDEN)


def _uniform(state, draw_index):
    """Open-interval (0, 1) uniform for one counter index per path."""
    inc = np.uint64((int(draw_index + 1) * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF)
    raw = _mix(state + inc)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def standard_normals(state, first_draw, n_cols):
    """Box-Muller normals, columns j using draws first_draw+2j, first_draw+2j+1."""
    out = np.empty((state.size, n_cols), dtype=np.float64)
    for j in range(n_cols):
        u1 = _uniform(state, first_draw + 2 * j)
        u2 = _uniform(state, first_draw + 2 * j + 1)
        out[:, j] = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return out


def run_programs(code, offsets, consts, max_stack, points):
    """Evaluate every compiled program at each point; returns (n_points, n_programs)."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    n_prog = offsets.size - 1
    out = np.empty((n, n_prog), dtype=np.float64)
    stack = np.empty((max_stack, n), dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for k in range(n_prog):
            sp = 0
            for t in range(offsets[k], offsets[k + 1]):
                op = code[t, 0]
                arg = code[t, 1]
                if op == _OP_CONST:
                    stack[sp] = consts[arg]
                    sp += 1
                elif op == _OP_VAR:
                    stack[sp] = pts[:, arg]
                    sp += 1
                elif op == _OP_ADD:
                    stack[sp - 2] = stack[sp - 2] + stack[sp - 1]
                    sp -= 1
                elif op == _OP_SUB:
                    stack[sp - 2] = stack[sp - 2] - stack[sp - 1]
                    sp -= 1
                elif op == _OP_MUL:
                    stack[sp - 2] = stack[sp - 2] * stack[sp - 1]
                    sp -= 1
                elif op == _OP_DIV:
                    stack[sp - 2] = stack[sp - 2] / stack[sp - 1]
                    sp -= 1
                elif op == _OP_NEG:
                    stack[sp - 1] = -stack[sp - 1]
                else:  # _OP_POW, exponent in arg
                    base = stack[sp - 1]
                    acc = np.ones_like(base)
                    for _ in range(arg):
                        acc = acc * base
                    stack[sp - 1] = acc
            out[:, k] = stack[0]
    return out


def _cholesky_lower(a_flat, dim):
    """Row-wise Cholesky of symmetric matrices given as upper-triangle columns.

    a_flat has shape (n, dim*(dim+1)/2) in row-major upper-triangle order.
    Returns (L, ok) with L of shape (n, dim, dim) lower triangular.
    """
    n = a_flat.shape[0]
    full = np.zeros((n, dim, dim), dtype=np.float64)
    k = 0
    for i in range(dim):
        for j in range(i, dim):
            full[:, i, j] = a_flat[:, k]
            full[:, j, i] = a_flat[:, k]
            k += 1
    ok = np.ones(n, dtype=bool)
    L = np.zeros_like(full)
    for j in range(dim):
        d = full[:, j, j] - np.einsum("nk,nk->n", L[:, j, :j], L[:, j, :j])
        good = d > 0.0
        ok &= good
        d = np.where(good, d, 1.0)
        L[:, j, j] = np.sqrt(d)
        for i in range(j + 1, dim):
            s = full[:, i, j] - np.einsum("nk,nk->n", L[:, i, :j], L[:, j, :j])
            L[:, i, j] = s / L[:, j, j]
    return L, ok


def simulate_paths(code, offsets, consts, max_stack, dim, x0, lo, hi,
                   dt, max_steps, seed, n_paths, path_offset):
    """Euler-Maruyama paths from x0 until leaving the open box (lo, hi).

    The first `dim` programs are the drift components, the remaining
    dim*(dim+1)/2 the upper triangle of the diffusion matrix.  Returns
    (status, steps) arrays; recorded exit time is steps * dt.
    """
    status = np.empty(n_paths, dtype=np.uint8)
    steps = np.zeros(n_paths, dtype=np.int64)
    if n_paths == 0:
        return status, steps

    state = path_states(seed, path_offset, n_paths)
    alive = np.arange(n_paths, dtype=np.int64)
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (n_paths, dim)).copy()
    sqdt = np.sqrt(dt)
    n_tri = dim * (dim + 1) // 2

    with np.errstate(invalid="ignore", over="ignore"):
        for m in range(max_steps):
            coeffs = run_programs(code, offsets, consts, max_stack, x)
            b = coeffs[:, :dim]
            L, ok = _cholesky_lower(coeffs[:, dim:dim + n_tri], dim)
            if not ok.all():
                bad = ~ok
                status[alive[bad]] = STATUS_ABORTED
                steps[alive[bad]] = m
                alive = alive[ok]
                state = state[ok]
                x = x[ok]
                b = b[ok]
                L = L[ok]
                if alive.size == 0:
                    break
            z = standard_normals(state, 2 * m * dim, dim)
            x = x + b * dt + sqdt * np.einsum("nij,nj->ni", L, z)

            finite = np.isfinite(x).all(axis=1)
            if not finite.all():
                bad = ~finite
                status[alive[bad]] = STATUS_ABORTED
                steps[alive[bad]] = m + 1
                alive = alive[finite]
                state = state[finite]
                x = x[finite]
                if alive.size == 0:
                    break
            out = ((x <= lo) | (x >= hi)).any(axis=1)
            if out.any():
                status[alive[out]] = STATUS_EXITED
                steps[alive[out]] = m + 1
                keep = ~out
                alive = alive[keep]
                state = state[keep]
                x = x[keep]
                if alive.size == 0:
                    break

    if alive.size:
        status[alive] = STATUS_CENSORED
        steps[alive] = max_steps
    return status, steps
