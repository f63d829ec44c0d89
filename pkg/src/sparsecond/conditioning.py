"""Componentwise condition numbers for determinant, inversion and solving.

All condition values use the componentwise relative distance
``max_i |u_i - v_i| / |v_i|`` with the conventions 0/0 -> 0 and x/0 -> inf for
x != 0. Perturbations are relative and respect the sparsity pattern: an entry
that is structurally zero stays zero. Consequently every condition number here
is homogeneous of degree 0 and singular inputs get the value +inf.

Closed forms come from the first-order sensitivities of the outputs:

    d(det)/d(a_ij)      = det(A) * g_ji
    d(inv_kl)/d(a_ij)   = -g_ki * g_jl
    d(x_k)/d(a_ij)      = -g_ki * x_j        (x = A^-1 b)
    d(x_k)/d(b_i)       = g_ki

where g = A^-1. The worst relative perturbation of size delta aligns all
signs, which turns each condition number into an absolute-value sum; a
finite-perturbation oracle (oracle_condition) checks the same quantities
without using any derivative formula.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .linalg import SINGULAR, PatternedMatrix, as_array, inverse, minor, replace_column

# Entries of computed inverses (and solutions) this far below the largest
# entry are treated as exact zeros when deciding the 0 / inf output
# conventions. LU round-off leaves ~1e-16 * growth garbage in structurally
# zero positions; 1e-10 clears it while never touching a generic entry.
ZERO_SNAP = 1e-10

_QUANTITIES = ("det", "inv", "solve")


def componentwise_distance(u, v) -> float:
    """max_i |u_i - v_i| / |v_i|, with 0/0 -> 0 and nonzero/0 -> inf."""
    uu = np.asarray(u, dtype=float).ravel()
    vv = np.asarray(v, dtype=float).ravel()
    if uu.shape != vv.shape:
        raise ValueError(f"length mismatch: {uu.shape} vs {vv.shape}")
    diff = np.abs(uu - vv)
    out = np.zeros_like(diff)
    nz = vv != 0.0
    out[nz] = diff[nz] / np.abs(vv[nz])
    out[(~nz) & (diff != 0.0)] = np.inf
    return float(out.max()) if out.size else 0.0


def _snap(values: np.ndarray) -> np.ndarray:
    """Magnitudes with sub-roundoff entries replaced by exact zeros."""
    mags = np.abs(values)
    top = mags.max() if mags.size else 0.0
    return np.where(mags > ZERO_SNAP * top, mags, 0.0)


def cond_det(A) -> float:
    """Condition number of the determinant: sum of |a_ij * g_ji| over the support.

    Returns +inf for singular input and 0.0 for the empty (0 x 0) matrix.
    """
    a = as_array(A)
    if a.shape[0] == 0:
        return 0.0
    g = inverse(a)
    if g is SINGULAR:
        return math.inf
    val = float(np.abs(a * g.T).sum())
    return val if math.isfinite(val) else math.inf


def _inverse_cond_entries(a: np.ndarray) -> np.ndarray:
    g = inverse(a)
    if g is SINGULAR or not np.isfinite(g).all():
        return np.full(a.shape, math.inf)
    gs = _snap(g)
    num = gs @ np.abs(a) @ gs
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(gs > 0.0, num / np.abs(np.where(gs > 0.0, g, 1.0)),
                        np.where(num > 0.0, np.inf, 0.0))
    return vals


def cond_inverse_entries(A) -> np.ndarray:
    """Matrix of condition numbers of the individual entries of A^-1."""
    return _inverse_cond_entries(as_array(A))


def cond_inverse_entry(A, k: int, l: int) -> float:
    """Condition number of entry (k, l) of A^-1 (1-based indices)."""
    a = as_array(A)
    n = a.shape[0]
    if not (1 <= k <= n and 1 <= l <= n):
        raise ValueError(f"indices ({k}, {l}) outside [1, {n}]")
    return float(_inverse_cond_entries(a)[k - 1, l - 1])


def cond_inverse(A) -> float:
    """Condition number of matrix inversion: max over all entries of A^-1."""
    return float(cond_inverse_entries(A).max())


def _solve_cond_entries(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    g = inverse(a)
    if g is SINGULAR or not np.isfinite(g).all():
        return np.full(len(b), math.inf)
    x = g @ b
    if not np.isfinite(x).all():
        return np.full(len(b), math.inf)
    gs = _snap(g)
    xs = _snap(x)
    num = gs @ (np.abs(a) @ xs) + gs @ np.abs(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(xs > 0.0, num / np.abs(np.where(xs > 0.0, x, 1.0)),
                        np.where(num > 0.0, np.inf, 0.0))
    return vals


def cond_solve_entries(A, b) -> np.ndarray:
    """Vector of condition numbers of the solution components of A x = b."""
    a = as_array(A)
    return _solve_cond_entries(a, np.asarray(b, dtype=float))


def cond_solve_entry(A, b, k: int) -> float:
    """Condition number of x_k where A x = b (1-based k)."""
    a = as_array(A)
    if not 1 <= k <= a.shape[0]:
        raise ValueError(f"index {k} outside [1, {a.shape[0]}]")
    return float(cond_solve_entries(a, b)[k - 1])


def cond_solve(A, b) -> float:
    """Condition number of linear-system solving: max over solution components."""
    return float(cond_solve_entries(A, b).max())


def bound_inverse_entry(A: PatternedMatrix, k: int, l: int) -> float:
    """Upper bound for cond_inverse_entry(A, k, l): cond_det(A) + cond_det of
    the minor that deletes row l and column k (note the transposed order)."""
    sub = minor(A, l, k)
    return cond_det(A) + (0.0 if sub is None else cond_det(sub))


def bound_inverse_entries(A: PatternedMatrix) -> np.ndarray:
    n = A.n
    base = cond_det(A)
    out = np.empty((n, n))
    for k in range(1, n + 1):
        for l in range(1, n + 1):
            sub = minor(A, l, k)
            out[k - 1, l - 1] = base + (0.0 if sub is None else cond_det(sub))
    return out


def bound_solve_entry(A: PatternedMatrix, b, k: int) -> float:
    """Upper bound for cond_solve_entry: cond_det(A) + cond_det of A with
    column k replaced by b (pattern widened on that column)."""
    return cond_det(A) + cond_det(replace_column(A, k, b))


def bound_solve_entries(A: PatternedMatrix, b) -> np.ndarray:
    base = cond_det(A)
    return np.array([base + cond_det(replace_column(A, k, b)) for k in range(1, A.n + 1)])


# ---------------------------------------------------------------------------
# finite-perturbation oracle

def oracle_condition(quantity: str, A, b=None, delta: float = 1e-6, seed: int = 0,
                     exhaustive_limit: int = 12, random_trials: int = 10_000):
    """Estimate condition numbers straight from their definition.

    Evaluates the target map on relatively perturbed inputs and returns the
    worst observed ratio of output distance to input distance. Each entry of
    the support (plus every entry of b for "solve") is perturbed by
    -delta*|a|, 0 or +delta*|a|. All 3^m sign patterns are enumerated when the
    perturbed entry count m is at most exhaustive_limit; beyond that,
    random_trials random full-magnitude sign patterns are sampled, which makes
    the result a lower estimate of the true supremum.

    Returns a scalar for "det", an (n, n) array for "inv", an (n,) array for
    "solve".
    """
    if delta <= 0.0:
        raise ValueError(f"perturbation scale must be positive, got {delta}")
    if quantity not in _QUANTITIES:
        raise ValueError(f"unknown quantity {quantity!r}, expected one of {_QUANTITIES}")
    if quantity == "solve" and b is None:
        raise ValueError("quantity 'solve' needs a right-hand side")

    if isinstance(A, PatternedMatrix):
        a = A.entries
        rows, cols = A.pattern.index_arrays
    else:
        a = np.asarray(A, dtype=float)
        n0 = a.shape[0]
        rows, cols = np.divmod(np.arange(n0 * n0), n0)
    n = a.shape[0]
    m = len(rows) + (n if quantity == "solve" else 0)

    if m <= exhaustive_limit:
        factors = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=m)))
        factors = factors[np.any(factors != 0.0, axis=1)]
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed)))
        factors = rng.integers(0, 2, size=(random_trials, m)).astype(float) * 2.0 - 1.0

    trials = len(factors)
    stack = np.broadcast_to(a, (trials, n, n)).copy()
    stack[:, rows, cols] = a[rows, cols] * (1.0 + delta * factors[:, : len(rows)])

    def _dist(ref, pert):
        """Componentwise distances with zero snapping, divided by delta."""
        tol = ZERO_SNAP * np.abs(ref).max()
        ref_s = np.where(np.abs(ref) > tol, ref, 0.0)
        pert_s = np.where(np.abs(pert) > tol, pert, 0.0)
        diff = np.abs(pert_s - ref_s)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(ref_s != 0.0, diff / np.abs(np.where(ref_s != 0.0, ref_s, 1.0)),
                         np.where(diff != 0.0, np.inf, 0.0))
        return d.max(axis=0) / delta

    if quantity == "det":
        ref = np.linalg.det(a)
        if ref == 0.0:
            return math.inf
        pert = np.linalg.det(stack)
        return float(np.abs(pert - ref).max() / abs(ref) / delta)

    if quantity == "inv":
        ref = np.linalg.inv(a)
        pert = np.linalg.inv(stack)
        return _dist(ref, pert)

    rhs = np.asarray(b, dtype=float)
    rhs_stack = np.broadcast_to(rhs, (trials, n)).copy()
    rhs_stack *= 1.0 + delta * factors[:, len(rows):]
    ref = np.linalg.solve(a, rhs)
    pert = np.linalg.solve(stack, rhs_stack[..., None])[..., 0]
    return _dist(ref, pert)


# ---------------------------------------------------------------------------
# batched kernels (used by the Monte Carlo estimators)

def _batched_inverse(stack: np.ndarray):
    """Inverse of a (M, n, n) stack.

    Members that are exactly singular, contain non-finite entries, or whose
    inverse overflows are masked out; their condition numbers are +inf.
    """
    finite_in = np.isfinite(stack).all(axis=(-1, -2))
    sign = np.zeros(stack.shape[0])
    if finite_in.any():
        sign[finite_in], _ = np.linalg.slogdet(stack[finite_in])
    ok = finite_in & (sign != 0.0)
    out = np.full_like(stack, np.nan)
    if ok.any():
        out[ok] = np.linalg.inv(stack[ok])
        ok &= np.isfinite(out).all(axis=(-1, -2))
    return out, ok


def batch_cond_det(stack: np.ndarray) -> np.ndarray:
    """cond_det of every matrix in a (M, n, n) stack; inf where singular."""
    g, ok = _batched_inverse(stack)
    vals = np.full(stack.shape[0], np.inf)
    if ok.any():
        sub = np.abs(stack[ok] * np.swapaxes(g[ok], -1, -2)).sum(axis=(-1, -2))
        sub[~np.isfinite(sub)] = np.inf
        vals[ok] = sub
    return vals


def _snap_batch(values: np.ndarray, axes) -> np.ndarray:
    mags = np.abs(values)
    top = mags.max(axis=axes, keepdims=True)
    return np.where(mags > ZERO_SNAP * top, mags, 0.0)


def batch_cond_inverse_entries(stack: np.ndarray) -> np.ndarray:
    """Entrywise inversion condition numbers for a (M, n, n) stack.

    Rows of exactly singular matrices are all +inf.
    """
    g, ok = _batched_inverse(stack)
    vals = np.full(stack.shape, np.inf)
    if not ok.any():
        return vals
    gg = g[ok]
    gs = _snap_batch(gg, (-1, -2))
    num = gs @ np.abs(stack[ok]) @ gs
    with np.errstate(divide="ignore", invalid="ignore"):
        entries = np.where(gs > 0.0, num / np.abs(np.where(gs > 0.0, gg, 1.0)),
                           np.where(num > 0.0, np.inf, 0.0))
    entries[np.isnan(entries)] = np.inf
    vals[ok] = entries
    return vals


def batch_cond_inverse(stack: np.ndarray) -> np.ndarray:
    """cond_inverse of every matrix in a stack; inf where singular."""
    return batch_cond_inverse_entries(stack).max(axis=(-1, -2))


def batch_cond_solve_entries(stack: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Componentwise solve condition numbers for (M, n, n) and (M, n) stacks."""
    g, ok = _batched_inverse(stack)
    ok &= np.isfinite(rhs).all(axis=-1)
    if ok.any():
        # solutions that overflow are treated like singular draws
        x_all = np.zeros(rhs.shape)
        x_all[ok] = (g[ok] @ rhs[ok][..., None])[..., 0]
        ok &= np.isfinite(x_all).all(axis=-1)
    vals = np.full(rhs.shape, np.inf)
    if not ok.any():
        return vals
    gg = g[ok]
    bb = rhs[ok]
    x = x_all[ok]
    gs = _snap_batch(gg, (-1, -2))
    xs = _snap_batch(x, (-1,))
    num = (gs @ (np.abs(stack[ok]) @ xs[..., None]))[..., 0] + (gs @ np.abs(bb)[..., None])[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        comps = np.where(xs > 0.0, num / np.abs(np.where(xs > 0.0, x, 1.0)),
                         np.where(num > 0.0, np.inf, 0.0))
    comps[np.isnan(comps)] = np.inf
    vals[ok] = comps
    return vals


def batch_cond_solve(stack: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """cond_solve of every (matrix, rhs) pair; inf where singular."""
    return batch_cond_solve_entries(stack, rhs).max(axis=-1)


# ---------------------------------------------------------------------------
# report

def _f17(x) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class ConditionReport:
    """Exact condition values for one instance together with the minor and
    column-replacement upper bounds.

    Slack entries are condition minus bound: nonpositive whenever the bound
    dominates, positive on a violation.
    """

    n: int
    pattern_size: int
    c_det: float
    c_inv: float
    c_inv_entries: np.ndarray
    bound_inv_entries: np.ndarray
    c_solve: float | None
    c_solve_entries: np.ndarray | None
    bound_solve_entries: np.ndarray | None

    @staticmethod
    def _max_slack(values, bounds) -> float:
        if values is None or bounds is None:
            return math.nan
        v = np.asarray(values, dtype=float).ravel()
        b = np.asarray(bounds, dtype=float).ravel()
        both = np.isfinite(v) & np.isfinite(b)
        one_sided = (~np.isfinite(v)) & np.isfinite(b)  # inf value vs finite bound
        if one_sided.any():
            return math.inf
        if not both.any():
            return math.nan
        return float((v[both] - b[both]).max())

    @property
    def minor_bound_max_slack(self) -> float:
        return self._max_slack(self.c_inv_entries, self.bound_inv_entries)

    @property
    def replacement_bound_max_slack(self) -> float:
        return self._max_slack(self.c_solve_entries, self.bound_solve_entries)

    @property
    def singular(self) -> bool:
        return not math.isfinite(self.c_det)

    def to_text(self, entries: bool = False) -> str:
        lines = [
            f"n = {self.n}",
            f"S_size = {self.pattern_size}",
            f"c_det = {_fmt_inf(self.c_det)}",
            f"c_inv = {_fmt_inf(self.c_inv)}",
        ]
        if self.c_solve is not None:
            lines.append(f"c_solve = {_fmt_inf(self.c_solve)}")
        lines.append(f"minor_bound_max = {_fmt_inf(float(np.max(self.bound_inv_entries)))}")
        lines.append(f"minor_bound_max_slack = {_fmt_inf(self.minor_bound_max_slack)}")
        if self.c_solve is not None:
            lines.append(f"replacement_bound_max = "
                         f"{_fmt_inf(float(np.max(self.bound_solve_entries)))}")
            lines.append(f"replacement_bound_max_slack = "
                         f"{_fmt_inf(self.replacement_bound_max_slack)}")
        lines.append(f"singular = {int(self.singular)}")
        if entries:
            for k in range(self.n):
                for l in range(self.n):
                    lines.append(
                        f"c_inv_entry_{k + 1}_{l + 1} = {_fmt_inf(self.c_inv_entries[k, l])}"
                        f" (bound {_fmt_inf(self.bound_inv_entries[k, l])})"
                    )
            if self.c_solve_entries is not None:
                for k in range(self.n):
                    lines.append(
                        f"c_solve_entry_{k + 1} = {_fmt_inf(self.c_solve_entries[k])}"
                        f" (bound {_fmt_inf(self.bound_solve_entries[k])})"
                    )
        return "\n".join(lines) + "\n"

    CSV_HEADER = "n,S_size,c_det,c_inv,c_solve,minor_bound_max_slack,replacement_bound_max_slack"

    def to_csv_row(self) -> str:
        c_solve = math.nan if self.c_solve is None else self.c_solve
        return ",".join([
            str(self.n),
            str(self.pattern_size),
            _f17(self.c_det),
            _f17(self.c_inv),
            _f17(c_solve),
            _f17(self.minor_bound_max_slack),
            _f17(self.replacement_bound_max_slack),
        ])


def _fmt_inf(x: float) -> str:
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".9g")


def condition_report(A: PatternedMatrix, b=None) -> ConditionReport:
    """Assemble all condition numbers and bounds for one instance."""
    c_det_val = cond_det(A)
    inv_entries = cond_inverse_entries(A)
    binv = bound_inverse_entries(A)
    if b is not None:
        rhs = np.asarray(b, dtype=float)
        solve_entries = cond_solve_entries(A, rhs)
        bsol = bound_solve_entries(A, rhs)
        c_solve_val = float(solve_entries.max())
    else:
        solve_entries = None
        bsol = None
        c_solve_val = None
    return ConditionReport(
        n=A.n,
        pattern_size=len(A.pattern),
        c_det=c_det_val,
        c_inv=float(inv_entries.max()),
        c_inv_entries=inv_entries,
        bound_inv_entries=binv,
        c_solve=c_solve_val,
        c_solve_entries=solve_entries,
        bound_solve_entries=bsol,
    )
