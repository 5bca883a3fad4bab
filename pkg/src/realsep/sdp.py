"""Primal-dual interior-point solver for real block-diagonal SDPs.

Problems are posed in linear-matrix-inequality form over scalar variables::

    maximize    c . y
    subject to  S_k(y) = C_k + sum_i y_i F_ik  >= 0     (every block k)
                E y = e

The dual (certificate) side is::

    minimize    sum_k <C_k, X_k> + e . lam
    subject to  <F_ik, X_k> summed over k - (E^T lam)_i = -c_i,   X_k >= 0

Any dual-feasible ``(X, lam)`` is an upper bound on the maximum, which is what
makes the moment relaxations built elsewhere in the package certified.

The iteration is Mehrotra predictor-corrector with Nesterov-Todd scaling.
Variables that share a PSD block form a connected component; the Schur
complement is block diagonal over those components and is factored per
component, with the equality constraints eliminated through a reduced system.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INACCURATE = "inaccurate"
INFEASIBLE = "infeasible"
FAILED = "failed"


@dataclass
class SdpBlock:
    """One PSD block: ``S(y) = const + sum_i y_i F_i``.

    Coefficients are stored as the upper triangle (``row <= col``) in
    coordinate form; the lower triangle is implied by symmetry.
    """

    dim: int
    var: np.ndarray
    row: np.ndarray
    col: np.ndarray
    val: np.ndarray
    const: np.ndarray | None = None

    def __post_init__(self):
        self.var = np.asarray(self.var, dtype=np.int64)
        self.row = np.asarray(self.row, dtype=np.int64)
        self.col = np.asarray(self.col, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=float)
        if not (len(self.var) == len(self.row) == len(self.col) == len(self.val)):
            raise ValueError("coefficient arrays differ in length")
        if np.any(self.row > self.col):
            raise ValueError("coefficients must be given for row <= col")
        if len(self.row) and (self.col.max() >= self.dim or self.row.min() < 0):
            raise ValueError("coefficient index outside block")
        if self.const is not None:
            self.const = np.asarray(self.const, dtype=float)
            if self.const.shape != (self.dim, self.dim):
                raise ValueError("constant term has wrong shape")
            if not np.allclose(self.const, self.const.T, atol=1e-14):
                raise ValueError("constant term must be symmetric")


@dataclass
class SdpInstance:
    blocks: list[SdpBlock]
    n_vars: int
    objective: np.ndarray
    eq_matrix: sp.csr_matrix
    eq_rhs: np.ndarray
    maximize: bool = True

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.eq_matrix = sp.csr_matrix(self.eq_matrix)
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float)
        if self.objective.shape != (self.n_vars,):
            raise ValueError("objective length must equal n_vars")
        if self.eq_matrix.shape != (len(self.eq_rhs), self.n_vars):
            raise ValueError("equality matrix shape mismatch")
        if self.eq_matrix.shape[0] == 0:
            raise ValueError("at least one equality constraint is required")
        for blk in self.blocks:
            if len(blk.var) and blk.var.max() >= self.n_vars:
                raise ValueError("block references unknown variable")

    # -- evaluation helpers shared by the solver and the verifier --------

    def slack(self, y: np.ndarray, const: bool = True) -> list[np.ndarray]:
        """The block matrices ``S_k(y)`` (without ``C_k`` when ``const`` is false)."""
        out = []
        for blk in self.blocks:
            if const and blk.const is not None:
                S = blk.const.copy()
            else:
                S = np.zeros((blk.dim, blk.dim))
            np.add.at(S, (blk.row, blk.col), blk.val * y[blk.var])
            off = blk.row != blk.col
            np.add.at(S, (blk.col[off], blk.row[off]), blk.val[off] * y[blk.var[off]])
            out.append(S)
        return out

    def adjoint(self, X: list[np.ndarray]) -> np.ndarray:
        """``g_i = sum_k <F_ik, X_k>``."""
        g = np.zeros(self.n_vars)
        for blk, Xk in zip(self.blocks, X):
            w = np.where(blk.row == blk.col, 1.0, 2.0) * blk.val * Xk[blk.row, blk.col]
            np.add.at(g, blk.var, w)
        return g

    def const_dot(self, X: list[np.ndarray]) -> float:
        return float(sum(np.vdot(blk.const, Xk) for blk, Xk in zip(self.blocks, X)
                         if blk.const is not None))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        E = self.eq_matrix.tocoo()
        return {
            "format": "realsep-sdp",
            "version": 1,
            "sense": "maximize" if self.maximize else "minimize",
            "n_vars": self.n_vars,
            "objective": self.objective.tolist(),
            "blocks": [
                {
                    "dim": b.dim,
                    "coefficients": [[int(v), int(r), int(c), float(x)]
                                     for v, r, c, x in zip(b.var, b.row, b.col, b.val)],
                    "const": None if b.const is None else b.const.tolist(),
                }
                for b in self.blocks
            ],
            "equalities": {
                "triplets": [[int(i), int(j), float(v)] for i, j, v in zip(E.row, E.col, E.data)],
                "rhs": self.eq_rhs.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SdpInstance":
        if d.get("format") != "realsep-sdp":
            raise ValueError("not a realsep-sdp document")
        blocks = []
        for b in d["blocks"]:
            coef = np.asarray(b["coefficients"], dtype=float).reshape(-1, 4)
            blocks.append(SdpBlock(
                dim=int(b["dim"]), var=coef[:, 0].astype(int), row=coef[:, 1].astype(int),
                col=coef[:, 2].astype(int), val=coef[:, 3],
                const=None if b["const"] is None else np.asarray(b["const"], dtype=float)))
        trip = np.asarray(d["equalities"]["triplets"], dtype=float).reshape(-1, 3)
        rhs = np.asarray(d["equalities"]["rhs"], dtype=float)
        n = int(d["n_vars"])
        E = sp.csr_matrix((trip[:, 2], (trip[:, 0].astype(int), trip[:, 1].astype(int))),
                          shape=(len(rhs), n))
        return cls(blocks=blocks, n_vars=n, objective=np.asarray(d["objective"]),
                   eq_matrix=E, eq_rhs=rhs, maximize=d["sense"] == "maximize")

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_json(cls, path) -> "SdpInstance":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write_sdpa(self, path) -> None:
        """Write the instance in SDPA sparse format (``.dat-s``).

        SDPA solves ``min c.x s.t. sum x_i F_i - F_0 >= 0``, so the objective is
        negated for maximization and ``F_0 = -C``.  Equalities become 1x1
        diagonal blocks in pairs (``>= 0`` and ``<= 0``).
        """
        cvec = -self.objective if self.maximize else self.objective
        E = self.eq_matrix.tocsr()
        p = E.shape[0]
        dims = [b.dim for b in self.blocks] + ([-2 * p] if p else [])
        lines = [f"{self.n_vars}", f"{len(dims)}", " ".join(str(x) for x in dims),
                 " ".join(repr(float(x)) for x in cvec)]
        for k, b in enumerate(self.blocks, start=1):
            if b.const is not None:
                r, c = np.nonzero(np.triu(b.const))
                for i, j in zip(r, c):
                    lines.append(f"0 {k} {i + 1} {j + 1} {-b.const[i, j]!r}")
            for v, i, j, x in zip(b.var, b.row, b.col, b.val):
                lines.append(f"{v + 1} {k} {i + 1} {j + 1} {x!r}")
        if p:
            k = len(self.blocks) + 1
            for i in range(p):
                lo, hi = E.indptr[i], E.indptr[i + 1]
                for j, x in zip(E.indices[lo:hi], E.data[lo:hi]):
                    lines.append(f"{j + 1} {k} {2 * i + 1} {2 * i + 1} {x!r}")
                    lines.append(f"{j + 1} {k} {2 * i + 2} {2 * i + 2} {-x!r}")
                if self.eq_rhs[i] != 0:
                    lines.append(f"0 {k} {2 * i + 1} {2 * i + 1} {self.eq_rhs[i]!r}")
                    lines.append(f"0 {k} {2 * i + 2} {2 * i + 2} {-self.eq_rhs[i]!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


@dataclass
class Tolerances:
    gap: float = 1e-9
    feas: float = 1e-9
    max_iter: int = 200
    step: float = 0.98


@dataclass
class SdpSolution:
    status: str
    y: np.ndarray
    X: list[np.ndarray]
    lam: np.ndarray
    primal_obj: float
    dual_obj: float
    gap: float
    rel_gap: float
    primal_infeas: float
    dual_infeas: float
    iterations: int
    seconds: float
    history: list[dict] = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.primal_obj


# ---------------------------------------------------------------------------
# internal machinery


class _Operator:
    """Precomputed index structure for one instance."""

    def __init__(self, inst: SdpInstance):
        self.inst = inst
        m = inst.n_vars
        self.full = []
        for blk in inst.blocks:
            off = blk.row != blk.col
            r = np.concatenate([blk.row, blk.col[off]])
            c = np.concatenate([blk.col, blk.row[off]])
            v = np.concatenate([blk.val, blk.val[off]])
            j = np.concatenate([blk.var, blk.var[off]])
            order = np.argsort(j, kind="stable")
            self.full.append((r[order], c[order], v[order], j[order]))
        adj = sp.lil_matrix((m, m))
        used = np.zeros(m, dtype=bool)
        for blk in inst.blocks:
            vs = np.unique(blk.var)
            used[vs] = True
            if len(vs) > 1:
                adj[vs[0], vs[1:]] = 1
        if not used.all():
            raise ValueError("every variable must appear in at least one PSD block")
        _, labels = connected_components(adj.tocsr(), directed=False)
        self.components = [np.flatnonzero(labels == k) for k in range(labels.max() + 1)]
        self.local = np.empty(m, dtype=np.int64)
        self.comp_of = labels
        for idx in self.components:
            self.local[idx] = np.arange(len(idx))
        self.block_comp = [labels[blk.var[0]] if len(blk.var) else -1 for blk in inst.blocks]
        self.gather = []
        self.buckets = []
        for (r, c, v, j), blk, comp in zip(self.full, inst.blocks, self.block_comp):
            size = len(self.components[comp]) if comp >= 0 else 0
            self.gather.append(sp.csr_matrix((v, (self.local[j], r * blk.dim + c)),
                                             shape=(size, blk.dim * blk.dim)))
            starts = np.flatnonzero(np.r_[True, j[1:] != j[:-1]]) if len(j) else np.zeros(0, int)
            counts = np.diff(np.r_[starts, len(j)])
            groups = []
            for s in np.unique(counts):
                sel = starts[counts == s]
                pos = sel[:, None] + np.arange(s)[None, :]
                groups.append((self.local[j[sel]], r[pos], c[pos], v[pos]))
            self.buckets.append(groups)

    def schur(self, W: list[np.ndarray], budget: float = 1.5e7) -> list[np.ndarray]:
        """Per-component blocks of ``M_ij = sum_k <F_ik, W_k F_jk W_k>``.

        ``W F_j W`` is the product of an ``n x s_j`` and an ``s_j x n`` factor
        (``s_j`` = number of entries of ``F_j``); variables are bucketed by
        ``s_j`` so each bucket is one batched matrix product.
        """
        Ms = [np.zeros((len(idx), len(idx))) for idx in self.components]
        for buckets, PT, Wk, comp in zip(self.buckets, self.gather, W, self.block_comp):
            if comp < 0:
                continue
            n = Wk.shape[0]
            M = Ms[comp]
            for cols, R, C, V in buckets:
                k, s = R.shape
                step = max(1, int(budget // (n * max(n, s))))
                for lo in range(0, k, step):
                    hi = min(k, lo + step)
                    U = Wk[:, R[lo:hi]].transpose(1, 0, 2) * V[lo:hi, None, :]
                    Z = np.matmul(U, Wk[C[lo:hi], :])
                    M[:, cols[lo:hi]] += PT @ Z.reshape(hi - lo, n * n).T
        return Ms

def _sym(A):
    return 0.5 * (A + A.T)


def _factor(X: np.ndarray) -> np.ndarray:
    """Some ``L`` with ``L L^T = X`` (Cholesky, or eigen-factor if X is nearly singular)."""
    try:
        return np.linalg.cholesky(_sym(X))
    except np.linalg.LinAlgError:
        lam, Q = np.linalg.eigh(_sym(X))
        return Q * np.sqrt(np.maximum(lam, 1e-300 + 1e-30 * lam[-1]))[None, :]


def _max_step(D: np.ndarray, dH: np.ndarray) -> float:
    """Largest alpha with diag(D) + alpha*dH >= 0 (D > 0)."""
    s = 1.0 / np.sqrt(D)
    lam = np.linalg.eigvalsh(_sym(dH * s[:, None] * s[None, :]))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _chol(M: np.ndarray):
    scale = max(np.max(np.abs(np.diag(M))), 1e-300)
    jitter = 0.0
    for _ in range(8):
        try:
            return sla.cho_factor(M + jitter * scale * np.eye(len(M)), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            jitter = 1e-14 if jitter == 0 else jitter * 100
    raise np.linalg.LinAlgError("Schur complement not positive definite")


def _independent_rows(E: sp.csr_matrix, e: np.ndarray, pivot_tol: float = 1e-12):
    """Drop empty, duplicated and linearly dependent equality rows.

    Dependent rows must be consistent; otherwise the problem is infeasible
    and a ValueError is raised.
    """
    E = sp.csr_matrix(E)
    norms = np.sqrt(np.asarray(E.multiply(E).sum(axis=1)).ravel())
    keep = np.flatnonzero(norms > 0)
    if np.any((norms == 0) & (np.abs(e) > pivot_tol)):
        raise ValueError("inconsistent equality: 0 = nonzero")
    if len(keep) == 0:
        return keep
    D = E[keep].toarray()
    e = e[keep]
    Q, R, piv = sla.qr(D.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > pivot_tol * max(diag[0], 1.0)))
    rows = np.sort(piv[:rank])
    if rank < D.shape[0]:
        sol, *_ = np.linalg.lstsq(D[rows].T, D.T, rcond=None)
        if np.max(np.abs(sol.T @ e[rows] - e)) > 1e-8 * (1 + np.max(np.abs(e))):
            raise ValueError("inconsistent dependent equality constraints")
    return keep[rows]


class _Reduced(SdpInstance):
    """Internal instance after elimination; may have no equality rows left."""

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.eq_matrix = sp.csr_matrix(self.eq_matrix)
        self.eq_rhs = np.asarray(self.eq_rhs, dtype=float)


def _eliminate(inst: SdpInstance, tol: float = 1e-12):
    """Substitute out equality rows with one or two nonzeros.

    Such rows say ``y_i = const`` or ``y_i = a y_j + b``.  They are resolved
    with an affine union-find, so that ``y = T z + t`` over the surviving
    free variables ``z``.  Rows with more terms are kept, rewritten in ``z``.

    Returns
    -------
    reduced : _Reduced
        Instance in the variables ``z``.
    T : scipy.sparse.csr_matrix
    t : numpy.ndarray
    elim_rows, kept_rows : numpy.ndarray
        Row indices of the original equality matrix.

    Raises
    ------
    ValueError
        If the short rows are mutually inconsistent.
    """
    E = inst.eq_matrix.tocsr()
    m = inst.n_vars
    parent = list(range(m))
    coef = [1.0] * m      # y_i = coef_i * y_parent + shift_i
    shift = [0.0] * m
    fixed: dict[int, float] = {}

    def find(i):
        a, b = 1.0, 0.0
        path = []
        while parent[i] != i:
            path.append(i)
            i = parent[i]
        root = i
        # compress: walk back from the node nearest the root
        for node in reversed(path):
            p = parent[node]
            if p != root:
                coef[node], shift[node] = coef[node] * coef[p], coef[node] * shift[p] + shift[node]
                parent[node] = root
        return root

    def resolve(i):
        r = find(i)
        return r, (coef[i] if i != r else 1.0), (shift[i] if i != r else 0.0)

    def fix(root, value):
        if root in fixed:
            if abs(fixed[root] - value) > 1e-9 * (1 + abs(value)):
                raise ValueError("inconsistent equality constraints")
        else:
            fixed[root] = value

    elim, kept = [], []
    for k in range(E.shape[0]):
        lo, hi = E.indptr[k], E.indptr[k + 1]
        idx, val = E.indices[lo:hi], E.data[lo:hi]
        nz = np.abs(val) > 0
        idx, val = idx[nz], val[nz]
        rhs = float(inst.eq_rhs[k])
        if len(idx) == 0:
            if abs(rhs) > tol:
                raise ValueError("inconsistent equality: 0 = nonzero")
            elim.append(k)
            continue
        if len(idx) > 2:
            kept.append(k)
            continue
        elim.append(k)
        # collect sum_j w_j y_root_j + const = rhs over distinct free roots
        terms: dict[int, float] = {}
        const = 0.0
        for i, v in zip(idx, val):
            r, a, b = resolve(int(i))
            const += v * b
            if r in fixed:
                const += v * a * fixed[r]
            else:
                terms[r] = terms.get(r, 0.0) + v * a
        terms = {r: w for r, w in terms.items() if abs(w) > tol}
        if not terms:
            if abs(rhs - const) > 1e-9 * (1 + abs(rhs)):
                raise ValueError("inconsistent equality constraints")
        elif len(terms) == 1:
            (r, w), = terms.items()
            fix(r, (rhs - const) / w)
        else:
            (r1, w1), (r2, w2) = sorted(terms.items())
            # attach the larger index to the smaller: y_r2 = (rhs - const - w1 y_r1) / w2
            parent[r2] = r1
            coef[r2] = -w1 / w2
            shift[r2] = (rhs - const) / w2

    cols = {}
    Ti, Tj, Tv = [], [], []
    t = np.zeros(m)
    for i in range(m):
        r, a, b = resolve(i)
        if r in fixed:
            t[i] = a * fixed[r] + b
        else:
            if r not in cols:
                cols[r] = len(cols)
            Ti.append(i)
            Tj.append(cols[r])
            Tv.append(a)
            t[i] = b
    n = len(cols)
    T = sp.csr_matrix((Tv, (Ti, Tj)), shape=(m, n))

    blocks = []
    for blk in inst.blocks:
        const = np.zeros((blk.dim, blk.dim)) if blk.const is None else blk.const.copy()
        w = blk.val * t[blk.var]
        np.add.at(const, (blk.row, blk.col), w)
        off = blk.row != blk.col
        np.add.at(const, (blk.col[off], blk.row[off]), w[off])
        sub = T[blk.var]
        sub = sub.tocoo()
        # entries of this block in the new variables, duplicates summed
        rows, cols_, vals = blk.row[sub.row], blk.col[sub.row], blk.val[sub.row] * sub.data
        key = sp.coo_matrix((vals, (sub.col, rows * blk.dim + cols_)),
                            shape=(n, blk.dim * blk.dim)).tocsr()
        key.sum_duplicates()
        key.eliminate_zeros()
        kc = key.tocoo()
        blocks.append(SdpBlock(blk.dim, kc.row, kc.col // blk.dim, kc.col % blk.dim, kc.data,
                               const=const))
    kept = np.asarray(kept, dtype=np.int64)
    Ek = E[kept] @ T
    ek = inst.eq_rhs[kept] - E[kept] @ t
    reduced = _Reduced(blocks, n, T.T @ inst.objective, Ek, ek, inst.maximize)
    return reduced, T, t, np.asarray(elim, dtype=np.int64), kept


def solve(inst: SdpInstance, tol: Tolerances | None = None, verbose: bool = False) -> SdpSolution:
    """Solve ``inst`` to the requested relative gap and feasibility.

    Equality rows with at most two terms are first substituted out, which
    removes the usual source of ill-conditioning in the reduced KKT system
    (moment problems are dominated by such identifications).  The multipliers
    of the substituted rows are recovered afterwards by least squares, and all
    residuals reported in the result refer to the original instance.

    Raises
    ------
    ValueError
        If the equality constraints are inconsistent.
    """
    t0 = time.perf_counter()
    tol = tol or Tolerances()
    reduced, T, t, elim, kept = _eliminate(inst)
    if reduced.n_vars == 0:
        # everything is fixed by the equalities: solve the instance as given
        reduced, T, t = inst, sp.identity(inst.n_vars, format="csr"), np.zeros(inst.n_vars)
        elim, kept = np.zeros(0, dtype=np.int64), np.arange(inst.eq_matrix.shape[0])
    offset = float(inst.objective @ t)
    sol = _solve_core(reduced, tol, verbose, offset)
    sgn = 1.0 if inst.maximize else -1.0
    c = sgn * inst.objective
    y = T @ sol.y + t
    lam = np.zeros(inst.eq_matrix.shape[0])
    lam[kept] = sol.lam
    E = inst.eq_matrix
    r0 = -c - inst.adjoint(sol.X) + E.T @ lam
    if len(elim) and np.any(r0):
        Ee = E[elim].T.tocsc()
        res = spla.lsqr(Ee, -r0, atol=1e-16, btol=1e-16, iter_lim=50 * len(elim) + 100)
        lam[elim] = res[0]
    # report residuals in the original coordinates
    S = inst.slack(y)
    ry = -c - inst.adjoint(sol.X) + E.T @ lam
    re = inst.eq_rhs - E @ y
    normc = 1.0 + np.linalg.norm(c, np.inf)
    norme = 1.0 + np.linalg.norm(inst.eq_rhs, np.inf)
    pinf = max(max((max(0.0, -float(np.linalg.eigvalsh(Sk)[0])) for Sk in S), default=0.0),
               float(np.max(np.abs(re)))) / norme
    dinf = float(np.max(np.abs(ry))) / normc
    sol.y, sol.lam = y, lam
    sol.primal_infeas, sol.dual_infeas = pinf, dinf
    sol.seconds = time.perf_counter() - t0
    return sol


def _solve_core(inst: SdpInstance, tol: Tolerances, verbose: bool, offset: float) -> SdpSolution:
    t0 = time.perf_counter()
    op = _Operator(inst)
    sgn = 1.0 if inst.maximize else -1.0
    c = sgn * inst.objective
    off = sgn * offset
    rows = _independent_rows(inst.eq_matrix, inst.eq_rhs)
    E, e = inst.eq_matrix[rows], inst.eq_rhs[rows]
    ET = E.T.tocsr()
    dims = [b.dim for b in inst.blocks]
    N = sum(dims)
    m = inst.n_vars

    normc = 1.0 + np.linalg.norm(c, np.inf)
    norme = 1.0 + (np.linalg.norm(e, np.inf) if len(e) else 0.0)
    xi = max(1.0, normc)
    X = [xi * np.eye(n) for n in dims]
    Z = [np.eye(n) for n in dims]
    y = np.zeros(m)
    lam = np.zeros(E.shape[0])
    history = []
    status = INACCURATE
    it = 0
    best = None

    def residuals(X, Z, y, lam):
        S = inst.slack(y)
        RZ = [Sk - Zk for Sk, Zk in zip(S, Z)]
        ry = -c - inst.adjoint(X) + ET @ lam
        re = e - E @ y
        return RZ, ry, re

    for it in range(tol.max_iter + 1):
        RZ, ry, re = residuals(X, Z, y, lam)
        gap = sum(float(np.vdot(Xk, Zk)) for Xk, Zk in zip(X, Z))
        pobj = float(c @ y) + off
        dobj = inst.const_dot(X) + float(e @ lam) + off
        rel_gap = abs(dobj - pobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = max((np.max(np.abs(R)) for R in RZ), default=0.0)
        pinf = max(pinf, float(np.max(np.abs(re))) if len(re) else 0.0) / norme
        dinf = float(np.max(np.abs(ry))) / normc
        history.append({"iter": it, "primal_obj": sgn * pobj, "dual_obj": sgn * dobj,
                        "gap": gap, "primal_infeas": pinf, "dual_infeas": dinf})
        if verbose:
            logger.info("it %3d pobj % .10e dobj % .10e gap %.2e pinf %.2e dinf %.2e",
                        it, pobj, dobj, gap, pinf, dinf)
        score = max(rel_gap, pinf, dinf)
        if best is None or score < best[0]:
            best = (score, [x.copy() for x in X], y.copy(), lam.copy(), it)
        if rel_gap <= tol.gap and gap / (1 + abs(pobj) + abs(dobj)) <= 10 * tol.gap \
                and pinf <= tol.feas and dinf <= tol.feas:
            status = OPTIMAL
            break
        if it == tol.max_iter:
            break
        if it - best[4] >= 8:
            # no progress on the combined residual for a while
            logger.info("stalled at iteration %d", it)
            break
        # a diverging certificate, far from any near-optimal iterate, indicates
        # an infeasible moment problem
        xnorm = max(np.max(np.abs(Xk)) for Xk in X)
        if xnorm > 1e12 and best[0] > 1e-6 and abs(dobj) / xnorm > 1e-9:
            status = INFEASIBLE
            break
        try:
            mu = gap / N
            Gs, Ds = [], []
            for Xk, Zk in zip(X, Z):
                L = _factor(Xk)
                d2, U = np.linalg.eigh(_sym(L.T @ Zk @ L))
                d2 = np.maximum(d2, 1e-300)
                d = np.sqrt(d2)
                Gs.append(L @ U / np.sqrt(d)[None, :])
                Ds.append(d)
            W = [Gk @ Gk.T for Gk in Gs]
            Ms = op.schur(W)
            facs = [_chol(Mc) for Mc in Ms]

            def msolve(rhs):
                out = np.empty_like(rhs)
                for idx, f in zip(op.components, facs):
                    out[idx] = sla.cho_solve(f, rhs[idx], check_finite=False)
                return out

            if E.shape[0]:
                MinvET = msolve(E.T.toarray())
                Sred = E @ MinvET
                fred = _chol(_sym(Sred))
            RZh = [Gk.T @ R @ Gk for Gk, R in zip(Gs, RZ)]

            def mmul(v):
                out = np.empty_like(v)
                for idx, Mc in zip(op.components, Ms):
                    out[idx] = Mc @ v[idx]
                return out

            def kkt_once(h, r):
                if not E.shape[0]:
                    return msolve(h), np.zeros(0)
                u = msolve(h)
                dlam = sla.cho_solve(fred, E @ u - r, check_finite=False)
                return u - MinvET @ dlam, dlam

            def kkt_solve(h, r, rounds=3):
                # [M E^T; E 0] [dy; dlam] = [h; r] with iterative refinement
                dy, dlam = kkt_once(h, r)
                for _ in range(rounds):
                    rh = h - mmul(dy) - ET @ dlam
                    rr = r - E @ dy
                    if max(np.max(np.abs(rh)), np.max(np.abs(rr), initial=0.0)) <= \
                            1e-15 * (1 + np.max(np.abs(h))):
                        break
                    ddy, ddl = kkt_once(rh, rr)
                    dy, dlam = dy + ddy, dlam + ddl
                return dy, dlam

            def direction(Rch):
                # Rch is the scaled complementarity right-hand side
                T = [Gk @ (Rc - Rz) @ Gk.T for Gk, Rc, Rz in zip(Gs, Rch, RZh)]
                h = inst.adjoint(T) - ry
                dy, dlam = kkt_solve(h, re)
                dZ = [dS + R for dS, R in zip(inst.slack(dy, const=False), RZ)]
                dZh = [_sym(Gk.T @ dz @ Gk) for Gk, dz in zip(Gs, dZ)]
                dXh = [_sym(Rc - dz) for Rc, dz in zip(Rch, dZh)]
                return dy, dlam, dXh, dZh, dZ

            def steps(dXh, dZh):
                ap = min(_max_step(D, dx) for D, dx in zip(Ds, dXh))
                ad = min(_max_step(D, dz) for D, dz in zip(Ds, dZh))
                return ap, ad

            # predictor
            Rc_aff = [-np.diag(D) for D in Ds]
            dy, dlam, dXh, dZh, _ = direction(Rc_aff)
            ap, ad = steps(dXh, dZh)
            ap, ad = min(1.0, ap), min(1.0, ad)
            gap_aff = sum(float(np.sum((np.diag(D) + ap * dx) * (np.diag(D) + ad * dz)))
                          for D, dx, dz in zip(Ds, dXh, dZh))
            sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3 if gap > 0 else 0.0
            # corrector
            Rc = []
            for D, dx, dz in zip(Ds, dXh, dZh):
                R = sigma * mu * np.eye(len(D)) - np.diag(D * D) - _sym(dx @ dz)
                Rc.append(2.0 * R / (D[:, None] + D[None, :]))
            dy, dlam, dXh, dZh, dZ = direction(Rc)
            ap, ad = steps(dXh, dZh)
            gamma = max(tol.step, 0.9 + 0.09 * min(ap, ad)) if np.isfinite(min(ap, ad)) else tol.step
            ap, ad = min(1.0, gamma * ap), min(1.0, gamma * ad)
            X = [_sym(Xk + ap * (Gk @ dx @ Gk.T)) for Xk, Gk, dx in zip(X, Gs, dXh)]
            lam = lam + ap * dlam
            y = y + ad * dy
            Z = [_sym(Zk + ad * dz) for Zk, dz in zip(Z, dZ)]
        except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
            logger.warning("numerical breakdown at iteration %d: %s", it, exc, exc_info=verbose)
            status = FAILED
            break

    if status in (INACCURATE, FAILED) and best is not None:
        _, X, y, lam, _ = best
        Z = inst.slack(y)
        RZ, ry, re = residuals(X, Z, y, lam)
        gap = sum(float(np.vdot(Xk, Zk)) for Xk, Zk in zip(X, Z))
        pobj = float(c @ y) + off
        dobj = inst.const_dot(X) + float(e @ lam) + off
        rel_gap = abs(dobj - pobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = max((np.max(np.abs(R)) for R in RZ), default=0.0)
        pinf = max(pinf, float(np.max(np.abs(re))) if len(re) else 0.0) / norme
        dinf = float(np.max(np.abs(ry))) / normc
        if status == FAILED and max(rel_gap, pinf, dinf) < 1e-6:
            status = INACCURATE
    lam_full = np.zeros(inst.eq_matrix.shape[0])
    lam_full[rows] = lam
    return SdpSolution(status=status, y=y, X=X, lam=lam_full,
                       primal_obj=sgn * pobj, dual_obj=sgn * dobj, gap=gap, rel_gap=rel_gap,
                       primal_infeas=pinf, dual_infeas=dinf, iterations=it,
                       seconds=time.perf_counter() - t0, history=history)


@dataclass
class Verification:
    ok: bool
    primal_min_eig: float
    dual_min_eig: float
    eq_residual: float
    stationarity_residual: float
    gap: float
    violations: list[str]
    certified_upper_bound: float | None = None


def verify(inst: SdpInstance, sol: SdpSolution, tol: Tolerances | None = None,
           factor: float = 10.0) -> Verification:
    """Recompute every residual of ``sol`` from scratch.

    Nothing computed inside the solver is reused: slacks, eigenvalue floors,
    equality and stationarity residuals and the objective gap are evaluated
    directly from the instance data.  Any quantity above ``factor`` times its
    tolerance is reported by name.
    """
    tol = tol or Tolerances()
    sgn = 1.0 if inst.maximize else -1.0
    c = sgn * inst.objective
    y = np.asarray(sol.y, dtype=float)
    violations = []

    S = inst.slack(y)
    pmin = min((float(np.linalg.eigvalsh(Sk)[0]) for Sk in S), default=0.0)
    for k, Sk in enumerate(S):
        ev = float(np.linalg.eigvalsh(Sk)[0])
        if ev < -factor * tol.feas * max(1.0, np.max(np.abs(Sk))):
            violations.append(f"block {k} slack not PSD (min eig {ev:.3e})")
    eqr = inst.eq_matrix @ y - inst.eq_rhs
    eq_res = float(np.max(np.abs(eqr))) if len(eqr) else 0.0
    if eq_res > factor * tol.feas * (1 + np.max(np.abs(inst.eq_rhs))):
        violations.append(f"equality {int(np.argmax(np.abs(eqr)))} violated by {eq_res:.3e}")

    dmin = min((float(np.linalg.eigvalsh(_sym(Xk))[0]) for Xk in sol.X), default=0.0)
    for k, Xk in enumerate(sol.X):
        ev = float(np.linalg.eigvalsh(_sym(Xk))[0])
        if ev < -factor * tol.feas * max(1.0, np.max(np.abs(Xk))):
            violations.append(f"certificate block {k} not PSD (min eig {ev:.3e})")
    st = inst.adjoint(sol.X) - inst.eq_matrix.T @ sol.lam + c
    st_res = float(np.max(np.abs(st)))
    if st_res > factor * tol.feas * (1 + np.max(np.abs(c))):
        violations.append(f"stationarity of variable {int(np.argmax(np.abs(st)))} off by {st_res:.3e}")

    pobj = float(c @ y)
    dobj = inst.const_dot(sol.X) + float(inst.eq_rhs @ sol.lam)
    gap = dobj - pobj
    if abs(gap) > factor * tol.gap * (1 + abs(pobj) + abs(dobj)):
        violations.append(f"duality gap {gap:.3e}")
    return Verification(ok=not violations, primal_min_eig=pmin, dual_min_eig=dmin,
                        eq_residual=eq_res, stationarity_residual=st_res, gap=gap,
                        violations=violations)
