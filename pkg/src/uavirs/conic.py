"""Small conic modeling layer with a Clarabel backend.

A :class:`ConicProgram` holds a real decision vector, a linear objective and
constraints expressed with affine expressions (:class:`Lin`).  Supported cone
memberships are zero (equality), nonnegative, second-order, rotated
second-order (lowered to second-order), real symmetric PSD and exponential.
Complex Hermitian PSD variables are lowered through the real embedding
``[[Re, -Im], [Im, Re]]``.

Plain-text dump format (``ConicProgram.to_text``)::

    conic-program 1
    variables <n>
    var <index> <name>                 # one line per variable
    minimize <affine>
    cone <kind> <name> <dim>           # kind in zero|nonneg|soc|exp|psd
      <affine>                         # one line per cone row
    end

where ``<affine>`` is ``<const> [<index>:<coef> ...]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

STATUSES = ("optimal", "infeasible", "unbounded", "max_iter", "numerical_failure")


class ConicError(ValueError):
    pass


class Lin:
    """Affine expression ``const + sum coef[i] * x[i]``."""

    __slots__ = ("coef", "const")

    def __init__(self, coef: dict | None = None, const: float = 0.0):
        self.coef = coef if coef is not None else {}
        self.const = float(const)

    @staticmethod
    def var(index: int) -> "Lin":
        return Lin({index: 1.0})

    def copy(self) -> "Lin":
        return Lin(dict(self.coef), self.const)

    def __add__(self, other):
        if isinstance(other, Lin):
            c = dict(self.coef)
            for k, v in other.coef.items():
                c[k] = c.get(k, 0.0) + v
            return Lin(c, self.const + other.const)
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Lin(dict(self.coef), self.const + float(other))
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Lin({k: -v for k, v in self.coef.items()}, -self.const)

    def __sub__(self, other):
        if isinstance(other, (Lin, int, float, np.floating, np.integer)):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, a):
        if isinstance(a, (int, float, np.floating, np.integer)):
            a = float(a)
            return Lin({k: a * v for k, v in self.coef.items()}, a * self.const)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1.0 / float(a))

    def value(self, x: np.ndarray) -> float:
        return self.const + sum(v * x[k] for k, v in self.coef.items())

    def __repr__(self):
        return f"Lin({self.const!r}, {self.coef!r})"


def as_lin(e) -> Lin:
    if isinstance(e, Lin):
        return e
    return Lin({}, float(e))


def lin_sum(terms: Iterable, const: float = 0.0) -> Lin:
    """Sum of ``Lin`` / numbers, or of ``(coef, Lin)`` pairs, without copies per step."""
    c: dict = {}
    k = float(const)
    for t in terms:
        a = 1.0
        if isinstance(t, tuple):
            a, t = t
            a = float(a)
        if isinstance(t, Lin):
            for i, v in t.coef.items():
                c[i] = c.get(i, 0.0) + a * v
            k += a * t.const
        else:
            k += a * float(t)
    return Lin(c, k)


def value(e, x: np.ndarray):
    """Evaluate a ``Lin``, a number, or an object array of them at ``x``."""
    if isinstance(e, np.ndarray) and e.dtype == object:
        return np.vectorize(lambda t: as_lin(t).value(x), otypes=[float])(e)
    return as_lin(e).value(x)


@dataclass
class Constraint:
    kind: str          # zero | nonneg | soc | exp | psd
    rows: list         # list of Lin; cone applies to the stacked row values
    name: str
    dim: int = 0       # matrix side for psd


@dataclass
class HermitianVar:
    """Complex Hermitian matrix variable ``V = re + 1j * im`` (object arrays of Lin)."""
    re: np.ndarray
    im: np.ndarray

    @property
    def n(self) -> int:
        return self.re.shape[0]

    def inner(self, H: np.ndarray) -> Lin:
        """``Re Tr(H V)`` for a Hermitian constant ``H``."""
        n = self.n
        terms = []
        for a in range(n):
            for b in range(n):
                h = H[a, b]
                if h.real != 0.0:
                    terms.append((h.real, self.re[b, a]))
                if h.imag != 0.0:
                    terms.append((-h.imag, self.im[b, a]))
        return lin_sum(terms)

    def trace(self) -> Lin:
        return lin_sum(self.re[i, i] for i in range(self.n))

    def value(self, x: np.ndarray) -> np.ndarray:
        return value(self.re, x) + 1j * value(self.im, x)


class ConicProgram:
    def __init__(self, name: str = "program"):
        self.name = name
        self.n = 0
        self.var_names: list[str] = []
        self.constraints: list[Constraint] = []
        self.objective = Lin()

    # -- variables ---------------------------------------------------------
    def var(self, shape=(), name: str = "x"):
        """Declare variables; returns a ``Lin`` (scalar) or an object array of them."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        size = int(np.prod(shape)) if shape else 1
        start = self.n
        self.n += size
        if shape:
            out = np.empty(size, dtype=object)
            for t in range(size):
                out[t] = Lin.var(start + t)
                self.var_names.append(f"{name}[{t}]")
            return out.reshape(shape)
        self.var_names.append(name)
        return Lin.var(start)

    def symmetric(self, n: int, name: str = "S") -> np.ndarray:
        out = np.empty((n, n), dtype=object)
        for j in range(n):
            for i in range(j + 1):
                v = self.var((), f"{name}[{i},{j}]")
                out[i, j] = out[j, i] = v
        return out

    def hermitian_psd(self, n: int, name: str = "V") -> HermitianVar:
        """Complex Hermitian PSD variable lowered to a ``2n`` real PSD block."""
        re = self.symmetric(n, name + ".re")
        im = np.empty((n, n), dtype=object)
        for i in range(n):
            im[i, i] = Lin()
        for j in range(n):
            for i in range(j):
                v = self.var((), f"{name}.im[{i},{j}]")
                im[i, j] = v
                im[j, i] = -v
        big = np.empty((2 * n, 2 * n), dtype=object)
        big[:n, :n] = re
        big[n:, n:] = re
        big[n:, :n] = im
        big[:n, n:] = np.vectorize(lambda t: -t, otypes=[object])(im)
        self.psd(big, name)
        return HermitianVar(re, im)

    # -- constraints -------------------------------------------------------
    def _add(self, kind, rows, name, dim=0):
        rows = [as_lin(r) for r in rows]
        for r in rows:
            for k in r.coef:
                if not 0 <= k < self.n:
                    raise ConicError(f"constraint {name!r} references undeclared variable {k}")
        self.constraints.append(Constraint(kind, rows, name or f"c{len(self.constraints)}", dim))

    def eq(self, a, b=0.0, name: str | None = None):
        """``a == b`` (elementwise for arrays)."""
        for t in np.ravel(np.asarray(a, dtype=object) - np.asarray(b, dtype=object)):
            self._add("zero", [t], name)

    def le(self, a, b, name: str | None = None):
        """``a <= b`` (elementwise for arrays)."""
        diff = np.ravel(np.asarray(b, dtype=object) - np.asarray(a, dtype=object))
        self._add("nonneg", list(diff), name)

    def ge(self, a, b, name: str | None = None):
        self.le(b, a, name)

    def soc(self, t, xs: Sequence, name: str | None = None):
        """``||xs||_2 <= t``."""
        self._add("soc", [t] + list(xs), name)

    def rsoc(self, y, z, xs: Sequence, name: str | None = None):
        """``sum(xs^2) <= y * z`` with ``y, z >= 0``."""
        y = as_lin(y)
        z = as_lin(z)
        self._add("soc", [y + z, y - z] + [2.0 * as_lin(x) for x in xs], name)

    def exp_cone(self, x, y, z, name: str | None = None):
        """``y * exp(x / y) <= z`` with ``y > 0``."""
        self._add("exp", [x, y, z], name)

    def log_ge(self, t, a, name: str | None = None):
        """Log-affine epigraph ``t <= log(a)``."""
        self.exp_cone(t, 1.0, a, name)

    def exp_le(self, x, t, name: str | None = None):
        """``exp(x) <= t``."""
        self.exp_cone(x, 1.0, t, name)

    def psd(self, mat, name: str | None = None):
        mat = np.asarray(mat, dtype=object)
        n = mat.shape[0]
        if mat.shape != (n, n):
            raise ConicError("PSD block must be square")
        rows = []
        for j in range(n):
            for i in range(j + 1):
                e = as_lin(mat[i, j])
                rows.append(e if i == j else e * math.sqrt(2.0))
        self._add("psd", rows, name, n)

    def minimize(self, obj):
        self.objective = as_lin(obj)

    def maximize(self, obj):
        self.objective = -as_lin(obj)

    # -- lowering ----------------------------------------------------------
    def lower(self):
        """``(q, A, b, cones, c0)`` for ``min q.x + c0  s.t.  b - A x in cones``."""
        import clarabel

        q = np.zeros(self.n)
        for k, v in self.objective.coef.items():
            q[k] += v
        ri, ci, vals, b, cones = [], [], [], [], []
        r = 0
        for con in self.constraints:
            for e in con.rows:
                for k, v in e.coef.items():
                    if v != 0.0:
                        ri.append(r)
                        ci.append(k)
                        vals.append(-v)
                b.append(e.const)
                r += 1
            m = len(con.rows)
            if con.kind == "zero":
                cones.append(clarabel.ZeroConeT(m))
            elif con.kind == "nonneg":
                cones.append(clarabel.NonnegativeConeT(m))
            elif con.kind == "soc":
                cones.append(clarabel.SecondOrderConeT(m))
            elif con.kind == "exp":
                cones.append(clarabel.ExponentialConeT())
            elif con.kind == "psd":
                cones.append(clarabel.PSDTriangleConeT(con.dim))
        A = sparse.csc_matrix((vals, (ri, ci)), shape=(r, self.n))
        return q, A, np.array(b, float), cones, self.objective.const

    def to_text(self) -> str:
        def fmt(e: Lin) -> str:
            parts = [repr(e.const)] + [f"{k}:{v!r}" for k, v in sorted(e.coef.items())]
            return " ".join(parts)

        out = ["conic-program 1", f"variables {self.n}"]
        out += [f"var {i} {nm}" for i, nm in enumerate(self.var_names)]
        out.append(f"minimize {fmt(self.objective)}")
        for con in self.constraints:
            out.append(f"cone {con.kind} {con.name} {con.dim or len(con.rows)}")
            out += ["  " + fmt(e) for e in con.rows]
        out.append("end")
        return "\n".join(out) + "\n"


# -- residuals -----------------------------------------------------------------

@dataclass(frozen=True)
class Residual:
    name: str
    kind: str
    violation: float   # signed; <= 0 means satisfied
    scale: float       # magnitude of the constraint's row values


def _cone_violation(kind: str, vals: np.ndarray, dim: int) -> float:
    if kind == "zero":
        return float(np.max(np.abs(vals)))
    if kind == "nonneg":
        return float(np.max(-vals))
    if kind == "soc":
        return float(np.linalg.norm(vals[1:]) - vals[0])
    if kind == "exp":
        x, y, z = vals
        if y > 0:
            ratio = x / y
            if ratio > 700:
                return float("inf")
            return float(y * math.exp(ratio) - z)
        return float(max(-y, x, -z)) if y < 0 or x > 0 or z < 0 else 0.0
    if kind == "psd":
        S = np.zeros((dim, dim))
        t = 0
        for j in range(dim):
            for i in range(j + 1):
                S[i, j] = S[j, i] = vals[t] if i == j else vals[t] / math.sqrt(2.0)
                t += 1
        return float(-np.linalg.eigvalsh(S)[0])
    raise ConicError(f"unknown cone {kind}")


def residuals(program: ConicProgram, point) -> list[Residual]:
    """Signed cone violation of every constraint at ``point``."""
    x = np.asarray(point, float)
    if x.shape != (program.n,):
        raise ConicError(f"point has shape {x.shape}, program has {program.n} variables")
    out = []
    for con in program.constraints:
        vals = np.array([e.value(x) for e in con.rows])
        out.append(Residual(con.name, con.kind, _cone_violation(con.kind, vals, con.dim),
                            float(np.max(np.abs(vals))) if vals.size else 0.0))
    return out


def max_relative_residual(res: Sequence[Residual]) -> float:
    if not res:
        return 0.0
    return max(0.0, max(r.violation / (1.0 + r.scale) for r in res))


# -- solving -------------------------------------------------------------------

@dataclass
class ConicSolution:
    status: str
    x: np.ndarray
    objective: float
    gap: float
    residual: float
    iterations: int = 0
    solve_time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, e):
        return value(e, self.x)


def solve(program: ConicProgram, feas_tol: float = 1e-8, gap_tol: float = 1e-8,
          max_iter: int = 200) -> ConicSolution:
    """Solve with Clarabel.  Never raises on solver trouble; check ``status``.

    ``residual`` is the largest cone violation relative to ``1 + |row values|``;
    ``gap`` is the primal-dual objective gap relative to ``max(1, |objective|)``.
    """
    import clarabel

    try:
        q, A, b, cones, c0 = program.lower()
        st = clarabel.DefaultSettings()
        st.verbose = False
        st.max_iter = int(max_iter)
        st.tol_feas = feas_tol
        st.tol_gap_abs = gap_tol
        st.tol_gap_rel = gap_tol
        st.max_threads = 1
        P = sparse.csc_matrix((program.n, program.n))
        sol = clarabel.DefaultSolver(P, q, A, b, cones, st).solve()
    except Exception as exc:  # backend failure is reported, not raised
        return ConicSolution("numerical_failure", np.full(program.n, np.nan), float("nan"),
                             float("inf"), float("inf"), info={"error": repr(exc)})
    x = np.array(sol.x, float)
    raw = str(sol.status)
    obj = float(sol.obj_val) + c0
    gap = abs(float(sol.obj_val) - float(sol.obj_val_dual)) / max(1.0, abs(obj))
    res = max_relative_residual(residuals(program, x)) if np.all(np.isfinite(x)) else float("inf")
    if raw == "Solved":
        status = "optimal" if (res <= feas_tol and gap <= gap_tol) else "numerical_failure"
    elif raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        status = "infeasible"
    elif raw in ("DualInfeasible", "AlmostDualInfeasible"):
        status = "unbounded"
    elif raw == "MaxIterations":
        status = "max_iter"
    else:
        status = "numerical_failure"
    return ConicSolution(status, x, obj, gap, res, int(sol.iterations), float(sol.solve_time),
                         {"backend": "clarabel", "backend_status": raw})
