"""Fully corrective greedy training of column-sparse multiclass predictors.

Every round picks one feature column (or one group of columns), adds it to
the active set, and re-optimizes all active columns jointly. The model after
round ``t`` reads at most ``t`` features, so one run traces the whole
sparsity/accuracy path.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InputError
from .features import Stump, StumpMap, best_stump
from .model import (
    Dataset,
    Regularizer,
    WeightModel,
    column_scores,
    loss_and_gradient,
    loss_avg,
    mixed_norm,
    scores_loss,
    zero_one_error,
)
from .solver import SmoothObjective, SolverConfig, minimize_smooth

SELECTION_RULES = (
    "grad_l1",
    "best_column_refit",
    "single_column_linesearch",
    "single_column_vector",
)


@dataclass(frozen=True)
class TrainConfig:
    """Options for :func:`shareboost_train`.

    ``rounds`` is the number of greedy rounds T. ``groups`` optionally
    partitions the feature indices; a whole group is added per round.
    Corrective solves stop at a restricted gradient infinity-norm of
    ``corrective_tolerance``; a solve that runs out of iterations but got
    below ``loose_tolerance`` is accepted silently (separable supports have
    no finite minimizer).
    """

    rounds: int = 10
    rule: str = "grad_l1"
    reg: Regularizer = field(default_factory=Regularizer)
    groups: list | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    early_stop_score: float = 1e-10
    corrective_tolerance: float = 1e-8
    loose_tolerance: float = 1e-4

    def __post_init__(self):
        if self.rounds < 1:
            raise InputError("rounds must be at least 1")
        if self.rule not in SELECTION_RULES:
            raise InputError(f"unknown selection rule {self.rule!r}")
        if self.groups is not None and self.rule != "grad_l1":
            raise InputError("group selection supports only the grad_l1 rule")

    def check_groups(self, d):
        if self.groups is None:
            return
        flat = sorted(i for g in self.groups for i in g)
        if flat != list(range(d)) or any(len(g) == 0 for g in self.groups):
            raise InputError("groups must partition the feature indices")

    @property
    def corrective_solver(self) -> SolverConfig:
        return replace(self.solver, tolerance=self.corrective_tolerance)


@dataclass
class RoundRecord:
    round: int
    selected: int
    added: tuple
    score: float
    train_loss: float
    train_err: float
    heldout_err: float | None
    support_size: int
    restricted_grad_l1: float
    converged: bool
    warning: str | None = None


TRACE_COLUMNS = (
    "round",
    "selected_index",
    "score",
    "train_loss",
    "train_err",
    "heldout_err",
    "support_size",
)


@dataclass
class TrainTrace:
    """Per-round history of a training run.

    ``initial_loss`` is the training objective at ``W = 0``.
    """

    initial_loss: float = math.nan
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def losses(self):
        return [r.train_loss for r in self.records]

    @property
    def support_sizes(self):
        return [r.support_size for r in self.records]

    def supports(self):
        """Active index set after each round, in selection order."""
        out, cur = [], []
        for r in self.records:
            cur = cur + [i for i in r.added if i not in cur]
            out.append(list(cur))
        return out

    def to_text(self) -> str:
        buf = io.StringIO()
        buf.write("\t".join(TRACE_COLUMNS) + "\n")
        for r in self.records:
            held = "nan" if r.heldout_err is None else repr(r.heldout_err)
            row = [str(r.round), str(r.selected), repr(r.score), repr(r.train_loss),
                   repr(r.train_err), held, str(r.support_size)]
            buf.write("\t".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "TrainTrace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].split("\t")[: len(TRACE_COLUMNS)] != list(TRACE_COLUMNS):
            raise InputError("not a trace file: header missing")
        trace = cls()
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split("\t")
            if len(parts) < len(TRACE_COLUMNS):
                raise InputError(f"trace line {lineno}: expected {len(TRACE_COLUMNS)} fields")
            try:
                held = float(parts[5])
                trace.records.append(RoundRecord(
                    round=int(parts[0]), selected=int(parts[1]), added=(),
                    score=float(parts[2]), train_loss=float(parts[3]),
                    train_err=float(parts[4]),
                    heldout_err=None if math.isnan(held) else held,
                    support_size=int(parts[6]), restricted_grad_l1=math.nan,
                    converged=True,
                ))
            except ValueError as exc:
                raise InputError(f"trace line {lineno}: {exc}") from None
        return trace

    def path_table(self) -> str:
        """Sparsity/accuracy table, one row per round, read off the trace."""
        buf = io.StringIO()
        buf.write("round\tfeatures\ttrain_loss\ttrain_acc\theldout_acc\n")
        for r in self.records:
            held = "nan" if r.heldout_err is None else f"{1.0 - r.heldout_err:.6f}"
            buf.write(f"{r.round}\t{r.support_size}\t{r.train_loss:.6g}\t"
                      f"{1.0 - r.train_err:.6f}\t{held}\n")
        return buf.getvalue()


# --------------------------------------------------------------------------
# Restricted objectives


def _mixed_norm_offset(reg: Regularizer, k, n_zero_cols):
    """Value a smooth mixed norm assigns to ``n_zero_cols`` all-zero columns."""
    if reg.kind != "smooth_mixed_norm" or not reg.active:
        return 0.0
    return reg.lam * n_zero_cols * math.log(2 * k) / reg.beta


def _collapse_rows(XI, y):
    """Unique ``(row, label)`` pairs of ``(XI, y)`` and their frequencies."""
    key = np.column_stack([XI, y])
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    return uniq[:, :-1], uniq[:, -1].astype(np.int64), counts / len(y)


def restricted_objective(data: Dataset, cols, reg: Regularizer | None = None) -> SmoothObjective:
    """Average loss as a function of the ``k x len(cols)`` active block.

    The parameter vector is the active block flattened row-major. Values
    match :func:`loss_avg` of the full matrix with zeros elsewhere.
    Examples that coincide on the active columns are merged into one
    weighted row.
    """
    reg = reg or Regularizer()
    cols = list(cols)
    k, t = data.k, len(cols)
    XI, y, w = _collapse_rows(data.X[:, cols], data.y)
    offset = _mixed_norm_offset(reg, k, data.d - t)

    def value_and_gradient(theta):
        V = theta.reshape(k, t)
        losses, R = scores_loss(XI @ V.T, y)
        f = float(w @ losses)
        G = (R * w[:, None]).T @ XI
        if reg.active:
            f += reg.value(V) + offset
            G += reg.gradient(V)
        return f, G.reshape(-1)

    def value(theta):
        V = theta.reshape(k, t)
        losses, _ = scores_loss(XI @ V.T, y, with_grad=False)
        f = float(w @ losses)
        if reg.active:
            f += reg.value(V) + offset
        return f

    return SmoothObjective(k * t, value, lambda th: value_and_gradient(th)[1],
                           value_and_gradient)


def corrective_solve(data: Dataset, support, W_init, reg: Regularizer | None = None,
                     cfg: SolverConfig | None = None):
    """Re-optimize all columns in ``support`` jointly, others held at zero.

    Returns ``(W, result)`` where ``result`` is the solver's report (None
    for an empty support). The returned loss never exceeds that of
    ``W_init``.
    """
    reg = reg or Regularizer()
    cols = list(support)
    W_init = np.asarray(W_init, dtype=np.float64)
    outside = np.setdiff1d(np.arange(data.d), cols)
    if np.any(W_init[:, outside] != 0):
        raise InputError("initial matrix has nonzero columns outside the support")
    if not cols:
        return W_init.copy(), None
    obj = restricted_objective(data, cols, reg)
    start = W_init[:, cols].reshape(-1)
    f0 = obj.value(start)
    res = minimize_smooth(obj, start, cfg)
    W = np.zeros_like(W_init)
    if res.value <= f0:
        W[:, cols] = res.point.reshape(data.k, len(cols))
    else:
        W[:, cols] = W_init[:, cols]
        res.point, res.value = start, f0
    return W, res


def _column_objective(data: Dataset, W, r, reg: Regularizer, direction=None):
    """Loss of ``W + w e_r^T`` as a function of ``w`` (or of ``alpha`` when
    ``w = alpha * direction``)."""
    base = data.X @ W.T
    x = data.X[:, r]
    col = W[:, r]
    rest_reg = reg.value(W) - reg.value(col[:, None]) if reg.active else 0.0

    def value_and_gradient(param):
        w = param if direction is None else param[0] * direction
        new_col = col + w
        losses, R = scores_loss(base + np.outer(x, w), data.y)
        f = float(np.mean(losses))
        g = R.T @ x / data.m
        if reg.active:
            f += rest_reg + reg.value(new_col[:, None])
            g = g + reg.gradient(new_col[:, None])[:, 0]
        if direction is not None:
            g = np.array([g @ direction])
        return f, g

    dim = data.k if direction is None else 1
    return SmoothObjective(dim, lambda p: value_and_gradient(p)[0],
                           lambda p: value_and_gradient(p)[1], value_and_gradient)


# --------------------------------------------------------------------------
# Selection


def _argmax_first(values) -> int:
    return int(np.argmax(values))


def select_feature(W, data: Dataset, rule="grad_l1", reg: Regularizer | None = None,
                   support=(), solver: SolverConfig | None = None,
                   early_stop_score=1e-10, G=None):
    """Index of the next feature to add, or None at convergence.

    ``grad_l1`` takes the largest gradient-column l1 norm. The other rules
    take the column whose addition lowers the loss most under, respectively,
    a full refit of ``support + [r]``, a line search along ``-grad_r``, and
    a free update of column ``r`` alone. Ties go to the lowest index.
    Returns None when every column score is at most ``early_stop_score``.
    """
    reg = reg or Regularizer()
    W = np.asarray(W, dtype=np.float64)
    if G is None:
        _, G = loss_and_gradient(W, data, reg)
    scores = column_scores(G)
    if scores.max() <= early_stop_score:
        return None
    if rule == "grad_l1":
        return _argmax_first(scores)
    solver = solver or SolverConfig()
    support = list(support)
    best, best_val = None, math.inf
    for r in range(data.d):
        if rule == "best_column_refit":
            if r in support:
                continue
            _, res = corrective_solve(data, support + [r], W, reg, solver)
            val = res.value
        elif rule == "single_column_linesearch":
            if scores[r] == 0:
                continue
            obj = _column_objective(data, W, r, reg, direction=-G[:, r])
            val = minimize_smooth(obj, np.zeros(1), solver).value
        elif rule == "single_column_vector":
            if scores[r] == 0:
                continue
            obj = _column_objective(data, W, r, reg)
            val = minimize_smooth(obj, np.zeros(data.k), solver).value
        else:
            raise InputError(f"unknown selection rule {rule!r}")
        if val < best_val:
            best, best_val = r, val
    return best


def group_scores(G, groups) -> np.ndarray:
    scores = column_scores(G)
    return np.array([scores[list(g)].sum() for g in groups])


def select_group(W, data: Dataset, groups, reg: Regularizer | None = None,
                 early_stop_score=1e-10, G=None):
    """Group with the largest summed column scores, or None at convergence."""
    if G is None:
        _, G = loss_and_gradient(np.asarray(W, dtype=np.float64), data, reg)
    gs = group_scores(G, groups)
    if gs.max() <= early_stop_score:
        return None
    return _argmax_first(gs)


# --------------------------------------------------------------------------
# Training loop


def _solve_note(res, cfg: TrainConfig):
    if res is None or res.converged:
        return True, None
    if res.final_gradient_norm <= cfg.loose_tolerance:
        return False, None
    msg = (f"corrective solve stopped after {res.iterations} iterations with "
           f"gradient norm {res.final_gradient_norm:.3g}")
    warnings.warn(msg)
    return False, msg


def shareboost_train(data: Dataset, cfg: TrainConfig | None = None, heldout: Dataset | None = None,
                     feature_map=None, scaling=None):
    """Greedy fully corrective training on the feature matrix ``data.X``.

    Returns ``(WeightModel, TrainTrace)``. Training stops after
    ``cfg.rounds`` rounds or once no column has a score above
    ``cfg.early_stop_score``. ``heldout`` (already in feature space) is only
    evaluated, never used for selection.
    """
    cfg = cfg or TrainConfig()
    if data.m == 0:
        raise InputError("dataset is empty")
    cfg.check_groups(data.d)
    reg = cfg.reg
    solver_cfg = cfg.corrective_solver
    W = np.zeros((data.k, data.d))
    support: list[int] = []
    f, G = loss_and_gradient(W, data, reg)
    trace = TrainTrace(initial_loss=f)

    for t in range(1, cfg.rounds + 1):
        scores = column_scores(G)
        if cfg.groups is not None:
            sel = select_group(W, data, cfg.groups, early_stop_score=cfg.early_stop_score, G=G)
            if sel is None:
                break
            added = tuple(cfg.groups[sel])
            score = float(scores[list(added)].sum())
        else:
            sel = select_feature(W, data, cfg.rule, reg, support, cfg.solver,
                                 cfg.early_stop_score, G=G)
            if sel is None:
                break
            added = (sel,)
            score = float(scores[sel])
        support += [i for i in added if i not in support]
        W, res = corrective_solve(data, support, W, reg, solver_cfg)
        f, G = loss_and_gradient(W, data, reg)
        converged, note = _solve_note(res, cfg)
        trace.records.append(RoundRecord(
            round=t,
            selected=int(sel),
            added=added,
            score=score,
            train_loss=f,
            train_err=zero_one_error(W, data),
            heldout_err=None if heldout is None else zero_one_error(W, heldout),
            support_size=len(support),
            restricted_grad_l1=float(column_scores(G[:, support]).max()),
            converged=converged,
            warning=note,
        ))

    model = WeightModel(W, list(support), feature_map, scaling, data.classes)
    return model, trace


def shareboost_train_stumps(raw: Dataset, cfg: TrainConfig | None = None,
                            heldout: Dataset | None = None, scaling=None):
    """Greedy training over the implicit space of all decision stumps.

    Each round scans every raw feature for the best threshold instead of
    materializing the stump design matrix; selected stumps become the
    columns of the returned model.
    """
    cfg = cfg or TrainConfig()
    if cfg.rule != "grad_l1" or cfg.groups is not None:
        raise InputError("stump training supports only the grad_l1 rule without groups")
    if raw.m == 0:
        raise InputError("dataset is empty")
    reg = cfg.reg
    solver_cfg = cfg.corrective_solver
    smap = StumpMap(raw.d)
    X = np.zeros((raw.m, 0))
    W = np.zeros((raw.k, 0))
    trace = TrainTrace(initial_loss=float(np.mean(scores_loss(np.zeros((raw.m, raw.k)), raw.y,
                                                              with_grad=False)[0])))
    if reg.active:
        trace.initial_loss += reg.value(W)

    for t in range(1, cfg.rounds + 1):
        i, theta, score = best_stump(raw, X @ W.T)
        if score <= cfg.early_stop_score:
            break
        stump = Stump(i, theta)
        if stump in smap.stumps:
            j = smap.stumps.index(stump)
        else:
            smap = smap.append(stump)
            X = np.column_stack([X, stump(raw.X)])
            W = np.column_stack([W, np.zeros(raw.k)])
            j = len(smap.stumps) - 1
        mapped = raw.with_features(X)
        W, res = corrective_solve(mapped, range(X.shape[1]), W, reg, solver_cfg)
        f, G = loss_and_gradient(W, mapped, reg)
        converged, note = _solve_note(res, cfg)
        held = None
        if heldout is not None:
            held = zero_one_error(W, heldout.with_features(smap.transform(heldout.X)))
        trace.records.append(RoundRecord(
            round=t, selected=j, added=(j,), score=score, train_loss=f,
            train_err=zero_one_error(W, mapped), heldout_err=held,
            support_size=X.shape[1],
            restricted_grad_l1=float(column_scores(G).max()),
            converged=converged, warning=note,
        ))

    model = WeightModel(W, list(range(W.shape[1])), smap, scaling, raw.classes)
    return model, trace


# --------------------------------------------------------------------------
# Progress diagnostics


@dataclass
class ProgressRow:
    round: int
    gap: float
    next_gap: float
    bound: float
    sharp_bound: float | None
    exempt: bool
    ok: bool
    sharp_ok: bool


@dataclass
class ProgressReport:
    reference_loss: float
    reference_norm: float
    rows: list

    @property
    def violations(self):
        return [r for r in self.rows if not r.exempt and not r.ok]

    @property
    def sharp_violations(self):
        return [r for r in self.rows
                if not r.exempt and r.sharp_bound is not None and not r.sharp_ok]


def progress_check(trace: TrainTrace, W_star, data: Dataset, tolerance=1e-8) -> ProgressReport:
    """Check the per-round decrease guaranteed against a reference matrix.

    With ``gap_t = L(W_t) - L(W_star)`` and ``W_0 = 0``, every round with a
    positive gap must satisfy
    ``gap_t - gap_{t+1} >= gap_t**2 / (4 ||W_star||_{inf,1}**2) - 10 * tolerance``.
    The sharper form replaces the norm by the sum of ``max |W_star[:, i]|``
    over reference columns not yet selected.
    """
    W_star = np.asarray(W_star, dtype=np.float64)
    ref = loss_avg(W_star, data)
    norm = mixed_norm(W_star, np.inf, 1)
    ref_cols = set(np.flatnonzero(np.any(W_star != 0, axis=0)).tolist())
    col_max = np.abs(W_star).max(axis=0)
    losses = [trace.initial_loss] + trace.losses
    supports = [[]] + trace.supports()
    slack = 10 * tolerance
    rows = []
    for t in range(len(trace.records)):
        gap, nxt = losses[t] - ref, losses[t + 1] - ref
        decrease = gap - nxt
        exempt = gap <= 0
        bound = gap * gap / (4 * norm * norm) if norm > 0 else math.inf
        missing = ref_cols - set(supports[t])
        s = float(sum(col_max[i] for i in missing))
        sharp = gap * gap / (4 * s * s) if missing and s > 0 else None
        rows.append(ProgressRow(
            round=t + 1, gap=gap, next_gap=nxt, bound=bound, sharp_bound=sharp,
            exempt=exempt, ok=decrease >= bound - slack,
            sharp_ok=sharp is None or decrease >= sharp - slack,
        ))
    return ProgressReport(ref, norm, rows)
