"""Refinement type checker: the judgment G;F | Gamma;Delta |- P :: A @ T.

Provider rules bind the communication instant and push the predicate into F;
client rules fix a concrete instant that must be reachable (T <= T') and land
inside the provider's window (p(T')).  Forwarding and spawning go through the
forward/cut retyping relations, which compare temporal windows by entailment
with the connective structure held fixed (the lolli argument is
contravariant).  Every temporal premise is discharged by the solver, and every
query is recorded so it can be exported as SMT-LIB2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import syntax as s
from . import temporal as t
from .parser import render_prop, render_type

TIMING_VIOLATION = "TimingViolation"
PREDICATE_UNSATISFIED = "PredicateUnsatisfied"
LINEARITY_VIOLATION = "LinearityViolation"
SHAPE_MISMATCH = "ShapeMismatch"
RETYPE_FAILURE = "RetypeFailure"
EXPR_TYPE_ERROR = "ExprTypeError"


@dataclass
class TypingError:
    kind: str
    location: str
    judgment: str
    counterexample: Optional[dict] = None

    def render(self) -> str:
        msg = f"{self.kind} at {self.location}: {self.judgment}"
        if self.counterexample is not None:
            binding = ", ".join(
                f"{k} = t0{v:+d}" for k, v in sorted(self.counterexample.items()))
            msg += f" [counterexample: {binding or 'empty assignment'}]"
        return msg


class TypeCheckError(Exception):
    def __init__(self, error: TypingError):
        self.error = error
        super().__init__(error.render())


@dataclass
class QueryRecord:
    g: tuple
    f: tuple
    prop: t.Prop
    holds: bool
    location: str


class EntailmentSolver:
    """Entailment backend with a query log for SMT export.

    The internal backend is total and produces counterexample assignments;
    the external backend shells out to an SMT-LIB2 solver binary.
    """

    def __init__(self, backend: str = "internal", solver_bin: Optional[str] = None,
                 timeout_ms: int = 5000, budget: int = 10**6):
        self.backend = backend
        self.solver_bin = solver_bin
        self.timeout_ms = timeout_ms
        self.budget = budget
        self.queries: list = []

    def holds(self, g, f, p, location: str) -> tuple:
        g = tuple(g)
        f = tuple(f)
        if self.backend == "external":
            verdict = t.entails_external(g, f, p, self.solver_bin, self.timeout_ms)
            cex = None
        else:
            verdict, cex = t.entails_cex(g, f, p, budget=self.budget)
        self.queries.append(QueryRecord(g, f, p, verdict, location))
        return verdict, cex


def _render_judgment(g, f, p) -> str:
    ctx = ", ".join(g) or "."
    hyp = ", ".join(render_prop(q) for q in f) or "."
    return f"{ctx}; {hyp} |- {render_prop(p)}"


def _fresh_for(g, binder: str) -> str:
    if binder not in g and "#" not in binder:
        return binder
    return s.fresh_name(binder.split("#")[0])


# ---------------------------------------------------------------------------
# Functional layer


def check_expr(gamma: dict, e: s.Expr, externs: dict, location: str = "") -> s.ValueType:
    def err(msg: str):
        raise TypeCheckError(TypingError(EXPR_TYPE_ERROR, location, msg))

    if isinstance(e, s.BoolLit):
        return s.BOOL
    if isinstance(e, s.IntLit):
        return s.INT
    if isinstance(e, s.OpaqueLit):
        return s.NamedType(e.sort)
    if isinstance(e, s.VarE):
        if e.name not in gamma:
            err(f"unbound value variable {e.name}")
        return gamma[e.name]
    if isinstance(e, s.Arith):
        for side in (e.left, e.right):
            if check_expr(gamma, side, externs, location) != s.INT:
                err(f"arithmetic on non-integer operand in {e.op}")
        return s.INT
    if isinstance(e, s.Cmp):
        lt = check_expr(gamma, e.left, externs, location)
        rt = check_expr(gamma, e.right, externs, location)
        if lt != rt:
            err(f"comparison {e.op} between {lt} and {rt}")
        if e.op not in ("==", "!=") and lt != s.INT:
            err(f"ordering {e.op} on non-integer sort {lt}")
        return s.BOOL
    if isinstance(e, s.IfE):
        if check_expr(gamma, e.cond, externs, location) != s.BOOL:
            err("if condition is not bool")
        then = check_expr(gamma, e.then, externs, location)
        orelse = check_expr(gamma, e.orelse, externs, location)
        if then != orelse:
            err(f"if branches disagree: {then} vs {orelse}")
        return then
    # CallE
    sig = externs.get(e.name)
    if sig is None:
        err(f"call to undeclared extern {e.name}")
    arg_types, ret = sig
    if len(arg_types) != len(e.args):
        err(f"extern {e.name} expects {len(arg_types)} arguments, got {len(e.args)}")
    for i, (want, arg) in enumerate(zip(arg_types, e.args)):
        got = check_expr(gamma, arg, externs, location)
        if got != want:
            err(f"extern {e.name} argument {i + 1}: expected {want}, got {got}")
    return ret


# ---------------------------------------------------------------------------
# Retyping relations


def _retype(solver: EntailmentSolver, g, f, a, b, at, location: str,
            cut: bool) -> tuple:
    """Shared engine for forward and cut retyping.

    Returns (ok, reason).  Cut retyping adds T <= t to the hypotheses instead
    of requiring it as a separate premise.
    """
    if type(a) is not type(b) or isinstance(a, s.TypeRef):
        return False, f"connective mismatch: {render_type(a)} vs {render_type(b)}"
    u = _fresh_for(g, b.binder)
    a = s.rename_binder(a, u)
    b = s.rename_binder(b, u)
    g2 = list(g) + [u]
    hyp = list(f) + ([t.Leq(at, t.tvar(u))] if cut else []) + [b.pred]
    ok, _ = solver.holds(g2, hyp, a.pred, location)
    if not ok:
        return False, f"window not covered: {_render_judgment(g2, hyp, a.pred)}"
    if not cut:
        reach = t.Leq(at, t.tvar(u))
        ok, _ = solver.holds(g2, hyp, reach, location)
        if not ok:
            return False, f"unreachable instant: {_render_judgment(g2, hyp, reach)}"
    here = t.tvar(u)
    if isinstance(a, s.UnitT):
        return True, ""
    if isinstance(a, (s.TensorT, s.IChoiceT, s.EChoiceT)):
        pairs = [(a.left, b.left), (a.right, b.right)]
    elif isinstance(a, s.LolliT):
        pairs = [(b.arg, a.arg), (a.cont, b.cont)]  # argument is contravariant
    else:  # ProduceT / QueryT
        if a.payload != b.payload:
            return False, f"payload sort mismatch: {a.payload} vs {b.payload}"
        pairs = [(a.cont, b.cont)]
    for sub_a, sub_b in pairs:
        ok, reason = _retype(solver, g2, hyp, sub_a, sub_b, here, location, cut)
        if not ok:
            return False, reason
    return True, ""


def fwd_retype(g, f, a, b, at, solver: Optional[EntailmentSolver] = None,
               location: str = "fwd") -> bool:
    """A can be forwarded as B at time ``at`` (all of B's window reachable)."""
    ok, _ = fwd_retype_explain(g, f, a, b, at, solver, location)
    return ok


def fwd_retype_explain(g, f, a, b, at, solver=None, location="fwd") -> tuple:
    solver = solver or EntailmentSolver()
    return _retype(solver, g, f, a, b, at, location, cut=False)


def cut_retype(g, f, a, b, at, solver: Optional[EntailmentSolver] = None,
               location: str = "cut") -> bool:
    """A covers the parts of B reachable from time ``at`` (cut permission)."""
    ok, _ = cut_retype_explain(g, f, a, b, at, solver, location)
    return ok


def cut_retype_explain(g, f, a, b, at, solver=None, location="cut") -> tuple:
    solver = solver or EntailmentSolver()
    return _retype(solver, g, f, a, b, at, location, cut=True)


# ---------------------------------------------------------------------------
# Linear context handling


def split_context(delta: dict, p1: s.Process, p2: s.Process,
                  location: str = "split") -> tuple:
    """Split Delta by free channels; any overlap or leftover is a linearity bug."""
    fc1 = s.free_channels(p1)
    fc2 = s.free_channels(p2)
    both = fc1 & fc2 & set(delta)
    if both:
        name = sorted(both)[0]
        raise TypeCheckError(TypingError(
            LINEARITY_VIOLATION, location, f"channel {name} used in both branches"))
    left = {x: a for x, a in delta.items() if x in fc1}
    right = {x: a for x, a in delta.items() if x in fc2}
    missing = set(delta) - set(left) - set(right)
    if missing:
        name = sorted(missing)[0]
        raise TypeCheckError(TypingError(
            LINEARITY_VIOLATION, location, f"channel {name} is never used"))
    return left, right


# ---------------------------------------------------------------------------
# Process typing


_PROVIDER_SHAPES = {
    s.CloseP: s.UnitT,
    s.LamRecv: s.LolliT,
    s.PairSend: s.TensorT,
    s.InLP: s.IChoiceT,
    s.InRP: s.IChoiceT,
    s.OfferP: s.EChoiceT,
    s.ProdP: s.ProduceT,
    s.QueryRecvP: s.QueryT,
}

_CLIENT_SHAPES = {
    s.WaitP: s.UnitT,
    s.AppSend: s.LolliT,
    s.PairRecv: s.TensorT,
    s.CaseP: s.IChoiceT,
    s.SelectLP: s.EChoiceT,
    s.SelectRP: s.EChoiceT,
    s.ConsP: s.ProduceT,
    s.SupplyP: s.QueryT,
}


class Checker:
    def __init__(self, prog: s.Program, solver: Optional[EntailmentSolver] = None):
        self.prog = prog
        self.solver = solver or EntailmentSolver()
        self.externs = {d.name: (tuple(d.arg_types), d.ret_type) for d in prog.externs}

    # -- premise helpers -----------------------------------------------------

    def _require(self, g, f, p, kind: str, location: str, what: str) -> None:
        ok, cex = self.solver.holds(g, f, p, location)
        if not ok:
            raise TypeCheckError(TypingError(
                kind, location, f"{what}: {_render_judgment(g, f, p)}", cex))

    def _shape_error(self, location: str, term: s.Process, a) -> TypeCheckError:
        want = render_type(a) if not isinstance(a, s.TypeRef) else a.name
        return TypeCheckError(TypingError(
            SHAPE_MISMATCH, location,
            f"process form {type(term).__name__} cannot provide or use {want}"))

    # -- main judgment -------------------------------------------------------

    def check_process(self, g, f, gamma, delta, p, at, a, location="",
                      _spawn_stack=()) -> None:
        """G;F | Gamma;Delta |- p :: a @ at, raising TypingError on failure."""
        loc = f"{location}/{type(p).__name__}"

        if isinstance(p, s.FwdP):
            self._check_fwd(g, f, delta, p, at, a, loc)
            return
        if isinstance(p, s.SpawnP):
            self._check_spawn(g, f, gamma, delta, p, at, a, loc, _spawn_stack)
            return
        if isinstance(p, s.IfP):
            cond = check_expr(gamma, p.cond, self.externs, loc)
            if cond != s.BOOL:
                raise TypeCheckError(TypingError(
                    EXPR_TYPE_ERROR, loc, f"if condition has sort {cond}, not bool"))
            self.check_process(g, f, gamma, delta, p.then, at, a, loc + "/then",
                               _spawn_stack)
            self.check_process(g, f, gamma, delta, p.orelse, at, a, loc + "/else",
                               _spawn_stack)
            return
        if type(p) in _PROVIDER_SHAPES:
            if not isinstance(a, _PROVIDER_SHAPES[type(p)]):
                raise self._shape_error(loc, p, a)
            self._check_provider(g, f, gamma, delta, p, at, a, loc, _spawn_stack)
            return
        if type(p) in _CLIENT_SHAPES:
            self._check_client(g, f, gamma, delta, p, at, a, loc, _spawn_stack)
            return
        raise self._shape_error(loc, p, a)

    def _check_fwd(self, g, f, delta, p: s.FwdP, at, a, loc) -> None:
        if set(delta) != {p.chan}:
            extra = sorted(set(delta) - {p.chan}) or ["<empty>"]
            raise TypeCheckError(TypingError(
                LINEARITY_VIOLATION, loc,
                f"forward must own exactly its source channel; leftover: {extra[0]}"))
        self._require(g, f, t.Eq(at, p.at), TIMING_VIOLATION, loc,
                      "forward annotation differs from judgment time")
        ok, reason = _retype(self.solver, g, f, delta[p.chan], a, p.at, loc, cut=False)
        if not ok:
            raise TypeCheckError(TypingError(RETYPE_FAILURE, loc, reason))

    def _check_spawn(self, g, f, gamma, delta, p: s.SpawnP, at, a, loc,
                     _spawn_stack) -> None:
        decl = self.prog.proc_decl(p.callee)
        if decl is None:
            raise TypeCheckError(TypingError(
                SHAPE_MISMATCH, loc, f"spawn of undeclared proc {p.callee}"))
        if p.callee in _spawn_stack:
            raise TypeCheckError(TypingError(
                SHAPE_MISMATCH, loc,
                f"recursive spawn chain through {p.callee} is not supported"))
        if len(p.args) != len(decl.params):
            raise TypeCheckError(TypingError(
                SHAPE_MISMATCH, loc,
                f"{p.callee} takes {len(decl.params)} channel arguments, got {len(p.args)}"))
        self._require(g, f, t.Eq(at, p.at), TIMING_VIOLATION, loc,
                      "spawn annotation differs from judgment time")
        for arg in p.args:
            if arg not in delta:
                raise TypeCheckError(TypingError(
                    LINEARITY_VIOLATION, loc, f"spawn argument {arg} is not available"))
        # Arguments are passed verbatim: alpha-equal types required.
        delta1 = {}
        for arg, (param, want) in zip(p.args, decl.params):
            want = s.expand_type_refs(self.prog, want)
            if not s.alpha_eq_type(delta[arg], want):
                raise TypeCheckError(TypingError(
                    SHAPE_MISMATCH, loc,
                    f"spawn argument {arg} has type {render_type(delta[arg])}, "
                    f"but {p.callee} expects {render_type(want)}"))
            delta1[param] = delta[arg]
        offered = s.expand_type_refs(self.prog, decl.offered)
        # Re-check the callee body at the spawn-site time: declared signatures
        # are established at t0 and do not transport to later instants.
        self.check_process(g, f, gamma, delta1, decl.body, p.at, offered,
                           f"{loc}/{p.callee}", _spawn_stack + (p.callee,))
        bound = offered if p.bound_type is None \
            else s.expand_type_refs(self.prog, p.bound_type)
        ok, reason = _retype(self.solver, g, f, offered, bound, p.at, loc, cut=True)
        if not ok:
            raise TypeCheckError(TypingError(RETYPE_FAILURE, loc, reason))
        rest = {x: b for x, b in delta.items() if x not in p.args}
        rest2 = dict(rest)
        rest2[p.bound] = bound
        self.check_process(g, f, gamma, rest2, p.cont, p.at, a, loc, _spawn_stack)

    def _provider_header(self, g, f, p, at, a, loc) -> tuple:
        """Bind one fresh instant for the term and type binders and check the
        term's window is the type's window (both entailment directions)."""
        u = _fresh_for(g, a.binder)
        ty = s.rename_binder(a, u)
        term_pred = t.substitute(p.pred, p.binder, t.tvar(u))
        g2 = list(g) + [u]
        self._require(g2, list(f) + [ty.pred], term_pred, PREDICATE_UNSATISFIED, loc,
                      "type window not honored by term predicate")
        self._require(g2, list(f) + [term_pred], ty.pred, PREDICATE_UNSATISFIED, loc,
                      "term predicate exceeds the type window")
        f2 = list(f) + [ty.pred]
        self._require(g2, f2, t.Leq(at, t.tvar(u)), TIMING_VIOLATION, loc,
                      "provider is too late for its window")
        return u, g2, f2, ty

    def _check_provider(self, g, f, gamma, delta, p, at, a, loc, stack) -> None:
        if isinstance(p, s.CloseP) and delta:
            name = sorted(delta)[0]
            raise TypeCheckError(TypingError(
                LINEARITY_VIOLATION, loc, f"channel {name} unused at close"))
        u, g2, f2, ty = self._provider_header(g, f, p, at, a, loc)
        here = t.tvar(u)
        sub = lambda q: s.subst_time_in_process(q, p.binder, here)

        if isinstance(p, s.CloseP):
            return
        if isinstance(p, s.LamRecv):
            if p.arg_type is not None:
                want = s.expand_type_refs(self.prog, p.arg_type)
                if not s.alpha_eq_type(want, ty.arg):
                    raise TypeCheckError(TypingError(
                        SHAPE_MISMATCH, loc, "lambda argument annotation mismatch"))
            d2 = dict(delta)
            d2[p.var] = ty.arg
            self.check_process(g2, f2, gamma, d2, sub(p.body), here, ty.cont, loc, stack)
            return
        if isinstance(p, s.PairSend):
            d1, d2 = split_context(delta, p.payload, p.cont, loc)
            self.check_process(g2, f2, gamma, d1, sub(p.payload), here, ty.left, loc, stack)
            self.check_process(g2, f2, gamma, d2, sub(p.cont), here, ty.right, loc, stack)
            return
        if isinstance(p, s.InLP):
            self.check_process(g2, f2, gamma, delta, sub(p.cont), here, ty.left, loc, stack)
            return
        if isinstance(p, s.InRP):
            self.check_process(g2, f2, gamma, delta, sub(p.cont), here, ty.right, loc, stack)
            return
        if isinstance(p, s.OfferP):
            self.check_process(g2, f2, gamma, delta, sub(p.left), here, ty.left,
                               loc + "/L", stack)
            self.check_process(g2, f2, gamma, delta, sub(p.right), here, ty.right,
                               loc + "/R", stack)
            return
        if isinstance(p, s.ProdP):
            got = check_expr(gamma, p.expr, self.externs, loc)
            if got != ty.payload:
                raise TypeCheckError(TypingError(
                    EXPR_TYPE_ERROR, loc,
                    f"produced value has sort {got}, type wants {ty.payload}"))
            self.check_process(g2, f2, gamma, delta, sub(p.cont), here, ty.cont, loc, stack)
            return
        # QueryRecvP
        gamma2 = dict(gamma)
        gamma2[p.var] = ty.payload
        self.check_process(g2, f2, gamma2, delta, sub(p.cont), here, ty.cont, loc, stack)

    def _check_client(self, g, f, gamma, delta, p, at, a, loc, stack) -> None:
        if p.chan not in delta:
            raise TypeCheckError(TypingError(
                LINEARITY_VIOLATION, loc, f"channel {p.chan} is not available"))
        b = delta[p.chan]
        if not isinstance(b, _CLIENT_SHAPES[type(p)]):
            raise self._shape_error(loc, p, b)
        when = p.at
        self._require(g, f, t.Leq(at, when), TIMING_VIOLATION, loc,
                      "client instant precedes the current time")
        window = t.substitute(b.pred, b.binder, when)
        self._require(g, f, window, TIMING_VIOLATION, loc,
                      "client instant misses the provider window")
        instantiate = lambda comp: s.subst_time_in_type(comp, b.binder, when)
        rest = {x: c for x, c in delta.items() if x != p.chan}

        if isinstance(p, s.WaitP):
            self.check_process(g, f, gamma, rest, p.cont, when, a, loc, stack)
            return
        if isinstance(p, s.AppSend):
            d1, d2 = split_context(rest, p.payload, p.cont, loc)
            self.check_process(g, f, gamma, d1, p.payload, when, instantiate(b.arg),
                               loc + "/payload", stack)
            d2[p.chan] = instantiate(b.cont)
            self.check_process(g, f, gamma, d2, p.cont, when, a, loc, stack)
            return
        if isinstance(p, s.PairRecv):
            d2 = dict(rest)
            d2[p.var] = instantiate(b.left)
            d2[p.chan] = instantiate(b.right)
            self.check_process(g, f, gamma, d2, p.cont, when, a, loc, stack)
            return
        if isinstance(p, s.CaseP):
            for comp, branch, tag in ((b.left, p.left, "/L"), (b.right, p.right, "/R")):
                d2 = dict(rest)
                d2[p.chan] = instantiate(comp)
                self.check_process(g, f, gamma, d2, branch, when, a, loc + tag, stack)
            return
        if isinstance(p, (s.SelectLP, s.SelectRP)):
            comp = b.left if isinstance(p, s.SelectLP) else b.right
            d2 = dict(rest)
            d2[p.chan] = instantiate(comp)
            self.check_process(g, f, gamma, d2, p.cont, when, a, loc, stack)
            return
        if isinstance(p, s.ConsP):
            gamma2 = dict(gamma)
            gamma2[p.var] = b.payload
            d2 = dict(rest)
            d2[p.chan] = instantiate(b.cont)
            self.check_process(g, f, gamma2, d2, p.cont, when, a, loc, stack)
            return
        # SupplyP
        got = check_expr(gamma, p.expr, self.externs, loc)
        if got != b.payload:
            raise TypeCheckError(TypingError(
                EXPR_TYPE_ERROR, loc,
                f"supplied value has sort {got}, channel wants {b.payload}"))
        d2 = dict(rest)
        d2[p.chan] = instantiate(b.cont)
        self.check_process(g, f, gamma, d2, p.cont, when, a, loc, stack)


@dataclass
class DeclReport:
    name: str
    accepted: bool
    error: Optional[TypingError] = None

    def render(self) -> str:
        if self.accepted:
            return f"ACCEPT {self.name}"
        return f"REJECT {self.name}: {self.error.render()}"


def check_process(g, f, gamma, delta, p, at, a,
                  prog: Optional[s.Program] = None,
                  solver: Optional[EntailmentSolver] = None) -> Optional[TypingError]:
    """Standalone judgment check; returns None on success."""
    checker = Checker(prog or s.Program(), solver)
    try:
        checker.check_process(list(g), list(f), dict(gamma), dict(delta), p, at, a)
        return None
    except TypeCheckError as exc:
        return exc.error


def check_program(prog: s.Program,
                  solver: Optional[EntailmentSolver] = None) -> list:
    """Check every proc declaration at time t0 with its params as Delta."""
    checker = Checker(prog, solver)
    reports = []
    for decl in prog.procs:
        location = decl.name
        try:
            delta = {v: s.expand_type_refs(prog, a) for v, a in decl.params}
            offered = s.expand_type_refs(prog, decl.offered)
            checker.check_process([], [], {}, delta, decl.body, t.INIT, offered,
                                  location)
            reports.append(DeclReport(decl.name, True))
        except TypeCheckError as exc:
            reports.append(DeclReport(decl.name, False, exc.error))
        except s.CyclicTypeDefError as exc:
            reports.append(DeclReport(decl.name, False, TypingError(
                SHAPE_MISMATCH, location, str(exc))))
    return reports
