"""Exact graded expansion of linear differential operators under the slow-scale
substitution d/dx_k -> d/dx_k + r d/dxbar_k (unbounded directions only).

A linear operator L = sum_alpha a^(alpha)(x) D^alpha applied to functions that
also depend on slow variables xbar_k = r*x_k splits into graded pieces

    L = sum_{l=0}^{m} r^l L^(l),

where each L^(l) collects, per source multi-index alpha, the words

    prod_k binom(alpha_k, q_k) d^(alpha_k - q_k)/dx_k  d^(q_k)/dxbar_k

over all decompositions q_1 + ... + q_p = l with q_k <= alpha_k.  The grading
terminates at the operator order m, and all coefficients are exact rationals.

Coefficient functions a^(alpha)(x) are drawn from a closed tag family
{1, sin_y, cos_y}, where y is the last (bounded) spatial direction; this is
all the model operators require.

Symbolic application (`apply_graded`) and the substitution self-check
(`substitution_check`) use sympy expressions over canonical symbols from
`fast_symbols` / `slow_symbols`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import sympy as sp

__all__ = [
    "TAGS",
    "MultiIndex",
    "DerivativeWord",
    "OperatorTerm",
    "OperatorSpec",
    "GradedExpansion",
    "fast_symbols",
    "slow_symbols",
    "expand_operator",
    "apply_graded",
    "substitution_check",
    "pretty",
]

TAGS = ("1", "sin_y", "cos_y")


@dataclass(frozen=True)
class MultiIndex:
    """A tuple of derivative powers, one per spatial direction."""

    alpha: tuple[int, ...]

    def __post_init__(self):
        if not all(isinstance(a, int) and a >= 0 for a in self.alpha):
            raise ValueError(f"multi-index entries must be nonnegative ints: {self.alpha}")

    @property
    def order(self) -> int:
        return sum(self.alpha)

    def __len__(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class DerivativeWord:
    """coefficient * tag(y) * d^fast/dx^fast * d^slow/dxbar^slow.

    ``fast_powers`` and ``slow_powers`` both have one entry per spatial
    direction; slow entries beyond the unbounded directions are zero.
    """

    fast_powers: tuple[int, ...]
    slow_powers: tuple[int, ...]
    coefficient: Fraction
    tag: str = "1"

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown coefficient tag {self.tag!r}; allowed: {TAGS}")
        if len(self.fast_powers) != len(self.slow_powers):
            raise ValueError("fast_powers and slow_powers must have equal length")


@dataclass(frozen=True)
class OperatorTerm:
    """One term coefficient * tag(y) * D^alpha of a scalar operator."""

    coefficient: Fraction
    tag: str
    index: MultiIndex

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown coefficient tag {self.tag!r}; allowed: {TAGS}")


@dataclass(frozen=True)
class OperatorSpec:
    """A (componentwise diagonal) linear operator: per component j a list of
    OperatorTerms; p of the n directions are unbounded, the rest bounded;
    m bounds the total derivative order."""

    terms: tuple[tuple[OperatorTerm, ...], ...]
    p: int
    n: int
    m: int

    def __post_init__(self):
        if not 1 <= self.p <= self.n:
            raise ValueError(f"need 1 <= p <= n, got p={self.p}, n={self.n}")
        for comp in self.terms:
            for term in comp:
                if len(term.index) != self.n:
                    raise ValueError(
                        f"multi-index {term.index.alpha} has {len(term.index)} "
                        f"entries; operator is {self.n}-dimensional"
                    )
                if term.index.order > self.m:
                    raise ValueError(
                        f"term order {term.index.order} exceeds operator order {self.m}"
                    )

    @property
    def n_components(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class GradedExpansion:
    """Graded pieces of an expanded operator: ``levels[l][j]`` is the sorted
    word tuple of component j at grade l; grades above m are empty."""

    levels: dict[int, tuple[tuple[DerivativeWord, ...], ...]]
    p: int
    n: int
    m: int
    n_components: int

    def grade(self, l: int) -> tuple[tuple[DerivativeWord, ...], ...]:
        empty = tuple(() for _ in range(self.n_components))
        return self.levels.get(l, empty)


def _merge_words(words: list[DerivativeWord]) -> tuple[DerivativeWord, ...]:
    """Canonical form: merge equal (slow, fast, tag) words, drop zeros, sort
    lexicographically by (slow_powers, fast_powers, tag)."""
    acc: dict[tuple, Fraction] = {}
    for w in words:
        key = (w.slow_powers, w.fast_powers, w.tag)
        acc[key] = acc.get(key, Fraction(0)) + w.coefficient
    merged = [
        DerivativeWord(fast, slow, coeff, tag)
        for (slow, fast, tag), coeff in acc.items()
        if coeff != 0
    ]
    merged.sort(key=lambda w: (w.slow_powers, w.fast_powers, w.tag))
    return tuple(merged)


# ---------------------------------------------------------------------------
# expansion
# ---------------------------------------------------------------------------

def expand_operator(spec: OperatorSpec) -> GradedExpansion:
    """Expand every operator term under d/dx_k -> d/dx_k + r d/dxbar_k for
    the first p directions; returns the words collected by grade (power of r)
    with exact binomial coefficients."""
    per_grade: dict[int, list[list[DerivativeWord]]] = {}
    for j, comp in enumerate(spec.terms):
        for term in comp:
            alpha = term.index.alpha
            for qs in _slow_decompositions(alpha, spec.p):
                grade = sum(qs)
                weight = term.coefficient
                for ak, qk in zip(alpha, qs):
                    weight *= math.comb(ak, qk)
                fast = tuple(ak - qk for ak, qk in zip(alpha, qs))
                word = DerivativeWord(fast, qs, weight, term.tag)
                rows = per_grade.setdefault(
                    grade, [[] for _ in range(spec.n_components)]
                )
                rows[j].append(word)
    levels = {
        grade: tuple(_merge_words(wlist) for wlist in rows)
        for grade, rows in sorted(per_grade.items())
    }
    levels = {g: rows for g, rows in levels.items() if any(rows)}
    return GradedExpansion(levels, spec.p, spec.n, spec.m, spec.n_components)


def _slow_decompositions(alpha: tuple[int, ...], p: int):
    """All slow-power tuples (q_1..q_n) with 0 <= q_k <= alpha_k for k < p
    and q_k = 0 for the bounded directions k >= p."""
    ranges = [range(a + 1) if k < p else range(1) for k, a in enumerate(alpha)]

    def rec(k: int, prefix: tuple[int, ...]):
        if k == len(ranges):
            yield prefix
            return
        for q in ranges[k]:
            yield from rec(k + 1, prefix + (q,))

    yield from rec(0, ())


# ---------------------------------------------------------------------------
# canonical symbols and symbolic application
# ---------------------------------------------------------------------------

def fast_symbols(n: int, p: int) -> tuple[sp.Symbol, ...]:
    """Fast spatial symbols: unbounded directions named x (x1..xp if p > 1),
    bounded directions named y (y1.. if several)."""
    unbounded = (
        [sp.Symbol("x", real=True)]
        if p == 1
        else [sp.Symbol(f"x{k+1}", real=True) for k in range(p)]
    )
    n_bounded = n - p
    bounded = (
        [sp.Symbol("y", real=True)]
        if n_bounded == 1
        else [sp.Symbol(f"y{k+1}", real=True) for k in range(n_bounded)]
    )
    return tuple(unbounded + bounded)


def slow_symbols(p: int) -> tuple[sp.Symbol, ...]:
    """Slow spatial symbols xbar (xbar1..xbarp if p > 1)."""
    if p == 1:
        return (sp.Symbol("xbar", real=True),)
    return tuple(sp.Symbol(f"xbar{k+1}", real=True) for k in range(p))


def _tag_expr(tag: str, fast: tuple[sp.Symbol, ...], p: int, n: int):
    if tag == "1":
        return sp.Integer(1)
    if n - p < 1:
        raise ValueError(f"tag {tag!r} needs a bounded direction (n > p)")
    y = fast[-1]
    return sp.sin(y) if tag == "sin_y" else sp.cos(y)


def _apply_words(words, expr, fast, slow, p, n):
    total = sp.Integer(0)
    for w in words:
        piece = expr
        for sym, k in zip(fast, w.fast_powers):
            if k:
                piece = sp.diff(piece, sym, k)
        for sym, k in zip(slow, w.slow_powers[:p]):
            if k:
                piece = sp.diff(piece, sym, k)
        total += sp.Rational(w.coefficient.numerator, w.coefficient.denominator) \
            * _tag_expr(w.tag, fast, p, n) * piece
    return total


def apply_graded(exp: GradedExpansion, series, order: int | None = None):
    """Cauchy product of the graded operator with a graded series of fields.

    ``series`` lists the sympy fields psi^(k) (per component, or bare
    expressions for single-component operators); the grade-s output is
    sum_{q=0}^{s} L^(q) psi^(s-q).  Returns {s: per-component tuple}.
    """
    norm = []
    for entry in series:
        if isinstance(entry, (list, tuple)):
            comps = tuple(sp.sympify(e) for e in entry)
        else:
            comps = (sp.sympify(entry),)
        if len(comps) != exp.n_components:
            raise ValueError(
                f"series entry has {len(comps)} components, operator has "
                f"{exp.n_components}"
            )
        norm.append(comps)

    if order is None:
        order = len(norm) - 1
    if order > len(norm) - 1:
        raise ValueError(
            f"requested order {order} but series only supplies "
            f"{len(norm)} entries (orders 0..{len(norm) - 1})"
        )

    fast = fast_symbols(exp.n, exp.p)
    slow = slow_symbols(exp.p)
    out: dict[int, tuple] = {}
    for s in range(order + 1):
        comps = []
        for j in range(exp.n_components):
            total = sp.Integer(0)
            for q in range(0, s + 1):
                words = exp.grade(q)[j]
                if words:
                    total += _apply_words(words, norm[s - q][j], fast, slow, exp.p, exp.n)
            comps.append(sp.expand(total))
        out[s] = tuple(comps)
    return out


# ---------------------------------------------------------------------------
# substitution self-check
# ---------------------------------------------------------------------------

def substitution_check(spec: OperatorSpec, f, r: float) -> float:
    """Verify the expansion reproduces the operator after xbar -> r*x.

    Route 1 applies the original operator to x -> f(x, r*x) directly; route 2
    applies sum_l r^l L^(l) to f with (x, xbar) independent and then restricts
    to xbar = r*x.  Returns the maximum absolute discrepancy over a 33-point
    sample grid (per component, overall max).
    """
    if not 0.0 < r < 1.0:
        raise ValueError(f"substitution parameter r must lie in (0, 1), got {r}")
    fast = fast_symbols(spec.n, spec.p)
    slow = slow_symbols(spec.p)
    comps = tuple(sp.sympify(e) for e in f) if isinstance(f, (list, tuple)) \
        else (sp.sympify(f),)
    if len(comps) != spec.n_components:
        raise ValueError(
            f"test field has {len(comps)} components, operator has "
            f"{spec.n_components}"
        )

    exp = expand_operator(spec)
    r_sym = sp.nsimplify(r, rational=True)
    restriction = {sb: r_sym * fs for sb, fs in zip(slow, fast[:spec.p])}

    # deterministic 33-point sample grid over [0, 2 pi)^n
    samples = []
    for j in range(33):
        samples.append(
            tuple((2.0 * math.pi * ((j * (3 * k + 1) / 33.0 + 0.1 * (k + 1))) % (2.0 * math.pi))
                  for k in range(spec.n))
        )

    worst = 0.0
    for j_comp in range(spec.n_components):
        # route 1: restrict first, then differentiate in x only
        g = comps[j_comp].subs(restriction, simultaneous=True)
        direct = _apply_words(
            [DerivativeWord(t.index.alpha, (0,) * spec.n, t.coefficient, t.tag)
             for t in spec.terms[j_comp]],
            g, fast, slow, spec.p, spec.n,
        )

        # route 2: graded application, then restrict
        graded = sp.Integer(0)
        for l, rows in exp.levels.items():
            if rows[j_comp]:
                graded += r_sym**l * _apply_words(
                    rows[j_comp], comps[j_comp], fast, slow, spec.p, spec.n
                )
        graded = graded.subs(restriction, simultaneous=True)

        fd = sp.lambdify(fast, direct, "numpy")
        fg = sp.lambdify(fast, graded, "numpy")
        for pt in samples:
            worst = max(worst, abs(complex(fd(*pt)) - complex(fg(*pt))))
    return worst


# ---------------------------------------------------------------------------
# pretty-printing
# ---------------------------------------------------------------------------

def _deriv_names(n: int, p: int) -> tuple[list[str], list[str]]:
    if p == 1:
        fast_names = ["dx"]
    else:
        fast_names = [f"dx{k+1}" for k in range(p)]
    n_bounded = n - p
    if n_bounded == 1:
        fast_names.append("dy")
    else:
        fast_names.extend(f"dy{k+1}" for k in range(n_bounded))
    slow_names = ["dxbar"] if p == 1 else [f"dxbar{k+1}" for k in range(p)]
    return fast_names, slow_names


def _word_body(w: DerivativeWord, fast_names, slow_names, n, p) -> str:
    factors = []
    mag = abs(w.coefficient)
    if w.tag != "1":
        if mag != 1:
            factors.append(str(mag))
        factors.append("sin(y)" if w.tag == "sin_y" else "cos(y)")
    elif mag != 1 or (not any(w.fast_powers) and not any(w.slow_powers)):
        factors.append(str(mag))
    for name, k in zip(fast_names, w.fast_powers):
        if k == 1:
            factors.append(name)
        elif k > 1:
            factors.append(f"{name}^{k}")
    for name, k in zip(slow_names, w.slow_powers[:p]):
        if k == 1:
            factors.append(name)
        elif k > 1:
            factors.append(f"{name}^{k}")
    return " ".join(factors)


def pretty(exp: GradedExpansion) -> str:
    """Canonical plain-text rendering of a graded expansion, one line per
    grade: "r^l: [component] word +- word ..."."""
    fast_names, slow_names = _deriv_names(exp.n, exp.p)
    lines = [f"operator: components={exp.n_components} p={exp.p} n={exp.n} m={exp.m}"]
    for l in sorted(exp.levels):
        rows = exp.levels[l]
        for j, words in enumerate(rows):
            if not words:
                continue
            parts = []
            for i, w in enumerate(words):
                body = _word_body(w, fast_names, slow_names, exp.n, exp.p)
                sign = "-" if w.coefficient < 0 else "+"
                if i == 0:
                    parts.append(body if sign == "+" else f"-{body}")
                else:
                    parts.append(f"{sign} {body}")
            lines.append(f"r^{l}: [{j + 1}] " + " ".join(parts))
    return "\n".join(lines) + "\n"
