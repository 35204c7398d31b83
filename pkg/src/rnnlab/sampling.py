"""Balanced labeled datasets: length distribution, positive generation,
and the three negative-sampling hardness regimes (hard 0/1/2).

All sampling is driven by an explicit numpy Generator so that identical
specs (including the seed) yield bit-identical datasets.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import (NoFeasibleLength, NoValidPerturbation,
                     RejectionBudgetExceeded)
from .languages import (Family, Grammar, block_exponents,
                        counter_exponent_choices, feasible_lengths,
                        grammar_by_name, is_member, render_counter_word)

HARDNESS_LEVELS = ("hard0", "hard1", "hard2")


@dataclass(frozen=True)
class LabeledString:
    s: tuple
    label: bool
    provenance: str  # "positive" | "hard0" | "hard1:e=N" | "hard2:..."


@dataclass(frozen=True)
class DatasetSpec:
    grammar: str  # grammar name, e.g. "dyck1", "anbncn"
    hardness: str
    len_min: int = 2
    len_max: int = 40
    size: int = 1000
    length_decay: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.len_min <= self.len_max:
            raise ValueError("need 1 <= len_min <= len_max")
        if self.size % 2:
            raise ValueError("size must be even (balanced dataset)")
        if self.hardness not in HARDNESS_LEVELS:
            raise ValueError(f"hardness must be one of {HARDNESS_LEVELS}")

    def grammar_obj(self) -> Grammar:
        return grammar_by_name(self.grammar)


# ---------------------------------------------------------------------------
# Lengths
# ---------------------------------------------------------------------------

def length_probabilities(len_min: int, len_max: int, decay: float) -> np.ndarray:
    """P(l) proportional to exp(-decay*l), normalized over [len_min, len_max]."""
    if decay < 0:
        raise ValueError("length decay must be >= 0")
    lengths = np.arange(len_min, len_max + 1)
    # subtract the min before exponentiating to keep weights well scaled
    logw = -decay * (lengths - len_min)
    w = np.exp(logw)
    return w / w.sum()


def sample_length(spec: DatasetSpec, rng: np.random.Generator) -> int:
    p = length_probabilities(spec.len_min, spec.len_max, spec.length_decay)
    return int(rng.choice(np.arange(spec.len_min, spec.len_max + 1), p=p))


# ---------------------------------------------------------------------------
# Positives
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


def _uniform_bigint(rng, upper: int) -> int:
    """Uniform integer in [0, upper) for arbitrary-precision upper
    (Catalan counts overflow int64 for long words)."""
    if upper <= 0:
        raise ValueError("upper must be positive")
    bits = upper.bit_length()
    nbytes = (bits + 7) // 8
    mask = (1 << bits) - 1
    while True:
        r = int.from_bytes(rng.bytes(nbytes), "big") & mask
        if r < upper:
            return r


def _sample_dyck_shape(m: int, rng) -> tuple:
    """Uniform Dyck-1 word with m pairs (0=open, 1=close), by the
    first-return decomposition weighted with Catalan counts."""
    if m == 0:
        return ()
    total = _catalan(m)
    r = _uniform_bigint(rng, total)
    acc = 0
    for i in range(m):  # inner part has i pairs
        acc += _catalan(i) * _catalan(m - 1 - i)
        if r < acc:
            inner = _sample_dyck_shape(i, rng)
            rest = _sample_dyck_shape(m - 1 - i, rng)
            return (0,) + inner + (1,) + rest
    raise AssertionError("unreachable")


def _nearest_feasible(g: Grammar, target_len: int, len_min, len_max) -> int:
    lo = max(1, len_min if len_min is not None else 1)
    hi = len_max if len_max is not None else max(target_len + 4, lo + 4)
    cand = [l for l in feasible_lengths(g, lo, hi) if l > 0]
    if not cand:
        raise NoFeasibleLength(f"{g.name} has no member in lengths [{lo},{hi}]")
    return min(cand, key=lambda l: (abs(l - target_len), l))


def sample_positive(g: Grammar, target_len: int, rng: np.random.Generator,
                    len_min: int | None = None,
                    len_max: int | None = None) -> tuple:
    """Uniformly random member at the nearest feasible length."""
    l = _nearest_feasible(g, target_len, len_min, len_max)
    if g.family is Family.DYCK:
        shape = _sample_dyck_shape(l // 2, rng)
        word = []
        types = []
        for s in shape:
            if s == 0:
                t = int(rng.integers(g.k))
                types.append(t)
                word.append(2 * t)
            else:
                word.append(2 * types.pop() + 1)
        return tuple(word)
    choices = counter_exponent_choices(g, l)
    exps = choices[int(rng.integers(len(choices)))]
    return render_counter_word(g, exps)


# ---------------------------------------------------------------------------
# Edit distance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EditDistanceResult:
    distance: int


def edit_distance(s1, s2) -> EditDistanceResult:
    """Levenshtein distance with unit-cost insert/delete/substitute."""
    s1, s2 = tuple(s1), tuple(s2)
    if len(s1) < len(s2):
        s1, s2 = s2, s1
    prev = list(range(len(s2) + 1))
    for i, a in enumerate(s1, 1):
        cur = [i]
        for j, b in enumerate(s2, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (a != b)))
        prev = cur
    return EditDistanceResult(prev[-1])


# ---------------------------------------------------------------------------
# Negatives
# ---------------------------------------------------------------------------

_HARD0_BUDGET = 10_000
_HARD_BUDGET = 1_000


def sample_negative_hard0(g: Grammar, target_len: int,
                          rng: np.random.Generator) -> tuple:
    """Uniform random string of the target length, resampled until it is
    not a member."""
    n = g.alphabet_size
    for _ in range(_HARD0_BUDGET):
        s = tuple(int(x) for x in rng.integers(n, size=target_len))
        if not is_member(g, s):
            return s
    raise RejectionBudgetExceeded(
        f"no non-member of length {target_len} found for {g.name}")


def _random_edit(s: list, n_symbols: int, rng, len_min: int, len_max: int):
    while True:
        op = ("sub", "ins", "del")[int(rng.integers(3))]
        if op == "ins" and len(s) >= len_max:
            continue  # re-sample the edit type to stay within bounds
        if op == "del" and len(s) <= len_min:
            continue
        break
    if op == "sub":
        pos = int(rng.integers(len(s)))
        new = int(rng.integers(n_symbols - 1))
        if new >= s[pos]:
            new += 1
        s[pos] = new
    elif op == "ins":
        pos = int(rng.integers(len(s) + 1))
        s.insert(pos, int(rng.integers(n_symbols)))
    else:
        pos = int(rng.integers(len(s)))
        del s[pos]


def sample_negative_hard1(g: Grammar, target_len: int,
                          rng: np.random.Generator,
                          len_min: int = 2,
                          len_max: int = 40) -> LabeledString:
    """Apply 1..floor(0.25*l) random single-symbol edits to a fresh
    positive; keep the first non-member."""
    row, _ = hard1_with_source(g, target_len, rng, len_min, len_max)
    return row


def hard1_with_source(g: Grammar, target_len: int,
                      rng: np.random.Generator,
                      len_min: int = 2, len_max: int = 40):
    """Like sample_negative_hard1, but also returns the source positive
    (so the edit-distance bound is checkable after the fact)."""
    if target_len < 2:
        raise ValueError("hard-1 needs target_len >= 2")
    for _ in range(_HARD_BUDGET):
        src = sample_positive(g, target_len, rng, len_min, len_max)
        l = len(src)
        e_max = max(1, l // 4)
        e = int(rng.integers(1, e_max + 1))
        s = list(src)
        for _ in range(e):
            _random_edit(s, g.alphabet_size, rng, len_min, len_max)
        s = tuple(s)
        if s != src and not is_member(g, s):
            return LabeledString(s, False, f"hard1:e={e}"), src
    raise RejectionBudgetExceeded("hard-1 sampler exhausted its retries")


def sample_negative_hard2(g: Grammar, target_len: int,
                          rng: np.random.Generator,
                          len_min: int = 2,
                          len_max: int = 40) -> LabeledString:
    """Structure-preserving negatives: exponent-block perturbation for
    counter families (e.g. a^{n-1}b^{n+1}c^n), bracket corruption for Dyck."""
    if target_len < 4:
        raise NoValidPerturbation("hard-2 needs target_len >= 4")
    for _ in range(_HARD_BUDGET):
        src = sample_positive(g, target_len, rng, max(4, len_min), len_max)
        if g.family is Family.DYCK:
            out = _perturb_dyck(g, src, rng)
        else:
            out = _perturb_counter(g, src, rng)
        if out is None:
            continue
        s, tag = out
        if len(s) == len(src) and not is_member(g, s):
            return LabeledString(s, False, tag)
    raise RejectionBudgetExceeded("hard-2 sampler exhausted its retries")


def _perturb_counter(g: Grammar, src: tuple, rng):
    vars_ = block_exponents(g)
    # recover per-block exponents of the source word
    choices = counter_exponent_choices(g, len(src))
    # src was rendered from one of these; identify it by re-rendering
    exps = None
    for c in choices:
        if render_counter_word(g, c) == src:
            exps = c
            break
    if exps is None:
        return None
    blocks = [exps[v] for v in vars_]
    nb = len(blocks)
    i, j = rng.choice(nb, size=2, replace=False)
    blocks[i] += 1
    blocks[j] -= 1
    if blocks[j] < 1:
        return None
    word = []
    pattern = [g.symbols_text.index(ch)
               for ch in _pattern_letters(g)]
    for sym, count in zip(pattern, blocks):
        word.extend([sym] * count)
    return tuple(word), f"hard2:block{i}+1,block{j}-1"


def _pattern_letters(g: Grammar) -> str:
    from .languages import _COUNTER_TEMPLATES
    return _COUNTER_TEMPLATES[g.family][0]


def _match_positions(s: tuple):
    """(open_pos, close_pos) pairs of a balanced Dyck word."""
    stack, pairs = [], []
    for i, sym in enumerate(s):
        if sym % 2 == 0:
            stack.append(i)
        else:
            pairs.append((stack.pop(), i))
    return pairs


def _perturb_dyck(g: Grammar, src: tuple, rng):
    s = list(src)
    if g.k >= 2:
        # exchange the close symbols of two matched pairs of different
        # bracket types (([]) -> ([)]); both closes then mismatch their
        # opens, so the result is always a non-member
        pairs = _match_positions(src)
        order = rng.permutation(len(pairs))
        for a in range(len(pairs)):
            for b in range(a + 1, len(pairs)):
                c1, c2 = pairs[order[a]][1], pairs[order[b]][1]
                if s[c1] != s[c2]:
                    s[c1], s[c2] = s[c2], s[c1]
                    return tuple(s), f"hard2:close-swap@{min(c1, c2)}"
        # all pairs share one type: retype one close instead
        op, cl = pairs[int(rng.integers(len(pairs)))]
        t_new = int(rng.integers(g.k - 1))
        if t_new >= s[cl] // 2:
            t_new += 1
        s[cl] = 2 * t_new + 1
        return tuple(s), f"hard2:close-retype@{cl}"
    # Dyck-1: transpose a depth-0 "()" pair if one exists (guaranteed
    # non-member), otherwise flip one random bracket
    depth = 0
    candidates = []
    for i in range(len(s) - 1):
        if depth == 0 and s[i] == 0 and s[i + 1] == 1:
            candidates.append(i)
        depth += 1 if s[i] == 0 else -1
    if candidates and rng.integers(2) == 0:
        i = candidates[int(rng.integers(len(candidates)))]
        s[i], s[i + 1] = s[i + 1], s[i]
        return tuple(s), f"hard2:transpose@{i}"
    i = int(rng.integers(len(s)))
    s[i] = 1 - s[i]
    return tuple(s), f"hard2:flip@{i}"


# ---------------------------------------------------------------------------
# Dataset assembly and JSONL persistence
# ---------------------------------------------------------------------------

def build_dataset(spec: DatasetSpec,
                  max_duplicates: int | None = None) -> list[LabeledString]:
    """size/2 positives + size/2 negatives, deterministically shuffled.

    max_duplicates caps repeats of one (s, label) pair; the default is
    uncapped because sparse languages (one member per length) cannot fill
    a balanced dataset without repetition.
    """
    g = spec.grammar_obj()
    rng = np.random.default_rng(spec.seed)
    half = spec.size // 2
    counts: dict = {}
    rows: list[LabeledString] = []

    def admit(row: LabeledString) -> bool:
        if max_duplicates is None:
            return True
        key = (row.s, row.label)
        if counts.get(key, 0) >= max_duplicates:
            return False
        counts[key] = counts.get(key, 0) + 1
        return True

    budget = 50 * half
    n_pos = 0
    while n_pos < half and budget:
        budget -= 1
        l = sample_length(spec, rng)
        s = sample_positive(g, l, rng, spec.len_min, spec.len_max)
        row = LabeledString(s, True, "positive")
        if admit(row):
            rows.append(row)
            n_pos += 1
    while len(rows) < spec.size and budget:
        budget -= 1
        l = sample_length(spec, rng)
        if spec.hardness == "hard0":
            row = LabeledString(sample_negative_hard0(g, l, rng), False, "hard0")
        elif spec.hardness == "hard1":
            row = sample_negative_hard1(g, l, rng, spec.len_min, spec.len_max)
        else:
            l = max(l, 4)
            row = sample_negative_hard2(g, l, rng, spec.len_min, spec.len_max)
        if admit(row):
            rows.append(row)
    if len(rows) < spec.size:
        raise RejectionBudgetExceeded("could not fill dataset under the "
                                      "duplicate cap")
    order = rng.permutation(spec.size)
    return [rows[i] for i in order]


def write_dataset(path, rows: list[LabeledString], spec: DatasetSpec):
    g = spec.grammar_obj()
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps({"s": g.to_text(r.s), "label": int(r.label),
                                 "provenance": r.provenance,
                                 "len": len(r.s)}) + "\n")
    with open(str(path) + ".spec.json", "w") as fh:
        json.dump(asdict(spec), fh, indent=2)


def read_dataset(path, grammar: Grammar | None = None):
    """Returns (rows, spec-or-None)."""
    spec = None
    try:
        with open(str(path) + ".spec.json") as fh:
            spec = DatasetSpec(**json.load(fh))
    except FileNotFoundError:
        pass
    if grammar is None:
        if spec is None:
            raise ValueError("no sidecar spec; pass the grammar explicitly")
        grammar = spec.grammar_obj()
    rows = []
    with open(path) as fh:
        for line in fh:
            obj = json.loads(line)
            rows.append(LabeledString(grammar.from_text(obj["s"]),
                                      bool(obj["label"]), obj["provenance"]))
    return rows, spec
