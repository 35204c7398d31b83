"""Membership deciders, enumerators, and a counter-machine interpreter
for the eight target languages (Dyck-k and four counter families).

Symbols are small integer ids internally; text rendering is a
presentation concern handled by Grammar.to_text / Grammar.from_text.
For Dyck-k, ids 0..2k-1 are paired as (2i, 2i+1) = (open_i, close_i).
"""

from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass, field

from .errors import InvalidSymbol, UnsupportedGrammar

# Bracket pairs used when rendering Dyck words as text.
_BRACKET_PAIRS = ["()", "[]", "{}", "<>", "Aa", "Bb", "Cc", "Dd"]


class Family(enum.Enum):
    DYCK = "dyck"
    ANBNCN = "anbncn"
    ANBNCNDN = "anbncndn"
    ANBMAMBN = "anbmambn"
    ANBMAMBM = "anbmambm"


# Block letter pattern and exponent-variable indices for each counter
# family: a^n b^n c^n has blocks (a, b, c) tied to variables (0, 0, 0).
_COUNTER_TEMPLATES = {
    Family.ANBNCN: ("abc", (0, 0, 0)),
    Family.ANBNCNDN: ("abcd", (0, 0, 0, 0)),
    Family.ANBMAMBN: ("abab", (0, 1, 1, 0)),
    Family.ANBMAMBM: ("abab", (0, 1, 1, 1)),
}

_COUNTER_ALPHABETS = {
    Family.ANBNCN: "abc",
    Family.ANBNCNDN: "abcd",
    Family.ANBMAMBN: "ab",
    Family.ANBMAMBM: "ab",
}


@dataclass(frozen=True)
class Grammar:
    family: Family
    k: int = 1  # bracket pair count, Dyck only

    def __post_init__(self):
        if self.family is Family.DYCK:
            if not 1 <= self.k <= len(_BRACKET_PAIRS):
                raise ValueError(f"Dyck-k supports 1 <= k <= {len(_BRACKET_PAIRS)}")

    @property
    def alphabet_size(self) -> int:
        if self.family is Family.DYCK:
            return 2 * self.k
        return len(_COUNTER_ALPHABETS[self.family])

    @property
    def symbols_text(self) -> str:
        if self.family is Family.DYCK:
            return "".join(_BRACKET_PAIRS[i] for i in range(self.k))
        return _COUNTER_ALPHABETS[self.family]

    @property
    def name(self) -> str:
        if self.family is Family.DYCK:
            return f"dyck{self.k}"
        return self.family.value

    def to_text(self, seq) -> str:
        chars = self.symbols_text
        return "".join(chars[s] for s in self.check(seq))

    def from_text(self, text: str):
        chars = self.symbols_text
        try:
            return tuple(chars.index(ch) for ch in text)
        except ValueError:
            raise InvalidSymbol(f"character not in alphabet of {self.name}: {text!r}")

    def check(self, seq):
        """Normalize to a tuple of ints, rejecting out-of-alphabet symbols."""
        if isinstance(seq, str):
            return self.from_text(seq)
        seq = tuple(seq)
        n = self.alphabet_size
        for s in seq:
            if not 0 <= s < n:
                raise InvalidSymbol(f"symbol {s} outside alphabet of {self.name}")
        return seq


def grammar_by_name(name: str) -> Grammar:
    name = name.lower().replace("-", "")
    if name.startswith("dyck"):
        return Grammar(Family.DYCK, k=int(name[4:] or 1))
    for fam in _COUNTER_ALPHABETS:
        if fam.value == name:
            return Grammar(fam)
    raise ValueError(f"unknown grammar: {name}")


def _blocks(seq):
    """Maximal same-symbol runs as (symbol, run length) pairs."""
    return [(s, len(list(g))) for s, g in itertools.groupby(seq)]


def _counter_member(g: Grammar, seq) -> bool:
    pattern, vars_ = _COUNTER_TEMPLATES[g.family]
    if len(seq) == 0:
        return True  # n = m = 0
    blocks = _blocks(seq)
    if len(blocks) != len(pattern):
        return False
    letters = _COUNTER_ALPHABETS[g.family]
    assignment = {}
    for (sym, count), letter, var in zip(blocks, pattern, vars_):
        if letters[sym] != letter:
            return False
        if assignment.setdefault(var, count) != count:
            return False
    return True


def _dyck_member(k: int, seq) -> bool:
    stack = []
    for s in seq:
        if s % 2 == 0:
            stack.append(s)
        else:
            if not stack or stack.pop() != s - 1:
                return False
    return not stack


def is_member(g: Grammar, seq) -> bool:
    """Exact membership by direct structural check."""
    seq = g.check(seq)
    if g.family is Family.DYCK:
        return _dyck_member(g.k, seq)
    return _counter_member(g, seq)


# ---------------------------------------------------------------------------
# Counter machine interpreter (7-tuple automaton with zero-tested counters)
# ---------------------------------------------------------------------------

INC = "+1"
DEC = "-1"  # guarded: a zero counter stays at zero
NOP = "+0"
CLR = "x0"
ACTIONS = (INC, DEC, NOP, CLR)


class AcceptMode(enum.Enum):
    FINAL_STATE = "final_state"
    COUNTERS_ZERO = "counters_zero"
    BOTH = "both"


@dataclass(frozen=True)
class CounterMachine:
    states: tuple
    alphabet_size: int
    initial: object
    accepting: frozenset
    counter_count: int
    # keyed by (symbol, state, zero_flags); zero_flags is a 0/1 tuple
    delta: dict = field(hash=False)
    gamma: dict = field(hash=False)
    acceptance_mode: AcceptMode = AcceptMode.BOTH

    def __post_init__(self):
        flag_space = list(itertools.product((0, 1), repeat=self.counter_count))
        for sym in range(self.alphabet_size):
            for q in self.states:
                for flags in flag_space:
                    key = (sym, q, flags)
                    if key not in self.delta or key not in self.gamma:
                        raise ValueError(f"transition table not total: missing {key}")
                    if len(self.gamma[key]) != self.counter_count:
                        raise ValueError(f"gamma arity mismatch at {key}")


@dataclass(frozen=True)
class MembershipVerdict:
    accepted: bool
    final_state: object
    final_counters: tuple


def _accepts(cm: CounterMachine, state, counters) -> bool:
    in_f = state in cm.accepting
    zero = all(c == 0 for c in counters)
    if cm.acceptance_mode is AcceptMode.FINAL_STATE:
        return in_f
    if cm.acceptance_mode is AcceptMode.COUNTERS_ZERO:
        return zero
    return in_f and zero


def cm_step(cm: CounterMachine, state, counters, sym):
    """One interpreter step; returns (state, counters)."""
    flags = tuple(1 if c == 0 else 0 for c in counters)
    key = (sym, state, flags)
    actions = cm.gamma[key]
    new = []
    for c, act in zip(counters, actions):
        if act == INC:
            c = c + 1
        elif act == DEC:
            c = c - 1 if c > 0 else 0
        elif act == CLR:
            c = 0
        new.append(c)
    return cm.delta[key], tuple(new)


def run_counter_machine(cm: CounterMachine, seq) -> MembershipVerdict:
    state, counters = cm.initial, (0,) * cm.counter_count
    for sym in seq:
        if not 0 <= sym < cm.alphabet_size:
            raise InvalidSymbol(f"symbol {sym} outside machine alphabet")
        state, counters = cm_step(cm, state, counters, sym)
    return MembershipVerdict(_accepts(cm, state, counters), state, counters)


def _build_cm(states, alphabet_size, initial, accepting, n_counters, rules,
              trap="trap"):
    """Assemble a total transition table from sparse rules.

    rules: {(sym, state): fn(flags) -> (next_state, actions)}.  Unlisted
    (sym, state) combinations route to the trap state with no-ops.
    """
    all_states = tuple(states) + ((trap,) if trap not in states else ())
    delta, gamma = {}, {}
    nop = (NOP,) * n_counters
    for sym in range(alphabet_size):
        for q in all_states:
            for flags in itertools.product((0, 1), repeat=n_counters):
                rule = rules.get((sym, q))
                if rule is None:
                    nxt, acts = trap, nop
                else:
                    nxt, acts = rule(flags)
                delta[(sym, q, flags)] = nxt
                gamma[(sym, q, flags)] = acts
    return CounterMachine(all_states, alphabet_size, initial,
                          frozenset(accepting), n_counters, delta, gamma)


def anbn_machine() -> CounterMachine:
    """2-state, 1-counter machine for a^n b^n over alphabet {a=0, b=1}."""
    A, B = 0, 1
    rules = {
        (A, "qa"): lambda f: ("qa", (INC,)),
        (B, "qa"): lambda f: ("trap", (NOP,)) if f[0] else ("qb", (DEC,)),
        (B, "qb"): lambda f: ("trap", (NOP,)) if f[0] else ("qb", (DEC,)),
    }
    return _build_cm(("qa", "qb"), 2, "qa", {"qa", "qb"}, 1, rules)


def _dyck1_machine() -> CounterMachine:
    OPEN, CLOSE = 0, 1
    rules = {
        (OPEN, "q"): lambda f: ("q", (INC,)),
        # strict rejection of close-at-zero via an explicit trap state
        (CLOSE, "q"): lambda f: ("trap", (NOP,)) if f[0] else ("q", (DEC,)),
    }
    return _build_cm(("q",), 2, "q", {"q"}, 1, rules)


def _chain_machine(n_letters: int) -> CounterMachine:
    """Machine for a^n b^n (c^n (d^n)) chains with n_letters-1 counters.

    Letter i increments counter i and decrements counter i-1; out-of-order
    letters and decrement-at-zero route to the trap state.
    """
    nc = n_letters - 1
    states = tuple(f"q{i}" for i in range(n_letters))

    def rule(sym, phase):
        def fn(flags):
            acts = [NOP] * nc
            if sym < phase:
                return "trap", tuple(acts)
            if sym > phase and flags[sym - 1]:
                return "trap", tuple(acts)
            if sym < nc:
                acts[sym] = INC
            if sym > 0:
                if flags[sym - 1]:
                    return "trap", tuple([NOP] * nc)
                acts[sym - 1] = DEC
            return f"q{sym}", tuple(acts)
        return fn

    rules = {}
    for sym in range(n_letters):
        for phase in range(n_letters):
            rules[(sym, f"q{phase}")] = rule(sym, phase)
    return _build_cm(states, n_letters, "q0",
                     {"q0", f"q{n_letters - 1}"}, nc, rules)


def _anbmambn_machine() -> CounterMachine:
    """a^n b^m a^m b^n: counter 0 matches the outer a/b blocks, counter 1
    the inner b/a blocks."""
    A, B = 0, 1
    rules = {
        (A, "q0"): lambda f: ("q1", (INC, NOP)),
        (A, "q1"): lambda f: ("q1", (INC, NOP)),
        (B, "q1"): lambda f: ("q2", (NOP, INC)),
        (B, "q2"): lambda f: ("q2", (NOP, INC)),
        (A, "q2"): lambda f: ("trap", (NOP, NOP)) if f[1] else ("q3", (NOP, DEC)),
        (A, "q3"): lambda f: ("trap", (NOP, NOP)) if f[1] else ("q3", (NOP, DEC)),
        (B, "q3"): lambda f: ("trap", (NOP, NOP)) if f[0] else ("q4", (DEC, NOP)),
        (B, "q4"): lambda f: ("trap", (NOP, NOP)) if f[0] else ("q4", (DEC, NOP)),
    }
    return _build_cm(("q0", "q1", "q2", "q3", "q4"), 2, "q0",
                     {"q0", "q4"}, 2, rules)


def _anbmambm_machine() -> CounterMachine:
    """a^n b^m a^m b^m: counter 0 matches b-block-1 vs a-block-2, counter 1
    matches a-block-2 vs b-block-2."""
    A, B = 0, 1
    rules = {
        (A, "q0"): lambda f: ("q1", (NOP, NOP)),
        (A, "q1"): lambda f: ("q1", (NOP, NOP)),
        (B, "q1"): lambda f: ("q2", (INC, NOP)),
        (B, "q2"): lambda f: ("q2", (INC, NOP)),
        (A, "q2"): lambda f: ("trap", (NOP, NOP)) if f[0] else ("q3", (DEC, INC)),
        (A, "q3"): lambda f: ("trap", (NOP, NOP)) if f[0] else ("q3", (DEC, INC)),
        (B, "q3"): lambda f: ("trap", (NOP, NOP)) if f[1] else ("q4", (NOP, DEC)),
        (B, "q4"): lambda f: ("trap", (NOP, NOP)) if f[1] else ("q4", (NOP, DEC)),
    }
    return _build_cm(("q0", "q1", "q2", "q3", "q4"), 2, "q0",
                     {"q0", "q4"}, 2, rules)


def built_in_cm(g: Grammar) -> CounterMachine:
    """A counter machine whose language equals is_member's language for g.

    Supported: the four counter families and Dyck-1 (a one-counter
    language).  Dyck-k with k >= 2 is not a counter language.
    """
    if g.family is Family.DYCK:
        if g.k == 1:
            return _dyck1_machine()
        raise UnsupportedGrammar("no counter machine for Dyck-k with k >= 2")
    if g.family is Family.ANBNCN:
        return _chain_machine(3)
    if g.family is Family.ANBNCNDN:
        return _chain_machine(4)
    if g.family is Family.ANBMAMBN:
        return _anbmambn_machine()
    if g.family is Family.ANBMAMBM:
        return _anbmambm_machine()
    raise UnsupportedGrammar(str(g.family))


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def _dyck_words(k: int, length: int, cache=None):
    """All Dyck-k words of exactly the given length, as tuples."""
    if cache is None:
        cache = {}
    if length in cache:
        return cache[length]
    if length % 2:
        out = []
    elif length == 0:
        out = [()]
    else:
        out = []
        # first-return decomposition: word = open_t A close_t B
        for i in range(0, length - 1, 2):
            for inner in _dyck_words(k, i, cache):
                for rest in _dyck_words(k, length - 2 - i, cache):
                    for t in range(k):
                        out.append((2 * t,) + inner + (2 * t + 1,) + rest)
    cache[length] = out
    return out


def feasible_lengths(g: Grammar, lo: int, hi: int):
    """Lengths in [lo, hi] at which the language has at least one member."""
    out = []
    for l in range(max(lo, 0), hi + 1):
        if l == 0:
            out.append(l)
        elif g.family is Family.DYCK:
            if l % 2 == 0:
                out.append(l)
        elif g.family is Family.ANBNCN:
            if l % 3 == 0 and l >= 3:
                out.append(l)
        elif g.family is Family.ANBNCNDN:
            if l % 4 == 0 and l >= 4:
                out.append(l)
        elif g.family is Family.ANBMAMBN:
            if l % 2 == 0 and l >= 4:
                out.append(l)
        elif g.family is Family.ANBMAMBM:
            if l >= 4:
                out.append(l)
    return out


def counter_exponent_choices(g: Grammar, length: int):
    """All (n, m) with n, m >= 1 realizing a member of exactly this length.

    Families with a single variable return (n,) tuples.
    """
    fam = g.family
    if fam is Family.ANBNCN:
        return [(length // 3,)] if length % 3 == 0 and length >= 3 else []
    if fam is Family.ANBNCNDN:
        return [(length // 4,)] if length % 4 == 0 and length >= 4 else []
    if fam is Family.ANBMAMBN:
        if length % 2 or length < 4:
            return []
        half = length // 2
        return [(n, half - n) for n in range(1, half)]
    if fam is Family.ANBMAMBM:
        out = []
        for m in range(1, (length - 1) // 3 + 1):
            n = length - 3 * m
            if n >= 1:
                out.append((n, m))
        return out
    raise UnsupportedGrammar("not a counter family")


def render_counter_word(g: Grammar, exponents):
    """Build the word from exponent variables, as a tuple of symbol ids."""
    pattern, vars_ = _COUNTER_TEMPLATES[g.family]
    letters = _COUNTER_ALPHABETS[g.family]
    word = []
    for letter, var in zip(pattern, vars_):
        word.extend([letters.index(letter)] * exponents[var])
    return tuple(word)


def block_exponents(g: Grammar) -> tuple:
    """Per-block exponent variable indices for a counter family."""
    return _COUNTER_TEMPLATES[g.family][1]


def enumerate_members(g: Grammar, max_len: int):
    """All members of length <= max_len in length-then-lexicographic order."""
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    out = [()]
    if g.family is Family.DYCK:
        cache = {}
        for l in range(2, max_len + 1, 2):
            out.extend(sorted(_dyck_words(g.k, l, cache)))
    else:
        for l in range(1, max_len + 1):
            words = [render_counter_word(g, e)
                     for e in counter_exponent_choices(g, l)]
            out.extend(sorted(words))
    return out


# ---------------------------------------------------------------------------
# Incremental membership tracker + CM equivalence verification
# ---------------------------------------------------------------------------

class _MemberTracker:
    """Incremental sufficient statistic of is_member for one grammar.

    Used to verify CM/oracle agreement over all strings up to a length by
    a merge-on-configuration depth-first sweep, which is exhaustive over
    strings without enumerating them one by one.
    """

    def __init__(self, g: Grammar):
        self.g = g

    def start(self):
        if self.g.family is Family.DYCK:
            return ()  # the stack
        return ((), ())  # (blocks so far, current run) as (sym, count)

    def step(self, state, sym):
        if self.g.family is Family.DYCK:
            stack = state
            if sym % 2 == 0:
                return stack + (sym,)
            if stack and stack[-1] == sym - 1:
                return stack[:-1]
            return None  # dead: no suffix can recover
        blocks, run = state
        if run and run[0] == sym:
            return (blocks, (sym, run[1] + 1))
        if run:
            blocks = blocks + (run,)
        pattern = _COUNTER_TEMPLATES[self.g.family][0]
        letters = _COUNTER_ALPHABETS[self.g.family]
        if len(blocks) >= len(pattern) or letters[sym] != pattern[len(blocks)]:
            return None
        return (blocks, (sym, 1))

    def accepts(self, state):
        if state is None or state == "dead":
            return False
        if self.g.family is Family.DYCK:
            return state == ()
        blocks, run = state
        if run:
            blocks = blocks + (run,)
        if not blocks:
            return True
        pattern, vars_ = _COUNTER_TEMPLATES[self.g.family]
        if len(blocks) != len(pattern):
            return False
        assignment = {}
        for (sym, count), var in zip(blocks, vars_):
            if assignment.setdefault(var, count) != count:
                return False
        return True


def verify_cm_equivalence(g: Grammar, max_len: int,
                          spot_check_len: int | None = None) -> int:
    """Prove is_member == CM acceptance for ALL strings of length <= max_len.

    Walks the product of CM configurations and membership-tracker states,
    merging strings that share a joint configuration (they agree on all
    suffixes).  Every distinct joint configuration is additionally checked
    with the real run_counter_machine / is_member on a witness string.
    Returns the number of distinct configurations verified; raises
    AssertionError on any disagreement.
    """
    cm = built_in_cm(g)
    tracker = _MemberTracker(g)
    n = g.alphabet_size
    checked = 0
    seen = set()
    # breadth-first so each config is first reached at its shortest depth,
    # which maximizes the suffix budget covered by its one exploration
    queue = deque([((cm.initial, (0,) * cm.counter_count),
                    tracker.start(), (), 0)])
    while queue:
        cm_cfg, tr_state, witness, depth = queue.popleft()
        key = (cm_cfg, tr_state)
        if key in seen:
            continue
        seen.add(key)
        # ground the merged configuration in the real operations
        v = run_counter_machine(cm, witness)
        member = is_member(g, witness)
        assert v.accepted == member, (
            f"CM/oracle disagreement on {g.name} string {witness}: "
            f"cm={v.accepted} oracle={member}")
        assert tracker.accepts(tr_state) == member
        checked += 1
        if depth == max_len:
            continue
        state, counters = cm_cfg
        for sym in range(n):
            nxt_cm = cm_step(cm, state, counters, sym)
            if tr_state == "dead":
                nxt_tr = "dead"
            else:
                nxt_tr = tracker.step(tr_state, sym)
                if nxt_tr is None:
                    # dead for the oracle: the CM must now reject every
                    # extension, which the sweep keeps checking because the
                    # dead marker still pairs with live CM configs.
                    nxt_tr = "dead"
            queue.append((nxt_cm, nxt_tr, witness + (sym,), depth + 1))
    return checked


def all_strings(alphabet_size: int, max_len: int):
    """Every string over the alphabet with length <= max_len."""
    for l in range(max_len + 1):
        yield from itertools.product(range(alphabet_size), repeat=l)
