"""Benchmark languages, ground-truth DFAs, and train-set generation."""

from __future__ import annotations

import random
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .automata import Alphabet, Dfa, Word, dfa_from_predicate, minimize

BINARY = Alphabet(("0", "1"))
LOWER = tuple(string.ascii_lowercase)
BP_ALPHABET = Alphabet(LOWER + ("(", ")"))
COUNTING_ALPHABET = Alphabet(LOWER + ("1", "2", "3", "4", "5"))
JSON_ALPHABET = Alphabet(("[", "]", "S", "0", "N", "T", "F", ","))
EMAIL_ALPHABET = Alphabet(LOWER + tuple(string.digits) + ("@", "."))

# draws per length before a class is declared scarce
SAMPLING_BUDGET = 100_000


@dataclass
class LanguageSpec:
    name: str
    alphabet: Alphabet
    oracle: Callable[[str], bool]
    dfa: Optional[Dfa] = None
    generator: Optional[Callable[[random.Random], str]] = None

    def member(self, word: Sequence[int]) -> bool:
        return bool(self.oracle(self.alphabet.decode(word)))

    def classify(self, word: Sequence[int]) -> bool:
        if self.dfa is not None:
            return self.dfa.classify(word)
        return self.member(word)


@dataclass
class LabeledDataset:
    alphabet: Alphabet
    samples: list = field(default_factory=list)  # (word, label)

    def __len__(self):
        return len(self.samples)

    def words(self):
        return [w for w, _ in self.samples]

    def labels(self):
        return [y for _, y in self.samples]

    def stats(self) -> dict:
        """Per-length ``(total, positives)`` counts."""
        total = Counter(len(w) for w, _ in self.samples)
        pos = Counter(len(w) for w, y in self.samples if y)
        return {n: (total[n], pos[n]) for n in sorted(total)}

    def dumps(self) -> str:
        return "".join(f"{int(y)}\t{self.alphabet.decode(w)}\n" for w, y in self.samples)

    @classmethod
    def loads(cls, text: str, alphabet: Alphabet) -> "LabeledDataset":
        samples = []
        for line in text.splitlines():
            if not line.strip("\n"):
                continue
            label, _, word = line.partition("\t")
            if label not in ("0", "1"):
                raise ValueError(f"bad dataset line {line!r}")
            w = alphabet.encode(word if all(len(s) == 1 for s in alphabet.symbols) else word.split())
            samples.append((w, label == "1"))
        return cls(alphabet, samples)

    def shortest_of_each_class(self):
        """(shortest accepted word, shortest rejected word), shortlex; None if absent."""
        pos = [w for w, y in self.samples if y]
        neg = [w for w, y in self.samples if not y]
        key = lambda w: (len(w), w)
        return (min(pos, key=key) if pos else None, min(neg, key=key) if neg else None)


# -- Tomita grammars ---------------------------------------------------------

_NOT_TOMITA_3 = re.compile(r"((0|1)*0)*1(11)*(0(0|1)*1)*0(00)*(1(0|1)*)*")


def _tomita_oracles():
    return {
        1: lambda w: "0" not in w,
        2: lambda w: w == "10" * (len(w) // 2),
        3: lambda w: _NOT_TOMITA_3.fullmatch(w) is None,
        4: lambda w: "000" not in w,
        5: lambda w: w.count("0") % 2 == 0 and w.count("1") % 2 == 0,
        6: lambda w: (w.count("0") - w.count("1")) % 3 == 0,
        7: lambda w: re.fullmatch(r"0*1*0*1*", w) is not None,
    }


def _tomita_dfas():
    t = {}
    # 1*
    t[1] = ({"a": {"1": "a"}}, "a", ["a"])
    # (10)*
    t[2] = ({"e": {"1": "o"}, "o": {"0": "e"}}, "e", ["e"])
    # rejects once an odd run of 1s is later followed by an odd run of 0s:
    # s0 no odd 1-run seen and not inside an odd 1-run; s1 inside an odd
    # 1-run; s3 after an odd 1-run, inside an odd 0-run; s4 after an odd
    # 1-run, anywhere else
    t[3] = ({
        "s0": {"0": "s0", "1": "s1"},
        "s1": {"0": "s3", "1": "s0"},
        "s3": {"0": "s4", "1": "dead"},
        "s4": {"0": "s3", "1": "s4"},
        "dead": {"0": "dead", "1": "dead"},
    }, "s0", ["s0", "s1", "s4"])
    # no 000
    t[4] = ({"z0": {"0": "z1", "1": "z0"}, "z1": {"0": "z2", "1": "z0"}, "z2": {"1": "z0"}},
            "z0", ["z0", "z1", "z2"])
    # both counts even
    t[5] = ({"ee": {"0": "oe", "1": "eo"}, "oe": {"0": "ee", "1": "oo"},
             "eo": {"0": "oo", "1": "ee"}, "oo": {"0": "eo", "1": "oe"}}, "ee", ["ee"])
    # (#0 - #1) mod 3 == 0
    t[6] = ({"m0": {"0": "m1", "1": "m2"}, "m1": {"0": "m2", "1": "m0"},
             "m2": {"0": "m0", "1": "m1"}}, "m0", ["m0"])
    # 0*1*0*1*
    t[7] = ({"a": {"0": "a", "1": "b"}, "b": {"0": "c", "1": "b"},
             "c": {"0": "c", "1": "d"}, "d": {"1": "d"}}, "a", ["a", "b", "c", "d"])
    return t


def tomita(i: int) -> LanguageSpec:
    if i not in range(1, 8):
        raise ValueError(f"Tomita grammars are numbered 1..7, got {i}")
    transitions, initial, accepting = _tomita_dfas()[i]
    dfa = minimize(dfa_from_predicate(BINARY, transitions, initial, accepting))
    return LanguageSpec(f"tomita{i}", BINARY, _tomita_oracles()[i], dfa)


# -- balanced parentheses -----------------------------------------------------

def bp_oracle(w: str) -> bool:
    depth = 0
    for c in w:
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def bp_depth(w: str) -> int:
    depth = best = 0
    for c in w:
        if c == "(":
            depth += 1
            best = max(best, depth)
        elif c == ")":
            depth -= 1
    return best


def _balanced(rng: random.Random, depth: int, budget: int) -> str:
    # concatenation of pieces: letters or a parenthesized balanced word
    out = []
    while budget > 0 and rng.random() < 0.8:
        if depth > 0 and rng.random() < 0.5:
            inner = _balanced(rng, depth - 1, budget // 2)
            out.append("(" + inner + ")")
            budget -= len(inner) + 2
        else:
            out.append(rng.choice(LOWER))
            budget -= 1
    return "".join(out)


def bp_generator(max_depth: int = 11, max_length: int = 60):
    def gen(rng: random.Random) -> str:
        d = rng.randint(0, max_depth)
        # force exactly depth d by nesting d parentheses around padding
        core = ""
        for i in range(d):
            # padding added now ends up inside d - i - 1 more parentheses
            room = max_depth - (d - i - 1)
            left = _balanced(rng, rng.randint(0, min(2, room)), 4)
            right = _balanced(rng, rng.randint(0, min(2, room)), 4)
            core = left + "(" + core + ")" + right
        room = min(2, max_depth)
        w = _balanced(rng, room, 6) + core + _balanced(rng, room, 6)
        return w[:max_length] if bp_oracle(w[:max_length]) else core
    return gen


def bounded_bp_dfa(k: int) -> Dfa:
    """DFA for balanced-parenthesis words of nesting depth at most ``k``."""
    transitions = {}
    for d in range(k + 1):
        row = {c: f"d{d}" for c in LOWER}
        if d < k:
            row["("] = f"d{d + 1}"
        if d > 0:
            row[")"] = f"d{d - 1}"
        transitions[f"d{d}"] = row
    return minimize(dfa_from_predicate(BP_ALPHABET, transitions, "d0", ["d0"]))


def bp(max_depth: int = 11) -> LanguageSpec:
    return LanguageSpec("bp", BP_ALPHABET, bp_oracle, None, bp_generator(max_depth))


# -- regex-like languages with hand-compiled DFAs -----------------------------

_COUNTING_RE = re.compile(r"[a-z]*1[a-z1]*2[a-z2]*3[a-z3]*4[a-z4]*5[a-z5]*")
_JSON_RE = re.compile(r"(\[\])|(\[[S0NTF](,[S0NTF])*\])")
# the dot before the top-level domain is a literal symbol of the alphabet
_EMAIL_RE = re.compile(r"[a-z][a-z0-9]*@[a-z0-9]+\.(com|net|co\.[a-z][a-z])")


def _counting_dfa() -> Dfa:
    transitions = {"c0": {c: "c0" for c in LOWER}}
    transitions["c0"]["1"] = "c1"
    for k in range(1, 6):
        row = {c: f"c{k}" for c in LOWER}
        row[str(k)] = f"c{k}"
        if k < 5:
            row[str(k + 1)] = f"c{k + 1}"
        transitions[f"c{k}"] = row
    return minimize(dfa_from_predicate(COUNTING_ALPHABET, transitions, "c0", ["c5"]))


def _json_dfa() -> Dfa:
    items = "S0NTF"
    transitions = {
        "start": {"[": "open"},
        "open": {"]": "done", **{c: "item" for c in items}},
        "item": {",": "comma", "]": "done"},
        "comma": {c: "item" for c in items},
        "done": {},
    }
    return minimize(dfa_from_predicate(JSON_ALPHABET, transitions, "start", ["done"]))


def _email_dfa() -> Dfa:
    alnum = LOWER + tuple(string.digits)
    t = {
        "start": {c: "local" for c in LOWER},
        "local": {**{c: "local" for c in alnum}, "@": "at"},
        "at": {c: "domain" for c in alnum},
        "domain": {**{c: "domain" for c in alnum}, ".": "dot"},
        "dot": {"c": "c", "n": "n"},
        "c": {"o": "co"},
        "co": {"m": "tld", ".": "co."},
        "n": {"e": "ne"},
        "ne": {"t": "tld"},
        "co.": {c: "co.x" for c in LOWER},
        "co.x": {c: "tld" for c in LOWER},
        "tld": {},
    }
    return minimize(dfa_from_predicate(EMAIL_ALPHABET, t, "start", ["tld"]))


def counting() -> LanguageSpec:
    return LanguageSpec("counting", COUNTING_ALPHABET,
                        lambda w: _COUNTING_RE.fullmatch(w) is not None, _counting_dfa(),
                        _counting_generator)


def _counting_generator(rng: random.Random) -> str:
    out = []
    for k in "12345":
        out.append(k * rng.randint(1, 3))
        out.extend(rng.choice(LOWER + (k,)) for _ in range(rng.randint(0, 4)))
    pre = "".join(rng.choice(LOWER) for _ in range(rng.randint(0, 4)))
    return pre + "".join(out)


def json_lists() -> LanguageSpec:
    return LanguageSpec("json_lists", JSON_ALPHABET,
                        lambda w: _JSON_RE.fullmatch(w) is not None, _json_dfa(),
                        _json_generator)


def _json_generator(rng: random.Random) -> str:
    n = rng.randint(0, 12)
    return "[" + ",".join(rng.choice("S0NTF") for _ in range(n)) + "]"


def _email_generator(rng: random.Random) -> str:
    alnum = string.ascii_lowercase + string.digits

    def part(first_letter):
        n = rng.randint(2, 8)
        head = rng.choice(string.ascii_lowercase) if first_letter else rng.choice(alnum)
        return head + "".join(rng.choice(alnum) for _ in range(n - 1))

    tlds = ["com", "net"]
    k = rng.randrange(len(tlds) + 26 * 26)
    tld = tlds[k] if k < len(tlds) else "co." + LOWER[(k - 2) // 26] + LOWER[(k - 2) % 26]
    return part(True) + "@" + part(False) + "." + tld


def emails() -> LanguageSpec:
    return LanguageSpec("emails", EMAIL_ALPHABET,
                        lambda w: _EMAIL_RE.fullmatch(w) is not None, _email_dfa(),
                        _email_generator)


def from_dfa(dfa: Dfa, name: str = "dfa") -> LanguageSpec:
    alphabet = dfa.alphabet
    return LanguageSpec(name, alphabet, lambda w: dfa.classify(alphabet.encode(w)), dfa)


def random_language(n_states: int, alphabet_size: int, seed: int) -> LanguageSpec:
    from .automata import random_min_dfa
    alphabet = Alphabet(tuple("abcdefghijklmnopqrstuvwxyz"[:alphabet_size]))
    return from_dfa(random_min_dfa(n_states, alphabet, seed), f"random{n_states}_{alphabet_size}_{seed}")


REGISTRY = {
    **{f"tomita{i}": (lambda i=i: tomita(i)) for i in range(1, 8)},
    "bp": bp,
    "counting": counting,
    "json_lists": json_lists,
    "emails": emails,
}


def get_language(name: str) -> LanguageSpec:
    """Look up a registered language; ``random<n>_<k>_<seed>`` names a random DFA."""
    m = re.fullmatch(r"random(\d+)_(\d+)_(\d+)", name)
    if m:
        return random_language(*(int(x) for x in m.groups()))
    try:
        return REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown language {name!r}; known: {sorted(REGISTRY)} or random<n>_<k>_<seed>") from None


# -- train sets ----------------------------------------------------------------

def mutate(word: str, alphabet: Alphabet, rng: random.Random, max_edits: int = 9) -> str:
    """Apply 1..max_edits random add/remove/change/move edits."""
    chars = list(word)
    for _ in range(rng.randint(1, max_edits)):
        op = rng.choice(("add", "remove", "change", "move"))
        if op == "add" or not chars:
            chars.insert(rng.randint(0, len(chars)), rng.choice(alphabet.symbols))
        elif op == "remove":
            del chars[rng.randrange(len(chars))]
        elif op == "change":
            chars[rng.randrange(len(chars))] = rng.choice(alphabet.symbols)
        else:
            c = chars.pop(rng.randrange(len(chars)))
            chars.insert(rng.randint(0, len(chars)), c)
    return "".join(chars)


def _balance(pos: list, neg: list, target: int, rng: random.Random):
    half = target // 2
    rng.shuffle(pos)
    rng.shuffle(neg)
    if not pos or not neg:
        only = pos or neg
        return only[:min(50, target)]
    if len(pos) >= half and len(neg) >= half:
        return pos[:half] + neg[:target - half]
    scarce, plenty = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    k = min(len(scarce), target)
    return scarce[:k] + plenty[:min(50 * k, max(target - k, k))]


def make_train_set(lang: LanguageSpec, lengths: Iterable[int], per_length_target: int,
                   seed: int) -> LabeledDataset:
    """Per-length 1:1 positives/negatives where possible, 50:1 cap otherwise.

    Languages with a positive generator get positives from it and negatives by
    mutating positives; others are sampled uniformly (exhaustively when the
    length is short enough).
    """
    rng = random.Random(seed)
    alphabet = lang.alphabet
    k = len(alphabet)
    seen = set()
    samples = []
    if lang.generator is not None:
        n_pos = n_neg = per_length_target * len(list(lengths)) // 2
        lengths = set(lengths)
        pos, neg = set(), set()
        draws = 0
        while len(pos) < n_pos and draws < SAMPLING_BUDGET * 10:
            draws += 1
            w = lang.generator(rng)
            if len(w) in lengths and lang.oracle(w):
                pos.add(w)
        pos_list = sorted(pos)
        draws = 0
        while len(neg) < n_neg and pos_list and draws < SAMPLING_BUDGET * 10:
            draws += 1
            w = mutate(rng.choice(pos_list), alphabet, rng)
            if not lang.oracle(w) and w not in neg:
                neg.add(w)
        for text, label in [(w, True) for w in sorted(pos)] + [(w, False) for w in sorted(neg)]:
            samples.append((alphabet.encode(text), label))
        rng.shuffle(samples)
        return LabeledDataset(alphabet, samples)

    for n in sorted(set(lengths)):
        if k ** n <= SAMPLING_BUDGET:
            words = list(alphabet.words(n))
        else:
            words = set()
            for _ in range(SAMPLING_BUDGET):
                words.add(tuple(rng.randrange(k) for _ in range(n)))
                if len(words) >= 20 * per_length_target:
                    break
            words = sorted(words)
        pos = [w for w in words if lang.classify(w)]
        neg = [w for w in words if not lang.classify(w)]
        for w in _balance(pos, neg, per_length_target, rng):
            if w not in seen:
                seen.add(w)
                samples.append((w, lang.classify(w)))
    return LabeledDataset(alphabet, samples)


def random_words(alphabet: Alphabet, length: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, len(alphabet), size=(n, length), dtype=np.int64)


def _classify_batch(subject, words: np.ndarray) -> np.ndarray:
    if isinstance(subject, Dfa):
        return subject.classify_batch(words)
    if hasattr(subject, "classify_batch"):
        return np.asarray(subject.classify_batch(words), dtype=bool)
    if isinstance(subject, LanguageSpec):
        if subject.dfa is not None:
            return subject.dfa.classify_batch(words)
        return np.array([subject.member(tuple(w)) for w in words], dtype=bool)
    raise TypeError(f"cannot classify with {type(subject).__name__}")


def agreement(subject, reference, lengths: Iterable[int], n: int = 1000, seed: int = 0) -> dict:
    """Percentage of uniformly sampled words on which the two classifiers agree, per length."""
    if subject.alphabet != reference.alphabet:
        from .automata import AlphabetMismatchError
        raise AlphabetMismatchError("subject and reference have different alphabets")
    rng = np.random.default_rng(seed)
    out = {}
    for length in lengths:
        words = random_words(subject.alphabet, length, n, rng)
        a = _classify_batch(subject, words)
        b = _classify_batch(reference, words)
        out[length] = 100.0 * float(np.mean(a == b))
    return out
