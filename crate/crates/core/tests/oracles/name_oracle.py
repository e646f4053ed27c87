"""Dynamic oracle for undefined-name detection on straight-line snippets.

Generates seeded straight-line Python snippets and, for each one, records the
names that would raise NameError. Every unresolvable name is bound on first
lookup to a permissive sentinel so that a single run observes all of them.

Usage: python3 name_oracle.py [count] [seed] > analyzer_oracle.json
"""

import builtins
import json
import random
import re
import sys

POOL = ["a", "b", "c", "d", "e", "f", "g", "h"]
IMPORTABLE = ["floor", "ceil", "gcd"]
BUILTIN_CALLS = ["abs", "max", "min"]


class Sentinel:
    def __getattr__(self, name):
        return self

    def __call__(self, *args, **kwargs):
        return self

    def __index__(self):
        return 1

    def __floor__(self):
        return 1

    def __ceil__(self):
        return 1

    def __abs__(self):
        return self

    def __lt__(self, other):
        return False

    def __gt__(self, other):
        return False

    def __iter__(self):
        return iter(())

    def _binop(self, other):
        return self

    __add__ = __radd__ = __sub__ = __rsub__ = __mul__ = __rmul__ = _binop


class Recording(dict):
    def __init__(self):
        super().__init__()
        self.missing = []
        self["__builtins__"] = builtins.__dict__

    def __missing__(self, key):
        if key in builtins.__dict__:
            raise KeyError(key)
        if key not in self.missing:
            self.missing.append(key)
        return Sentinel()


BOUND = []


def name(rng):
    # Mostly read names that an earlier statement assigned.
    if BOUND and rng.random() < 0.9:
        return rng.choice(BOUND)
    if not BOUND and rng.random() < 0.8:
        return str(rng.randint(0, 9))
    return rng.choice(POOL)


def operand(rng, depth):
    roll = rng.random()
    if roll < 0.25:
        return str(rng.randint(0, 9))
    if roll < 0.65 or depth > 1:
        return name(rng)
    if roll < 0.75:
        return "{}({})".format(rng.choice(BUILTIN_CALLS[:1]), expr(rng, depth + 1))
    if roll < 0.85:
        return "{}({}, {})".format(rng.choice(BUILTIN_CALLS[1:]), expr(rng, depth + 1), expr(rng, depth + 1))
    if roll < 0.92:
        return "{}.real".format(rng.choice(BOUND or POOL))
    return "{}.bit_length()".format(rng.choice(BOUND or POOL))


def expr(rng, depth=0):
    parts = [operand(rng, depth) for _ in range(rng.randint(1, 3))]
    out = parts[0]
    for part in parts[1:]:
        out += " {} {}".format(rng.choice(["+", "-", "*"]), part)
    return out


def statement(rng):
    target = rng.choice(POOL)
    kind = rng.random()
    if kind < 0.40:
        return "{} = {}".format(target, expr(rng))
    if kind < 0.50 and BOUND:
        return "{} += {}".format(rng.choice(BOUND), expr(rng))
    if kind < 0.58:
        other = rng.choice(POOL)
        return "{}, {} = {}, {}".format(target, other, expr(rng), expr(rng))
    if kind < 0.66:
        var = rng.choice(["t", "u"])
        return "{} = sum([{} + {} for {} in range(3)])".format(target, var, expr(rng), var)
    if kind < 0.72:
        return "{} = (lambda q: q + {})({})".format(target, expr(rng), expr(rng))
    if kind < 0.78:
        other = rng.choice(POOL)
        return "{} = ({} := {}) + {}".format(target, other, expr(rng), other)
    if kind < 0.84:
        return "from math import {}".format(rng.choice(IMPORTABLE))
    if kind < 0.92:
        return "{} = {}({})".format(target, rng.choice(IMPORTABLE), expr(rng))
    return "{}({})".format(rng.choice(BUILTIN_CALLS[:1] + IMPORTABLE[:2]), expr(rng))


def snippet(rng):
    BOUND.clear()
    lines = []
    for _ in range(rng.randint(1, 6)):
        line = statement(rng)
        lines.append(line)
        BOUND.extend(n for n in POOL if re.match(r"^(\w+, )?{}\b.*=".format(n), line) or re.match(r"^{}, ".format(n), line))
    return "\n".join(lines) + "\n"


def observe(source):
    scope = Recording()
    exec(compile(source, "<snippet>", "exec"), scope)
    return scope.missing


def raises_name_error(source):
    try:
        exec(compile(source, "<snippet>", "exec"), {"__builtins__": builtins.__dict__})
    except NameError:
        return True
    return False


def main():
    count = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 7
    rng = random.Random(seed)
    cases = []
    for _ in range(count):
        source = snippet(rng)
        cases.append(
            {
                "source": source,
                "undefined": observe(source),
                "as_is_name_error": raises_name_error(source),
            }
        )
    json.dump({"seed": seed, "cases": cases}, sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
