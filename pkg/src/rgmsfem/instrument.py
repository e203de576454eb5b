"""Process-wide operation counters used to audit the online path."""
from collections import Counter
from contextlib import contextmanager

counters = Counter()


def bump(name, n=1):
    counters[name] += n


@contextmanager
def track():
    """Yield a Counter holding the increments made inside the block."""
    before = counters.copy()
    delta = Counter()
    try:
        yield delta
    finally:
        for key, value in counters.items():
            d = value - before.get(key, 0)
            if d:
                delta[key] = d
