"""Argument checks shared by the public entry points."""

import numbers


def check_unit_interval(value, name="r"):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_positive_int(value, name, minimum=1):
    if type(value) is int and value >= minimum:  # fast path for hot loops
        return value
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_decision_index(m, M):
    M = check_positive_int(M, "M")
    m = check_positive_int(m, "m")
    if m > M:
        raise ValueError(f"decision index m={m} exceeds M={M}")
    return m, M


def check_even_slots(M):
    M = check_positive_int(M, "M", minimum=2)
    if M % 2:
        raise ValueError(f"HDAF needs an even number of slots, got M={M}")
    return M


def check_positive(value, name):
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value
