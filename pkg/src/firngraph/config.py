"""Flat `key = value` config parsing shared by the train and synth configs."""

from __future__ import annotations


def parse_flat_config(text: str, obj):
    """Assign `key = value` lines onto an existing dataclass instance.

    Value types are coerced from the current field values; '#' starts a
    comment; unknown keys are rejected.
    """
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not hasattr(obj, key):
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        current = getattr(obj, key)
        if isinstance(current, bool):
            obj_value = value.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            obj_value = int(value)
        elif isinstance(current, float):
            obj_value = float(value)
        else:
            obj_value = value
        setattr(obj, key, obj_value)
    return obj
