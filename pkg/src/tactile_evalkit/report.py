"""Report envelope shared by every metric and audit.

Reports are plain dicts with a fixed key set so that runs are diffable:
metric, value, sigma, sigma_policy, split, classes, per_class, skipped,
inputs, plus metric-specific extras merged at the top level. Nothing
time- or host-dependent goes in, which keeps repeated runs byte-identical.
Infinite values are encoded as the strings "inf" / "-inf" so the JSON
stays standards-compliant.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

ENVELOPE_KEYS = (
    "metric",
    "value",
    "sigma",
    "sigma_policy",
    "split",
    "classes",
    "per_class",
    "skipped",
    "inputs",
)


def _jsonify(value: Any) -> Any:
    """Coerce numpy scalars/arrays and non-finite floats to JSON-safe values."""
    import numpy as np

    if isinstance(value, (bool, str)) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            raise ValueError("refusing to report NaN")
        return value
    if isinstance(value, np.ndarray):
        return [_jsonify(v) for v in value.tolist()]
    if isinstance(value, Mapping):
        return {str(k): _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    raise TypeError("cannot report value of type %s" % type(value).__name__)


@dataclass
class MetricReport:
    """One metric result plus the configuration that produced it."""

    metric: str
    value: Any
    sigma: float | None = None
    sigma_policy: str | None = None
    split: dict | None = None
    classes: list[str] | None = None
    per_class: dict[str, float] | None = None
    skipped: list[str] | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "metric": self.metric,
            "value": _jsonify(self.value),
            "sigma": _jsonify(self.sigma),
            "sigma_policy": self.sigma_policy,
            "split": _jsonify(self.split),
            "classes": _jsonify(self.classes),
            "per_class": _jsonify(self.per_class),
            "skipped": _jsonify(self.skipped),
            "inputs": _jsonify(self.inputs),
        }
        for key, value in self.extra.items():
            if key in out:
                raise ValueError("extra field %r collides with the envelope" % key)
            out[key] = _jsonify(value)
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv_summary(self) -> str:
        """Flattened key,value rows; floats use repr so values match JSON."""
        flat: list[tuple[str, Any]] = []

        def walk(prefix: str, value: Any):
            if isinstance(value, dict):
                if not value:
                    return
                for k in sorted(value):
                    walk("%s.%s" % (prefix, k) if prefix else str(k), value[k])
            elif isinstance(value, list):
                for i, v in enumerate(value):
                    walk("%s[%d]" % (prefix, i), v)
            else:
                flat.append((prefix, value))

        walk("", self.as_dict())
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, value in sorted(flat):
            if isinstance(value, float):
                writer.writerow([key, repr(value)])
            elif value is None:
                writer.writerow([key, ""])
            else:
                writer.writerow([key, value])
        return buf.getvalue()


def gather_inputs(*sources) -> dict[str, str]:
    """Collect {path: sha256} from loaded objects that kept their source."""
    inputs: dict[str, str] = {}
    for src in sources:
        if src is None:
            continue
        path = getattr(src, "source_path", None)
        digest = getattr(src, "source_digest", None)
        if path is not None and digest is not None:
            inputs[path] = digest
    return inputs
