"""Parameter and compute accounting built on the layer trace protocol.

Counts come from `Module.trace`, which mirrors the forward control flow, so
every conv, norm, and attention score product shows up as one row. The FLOP
convention is selectable: "mac" counts one multiply-accumulate as one FLOP,
"2mac" as two.
"""

from __future__ import annotations

from dataclasses import dataclass

from .layers import CostRow

CONVENTIONS = ("mac", "2mac")


@dataclass
class CostReport:
    rows: list
    input_shape: tuple
    convention: str = "mac"

    def __post_init__(self):
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")

    @property
    def total_params(self):
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self):
        return sum(r.macs for r in self.rows)

    @property
    def total_flops(self):
        scale = 2 if self.convention == "2mac" else 1
        return scale * self.total_macs

    @property
    def attention_score_macs(self):
        return sum(r.macs for r in self.rows if r.kind == "attn-score")

    def by_kind(self):
        out = {}
        for r in self.rows:
            params, macs = out.get(r.kind, (0, 0))
            out[r.kind] = (params + r.params, macs + r.macs)
        return out

    def format(self, top=None):
        lines = [
            f"input shape      {self.input_shape}",
            f"flop convention  {self.convention}",
            "",
            f"{'layer':44s} {'kind':12s} {'params':>12s} {'macs':>16s}",
        ]
        rows = self.rows if top is None else sorted(
            self.rows, key=lambda r: r.macs, reverse=True
        )[:top]
        for r in rows:
            lines.append(f"{r.name:44s} {r.kind:12s} {r.params:12d} {r.macs:16d}")
        lines.append("")
        lines.append(
            f"{'total':57s} {self.total_params:12d} {self.total_macs:16d}"
        )
        lines.append(
            f"params {self.total_params / 1e6:.3f} M   "
            f"flops {self.total_flops / 1e9:.3f} G ({self.convention})"
        )
        return "\n".join(lines)


def cost_report(model, input_shape=None, convention="mac"):
    input_shape = tuple(input_shape) if input_shape else model.cfg.input_shape
    _, rows = model.trace(input_shape)
    return CostReport(rows=rows, input_shape=input_shape, convention=convention)


def count_params(model):
    """Parameter count from live tensors, cross-checkable against the trace."""
    return model.param_count()


def count_flops(model, input_shape=None, convention="mac"):
    return cost_report(model, input_shape, convention).total_flops


# Published reference budgets: (params, flops) with flops measured at the
# default input shapes, or None where the source table omits the value.
REFERENCE_BUDGETS = {
    ("tiny", 3): (0.63e6, 15.14e9),
    ("small", 3): (1.21e6, None),
    ("basic", 3): (2.27e6, None),
    ("tiny", 2): (0.33e6, None),
    ("small", 2): (0.54e6, None),
    ("basic", 2): (0.99e6, 2.21e9),
}

PARAM_TOLERANCE = 0.15
FLOP_TOLERANCE = 0.25


def compare_to_reference(model):
    """Relative errors against the published budgets for this preset.

    Returns a dict with the measured numbers, the targets, and relative
    errors; the FLOP error is the better of the mac / 2mac conventions.
    """
    cfg = model.cfg
    key = (cfg.name.lower(), cfg.dims)
    if key not in REFERENCE_BUDGETS:
        raise KeyError(f"no reference budget for preset {key}")
    ref_params, ref_flops = REFERENCE_BUDGETS[key]
    report = cost_report(model)
    params = report.total_params
    out = {
        "params": params,
        "ref_params": ref_params,
        "param_rel_err": abs(params - ref_params) / ref_params,
        "param_ok": abs(params - ref_params) / ref_params <= PARAM_TOLERANCE,
    }
    if ref_flops is not None:
        macs = report.total_macs
        errs = {
            "mac": abs(macs - ref_flops) / ref_flops,
            "2mac": abs(2 * macs - ref_flops) / ref_flops,
        }
        conv = min(errs, key=errs.get)
        out.update(
            flops=macs * (2 if conv == "2mac" else 1),
            ref_flops=ref_flops,
            flop_convention=conv,
            flop_rel_err=errs[conv],
            flop_ok=errs[conv] <= FLOP_TOLERANCE,
        )
    return out
