"""Hierarchical random-access coding plan.

Frames between two intra anchors form a dyadic hierarchy: the midpoint of
every already-decoded pair is coded next (lowest display index first among
the available midpoints), so a GOP of 8 is coded 0, 8, 4, 2, 1, 3, 6, 5, 7.
When the forward anchor of a span lies beyond the last frame, the previous
intra frame stands in for it, so tail GOPs still decode cleanly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import PlanError

INTRA = "intra"
BIDIR = "bidirectional"

# Per-layer quality weights, B layer 1 first; layers past the end clamp to
# the last entry. Intra frames anchor quality at the maximum weight.
DEFAULT_QUALITY_WEIGHTS = (1.4, 1.4, 0.7, 0.5, 0.5)


@dataclass(frozen=True)
class FrameSchedule:
    t: int
    kind: str
    layer: int
    interval: int                    # i_t; 0 for intra frames
    ref_back: int | None = None      # t - i_t
    ref_fwd: int | None = None       # t + i_t, or the previous intra when proxied
    ext_back: int | None = None      # back reference of ref_back, when ref_back is a B frame
    ext_fwd: int | None = None       # forward reference of ref_fwd, when ref_fwd is a B frame
    fwd_is_proxy: bool = False

    @property
    def is_intra(self) -> bool:
        return self.kind == INTRA

    def primary_refs(self) -> tuple[int, ...]:
        if self.is_intra:
            return ()
        return (self.ref_back, self.ref_fwd)

    def extended_refs(self) -> tuple[int, ...]:
        out = []
        if self.ext_back is not None:
            out.append(self.ext_back)
        if self.ext_fwd is not None:
            out.append(self.ext_fwd)
        return tuple(out)

    def reference_set(self) -> tuple[int, ...]:
        """Distinct referenced frame indices, sorted by display order."""
        return tuple(sorted(set(self.primary_refs()) | set(self.extended_refs())))


@dataclass(frozen=True)
class GopPlan:
    intra_period: int
    frame_count: int
    coding_order: tuple[int, ...]
    schedules: tuple[FrameSchedule, ...]           # indexed by display time
    quality_weights: tuple[float, ...] = DEFAULT_QUALITY_WEIGHTS
    coding_position: dict[int, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "coding_position", {t: i for i, t in enumerate(self.coding_order)}
        )

    def schedule(self, t: int) -> FrameSchedule:
        return self.schedules[t]


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def build_plan(
    intra_period: int,
    frame_count: int,
    quality_weights: tuple[float, ...] = DEFAULT_QUALITY_WEIGHTS,
) -> GopPlan:
    """Build the full coding plan for a sequence.

    intra_period must be a power of two >= 2; frame_count >= 1.
    """
    if frame_count < 1:
        raise PlanError(f"frame_count must be >= 1, got {frame_count}")
    if intra_period < 2 or not _is_pow2(intra_period):
        raise PlanError(f"intra_period must be a power of two >= 2, got {intra_period}")

    n = frame_count
    ip = intra_period
    depth = ip.bit_length() - 1  # log2(ip)
    schedules: list[FrameSchedule | None] = [None] * n
    order: list[int] = []

    def emit_intra(t: int) -> None:
        schedules[t] = FrameSchedule(t=t, kind=INTRA, layer=0, interval=0)
        order.append(t)

    def emit_b(t: int, a: int, b: int, start: int) -> None:
        i_t = t - a
        layer = depth - (i_t.bit_length() - 1)
        proxied = b > n - 1
        fwd = start if proxied else b
        ext_back = schedules[a].ref_back if schedules[a].kind == BIDIR else None
        ext_fwd = None
        if not proxied and schedules[b].kind == BIDIR:
            ext_fwd = schedules[b].ref_fwd
        schedules[t] = FrameSchedule(
            t=t,
            kind=BIDIR,
            layer=layer,
            interval=i_t,
            ref_back=a,
            ref_fwd=fwd,
            ext_back=ext_back,
            ext_fwd=ext_fwd,
            fwd_is_proxy=proxied,
        )
        order.append(t)

    def visit_span(a: int, b: int, start: int) -> None:
        # Depth-first midpoint order; equals greedy lowest-available-midpoint.
        if b - a < 2:
            return
        m = (a + b) // 2
        if m < n:
            emit_b(m, a, b, start)
        visit_span(a, m, start)
        if m < n:
            visit_span(m, b, start)

    emit_intra(0)
    for start in range(0, n, ip):
        end = start + ip
        if end < n:
            emit_intra(end)
        visit_span(start, end, start)

    return GopPlan(
        intra_period=ip,
        frame_count=n,
        coding_order=tuple(order),
        schedules=tuple(schedules),
        quality_weights=tuple(quality_weights),
    )


def quality_weight(plan: GopPlan, t: int) -> float:
    """Hierarchical quality weight of frame t; intra frames get the maximum."""
    if t >= plan.frame_count:
        raise PlanError(f"frame {t} outside plan of {plan.frame_count} frames")
    sched = plan.schedules[t]
    weights = plan.quality_weights
    if sched.is_intra:
        return max(weights)
    return weights[min(sched.layer, len(weights)) - 1]


@dataclass(frozen=True)
class PlanReport:
    ok: bool
    message: str = "ok"
    frame: int | None = None


def validate_plan(plan: GopPlan) -> PlanReport:
    """Check permutation, reference bounds, and topological decodability.

    Returns the first violation found, or a success report.
    """
    n = plan.frame_count
    if sorted(plan.coding_order) != list(range(n)):
        return PlanReport(False, "coding_order is not a permutation of display indices")
    if len(plan.schedules) != n:
        return PlanReport(False, f"expected {n} schedules, got {len(plan.schedules)}")

    decoded: set[int] = set()
    for t in plan.coding_order:
        sched = plan.schedules[t]
        if sched.t != t:
            return PlanReport(False, f"schedule index mismatch at frame {t}", t)
        if sched.is_intra:
            if t % plan.intra_period != 0:
                return PlanReport(False, f"frame {t} marked intra off the intra grid", t)
            decoded.add(t)
            continue
        if sched.ref_back is None or sched.ref_fwd is None:
            return PlanReport(False, f"B frame {t} missing a primary reference", t)
        if sched.ref_back != t - sched.interval or sched.ref_back < 0:
            return PlanReport(False, f"frame {t} back reference out of contract", t)
        expected_fwd = t + sched.interval
        if sched.fwd_is_proxy:
            prev_intra = (t // plan.intra_period) * plan.intra_period
            if expected_fwd <= n - 1 or sched.ref_fwd != prev_intra:
                return PlanReport(False, f"frame {t} misuses the intra proxy", t)
        elif sched.ref_fwd != expected_fwd or sched.ref_fwd > n - 1:
            return PlanReport(False, f"frame {t} forward reference out of contract", t)
        for r, which in ((sched.ext_back, "back"), (sched.ext_fwd, "fwd")):
            if r is None:
                continue
            primary = sched.ref_back if which == "back" else sched.ref_fwd
            psched = plan.schedules[primary]
            if psched.kind != BIDIR:
                return PlanReport(
                    False, f"frame {t} extended {which} reference behind an intra primary", t
                )
            if plan.schedules[r].layer >= sched.layer:
                return PlanReport(
                    False, f"frame {t} extended {which} reference not at a lower layer", t
                )
        for r in sched.reference_set():
            if not (0 <= r <= n - 1):
                return PlanReport(False, f"frame {t} references {r} outside the sequence", t)
            if r not in decoded:
                return PlanReport(False, f"frame {t} references undecoded frame {r}", t)
        decoded.add(t)
    return PlanReport(True)


def format_plan(plan: GopPlan) -> str:
    """Line-oriented dump: `t kind layer i_t refs=[...]` in display order."""
    lines = []
    for sched in plan.schedules:
        refs = ",".join(str(r) for r in sched.reference_set())
        kind = "I" if sched.is_intra else "B"
        proxy = " proxy" if sched.fwd_is_proxy else ""
        lines.append(f"{sched.t} {kind} {sched.layer} {sched.interval} refs=[{refs}]{proxy}")
    return "\n".join(lines)
