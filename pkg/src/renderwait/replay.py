"""Event scripts, the recorder, and the replay scheduler with its waiting strategies."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from renderwait.devicesim import Action, App, DeviceProfile, Scenario, Simulator, action_from_dict, action_to_dict
from renderwait.errors import FormatError, InvalidArgument, RecordError
from renderwait.imaging import Frame
from renderwait.states import RenderState

DEFAULT_POLL_MS = 100
# adaptive waiting gives up and dispatches after a minute of virtual time
DEFAULT_MAX_WAIT_MS = 60_000
# consecutive FullyRendered predictions needed before an adaptive dispatch
DEFAULT_CONFIRM = 2
# mean absolute pixel change between polls below which the picture counts as
# still; a status-bar clock tick moves it by about 0.1
STILL_MAD = 1.0
FIXED_MULTIPLIERS = (1, 2, 5, 10)
CSV_COLUMNS = ("scenario", "profile", "strategy", "reproduced", "elapsed_ms")


@dataclass(frozen=True)
class ScriptEvent:
    action: Action
    recorded_delay_ms: int

    def __post_init__(self) -> None:
        if self.recorded_delay_ms < 0:
            raise InvalidArgument("recorded_delay_ms must be non-negative")

    def to_dict(self) -> dict:
        return {**action_to_dict(self.action), "recorded_delay_ms": self.recorded_delay_ms}

    @classmethod
    def from_dict(cls, d: dict) -> ScriptEvent:
        return cls(action_from_dict(d), int(d["recorded_delay_ms"]))


@dataclass(frozen=True)
class EventScript:
    scenario: str
    profile: str
    expected_terminal: str
    events: tuple[ScriptEvent, ...]
    # oracle wait after the last event until the terminal screen settled
    final_delay_ms: int = 0

    def __post_init__(self) -> None:
        if not self.events:
            raise InvalidArgument("an event script needs at least one event")
        if self.final_delay_ms < 0:
            raise InvalidArgument("final_delay_ms must be non-negative")

    @property
    def total_recorded_ms(self) -> int:
        return sum(e.recorded_delay_ms for e in self.events) + self.final_delay_ms

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "profile": self.profile,
            "expected_terminal": self.expected_terminal,
            "events": [e.to_dict() for e in self.events],
            "final_delay_ms": self.final_delay_ms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EventScript:
        try:
            return cls(
                d["scenario"],
                d["profile"],
                d["expected_terminal"],
                tuple(ScriptEvent.from_dict(e) for e in d["events"]),
                int(d.get("final_delay_ms", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"malformed event script: {exc}") from exc

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> EventScript:
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc


class StatePredictor(Protocol):
    def predict(self, frame: Frame) -> tuple[RenderState, float]: ...


@dataclass(frozen=True)
class WaitStrategy:
    kind: str
    multiplier: int = 1
    poll_interval_ms: int = DEFAULT_POLL_MS
    max_wait_ms: int = DEFAULT_MAX_WAIT_MS
    confirm: int = DEFAULT_CONFIRM

    def __post_init__(self) -> None:
        if self.confirm < 1:
            raise InvalidArgument("confirm must be at least 1")
        if self.kind not in ("fixed", "adaptive", "oracle"):
            raise InvalidArgument(f"unknown strategy kind {self.kind!r}")
        if self.multiplier < 1:
            raise InvalidArgument("fixed-wait multiplier must be at least 1")
        if self.poll_interval_ms <= 0:
            raise InvalidArgument("poll_interval_ms must be positive")
        if self.max_wait_ms < self.poll_interval_ms:
            raise InvalidArgument("max_wait_ms must be at least one poll interval")

    @property
    def name(self) -> str:
        return f"fixed:{self.multiplier}" if self.kind == "fixed" else self.kind

    @classmethod
    def parse(cls, text: str, poll_interval_ms: int = DEFAULT_POLL_MS,
              max_wait_ms: int = DEFAULT_MAX_WAIT_MS, confirm: int = DEFAULT_CONFIRM) -> WaitStrategy:
        text = text.strip()
        if text.startswith("fixed:"):
            try:
                k = int(text[6:])
            except ValueError:
                raise InvalidArgument(f"bad fixed-wait multiplier in {text!r}") from None
            return cls("fixed", k, poll_interval_ms, max_wait_ms, confirm)
        if text in ("adaptive", "oracle"):
            return cls(text, 1, poll_interval_ms, max_wait_ms, confirm)
        raise InvalidArgument(f"unknown strategy {text!r} (expected fixed:<k>, adaptive or oracle)")


@dataclass
class ReplayReport:
    scenario: str
    profile: str
    strategy: str
    seed: int
    reproduced: bool
    elapsed_ms: int
    waits_ms: list[int] = field(default_factory=list)
    # index of the first event whose dispatch failed, if any
    failed_event: int | None = None
    failure: str | None = None
    terminal_screen: str = ""
    fallbacks: int = 0
    polls: int = 0


# --- recording ---------------------------------------------------------------


def _oracle_wait(sim: Simulator) -> int:
    return int(sim.next_change_ms() - sim.now_ms)


def record(sim: Simulator, scenario: Scenario) -> EventScript:
    """Run ``scenario`` with perfect waiting and capture each inter-event delay."""
    events = []
    for i, action in enumerate(scenario.actions):
        if math.isinf(sim.next_change_ms()):
            raise RecordError(f"{scenario.name}: screen never settles before event {i}")
        wait = _oracle_wait(sim)
        sim.advance(wait)
        result = sim.dispatch(action)
        if not result:
            raise RecordError(f"{scenario.name}: event {i} ({action.type} {action.widget_id}) failed: {result.value}")
        events.append(ScriptEvent(action, wait))
    if math.isinf(sim.next_change_ms()):
        raise RecordError(f"{scenario.name}: terminal screen never settles")
    final = _oracle_wait(sim)
    sim.advance(final)
    if sim.current_screen != scenario.expected_terminal:
        raise RecordError(
            f"{scenario.name}: ended on {sim.current_screen!r}, expected {scenario.expected_terminal!r}"
        )
    return EventScript(scenario.name, sim.profile.name, scenario.expected_terminal, tuple(events), final)


def record_scenario(app: App, scenario: Scenario) -> EventScript:
    return record(Simulator(app, scenario.record_profile, scenario.record_seed), scenario)


# --- replaying ---------------------------------------------------------------


def _moved(a: np.ndarray | None, b: np.ndarray) -> bool:
    if a is None or a.shape != b.shape:
        return True
    return float(np.abs(a.astype(np.int16) - b).mean()) > STILL_MAD


class _Waiter:
    def __init__(self, sim: Simulator, strategy: WaitStrategy, predictor: StatePredictor | None):
        if strategy.kind == "adaptive" and predictor is None:
            raise InvalidArgument("adaptive waiting needs a classifier")
        self.sim = sim
        self.strategy = strategy
        self.predictor = predictor
        self.fallbacks = 0
        self.polls = 0

    def wait(self, recorded_ms: int) -> int:
        s, sim = self.strategy, self.sim
        if s.kind == "fixed":
            sim.advance(s.multiplier * recorded_ms)
            return s.multiplier * recorded_ms
        if s.kind == "oracle":
            target = sim.next_change_ms()
            wait = s.max_wait_ms if math.isinf(target) else int(target - sim.now_ms)
            sim.advance(wait)
            return wait
        # Screenshots start one poll interval after the previous dispatch and
        # the classifier alone decides; the simulator's ground truth is never read.
        # Frames late in a transition can pass for the settled screen, so a
        # dispatch needs ``confirm`` FullyRendered verdicts in a row on a
        # picture that has stopped moving; a verdict on a changed picture
        # restarts the count.
        waited = streak = 0
        previous = None
        while True:
            sim.advance(s.poll_interval_ms)
            waited += s.poll_interval_ms
            self.polls += 1
            frame = sim.screenshot()
            state, _ = self.predictor.predict(frame)
            if not state.is_full:
                streak = 0
            elif streak and _moved(previous, frame.pixels):
                streak = 1
            else:
                streak += 1
            previous = frame.pixels
            if streak >= s.confirm:
                return waited
            if waited >= s.max_wait_ms:
                self.fallbacks += 1
                return waited


def replay(
    sim: Simulator, script: EventScript, strategy: WaitStrategy, predictor: StatePredictor | None = None,
    seed: int = 0,
) -> ReplayReport:
    """Replay ``script`` on a fresh simulator; failures are reported, not raised."""
    waiter = _Waiter(sim, strategy, predictor)
    start = sim.now_ms
    report = ReplayReport(script.scenario, sim.profile.name, strategy.name, seed, False, 0)
    for i, event in enumerate(script.events):
        report.waits_ms.append(waiter.wait(event.recorded_delay_ms))
        result = sim.dispatch(event.action)
        if not result:
            report.failed_event = i
            report.failure = result.value
            break
    else:
        report.waits_ms.append(waiter.wait(script.final_delay_ms))
        settled = sim.ground_truth_state().is_full
        report.reproduced = sim.current_screen == script.expected_terminal and settled
        if not report.reproduced:
            report.failure = "terminal screen mismatch" if settled else "terminal screen not rendered"
    report.elapsed_ms = sim.now_ms - start
    report.terminal_screen = sim.current_screen
    report.fallbacks = waiter.fallbacks
    report.polls = waiter.polls
    return report


# --- benchmarking ------------------------------------------------------------


@dataclass(frozen=True)
class Aggregate:
    profile: str
    strategy: str
    runs: int
    reproduced: int
    mean_elapsed_ms: float

    @property
    def reproducibility(self) -> float:
        return self.reproduced / self.runs if self.runs else 0.0


@dataclass
class BenchResult:
    reports: list[ReplayReport]
    aggregates: list[Aggregate]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.reports:
            w.writerow([r.scenario, r.profile, r.strategy, "true" if r.reproduced else "false", r.elapsed_ms])
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("profile", "strategy", "runs", "reproduced", "reproducibility", "mean_elapsed_ms"))
        for a in self.aggregates:
            w.writerow([a.profile, a.strategy, a.runs, a.reproduced, f"{a.reproducibility:.4f}",
                        f"{a.mean_elapsed_ms:.1f}"])
        return buf.getvalue()

    def by_strategy(self, reports: list[ReplayReport] | None = None) -> dict[str, tuple[float, float]]:
        """strategy -> (reproducibility, mean elapsed) over the given reports."""
        return _aggregate_by(reports if reports is not None else self.reports, lambda r: r.strategy)


def _aggregate_by(reports: list[ReplayReport], key) -> dict[Any, tuple[float, float]]:
    groups: dict[Any, list[ReplayReport]] = {}
    for r in reports:
        groups.setdefault(key(r), []).append(r)
    return {
        k: (sum(r.reproduced for r in g) / len(g), sum(r.elapsed_ms for r in g) / len(g)) for k, g in groups.items()
    }


def aggregate(reports: list[ReplayReport]) -> list[Aggregate]:
    groups: dict[tuple[str, str], list[ReplayReport]] = {}
    for r in reports:
        groups.setdefault((r.profile, r.strategy), []).append(r)
    return [
        Aggregate(p, s, len(g), sum(r.reproduced for r in g), sum(r.elapsed_ms for r in g) / len(g))
        for (p, s), g in groups.items()
    ]


def bench(
    suite: list[tuple[App, Scenario]],
    profiles: list[DeviceProfile | str] | None,
    strategies: list[WaitStrategy],
    seeds: list[int],
    predictor: StatePredictor | None = None,
) -> BenchResult:
    """Record each scenario once, then replay the full cross product.

    Rows are ordered scenario, profile, strategy, seed. ``profiles=None``
    uses every profile declared by each scenario's app.
    """
    if not suite or not strategies or not seeds:
        raise InvalidArgument("bench needs scenarios, strategies and seeds")
    reports = []
    for app, scenario in suite:
        script = record_scenario(app, scenario)
        for profile in profiles or app.profiles:
            for strategy in strategies:
                for seed in seeds:
                    sim = Simulator(app, profile, seed)
                    reports.append(replay(sim, script, strategy, predictor, seed))
    return BenchResult(reports, aggregate(reports))
