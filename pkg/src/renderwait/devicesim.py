"""Deterministic virtual phone running a scripted app over virtual time.

The simulator renders screens to frames, animates slide/fade transitions,
shows a dimmed loading overlay with a spinner while a network request is in
flight, and exposes the ground-truth rendering state of every instant.
Nothing here reads the wall clock; all randomness comes from one seeded
generator consulted only when a navigation starts.
"""

from __future__ import annotations

import enum
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import erfinv

from renderwait.augment import blend, draw_loading, stitch
from renderwait.errors import FormatError, InvalidArgument
from renderwait.imaging import Frame
from renderwait.states import FULL, LOADING, TRANSITING, RenderState

DESIGN_W, DESIGN_H = 360, 640
STATUS_BAR_H = 24
# dispatch during a transition succeeds once it is this far along
MIS_TAP_PROGRESS = 0.95
LOADING_SHADOW = 0.5
SPINNER_PERIOD_MS = 100


class WidgetKind(str, enum.Enum):
    BUTTON = "button"
    TEXT = "text"
    IMAGE = "image"
    INPUT = "input"


@dataclass(frozen=True)
class Widget:
    id: str
    rect: tuple[int, int, int, int]  # x, y, w, h in design units (360x640)
    kind: WidgetKind = WidgetKind.TEXT
    fill: int = 255
    text_pattern: int = 0
    target_screen: str | None = None
    text: str | None = None
    dynamic: bool = False

    def __post_init__(self) -> None:
        x, y, w, h = self.rect
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > DESIGN_W or y + h > DESIGN_H:
            raise InvalidArgument(f"widget {self.id!r} lies outside the screen")
        if not 0 <= self.fill <= 255:
            raise InvalidArgument(f"widget {self.id!r} fill must be a gray level")

    @property
    def tappable(self) -> bool:
        return self.kind in (WidgetKind.BUTTON, WidgetKind.INPUT)


@dataclass(frozen=True)
class Latency:
    """Network delay model in milliseconds; ``never`` models a request that hangs."""

    kind: str = "fixed"
    ms: float = 0.0
    lo: float = 0.0
    hi: float = 0.0
    mu: float = 0.0
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "uniform", "lognormal", "never"):
            raise InvalidArgument(f"unknown latency model {self.kind!r}")
        if self.kind == "fixed" and self.ms < 0:
            raise InvalidArgument("fixed latency must be non-negative")
        if self.kind == "uniform" and not 0 <= self.lo <= self.hi:
            raise InvalidArgument("uniform latency needs 0 <= lo <= hi")
        if self.kind == "lognormal" and self.sigma < 0:
            raise InvalidArgument("lognormal sigma must be non-negative")

    def sample(self, rng: np.random.Generator) -> float:
        # every model consumes exactly one draw so sequences stay aligned
        u = rng.random()
        if self.kind == "fixed":
            return self.ms
        if self.kind == "uniform":
            return self.lo + u * (self.hi - self.lo)
        if self.kind == "lognormal":
            z = math.sqrt(2.0) * _erfinv(2.0 * u - 1.0)
            return math.exp(self.mu + self.sigma * z)
        return math.inf

    def to_dict(self) -> dict:
        keys = {"fixed": ("ms",), "uniform": ("lo", "hi"), "lognormal": ("mu", "sigma"), "never": ()}
        return {"type": self.kind, **{k: getattr(self, k) for k in keys[self.kind]}}

    @classmethod
    def from_dict(cls, d: dict) -> Latency:
        d = dict(d)
        return cls(kind=d.pop("type"), **d)


def _erfinv(y: float) -> float:
    return float(erfinv(min(max(y, -1.0 + 1e-16), 1.0 - 1e-16)))


@dataclass(frozen=True)
class Transition:
    kind: str = "instant"  # instant | slide | fade
    duration_ms: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("instant", "slide", "fade"):
            raise InvalidArgument(f"unknown transition {self.kind!r}")
        if self.duration_ms < 0 or (self.kind == "instant" and self.duration_ms):
            raise InvalidArgument("instant transitions have zero duration")


@dataclass(frozen=True)
class ScreenSpec:
    id: str
    widgets: tuple[Widget, ...]
    entry_transition: Transition = Transition()
    network_delay: Latency = Latency()
    header_fill: int = 60
    background: int = 244

    def __post_init__(self) -> None:
        ids = [w.id for w in self.widgets]
        if len(ids) != len(set(ids)):
            raise InvalidArgument(f"screen {self.id!r} has duplicate widget ids")

    def find(self, widget_id: str | None, text: str | None = None) -> Widget | None:
        for w in self.widgets:
            if widget_id is not None and w.id == widget_id:
                return w
        if text is not None:
            for w in self.widgets:
                if w.text == text:
                    return w
        return None


@dataclass(frozen=True)
class DeviceProfile:
    name: str
    width: int
    height: int
    render_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.render_scale < 1.0:
            raise InvalidArgument("render_scale must be >= 1")
        if self.width < 32 or self.height < 32:
            raise InvalidArgument("device resolution too small")

    def scaled(self, ms: float) -> float:
        return ms * self.render_scale


DEFAULT_PROFILES = (
    DeviceProfile("phone-a", 180, 320, 1.0),
    DeviceProfile("phone-b", 162, 288, 1.3),
    DeviceProfile("phone-c", 198, 352, 1.6),
    DeviceProfile("phone-d", 144, 256, 2.0),
)


@dataclass(frozen=True)
class App:
    screens: dict[str, ScreenSpec]
    initial_screen: str
    profiles: tuple[DeviceProfile, ...] = DEFAULT_PROFILES

    def __post_init__(self) -> None:
        if self.initial_screen not in self.screens:
            raise InvalidArgument(f"unknown initial screen {self.initial_screen!r}")
        for s in self.screens.values():
            for w in s.widgets:
                if w.target_screen is not None and w.target_screen not in self.screens:
                    raise InvalidArgument(f"widget {s.id}.{w.id} targets unknown screen {w.target_screen!r}")
                if w.kind is WidgetKind.BUTTON and w.target_screen is None:
                    raise InvalidArgument(f"button {s.id}.{w.id} has no target screen")

    def profile(self, name: str) -> DeviceProfile:
        for p in self.profiles:
            if p.name == name:
                return p
        raise InvalidArgument(f"unknown device profile {name!r}")

    def check_distinct(self, min_fraction: float = 0.01) -> None:
        """Every pair of screens must differ in at least ``min_fraction`` of pixels."""
        profile = self.profiles[0]
        rasters = {sid: render_screen(s, profile, Visit(0, sid), {}, 0) for sid, s in self.screens.items()}
        ids = sorted(rasters)
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                frac = float(np.mean(rasters[a] != rasters[b]))
                if frac < min_fraction:
                    raise InvalidArgument(f"screens {a!r} and {b!r} differ in only {frac:.2%} of pixels")


# --- rendering -------------------------------------------------------------

_DIGITS = {
    "0": "111101101101111", "1": "010110010010111", "2": "111001111100111",
    "3": "111001111001111", "4": "101101111001001", "5": "111100111001111",
    "6": "111100111101111", "7": "111001001001001", "8": "111101111101111",
    "9": "111101111001111", ":": "000010000010000",
}


@dataclass(frozen=True)
class Visit:
    nonce: int
    screen: str


def _px(profile: DeviceProfile, x: float, y: float) -> tuple[int, int]:
    return int(round(x * profile.width / DESIGN_W)), int(round(y * profile.height / DESIGN_H))


def _rect(profile: DeviceProfile, rect: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    x, y, w, h = rect
    x0, y0 = _px(profile, x, y)
    x1, y1 = _px(profile, x + w, y + h)
    return x0, y0, max(x1, x0 + 1), max(y1, y0 + 1)


def _glyph_block(img, x0, y0, x1, y1, seed: tuple[int, ...], ink: int, cell_w: int, cell_h: int) -> None:
    """Deterministic pseudo-text: a grid of ink blocks chosen by a hash of ``seed``."""
    cols = max(1, (x1 - x0) // cell_w)
    rows = max(1, (y1 - y0) // cell_h)
    rng = np.random.default_rng(list(seed))
    on = rng.random((rows, cols)) < 0.55
    # words end early on each line, like ragged text
    lengths = rng.integers(max(1, cols // 2), cols + 1, size=rows)
    on &= np.arange(cols)[None, :] < lengths[:, None]
    pad_w, pad_h = max(1, cell_w // 4), max(1, cell_h // 3)
    for r, c in zip(*np.nonzero(on)):
        gx, gy = x0 + c * cell_w, y0 + r * cell_h
        img[gy + pad_h // 2 : gy + cell_h - pad_h // 2, gx : gx + cell_w - pad_w] = ink


def _draw_clock(img, profile: DeviceProfile, now_ms: int) -> None:
    seconds = int(now_ms // 1000)
    text = f"{(seconds // 60) % 100:02d}:{seconds % 60:02d}"
    scale = max(1, profile.height // 160)
    x = img.shape[1] - (len(text) * 4 * scale) - 2 * scale
    _, bar_h = _px(profile, 0, STATUS_BAR_H)
    y = max(0, (bar_h - 5 * scale) // 2)
    for ch in text:
        bits = np.array([b == "1" for b in _DIGITS[ch]]).reshape(5, 3)
        glyph = np.kron(bits, np.ones((scale, scale), dtype=bool))
        region = img[y : y + 5 * scale, x : x + 3 * scale]
        region[glyph[: region.shape[0], : region.shape[1]]] = 235
        x += 4 * scale


def render_screen(
    screen: ScreenSpec, profile: DeviceProfile, visit: Visit, inputs: dict[str, str], now_ms: int
) -> np.ndarray:
    img = np.full((profile.height, profile.width), screen.background, dtype=np.uint8)
    _, bar_h = _px(profile, 0, STATUS_BAR_H)
    img[:bar_h] = 28
    hx0, hy0, hx1, hy1 = _rect(profile, (0, STATUS_BAR_H, DESIGN_W, 56))
    img[hy0:hy1, hx0:hx1] = screen.header_fill
    title_ink = 250 if screen.header_fill < 128 else 20
    cw, ch = max(2, profile.width // 45), max(3, profile.height // 64)
    tx0, ty0, tx1, ty1 = _rect(profile, (20, STATUS_BAR_H + 18, 200, 20))
    _glyph_block(img, tx0, ty0, tx1, ty1, (hash_text(screen.id),), title_ink, cw, ch)
    for w in screen.widgets:
        x0, y0, x1, y1 = _rect(profile, w.rect)
        img[y0:y1, x0:x1] = w.fill
        ink = 20 if w.fill >= 128 else 245
        seed = (w.text_pattern, visit.nonce if w.dynamic else 0)
        if w.kind is WidgetKind.IMAGE:
            rng = np.random.default_rng(list(seed))
            tiles = rng.integers(40, 220, size=(3, 3))
            ys = np.linspace(y0, y1, 4).astype(int)
            xs = np.linspace(x0, x1, 4).astype(int)
            for r in range(3):
                for c in range(3):
                    img[ys[r] : ys[r + 1], xs[c] : xs[c + 1]] = tiles[r, c]
        elif w.kind is WidgetKind.INPUT:
            img[y0:y1, x0:x1] = 255
            img[y0, x0:x1] = img[y1 - 1, x0:x1] = 120
            img[y0:y1, x0] = img[y0:y1, x1 - 1] = 120
            typed = inputs.get(w.id)
            if typed:
                _glyph_block(img, x0 + cw, y0 + 2, x1 - cw, y1 - 2, (hash_text(typed),), 30, cw, ch)
        else:
            _glyph_block(img, x0 + cw, y0 + 2, x1 - cw, y1 - 2, seed, ink, cw, ch)
    _draw_clock(img, profile, now_ms)
    return img


def hash_text(text: str) -> int:
    # FNV-1a: stable across interpreter runs, unlike hash()
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


# --- simulator ---------------------------------------------------------------


@dataclass
class _Loading:
    target: str
    nonce: int
    until: float
    back: bool


@dataclass
class _Transit:
    source: str
    source_visit: Visit
    source_inputs: dict[str, str]
    target: str
    nonce: int
    kind: str
    start: int
    duration: int
    back: bool
    after_load: bool = False  # outgoing side keeps the dimmed loading overlay

    def progress(self, now: int) -> float:
        return 1.0 if self.duration <= 0 else min(1.0, (now - self.start) / self.duration)


class DispatchResult(enum.Enum):
    OK = "ok"
    NOT_FOUND = "selector-not-found"
    NOT_INTERACTIVE = "screen-not-interactive"
    INVALID_ACTION = "invalid-action"

    def __bool__(self) -> bool:
        return self is DispatchResult.OK


@dataclass(frozen=True)
class Action:
    type: str  # tap | input | back
    widget_id: str | None = None
    text: str | None = None  # selector text fallback
    payload: str | None = None  # input text

    def __post_init__(self) -> None:
        if self.type not in ("tap", "input", "back"):
            raise InvalidArgument(f"unknown action type {self.type!r}")
        if self.type != "back" and self.widget_id is None and self.text is None:
            raise InvalidArgument(f"{self.type} action needs a selector")
        if self.type == "input" and self.payload is None:
            raise InvalidArgument("input action needs a payload")


class Simulator:
    """Single-owner virtual device. Time only moves through :meth:`advance`."""

    def __init__(self, app: App, profile: DeviceProfile | str | None = None, seed: int = 0):
        self.app = app
        if profile is None:
            profile = app.profiles[0]
        self.profile = app.profile(profile) if isinstance(profile, str) else profile
        self.rng = np.random.default_rng(seed)
        self.now_ms = 0
        self.screen = app.initial_screen
        self.visit = Visit(0, self.screen)
        self.inputs: dict[str, str] = {}
        self.stack: list[tuple[str, Visit, dict[str, str]]] = []
        self._loading: _Loading | None = None
        self._transit: _Transit | None = None
        self._cache: dict[tuple, np.ndarray] = {}

    # -- time ---------------------------------------------------------------

    def advance(self, dt_ms: int) -> None:
        if dt_ms < 0:
            raise InvalidArgument("cannot move virtual time backwards")
        self.now_ms += int(dt_ms)
        self._settle()

    def _settle(self) -> None:
        while True:
            if self._loading is not None and self.now_ms >= self._loading.until:
                ld = self._loading
                self._loading = None
                self._begin_transit(ld.target, ld.nonce, int(ld.until), ld.back, after_load=True)
                continue
            if self._transit is not None and self._transit.progress(self.now_ms) >= 1.0:
                self._finish_transit()
                continue
            return

    def next_change_ms(self) -> float:
        """Virtual time at which the current partial state ends (inf if it never does)."""
        if self._loading is not None:
            if math.isinf(self._loading.until):
                return math.inf
            target = self.app.screens[self._loading.target]
            return self._loading.until + self._duration(target.entry_transition)
        if self._transit is not None:
            return self._transit.start + self._transit.duration
        return self.now_ms

    # -- state --------------------------------------------------------------

    def ground_truth_state(self) -> RenderState:
        if self._loading is not None:
            return LOADING
        if self._transit is not None:
            return TRANSITING
        return FULL

    @property
    def current_screen(self) -> str:
        return self.screen

    def _duration(self, t: Transition) -> int:
        return int(round(self.profile.scaled(t.duration_ms)))

    def _begin_transit(self, target: str, nonce: int, start: int, back: bool, after_load: bool = False) -> None:
        spec = self.app.screens[target if not back else self.screen].entry_transition
        duration = self._duration(spec)
        self._transit = _Transit(
            self.screen, self.visit, dict(self.inputs), target, nonce, spec.kind, start, duration, back, after_load
        )
        if duration <= 0 or spec.kind == "instant":
            self._finish_transit()

    def _finish_transit(self) -> None:
        tr = self._transit
        self._transit = None
        if tr.back:
            self.screen, self.visit, self.inputs = self.stack.pop()
        else:
            self.stack.append((self.screen, self.visit, self.inputs))
            self.screen = tr.target
            self.visit = Visit(tr.nonce, tr.target)
            self.inputs = {}

    def _navigate(self, target: str, back: bool) -> None:
        nonce = int(self.rng.integers(1, 2**31))
        delay = 0.0
        if not back:
            delay = self.app.screens[target].network_delay.sample(self.rng)
        if delay > 0:
            until = math.inf if math.isinf(delay) else self.now_ms + int(round(self.profile.scaled(delay)))
            if until > self.now_ms:
                self._loading = _Loading(target, nonce, until, back)
                return
        self._begin_transit(target, nonce, self.now_ms, back)

    # -- input --------------------------------------------------------------

    def dispatch(self, action: Action) -> DispatchResult:
        if self._loading is not None:
            return DispatchResult.NOT_INTERACTIVE
        if self._transit is not None:
            if self._transit.progress(self.now_ms) < MIS_TAP_PROGRESS:
                return DispatchResult.NOT_INTERACTIVE
            self._finish_transit()
        screen = self.app.screens[self.screen]
        if action.type == "back":
            if not self.stack:
                return DispatchResult.INVALID_ACTION
            prev = self.stack[-1][0]
            self._navigate(prev, back=True)
            return DispatchResult.OK
        widget = screen.find(action.widget_id, action.text)
        if widget is None:
            return DispatchResult.NOT_FOUND
        if action.type == "input":
            if widget.kind is not WidgetKind.INPUT:
                return DispatchResult.INVALID_ACTION
            self.inputs = {**self.inputs, widget.id: action.payload}
            return DispatchResult.OK
        if not widget.tappable:
            return DispatchResult.INVALID_ACTION
        if widget.target_screen is not None:
            self._navigate(widget.target_screen, back=False)
        return DispatchResult.OK

    # -- output -------------------------------------------------------------

    def _raster(self, screen: str, visit: Visit, inputs: dict[str, str]) -> np.ndarray:
        key = (screen, visit, tuple(sorted(inputs.items())), self.now_ms // 1000)
        img = self._cache.get(key)
        if img is None:
            if len(self._cache) > 16:
                self._cache.clear()
            img = render_screen(self.app.screens[screen], self.profile, visit, inputs, self.now_ms)
            img.setflags(write=False)
            self._cache[key] = img
        return img

    def screenshot(self) -> Frame:
        now = self.now_ms
        if self._transit is not None:
            tr = self._transit
            if tr.back:
                incoming_visit, incoming_inputs = self.stack[-1][1], self.stack[-1][2]
            else:
                incoming_visit, incoming_inputs = Visit(tr.nonce, tr.target), {}
            out_px = self._raster(tr.source, tr.source_visit, tr.source_inputs)
            if tr.after_load:
                # the spinner freezes on the phase it showed when the content arrived
                out_px = self._dim(out_px, max(tr.start - 1, 0))
            out = Frame(out_px, now)
            inc = Frame(self._raster(tr.target, incoming_visit, incoming_inputs), now)
            p = tr.progress(now)
            if tr.kind == "slide":
                return stitch(out, inc, 1.0 - p)[0] if p < 1.0 else inc
            return blend(inc, out, p)[0]
        base = self._raster(self.screen, self.visit, self.inputs)
        if self._loading is not None:
            return Frame(self._dim(base, now), now)
        return Frame(base, now)

    @staticmethod
    def _dim(base: np.ndarray, t: int) -> np.ndarray:
        h, w = base.shape[:2]
        phase = (t // SPINNER_PERIOD_MS) % 12
        return draw_loading(base, (w - 1) / 2, (h - 1) / 2, 0.09 * min(w, h), phase, LOADING_SHADOW)


# --- scenario files ----------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    actions: tuple[Action, ...]
    expected_terminal: str
    record_profile: str = "phone-a"
    record_seed: int = 1
    tags: tuple[str, ...] = ()


def _widget_from_dict(d: dict) -> Widget:
    return Widget(
        id=d["id"],
        rect=tuple(d["rect"]),
        kind=WidgetKind(d.get("kind", "text")),
        fill=int(d.get("fill", 255)),
        text_pattern=int(d.get("text_pattern", 0)),
        target_screen=d.get("target_screen"),
        text=d.get("text"),
        dynamic=bool(d.get("dynamic", False)),
    )


def _widget_to_dict(w: Widget) -> dict:
    d: dict[str, Any] = {"id": w.id, "kind": w.kind.value, "rect": list(w.rect), "fill": w.fill,
                         "text_pattern": w.text_pattern}
    if w.target_screen is not None:
        d["target_screen"] = w.target_screen
    if w.text is not None:
        d["text"] = w.text
    if w.dynamic:
        d["dynamic"] = True
    return d


def action_to_dict(a: Action) -> dict:
    sel = {}
    if a.widget_id is not None:
        sel["id"] = a.widget_id
    if a.text is not None:
        sel["text"] = a.text
    act: dict[str, Any] = {"type": a.type}
    if a.payload is not None:
        act["payload"] = a.payload
    return {"selector": sel, "action": act}


def action_from_dict(d: dict) -> Action:
    sel = d.get("selector") or {}
    act = d["action"]
    return Action(act["type"], sel.get("id"), sel.get("text"), act.get("payload"))


def app_to_dict(app: App) -> dict:
    return {
        "initial_screen": app.initial_screen,
        "profiles": [
            {"name": p.name, "width": p.width, "height": p.height, "render_scale": p.render_scale}
            for p in app.profiles
        ],
        "screens": [
            {
                "id": s.id,
                "header_fill": s.header_fill,
                "background": s.background,
                "entry_transition": {"type": s.entry_transition.kind, "duration_ms": s.entry_transition.duration_ms},
                "network_delay": s.network_delay.to_dict(),
                "widgets": [_widget_to_dict(w) for w in s.widgets],
            }
            for s in app.screens.values()
        ],
    }


def app_from_dict(d: dict, check: bool = True) -> App:
    try:
        screens = {}
        for s in d["screens"]:
            tr = s.get("entry_transition", {"type": "instant", "duration_ms": 0})
            screens[s["id"]] = ScreenSpec(
                id=s["id"],
                widgets=tuple(_widget_from_dict(w) for w in s.get("widgets", [])),
                entry_transition=Transition(tr["type"], int(tr.get("duration_ms", 0))),
                network_delay=Latency.from_dict(s.get("network_delay", {"type": "fixed", "ms": 0})),
                header_fill=int(s.get("header_fill", 60)),
                background=int(s.get("background", 244)),
            )
        profiles = tuple(DeviceProfile(**p) for p in d.get("profiles", [])) or DEFAULT_PROFILES
        app = App(screens, d["initial_screen"], profiles)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidArgument):
            raise
        raise FormatError(f"malformed app definition: {exc}") from exc
    if check:
        app.check_distinct()
    return app


def scenario_to_dict(app: App, sc: Scenario) -> dict:
    d = app_to_dict(app)
    d["scenario"] = {
        "name": sc.name,
        "actions": [action_to_dict(a) for a in sc.actions],
        "expected_terminal": sc.expected_terminal,
        "record_profile": sc.record_profile,
        "record_seed": sc.record_seed,
        "tags": list(sc.tags),
    }
    return d


def load_scenario_file(path: str | os.PathLike) -> tuple[App, Scenario | None]:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    app = app_from_dict(d)
    sc = d.get("scenario")
    if sc is None:
        return app, None
    scenario = Scenario(
        name=sc["name"],
        actions=tuple(action_from_dict(a) for a in sc["actions"]),
        expected_terminal=sc["expected_terminal"],
        record_profile=sc.get("record_profile", app.profiles[0].name),
        record_seed=int(sc.get("record_seed", 1)),
        tags=tuple(sc.get("tags", ())),
    )
    return app, scenario


def save_scenario_file(path: str | os.PathLike, app: App, scenario: Scenario | None = None) -> None:
    d = scenario_to_dict(app, scenario) if scenario else app_to_dict(app)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")


@dataclass
class CapturedFrame:
    frame: Frame
    state: RenderState
    screen: str = field(default="")
