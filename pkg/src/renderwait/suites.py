"""Built-in messenger-style app, scenario suites and screencast sessions."""

from __future__ import annotations

import math
import os
from collections import Counter

import numpy as np

from renderwait.devicesim import (
    DEFAULT_PROFILES,
    Action,
    App,
    DeviceProfile,
    Latency,
    Scenario,
    ScreenSpec,
    Simulator,
    Transition,
    Widget,
    WidgetKind,
    hash_text,
    save_scenario_file,
)
from renderwait.errors import InvalidArgument
from renderwait.imaging import write_frame
from renderwait.states import RenderState

TAB_Y, TAB_H = 584, 56
TABS = (("tab_chats", "home"), ("tab_contacts", "contacts"), ("tab_discover", "discover"), ("tab_me", "me"))

SLIDE = Transition("slide", 300)
FADE = Transition("fade", 250)
INSTANT = Transition()


def _fixed(ms: float) -> Latency:
    return Latency("fixed", ms=ms)


def _uniform(lo: float, hi: float) -> Latency:
    return Latency("uniform", lo=lo, hi=hi)


def _heavy(median_ms: float, sigma: float = 0.8) -> Latency:
    return Latency("lognormal", mu=math.log(median_ms), sigma=sigma)


def _tabs(active: str) -> list[Widget]:
    out = []
    for i, (wid, target) in enumerate(TABS):
        fill = 200 if target == active else 232
        out.append(Widget(wid, (i * 90, TAB_Y, 90, TAB_H), WidgetKind.BUTTON, fill, hash_text(wid) % 997, target, wid[4:]))
    return out


def _rows(prefix: str, n: int, y0: int, h: int, target: str | None, fill: int, dynamic: bool = True,
          gap: int = 6) -> list[Widget]:
    kind = WidgetKind.BUTTON if target else WidgetKind.TEXT
    return [
        Widget(f"{prefix}_{i}", (12, y0 + i * (h + gap), 336, h), kind, fill,
               hash_text(f"{prefix}{i}") % 100003, target, f"{prefix} {i}", dynamic)
        for i in range(n)
    ]


def _screen(sid, widgets, transition, latency, header, background=244) -> ScreenSpec:
    return ScreenSpec(sid, tuple(widgets), transition, latency, header, background)


def standard_app(profiles: tuple[DeviceProfile, ...] | None = None) -> App:
    s = [
        _screen("home", [
            Widget("search", (12, 88, 336, 32), WidgetKind.BUTTON, 226, 11, "search", "Search"),
            *_rows("chat_row", 6, 128, 64, "chat", 252),
            *_tabs("home"),
        ], FADE, _fixed(0), 40, 246),
        _screen("chat", [
            *_rows("bubble", 4, 96, 48, None, 214),
            Widget("msg_input", (12, 532, 260, 40), WidgetKind.INPUT, 255, 0, text="Message"),
            Widget("send", (280, 532, 68, 40), WidgetKind.BUTTON, 90, 21, "chat_sent", "Send"),
        ], SLIDE, _uniform(150, 600), 96, 236),
        _screen("chat_sent", [
            *_rows("bubble", 5, 96, 48, None, 214),
            Widget("ack", (200, 370, 148, 36), WidgetKind.TEXT, 120, 33, text="Delivered"),
            Widget("msg_input", (12, 532, 260, 40), WidgetKind.INPUT, 255, 0, text="Message"),
        ], INSTANT, _uniform(200, 900), 96, 232),
        _screen("search", [
            Widget("query", (12, 90, 260, 36), WidgetKind.INPUT, 255, 0, text="Query"),
            Widget("go", (280, 90, 68, 36), WidgetKind.BUTTON, 70, 31, "search_results", "Go"),
            *_rows("hint", 3, 150, 28, None, 240, dynamic=False),
        ], FADE, _fixed(0), 150, 250),
        _screen("search_results", [
            *_rows("result", 5, 96, 80, None, 226),
        ], INSTANT, _heavy(900, 0.9), 150, 238),
        _screen("contacts", [
            *_rows("contact", 7, 90, 56, "profile_card", 250, dynamic=False),
            *_tabs("contacts"),
        ], FADE, _fixed(300), 64, 242),
        _screen("profile_card", [
            Widget("avatar", (20, 100, 96, 96), WidgetKind.IMAGE, 128, 41, dynamic=True),
            Widget("bio", (130, 100, 210, 96), WidgetKind.TEXT, 236, 43, dynamic=True),
            Widget("message", (20, 230, 320, 44), WidgetKind.BUTTON, 80, 45, "chat", "Messages"),
            Widget("video_call", (20, 290, 320, 44), WidgetKind.BUTTON, 110, 47, "video_call", "Video Call"),
        ], SLIDE, _uniform(300, 900), 84, 240),
        _screen("video_call", [
            Widget("remote", (0, 80, 360, 420), WidgetKind.IMAGE, 60, 51, dynamic=True),
            Widget("hangup", (130, 520, 100, 48), WidgetKind.BUTTON, 30, 53, "profile_card", "Hang Up"),
        ], FADE, _heavy(1200, 0.8), 20, 70),
        _screen("discover", [
            Widget("moments", (12, 96, 336, 48), WidgetKind.BUTTON, 250, 61, "moments", "Moments"),
            Widget("channels", (12, 156, 336, 48), WidgetKind.BUTTON, 250, 63, "channels", "Channels"),
            Widget("scan", (12, 230, 336, 48), WidgetKind.BUTTON, 250, 65, "qrcode", "Scan"),
            *_tabs("discover"),
        ], FADE, _fixed(0), 110, 238),
        _screen("moments", [
            Widget("cover", (0, 80, 360, 150), WidgetKind.IMAGE, 100, 71, dynamic=True),
            *_rows("post", 3, 240, 90, None, 250),
            Widget("comment", (250, 520, 98, 40), WidgetKind.BUTTON, 140, 73, "moments_comment", "Comment"),
        ], SLIDE, _heavy(1000, 0.8), 130, 244),
        _screen("moments_comment", [
            Widget("comment_input", (12, 100, 336, 120), WidgetKind.INPUT, 255, 0, text="Comment"),
            Widget("post_it", (248, 232, 100, 40), WidgetKind.BUTTON, 60, 75, "moments", "Post"),
        ], SLIDE, _uniform(200, 800), 170, 250),
        _screen("channels", [
            Widget("tile_0", (12, 90, 164, 220), WidgetKind.IMAGE, 90, 81, dynamic=True),
            Widget("tile_1", (184, 90, 164, 220), WidgetKind.IMAGE, 90, 83, dynamic=True),
            Widget("open_video", (12, 320, 336, 44), WidgetKind.BUTTON, 70, 85, "channel_video", "Open"),
        ], SLIDE, _heavy(1100, 0.8), 24, 228),
        _screen("channel_video", [
            Widget("player", (0, 100, 360, 360), WidgetKind.IMAGE, 40, 91, dynamic=True),
            Widget("caption", (12, 470, 336, 60), WidgetKind.TEXT, 230, 93, dynamic=True),
        ], FADE, _heavy(1300, 0.9), 16, 54),
        _screen("qrcode", [
            Widget("code", (80, 160, 200, 200), WidgetKind.IMAGE, 255, 101),
            Widget("hint_text", (40, 380, 280, 30), WidgetKind.TEXT, 244, 103),
        ], FADE, _fixed(800), 190, 30),
        _screen("me", [
            Widget("me_card", (12, 90, 336, 90), WidgetKind.TEXT, 250, 111),
            Widget("pay", (12, 196, 336, 44), WidgetKind.BUTTON, 252, 113, "pay", "Pay"),
            Widget("favorites", (12, 248, 336, 44), WidgetKind.BUTTON, 252, 115, "collections", "Favorites"),
            Widget("settings", (12, 300, 336, 44), WidgetKind.BUTTON, 252, 117, "settings", "Settings"),
            *_tabs("me"),
        ], FADE, _fixed(0), 76, 240),
        _screen("pay", [
            Widget("balance", (12, 96, 336, 120), WidgetKind.TEXT, 70, 121, dynamic=True),
            Widget("qr", (12, 230, 160, 80), WidgetKind.BUTTON, 200, 123, "pay_qr", "Money"),
            Widget("wallet", (188, 230, 160, 80), WidgetKind.TEXT, 200, 125),
        ], SLIDE, _fixed(1000), 56, 236),
        _screen("pay_qr", [
            Widget("pay_code", (60, 140, 240, 240), WidgetKind.IMAGE, 255, 131, dynamic=True),
            Widget("pay_hint", (40, 400, 280, 30), WidgetKind.TEXT, 90, 133),
        ], SLIDE, _heavy(900, 0.7), 56, 120),
        _screen("collections", [
            *_rows("item", 5, 90, 70, None, 248),
        ], SLIDE, _uniform(400, 1500), 136, 242),
        _screen("settings", [
            Widget("nickname", (12, 96, 336, 40), WidgetKind.INPUT, 255, 0, text="Nickname"),
            Widget("privacy", (12, 150, 336, 44), WidgetKind.BUTTON, 250, 141, "privacy", "Privacy"),
            *_rows("option", 4, 210, 40, None, 250, dynamic=False),
        ], SLIDE, _fixed(200), 160, 236),
        _screen("privacy", [
            *_rows("toggle", 6, 96, 40, None, 250, dynamic=False),
        ], SLIDE, _fixed(0), 180, 232),
    ]
    return App({x.id: x for x in s}, "home", profiles or DEFAULT_PROFILES)


def _tap(wid: str) -> Action:
    return Action("tap", wid)


def _type(wid: str, text: str) -> Action:
    return Action("input", wid, payload=text)


STRESS = ("stress",)


def standard_scenarios() -> list[Scenario]:
    return [
        Scenario("open_chat", (_tap("chat_row_0"), _type("msg_input", "hello"), _tap("send")), "chat_sent"),
        Scenario("search_info", (_tap("search"), _type("query", "weather"), _tap("go")), "search_results",
                 tags=STRESS),
        Scenario("open_moments", (_tap("tab_discover"), _tap("moments"), _tap("comment")), "moments_comment",
                 tags=STRESS),
        Scenario("open_channels", (_tap("tab_discover"), _tap("channels"), _tap("open_video")), "channel_video",
                 tags=STRESS),
        Scenario("open_pay_qrcode", (_tap("tab_me"), _tap("pay"), _tap("qr")), "pay_qr", tags=STRESS),
        Scenario("view_contact", (_tap("tab_contacts"), _tap("contact_2")), "profile_card"),
        Scenario("video_call", (_tap("tab_contacts"), _tap("contact_1"), _tap("video_call")), "video_call",
                 tags=STRESS),
        Scenario("change_nickname", (_tap("tab_me"), _tap("settings"), _type("nickname", "neo"), _tap("privacy")),
                 "privacy"),
        Scenario("open_collections", (_tap("tab_me"), _tap("favorites")), "collections"),
        Scenario("scan_qrcode", (_tap("tab_discover"), _tap("scan")), "qrcode"),
        Scenario("back_navigation", (_tap("chat_row_1"), Action("back"), _tap("chat_row_2")), "chat"),
        Scenario("message_from_card",
                 (_tap("tab_contacts"), _tap("contact_0"), _tap("message"), _type("msg_input", "hi"), _tap("send")),
                 "chat_sent"),
    ]


def fallback_app() -> App:
    """The standard app plus a screen whose content request never completes."""
    base = standard_app()
    screens = dict(base.screens)
    home = screens["home"]
    stuck = Widget("live", (12, 540, 336, 36), WidgetKind.BUTTON, 120, 151, "live_stream", "Live")
    screens["home"] = ScreenSpec(home.id, home.widgets + (stuck,), home.entry_transition, home.network_delay,
                                 home.header_fill, home.background)
    screens["live_stream"] = _screen("live_stream", [
        Widget("join", (12, 300, 336, 44), WidgetKind.BUTTON, 90, 153, "home", "Join"),
    ], SLIDE, Latency("never"), 12, 200)
    return App(screens, base.initial_screen, base.profiles)


def write_suite(directory: str | os.PathLike, name: str = "standard") -> list[str]:
    """Write a scenario suite; each file carries the app definition and one scenario."""
    os.makedirs(directory, exist_ok=True)
    app = standard_app()
    scenarios = standard_scenarios()
    if name == "smoke":
        scenarios = [sc for sc in scenarios if sc.name in ("open_chat", "search_info", "scan_qrcode")]
    elif name != "standard":
        raise InvalidArgument(f"unknown suite {name!r}")
    paths = []
    for sc in scenarios:
        path = os.path.join(directory, f"{sc.name}.json")
        save_scenario_file(path, app, sc)
        paths.append(path)
    return paths


# --- screencasts -------------------------------------------------------------


def _choices(app: App, sim: Simulator) -> list[Action]:
    screen = app.screens[sim.current_screen]
    out = [Action("tap", w.id) for w in screen.widgets if w.kind is WidgetKind.BUTTON]
    out += [Action("input", w.id, payload=f"t{i}") for i, w in enumerate(screen.widgets) if w.kind is WidgetKind.INPUT]
    if sim.stack:
        out.append(Action("back"))
    return out


def _destination(app: App, sim: Simulator, action: Action) -> str:
    if action.type == "back":
        return sim.stack[-1][0]
    if action.type == "tap":
        widget = app.screens[sim.current_screen].find(action.widget_id)
        if widget is not None and widget.target_screen is not None:
            return widget.target_screen
    return sim.current_screen


def _hops(app: App) -> dict[str, dict[str, int]]:
    """Tap-only shortest path lengths between screens."""
    out = {}
    for origin in app.screens:
        dist = {origin: 0}
        frontier = [origin]
        while frontier:
            nxt = []
            for sid in frontier:
                for w in app.screens[sid].widgets:
                    if w.target_screen is not None and w.target_screen not in dist:
                        dist[w.target_screen] = dist[sid] + 1
                        nxt.append(w.target_screen)
            frontier = nxt
        out[origin] = dist
    return out


def _distance(sim: Simulator, action: Action, dest: str, goal: str, hops: dict[str, dict[str, int]]) -> float:
    """Steps left to ``goal`` after ``action``; going back may keep unwinding the stack."""
    if action.type != "back":
        return hops[dest].get(goal, math.inf)
    return min(k + hops[entry[0]].get(goal, math.inf) for k, entry in enumerate(reversed(sim.stack)))


def random_session(
    app: App,
    profile: DeviceProfile | str,
    seed: int,
    n_actions: int = 16,
    cadence_ms: int = 100,
    dwell_ms: tuple[int, int] = (2000, 6000),
    visits: Counter | None = None,
    steer: float = 0.5,
):
    """Drive a random walk over the app, yielding (frame, state) every time the picture changes.

    ``visits`` counts screens already explored; pass one counter to several
    sessions to spread coverage across all of them. With probability
    ``steer`` a step heads for the least-visited screen by the shortest tap
    path; otherwise it picks at random, favouring unfamiliar destinations.
    """
    if not (0.0 <= steer <= 1.0):
        raise InvalidArgument("steer must lie in [0, 1]")
    hops = _hops(app)
    sim = Simulator(app, profile, seed)
    walk = np.random.default_rng([seed, 7919])
    last = None

    def capture():
        nonlocal last
        frame = sim.screenshot()
        if last is None or not np.array_equal(last, frame.pixels):
            last = frame.pixels
            return frame, sim.ground_truth_state()
        return None

    visits = visits if visits is not None else Counter()
    for _ in range(n_actions):
        dwell = int(walk.integers(dwell_ms[0], dwell_ms[1]))
        steady_for = 0
        while steady_for < dwell:
            got = capture()
            if got:
                yield got
            sim.advance(cadence_ms)
            steady_for = steady_for + cadence_ms if sim.ground_truth_state().is_full else 0
        # counted once settled: while content loads the previous screen is still current
        visits[sim.current_screen] += 1
        options = _choices(app, sim)
        if options:
            dests = [_destination(app, sim, a) for a in options]
            goal = min(app.screens, key=lambda sid: (visits[sid], sid))
            dist = [_distance(sim, a, d, goal, hops) for a, d in zip(options, dests)]
            best = [k for k, d in enumerate(dist) if d == min(dist)]
            if walk.random() < steer and min(dist) < math.inf:
                action = options[best[int(walk.integers(len(best)))]]
            else:
                # favour actions leading to rarely seen screens so deep pages get coverage
                weights = np.array([1.0 / (1 + visits[d]) ** 2 for d in dests])
                action = options[int(walk.choice(len(options), p=weights / weights.sum()))]
            # payload varies per step so typed text differs across sessions
            if action.type == "input":
                action = Action("input", action.widget_id, payload=f"w{int(walk.integers(1 << 30))}")
            sim.dispatch(action)
    got = capture()
    if got:
        yield got


def export_screencast(directory: str | os.PathLike, frames) -> int:
    """Write PGM frames and ``labels.csv`` (timestamp_ms,label,kind)."""
    os.makedirs(directory, exist_ok=True)
    lines = []
    for frame, state in frames:
        write_frame(frame, os.path.join(directory, f"frame_{frame.timestamp_ms:010d}.pgm"))
        kind = state.kind.value if state.kind else ""
        lines.append(f"{frame.timestamp_ms},{state.label.value},{kind}")
    with open(os.path.join(directory, "labels.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def read_labels(directory: str | os.PathLike) -> dict[int, RenderState]:
    out = {}
    with open(os.path.join(directory, "labels.csv"), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            ts, label, kind = line.split(",")
            out[int(ts)] = RenderState.parse(label, kind or None)
    return out


def generate_screencasts(directory: str | os.PathLike, count: int, seed: int, app: App | None = None,
                         n_actions: int = 16) -> list[str]:
    app = app or standard_app()
    rng = np.random.default_rng(seed)
    # coverage is tracked per device: each resolution needs every screen
    visits = {p.name: Counter() for p in app.profiles}
    paths = []
    for i in range(count):
        profile = app.profiles[i % len(app.profiles)]
        session_seed = int(rng.integers(2**62))
        path = os.path.join(directory, f"screencast_{i:03d}_{profile.name}")
        export_screencast(path, random_session(app, profile, session_seed, n_actions, visits=visits[profile.name]))
        paths.append(path)
    return paths
