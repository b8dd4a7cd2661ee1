"""Dataset assembly, classifier training, and single-frame rendering-state prediction."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from renderwait.augment import DEFAULT_RATIO, AugmentKind, synthesize
from renderwait.errors import FormatError, InvalidArgument
from renderwait.imaging import (
    Frame,
    SsimParams,
    list_frames,
    read_frame,
    resize_antialiased,
    ssim,
    to_luminance,
    write_frame,
)
from renderwait.nn import Adam, Classifier, LrSchedule, ModelConfig, bce_loss, load_checkpoint, save_checkpoint, sigmoid
from renderwait.nn.checkpoint import checkpoint_extra
from renderwait.sampling import DEFAULT_EPSILON, hac_select
from renderwait.states import FULL, Label, RenderState

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
DEFAULT_SPLIT_RATIOS = (8, 1, 1)
ORIGINS = ("captured", "stitched", "blended", "injected")
_ORIGIN_OF = {AugmentKind.STITCH: "stitched", AugmentKind.BLEND: "blended", AugmentKind.LOADING_INJECT: "injected"}
THRESHOLD = 0.5
# bounds the quadratic SSIM table on long loading waits
MAX_EPISODE = 32
# share of the Partial target that captured frames may fill (3,159 of 6,171 in
# the reference dataset); augmentation supplies the rest
CAPTURED_SHARE = 0.5
# per-step decay of the weight average used for validation and checkpoints
DEFAULT_EMA = 0.99
# a captured Partial this close to a captured Full frame carries no visual
# evidence of its label (the last sliver of a slide or fade)
AMBIGUOUS_SSIM = 0.999
_COARSE = (28, 48)
_COARSE_MAD = 2.0


@dataclass(frozen=True)
class DatasetEntry:
    path: str
    label: Label
    origin: str
    split: str

    def __post_init__(self) -> None:
        if self.origin not in ORIGINS:
            raise InvalidArgument(f"unknown origin {self.origin!r}")
        if self.split not in SPLITS:
            raise InvalidArgument(f"unknown split {self.split!r}")


@dataclass
class DatasetManifest:
    seed: int
    ratios: tuple[int, int, int]
    entries: list[DatasetEntry]
    # directory that relative entry paths resolve against
    root: str = "."

    def split(self, name: str) -> list[DatasetEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, entry: DatasetEntry) -> str:
        return os.path.join(self.root, entry.path)

    def counts(self) -> dict[str, dict[str, int]]:
        out = {s: {lab.value: 0 for lab in Label} for s in SPLITS}
        for e in self.entries:
            out[e.split][e.label.value] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "entries": [
                {"path": e.path, "label": e.label.value, "origin": e.origin, "split": e.split} for e in self.entries
            ],
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> DatasetManifest:
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
            entries = [DatasetEntry(e["path"], Label(e["label"]), e["origin"], e["split"]) for e in d["entries"]]
            ratios = tuple(int(r) for r in d["ratios"])
            seed = int(d["seed"])
        except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: not a dataset manifest ({exc})") from exc
        if len(ratios) != 3:
            raise FormatError(f"{path}: ratios must have three components")
        return cls(seed, ratios, entries, os.path.dirname(os.path.abspath(path)))


# --- building ----------------------------------------------------------------


def _read_screencast(directory: str) -> list[tuple[Frame, RenderState]]:
    from renderwait.suites import read_labels

    labels = read_labels(directory)
    out = []
    for path in list_frames(directory):
        frame = read_frame(path)
        if frame.timestamp_ms not in labels:
            raise FormatError(f"{path}: no ground-truth label")
        out.append((frame, labels[frame.timestamp_ms]))
    return out


def episodes(frames: list[tuple[Frame, RenderState]], max_len: int = MAX_EPISODE) -> list[list[Frame]]:
    """Split a screencast into runs of equal label and geometry, at most ``max_len`` frames each."""
    if max_len < 1:
        raise InvalidArgument("max_len must be positive")
    runs: list[list[Frame]] = []
    key = None
    for frame, state in frames:
        k = (state.label, frame.pixels.shape)
        if k != key or len(runs[-1]) >= max_len:
            runs.append([])
            key = k
        runs[-1].append(frame)
    return runs


def sample_screencast(
    frames: list[tuple[Frame, RenderState]],
    epsilon: float = DEFAULT_EPSILON,
    params: SsimParams | None = None,
    max_len: int = MAX_EPISODE,
) -> list[tuple[Frame, Label]]:
    """HAC-sample every episode (a run of one GUI state) after dropping exact repeats."""
    labels = {f.timestamp_ms: s.label for f, s in frames}
    seen: set[str] = set()
    out = []
    for run in episodes(frames, max_len):
        fresh = []
        for frame in run:
            if frame.digest() not in seen:
                seen.add(frame.digest())
                fresh.append(frame)
        if fresh:
            out.extend((fresh[i], labels[fresh[i].timestamp_ms]) for i in hac_select(fresh, epsilon, params).selected)
    out.sort(key=lambda fl: fl[0].timestamp_ms)
    return drop_ambiguous(out, params)


def _coarse(frame: Frame) -> np.ndarray:
    return resize_antialiased(to_luminance(frame).pixels, *_COARSE)


def drop_ambiguous(
    frames: list[tuple[Frame, Label]], params: SsimParams | None = None, threshold: float = AMBIGUOUS_SSIM
) -> list[tuple[Frame, Label]]:
    """Remove Partial frames that look the same as some FullyRendered frame in the list.

    Near-identical images with opposite labels only teach the classifier to
    hedge around the threshold.
    """
    fulls = [(f, _coarse(f)) for f, lab in frames if lab is Label.FULLY_RENDERED]
    kept = []
    for frame, label in frames:
        if label is Label.PARTIAL:
            small = _coarse(frame)
            if any(
                g.pixels.shape == frame.pixels.shape
                and np.abs(small - gs).mean() < _COARSE_MAD
                and ssim(frame, g, params) >= threshold
                for g, gs in fulls
            ):
                continue
        kept.append((frame, label))
    if len(kept) < len(frames):
        log.debug("dropped %d ambiguous Partial frames", len(frames) - len(kept))
    return kept


def split_counts(n: int, ratios: tuple[int, int, int] = DEFAULT_SPLIT_RATIOS) -> tuple[int, int, int]:
    """Validation and test sizes are rounded half-up; train takes the remainder."""
    total = sum(ratios)
    val = int(math.floor(n * ratios[1] / total + 0.5))
    test = int(math.floor(n * ratios[2] / total + 0.5))
    val = min(val, n)
    test = min(test, n - val)
    return n - val - test, val, test


def assign_splits(labels: list[Label], seed: int, ratios: tuple[int, int, int] = DEFAULT_SPLIT_RATIOS) -> list[str]:
    """Stratified shuffle split; returns a split name per item."""
    rng = np.random.default_rng([seed, 1])
    out = [""] * len(labels)
    for lab in Label:
        idx = np.array([i for i, x in enumerate(labels) if x is lab], dtype=np.intp)
        idx = idx[rng.permutation(len(idx))]
        n_train, n_val, _ = split_counts(len(idx), ratios)
        for pos, i in enumerate(idx):
            out[i] = "train" if pos < n_train else "val" if pos < n_train + n_val else "test"
    return out


def build_dataset(
    screencasts: list[str],
    out_dir: str | os.PathLike,
    epsilon: float = DEFAULT_EPSILON,
    ratio: float = DEFAULT_RATIO,
    seed: int = 0,
    ratios: tuple[int, int, int] = DEFAULT_SPLIT_RATIOS,
    params: SsimParams | None = None,
    captured_share: float | None = CAPTURED_SHARE,
) -> DatasetManifest:
    """Sample screencasts, top up Partials by augmentation, split, and write frames + manifest."""
    if not screencasts:
        raise InvalidArgument("build_dataset needs at least one screencast")
    if not (0.0 < epsilon <= 1.0):
        raise InvalidArgument(f"epsilon must lie in (0, 1], got {epsilon}")
    captured: list[tuple[Frame, Label]] = []
    for directory in sorted(screencasts):
        frames = _read_screencast(directory)
        log.info("sampling %s (%d frames)", directory, len(frames))
        captured.extend(sample_screencast(frames, epsilon, params))
    return assemble_dataset(captured, out_dir, ratio, seed, ratios, captured_share)


def assemble_dataset(
    captured: list[tuple[Frame, Label]],
    out_dir: str | os.PathLike,
    ratio: float = DEFAULT_RATIO,
    seed: int = 0,
    ratios: tuple[int, int, int] = DEFAULT_SPLIT_RATIOS,
    captured_share: float | None = CAPTURED_SHARE,
) -> DatasetManifest:
    """Augment already-sampled frames to the Partial:Full ``ratio``, split, and write.

    When captured Partials exceed ``captured_share`` of the Partial target they
    are thinned by a seeded draw. Every distinct image content appears at most
    once, so no test frame can leak into train or validation through an exact
    duplicate.
    """
    if ratio < 0:
        raise InvalidArgument("ratio must be non-negative")
    if min(ratios) < 0 or sum(ratios) <= 0:
        raise InvalidArgument("split ratios must be non-negative with a positive sum")
    items: list[tuple[Frame, Label, str]] = []
    seen: set[str] = set()
    for frame, label in captured:
        if frame.digest() not in seen:
            seen.add(frame.digest())
            items.append((frame, label, "captured"))
    full = [f for f, lab, _ in items if lab is Label.FULLY_RENDERED]
    partial = [k for k, (_, lab, _) in enumerate(items) if lab is Label.PARTIAL]
    target = int(math.floor(ratio * len(full) + 0.5))
    if captured_share is not None:
        if not (0.0 <= captured_share <= 1.0):
            raise InvalidArgument("captured_share must lie in [0, 1]")
        cap = int(math.floor(captured_share * target + 0.5))
        if len(partial) > cap:
            rng = np.random.default_rng([seed, 3])
            drop = {partial[k] for k in rng.permutation(len(partial))[cap:]}
            items = [it for k, it in enumerate(items) if k not in drop]
            partial = partial[:cap]
    want = max(0, target - len(partial))
    if want and not full:
        raise InvalidArgument("augmentation needs fully rendered frames")
    round_seed = seed
    for _ in range(16):
        if want <= 0:
            break
        batch = synthesize(full, want, round_seed)
        round_seed += 1_000_003
        for syn in batch:
            d = syn.frame.digest()
            if d not in seen and want > 0:
                seen.add(d)
                items.append((syn.frame, Label.PARTIAL, _ORIGIN_OF[syn.spec.kind]))
                want -= 1
    if want > 0:
        raise InvalidArgument("augmentation cannot produce enough distinct Partial frames")
    splits = assign_splits([lab for _, lab, _ in items], seed, ratios)
    frame_dir = os.path.join(out_dir, "frames")
    os.makedirs(frame_dir, exist_ok=True)
    entries = []
    for k, ((frame, label, origin), split) in enumerate(zip(items, splits)):
        ext = "pgm" if frame.channels == 1 else "ppm"
        rel = f"frames/{k:06d}_{origin}.{ext}"
        write_frame(frame, os.path.join(out_dir, rel))
        entries.append(DatasetEntry(rel, label, origin, split))
    manifest = DatasetManifest(seed, tuple(ratios), entries, os.path.abspath(out_dir))
    manifest.save(os.path.join(out_dir, "manifest.json"))
    return manifest


def leakage(manifest: DatasetManifest) -> list[str]:
    """Paths of test entries whose content also appears in train or val."""
    digests: dict[str, set[str]] = {}
    for e in manifest.entries:
        digests.setdefault(read_frame(manifest.resolve(e)).digest(), set()).add(e.split)
    leaked = {d for d, s in digests.items() if "test" in s and len(s) > 1}
    return [e.path for e in manifest.split("test") if read_frame(manifest.resolve(e)).digest() in leaked]


# --- model I/O ---------------------------------------------------------------


def preprocess(frames: list[Frame], config: ModelConfig) -> np.ndarray:
    """Luma, antialiased bilinear resize to the model input, scale to [0, 1]; NCHW float32."""
    out = np.empty((len(frames), 1, config.input_height, config.input_width), dtype=np.float32)
    for i, f in enumerate(frames):
        out[i, 0] = resize_antialiased(to_luminance(f).pixels, config.input_width, config.input_height) / 255.0
    return out


def _load_split(manifest: DatasetManifest, split: str, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    entries = manifest.split(split)
    frames = [read_frame(manifest.resolve(e)) for e in entries]
    y = np.array([1.0 if e.label is Label.FULLY_RENDERED else 0.0 for e in entries], dtype=np.float32)
    return preprocess(frames, config), y


def _mean_loss(model: Classifier, x: np.ndarray, y: np.ndarray, batch: int) -> float:
    model.eval()
    total = 0.0
    for s in range(0, len(x), batch):
        loss, _ = bce_loss(model.logits(x[s : s + batch]), y[s : s + batch])
        total += loss * len(x[s : s + batch])
    return total / max(len(x), 1)


@dataclass
class TrainResult:
    checkpoint: bytes
    best_epoch: int
    history: list[dict] = field(default_factory=list)


def train_classifier(
    manifest: DatasetManifest,
    epochs: int = 20,
    seed: int = 0,
    batch_size: int = 32,
    config: ModelConfig | None = None,
    schedule: LrSchedule | None = None,
    ema: float | None = DEFAULT_EMA,
) -> TrainResult:
    """Adam + BCE training; the returned checkpoint is the lowest validation-loss epoch.

    With ``ema`` set, validation and checkpoints use an exponential moving
    average of the weights and batch-norm statistics (decay ``ema`` per step)
    while the optimizer keeps updating the live weights.
    """
    if epochs < 1:
        raise InvalidArgument("epochs must be at least 1")
    if ema is not None and not (0.0 <= ema < 1.0):
        raise InvalidArgument("ema decay must lie in [0, 1)")
    config = config or ModelConfig()
    schedule = schedule or LrSchedule()
    x, y = _load_split(manifest, "train", config)
    if len(y) == 0 or y.min() == y.max():
        raise InvalidArgument("training split must contain both labels")
    xv, yv = _load_split(manifest, "val", config)
    if len(yv) == 0:
        xv, yv = x, y
    model = Classifier(config, seed)
    opt = Adam(model.parameters(), schedule.rate(0))
    rng = np.random.default_rng([seed, 2])
    best = (math.inf, -1, b"")
    history = []
    shadow = [a.astype(np.float64) for a in _state_arrays(model)] if ema is not None else None
    for epoch in range(epochs):
        model.train()
        opt.learning_rate = schedule.rate(epoch)
        order = rng.permutation(len(x))
        running = 0.0
        for s in range(0, len(order), batch_size):
            idx = order[s : s + batch_size]
            model.zero_grad()
            loss, grad = bce_loss(model.logits(x[idx]), y[idx])
            model.backward(grad[:, None].astype(np.float32))
            opt.step()
            running += loss * len(idx)
            if shadow is not None:
                for sh, a in zip(shadow, _state_arrays(model)):
                    sh *= ema
                    sh += (1.0 - ema) * a
        train_loss = running / len(order)
        live = _swap_in(model, shadow) if shadow is not None else None
        val_loss = _mean_loss(model, xv, yv, 128)
        history.append({"epoch": epoch, "lr": opt.learning_rate, "train_loss": train_loss, "val_loss": val_loss})
        log.info("epoch %d lr %.5f train %.4f val %.4f", epoch, opt.learning_rate, train_loss, val_loss)
        if val_loss < best[0]:
            best = (val_loss, epoch, save_checkpoint(model, {"epoch": epoch, "val_loss": val_loss, "seed": seed}))
        if live is not None:
            _swap_in(model, live)
    return TrainResult(best[2], best[1], history)


def _state_arrays(model: Classifier) -> list[np.ndarray]:
    return [p.data for _, p in model.named_parameters()] + [b for _, b in model.named_buffers()]


def _swap_in(model: Classifier, values: list[np.ndarray]) -> list[np.ndarray]:
    """Overwrite the model state in place; returns the previous values."""
    previous = []
    for target, value in zip(_state_arrays(model), values):
        previous.append(target.copy())
        target[...] = value
    return previous


class Predictor:
    """Frozen classifier; ``predict`` only reads model state."""

    def __init__(self, checkpoint: bytes):
        self.model = load_checkpoint(checkpoint)
        self.model.eval()
        self.config = self.model.config
        self.extra = checkpoint_extra(checkpoint)

    def confidence(self, frames: list[Frame]) -> np.ndarray:
        if not frames:
            return np.zeros(0)
        return sigmoid(self.model.logits(preprocess(frames, self.config)).astype(np.float64))

    def predict(self, frame: Frame) -> tuple[RenderState, float]:
        c = float(self.confidence([frame])[0])
        return state_for(c), c


def state_for(confidence: float) -> RenderState:
    """FullyRendered iff confidence >= 0.5; predictions never carry a partial kind."""
    return FULL if confidence >= THRESHOLD else RenderState(Label.PARTIAL)


def predict(checkpoint: bytes | Predictor, frame: Frame) -> tuple[RenderState, float]:
    p = checkpoint if isinstance(checkpoint, Predictor) else Predictor(checkpoint)
    return p.predict(frame)


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    precision_defined: bool
    tp: int
    fp: int
    fn: int
    tn: int


def scores(predicted_full: list[bool] | np.ndarray, actual_full: list[bool] | np.ndarray) -> Scores:
    """Precision/recall/F1 with FullyRendered as the positive class."""
    p = np.asarray(predicted_full, dtype=bool)
    a = np.asarray(actual_full, dtype=bool)
    if p.shape != a.shape or p.size == 0:
        raise InvalidArgument("need equally sized, non-empty prediction and truth vectors")
    tp = int(np.sum(p & a))
    fp = int(np.sum(p & ~a))
    fn = int(np.sum(~p & a))
    tn = int(np.sum(~p & ~a))
    defined = tp + fp > 0
    precision = tp / (tp + fp) if defined else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Scores(precision, recall, f1, defined, tp, fp, fn, tn)


def evaluate(checkpoint: bytes | Predictor, manifest: DatasetManifest, split: str = "test") -> Scores:
    entries = manifest.split(split)
    if not entries:
        raise InvalidArgument(f"split {split!r} is empty")
    pred = checkpoint if isinstance(checkpoint, Predictor) else Predictor(checkpoint)
    conf = []
    for s in range(0, len(entries), 128):
        conf.extend(pred.confidence([read_frame(manifest.resolve(e)) for e in entries[s : s + 128]]))
    predicted = [c >= THRESHOLD for c in conf]
    return scores(predicted, [e.label is Label.FULLY_RENDERED for e in entries])
