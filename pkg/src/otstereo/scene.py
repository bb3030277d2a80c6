"""Synthetic cartoon scenes, stereo rendering, and depth geometry.

Scenes are stacks of constant-depth, constant-intensity rectangles
over a zero background. Rendering projects each rectangle into both
views of a rectified rig: the right view keeps the object's columns,
the left view shifts them right by an integer pixel count inversely
proportional to depth. Painting far to near produces occlusion, and
the renderer emits exact per-pixel shifts plus the hidden regions of
both views, so solver output can be scored against ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disparity import DisparityMap, DisparityProfile
from .errors import OutOfFrameError, SceneFormatError


@dataclass(frozen=True)
class CameraRig:
    """Rectified two-camera geometry.

    baseline is the distance between the optical centers, focal the
    distance of the image plane from the optical line (both in length
    units), beta the pixels-per-length-unit conversion.
    """

    baseline: float = 10.0
    focal: float = 1000.0
    beta: float = 2.0

    def __post_init__(self):
        for name in ("baseline", "focal", "beta"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")


def pixel_shift(depth: float, rig: CameraRig) -> int:
    """Integer disparity of a point at the given depth."""
    if not depth > 0.0:
        raise ValueError(f"depth must be positive, got {depth!r}")
    return int(round(rig.focal * rig.baseline / (rig.beta * depth)))


def depth_from_disparity(shift_px: float, rig: CameraRig) -> float:
    """Depth of a point seen with the given pixel shift.

    Nonpositive shifts belong to points at infinity; they map to inf
    and produce no point in a reconstruction.
    """
    if not shift_px > 0.0:
        return float("inf")
    return rig.focal * rig.baseline / (rig.beta * shift_px)


@dataclass(frozen=True)
class SceneObject:
    """Axis-aligned rectangle at constant depth.

    x0 is the leftmost column in the right view; height None spans
    the full image.
    """

    x0: int
    width: int
    depth: float
    intensity: float
    y0: int = 0
    height: int | None = None

    def __post_init__(self):
        if self.width < 1:
            raise ValueError(f"width must be at least 1, got {self.width!r}")
        if not self.depth > 0.0:
            raise ValueError(f"depth must be positive, got {self.depth!r}")
        if not 0.0 < self.intensity <= 1.0:
            raise ValueError(f"intensity must lie in (0, 1], got {self.intensity!r}")

    def rows(self, image_height: int) -> range:
        if self.height is None:
            return range(image_height)
        return range(self.y0, min(self.y0 + self.height, image_height))


@dataclass(frozen=True)
class CartoonScene:
    """A fixed-size frame plus its objects, in no particular order."""

    width: int
    height: int
    objects: tuple[SceneObject, ...] = ()

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame {self.width}x{self.height} is empty")
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class RenderedPair:
    """Both views plus exact ground truth.

    truth holds the applied integer shift for every right-view object
    pixel, its occluded mask flagging the pixels invisible in the
    left view. hidden maps a scanline to the occluded intervals of
    that row: key "right_frame" for content missing from the left
    view (right-image columns), "left_frame" for the mirror case.
    non_occluded is true when every object pixel is visible in both
    views.
    """

    left: np.ndarray
    right: np.ndarray
    truth: DisparityMap
    hidden: dict[int, dict[str, list[tuple[int, int]]]]
    non_occluded: bool


def _intervals(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) runs of a boolean vector."""
    out = []
    start = None
    for i, flag in enumerate(mask):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            out.append((start, i - 1))
            start = None
    if start is not None:
        out.append((start, len(mask) - 1))
    return out


def render_pair(scene: CartoonScene, rig: CameraRig) -> RenderedPair:
    """Project a scene into both views and derive its ground truth.

    Nearer objects are painted last and overwrite farther ones in
    both views, which is what creates occlusion. Every object must
    fit inside the frame in both views, else OutOfFrameError.
    """
    d, h = scene.width, scene.height
    shifts = []
    for k, obj in enumerate(scene.objects):
        s = pixel_shift(obj.depth, rig)
        if obj.x0 < 0 or obj.x0 + obj.width > d:
            raise OutOfFrameError(
                f"object {k} spans columns [{obj.x0}, {obj.x0 + obj.width - 1}] "
                f"outside the {d}-wide frame"
            )
        if obj.x0 + s < 0 or obj.x0 + obj.width + s > d:
            raise OutOfFrameError(
                f"object {k} shifted by {s} leaves the {d}-wide frame in the left view"
            )
        shifts.append(s)

    left = np.zeros((h, d))
    right = np.zeros((h, d))
    truth_values = np.full((h, d), np.nan)
    right_owner = np.full((h, d), -1, dtype=int)
    left_owner = np.full((h, d), -1, dtype=int)
    right_shift = np.zeros((h, d), dtype=int)

    order = sorted(range(len(scene.objects)), key=lambda k: -scene.objects[k].depth)
    for k in order:
        obj = scene.objects[k]
        s = shifts[k]
        for y in obj.rows(h):
            sl_r = slice(obj.x0, obj.x0 + obj.width)
            sl_l = slice(obj.x0 + s, obj.x0 + obj.width + s)
            right[y, sl_r] = obj.intensity
            right_owner[y, sl_r] = k
            right_shift[y, sl_r] = s
            truth_values[y, sl_r] = float(s)
            left[y, sl_l] = obj.intensity
            left_owner[y, sl_l] = k

    cols = np.arange(d)
    occluded = np.zeros((h, d), dtype=bool)
    hidden: dict[int, dict[str, list[tuple[int, int]]]] = {}
    for y in range(h):
        visible_r = right_owner[y] >= 0
        image_cols = np.clip(cols + right_shift[y], 0, d - 1)
        hidden_r = visible_r & (left_owner[y, image_cols] != right_owner[y])
        occluded[y] = hidden_r

        hidden_l = np.zeros(d, dtype=bool)
        visible_l = np.flatnonzero(left_owner[y] >= 0)
        for xl in visible_l:
            k = left_owner[y, xl]
            xr = xl - shifts[k]
            if right_owner[y, xr] != k:
                hidden_l[xl] = True
        if hidden_r.any() or hidden_l.any():
            hidden[y] = {
                "right_frame": _intervals(hidden_r),
                "left_frame": _intervals(hidden_l),
            }

    profiles = tuple(
        DisparityProfile(
            values=truth_values[y], defined_mask=np.isfinite(truth_values[y]), y=y
        )
        for y in range(h)
    )
    truth = DisparityMap(
        width=d,
        height=h,
        profiles=profiles,
        no_data=~np.isfinite(truth_values),
        occluded=occluded,
        reports=(),
        diagnostics=(),
    )
    return RenderedPair(
        left=left,
        right=right,
        truth=truth,
        hidden=hidden,
        non_occluded=not hidden,
    )


@dataclass(frozen=True)
class PointCloud:
    """Flat list of reconstructed points.

    points has one row per pixel with positive finite disparity:
    columns x (image column), y (scanline), depth, intensity.
    """

    points: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))

    def __len__(self) -> int:
        return self.points.shape[0]


def reconstruct(disparity: DisparityMap, rig: CameraRig, right_image: np.ndarray) -> PointCloud:
    """One 3-D point per defined, unoccluded pixel with positive shift."""
    image = np.asarray(right_image, dtype=float)
    if image.shape != (disparity.height, disparity.width):
        raise ValueError(
            f"image of shape {image.shape} against a "
            f"{disparity.height}x{disparity.width} disparity map"
        )
    values = disparity.values
    keep = np.isfinite(values) & (values > 0.0) & ~disparity.occluded
    ys, xs = np.nonzero(keep)
    depth = rig.focal * rig.baseline / (rig.beta * values[ys, xs])
    points = np.column_stack([xs.astype(float), ys.astype(float), depth, image[ys, xs]])
    return PointCloud(points=points)


def map_from_values(values: np.ndarray) -> DisparityMap:
    """Wrap a plain (h, d) disparity array, NaN meaning no data."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {values.shape}")
    h, d = values.shape
    profiles = tuple(
        DisparityProfile(values=values[y], defined_mask=np.isfinite(values[y]), y=y)
        for y in range(h)
    )
    return DisparityMap(
        width=d,
        height=h,
        profiles=profiles,
        no_data=~np.isfinite(values),
        occluded=np.zeros((h, d), dtype=bool),
        reports=(),
        diagnostics=(),
    )


_SCENE_SCALARS = {"width", "height", "baseline", "focal", "beta"}
_OBJECT_KEYS = {"x0", "width", "y0", "height", "depth", "shift", "intensity"}


def _parse_object(body: str, line_no: int) -> dict:
    fields = {}
    for token in body.split():
        key, sep, raw = token.partition(":")
        if not sep or key not in _OBJECT_KEYS:
            raise SceneFormatError(f"unknown object field {token!r}", line=line_no)
        if key in fields:
            raise SceneFormatError(f"duplicate object field {key!r}", line=line_no)
        try:
            fields[key] = float(raw) if key in ("depth", "shift", "intensity") else int(raw)
        except ValueError:
            raise SceneFormatError(f"bad value for {key!r}: {raw!r}", line=line_no)
    for required in ("x0", "width", "intensity"):
        if required not in fields:
            raise SceneFormatError(f"object missing field {required!r}", line=line_no)
    if ("depth" in fields) == ("shift" in fields):
        raise SceneFormatError(
            "object needs exactly one of depth: or shift:", line=line_no
        )
    return fields


def parse_scene(text: str) -> tuple[CartoonScene, CameraRig]:
    """Read a scene description from flat key = value text.

    Scalar lines set the frame (width, height) and the rig (baseline,
    focal, beta, all optional). Each `object = k:v k:v ...` line adds
    one rectangle; it takes x0, width, intensity plus either depth or
    shift (converted through the rig), and optionally y0 and height.
    Blank lines and lines starting with # are skipped. Errors carry
    the offending line number.
    """
    scalars: dict[str, float] = {}
    raw_objects: list[tuple[dict, int]] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise SceneFormatError(f"expected key = value, got {line!r}", line=line_no)
        if key == "object":
            raw_objects.append((_parse_object(value, line_no), line_no))
        elif key in _SCENE_SCALARS:
            if key in scalars:
                raise SceneFormatError(f"duplicate key {key!r}", line=line_no)
            try:
                scalars[key] = float(value)
            except ValueError:
                raise SceneFormatError(f"bad value for {key!r}: {value!r}", line=line_no)
        else:
            raise SceneFormatError(f"unknown key {key!r}", line=line_no)

    for required in ("width", "height"):
        if required not in scalars:
            raise SceneFormatError(f"missing required key {required!r}")
    try:
        rig = CameraRig(
            baseline=scalars.get("baseline", 10.0),
            focal=scalars.get("focal", 1000.0),
            beta=scalars.get("beta", 2.0),
        )
    except ValueError as exc:
        raise SceneFormatError(str(exc))

    objects = []
    for fields, line_no in raw_objects:
        if "shift" in fields:
            shift = fields.pop("shift")
            if not shift > 0.0:
                raise SceneFormatError(
                    f"shift must be positive, got {shift!r}", line=line_no
                )
            fields["depth"] = rig.focal * rig.baseline / (rig.beta * shift)
        try:
            objects.append(SceneObject(**fields))
        except (TypeError, ValueError) as exc:
            raise SceneFormatError(str(exc), line=line_no)
    try:
        scene = CartoonScene(
            width=int(scalars["width"]),
            height=int(scalars["height"]),
            objects=tuple(objects),
        )
    except ValueError as exc:
        raise SceneFormatError(str(exc))
    return scene, rig


def load_scene(path) -> tuple[CartoonScene, CameraRig]:
    with open(path, encoding="utf-8") as handle:
        return parse_scene(handle.read())
