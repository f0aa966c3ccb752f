"""
Deterministic raycasting renderer for desk-scale stereo experiments.

Scenes are built from textured axis-aligned boxes and planes, lit by an
ambient term plus one directional light (Lambertian, primary rays only).
World coordinates coincide with the left camera of frame 0: x right,
y down, z forward. Trajectory poses are camera-to-world transforms of the
left camera; the right camera sits `baseline` meters along the left
camera's +x axis.

Example:

    >>> spec = preset("default-boxes", resolution=64)
    >>> sample = render(spec, 0)
    >>> sample.left.shape
    (64, 64)
"""

# Standard packages
import concurrent.futures as cf
import configparser
import dataclasses
import logging
import typing
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

# Third-party packages
import numpy as np
from scipy import ndimage

# Local packages
from depthdistill.core.camera import CameraIntrinsics, RigidTransform
from depthdistill.core.config import (
    config_from_document,
    document_text,
    format_value,
    parse_document,
    parse_value,
    to_sections,
)
from depthdistill.core.errors import ConfigurationError, DomainError, UnknownPresetError
from depthdistill.core.grids import DepthMap, Image, RelativeDepthMap
from depthdistill.geometry import bilinear_sample, backproject_grid, pixel_rays, project_points

log = logging.getLogger(__name__)

PRESET_VERSION = "1"
HIT_EPSILON = 1e-9
TEXTURES = ("checker", "stripes", "flat")

Color = Tuple[float, float, float]


def _unit(v: Sequence[float]) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ConfigurationError("Direction vector must be non-zero")
    return v / n


@dataclass(frozen=True)
class Texture(object):
    """Albedo pattern over 2-D surface coordinates in meters.

    Parameters:
        kind (str): "checker", "stripes" or "flat"
        color_a (tuple): RGB albedo in [0, 1]
        color_b (tuple): second RGB albedo (ignored for "flat")
        period (float): square/stripe size in meters
    """

    kind: str = "checker"
    color_a: Color = (0.85, 0.8, 0.7)
    color_b: Color = (0.2, 0.25, 0.3)
    period: float = 0.25

    def __post_init__(self):
        if self.kind not in TEXTURES:
            raise ConfigurationError(f"Unknown texture {self.kind!r}; expected one of {TEXTURES}")
        if not self.period > 0:
            raise ConfigurationError("Texture period must be positive")
        for c in (self.color_a, self.color_b):
            if len(c) != 3 or min(c) < 0 or max(c) > 1:
                raise ConfigurationError(f"Albedo must be an RGB triple in [0, 1], got {c}")

    def albedo(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        a = np.asarray(self.color_a, dtype=np.float64)
        if self.kind == "flat":
            return np.broadcast_to(a, s.shape + (3,)).copy()
        b = np.asarray(self.color_b, dtype=np.float64)
        if self.kind == "checker":
            parity = (np.floor(s / self.period) + np.floor(t / self.period)) % 2
        else:
            parity = np.floor(s / self.period) % 2
        return np.where(parity[..., None] > 0, b, a)


@dataclass(frozen=True)
class Box(object):
    """Axis-aligned box given by its center and full size, in meters."""

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    texture: Texture = field(default_factory=Texture)

    def __post_init__(self):
        if len(self.center) != 3 or len(self.size) != 3 or min(self.size) <= 0:
            raise ConfigurationError(f"Box needs a 3-D center and positive size, got {self.size}")

    @property
    def corners(self) -> np.ndarray:
        c, h = np.asarray(self.center, float), np.asarray(self.size, float) / 2
        signs = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)])
        return c + signs * h

    def intersect(self, origin: np.ndarray, dirs: np.ndarray):
        """Slab test. Returns (t, normal, (s, t_coord)) with t = inf on miss."""
        lo = np.asarray(self.center, float) - np.asarray(self.size, float) / 2
        hi = np.asarray(self.center, float) + np.asarray(self.size, float) / 2
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        near = np.fmin(t1, t2)
        far = np.fmax(t1, t2)
        t_near = np.nanmax(near, axis=-1)
        t_far = np.nanmin(far, axis=-1)
        hit = (t_far >= t_near) & (t_near > HIT_EPSILON)
        t = np.where(hit, t_near, np.inf)

        axis = np.nanargmax(near, axis=-1)
        normal = np.zeros(dirs.shape)
        rows = np.arange(dirs.shape[0])
        normal[rows, axis] = -np.sign(dirs[rows, axis])
        point = origin + dirs * np.where(hit, t_near, 0.0)[:, None]
        others = np.array([[1, 2], [0, 2], [0, 1]])[axis]
        s = point[rows, others[:, 0]]
        u = point[rows, others[:, 1]]
        return t, normal, (s, u)


@dataclass(frozen=True)
class Plane(object):
    """Plane through `point` with normal `normal`; optionally bounded to a
    rectangle of half-sizes `extent` in its own surface coordinates.
    """

    point: Tuple[float, float, float]
    normal: Tuple[float, float, float]
    texture: Texture = field(default_factory=Texture)
    extent: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        _unit(self.normal)

    def basis(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = _unit(self.normal)
        helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = _unit(np.cross(n, helper))
        return n, e1, np.cross(n, e1)

    def intersect(self, origin: np.ndarray, dirs: np.ndarray):
        n, e1, e2 = self.basis()
        p0 = np.asarray(self.point, dtype=np.float64)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((p0 - origin) @ n) / denom
        hit = (denom != 0) & (t > HIT_EPSILON)
        rel = origin + dirs * np.where(hit, t, 0.0)[:, None] - p0
        s, u = rel @ e1, rel @ e2
        if self.extent is not None:
            hit &= (np.abs(s) <= self.extent[0]) & (np.abs(u) <= self.extent[1])
        normal = np.where((denom > 0)[:, None], -n, n)
        return np.where(hit, t, np.inf), normal, (s, u)


Primitive = Union[Box, Plane]


@dataclass(frozen=True)
class Lighting(object):
    """Ambient term plus one directional light; `direction` is the direction
    light travels in world coordinates.
    """

    ambient: float = 0.35
    diffuse: float = 0.65
    direction: Tuple[float, float, float] = (-0.4, 0.8, 0.45)

    def __post_init__(self):
        if self.ambient < 0 or self.diffuse < 0:
            raise ConfigurationError("Light intensities must be non-negative")
        _unit(self.direction)


@dataclass(frozen=True)
class SceneSpec(object):
    """Declarative scene: geometry, light, camera rig and trajectory.

    Parameters:
        name (str): scene name (preset name for presets)
        primitives (tuple): Box and Plane objects
        lighting (Lighting): light setup
        fov_deg (float): horizontal field of view
        width (int): image width in pixels
        height (int): image height in pixels
        baseline (float): stereo baseline in meters
        trajectory (tuple): camera-to-world poses of the left camera
        supersample (int): anti-aliasing samples per pixel side
        background (tuple): RGB of rays that hit nothing
        image_noise (float): std of Gaussian sensor noise (0 disables)
        seed (int): noise seed
        version (str): preset version tag
    """

    name: str = "custom"
    primitives: Tuple[Primitive, ...] = ()
    lighting: Lighting = field(default_factory=Lighting)
    fov_deg: float = 60.0
    width: int = 256
    height: int = 256
    baseline: float = 0.13
    trajectory: Tuple[RigidTransform, ...] = field(
        default_factory=lambda: (RigidTransform.identity(),)
    )
    supersample: int = 3
    background: Color = (0.0, 0.0, 0.0)
    image_noise: float = 0.0
    seed: int = 0
    version: str = PRESET_VERSION

    def __post_init__(self):
        if not self.baseline > 0:
            raise ConfigurationError(f"Baseline must be positive, got {self.baseline}")
        if self.width < 3 or self.height < 3:
            raise ConfigurationError(f"Resolution must be at least 3x3, got {self.width}x{self.height}")
        if not 0 < self.fov_deg < 180:
            raise ConfigurationError(f"Field of view must lie in (0, 180), got {self.fov_deg}")
        if self.supersample < 1:
            raise ConfigurationError("supersample must be >= 1")
        if not self.trajectory:
            raise ConfigurationError("Trajectory needs at least one pose")
        if self.image_noise < 0:
            raise ConfigurationError("image_noise must be non-negative")
        for prim in self.primitives:
            if isinstance(prim, Box) and not self._in_front(prim):
                raise ConfigurationError(f"Box at {prim.center} is behind every camera")

    def _in_front(self, box: Box) -> bool:
        corners = box.corners
        for pose in self.trajectory:
            if np.any(pose.inverse().apply(corners)[:, 2] > 0):
                return True
        return False

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics.from_fov(self.width, self.height, self.fov_deg)

    @property
    def frames(self) -> int:
        return len(self.trajectory)

    def with_resolution(self, resolution: int) -> "SceneSpec":
        return replace(self, width=int(resolution), height=int(resolution))


@dataclass(frozen=True, eq=False)
class StereoSample(object):
    """One rendered stereo frame.

    Attributes:
        left (Image): left view
        right (Image): right view
        gt_depth (DepthMap): z-depth in the left camera, invalid where no hit
        left_pose (RigidTransform): camera-to-world pose of the left camera
        frame (int): trajectory index
        gt_depth_right (DepthMap): z-depth in the right camera
        intrinsics (CameraIntrinsics): shared by both cameras
        baseline (float): stereo baseline in meters
    """

    left: Image
    right: Image
    gt_depth: DepthMap
    left_pose: RigidTransform
    frame: int
    gt_depth_right: DepthMap
    intrinsics: CameraIntrinsics
    baseline: float


def _trace(spec: SceneSpec, pose: RigidTransform, rays: np.ndarray):
    """Nearest hit for camera-frame rays (z component 1) from `pose`.

    Returns (depth, color) where depth is inf on a miss.
    """
    dirs = rays @ pose.rotation.T
    origin = pose.translation
    n = rays.shape[0]
    best = np.full(n, np.inf)
    normal = np.zeros((n, 3))
    albedo = np.broadcast_to(np.asarray(spec.background, float), (n, 3)).copy()
    for prim in spec.primitives:
        t, nrm, (s, u) = prim.intersect(origin, dirs)
        closer = t < best
        if not closer.any():
            continue
        best = np.where(closer, t, best)
        normal[closer] = nrm[closer]
        albedo[closer] = prim.texture.albedo(s[closer], u[closer])

    light = _unit(spec.lighting.direction)
    lambert = np.clip(-(normal @ light), 0.0, None)
    shade = spec.lighting.ambient + spec.lighting.diffuse * lambert
    hit = np.isfinite(best)
    color = np.where(hit[:, None], np.clip(albedo * shade[:, None], 0.0, 1.0), albedo)
    return best, color


def _render_view(spec: SceneSpec, pose: RigidTransform) -> Tuple[Image, DepthMap]:
    K = spec.intrinsics
    h, w = spec.height, spec.width
    center = pixel_rays(h, w, K).reshape(-1, 3)
    depth, _ = _trace(spec, pose, center)

    ss = spec.supersample
    offsets = (np.arange(ss) + 0.5) / ss - 0.5
    color = np.zeros((h * w, 3))
    for dv in offsets:
        for du in offsets:
            shifted = center + np.array([du / K.fx, dv / K.fy, 0.0])
            color += _trace(spec, pose, shifted)[1]
    color /= ss * ss

    depth = depth.reshape(h, w)
    valid = np.isfinite(depth)
    return Image(color.reshape(h, w, 3)), DepthMap(np.where(valid, depth, 0.0), valid)


def right_pose(left_pose: RigidTransform, baseline: float) -> RigidTransform:
    """Camera-to-world pose of the right camera of a rig."""
    return left_pose.compose(RigidTransform.from_translation((baseline, 0.0, 0.0)))


def render(spec: SceneSpec, frame: int = 0) -> StereoSample:
    """Raycast one stereo frame of the trajectory.

    Raises:
        DomainError: frame outside the trajectory
    """
    if not 0 <= frame < spec.frames:
        raise DomainError(f"Frame {frame} outside trajectory of {spec.frames} frame(s)")
    pose = spec.trajectory[frame]
    left, depth = _render_view(spec, pose)
    right, depth_right = _render_view(spec, right_pose(pose, spec.baseline))

    if spec.image_noise > 0:
        rng = np.random.default_rng((spec.seed, frame))
        noisy = [
            Image(np.clip(img.data + rng.normal(0.0, spec.image_noise, img.data.shape), 0, 1))
            for img in (left, right)
        ]
        left, right = noisy
    log.debug(f"Rendered {spec.name} frame {frame}: {depth.count} valid depth pixels")
    return StereoSample(left, right, depth, pose, frame, depth_right, spec.intrinsics, spec.baseline)


def render_sequence(
    spec: SceneSpec, frames: Optional[Sequence[int]] = None, max_workers: int = 4
) -> List[StereoSample]:
    """Render several frames concurrently; results keep the requested order."""
    frames = list(range(spec.frames)) if frames is None else list(frames)
    log.info(f"Rendering {len(frames)} frame(s) of {spec.name} at {spec.width}x{spec.height}")
    with cf.ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda f: render(spec, f), frames))


def relative_pose(spec: SceneSpec, frame_from: int, frame_to: int) -> RigidTransform:
    """Transform taking points from the left camera of `frame_from` into the
    left camera of `frame_to`.
    """
    return spec.trajectory[frame_to].inverse().compose(spec.trajectory[frame_from])


def visibility_mask(sample: StereoSample, threshold: float = 0.01) -> np.ndarray:
    """Left pixels that are also seen by the right camera, by left/right
    ground-truth depth cross-check.
    """
    K = sample.intrinsics
    points = backproject_grid(sample.gt_depth.data, K)
    points = points - np.array([sample.baseline, 0.0, 0.0])
    u, v, z = project_points(points, K)
    right = np.where(sample.gt_depth_right.valid, sample.gt_depth_right.data, 0.0)
    seen = bilinear_sample(right, (u, v))
    with np.errstate(invalid="ignore"):
        close = np.abs(seen.values[..., 0] - z) < threshold
    return sample.gt_depth.valid & seen.valid & close


@dataclass(frozen=True)
class ExpertSimConfig(object):
    """Degradations turning ground truth into a relative expert map.

    ``raw = scale * (1 / gt) ** gamma + shift``, then Gaussian blur, additive
    noise and a fraction of uniformly replaced outlier pixels.
    """

    scale: float = 1.0
    shift: float = 0.0
    gamma: float = 1.0
    blur_radius: float = 0.0
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError("Expert scale must be positive")
        if not self.gamma > 0:
            raise ConfigurationError("Expert gamma must be positive")
        if self.blur_radius < 0 or self.noise_sigma < 0:
            raise ConfigurationError("Expert blur and noise must be non-negative")
        if not 0 <= self.outlier_fraction < 1:
            raise ConfigurationError("outlier_fraction must lie in [0, 1)")


def expert_from_gt(gt: DepthMap, model: Optional[ExpertSimConfig] = None) -> RelativeDepthMap:
    """Simulate an expert that is structured but only relative.

    Invalid ground-truth pixels get raw value 0.
    """
    model = model or ExpertSimConfig()
    valid = gt.valid
    inv = np.where(valid, 1.0 / np.where(valid, gt.data, 1.0), 0.0)
    warped = inv if model.gamma == 1.0 else inv**model.gamma
    raw = model.scale * warped + model.shift

    if model.blur_radius > 0:
        weight = ndimage.gaussian_filter(valid.astype(float), model.blur_radius, mode="mirror")
        blurred = ndimage.gaussian_filter(np.where(valid, raw, 0.0), model.blur_radius, mode="mirror")
        raw = np.where(valid, blurred / np.maximum(weight, 1e-12), raw)

    rng = np.random.default_rng(model.seed)
    if model.noise_sigma > 0:
        raw = raw + rng.normal(0.0, model.noise_sigma, raw.shape)
    if model.outlier_fraction > 0 and valid.any():
        idx = np.flatnonzero(valid)
        count = int(round(model.outlier_fraction * idx.size))
        chosen = rng.choice(idx, size=count, replace=False)
        lo, hi = float(raw[valid].min()), float(raw[valid].max())
        flat = raw.ravel().copy()
        flat[chosen] = rng.uniform(lo, hi, size=count)
        raw = flat.reshape(raw.shape)

    return RelativeDepthMap(np.where(valid, raw, 0.0))


def _floor(texture: Optional[Texture] = None) -> Plane:
    return Plane((0.0, 1.0, 0.0), (0.0, -1.0, 0.0), texture or Texture("checker", period=0.4))


def _default_boxes() -> SceneSpec:
    """Three checker boxes between 1.3 and 5.4 m on a floor, back wall at 6 m."""
    return SceneSpec(
        name="default-boxes",
        primitives=(
            _floor(),
            Plane((0.0, 0.0, 6.0), (0.0, 0.0, -1.0), Texture("checker", (0.7, 0.75, 0.8), (0.3, 0.2, 0.2), 0.5)),
            Box((-0.55, 0.55, 1.6), (0.5, 0.9, 0.5), Texture("checker", (0.9, 0.6, 0.3), (0.2, 0.1, 0.1), 0.1)),
            Box((0.6, 0.3, 3.0), (0.8, 1.4, 0.8), Texture("checker", (0.4, 0.8, 0.5), (0.1, 0.2, 0.15), 0.2)),
            Box((-0.4, -0.2, 4.9), (1.2, 2.4, 1.0), Texture("checker", (0.5, 0.5, 0.9), (0.15, 0.15, 0.3), 0.3)),
        ),
    )


def _untextured_wall() -> SceneSpec:
    """Slanted flat-albedo wall (about 4.3 to 6 m) over the upper two thirds of
    the frame, with a checker floor strip below it for metric scale.
    """
    return SceneSpec(
        name="untextured-wall",
        primitives=(
            _floor(Texture("checker", period=0.3)),
            Plane((0.0, 0.0, 5.0), (0.3, 0.0, -1.0), Texture("flat", (0.7, 0.7, 0.7))),
        ),
    )


def _thin_structures() -> SceneSpec:
    """Thin poles and a bar in front of a textured wall."""
    pole = Texture("stripes", (0.9, 0.9, 0.2), (0.3, 0.3, 0.05), 0.15)
    return SceneSpec(
        name="thin-structures",
        primitives=(
            _floor(),
            Plane((0.0, 0.0, 4.0), (0.0, 0.0, -1.0), Texture("checker", period=0.3)),
            Box((-0.8, 0.0, 2.0), (0.04, 2.0, 0.04), pole),
            Box((0.0, 0.0, 2.5), (0.03, 2.0, 0.03), pole),
            Box((0.7, 0.0, 3.0), (0.05, 2.0, 0.05), pole),
            Box((0.0, -0.3, 2.2), (1.6, 0.03, 0.03), pole),
        ),
    )


def _trajectory() -> SceneSpec:
    """Default boxes seen along 10 frames, each 2 cm right and 1 degree of yaw
    beyond the previous one.
    """
    poses = tuple(RigidTransform.from_yaw(1.0 * k, (0.02 * k, 0.0, 0.0)) for k in range(10))
    return replace(_default_boxes(), name="trajectory", trajectory=poses)


_SCENE_KEYS = ("name", "version", "fov_deg", "width", "height", "baseline", "supersample", "background", "image_noise", "seed")
_FLOATS3 = Tuple[float, float, float]


def scene_to_document(spec: SceneSpec) -> str:
    """Serialize a scene as an INI document with [scene], [light],
    [pose.N] and [primitive.N] sections.
    """
    sections = {"scene": {k: format_value(getattr(spec, k)) for k in _SCENE_KEYS}}
    sections.update(to_sections(spec.lighting, "light"))
    for i, pose in enumerate(spec.trajectory):
        sections[f"pose.{i}"] = {
            "rotation": format_value(tuple(pose.rotation.ravel().tolist())),
            "translation": format_value(tuple(pose.translation.tolist())),
        }
    for i, prim in enumerate(spec.primitives):
        if isinstance(prim, Box):
            entry = {"type": "box", "center": prim.center, "size": prim.size}
        else:
            entry = {"type": "plane", "point": prim.point, "normal": prim.normal, "extent": prim.extent}
        entry.update({f"texture_{f.name}": getattr(prim.texture, f.name) for f in dataclasses.fields(Texture)})
        sections[f"primitive.{i}"] = {k: format_value(v) for k, v in entry.items()}
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_dict(sections)
    return document_text(parser)


def _numbered(parser: configparser.ConfigParser, prefix: str) -> List[str]:
    names = [s for s in parser.sections() if s.startswith(prefix)]
    try:
        return sorted(names, key=lambda s: int(s[len(prefix) :]))
    except ValueError:
        raise ConfigurationError(f"Section names must look like [{prefix}N], got {names}")


def scene_from_document(document: Union[str, configparser.ConfigParser]) -> SceneSpec:
    """Inverse of `scene_to_document`.

    Raises:
        ConfigurationError: missing or invalid entries
        FormatError: unparsable document
    """
    parser = parse_document(document) if isinstance(document, str) else document
    hints = typing.get_type_hints(SceneSpec)
    values = {}
    if parser.has_section("scene"):
        for key, text in parser.items("scene"):
            if key not in _SCENE_KEYS:
                raise ConfigurationError(f"[scene] has unknown key {key!r}")
            values[key] = parse_value(text, hints[key], f"[scene] {key}")
    values["lighting"] = config_from_document(parser, Lighting, "light")

    poses = []
    for name in _numbered(parser, "pose."):
        section = parser[name]
        rotation = parse_value(section.get("rotation", ""), Tuple[float, ...], f"[{name}] rotation")
        translation = parse_value(section.get("translation", ""), _FLOATS3, f"[{name}] translation")
        if len(rotation) != 9:
            raise ConfigurationError(f"[{name}] rotation needs 9 values, got {len(rotation)}")
        poses.append(RigidTransform(np.reshape(rotation, (3, 3)), translation))
    if poses:
        values["trajectory"] = tuple(poses)

    primitives = []
    for name in _numbered(parser, "primitive."):
        section = dict(parser[name])
        kind = section.pop("type", None)
        texture_hints = typing.get_type_hints(Texture)
        texture_args = {}
        for key in [k for k in section if k.startswith("texture_")]:
            field_name = key[len("texture_") :]
            if field_name not in texture_hints:
                raise ConfigurationError(f"[{name}] has unknown key {key!r}")
            texture_args[field_name] = parse_value(section.pop(key), texture_hints[field_name], f"[{name}] {key}")
        texture = Texture(**texture_args)
        cls = {"box": Box, "plane": Plane}.get(kind)
        if cls is None:
            raise ConfigurationError(f"[{name}] type must be 'box' or 'plane', got {kind!r}")
        prim_hints = typing.get_type_hints(cls)
        args = {}
        for key, text in section.items():
            if key not in prim_hints or key == "texture":
                raise ConfigurationError(f"[{name}] has unknown key {key!r}")
            args[key] = parse_value(text, prim_hints[key], f"[{name}] {key}")
        try:
            primitives.append(cls(texture=texture, **args))
        except TypeError as e:
            raise ConfigurationError(f"[{name}] is incomplete: {e}")
    values["primitives"] = tuple(primitives)
    return SceneSpec(**values)


PRESETS: Dict[str, Callable[[], SceneSpec]] = {
    "default-boxes": _default_boxes,
    "untextured-wall": _untextured_wall,
    "thin-structures": _thin_structures,
    "trajectory": _trajectory,
}


def preset(name: str, resolution: Optional[int] = None) -> SceneSpec:
    """Named, versioned scene.

    Raises:
        UnknownPresetError: name not in PRESETS
    """
    try:
        spec = PRESETS[name]()
    except KeyError:
        raise UnknownPresetError(
            f"Unknown scene preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    if resolution is not None:
        spec = spec.with_resolution(resolution)
    return spec
