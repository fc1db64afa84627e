"""Procedural deferred renderer over analytic primitives.

Generates paired low-res/low-rate and high-res/high-rate clips with exact
G-buffers and analytic per-pixel motion vectors.  Geometry is ray-cast in
float64 (spheres, oriented boxes, an infinite checkered ground plane), so
motion and visibility are exact by construction; images are stored float32.

Conventions:
  * world space is right-handed, y up; the ground plane is y = const
  * screen x grows right, screen y grows down; pixel (i, j) covers the
    continuous rect [j, j+1] x [i, i+1] with its center at (j+0.5, i+0.5)
  * a motion field maps each pixel of frame t to its source position in
    frame t-k: source = center + mv (both in pixels)
  * depth is the distance along the camera forward axis; sky pixels carry
    SKY_DEPTH and zeroed material channels
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError
from .frameio import (
    GBUFFER_LAYOUT,
    MOTION_LAYOUT,
    ROLE_EF,
    ROLE_SF,
    ClipManifest,
    FrameRecord,
    write_frame,
)

SKY_DEPTH = 1.0e4
_EPS = 1e-9
_RAY_MIN = 1e-6


def _vec(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (3,):
        raise ConfigError(f"expected a 3-vector, got {x!r}")
    return v


def _normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.maximum(n, _EPS)


def rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    a = _normalize(np.asarray(axis, dtype=np.float64))
    x, y, z = a
    c, s = np.cos(angle), np.sin(angle)
    cc = 1.0 - c
    return np.array(
        [
            [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
            [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
            [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
        ]
    )


@dataclass
class Trajectory:
    """Rigid position over time: linear drift plus one sinusoidal term."""

    base: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    osc_amp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    osc_freq: float = 0.0
    osc_phase: float = 0.0

    def at(self, t: float) -> np.ndarray:
        return (
            self.base
            + self.velocity * t
            + self.osc_amp * np.sin(2.0 * np.pi * self.osc_freq * t + self.osc_phase)
        )


@dataclass
class Material:
    color: np.ndarray
    metallic: float = 0.0
    roughness: float = 0.8


@dataclass
class Sphere:
    traj: Trajectory
    radius: float
    material: Material

    def frame(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return self.traj.at(t), np.eye(3)

    def intersect(self, origin, dirs, t: float):
        center, _ = self.frame(t)
        oc = origin - center
        b = dirs @ oc
        c = float(oc @ oc) - self.radius * self.radius
        disc = b * b - c
        ok = disc > 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        t_hit = np.where(t0 > _RAY_MIN, t0, t1)
        t_hit = np.where(ok & (t_hit > _RAY_MIN), t_hit, np.inf)
        return t_hit

    def surface(self, origin, dirs, t_hit, t: float):
        center, _ = self.frame(t)
        point = origin + dirs * t_hit[..., None]
        normal = (point - center) / self.radius
        local = point - center
        return point, normal, local

    def albedo(self, local) -> np.ndarray:
        return np.broadcast_to(self.material.color, local.shape).copy()


@dataclass
class Box:
    traj: Trajectory
    half: np.ndarray
    material: Material
    rot_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    rot_speed: float = 0.0
    rot0: float = 0.0

    def frame(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return self.traj.at(t), rotation_matrix(self.rot_axis, self.rot0 + self.rot_speed * t)

    def _to_local(self, origin, dirs, t: float):
        center, rot = self.frame(t)
        o_l = (origin - center) @ rot  # rot.T applied from the left
        d_l = dirs @ rot
        return o_l, d_l, rot

    def intersect(self, origin, dirs, t: float):
        o_l, d_l, _ = self._to_local(origin, dirs, t)
        d_safe = np.where(np.abs(d_l) < 1e-12, 1e-12, d_l)
        inv = 1.0 / d_safe
        t_a = (-self.half - o_l) * inv
        t_b = (self.half - o_l) * inv
        t_near = np.minimum(t_a, t_b).max(axis=-1)
        t_far = np.maximum(t_a, t_b).min(axis=-1)
        hit = (t_near <= t_far) & (t_far > _RAY_MIN)
        t_hit = np.where(t_near > _RAY_MIN, t_near, t_far)
        return np.where(hit, t_hit, np.inf)

    def surface(self, origin, dirs, t_hit, t: float):
        o_l, d_l, rot = self._to_local(origin, dirs, t)
        local = o_l + d_l * t_hit[..., None]
        # hit face: the axis where the local point sits on the slab boundary
        ratio = np.abs(local) / self.half
        axis = np.argmax(ratio, axis=-1)
        n_l = np.zeros(local.shape)
        idx = np.indices(axis.shape)
        n_l[(*idx, axis)] = np.sign(local[(*idx, axis)])
        normal = n_l @ rot.T
        point = origin + dirs * t_hit[..., None]
        return point, normal, local

    def albedo(self, local) -> np.ndarray:
        return np.broadcast_to(self.material.color, local.shape).copy()


@dataclass
class GroundPlane:
    """Infinite static plane y = height with a two-scale checker texture."""

    height: float = 0.0
    checker: float = 1.5
    color_a: np.ndarray = field(default_factory=lambda: np.array([0.82, 0.78, 0.72]))
    color_b: np.ndarray = field(default_factory=lambda: np.array([0.22, 0.25, 0.30]))
    metallic: float = 0.0
    roughness: float = 0.9

    @property
    def material(self) -> Material:
        return Material(self.color_a, self.metallic, self.roughness)

    def frame(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return np.array([0.0, self.height, 0.0]), np.eye(3)

    def intersect(self, origin, dirs, t: float):
        dy = dirs[..., 1]
        d_safe = np.where(np.abs(dy) < 1e-12, 1e-12, dy)
        t_hit = (self.height - origin[1]) / d_safe
        return np.where(t_hit > _RAY_MIN, t_hit, np.inf)

    def surface(self, origin, dirs, t_hit, t: float):
        point = origin + dirs * t_hit[..., None]
        up = 1.0 if origin[1] >= self.height else -1.0
        normal = np.zeros(point.shape)
        normal[..., 1] = up
        return point, normal, point

    def albedo(self, local) -> np.ndarray:
        s = self.checker
        par = (np.floor(local[..., 0] / s) + np.floor(local[..., 2] / s)) % 2.0
        coarse = (np.floor(local[..., 0] / (4 * s)) + np.floor(local[..., 2] / (4 * s))) % 2.0
        base = np.where(par[..., None] > 0.5, self.color_b, self.color_a)
        tint = (0.85 + 0.25 * coarse)[..., None]
        return np.clip(base * tint, 0.0, 1.0)


@dataclass
class DirectionalLight:
    direction: np.ndarray  # direction the light travels (gets normalized)
    color: np.ndarray

    def incident(self, point):
        d = _normalize(self.direction)
        omega = np.broadcast_to(-d, point.shape)
        radiance = np.broadcast_to(self.color, point.shape)
        return omega, radiance


@dataclass
class PointLight:
    traj: Trajectory
    color: np.ndarray

    def incident(self, point, t: float = 0.0):
        pos = self.traj.at(t)
        to_light = pos - point
        dist2 = np.maximum((to_light**2).sum(axis=-1, keepdims=True), 1e-6)
        omega = to_light / np.sqrt(dist2)
        radiance = self.color / dist2
        return omega, radiance


@dataclass
class Camera:
    pos: Trajectory
    look: Trajectory
    up: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    fov_y: float = 60.0  # degrees

    def basis(self, t: float):
        pos = self.pos.at(t)
        forward = _normalize(self.look.at(t) - pos)
        right = _normalize(np.cross(self.up, forward))
        down = np.cross(right, forward)
        return pos, right, down, forward


@dataclass
class SceneSpec:
    seed: int = 0
    width: int = 128  # LR width; HR is exactly 2x
    height: int = 64
    frames: int = 32
    fps: float = 60.0
    sky_color: np.ndarray = field(default_factory=lambda: np.array([0.62, 0.70, 0.85]))
    camera: Camera = None  # type: ignore[assignment]
    objects: list = field(default_factory=list)
    lights: list = field(default_factory=list)

    def time_of(self, frame_index: int) -> float:
        return frame_index / self.fps

    def validate(self) -> None:
        if self.width % 4 or self.height % 4:
            raise ConfigError("LR dims must be divisible by 4 for the network levels")
        if self.camera is None:
            raise ConfigError("scene has no camera")
        if not self.lights:
            raise ConfigError("scene has no lights")


# ---------------------------------------------------------------------------
# G-buffer
# ---------------------------------------------------------------------------


@dataclass
class GBuffer:
    """Per-pixel material/geometry record; 9 planes when flattened."""

    base_color: np.ndarray  # (3,H,W) in [0,1]
    normal: np.ndarray  # (3,H,W) unit where geometry, zero on sky
    depth: np.ndarray  # (H,W) forward distance, SKY_DEPTH on sky
    metallic: np.ndarray  # (H,W) in [0,1]
    roughness: np.ndarray  # (H,W) in [0,1]

    def planes(self) -> np.ndarray:
        return np.concatenate(
            [
                self.base_color,
                self.normal,
                self.depth[None],
                self.metallic[None],
                self.roughness[None],
            ],
            axis=0,
        ).astype(np.float32)

    @classmethod
    def from_planes(cls, planes: np.ndarray) -> "GBuffer":
        if planes.shape[0] != 9:
            raise ContractError(f"G-buffer needs 9 planes, got {planes.shape}")
        return cls(
            base_color=planes[0:3],
            normal=planes[3:6],
            depth=planes[6],
            metallic=planes[7],
            roughness=planes[8],
        )


class _Hit:
    """Dense per-pixel hit record for one ray grid."""

    __slots__ = ("obj", "t", "point", "normal", "local", "dirs", "origin")

    def __init__(self, shape, dirs, origin):
        self.obj = np.full(shape, -1, dtype=np.int32)
        self.t = np.full(shape, np.inf)
        self.point = np.zeros(shape + (3,))
        self.normal = np.zeros(shape + (3,))
        self.local = np.zeros(shape + (3,))
        self.dirs = dirs
        self.origin = origin


def make_rays(scene: SceneSpec, t: float, width: int, height: int):
    """Unit ray directions for each pixel center at the given frame time."""
    pos, right, down, forward = scene.camera.basis(t)
    f_px = 0.5 * height / np.tan(np.radians(scene.camera.fov_y) * 0.5)
    xs = (np.arange(width) + 0.5 - width * 0.5) / f_px
    ys = (np.arange(height) + 0.5 - height * 0.5) / f_px
    u, v = np.meshgrid(xs, ys)
    dirs = forward + u[..., None] * right + v[..., None] * down
    return pos, _normalize(dirs)


def intersect(scene: SceneSpec, t: float, origin, dirs) -> _Hit:
    hit = _Hit(dirs.shape[:-1], dirs, origin)
    for oid, obj in enumerate(scene.objects):
        t_obj = obj.intersect(origin, dirs, t)
        closer = t_obj < hit.t
        if not closer.any():
            continue
        point, normal, local = obj.surface(origin, dirs, t_obj, t)
        hit.t = np.where(closer, t_obj, hit.t)
        hit.obj = np.where(closer, oid, hit.obj)
        m = closer[..., None]
        hit.point = np.where(m, point, hit.point)
        hit.normal = np.where(m, normal, hit.normal)
        hit.local = np.where(m, local, hit.local)
    return hit


def gbuffer_from_hit(scene: SceneSpec, t: float, hit: _Hit) -> GBuffer:
    shape = hit.t.shape
    _pos, _r, _d, forward = scene.camera.basis(t)
    miss = hit.obj < 0
    depth = np.where(miss, SKY_DEPTH, hit.t * (hit.dirs @ forward))
    base = np.zeros(shape + (3,))
    metallic = np.zeros(shape)
    roughness = np.zeros(shape)
    for oid, obj in enumerate(scene.objects):
        sel = hit.obj == oid
        if not sel.any():
            continue
        base = np.where(sel[..., None], obj.albedo(hit.local), base)
        metallic = np.where(sel, obj.material.metallic, metallic)
        roughness = np.where(sel, obj.material.roughness, roughness)
    normal = np.where(miss[..., None], 0.0, hit.normal)
    return GBuffer(
        base_color=base.transpose(2, 0, 1).astype(np.float32),
        normal=normal.transpose(2, 0, 1).astype(np.float32),
        depth=depth.astype(np.float32),
        metallic=metallic.astype(np.float32),
        roughness=roughness.astype(np.float32),
    )


# ---------------------------------------------------------------------------
# shading
# ---------------------------------------------------------------------------


def shade_points(
    scene: SceneSpec,
    t: float,
    point: np.ndarray,
    normal: np.ndarray,
    albedo: np.ndarray,
    metallic: np.ndarray,
    roughness: np.ndarray,
    view_origin: np.ndarray,
) -> np.ndarray:
    """Radiance of explicit surface points: sum over lights of L * f_r * cos.

    The BRDF is diffuse plus a normalized Blinn-Phong lobe whose weight fades
    linearly to zero at roughness 1, so a roughness-1 metallic-0 surface is
    exactly Lambertian (albedo/pi).
    """
    out = np.zeros(point.shape)
    omega_o = _normalize(view_origin - point)
    m = metallic[..., None]
    r = np.clip(roughness, 0.08, 1.0)
    diff = albedo * (1.0 - m) / np.pi
    f0 = 0.04 * (1.0 - m) + albedo * m
    n_s = 2.0 / r**4 - 2.0
    for light in scene.lights:
        if isinstance(light, PointLight):
            omega_i, radiance = light.incident(point, t)
        else:
            omega_i, radiance = light.incident(point)
        cos_i = np.maximum((normal * omega_i).sum(axis=-1, keepdims=True), 0.0)
        h = _normalize(omega_i + omega_o)
        cos_h = np.maximum((normal * h).sum(axis=-1), 0.0)
        lobe = ((n_s + 2.0) / (2.0 * np.pi)) * np.power(cos_h, n_s)
        spec = f0 * ((1.0 - roughness) * lobe)[..., None]
        out += radiance * (diff + spec) * cos_i
    return out


def shade(gbuffer: GBuffer, scene: SceneSpec, t: float) -> np.ndarray:
    """Shade a rendered G-buffer at its own frame time; returns (3,H,W) linear."""
    h, w = gbuffer.depth.shape
    pos, _right, _down, forward = scene.camera.basis(t)
    _p, dirs = make_rays(scene, t, w, h)
    cos_f = dirs @ forward
    dist = gbuffer.depth / np.maximum(cos_f, _EPS)
    point = pos + dirs * dist[..., None]
    radiance = shade_points(
        scene,
        t,
        point,
        gbuffer.normal.transpose(1, 2, 0).astype(np.float64),
        gbuffer.base_color.transpose(1, 2, 0).astype(np.float64),
        gbuffer.metallic.astype(np.float64),
        gbuffer.roughness.astype(np.float64),
        pos,
    )
    sky = gbuffer.depth >= SKY_DEPTH * 0.999
    radiance = np.where(sky[..., None], scene.sky_color, radiance)
    return radiance.transpose(2, 0, 1).astype(np.float32)


# ---------------------------------------------------------------------------
# motion vectors
# ---------------------------------------------------------------------------


def _project(scene: SceneSpec, t: float, point: np.ndarray, width: int, height: int):
    """Continuous pixel coords of world points; returns (x, y, in_front)."""
    pos, right, down, forward = scene.camera.basis(t)
    q = point - pos
    qf = q @ forward
    front = qf > _RAY_MIN
    qf_safe = np.where(front, qf, 1.0)
    f_px = 0.5 * height / np.tan(np.radians(scene.camera.fov_y) * 0.5)
    x = width * 0.5 + f_px * (q @ right) / qf_safe
    y = height * 0.5 + f_px * (q @ down) / qf_safe
    return x, y, front


def _project_direction(scene: SceneSpec, t: float, dirs: np.ndarray, width: int, height: int):
    pos, right, down, forward = scene.camera.basis(t)
    qf = dirs @ forward
    front = qf > _RAY_MIN
    qf_safe = np.where(front, qf, 1.0)
    f_px = 0.5 * height / np.tan(np.radians(scene.camera.fov_y) * 0.5)
    x = width * 0.5 + f_px * (dirs @ right) / qf_safe
    y = height * 0.5 + f_px * (dirs @ down) / qf_safe
    return x, y, front


def motion_field(
    scene: SceneSpec, t_cur: int, t_prev: int, hit: _Hit
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic motion from frame t_cur to t_prev for the given primary hits.

    Returns (motion(2,H,W) float32, valid(H,W) bool).  Invalid pixels are
    off-screen at t_prev, behind the camera, or occluded there (checked with
    an exact visibility ray cast).
    """
    h, w = hit.t.shape
    time_cur = scene.time_of(t_cur)
    time_prev = scene.time_of(t_prev)
    cam_prev = scene.camera.pos.at(time_prev)

    point_prev = np.array(hit.point)
    for oid, obj in enumerate(scene.objects):
        sel = hit.obj == oid
        if not sel.any():
            continue
        c_cur, r_cur = obj.frame(time_cur)
        c_prev, r_prev = obj.frame(time_prev)
        if np.array_equal(c_cur, c_prev) and np.array_equal(r_cur, r_prev):
            continue  # static at this pair of times: world point unchanged
        moved = hit.local @ r_prev.T + c_prev
        point_prev = np.where(sel[..., None], moved, point_prev)

    miss = hit.obj < 0
    x_cur, y_cur, _ = _project(scene, time_cur, hit.point, w, h)
    x_prev, y_prev, front = _project(scene, time_prev, point_prev, w, h)

    # sky: a point at infinity along the view direction
    xs_cur, ys_cur, _ = _project_direction(scene, time_cur, hit.dirs, w, h)
    xs_prev, ys_prev, sky_front = _project_direction(scene, time_prev, hit.dirs, w, h)
    x_cur = np.where(miss, xs_cur, x_cur)
    y_cur = np.where(miss, ys_cur, y_cur)
    x_prev = np.where(miss, xs_prev, x_prev)
    y_prev = np.where(miss, ys_prev, y_prev)
    front = np.where(miss, sky_front, front)

    mv = np.stack([x_prev - x_cur, y_prev - y_cur]).astype(np.float32)
    mv[:, ~front] = 0.0

    in_frame = (x_prev >= 0.0) & (x_prev <= w) & (y_prev >= 0.0) & (y_prev <= h)

    # occlusion at t_prev: cast toward the tracked point (sky: along the ray)
    to_point = point_prev - cam_prev
    dist = np.sqrt((to_point**2).sum(axis=-1))
    occl_dirs = np.where(miss[..., None], hit.dirs, _normalize(to_point))
    occ_hit = intersect(scene, time_prev, cam_prev, occl_dirs)
    visible = np.where(
        miss,
        np.isinf(occ_hit.t),  # sky is visible only if nothing is hit at all
        occ_hit.t >= dist * (1.0 - 1e-3),
    )

    valid = front & in_frame & visible
    return mv, valid


# ---------------------------------------------------------------------------
# image-space utilities
# ---------------------------------------------------------------------------


def downsample_box(image: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping box average over the trailing two axes."""
    f = int(factor)
    if f < 1:
        raise ContractError(f"downsample factor must be >= 1, got {factor}")
    h, w = image.shape[-2:]
    if h % f or w % f:
        raise ContractError(f"dims {h}x{w} not divisible by factor {f}")
    shape = image.shape[:-2] + (h // f, f, w // f, f)
    return image.reshape(shape).mean(axis=(-3, -1)).astype(image.dtype)


# ---------------------------------------------------------------------------
# clip rendering
# ---------------------------------------------------------------------------


def render_frame_lr(scene: SceneSpec, t: int):
    """One-sample-per-pixel LR pass: (gbuffer, hit)."""
    time = scene.time_of(t)
    origin, dirs = make_rays(scene, time, scene.width, scene.height)
    hit = intersect(scene, time, origin, dirs)
    return gbuffer_from_hit(scene, time, hit), hit


def render_frame_hr(scene: SceneSpec, t: int) -> np.ndarray:
    """Supersampled HR pass: rendered at 2x the HR target, box-downsampled."""
    time = scene.time_of(t)
    w, h = scene.width * 4, scene.height * 4
    origin, dirs = make_rays(scene, time, w, h)
    hit = intersect(scene, time, origin, dirs)
    gb = gbuffer_from_hit(scene, time, hit)
    radiance = shade(gb, scene, time)
    return downsample_box(radiance, 2)


def render_clip(scene: SceneSpec, out_dir, stream: str = "both") -> ClipManifest:
    """Render a clip to disk and return its manifest.

    ``stream`` selects "lr", "hr", or "both".  The LR stream holds shaded
    frames only on even (SF) indices; G-buffers, motion fields and validity
    masks are emitted at LR resolution for every frame index.
    """
    if stream not in ("lr", "hr", "both"):
        raise ContractError(f"unknown stream {stream!r}")
    scene.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_scene_config(scene, out / "scene.cfg")

    manifest = ClipManifest(root=out)
    manifest.layout = [
        f"gbuffer={GBUFFER_LAYOUT}",
        f"motion={MOTION_LAYOUT}",
    ]

    for t in range(scene.frames):
        role = ROLE_SF if t % 2 == 0 else ROLE_EF
        gb, hit = render_frame_lr(scene, t)
        gb_rel = f"gb/{t:06d}.stsf"
        write_frame(out / gb_rel, gb.planes(), role)

        motion_rels: list[str | None] = []
        mask_rel = None
        for k in range(1, 6):
            if t - k < 0:
                motion_rels.append(None)
                continue
            mv, valid = motion_field(scene, t, t - k, hit)
            planes = np.concatenate([mv, valid[None].astype(np.float32)], axis=0)
            rel = f"mv/{t:06d}_k{k}.stsf"
            write_frame(out / rel, planes, role)
            motion_rels.append(rel)
            if k == 1:
                mask_rel = f"mask/{t:06d}.stsf"
                write_frame(out / mask_rel, valid[None].astype(np.float32), role)
        if mask_rel is None:  # frame 0 has no history; mask is all-valid
            mask_rel = f"mask/{t:06d}.stsf"
            write_frame(out / mask_rel, np.ones((1, scene.height, scene.width), np.float32), role)

        lr_rel = None
        if role == ROLE_SF and stream in ("lr", "both"):
            radiance = shade(gb, scene, scene.time_of(t))
            lr_rel = f"lr/{t:06d}.stsf"
            write_frame(out / lr_rel, radiance, role)

        hr_rel = None
        if stream in ("hr", "both"):
            hr = render_frame_hr(scene, t)
            hr_rel = f"hr/{t:06d}.stsf"
            write_frame(out / hr_rel, hr, role)

        manifest.records.append(
            FrameRecord(
                index=t,
                role=role,
                lr=lr_rel,
                hr=hr_rel,
                gbuffer=gb_rel,
                motion=motion_rels,
                mask=mask_rel,
            )
        )
    manifest.write()
    return manifest


# ---------------------------------------------------------------------------
# scene config files (key=value sections, human editable)
# ---------------------------------------------------------------------------


def _fmt_vec(v) -> str:
    return ",".join(f"{float(x):.10g}" for x in np.asarray(v).reshape(-1))


def _parse_vec(s: str) -> np.ndarray:
    try:
        return np.array([float(p) for p in s.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"bad vector {s!r}") from exc


def _traj_to_section(sec, traj: Trajectory, prefix: str = "") -> None:
    sec[f"{prefix}pos"] = _fmt_vec(traj.base)
    sec[f"{prefix}vel"] = _fmt_vec(traj.velocity)
    sec[f"{prefix}osc_amp"] = _fmt_vec(traj.osc_amp)
    sec[f"{prefix}osc_freq"] = f"{traj.osc_freq:.10g}"
    sec[f"{prefix}osc_phase"] = f"{traj.osc_phase:.10g}"


def _traj_from_section(sec, prefix: str = "") -> Trajectory:
    return Trajectory(
        base=_parse_vec(sec[f"{prefix}pos"]),
        velocity=_parse_vec(sec.get(f"{prefix}vel", "0,0,0")),
        osc_amp=_parse_vec(sec.get(f"{prefix}osc_amp", "0,0,0")),
        osc_freq=float(sec.get(f"{prefix}osc_freq", "0")),
        osc_phase=float(sec.get(f"{prefix}osc_phase", "0")),
    )


def write_scene_config(scene: SceneSpec, path) -> None:
    cp = configparser.ConfigParser()
    cp["scene"] = {
        "seed": str(scene.seed),
        "width": str(scene.width),
        "height": str(scene.height),
        "frames": str(scene.frames),
        "fps": f"{scene.fps:.10g}",
        "sky": _fmt_vec(scene.sky_color),
    }
    cp["camera"] = {"up": _fmt_vec(scene.camera.up), "fov": f"{scene.camera.fov_y:.10g}"}
    _traj_to_section(cp["camera"], scene.camera.pos)
    _traj_to_section(cp["camera"], scene.camera.look, prefix="look_")

    for i, light in enumerate(scene.lights):
        name = f"light:{i}"
        cp[name] = {}
        if isinstance(light, DirectionalLight):
            cp[name]["type"] = "directional"
            cp[name]["direction"] = _fmt_vec(light.direction)
            cp[name]["color"] = _fmt_vec(light.color)
        else:
            cp[name]["type"] = "point"
            cp[name]["color"] = _fmt_vec(light.color)
            _traj_to_section(cp[name], light.traj)

    for i, obj in enumerate(scene.objects):
        name = f"object:{i}"
        cp[name] = {}
        sec = cp[name]
        if isinstance(obj, GroundPlane):
            sec["type"] = "plane"
            sec["height"] = f"{obj.height:.10g}"
            sec["checker"] = f"{obj.checker:.10g}"
            sec["color_a"] = _fmt_vec(obj.color_a)
            sec["color_b"] = _fmt_vec(obj.color_b)
            sec["metallic"] = f"{obj.metallic:.10g}"
            sec["roughness"] = f"{obj.roughness:.10g}"
            continue
        sec["color"] = _fmt_vec(obj.material.color)
        sec["metallic"] = f"{obj.material.metallic:.10g}"
        sec["roughness"] = f"{obj.material.roughness:.10g}"
        _traj_to_section(sec, obj.traj)
        if isinstance(obj, Sphere):
            sec["type"] = "sphere"
            sec["radius"] = f"{obj.radius:.10g}"
        elif isinstance(obj, Box):
            sec["type"] = "box"
            sec["half"] = _fmt_vec(obj.half)
            sec["rot_axis"] = _fmt_vec(obj.rot_axis)
            sec["rot_speed"] = f"{obj.rot_speed:.10g}"
            sec["rot0"] = f"{obj.rot0:.10g}"
        else:
            raise ConfigError(f"cannot serialize object {obj!r}")

    buf = io.StringIO()
    cp.write(buf)
    Path(path).write_text(buf.getvalue())


def parse_scene_config(path_or_text) -> SceneSpec:
    cp = configparser.ConfigParser()
    text = path_or_text if "\n" in str(path_or_text) else Path(path_or_text).read_text()
    cp.read_string(text)
    if "scene" not in cp or "camera" not in cp:
        raise ConfigError("scene config needs [scene] and [camera] sections")

    sc = cp["scene"]
    cam_sec = cp["camera"]
    camera = Camera(
        pos=_traj_from_section(cam_sec),
        look=_traj_from_section(cam_sec, prefix="look_"),
        up=_parse_vec(cam_sec.get("up", "0,1,0")),
        fov_y=float(cam_sec.get("fov", "60")),
    )
    scene = SceneSpec(
        seed=int(sc.get("seed", "0")),
        width=int(sc.get("width", "128")),
        height=int(sc.get("height", "64")),
        frames=int(sc.get("frames", "32")),
        fps=float(sc.get("fps", "60")),
        sky_color=_parse_vec(sc.get("sky", "0.62,0.70,0.85")),
        camera=camera,
    )
    for name in cp.sections():
        sec = cp[name]
        if name.startswith("light:"):
            if sec["type"] == "directional":
                scene.lights.append(
                    DirectionalLight(_parse_vec(sec["direction"]), _parse_vec(sec["color"]))
                )
            elif sec["type"] == "point":
                scene.lights.append(PointLight(_traj_from_section(sec), _parse_vec(sec["color"])))
            else:
                raise ConfigError(f"unknown light type {sec['type']!r}")
        elif name.startswith("object:"):
            kind = sec["type"]
            if kind == "plane":
                scene.objects.append(
                    GroundPlane(
                        height=float(sec.get("height", "0")),
                        checker=float(sec.get("checker", "1.5")),
                        color_a=_parse_vec(sec.get("color_a", "0.82,0.78,0.72")),
                        color_b=_parse_vec(sec.get("color_b", "0.22,0.25,0.30")),
                        metallic=float(sec.get("metallic", "0")),
                        roughness=float(sec.get("roughness", "0.9")),
                    )
                )
                continue
            material = Material(
                color=_parse_vec(sec["color"]),
                metallic=float(sec.get("metallic", "0")),
                roughness=float(sec.get("roughness", "0.8")),
            )
            traj = _traj_from_section(sec)
            if kind == "sphere":
                scene.objects.append(Sphere(traj, float(sec["radius"]), material))
            elif kind == "box":
                scene.objects.append(
                    Box(
                        traj,
                        _parse_vec(sec["half"]),
                        material,
                        rot_axis=_parse_vec(sec.get("rot_axis", "0,1,0")),
                        rot_speed=float(sec.get("rot_speed", "0")),
                        rot0=float(sec.get("rot0", "0")),
                    )
                )
            else:
                raise ConfigError(f"unknown object type {kind!r}")
    scene.validate()
    return scene


# ---------------------------------------------------------------------------
# demo scenes
# ---------------------------------------------------------------------------


def make_demo_scene(
    variant: str = "orbit",
    seed: int = 0,
    width: int = 128,
    height: int = 64,
    frames: int = 32,
) -> SceneSpec:
    """Procedural demo scenes; the seed jitters trajectories and materials."""
    rng = np.random.default_rng(seed)
    jitter = lambda s: rng.uniform(-s, s)  # noqa: E731

    lights = [
        DirectionalLight(
            direction=_normalize(np.array([0.45 + jitter(0.1), -1.0, 0.35 + jitter(0.1)])),
            color=np.array([2.6, 2.5, 2.3]),
        ),
        DirectionalLight(
            direction=_normalize(np.array([-0.6, -0.7, -0.25])),
            color=np.array([0.7, 0.8, 1.0]),
        ),
        PointLight(
            traj=Trajectory(
                base=np.array([jitter(1.0), 2.6, 4.5 + jitter(0.5)]),
                velocity=np.array([0.15 * (1 if rng.random() < 0.5 else -1), 0.0, 0.0]),
            ),
            color=np.array([6.0, 5.2, 4.0]),
        ),
    ]
    ground = GroundPlane(checker=1.4 + jitter(0.2), roughness=0.85)

    if variant == "orbit":
        cam = Camera(
            pos=Trajectory(
                base=np.array([jitter(0.4), 1.9 + jitter(0.2), -1.2]),
                velocity=np.array([0.55 + jitter(0.1), 0.0, 0.22]),
                osc_amp=np.array([0.0, 0.12, 0.0]),
                osc_freq=0.35,
            ),
            look=Trajectory(
                base=np.array([0.0, 0.9, 4.6]),
                velocity=np.array([0.10, 0.0, 0.0]),
            ),
        )
        objects = [
            ground,
            Sphere(
                Trajectory(
                    base=np.array([-1.5 + jitter(0.3), 0.85, 4.6 + jitter(0.4)]),
                    velocity=np.array([1.45 + jitter(0.25), 0.0, 0.0]),
                    osc_amp=np.array([0.0, 0.35, 0.0]),
                    osc_freq=0.55 + jitter(0.1),
                    osc_phase=rng.uniform(0, np.pi),
                ),
                radius=0.8,
                material=Material(np.array([0.85, 0.30, 0.22]), metallic=0.1, roughness=0.45),
            ),
            Sphere(
                Trajectory(
                    base=np.array([2.1 + jitter(0.3), 0.65, 6.4]),
                    velocity=np.array([-0.85, 0.0, 0.35]),
                ),
                radius=0.65,
                material=Material(np.array([0.92, 0.88, 0.55]), metallic=0.85, roughness=0.25),
            ),
            Box(
                Trajectory(
                    base=np.array([0.4 + jitter(0.4), 0.55, 5.6 + jitter(0.4)]),
                    velocity=np.array([-0.5 + jitter(0.15), 0.0, -0.3]),
                ),
                half=np.array([0.55, 0.55, 0.55]),
                material=Material(np.array([0.25, 0.55, 0.85]), metallic=0.0, roughness=0.6),
                rot_axis=np.array([0.25, 1.0, 0.1]),
                rot_speed=0.9 + jitter(0.2),
                rot0=rng.uniform(0, np.pi),
            ),
        ]
    elif variant == "flyby":
        cam = Camera(
            pos=Trajectory(
                base=np.array([-2.2, 1.6 + jitter(0.2), -0.6]),
                velocity=np.array([1.35 + jitter(0.2), 0.0, 0.28]),
            ),
            look=Trajectory(
                base=np.array([0.6, 0.8, 5.2]),
                velocity=np.array([0.35, 0.0, 0.0]),
            ),
        )
        objects = [
            ground,
            Box(
                Trajectory(
                    base=np.array([-0.3 + jitter(0.3), 0.8, 4.2]),
                    velocity=np.array([0.0, 0.0, 0.0]),
                ),
                half=np.array([0.5, 0.8, 0.5]),
                material=Material(np.array([0.80, 0.62, 0.28]), metallic=0.3, roughness=0.5),
                rot_axis=np.array([0.0, 1.0, 0.0]),
                rot_speed=0.5 + jitter(0.15),
            ),
            Sphere(
                Trajectory(
                    base=np.array([1.9 + jitter(0.3), 0.7, 6.8 + jitter(0.5)]),
                    velocity=np.array([-1.9 + jitter(0.3), 0.0, 0.0]),
                    osc_amp=np.array([0.0, 0.25, 0.0]),
                    osc_freq=0.8,
                ),
                radius=0.7,
                material=Material(np.array([0.30, 0.75, 0.40]), metallic=0.05, roughness=0.35),
            ),
            Sphere(
                Trajectory(
                    base=np.array([-1.6, 0.5, 7.5]),
                    velocity=np.array([0.9, 0.0, -0.4]),
                ),
                radius=0.5,
                material=Material(np.array([0.70, 0.70, 0.78]), metallic=0.9, roughness=0.2),
            ),
        ]
    elif variant == "sky":
        # empty scene: constant sky only, used by invariance tests
        cam = Camera(
            pos=Trajectory(base=np.array([0.0, 1.5, 0.0])),
            look=Trajectory(base=np.array([0.0, 1.5, 5.0])),
        )
        # shading never touches geometry, but a light is still required
        return SceneSpec(
            seed=seed,
            width=width,
            height=height,
            frames=frames,
            camera=cam,
            objects=[],
            lights=[DirectionalLight(np.array([0.0, -1.0, 0.0]), np.array([1.0, 1.0, 1.0]))],
        )
    else:
        raise ConfigError(f"unknown demo scene {variant!r}")

    return SceneSpec(
        seed=seed,
        width=width,
        height=height,
        frames=frames,
        camera=cam,
        objects=objects,
        lights=lights,
    )
