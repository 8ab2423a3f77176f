"""Readers and writers for every file the command line touches.

Images are binary PGM, depth maps are little-endian PFM, point clouds are
ASCII PLY, and rigs live in a flat ``[section]`` / ``key = value`` text file.
Floats are written with ``repr`` so a write followed by a load is exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .calibration import CornerObservation
from .errors import ConfigError, FileFormatError
from .geometry import MediaIndices, PortPlane
from .matcher import PointCloud
from .optics import Camera, CameraIntrinsics, CameraPose, IndexCoefficients, StereoRig
from .simulator import NoiseSpec, SceneSpec

# -- PGM -----------------------------------------------------------------------


def _header_tokens(fh, count):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens = []
    while len(tokens) < count:
        line = fh.readline()
        if not line:
            raise FileFormatError("truncated header")
        line = line.split(b"#", 1)[0]
        tokens += line.split()
    if len(tokens) != count:
        raise FileFormatError("image data must start on the line after the header")
    return tokens


def write_pgm(path, image):
    """Binary P5. ``uint8`` stays 8-bit, ``uint16`` stays 16-bit, floats in
    [0, 1] are quantised to 16 bits."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {img.shape}")
    if img.dtype == np.uint8:
        maxval, data = 255, img
    elif img.dtype == np.uint16:
        maxval, data = 65535, img.astype(">u2")
    elif np.issubdtype(img.dtype, np.floating):
        if img.size and (not np.all(np.isfinite(img)) or img.min() < 0 or img.max() > 1):
            raise ValueError("float images must lie in [0, 1]")
        maxval, data = 65535, np.rint(img * 65535.0).astype(">u2")
    else:
        raise ValueError(f"unsupported image dtype {img.dtype}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_pgm(path, normalize=False):
    """Return the stored integers, or floats in [0, 1] with ``normalize``."""
    with open(path, "rb") as fh:
        magic, w, h, maxval = _header_tokens(fh, 4)
        if magic != b"P5":
            raise FileFormatError(f"{path}: not a binary PGM (magic {magic!r})")
        w, h, maxval = int(w), int(h), int(maxval)
        if not 0 < maxval < 65536:
            raise FileFormatError(f"{path}: bad maxval {maxval}")
        dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
        raw = fh.read()
    if len(raw) != w * h * dtype.itemsize:
        raise FileFormatError(f"{path}: expected {w * h * dtype.itemsize} data bytes, got {len(raw)}")
    img = np.frombuffer(raw, dtype=dtype).reshape(h, w)
    img = img.astype(np.uint8 if maxval < 256 else np.uint16)
    if normalize:
        return img.astype(np.float64) / maxval
    return img


# -- PFM -----------------------------------------------------------------------


def write_pfm(path, depth):
    """Greyscale ``Pf``; non-finite or non-positive depths become 0.0."""
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError(f"PFM needs a 2-D map, got shape {d.shape}")
    out = np.where(np.isfinite(d) & (d > 0.0), d, 0.0).astype("<f4")
    h, w = d.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n%d %d\n-1.0\n" % (w, h))
        fh.write(np.ascontiguousarray(out[::-1]).tobytes())


def read_pfm(path):
    """Return a ``float32`` array, top row first."""
    with open(path, "rb") as fh:
        magic, w, h, scale = _header_tokens(fh, 4)
        if magic != b"Pf":
            raise FileFormatError(f"{path}: only greyscale Pf is supported (got {magic!r})")
        w, h, scale = int(w), int(h), float(scale)
        raw = fh.read()
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    if len(raw) != w * h * 4:
        raise FileFormatError(f"{path}: expected {w * h * 4} data bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=dtype).reshape(h, w)[::-1].astype(np.float32)


# -- PLY -----------------------------------------------------------------------

PLY_PROPERTIES = ("x", "y", "z", "intensity", "gap")


def write_ply(path, cloud: PointCloud):
    cols = np.column_stack([cloud.points, cloud.intensity, cloud.gap]).astype(np.float32)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {cols.shape[0]}\n")
        for name in PLY_PROPERTIES:
            fh.write(f"property float {name}\n")
        fh.write("end_header\n")
        # 9 significant digits identify a float32 uniquely
        np.savetxt(fh, cols, fmt="%.9g")


def read_ply(path):
    """Read an ASCII PLY written by ``write_ply`` into a ``PointCloud`` (float32 values)."""
    with open(path, encoding="ascii") as fh:
        if fh.readline().strip() != "ply" or fh.readline().strip() != "format ascii 1.0":
            raise FileFormatError(f"{path}: not an ASCII PLY file")
        count, props = None, []
        for line in fh:
            parts = line.split()
            if parts[:2] == ["element", "vertex"]:
                count = int(parts[2])
            elif parts[:1] == ["property"]:
                props.append(parts[-1])
            elif parts == ["end_header"]:
                break
        if count is None or tuple(props) != PLY_PROPERTIES:
            raise FileFormatError(f"{path}: expected vertex properties {PLY_PROPERTIES}")
        rows = [line.split() for line in fh if line.strip()]
    try:
        data = np.array(rows, dtype=np.float32).reshape(-1, len(PLY_PROPERTIES))
    except ValueError:
        raise FileFormatError(f"{path}: malformed vertex rows") from None
    if data.shape[0] != count:
        raise FileFormatError(f"{path}: header says {count} vertices, found {data.shape[0]}")
    return PointCloud(data[:, :3], data[:, 3], data[:, 4])


# -- config --------------------------------------------------------------------

_CAMERA_KEYS = ("fx", "fy", "cx", "cy", "k1", "k2", "width", "height", "rotation", "translation")
_SCENE_VECTORS = {"plane_rotation": 9, "plane_translation": 3}
_SECTIONS = ("left", "right", "port", "media", "index_model", "scene", "noise")


@dataclass
class Config:
    rig: StereoRig
    scene: SceneSpec | None = None
    noise: NoiseSpec | None = None
    source: str | None = field(default=None, compare=False)


def _allowed_keys(section):
    if section in ("left", "right"):
        return _CAMERA_KEYS
    if section == "port":
        return ("normal", "inner_offset", "thickness")
    if section == "media":
        return ("n_air", "n_glass", "n_water")
    if section == "index_model":
        return tuple(f.name for f in fields(IndexCoefficients))
    if section == "scene":
        return tuple(f.name for f in fields(SceneSpec))
    return tuple(f.name for f in fields(NoiseSpec))


def _parse_sections(text, path):
    sections, lines = {}, {}
    current = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", path, no)
            current = line[1:-1].strip()
            if current not in _SECTIONS:
                raise ConfigError(f"unknown section [{current}]", path, no)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", path, no)
            sections[current], lines[current] = {}, {"": no}
            continue
        if current is None:
            raise ConfigError("key outside of any section", path, no)
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", path, no)
        if key not in _allowed_keys(current):
            raise ConfigError(f"unknown key {key!r} in [{current}]", path, no)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", path, no)
        sections[current][key] = value.strip()
        lines[current][key] = no
    return sections, lines


class _Reader:
    """Typed access to one section, with errors pointing at the offending line."""

    def __init__(self, name, values, lines, path):
        self.name, self.values, self.lines, self.path = name, values, lines, path

    def _fail(self, key, message):
        raise ConfigError(message, self.path, self.lines.get(key, self.lines.get("")))

    def has(self, key):
        return key in self.values

    def floats(self, key, count=None):
        if key not in self.values:
            self._fail(key, f"missing key {key!r} in [{self.name}]")
        parts = self.values[key].replace(",", " ").split()
        try:
            out = [float(p) for p in parts]
        except ValueError:
            self._fail(key, f"{key!r} in [{self.name}] is not numeric: {self.values[key]!r}")
        if count is not None and len(out) != count:
            self._fail(key, f"{key!r} in [{self.name}] needs {count} values, got {len(out)}")
        if not all(np.isfinite(out)):
            self._fail(key, f"{key!r} in [{self.name}] must be finite")
        return out

    def float(self, key, default=None):
        if default is not None and key not in self.values:
            return default
        return self.floats(key, 1)[0]

    def int(self, key, default=None):
        if default is not None and key not in self.values:
            return default
        try:
            return int(self.values[key])
        except KeyError:
            self._fail(key, f"missing key {key!r} in [{self.name}]")
        except ValueError:
            self._fail(key, f"{key!r} in [{self.name}] must be an integer")

    def build(self, factory, *args, **kwargs):
        """Construct a domain object, reporting validation errors at the section."""
        try:
            return factory(*args, **kwargs)
        except (ValueError, TypeError) as exc:
            self._fail("", f"[{self.name}]: {exc}")


def _read_camera(r: _Reader):
    intr = r.build(
        CameraIntrinsics,
        r.float("fx"), r.float("fy"), r.float("cx"), r.float("cy"),
        r.float("k1", 0.0), r.float("k2", 0.0), r.int("width"), r.int("height"),
    )
    rot = np.array(r.floats("rotation", 9)).reshape(3, 3)
    pose = r.build(CameraPose, rot, np.array(r.floats("translation", 3)))
    return Camera(intr, pose)


def parse_config(text, path="<config>") -> Config:
    sections, lines = _parse_sections(text, path)
    readers = {k: _Reader(k, sections[k], lines[k], path) for k in sections}
    for required in ("left", "right", "port"):
        if required not in readers:
            raise ConfigError(f"missing section [{required}]", path)
    left = _read_camera(readers["left"])
    right = _read_camera(readers["right"])
    p = readers["port"]
    port = p.build(
        PortPlane, np.array(p.floats("normal", 3)), p.float("inner_offset"), p.float("thickness")
    )
    media = MediaIndices()
    if "media" in readers:
        m = readers["media"]
        media = m.build(
            MediaIndices,
            m.float("n_air", media.n_air), m.float("n_glass", media.n_glass),
            m.float("n_water", media.n_water),
        )
    coeffs = IndexCoefficients.default()
    if "index_model" in readers:
        ix = readers["index_model"]
        # an explicit table replaces the default one entirely
        coeffs = IndexCoefficients(**{k: ix.float(k) for k in ix.values})
    anchor = readers["port"]
    rig = anchor.build(StereoRig, left, right, port, media, coeffs)

    scene = None
    if "scene" in readers:
        s = readers["scene"]
        kwargs = {}
        for f in fields(SceneSpec):
            if not s.has(f.name):
                continue
            if f.name == "kind":
                kwargs["kind"] = s.values["kind"]
            elif f.name in _SCENE_VECTORS:
                vec = np.array(s.floats(f.name, _SCENE_VECTORS[f.name]))
                kwargs[f.name] = vec.reshape(3, 3) if f.name == "plane_rotation" else vec
            elif f.type in ("int", int):
                kwargs[f.name] = s.int(f.name)
            else:
                kwargs[f.name] = s.float(f.name)
        scene = s.build(SceneSpec, **kwargs)
    noise = None
    if "noise" in readers:
        n = readers["noise"]
        noise = n.build(
            NoiseSpec, n.float("pixel_sigma", 0.0), n.float("intensity_sigma", 0.0), n.int("seed", 0)
        )
    return Config(rig, scene, noise, str(path))


def load_config(path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"not a text file ({exc.reason})", path) from None
    return parse_config(text, str(path))


def _fmt(values):
    return " ".join(repr(float(v)) for v in np.ravel(values))


def format_config(rig: StereoRig, scene: SceneSpec | None = None,
                  noise: NoiseSpec | None = None) -> str:
    out = []
    for name in ("left", "right"):
        cam = rig.camera(name)
        i = cam.intrinsics
        out += [
            f"[{name}]",
            f"fx = {i.fx!r}", f"fy = {i.fy!r}", f"cx = {i.cx!r}", f"cy = {i.cy!r}",
            f"k1 = {i.k1!r}", f"k2 = {i.k2!r}",
            f"width = {i.width}", f"height = {i.height}",
            f"rotation = {_fmt(cam.pose.rotation)}",
            f"translation = {_fmt(cam.pose.translation)}",
            "",
        ]
    p, m = rig.port, rig.media
    out += [
        "[port]", f"normal = {_fmt(p.normal)}",
        f"inner_offset = {p.inner_offset!r}", f"thickness = {p.thickness!r}", "",
        "[media]", f"n_air = {m.n_air!r}", f"n_glass = {m.n_glass!r}", f"n_water = {m.n_water!r}", "",
        "[index_model]",
    ]
    out += [f"{k} = {float(v)!r}" for k, v in rig.index_coefficients.as_dict().items()]
    out.append("")
    if scene is not None:
        out.append("[scene]")
        for f in fields(SceneSpec):
            v = getattr(scene, f.name)
            if f.name in _SCENE_VECTORS:
                out.append(f"{f.name} = {_fmt(v)}")
            elif isinstance(v, str):
                out.append(f"{f.name} = {v}")
            elif isinstance(v, (int, np.integer)):
                out.append(f"{f.name} = {int(v)}")
            else:
                out.append(f"{f.name} = {float(v)!r}")
        out.append("")
    if noise is not None:
        out += [
            "[noise]", f"pixel_sigma = {noise.pixel_sigma!r}",
            f"intensity_sigma = {noise.intensity_sigma!r}", f"seed = {noise.seed}", "",
        ]
    return "\n".join(out)


def save_config(path, rig, scene=None, noise=None):
    Path(path).write_text(format_config(rig, scene, noise), encoding="utf-8")


# -- CSV -----------------------------------------------------------------------

OBS_HEADER = ("view_id", "camera", "board_x", "board_y", "board_z", "u", "v")


def write_observations(path, observations):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_HEADER)
        for o in observations:
            w.writerow([
                o.view_id, "L" if o.camera == "left" else "R",
                *(repr(float(x)) for x in o.board_point), repr(float(o.pixel[0])),
                repr(float(o.pixel[1])),
            ])


def read_observations(path):
    out = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or tuple(h.strip() for h in header) != OBS_HEADER:
            raise ConfigError(f"header must be {','.join(OBS_HEADER)}", path, 1)
        for no, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(OBS_HEADER):
                raise ConfigError(f"expected {len(OBS_HEADER)} fields, got {len(row)}", path, no)
            try:
                out.append(CornerObservation(
                    int(row[0]), row[1].strip(), tuple(float(x) for x in row[2:5]),
                    (float(row[5]), float(row[6])),
                ))
            except ValueError as exc:
                raise ConfigError(str(exc), path, no) from None
    return out


def write_truth_match(path, truth_match):
    """One line per left pixel with a known right-image correspondence."""
    tm = np.asarray(truth_match)
    rows, cols = np.nonzero(np.all(np.isfinite(tm), axis=2))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("u_left", "v_left", "u_right", "v_right"))
        for r, c in zip(rows, cols):
            w.writerow((int(c), int(r), repr(float(tm[r, c, 0])), repr(float(tm[r, c, 1]))))


def read_truth_match(path, width, height):
    tm = np.full((height, width, 2), np.nan)
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        next(rows)
        for row in rows:
            tm[int(row[1]), int(row[0])] = float(row[2]), float(row[3])
    return tm


def write_search_domain(path, locus, domain):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("z", "u", "v", "in_bounds"))
        for z, (u, v), inb in locus.samples:
            w.writerow((repr(z), repr(u), repr(v), int(inb)))
        w.writerow(())
        w.writerow(("row", "col_start", "col_end"))
        for row in domain.rows:
            w.writerow(tuple(int(x) for x in row))


def read_search_domain(path):
    """Return ``(samples (K, 4) float, intervals (M, 3) int64)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    split = rows.index([])
    samples = np.array([[float(x) for x in r] for r in rows[1:split]]).reshape(-1, 4)
    intervals = np.array([[int(x) for x in r] for r in rows[split + 2 :]], dtype=np.int64)
    return samples, intervals.reshape(-1, 3)
