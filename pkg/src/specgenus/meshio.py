from __future__ import annotations

import logging
import os

import numpy as np

from .errors import MeshParseError
from .surface import EmbeddedSurface, validate_mesh

logger = logging.getLogger(__name__)

FORMATS = ("off", "obj")


def _data_lines(fp):
    for number, line in enumerate(fp, start=1):
        content = line.split("#", 1)[0].strip()
        if content:
            yield number, content


def read_off(path):
    with open(path, encoding="utf-8") as fp:
        lines = _data_lines(fp)
        try:
            number, header = next(lines)
        except StopIteration:
            raise MeshParseError("empty OFF file", path=str(path)) from None
        tokens = header.split()
        if not tokens[0].upper().endswith("OFF"):
            raise MeshParseError("missing OFF header", path=str(path), line=number)
        tokens = tokens[1:]
        if not tokens:
            try:
                number, counts = next(lines)
            except StopIteration:
                raise MeshParseError("missing OFF counts", path=str(path)) from None
            tokens = counts.split()
        try:
            n_vertices, n_faces = int(tokens[0]), int(tokens[1])
        except (IndexError, ValueError):
            raise MeshParseError("malformed OFF counts", path=str(path), line=number) from None

        vertices = []
        faces = []
        for number, content in lines:
            values = content.split()
            try:
                if len(vertices) < n_vertices:
                    vertices.append([float(value) for value in values[:3]])
                    if len(values) < 3:
                        raise ValueError("vertex needs three coordinates")
                elif len(faces) < n_faces:
                    corners = [int(value) for value in values[1 : int(values[0]) + 1]]
                    if int(values[0]) != 3 or len(corners) != 3:
                        raise MeshParseError(
                            "only triangular faces are supported", path=str(path), line=number
                        )
                    faces.append(corners)
            except MeshParseError:
                raise
            except ValueError as error:
                raise MeshParseError(f"malformed OFF record: {error}", path=str(path), line=number) from None
    if len(vertices) != n_vertices or len(faces) != n_faces:
        raise MeshParseError(
            f"expected {n_vertices} vertices and {n_faces} faces, found {len(vertices)} and {len(faces)}",
            path=str(path),
        )
    return np.array(vertices, dtype=float), np.array(faces, dtype=np.int64)


def _obj_index(token, n_vertices):
    index = int(token.partition("/")[0])
    if index < 0:
        return n_vertices + index
    return index - 1


def read_obj(path):
    vertices = []
    faces = []
    with open(path, encoding="utf-8") as fp:
        for number, content in _data_lines(fp):
            keyword, _, rest = content.partition(" ")
            try:
                if keyword == "v":
                    coordinates = rest.split()
                    if len(coordinates) < 3:
                        raise ValueError("vertex needs three coordinates")
                    vertices.append([float(value) for value in coordinates[:3]])
                elif keyword == "f":
                    corners = [_obj_index(token, len(vertices)) for token in rest.split()]
                    if len(corners) != 3:
                        raise MeshParseError(
                            "only triangular faces are supported", path=str(path), line=number
                        )
                    faces.append(corners)
            except MeshParseError:
                raise
            except ValueError as error:
                raise MeshParseError(f"malformed OBJ record: {error}", path=str(path), line=number) from None
    return np.array(vertices, dtype=float), np.array(faces, dtype=np.int64)


_READERS = {"off": read_off, "obj": read_obj}


def guess_format(path):
    extension = os.path.splitext(str(path))[1].lstrip(".").lower()
    if extension not in FORMATS:
        raise MeshParseError(f"cannot infer mesh format from {path!r}", path=str(path))
    return extension


def load_mesh(path, format=None):  # pylint: disable=redefined-builtin
    fmt = (format or guess_format(path)).lower()
    if fmt not in _READERS:
        raise MeshParseError(f"unsupported mesh format {format!r}", path=str(path))
    if not os.path.exists(path):
        raise MeshParseError(f"mesh file {path!r} does not exist", path=str(path))
    vertices, faces = _READERS[fmt](path)
    vertices, faces = validate_mesh(vertices, faces)
    name = os.path.splitext(os.path.basename(str(path)))[0]
    logger.info("Loaded %s mesh %s with %d vertices and %d faces", fmt.upper(), path, len(vertices), len(faces))
    return EmbeddedSurface(vertices, faces, name=name, params={"path": str(path)})


def write_off(surface, path):
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("OFF\n")
        fp.write(f"{surface.n_vertices} {len(surface.faces)} {len(surface.edges)}\n")
        for x, y, z in surface.vertices.tolist():
            fp.write(f"{x!r} {y!r} {z!r}\n")
        for a, b, c in surface.faces.tolist():
            fp.write(f"3 {a} {b} {c}\n")


def write_obj(surface, path):
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(f"# {surface.name}\n")
        for x, y, z in surface.vertices.tolist():
            fp.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in surface.faces.tolist():
            fp.write(f"f {a + 1} {b + 1} {c + 1}\n")
