import json

import numpy as np
import pytest

TETRAHEDRON_VERTICES = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ]
)
TETRAHEDRON_FACES = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])


@pytest.fixture(autouse=True)
def user_config_dir(tmp_path, monkeypatch):
    """Keep ConfigManager away from the real user configuration."""
    directory = tmp_path / "user-config"
    monkeypatch.setattr("specgenus.config.user_config_dir", lambda name: str(directory))
    return directory


@pytest.fixture
def tetrahedron():
    return TETRAHEDRON_VERTICES.copy(), TETRAHEDRON_FACES.copy()


@pytest.fixture
def off_file(tmp_path, tetrahedron):
    vertices, faces = tetrahedron
    lines = ["OFF", "# regular tetrahedron", f"{len(vertices)} {len(faces)} 6"]
    lines += [" ".join(repr(float(x)) for x in vertex) for vertex in vertices]
    lines += ["3 " + " ".join(str(int(i)) for i in face) for face in faces]
    path = tmp_path / "tetrahedron.off"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def obj_file(tmp_path, tetrahedron):
    vertices, faces = tetrahedron
    lines = ["# regular tetrahedron"]
    lines += ["v " + " ".join(repr(float(x)) for x in vertex) for vertex in vertices]
    lines += ["f " + " ".join(f"{int(i) + 1}/{int(i) + 1}" for i in face) for face in faces]
    path = tmp_path / "tetrahedron.obj"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def write_config(tmp_path):
    """Write a run configuration document and return its path."""

    def write(document, name="run.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return write


@pytest.fixture
def small_sphere_document(tmp_path):
    return {
        "surface": {"builtin": {"family": "round_sphere", "radius": 1.0}, "resolution": 2},
        "height": {"direction": [0.0, 0.0, 1.0]},
        "h_list": [0.4, 0.3, 0.2],
        "output": str(tmp_path / "out"),
    }
