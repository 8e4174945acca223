"""Exception hierarchy shared by the library and the CLI.

Every error carries a stable machine-readable ``code`` and the process
``exit_code`` the CLI uses when the error reaches the top level.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DISAGREEMENT = 3
EXIT_AMBIGUOUS = 4
EXIT_SOLVER = 5


class SpecGenusError(Exception):
    code = "error"
    exit_code = EXIT_UNEXPECTED

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def as_record(self):
        record = {
            "code": self.code,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        record.update(self.details)
        return record


class MeshParseError(SpecGenusError, ValueError):
    code = "mesh_parse"


class OpenSurfaceError(SpecGenusError, ValueError):
    code = "open_surface"


class NonManifoldError(SpecGenusError, ValueError):
    code = "non_manifold"


class OrientationError(SpecGenusError, ValueError):
    code = "inconsistent_orientation"


class DegenerateTriangleError(SpecGenusError, ValueError):
    code = "degenerate_triangle"


class SurfaceParameterError(SpecGenusError, ValueError):
    code = "surface_parameter"


class RotationError(SpecGenusError, ValueError):
    code = "not_a_rotation"


class HeightFunctionError(SpecGenusError, ValueError):
    code = "height_function"


class OperatorError(SpecGenusError, ValueError):
    code = "operator"


class TestFunctionError(SpecGenusError, ValueError):
    code = "test_function"
    # keep pytest from collecting this class
    __test__ = False


class FitError(SpecGenusError, ValueError):
    code = "fit"


class SweepError(SpecGenusError, ValueError):
    code = "sweep"


class EigensolverError(SpecGenusError, RuntimeError):
    code = "eigensolver"
    exit_code = EXIT_SOLVER


class SingularShiftError(EigensolverError):
    code = "singular_shift"


class IncompleteWindowError(EigensolverError):
    code = "incomplete_window"


class WindowError(SpecGenusError, ValueError):
    code = "window"


class NotMorseError(SpecGenusError):
    code = "not_morse"


class InternalInconsistencyError(SpecGenusError, RuntimeError):
    code = "internal_inconsistency"


class ConfigError(SpecGenusError, ValueError):
    code = "config"
    exit_code = EXIT_CONFIG

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}", field=field)
        self.field = field
