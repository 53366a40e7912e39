"""Error codes shared by the library and the runner."""

FINENESS_EXCEEDED = "FINENESS_EXCEEDED"
TARGET_TOO_FINE = "TARGET_TOO_FINE"
SUPPORT_OUTSIDE_ANNULUS = "SUPPORT_OUTSIDE_ANNULUS"
SUPPORT_OUTSIDE_BALL = "SUPPORT_OUTSIDE_BALL"
PACKING_FAILED = "PACKING_FAILED"
TOO_FAR = "TOO_FAR"
NO_VALID_MAP = "NO_VALID_MAP"
WELLDEF_FAILED = "WELLDEF_FAILED"
NOT_FOUND = "NOT_FOUND"
COMPLEX_TOO_LARGE = "COMPLEX_TOO_LARGE"
PRECONDITION_FAILED = "PRECONDITION_FAILED"
FILL_FAILED = "FILL_FAILED"
BAND_NOT_DISJOINT = "BAND_NOT_DISJOINT"
UNSUPPORTED_DIMENSION = "UNSUPPORTED_DIMENSION"
TOWER_FAILED = "TOWER_FAILED"
SCENARIO_INVALID = "SCENARIO_INVALID"


class CechError(Exception):
    """A named failure of one of the geometric or algebraic contracts."""

    def __init__(self, code, message, **detail):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.message = message
        self.detail = detail

    def to_record(self):
        return {
            "code": self.code,
            "message": self.message,
            "detail": {k: _plain(v) for k, v in sorted(self.detail.items())},
        }


class ScenarioError(CechError):
    """Malformed scenario/config file or an I/O failure (runner exit code 2)."""

    def __init__(self, message, **detail):
        super().__init__(SCENARIO_INVALID, message, **detail)


def _plain(value):
    if isinstance(value, (bool, int, float, str)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    return repr(value)
