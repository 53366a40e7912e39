import logging
import os
import time

DEBUG = os.environ.get("CECHKIT_DEBUG", "0") == "1"

logger = logging.getLogger("cechkit")


def set_debug(flag):
    global DEBUG
    DEBUG = bool(flag)
    logger.setLevel(logging.DEBUG if DEBUG else logging.INFO)


def log(*args):
    if DEBUG:
        logger.debug(" ".join(str(a) for a in args))


def warn(*args):
    logger.warning(" ".join(str(a) for a in args))


def configure(debug=None):
    """Attach a plain stderr handler once; used by the runner."""
    if debug is not None:
        set_debug(debug)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if DEBUG else logging.INFO)


class StageLogger:
    """Begin/end records for the stages of one runner invocation."""

    def __init__(self, *, seed, parameter_hash, run_id):
        self._seed = seed
        self._parameter_hash = parameter_hash
        self._run_id = run_id
        self._start_ns = time.time_ns()
        self.records = []

    def begin(self, stage):
        self._append(stage=stage, status="begin")

    def end(self, stage, *, extra=None, status="end"):
        self._append(stage=stage, status=status, extra=extra)

    def _append(self, *, stage, status, extra=None):
        record = {
            "stage": stage,
            "status": status,
            "seed": self._seed,
            "parameter_hash": self._parameter_hash,
            "run_id": self._run_id,
            "elapsed_ns": time.time_ns() - self._start_ns,
        }
        if extra:
            record["extra"] = dict(extra)
        self.records.append(record)
        log(f"[STAGE] {stage} {status}")
