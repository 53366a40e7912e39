#!/usr/bin/env python3
"""Command-line runner: looks up an operation in the registry, loads its plugin
and writes the result record, a CSV table and the stage log under --out."""

import argparse
import hashlib
import importlib
import json
import sys
import traceback
from pathlib import Path

import psutil
from joblib import Parallel, delayed

from cechkit import log as cklog
from cechkit.config import config, load_config
from cechkit.errors import CechError, ScenarioError
from cechkit.log import StageLogger, log, warn
from cechkit.records import dumps, envelope, load_json, save_json, to_plain, write_csv

REGISTRY_FILE = "experiments.json"
EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2


# ---------- Registry ----------
def load_registry(path):
    registry = load_json(path, None)
    if registry is None:
        raise ScenarioError(f"registry not found: {path}")
    if not isinstance(registry, dict):
        raise ScenarioError(f"{path} must hold a JSON object")
    return registry


# ---------- Plugin Loader ----------
def load_plugin(command, entry):
    plugin_path = entry.get("plugin")
    if not plugin_path or ":" not in plugin_path:
        raise ScenarioError(f"no plugin path for '{command}'")
    module_name, class_name = plugin_path.split(":")
    try:
        module = importlib.import_module(module_name.strip())
        cls = getattr(module, class_name.strip())
    except (ImportError, AttributeError) as e:
        raise ScenarioError(f"failed to load plugin '{command}': {e}") from e
    try:
        plugin = cls(cfg=entry)
    except TypeError:
        plugin = cls()
        setattr(plugin, "cfg", entry)
    if hasattr(plugin, "on_start"):
        try:
            plugin.on_start()
        except Exception as e:
            warn(f"[PLUGIN] on_start error: {e}")
    return plugin


# ---------- Jobs ----------
def parse_param(text):
    """key=value with the value read as JSON when it parses, else kept as a string."""
    if "=" not in text:
        raise ScenarioError(f"--param needs key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _overrides(args):
    out = dict(parse_param(p) for p in args.param)
    if args.action:
        out["action"] = args.action
    if args.punctures is not None:
        out["punctures"] = args.punctures
    return out


def scenario_jobs(path, args):
    data = load_json(path, None)
    if not isinstance(data, dict):
        raise ScenarioError(f"scenario {path} must hold a JSON object")
    words = str(data.get("operation", "")).split()
    if not words:
        raise ScenarioError(f"scenario {path} names no operation")
    params = dict(data.get("params") or {})
    if len(words) > 1:
        params.setdefault("action", words[1])
    params.update(_overrides(args))
    seed = args.seed if args.seed is not None else data.get("seed")
    stem = data.get("output") or Path(path).stem
    return {"command": words[0], "params": params, "seed": seed, "stem": stem}


def build_jobs(args):
    jobs = []
    for path in args.scenario:
        jobs.append(scenario_jobs(path, args))
    if args.command:
        stem = args.command + (f"-{args.action}" if args.action else "")
        jobs.append({"command": args.command, "params": _overrides(args), "seed": args.seed,
                     "stem": stem})
    if not jobs:
        raise ScenarioError("nothing to run: give a command or --scenario")
    seen = {}
    for job in jobs:
        n = seen.get(job["stem"], 0)
        seen[job["stem"]] = n + 1
        if n:
            job["stem"] = f"{job['stem']}-{n}"
    return jobs


def parameter_hash(command, params, seed):
    text = dumps(to_plain({"command": command, "params": params, "seed": seed}))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def run_job(job, registry, out_dir, config_path=None, debug=False):
    """Run one job; returns (exit code, summary row). Never raises."""
    cklog.configure(debug)
    if config_path:
        config.update(load_config(config_path))
    command, seed, stem = job["command"], job["seed"], job["stem"]
    out_dir = Path(out_dir)
    params = {}
    stages = StageLogger(seed=seed, parameter_hash="", run_id=stem)
    code, row = EXIT_OK, {"job": stem, "operation": command}
    try:
        if command not in registry:
            raise ScenarioError(f"unknown operation '{command}'", known=sorted(registry))
        entry = registry[command]
        params = {**entry.get("params", {}), **job["params"]}
        stages = StageLogger(seed=seed, parameter_hash=parameter_hash(command, params, seed),
                             run_id=stem)
        stages.begin("load")
        plugin = load_plugin(command, entry)
        stages.end("load")
        if seed is None and plugin.needs_seed(params):
            raise ScenarioError(f"--seed is required for '{command}'")
        stages.begin("run")
        body = to_plain(plugin.run(params, seed))
        stages.end("run")
        stages.begin("write")
        save_json(out_dir / f"{stem}.json", envelope(command, to_plain(params), seed, body))
        write_csv(out_dir / f"{stem}.csv", to_plain(plugin.table_rows(body)))
        stages.end("write")
        row.update(plugin.summary_row(body))
        if plugin.failed(body):
            code = EXIT_FAILED
    except ScenarioError as e:
        code = _report(e, stages, "scenario", EXIT_INPUT, debug)
    except (OSError, json.JSONDecodeError) as e:
        code = _report(e, stages, "io", EXIT_INPUT, debug)
    except CechError as e:
        code = _report(e, stages, "run", EXIT_FAILED, debug)
        row["error"] = e.code
        save_json(out_dir / f"{stem}.json",
                  envelope(command, to_plain(params), seed, {"error": e.to_record()}))
    except ValueError as e:
        code = _report(e, stages, "run", EXIT_FAILED, debug)
    row["exit"] = code
    try:
        save_json(out_dir / f"{stem}.stages.json", stages.records)
    except OSError as e:
        warn(f"[ERROR] could not write stage log: {e}")
        code = max(code, EXIT_INPUT)
    return code, row


def _report(e, stages, stage, code, debug):
    warn(f"[ERROR] {e}")
    if debug:
        traceback.print_exc()
    stages.end(stage, status="error", extra={"error": str(e)})
    return code


# ---------- Main entry ----------
def make_parser():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("command", nargs="?", help="operation name from the registry")
    p.add_argument("action", nargs="?", help="operation action, e.g. build or validate")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenario", action="append", default=[], help="scenario JSON file")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--debug", action="store_true")
    p.add_argument("--config", default=None, help="JSON file overriding model defaults")
    p.add_argument("--param", action="append", default=[], help="key=value override")
    p.add_argument("--punctures", type=int, default=None)
    p.add_argument("--registry", default=REGISTRY_FILE)
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    debug = args.debug or cklog.DEBUG
    cklog.configure(debug)
    try:
        registry = load_registry(args.registry)
        jobs = build_jobs(args)
        if args.config:
            config.update(load_config(args.config))
    except (ScenarioError, OSError, json.JSONDecodeError) as e:
        warn(f"[ERROR] {e}")
        if debug:
            traceback.print_exc()
        return EXIT_INPUT
    workers = args.workers or psutil.cpu_count(logical=False) or 1
    log(f"[RUNNER] {len(jobs)} job(s) on {workers} worker(s)")
    if workers > 1 and len(jobs) > 1:
        results = Parallel(n_jobs=min(workers, len(jobs)))(
            delayed(run_job)(job, registry, args.out, args.config, debug) for job in jobs)
    else:
        results = [run_job(job, registry, args.out, args.config, debug) for job in jobs]
    if len(jobs) > 1:
        write_csv(Path(args.out) / "summary.csv", to_plain([row for _, row in results]))
    for _, row in results:
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    return max(code for code, _ in results)


if __name__ == "__main__":
    sys.exit(main())
