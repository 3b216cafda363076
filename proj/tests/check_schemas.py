"""Runs each CLI subcommand once and validates its JSON output against docs/schemas.

usage: check_schemas.py CATFLOW_BINARY SCHEMA_DIR WORK_DIR
"""

import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema
from referencing import Registry, Resource

binary, schema_dir, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
shutil.rmtree(work, ignore_errors=True)
work.mkdir(parents=True)

schemas = {p.name: json.loads(p.read_text()) for p in schema_dir.glob("*.schema.json")}
registry = Registry().with_resources((name, Resource.from_contents(s)) for name, s in schemas.items())
failures = 0


def check(path, schema):
    global failures
    validator = jsonschema.Draft202012Validator(schemas[schema], registry=registry)
    errors = sorted(validator.iter_errors(json.loads(path.read_text())), key=lambda e: list(e.path))
    for e in errors[:5]:
        print(f"{path}: {'/'.join(map(str, e.path))}: {e.message}")
    failures += bool(errors)
    print(f"{'ok  ' if not errors else 'FAIL'} {path.relative_to(work)} against {schema}")


def cli(name, *args, ok=(0,)):
    out = work / name
    proc = subprocess.run([binary, *args, "--out-dir", str(out)], capture_output=True, text=True)
    if proc.returncode not in ok:
        sys.exit(f"{name}: exit {proc.returncode}\n{proc.stdout}{proc.stderr}")
    check(out / "resolved_config.json", "run_config.schema.json")
    return out


d = cli("verify", "verify-estimates", "--estimate", "A6", "--space", "book:3", "--samples", "2000", ok=(0, 3))
check(d / "summary_A6.json", "summary.schema.json")

d = cli("solve", "solve-dirichlet", "--mesh", "torus:2", "--target", "cone:5pi/2", "--region-radius", "0.2")
check(d / "map.json", "map.schema.json")
check(d / "solve_report.json", "solve_report.schema.json")

d = cli("flow_bump", "run-flow", "--mesh", "torus:3", "--target", "book:3")
check(d / "certificate.json", "certificate.schema.json")
check(d / "flow_state.json", "flow_state.schema.json")
check(d / "final_map.json", "map.schema.json")
for p in sorted(d.glob("flow_state_0*.json")):
    check(p, "flow_state.schema.json")

d = cli("flow_degree1", "run-flow", "--mesh", "torus:3", "--initial", "builtin:degree1")
check(d / "certificate.json", "certificate.schema.json")
if (d / "bubble_sphere_map.json").exists():
    check(d / "bubble_sphere_map.json", "map.schema.json")

d = cli("diagnose", "diagnose", "--map", str(work / "solve" / "map.json"), "--center-vertex", "27", "--delta", "0.3",
        "--checks", "monotonicity,hopf,harmonicity,courant")
check(d / "diagnose.json", "diagnose.schema.json")

sys.exit(1 if failures else 0)
