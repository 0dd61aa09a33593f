"""Validates every report.json under a directory against the report schema."""
import json
import pathlib
import sys

import jsonschema

schema = json.loads(pathlib.Path(sys.argv[1]).read_text())
reports = sorted(pathlib.Path(sys.argv[2]).rglob("report.json"))
if not reports:
    sys.exit("no report.json found")
for path in reports:
    jsonschema.validate(json.loads(path.read_text()), schema)
    print(f"{path}: ok")
