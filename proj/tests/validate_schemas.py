"""Runs each CLI subcommand and validates every stdout JSON line against the
shipped schemas. Usage: validate_schemas.py CLI SCHEMA_DIR WORK_DIR SRC_DIR"""

import json
import subprocess
import sys
from pathlib import Path

import jsonschema

cli, schema_dir, work, src = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3]), Path(sys.argv[4])
work.mkdir(parents=True, exist_ok=True)


def schema(name):
    return json.loads((schema_dir / f"{name}.schema.json").read_text())


def check(name, *args):
    out = subprocess.run([cli, *args], check=True, capture_output=True, text=True).stdout
    lines = [l for l in out.splitlines() if l.strip()]
    assert lines, f"{name}: no output"
    for line in lines:
        jsonschema.validate(json.loads(line), schema(name))
    return lines


jsonschema.validate(json.loads((src / "configs" / "default.json").read_text()), schema("config"))
check("synth", "synth", "--out", str(work / "schema_ds"), "--images", "5", "--seed", "2",
      "--sigma-z", "1", "--fp-rate", "0.2", "--features")
check("eval_report", "eval", "--gt", str(work / "schema_ds" / "label_2"), "--pred", str(work / "schema_ds" / "pred"),
      "--config", str(src / "configs" / "default.json"))
check("init_weights", "init-weights", "--out", str(work / "schema_w.bin"), "--channels", "8")
assert len(check("gated_bench", "gated-bench", "--weights", str(work / "schema_w.bin"), "--shape", "8,6,10",
                 "--k", "7", "--repeat", "1")) == 5
check("match_demo", "match-demo", "--seed", "1", "--gts", "4")
check("match_demo", "match-demo", "--seed", "1", "--gts", "4", "--mode", "one-to-many")
feat = str(work / "schema_ds" / "features.bin")
check("distill_loss", "distill-loss", "--teacher", feat, "--student", feat)
pairs = work / "schema_pairs.jsonl"
pairs.write_text("\n".join(json.dumps({"a": {"center": [0, 1, 10 + i], "dims": [1.5, 1.6, 3.9], "yaw": 0.1 * i},
                                       "b": {"center": [0.5 * i, 1, 12], "dims": [1.4, 1.7, 4.2], "yaw": -0.2}})
                           for i in range(6)) + "\n")
check("mgiou", "mgiou", "--pairs", str(pairs))
print("schemas ok")
