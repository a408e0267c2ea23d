"""
The file-based workflow, end to end
===================================

Everything the command line does, driven in-process: generate a scene
to disk, train from the files, predict a mask, and score it. Every
artifact is a small JSON header plus a flat binary payload, so the
whole chain is scriptable and diffable.
"""

import json
import tempfile
from pathlib import Path

from ccfmap.cli import main

work = Path(tempfile.mkdtemp(prefix="ccfmap-demo-"))
scene = work / "scene"

# 1. synthesize a labeled scene (prints its Bayes accuracy estimate)
assert main(["synth", "--preset", "blobs", "--separation", "5",
             "--seed", "21", "--out", str(scene)]) == 0

# 2. train; the holdout report lands next to the model
assert main(["train",
             "--raster", str(scene / "raster.json"),
             "--mask", str(scene / "mask.json"),
             "--out", str(work / "model.ccf.json"),
             "--trees", "10", "--seed", "21"]) == 0

# 3. predict a label mask and a probability raster for the same scene
assert main(["predict",
             "--model", str(work / "model.ccf.json"),
             "--raster", str(scene / "raster.json"),
             "--out-mask", str(work / "pred"),
             "--out-prob", str(work / "prob")]) == 0

# 4. score the prediction against the truth mask
assert main(["evaluate",
             "--pred", str(work / "pred.json"),
             "--truth", str(scene / "mask.json"),
             "--out", str(work / "eval.report.json")]) == 0

report = json.loads((work / "eval.report.json").read_text())
print()
print("report fields:")
print(f"  pixel accuracy : {report['pixel_accuracy_percent']}%")
print(f"  mean IoU       : {report['mean_iou_percent']}%")
print(f"  confusion      : {report['confusion']}")
print(f"  evaluated      : {report['evaluated_pixels']} pixels")
print()
print("artifacts in", work)
for p in sorted(work.rglob("*")):
    if p.is_file():
        print(f"  {p.relative_to(work)}  ({p.stat().st_size} bytes)")
