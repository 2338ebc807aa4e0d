"""
End to end on a WNVDB snapshot
==============================

Point ``WNV_DATA_DIR`` at a checkout of the WNVDB data folders.
"""

import os
import sys

from wnvdb import estimation as est
from wnvdb import pipeline
from wnvdb.cli import compute_stats
from wnvdb.corpus import load_corpus
from wnvdb.schema import FamilyKind, Host

root = os.environ.get("WNV_DATA_DIR")
if not root:
    sys.exit("set WNV_DATA_DIR to a WNVDB snapshot first")

corpus = load_corpus(root)
issues = corpus.validation_issues()
print(len(corpus.files), "files,", sum(i["severity"] == "error" for i in issues), "errors")

reports = compute_stats(corpus, Host.HUMANS)
print("humans", reports["yearly"].total, {r.key[0]: r.count for r in reports["region"].rows[:3]})

# the 2022 Veneto season, fitted and projected a month out
records = corpus.records(FamilyKind.HUMAN_REGION, Host.HUMANS, 2022)
(veneto,) = [s for s in pipeline.build_series(records, "region") if s.key.geo_id == "05"]
result = est.fit(veneto, est.FitConfig(seed=1))
print(result.estimates(), round(result.r_squared, 3))
print(est.forecast(result, veneto, 4, seed=1).interval)
