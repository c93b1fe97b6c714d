"""
A paired study: softmax or CRF output layer?
=============================================

Each group draws one random configuration and trains it twice, once per
classifier. Comparing inside groups removes the variation coming from all
the other knobs; each run still gets its own seed.
"""
import json
import tempfile
from pathlib import Path

from seqtag import synthetic
from seqtag.cli import main
from seqtag.study import HyperparameterSpace, compare, paired_group, read_results

work = Path(tempfile.mkdtemp(prefix="seqtag-study-"))
splits = synthetic.split(synthetic.segment_corpus(120, seed=1))
data = synthetic.write_task_dir(work / "seg", splits, "seg", "BIO")
print("task directory:", data)

# %%
# A small search space so the demo finishes in about a minute.
space = {
    "candidates": {"units": [8, 16], "layers": [1], "char_rep": ["none", "cnn"],
                   "dropout.kind": ["none", "variational"], "optimizer": ["adam", "nadam"],
                   "batch_size": [8, 16]},
    "fixed": {"word_dim": 10, "max_epochs": 6},
}
(work / "space.json").write_text(json.dumps(space))

for option, config in paired_group(HyperparameterSpace.from_dict(space), "classifier", 0, 0):
    print(option, config.to_json())

# %%
# The same sweep from the command line, four runs at a time.
results = work / "results.csv"
main(["sweep", "--space", str(work / "space.json"), "--vary", "classifier", "--n", "12",
      "--tasks", str(data), "--jobs", "4", "--out", str(results)])
records = read_results(results)
print(len(records), "runs,", sum(r.diverged for r in records), "diverged")

# %%
# Win percentage, median difference to the winner and the spread of scores.
for table in compare(records, "classifier"):
    print(table.format())
