"""The whole pipeline at toy scale, through the library API: generate a
60-image dataset, split it per study, train the extractor briefly, fit
the nearest-neighbour classifier on training features, and score the
held-out test split. Takes a minute or two on a desktop CPU."""

import sys
import tempfile
from pathlib import Path

import numpy as np

from skullnet import data, metrics, mlknn, nn, train
from skullnet.tensor import make_rng

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="skullnet_"))
print(f"working directory: {work}")

data.generate_synthetic(60, seed=17, out_dir=work / "ds")
ds = data.load_dataset(work / "ds")
print(f"dataset: {len(ds)} images, label supports {ds.labels.sum(axis=0).tolist()}")

spec = train.SplitSpec(ratios=(0.6, 0.2, 0.2), seed=3, group_key=ds.study_ids)
tr, va, te = train.split_dataset(ds.filenames, spec)
print(f"split: {len(tr)} train / {len(va)} val / {len(te)} test")

config = train.TrainConfig(epochs=2, batch_size=8, seed=3)
params = nn.build_extractor(make_rng(config.seed), config.leaky_slope)
params, history = train.train(
    params, ds.images[tr], ds.labels[tr], config, ds.images[va], ds.labels[va]
)
for epoch, (tl, vl) in enumerate(zip(history.train_loss, history.val_loss), start=1):
    print(f"epoch {epoch}: train loss {tl:.4f}, val loss {vl:.4f}")

print("extracting features...")
feats = np.stack([nn.extract_features(params, img) for img in ds.images])
classifier = mlknn.fit_mlknn(feats[tr], ds.labels[tr], k=3)
predictions, confidences = mlknn.predict_batch(classifier, feats[te])

report = metrics.full_report(ds.labels[te], predictions, confidences, data.LABEL_COLUMNS)
print(f"\nheld-out test scores ({len(te)} samples):")
print(f"  subset accuracy {report.subset_accuracy:.3f}")
print(f"  hamming score   {report.hamming_score:.3f}")
print(f"  hamming loss    {report.hamming_loss:.3f}")
p, r, f1 = report.averages["micro"]
print(f"  micro avg       P={p:.3f} R={r:.3f} F1={f1:.3f}")
for name, lr in zip(report.label_names, report.per_label):
    auc = "n/a" if lr.roc_auc is None else f"{lr.roc_auc:.3f}"
    print(f"  {name:22s} F1 {lr.f1:.3f}  AUC {auc}")
