"""The lazy classifier on a 2-D toy problem, small enough to read the
fitted tables by eye: two well-separated clusters, each carrying its own
label, plus an overlap region where both labels co-occur."""

import numpy as np

from skullnet.mlknn import fit_mlknn, knn_neighbors, predict_mlknn
from skullnet.tensor import make_rng

rng = make_rng(0)
left = rng.normal(0, 0.4, (15, 2)) + [-3, 0]
right = rng.normal(0, 0.4, (15, 2)) + [3, 0]
middle = rng.normal(0, 0.4, (10, 2))  # carries both labels

features = np.vstack([left, right, middle])
labels = np.zeros((40, 2), dtype=np.int8)
labels[:15, 0] = 1
labels[15:30, 1] = 1
labels[30:, :] = 1

model = fit_mlknn(features, labels, k=3, s=1.0)
print("priors P(H1) per label:", np.round(model.prior1, 3))
print("P(E_j | H1), rows = labels, columns j = 0..k positive neighbours:")
print(np.round(model.c1, 3))
print("P(E_j | H0):")
print(np.round(model.c0, 3))

for query in ([-3.0, 0.2], [3.1, -0.1], [0.0, 0.0], [-1.6, 0.0]):
    pred = predict_mlknn(model, np.array(query))
    neighbours = knn_neighbors(features, np.array(query), 3)
    print(
        f"\nquery {query}: neighbours {neighbours}, "
        f"decision {pred.labels.tolist()}, confidences {np.round(pred.confidences, 3).tolist()}"
    )
