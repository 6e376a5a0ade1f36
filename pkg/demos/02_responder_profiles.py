"""Fit responder profiles with the EM-trained Gaussian mixture.

Each questionnaire becomes a 15-vector (scaled age, status flags, symptom
panel); the mixture groups responders into profiles that differ in
demographics and overall symptom level.  Aggregating a cell's records
per profile gives the K x 16 feature vector the forecaster consumes.
"""

import numpy as np

from symptomcast.profiles import aggregate_features, e_step, fit_gmm
from symptomcast.survey import SyntheticConfig, encode_records, generate_synthetic

records, _ = generate_synthetic(SyntheticConfig(days=10, responses_per_day=1000, seed=3))
vectors = encode_records(records)

model = fit_gmm(vectors, k=4, seed=0)
print("cluster  weight  mean-age  chronic  mean-severity")
for j in range(model.k):
    age = model.means[j, 0] * 120
    chronic = model.means[j, 4]
    sympt = model.means[j, 6:].mean()
    print(f"{j:7d}  {model.weights[j]:.3f}   {age:7.1f}  {chronic:.3f}    {sympt:.3f}")

resp, ll = e_step(model, vectors)
print(f"\nmean log-likelihood {ll:.3f}; hard-assignment counts {np.bincount(resp.argmax(1))}")

cell = [r for r in records if r.date == 0][:25]
feats = aggregate_features(cell, model)
print(f"\none cell, {len(cell)} records -> feature vector of length {feats.vector.size}")
print("per-profile member fractions:", np.round(feats.vector[15::16], 3))
