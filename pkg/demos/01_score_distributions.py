"""Score distributions from raw rater scores, and the two losses.

Walks the core objects: histogramming 70 noisy ratings into description
degrees, decoding a scalar score as the weighted mean, and comparing
distributions with the Euclidean and KL losses.

Run:  python demos/01_score_distributions.py
"""

import numpy as np

from ldlnet import (
    ScoreScale,
    chebyshev,
    distribution_from_ratings,
    euclidean_loss,
    kl_logit_gradient,
    kl_loss,
    pearson,
    weighted_mean,
)

scale = ScoreScale()
print(f"score scale: {scale.labels}")

# --- a face rated by 70 people ---------------------------------------------
rng = np.random.default_rng(42)
true_quality = 3.6
ratings = np.clip(np.round(rng.normal(true_quality, 0.5, size=70)), 1, 5)
dist = distribution_from_ratings(ratings, scale)
print(f"\n70 ratings around {true_quality}:")
for label, degree in zip(scale.labels, dist):
    bar = "#" * int(round(degree * 40))
    print(f"  score {label:.0f}: {degree:.3f} {bar}")
print(f"weighted mean decode: {weighted_mean(dist, scale):.3f}")

# --- a controversial face: the mean hides the disagreement ------------------
half = rng.normal(2.0, 0.3, size=35)
other = rng.normal(4.0, 0.3, size=35)
controversial = distribution_from_ratings(np.clip(np.round(np.r_[half, other]), 1, 5))
print(f"\ncontroversial face (raters split between 2 and 4):")
print(f"  degrees: {np.round(controversial, 3)}")
print(f"  weighted mean {weighted_mean(controversial):.2f} sits where almost nobody voted")

# --- losses between distributions -------------------------------------------
point = np.array([1.0, 0, 0, 0, 0])
uniform = np.full(5, 0.2)
print("\nlosses (point mass at 1 vs uniform):")
print(f"  euclidean      {euclidean_loss(point, uniform):.6f}")
print(f"  euclidean_sq   {euclidean_loss(point, uniform, squared=True):.6f}")
print(f"  kl             {kl_loss(point, uniform):.6f}   (= ln 5 = {np.log(5):.6f})")
print(f"  chebyshev      {chebyshev(point, uniform):.6f}")

# --- the KL-through-softmax gradient is just (predicted - target) -----------
z = rng.standard_normal(5)
d = rng.dirichlet(np.ones(5))
print(f"\nkl_logit_gradient(d, z) = softmax(z) - d:")
print(f"  {np.round(kl_logit_gradient(d, z), 4)}")

# --- the headline metric -----------------------------------------------------
true_scores = rng.uniform(1.5, 4.5, size=100)
predictions = true_scores + rng.normal(0, 0.3, size=100)
print(f"\nPearson correlation of noisy predictions: {pearson(predictions, true_scores):.4f}")
