"""Watch the Freeze-Thaw belief extrapolate a learning curve.

We generate one synthetic set, show the belief the first few epochs of
three arms, and compare its predicted asymptote with the loss each curve
actually reaches at its last recorded epoch.
"""
import numpy as np

from budgeted_tuning import SynthSpec, make_belief, sample_curveset

cs = sample_curveset(SynthSpec(n_arms=6, epochs=30, seed=4))
belief = make_belief(cs)

# a few early epochs from three arms; the others stay unseen
for arm, n in [(0, 3), (2, 6), (4, 10)]:
    for y in cs.curves[arm][:n]:
        belief.update(arm, float(y))

print("arm  seen  predicted asymptote      final recorded loss")
for arm, post in enumerate(belief.posterior_asymptote()):
    seen = belief.n_seen(arm)
    print(f"{arm:>3}  {seen:>4}  {post.mean:.3f} +- {post.std:.3f}        {cs.curves[arm][-1]:.3f}")

# the predictive curve of arm 2 for the next 10 epochs, with 1 sd bands
mean, var = belief.predict_curve(2, np.arange(7, 17))
print("\narm 2, epochs 7..16")
for t, m, v, y in zip(range(7, 17), mean, var, cs.curves[2][6:16]):
    print(f"  t={t:>2}  predicted {m:.3f} +- {np.sqrt(v):.3f}   actual {y:.3f}")
