"""Sequential sessions, the memory bank, and the two efficiency metrics.

A session releases support sets one at a time and refuses to show them
again; the target set unlocks only after the last one. Whatever a learner
wants to remember across sets goes into the byte-accounted memory bank, and
the across-task memory ratio (ATM) divides those banked bytes by the bytes
of every support input it was shown: 0 means no memory, 1 means a verbatim
copy, and anything between is honest compression.
"""

import numpy as np

from cfslbench import (
    EpisodeSession,
    LearnerParams,
    MacCounter,
    PastSetInaccessible,
    TargetNotYetAvailable,
    TaskConfig,
    atm,
    build_pack,
    fit_stream,
    predict,
    sample_episode,
)

rng = np.random.default_rng(2)
pack = build_pack(
    "demo",
    {f"class_{i:02d}": rng.integers(0, 256, (12, 8, 8, 3), dtype=np.uint8) for i in range(30)},
)
config = TaskConfig(nss=3, cci=1, n_way=5, k_shot=1, k_target=5, overwrite=False, seed=4)
episode = sample_episode(pack, config, 0)

# The guard in action: no peeking back, no early target.
session = EpisodeSession(pack, episode)
first = session.next_support()
print(f"got support set {first.position}: {first.images.shape[0]} images")
try:
    session.support(1)
except PastSetInaccessible as exc:
    print(f"re-requesting it fails: {exc}")
try:
    session.request_target()
except TargetNotYetAvailable as exc:
    print(f"early target fails:     {exc}")
session.next_support()
session.next_support()

# Bank a few bytes, score random guesses, and read the metrics off.
session.store("notes", b"\x00" * 256, element_width=1)
target = session.request_target()
score = session.submit_predictions(rng.integers(0, 15, size=target.images.shape[0]))
report = atm(score.memory_bytes, episode)
print(f"\nrandom guessing scored {score.accuracy:.3f} with {score.memory_bytes} banked bytes")
print(f"ATM = {report.memory_bytes}/{report.episode_input_bytes} = {report.atm:.6f}")

# The prototype learner banks one float32 centroid per label per set, so
# its ATM is a real compression figure; MACs come from a pinned cost model.
session = EpisodeSession(pack, episode)
macs = MacCounter()
model = fit_stream("prototype", session, LearnerParams(), macs)
preds = predict(model, session.request_target().images, macs)
score = session.submit_predictions(preds)
print(f"\nprototype learner: accuracy {score.accuracy:.3f}")
print(f"  banked {score.memory_bytes} bytes -> ATM {atm(score.memory_bytes, episode).atm:.3f}")
print(f"  MACs by phase: {macs.by_phase}")
