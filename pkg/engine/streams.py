from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReplicationStreams:
    occupancy: np.random.Generator
    fading: np.random.Generator
    sensing: np.random.Generator
    observation: np.random.Generator
    harvest: np.random.Generator
    policy: np.random.Generator


def make_streams(master_seed: int, replication: int) -> ReplicationStreams:
    """
    Independent generators for one replication.

    replication
      ├── environment
      │     ├── occupancy
      │     ├── fading
      │     ├── sensing channel
      │     └── harvest
      └── radio
            ├── observation
            └── policy

    Environment streams do not depend on the policy, so every policy is run
    against the same occupancy, fading and harvest realisations.
    """
    root = np.random.SeedSequence([master_seed, replication])
    environment, radio = root.spawn(2)
    occupancy, fading, sensing, harvest = environment.spawn(4)
    observation, policy = radio.spawn(2)
    return ReplicationStreams(
        occupancy=np.random.default_rng(occupancy),
        fading=np.random.default_rng(fading),
        sensing=np.random.default_rng(sensing),
        observation=np.random.default_rng(observation),
        harvest=np.random.default_rng(harvest),
        policy=np.random.default_rng(policy),
    )
