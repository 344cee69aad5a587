"""Pedestrian-vehicle near-miss extraction, policy training, and safety analytics.

The package splits into data handling (`trajectories`, `synth`), the
collision-time metric (`curvttc`), the learning stack (`autodiff`, `nn`,
`smamba`, `env`, `ddpg`), downstream statistics (`analytics`), and a
file-based pipeline (`cli`).
"""

__version__ = "0.1.0"

from .trajectories import (  # noqa: F401
    InteractionPair,
    Kinematics,
    TrackPoint,
    Trajectory,
    derive_kinematics,
    extract_interactions,
    filter_outliers,
    load_scenario,
    save_scenario,
    split_contiguous,
)
from .curvttc import (  # noqa: F401
    ArcPath,
    CriticalEvent,
    CurvTTCSample,
    QuadPath,
    curvttc_at,
    curvttc_series,
    find_critical_event,
    fit_arc,
    fit_quadratic,
    flag_critical,
)
from .env import (  # noqa: F401
    Action,
    EnvState,
    EpisodeConfig,
    RewardVariant,
    Transition,
    core_reward,
    make_state,
    run_episode,
    step_dynamics,
    total_reward,
)
from .ddpg import (  # noqa: F401
    ActorNet,
    CriticNet,
    PolicyCheckpoint,
    ReplayBuffer,
    TrainConfig,
    reconstruct,
    soft_update,
    train,
)
from .smamba import (  # noqa: F401
    SmambaConfig,
    SmambaParams,
    gated_output,
    s_silu,
    smamba_block,
    smoothed_ssm_scan,
)
from .synth import ScenarioTemplate, generate  # noqa: F401
from .analytics import (  # noqa: F401
    ade_fde,
    classify_yield,
    conflict_grid,
    kmeans_1d,
    ks_two_sample,
    reaction_time,
    rmse,
    welch_t,
)
