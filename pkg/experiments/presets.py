"""
Figure presets.

Each preset is written as config-file text, so it goes through the same
validation as a user's file and ``preset --emit-config`` reproduces it.
Harvesting-rate and collision grids are evenly spaced over the plotted
axis ranges.
"""
from ehcrsim.exceptions import ConfigurationError
from .config import SweepSpec, parse_mapping

HARVEST_GRID = '15,48,81,114,147,180'

FIGURE_PRESETS = {
    # Optimal against myopic as the number of channels grows
    'fig1a': {
        'channels.alpha': '0.5',
        'channels.beta': '0.7',
        'run.horizon': '5',
        'run.slots': '5',
        'sweep.policy': 'optimal,myopic',
        'sweep.channels.n': '2,3,4',
    },
    # Collision constraint against harvesting rate, myopic, five channels
    'fig1b': {
        'policy': 'myopic',
        'channels.n': '5',
        'channels.alpha': '0.5',
        'channels.beta': '0.7',
        'sweep.harvest.p_eh_mj_s': '15,60,120,180',
        'sweep.sensing.p_col': '0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5',
    },
    # Number of channels sensed per slot, adaptive against constant rate
    'fig2': {
        'channels.n': '5',
        'channels.alpha': '0.3,0.4,0.45,0.5,0.6',
        'channels.beta': '0.8,0.7,0.65,0.6,0.5',
        'sensing.p_col': '0.1',
        'sensing.p_f': '0.1',
        'sweep.actions.sense': '1,3',
        'sweep.policy': 'myopic,constant-rate',
        'sweep.harvest.p_eh_mj_s': HARVEST_GRID,
    },
    # Channel selection criteria
    'fig3': {
        'channels.n': '6',
        'channels.alpha': '0.3',
        'channels.beta': '0.7',
        'actions.estimate': '6',
        'actions.sense': '3',
        'sweep.policy': 'myopic,belief-bandwidth,random',
        'sweep.harvest.p_eh_mj_s': HARVEST_GRID,
    },
    # AWGN against Rayleigh fading on the PU-SU sensing channel
    'fig4': {
        'policy': 'optimal',
        'channels.n': '4',
        'channels.alpha': '0.3,0.4,0.45,0.5',
        'channels.beta': '0.8,0.7,0.65,0.6',
        'actions.sense': '1',
        'run.horizon': '5',
        'run.slots': '5',
        'sweep.sensing.channel': 'awgn,rayleigh',
        'sweep.harvest.p_eh_mj_s': HARVEST_GRID,
    },
}


def emit_figure_preset(name: str) -> SweepSpec:
    try:
        preset = FIGURE_PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"Unknown preset '{name}'; choose one of {', '.join(FIGURE_PRESETS)}")
    return parse_mapping({**preset, 'output.path': f'{name}.csv'})
