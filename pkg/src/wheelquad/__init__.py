"""wheelquad: desk-scale autonomy stack for a low-cost wheeled quadruped.

Subsystems: procedural height-field terrains, a reduced-order physics
simulator, a fall-recovery RL environment, a velocity-tracking locomotion
environment, a from-scratch MLP actor-critic trained with PPO, and an
MPPI + costmap navigation stack with an evaluation CLI.
"""

__version__ = "0.1.0"
