"""Leader-follower drone swarm navigation: diffusion/A* global planning, APF
leader tracking and impedance-coupled followers in a deterministic 2-D simulator."""

__version__ = "0.1.0"
