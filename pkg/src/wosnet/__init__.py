"""Walk-on-spheres Poisson solver and ReLU network synthesis from frozen walks."""
__version__ = "0.1.0"
