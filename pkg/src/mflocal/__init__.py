"""Mean-field control: N-agent simulation, localised policies and NPG training."""
__version__ = "0.1.0"
