"""DFA extraction from recurrent neural acceptors with L* and abstraction refinement."""

__version__ = "0.1.0"
