"""Local hidden-variable model for the three-particle GHZ state, with a
quantum-mechanical oracle and a message-passing locality harness."""

__version__ = "0.1.0"
