"""Deterministic simulator and experiment harness for bilateral
teleoperation with a self-adapting variable impedance tool actuator."""

__version__ = "0.1.0"
