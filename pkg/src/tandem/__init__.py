"""tandem: adaptive two-agent task planning engine.

A human and a robot fill a shared block pattern under precedence
constraints. The robot estimates the human's latent following preference
and error proneness from observed actions, then repeatedly solves a
min-max task allocation followed by a makespan-minimizing schedule to
pick its next action. Ships with a deterministic simulator, an event-log
replay tool, a CLI, and a live WebSocket service.
"""

__version__ = "0.1.0"
