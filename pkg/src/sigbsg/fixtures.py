"""The worked commitment of the market-entry example, in belief form."""

from __future__ import annotations

from .signaling import BeliefDistribution


def example_beliefs() -> BeliefDistribution:
    """Type ``theta1`` sees posterior (0, 2/3, 1/3) w.p. 3/4 and (0, 0, 1) w.p. 1/4;
    type ``theta2`` gets no information.  Both average to x = (0, 1/2, 1/2)."""
    return BeliefDistribution(
        points=(
            [[0.0, 2.0 / 3.0, 1.0 / 3.0], [0.0, 0.0, 1.0]],
            [[0.0, 0.5, 0.5]],
        ),
        weights=([0.75, 0.25], [1.0]),
    )
