"""Power-system adequacy simulation and capacity-credit evaluation.

Subpackages follow the pipeline: a validated system model feeds a
sequential Monte Carlo engine whose scenarios are dispatched hour by hour
(fixed, greedy, or two-stage coordinated storage strategies), producing
theoretical and practical reliability indices from which capacity-credit
values are found by bisection under common random numbers.
"""

__version__ = "0.1.0"
