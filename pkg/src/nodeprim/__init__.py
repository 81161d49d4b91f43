"""nodeprim: a small distributed robot-programming platform.

Topic pub-sub over TCP with a name server, a typed node model with
lifecycle events, a reactive behavior engine driving simulated robots,
and an HTTP gateway that streams node state to a web console.
"""

__version__ = "0.1.0"
