"""VP-SDE definitions and the guided reverse-time sampler."""
