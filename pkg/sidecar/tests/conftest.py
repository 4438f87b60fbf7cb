"""Suite-wide Hypothesis profile for the sidecar tests."""

from hypothesis import settings

# property tests check logic, not speed; per-example wall-clock deadlines
# flake under full-suite load
settings.register_profile("suite", deadline=None)
settings.load_profile("suite")
