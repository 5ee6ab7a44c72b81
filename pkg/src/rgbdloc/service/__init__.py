"""HTTP service exposing map localization."""
