"""HTTP service exposing the pipeline; the CLI is a thin client of it."""
