"""Flask blueprints exposing the solver services as JSON endpoints."""
