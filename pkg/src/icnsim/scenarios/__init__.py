"""Shipped scenario files (JSON); load them via harness.load_scenario."""
