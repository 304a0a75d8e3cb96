"""Handlers package - CLI subcommand handlers."""
