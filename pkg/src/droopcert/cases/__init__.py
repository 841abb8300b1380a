"""Bundled case files (JSON, see droopcert.grid.load_case for the schema)."""
