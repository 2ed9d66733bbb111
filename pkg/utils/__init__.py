"""Config file parsing, output writers and route decorators."""
