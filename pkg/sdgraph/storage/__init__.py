"""Storage module for JSON and JSON Lines artifacts."""
