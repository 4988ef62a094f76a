"""Tests for wav2vec2 speaker recognition."""
