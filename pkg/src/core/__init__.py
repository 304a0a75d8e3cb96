"""Core package - Data handling, the field model, training and evaluation.

Modules are imported directly (src.core.field_model, ...); the config
package depends on src.core.encoding, so nothing is re-exported here.
"""
