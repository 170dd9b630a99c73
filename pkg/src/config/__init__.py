"""
Configuration: built-in defaults, environment settings and the config-file parser.
"""
