"""afd-explorer - Services Package"""
