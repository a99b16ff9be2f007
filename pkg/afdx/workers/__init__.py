"""afd-explorer - Workers Package"""
