"""
Speller display layouts, discovered at runtime by ParadigmManager.
"""
