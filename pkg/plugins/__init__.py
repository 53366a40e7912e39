# plugins/__init__.py
"""
Operation plugins for runner.py.
Each module holds one OperationPlugin subclass, registered in experiments.json
as "plugins.<module>:<Class>". Do NOT import runner state here.
"""
