import sys
from pathlib import Path

# make the sibling oracles module importable regardless of invocation cwd
sys.path.insert(0, str(Path(__file__).parent))
