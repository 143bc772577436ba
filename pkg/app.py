from dotenv import load_dotenv
load_dotenv()
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent
sys.path.append(str(ROOT))

from src.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
