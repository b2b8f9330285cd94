import os

from dotenv import load_dotenv
from icecream import ic

# Load environment variables
load_dotenv()


def _flag(name: str) -> bool:
    return os.getenv(name, '').strip().lower() in {'1', 'true', 'yes', 'on'}


DATABASE_URL = os.getenv('DATABASE_URL', 'sqlite:///./permfield.db')
SQL_ECHO = _flag('PERMFIELD_SQL_ECHO')
DEBUG = _flag('PERMFIELD_DEBUG')

DEFAULT_THREADS = int(os.getenv('PERMFIELD_THREADS', os.cpu_count() or 1))
DEFAULT_SAMPLES = int(os.getenv('PERMFIELD_SAMPLES', '2000'))
DEFAULT_CHUNK_SIZE = int(os.getenv('PERMFIELD_CHUNK_SIZE', '500'))
DEFAULT_DELTA_SCHEDULE = tuple(
    float(value)
    for value in os.getenv('PERMFIELD_DELTA_SCHEDULE', '0.5,0.1,0.02').split(
        ','
    )
)

ic.configureOutput(prefix='permfield | ')
if DEBUG:
    ic.enable()
else:
    ic.disable()
