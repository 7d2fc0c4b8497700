import os

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')

LOG_FILE = os.getenv('LOG_FILE', 'vts_dd.log')
LOG_TO_FILE = os.getenv('LOG_TO_FILE', '0') in ('1', 'true', 'True')

OUTPUT_DIR = os.getenv('OUTPUT_DIR', 'results')

# 0 -> один поток на подобласть (но не больше числа CPU)
SUBDOMAIN_WORKERS = int(os.getenv('SUBDOMAIN_WORKERS', '0'))

# плотные объекты на интерфейсе (S0, S1, exact, диагностика) строятся только до этого размера
MAX_DENSE_INTERFACE = int(os.getenv('MAX_DENSE_INTERFACE', '6000'))
DIAGNOSTICS_MAX_INTERFACE = int(os.getenv('DIAGNOSTICS_MAX_INTERFACE', '400'))

SLOW_TESTS = os.getenv('VTS_SLOW_TESTS', '0') in ('1', 'true', 'True')

DEBUG_MODE = (LOG_LEVEL or '').upper() == 'DEBUG' or os.getenv('VTS_DEBUG', '') == '1'
