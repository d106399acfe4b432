"""Configuration management for the Edit Fidelity Field toolkit.
Centralized environment variable loading; every CLI flag has an EFF_ mirror.
"""
import os
from dotenv import load_dotenv

load_dotenv()

# Field construction
SIGMA = float(os.getenv('EFF_SIGMA', '0.12'))
PAD_CORE = float(os.getenv('EFF_PAD_CORE', '15'))
PAD_PROTECT = float(os.getenv('EFF_PAD_PROTECT', '8'))
SMOOTH_SIGMA = float(os.getenv('EFF_SMOOTH_SIGMA', '3'))

# Spillover evaluation thresholds
SIM_THRESHOLD = float(os.getenv('EFF_SIM_THRESHOLD', '0.85'))
PSNR_THRESHOLD = float(os.getenv('EFF_PSNR_THRESHOLD', '35'))
PSNR_CAP = float(os.getenv('EFF_PSNR_CAP', '150'))
SPILL_WEIGHTING = os.getenv('EFF_SPILL_WEIGHTING', 'region')  # region | scene

# Blending
RESIZE_POLICY = os.getenv('EFF_RESIZE', 'strict')  # strict | bilinear

# Backends
OCR_MODE = os.getenv('EFF_OCR_MODE', 'ground_truth')  # ground_truth | external | disabled
OCR_CMD = os.getenv('EFF_OCR_CMD')
OCR_CONFIDENCE_FLOOR = float(os.getenv('EFF_OCR_CONFIDENCE_FLOOR', '0.0'))
EDITOR_MODE = os.getenv('EFF_EDITOR_MODE', 'precomputed')  # precomputed | external
EDITOR_CMD = os.getenv('EFF_EDITOR_CMD')
ADAPTER_TIMEOUT = float(os.getenv('EFF_ADAPTER_TIMEOUT', '120'))  # seconds

# Harness
MANIFEST = os.getenv('EFF_MANIFEST')
OUT_DIR = os.getenv('EFF_OUT_DIR', 'eff_out')
JOBS = int(os.getenv('EFF_JOBS', '1'))
SEED = int(os.getenv('EFF_SEED', '0'))

# Logging Configuration
LOG_LEVEL = os.getenv('EFF_LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('EFF_LOG_FILE')

REPORT_SCHEMA_VERSION = '1.0'


def get_config_status():
    """Return a dict showing which backends are ready and the active defaults."""
    return {
        'ocr_mode': OCR_MODE,
        'ocr_command_ready': bool(OCR_CMD),
        'editor_mode': EDITOR_MODE,
        'editor_command_ready': bool(EDITOR_CMD),
        'field_defaults': {
            'sigma': SIGMA,
            'pad_core': PAD_CORE,
            'pad_protect': PAD_PROTECT,
            'smooth_sigma': SMOOTH_SIGMA,
        },
        'eval_defaults': {
            'sim_threshold': SIM_THRESHOLD,
            'psnr_threshold': PSNR_THRESHOLD,
            'psnr_cap': PSNR_CAP,
            'spill_weighting': SPILL_WEIGHTING,
        },
        'resize_policy': RESIZE_POLICY,
        'jobs': JOBS,
        'log_level': LOG_LEVEL,
    }
