"""Extract GPU silent-data-corruption error profiles from memory images and
replay them as distribution-aware software fault injection."""

from .errors import SdcForgeError
from .formats import CATEGORIES, Category, DType, classify_value, flip_stats, layout_of, make_corrupted, special_of
from .image import (
    DiffRecord,
    DiffSet,
    ImageMeta,
    MemoryImage,
    Outcome,
    RunMeta,
    classify_outcome,
    diff_images,
    load_image,
    store_image,
)
from .inject import InjectionLog, inject, plan_chunks, sample_event, sample_nonspecial_mask
from .profile import (
    ErrorProfile,
    HardwareUnit,
    ProfileAccumulator,
    ProfileContext,
    finalize,
    load_profile,
    merge,
    observe,
    save_profile,
)

__version__ = "0.1.0"
