"""Change-tracked data marshaling."""

from .pageguard import PageArray, available as pageprotect_available
from .runtime import (
    HOOK_LIBRARY,
    STRATEGY_ENV,
    Hooks,
    MarshalContext,
    MarshalCounters,
    MarshalObject,
    MarshalRegistry,
    State,
    Strategy,
    TrackedRegion,
    cached_invariant,
    default_strategy,
    fnv1a64,
    release_all,
)

__all__ = [
    "HOOK_LIBRARY",
    "STRATEGY_ENV",
    "Hooks",
    "MarshalContext",
    "MarshalCounters",
    "MarshalObject",
    "MarshalRegistry",
    "PageArray",
    "State",
    "Strategy",
    "TrackedRegion",
    "cached_invariant",
    "default_strategy",
    "fnv1a64",
    "pageprotect_available",
    "release_all",
]
