"""Phoneme inventory, phoneme-string parsing and corpus manifests."""
from mixtts.frontend.inventory import (  # noqa: F401
    Language,
    PhonemeInventory,
    PhonemeSymbol,
    build_inventory,
    default_inventory,
    parse_phoneme_string,
    render_phonemes,
)
from mixtts.frontend.manifest import (  # noqa: F401
    UtteranceLanguage,
    UtteranceRecord,
    classify_language,
    load_manifest,
    manifest_stats,
    write_manifest,
)
