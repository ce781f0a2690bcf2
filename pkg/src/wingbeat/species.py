"""The fixed species label set: 23 classes, one positive target."""
from dataclasses import dataclass

# Table order of the Abuzz-derived dataset; index = position.
SPECIES = (
    "Aedes_aegypti",
    "Aedes_albopictus",
    "Aedes_mediovittatus",
    "Aedes_sierrensis",
    "Anopheles_albimanus",
    "Anopheles_arabiensis_dongola",
    "Anopheles_arabiensis_rufisque",
    "Anopheles_atroparvus",
    "Anopheles_dirus",
    "Anopheles_farauti",
    "Anopheles_freeborni",
    "Anopheles_gambiae_akron",
    "Anopheles_gambiae_kisumu",
    "Anopheles_gambiae_rsp",
    "Anopheles_merus",
    "Anopheles_minimus",
    "Anopheles_quadriannulatus",
    "Anopheles_quadrimaculatus",
    "Anopheles_stephensi",
    "Culex_pipiens",
    "Culex_quinquefasciatus",
    "Culex_tarsalis",
    "Culiseta_incidens",
)
N_CLASSES = len(SPECIES)
TARGET = "Aedes_aegypti"
_INDEX = {name: i for i, name in enumerate(SPECIES)}

# Reference per-species (file count, post-processing seconds) of the original curated dataset.
REFERENCE_STATS = {
    "Aedes_aegypti": (22, 1736.87),
    "Aedes_albopictus": (7, 966.37),
    "Aedes_mediovittatus": (3, 53.69),
    "Aedes_sierrensis": (361, 274.01),
    "Anopheles_albimanus": (40, 901.37),
    "Anopheles_arabiensis_dongola": (6, 850.88),
    "Anopheles_arabiensis_rufisque": (7, 844.45),
    "Anopheles_atroparvus": (7, 833.66),
    "Anopheles_dirus": (65, 530.35),
    "Anopheles_farauti": (47, 781.35),
    "Anopheles_freeborni": (54, 1237.00),
    "Anopheles_gambiae_akron": (7, 615.15),
    "Anopheles_gambiae_kisumu": (57, 638.57),
    "Anopheles_gambiae_rsp": (2, 295.84),
    "Anopheles_merus": (5, 205.05),
    "Anopheles_minimus": (68, 994.16),
    "Anopheles_quadriannulatus": (7, 959.33),
    "Anopheles_quadrimaculatus": (6, 548.31),
    "Anopheles_stephensi": (58, 770.22),
    "Culex_pipiens": (9, 240.83),
    "Culex_quinquefasciatus": (13, 195.07),
    "Culex_tarsalis": (12, 231.11),
    "Culiseta_incidens": (37, 1244.21),
}


@dataclass(frozen=True, order=True)
class SpeciesLabel:
    index: int
    name: str

    @property
    def is_target(self):
        return self.name == TARGET

    def __str__(self):
        return self.name


def label(name_or_index):
    """Look up a label by name or index; raises KeyError for unknown species."""
    if isinstance(name_or_index, SpeciesLabel):
        return name_or_index
    if isinstance(name_or_index, (int,)) and not isinstance(name_or_index, bool):
        if not 0 <= name_or_index < N_CLASSES:
            raise KeyError(name_or_index)
        return SpeciesLabel(name_or_index, SPECIES[name_or_index])
    return SpeciesLabel(_INDEX[name_or_index], name_or_index)


def is_species(name):
    return name in _INDEX


TARGET_LABEL = label(TARGET)
NON_TARGET = tuple(label(n) for n in SPECIES if n != TARGET)
