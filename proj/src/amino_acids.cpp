#include "emocpd/amino_acids.hpp"

#include <array>
#include <unordered_map>

#include "emocpd/errors.hpp"

namespace emocpd::aa {

namespace {

const std::array<std::string, kNumClasses> kThreeLetter = {
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL"};

constexpr std::array<char, kNumClasses> kOneLetter = {'A', 'R', 'N', 'D', 'C', 'Q', 'E',
                                                      'G', 'H', 'I', 'L', 'K', 'M', 'F',
                                                      'P', 'S', 'T', 'W', 'Y', 'V'};

const std::array<std::vector<std::string>, kNumClasses> kHeavyAtoms = {{
    /* ALA */ {"N", "CA", "C", "O", "CB"},
    /* ARG */ {"N", "CA", "C", "O", "CB", "CG", "CD", "NE", "CZ", "NH1", "NH2"},
    /* ASN */ {"N", "CA", "C", "O", "CB", "CG", "OD1", "ND2"},
    /* ASP */ {"N", "CA", "C", "O", "CB", "CG", "OD1", "OD2"},
    /* CYS */ {"N", "CA", "C", "O", "CB", "SG"},
    /* GLN */ {"N", "CA", "C", "O", "CB", "CG", "CD", "OE1", "NE2"},
    /* GLU */ {"N", "CA", "C", "O", "CB", "CG", "CD", "OE1", "OE2"},
    /* GLY */ {"N", "CA", "C", "O"},
    /* HIS */ {"N", "CA", "C", "O", "CB", "CG", "ND1", "CD2", "CE1", "NE2"},
    /* ILE */ {"N", "CA", "C", "O", "CB", "CG1", "CG2", "CD1"},
    /* LEU */ {"N", "CA", "C", "O", "CB", "CG", "CD1", "CD2"},
    /* LYS */ {"N", "CA", "C", "O", "CB", "CG", "CD", "CE", "NZ"},
    /* MET */ {"N", "CA", "C", "O", "CB", "CG", "SD", "CE"},
    /* PHE */ {"N", "CA", "C", "O", "CB", "CG", "CD1", "CD2", "CE1", "CE2", "CZ"},
    /* PRO */ {"N", "CA", "C", "O", "CB", "CG", "CD"},
    /* SER */ {"N", "CA", "C", "O", "CB", "OG"},
    /* THR */ {"N", "CA", "C", "O", "CB", "OG1", "CG2"},
    /* TRP */ {"N", "CA", "C", "O", "CB", "CG", "CD1", "CD2", "NE1", "CE2", "CE3", "CZ2", "CZ3",
               "CH2"},
    /* TYR */ {"N", "CA", "C", "O", "CB", "CG", "CD1", "CD2", "CE1", "CE2", "CZ", "OH"},
    /* VAL */ {"N", "CA", "C", "O", "CB", "CG1", "CG2"},
}};

const std::unordered_map<std::string_view, int>& index_map() {
  static const std::unordered_map<std::string_view, int> map = [] {
    std::unordered_map<std::string_view, int> m;
    for (int i = 0; i < kNumClasses; ++i) m.emplace(kThreeLetter[i], i);
    return m;
  }();
  return map;
}

void check_index(int index) {
  if (index < 0 || index >= kNumClasses)
    throw Error("amino-acid class index out of range: " + std::to_string(index));
}

}  // namespace

int class_index(std::string_view three_letter) {
  auto it = index_map().find(three_letter);
  return it == index_map().end() ? -1 : it->second;
}

const std::string& three_letter(int index) {
  check_index(index);
  return kThreeLetter[static_cast<size_t>(index)];
}

char one_letter(int index) {
  check_index(index);
  return kOneLetter[static_cast<size_t>(index)];
}

int class_from_letter(char letter) {
  for (int i = 0; i < kNumClasses; ++i)
    if (kOneLetter[static_cast<size_t>(i)] == letter) return i;
  return -1;
}

std::optional<std::string> map_nonstandard(std::string_view residue_name) {
  if (residue_name == "MSE") return std::string("MET");
  return std::nullopt;
}

const std::vector<std::string>& heavy_atoms(int index) {
  check_index(index);
  return kHeavyAtoms[static_cast<size_t>(index)];
}

bool is_backbone_atom(std::string_view atom_name) {
  // N/CA/C/O plus backbone hydrogens and the C-terminal oxygen. CB and all
  // side-chain hydrogens belong to the R-group.
  static const std::array<std::string_view, 12> kBackbone = {
      "N", "CA", "C", "O", "OXT", "H", "H1", "H2", "H3", "HA", "HA2", "HA3"};
  for (auto n : kBackbone)
    if (atom_name == n) return true;
  return false;
}

}  // namespace emocpd::aa
