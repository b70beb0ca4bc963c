#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emocpd::aa {

// Canonical 20-class ordering: alphabetical by three-letter code.
// Every class index in the library, in dataset files and in reports uses it.
constexpr int kNumClasses = 20;

// Returns the class index for a standard three-letter code, -1 if unknown.
int class_index(std::string_view three_letter);

// Three-letter code for a class index (e.g. 0 -> "ALA").
const std::string& three_letter(int index);

// One-letter code for a class index (e.g. 0 -> 'A').
char one_letter(int index);

// Class index for a one-letter code, -1 if unknown.
int class_from_letter(char letter);

// Maps the non-standard residue names we accept onto standard ones
// (currently only MSE -> MET). Empty for anything else.
std::optional<std::string> map_nonstandard(std::string_view residue_name);

// Heavy atoms of each standard residue (PDB v3 names, no OXT).
const std::vector<std::string>& heavy_atoms(int index);

// Backbone atom names (including backbone hydrogens and terminal OXT).
// Everything else on a residue counts as side chain.
bool is_backbone_atom(std::string_view atom_name);

}  // namespace emocpd::aa
