#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emocpd/geometry.hpp"

namespace emocpd {

struct Atom {
  int serial = 0;
  std::string name;          // e.g. "CA", "CB"
  std::string element;       // trimmed, uppercase; may be empty (inferred later)
  std::string residue_name;  // three-letter code
  char chain_id = ' ';
  int residue_seq = 0;
  char insertion_code = ' ';
  geom::Vec3 position;  // Angstroms
  double occupancy = 1.0;
  std::optional<double> charge;      // elementary charges (PQR or table)
  std::optional<double> vdw_radius;  // Angstroms (PQR only; table otherwise)
};

// One classifiable residue. Backbone positions are copied out of the atom
// list so grid construction never has to chase indices for the frame atoms.
struct ResidueSite {
  int label = -1;  // canonical 20-class index
  char chain_id = ' ';
  int residue_seq = 0;
  char insertion_code = ' ';
  geom::Vec3 n, ca, c;
  std::optional<geom::Vec3> o;
  std::optional<geom::Vec3> cbeta;
  std::vector<int> sidechain_atoms;  // indices into ProteinModel::atoms
};

struct ExtractReport {
  int skipped_incomplete = 0;    // missing N, CA or C
  int dropped_nonstandard = 0;   // residue name outside the 20 classes (and not MSE)
  int skipped_geometry = 0;      // backbone distances outside (0.5, 3.0) A
};

struct ProteinModel {
  std::string source_id;
  std::vector<Atom> atoms;
  std::vector<ResidueSite> sites;  // derived via extract_sites
  ExtractReport site_report;
};

struct PdbParseOptions {
  bool include_hetatm = false;
};

// Fixed-column PDB ATOM records (first MODEL only, altLoc resolved by
// highest occupancy with ties going to the first conformer seen).
ProteinModel parse_pdb(std::istream& in, const std::string& source_id,
                       const PdbParseOptions& options = {});
ProteinModel parse_pdb_file(const std::string& path, const PdbParseOptions& options = {});

// Whitespace-delimited PQR rows (10 or 11 fields); charge and radius are the
// last two columns.
ProteinModel parse_pqr(std::istream& in, const std::string& source_id);
ProteinModel parse_pqr_file(const std::string& path);

void write_pqr(const ProteinModel& model, std::ostream& out);

ProteinModel select_chains(const ProteinModel& model, const std::set<char>& chain_ids);

std::vector<ResidueSite> extract_sites(const std::vector<Atom>& atoms,
                                       ExtractReport* report = nullptr);

// Large-protein subsampling: if more than `threshold` sites, keep `cap` of
// them, drawn uniformly without replacement; otherwise keep all. Output
// preserves input order either way.
std::vector<ResidueSite> sample_sites(const std::vector<ResidueSite>& sites, size_t threshold,
                                      size_t cap, uint64_t seed);

// Best-effort element from the atom name when columns 77-78 were blank.
std::string element_from_name(const std::string& atom_name, const std::string& residue_name);

}  // namespace emocpd
