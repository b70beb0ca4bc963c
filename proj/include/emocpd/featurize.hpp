#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "emocpd/structure.hpp"

namespace emocpd {

// The five one-hot element classes, in feature-vector order.
enum class ElementClass { C = 0, N = 1, O = 2, S = 3, H = 4 };

// 7-dim per-atom feature: element one-hot (5), free charge, SASA.
struct AtomFeature {
  std::array<double, 5> onehot{};
  double fc = 0.0;
  double sasa = 0.0;

  std::array<double, 7> as_vector() const {
    return {onehot[0], onehot[1], onehot[2], onehot[3], onehot[4], fc, sasa};
  }
};

// Indexed by atom position in ProteinModel::atoms; nullopt = excluded element.
using FeatureMap = std::vector<std::optional<AtomFeature>>;

// vdW radii keyed by element, with optional (residue, atom-name) overrides.
class RadiiTable {
public:
  static RadiiTable load(std::istream& in);
  static RadiiTable load_file(const std::string& path);
  static RadiiTable defaults();  // ships in data/radii.txt, mirrored here

  std::optional<double> lookup(const Atom& atom) const;
  void set_element(const std::string& element, double radius);
  void set_override(const std::string& residue, const std::string& atom_name, double radius);

private:
  std::unordered_map<std::string, double> by_element_;
  std::map<std::pair<std::string, std::string>, double> by_residue_atom_;
};

// Heavy-atom partial charges keyed by (residue, atom-name).
class ChargeTable {
public:
  static ChargeTable load(std::istream& in);
  static ChargeTable load_file(const std::string& path);

  std::optional<double> lookup(const std::string& residue, const std::string& atom_name) const;
  size_t size() const { return charges_.size(); }

  // Sum over every entry of one residue; used by the coverage audit.
  double residue_sum(const std::string& residue) const;

private:
  std::map<std::pair<std::string, std::string>, double> charges_;
};

// C/N/O/S/H mapped directly, SE counts as S, anything else is excluded and
// contributes nothing downstream.
std::optional<ElementClass> classify_element(const Atom& atom);

struct ChargeAssignment {
  int table_misses = 0;  // atoms that fell back to 0.0
};

// Fills Atom::charge for every included atom that does not already carry one
// (PQR-sourced charges win); table misses fall back to 0.0 and are counted.
ChargeAssignment assign_charges(ProteinModel& model, const ChargeTable& table);

struct SasaParams {
  double probe_radius = 1.4;  // Angstroms
  int n_points = 960;
};

// Shrake-Rupley solvent-accessible surface area per atom (Angstrom^2).
// Excluded elements get 0 and do not occlude. Throws if an included atom has
// no radius in either the model or the table.
std::vector<double> compute_sasa(const ProteinModel& model, const RadiiTable& radii,
                                 const SasaParams& params = {});

// One AtomFeature per included atom; requires charges assigned and SASA
// computed (sasa.size() == atoms.size()).
FeatureMap featurize(const ProteinModel& model, const std::vector<double>& sasa);

// Convenience: assign charges, compute SASA, build the feature map.
FeatureMap featurize_model(ProteinModel& model, const ChargeTable& charges,
                           const RadiiTable& radii, const SasaParams& params = {},
                           ChargeAssignment* assignment = nullptr);

}  // namespace emocpd
