#include "emocpd/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "emocpd/errors.hpp"

namespace emocpd {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::optional<ElementClass> class_for_symbol(const std::string& element) {
  if (element == "C") return ElementClass::C;
  if (element == "N") return ElementClass::N;
  if (element == "O") return ElementClass::O;
  if (element == "S") return ElementClass::S;
  if (element == "H" || element == "D") return ElementClass::H;
  if (element == "SE") return ElementClass::S;  // selenomethionine
  return std::nullopt;
}

}  // namespace

std::optional<ElementClass> classify_element(const Atom& atom) {
  std::string element = atom.element;
  if (element.empty()) element = element_from_name(atom.name, atom.residue_name);
  return class_for_symbol(element);
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

RadiiTable RadiiTable::load(std::istream& in) {
  RadiiTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream row(line);
    std::string kind, a, b;
    double value;
    if (!(row >> kind)) continue;
    if (kind == "ELEM") {
      if (!(row >> a >> value)) throw ParseError("bad ELEM row", line_no);
      table.set_element(a, value);
    } else if (kind == "RES") {
      if (!(row >> a >> b >> value)) throw ParseError("bad RES row", line_no);
      table.set_override(a, b, value);
    } else {
      throw ParseError("unknown radii row kind '" + kind + "'", line_no);
    }
    if (value <= 0.5 || value >= 3.0) throw ParseError("radius outside (0.5, 3.0)", line_no);
  }
  return table;
}

RadiiTable RadiiTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open radii table '" + path + "'");
  return load(in);
}

RadiiTable RadiiTable::defaults() {
  // Bondi-style values; data/radii.txt carries the same set.
  RadiiTable t;
  t.set_element("C", 1.70);
  t.set_element("N", 1.55);
  t.set_element("O", 1.52);
  t.set_element("S", 1.80);
  t.set_element("SE", 1.90);
  t.set_element("H", 1.20);
  t.set_element("D", 1.20);
  return t;
}

void RadiiTable::set_element(const std::string& element, double radius) {
  by_element_[element] = radius;
}

void RadiiTable::set_override(const std::string& residue, const std::string& atom_name,
                              double radius) {
  by_residue_atom_[{residue, atom_name}] = radius;
}

std::optional<double> RadiiTable::lookup(const Atom& atom) const {
  auto it = by_residue_atom_.find({atom.residue_name, atom.name});
  if (it != by_residue_atom_.end()) return it->second;
  std::string element = atom.element;
  if (element.empty()) element = element_from_name(atom.name, atom.residue_name);
  auto eit = by_element_.find(element);
  if (eit != by_element_.end()) return eit->second;
  return std::nullopt;
}

ChargeTable ChargeTable::load(std::istream& in) {
  ChargeTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream row(line);
    std::string residue, atom;
    double charge;
    if (!(row >> residue)) continue;
    if (!(row >> atom >> charge)) throw ParseError("bad charge row", line_no);
    if (!std::isfinite(charge)) throw ParseError("non-finite charge", line_no);
    table.charges_[{residue, atom}] = charge;
  }
  return table;
}

ChargeTable ChargeTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open charge table '" + path + "'");
  return load(in);
}

std::optional<double> ChargeTable::lookup(const std::string& residue,
                                          const std::string& atom_name) const {
  auto it = charges_.find({residue, atom_name});
  if (it == charges_.end()) return std::nullopt;
  return it->second;
}

double ChargeTable::residue_sum(const std::string& residue) const {
  double sum = 0.0;
  for (const auto& [key, value] : charges_)
    if (key.first == residue) sum += value;
  return sum;
}

// ---------------------------------------------------------------------------
// Charges
// ---------------------------------------------------------------------------

ChargeAssignment assign_charges(ProteinModel& model, const ChargeTable& table) {
  ChargeAssignment result;
  for (Atom& atom : model.atoms) {
    if (!classify_element(atom)) continue;
    if (atom.charge) continue;  // PQR-sourced values win
    auto charge = table.lookup(atom.residue_name, atom.name);
    if (!charge) {
      charge = 0.0;
      ++result.table_misses;
    }
    atom.charge = *charge;
  }
  return result;
}

// ---------------------------------------------------------------------------
// SASA
// ---------------------------------------------------------------------------

namespace {

struct SasaAtom {
  geom::Vec3 pos;
  double radius;        // vdW radius
  double sphere;        // radius + probe
  int model_index;
};

// Integer cell key for the spatial hash.
struct CellKey {
  int64_t x, y, z;
  bool operator<(const CellKey& o) const {
    if (x != o.x) return x < o.x;
    if (y != o.y) return y < o.y;
    return z < o.z;
  }
};

}  // namespace

std::vector<double> compute_sasa(const ProteinModel& model, const RadiiTable& radii,
                                 const SasaParams& params) {
  const double probe = params.probe_radius;
  const int n_points = params.n_points;

  std::vector<SasaAtom> atoms;
  atoms.reserve(model.atoms.size());
  double max_radius = 0.0;
  for (size_t i = 0; i < model.atoms.size(); ++i) {
    const Atom& a = model.atoms[i];
    if (!classify_element(a)) continue;  // excluded elements neither have area nor occlude
    double r = a.vdw_radius ? *a.vdw_radius : radii.lookup(a).value_or(-1.0);
    if (r <= 0.0)
      throw Error("no vdW radius for atom " + std::to_string(a.serial) + " '" + a.name + "' (" +
                  a.residue_name + ")");
    atoms.push_back({a.position, r, r + probe, static_cast<int>(i)});
    max_radius = std::max(max_radius, r);
  }

  // Spatial hash with cells the size of the largest possible pair cutoff, so
  // neighbors always sit in the 27 surrounding cells.
  const double cell = std::max(2.0 * max_radius + 2.0 * probe, 1.0);
  std::map<CellKey, std::vector<int>> grid;
  auto key_of = [cell](const geom::Vec3& p) {
    return CellKey{static_cast<int64_t>(std::floor(p.x / cell)),
                   static_cast<int64_t>(std::floor(p.y / cell)),
                   static_cast<int64_t>(std::floor(p.z / cell))};
  };
  for (size_t i = 0; i < atoms.size(); ++i) grid[key_of(atoms[i].pos)].push_back(static_cast<int>(i));

  // Fibonacci lattice directions in a neutral basis; rotated per atom below.
  std::vector<double> lat_z(n_points), lat_c(n_points), lat_s(n_points);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n_points; ++k) {
    double z = 1.0 - (2.0 * k + 1.0) / n_points;
    double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = golden * k;
    lat_z[k] = z;
    lat_c[k] = s * std::cos(phi);
    lat_s[k] = s * std::sin(phi);
  }

  std::vector<double> sasa(model.atoms.size(), 0.0);

#pragma omp parallel for schedule(dynamic, 8)
  for (int64_t ii = 0; ii < static_cast<int64_t>(atoms.size()); ++ii) {
    const SasaAtom& self = atoms[static_cast<size_t>(ii)];
    const double area = 4.0 * kPi * self.sphere * self.sphere;

    // Gather neighbors, ordered by their position in the atom list.
    std::vector<int> neighbors;
    CellKey center = key_of(self.pos);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = grid.find({center.x + dx, center.y + dy, center.z + dz});
          if (it == grid.end()) continue;
          for (int j : it->second) {
            if (j == ii) continue;
            const SasaAtom& other = atoms[static_cast<size_t>(j)];
            double cutoff = self.radius + other.radius + 2.0 * probe;
            if (geom::norm2(other.pos - self.pos) < cutoff * cutoff) neighbors.push_back(j);
          }
        }
    std::sort(neighbors.begin(), neighbors.end());

    if (neighbors.empty()) {
      sasa[static_cast<size_t>(self.model_index)] = area;
      continue;
    }

    // Local frame from the lowest-index neighbors. Tying the lattice to the
    // molecule keeps SASA rigid-motion invariant, and picking neighbors by
    // index (not distance) keeps existing frames unchanged when atoms are
    // appended, which is what the monotonicity property needs.
    geom::Vec3 e1 = geom::normalized(atoms[static_cast<size_t>(neighbors[0])].pos - self.pos);
    geom::Vec3 e2{};
    bool have_e2 = false;
    for (int j : neighbors) {
      geom::Vec3 u = geom::normalized(atoms[static_cast<size_t>(j)].pos - self.pos);
      geom::Vec3 c = geom::cross(e1, u);
      if (geom::norm(c) > 1e-6) {
        e2 = geom::normalized(u - e1 * geom::dot(e1, u));
        have_e2 = true;
        break;
      }
    }
    if (!have_e2) {
      // All neighbors collinear with e1: occlusion depends only on the polar
      // angle, so any perpendicular works.
      geom::Vec3 pick = std::fabs(e1.x) < 0.9 ? geom::Vec3{1, 0, 0} : geom::Vec3{0, 1, 0};
      e2 = geom::normalized(pick - e1 * geom::dot(e1, pick));
    }
    geom::Vec3 e3 = geom::cross(e1, e2);

    int exposed = 0;
    for (int k = 0; k < n_points; ++k) {
      geom::Vec3 dir = e1 * lat_z[k] + e2 * lat_c[k] + e3 * lat_s[k];
      geom::Vec3 p = self.pos + dir * self.sphere;
      bool outside_all = true;
      for (int j : neighbors) {
        const SasaAtom& other = atoms[static_cast<size_t>(j)];
        if (geom::norm2(p - other.pos) < other.sphere * other.sphere) {
          outside_all = false;
          break;
        }
      }
      if (outside_all) ++exposed;
    }
    sasa[static_cast<size_t>(self.model_index)] = area * exposed / n_points;
  }

  return sasa;
}

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

FeatureMap featurize(const ProteinModel& model, const std::vector<double>& sasa) {
  if (sasa.size() != model.atoms.size())
    throw ShapeError("SASA vector does not match atom count");
  FeatureMap features(model.atoms.size());
  for (size_t i = 0; i < model.atoms.size(); ++i) {
    const Atom& atom = model.atoms[i];
    auto cls = classify_element(atom);
    if (!cls) continue;
    AtomFeature f;
    f.onehot[static_cast<size_t>(*cls)] = 1.0;
    f.fc = atom.charge.value_or(0.0);
    f.sasa = sasa[i];
    features[i] = f;
  }
  return features;
}

FeatureMap featurize_model(ProteinModel& model, const ChargeTable& charges,
                           const RadiiTable& radii, const SasaParams& params,
                           ChargeAssignment* assignment) {
  ChargeAssignment a = assign_charges(model, charges);
  if (assignment) *assignment = a;
  std::vector<double> sasa = compute_sasa(model, radii, params);
  return featurize(model, sasa);
}

}  // namespace emocpd
