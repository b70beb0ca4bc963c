#include "emocpd/structure.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "emocpd/amino_acids.hpp"
#include "emocpd/errors.hpp"
#include "emocpd/rng.hpp"

namespace emocpd {

namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// 1-based inclusive column range, tolerant of short lines.
std::string_view columns(const std::string& line, size_t first, size_t last) {
  if (line.size() < first) return {};
  size_t end = std::min(last, line.size());
  return std::string_view(line).substr(first - 1, end - first + 1);
}

double parse_real(std::string_view field, const char* what, int line_no) {
  std::string t = trim(field);
  if (t.empty()) throw ParseError(std::string("missing ") + what, line_no);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) throw ParseError(std::string("malformed ") + what + " '" + t + "'", line_no);
  return v;
}

int parse_int(std::string_view field, const char* what, int line_no) {
  std::string t = trim(field);
  if (t.empty()) throw ParseError(std::string("missing ") + what, line_no);
  char* end = nullptr;
  long v = std::strtol(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) throw ParseError(std::string("malformed ") + what + " '" + t + "'", line_no);
  return static_cast<int>(v);
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::string element_from_name(const std::string& atom_name, const std::string& residue_name) {
  // PDB convention: digits may prefix hydrogen names ("1HB"); two-letter
  // elements of interest here are SE (selenomethionine) only.
  std::string t;
  for (char c : atom_name)
    if (!std::isdigit(static_cast<unsigned char>(c)) && c != ' ') t.push_back(c);
  if (t.empty()) return {};
  t = upper(t);
  if (t.size() >= 2 && t.substr(0, 2) == "SE" && residue_name == "MSE") return "SE";
  return std::string(1, t[0]);
}

ProteinModel parse_pdb(std::istream& in, const std::string& source_id,
                       const PdbParseOptions& options) {
  ProteinModel model;
  model.source_id = source_id;

  // altLoc resolution: (chain, seq, icode, name) -> index of kept conformer.
  std::map<std::tuple<char, int, char, std::string>, size_t> conformers;

  std::string line;
  int line_no = 0;
  bool past_first_model = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view record = columns(line, 1, 6);
    if (record.substr(0, 6) == "ENDMDL") {
      past_first_model = true;
      continue;
    }
    bool is_atom = record == "ATOM  " || (record.size() >= 4 && record.substr(0, 4) == "ATOM" && trim(record) == "ATOM");
    bool is_het = record == "HETATM";
    if (!is_atom && !is_het) continue;
    if (is_het && !options.include_hetatm) continue;
    if (past_first_model) continue;

    if (line.size() < 54) throw ParseError("ATOM record shorter than coordinate columns", line_no);

    Atom atom;
    atom.serial = parse_int(columns(line, 7, 11), "serial", line_no);
    atom.name = trim(columns(line, 13, 16));
    char alt_loc = line.size() >= 17 ? line[16] : ' ';
    atom.residue_name = upper(trim(columns(line, 18, 20)));
    atom.chain_id = line.size() >= 22 ? line[21] : ' ';
    atom.residue_seq = parse_int(columns(line, 23, 26), "residue number", line_no);
    atom.insertion_code = line.size() >= 27 && line[26] != ' ' ? line[26] : ' ';
    atom.position.x = parse_real(columns(line, 31, 38), "x coordinate", line_no);
    atom.position.y = parse_real(columns(line, 39, 46), "y coordinate", line_no);
    atom.position.z = parse_real(columns(line, 47, 54), "z coordinate", line_no);
    if (!geom::finite(atom.position)) throw ParseError("non-finite coordinates", line_no);

    std::string occ = trim(columns(line, 55, 60));
    if (!occ.empty()) atom.occupancy = parse_real(occ, "occupancy", line_no);
    atom.occupancy = std::clamp(atom.occupancy, 0.0, 1.0);

    atom.element = upper(trim(columns(line, 77, 78)));
    if (atom.element.empty()) atom.element = element_from_name(atom.name, atom.residue_name);

    if (alt_loc != ' ') {
      auto key = std::make_tuple(atom.chain_id, atom.residue_seq, atom.insertion_code, atom.name);
      auto [it, inserted] = conformers.emplace(key, model.atoms.size());
      if (!inserted) {
        // Keep the higher-occupancy conformer; ties keep the first one seen.
        Atom& kept = model.atoms[it->second];
        if (atom.occupancy > kept.occupancy) kept = atom;
        continue;
      }
    }
    model.atoms.push_back(std::move(atom));
  }

  if (model.atoms.empty()) throw Error("no atoms parsed from '" + source_id + "'");
  model.sites = extract_sites(model.atoms, &model.site_report);
  return model;
}

ProteinModel parse_pdb_file(const std::string& path, const PdbParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_pdb(in, path, options);
}

ProteinModel parse_pqr(std::istream& in, const std::string& source_id) {
  ProteinModel model;
  model.source_id = source_id;

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> f;
    std::string tok;
    while (fields >> tok) f.push_back(tok);
    if (f.empty() || (f[0] != "ATOM" && f[0] != "HETATM")) continue;
    if (f.size() != 10 && f.size() != 11)
      throw ParseError("expected 10 or 11 fields, got " + std::to_string(f.size()), line_no);

    bool has_chain = f.size() == 11;
    Atom atom;
    atom.serial = parse_int(f[1], "serial", line_no);
    atom.name = f[2];
    atom.residue_name = upper(f[3]);
    atom.chain_id = has_chain ? f[4][0] : ' ';
    std::string seq = f[has_chain ? 5 : 4];
    // Insertion codes ride on the residue number in PQR ("52A").
    if (!seq.empty() && std::isalpha(static_cast<unsigned char>(seq.back()))) {
      atom.insertion_code = seq.back();
      seq.pop_back();
    }
    atom.residue_seq = parse_int(seq, "residue number", line_no);
    size_t base = has_chain ? 6 : 5;
    atom.position.x = parse_real(f[base], "x coordinate", line_no);
    atom.position.y = parse_real(f[base + 1], "y coordinate", line_no);
    atom.position.z = parse_real(f[base + 2], "z coordinate", line_no);
    atom.charge = parse_real(f[base + 3], "charge", line_no);
    atom.vdw_radius = parse_real(f[base + 4], "radius", line_no);
    atom.element = element_from_name(atom.name, atom.residue_name);
    // Some PQR generators emit zero radii for hydrogens; only heavy atoms
    // must carry a usable radius.
    if (*atom.vdw_radius <= 0.0) {
      if (atom.element != "H") throw ParseError("non-positive radius", line_no);
      atom.vdw_radius.reset();
    }
    model.atoms.push_back(std::move(atom));
  }

  if (model.atoms.empty()) throw Error("no atoms parsed from '" + source_id + "'");
  model.sites = extract_sites(model.atoms, &model.site_report);
  return model;
}

ProteinModel parse_pqr_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return parse_pqr(in, path);
}

void write_pqr(const ProteinModel& model, std::ostream& out) {
  char buf[160];
  for (const Atom& a : model.atoms) {
    std::snprintf(buf, sizeof(buf), "ATOM %6d %-4s %-4s %c %4d%c %10.4f %10.4f %10.4f %8.4f %7.4f\n",
                  a.serial, a.name.c_str(), a.residue_name.c_str(),
                  a.chain_id == ' ' ? 'A' : a.chain_id, a.residue_seq,
                  a.insertion_code == ' ' ? ' ' : a.insertion_code, a.position.x, a.position.y,
                  a.position.z, a.charge.value_or(0.0), a.vdw_radius.value_or(0.0));
    // Collapse the icode slot when empty so the row stays whitespace-splittable.
    std::string row(buf);
    out << row;
  }
}

ProteinModel select_chains(const ProteinModel& model, const std::set<char>& chain_ids) {
  if (chain_ids.empty()) throw ConfigError("chain selection is empty");
  ProteinModel out;
  out.source_id = model.source_id;
  for (const Atom& a : model.atoms)
    if (chain_ids.count(a.chain_id)) out.atoms.push_back(a);
  if (out.atoms.empty()) {
    std::string names;
    for (char c : chain_ids) names.push_back(c);
    throw Error("no atoms on requested chains {" + names + "} in '" + model.source_id + "'");
  }
  out.sites = extract_sites(out.atoms, &out.site_report);
  return out;
}

std::vector<ResidueSite> extract_sites(const std::vector<Atom>& atoms, ExtractReport* report) {
  ExtractReport local;
  ExtractReport& rep = report ? *report : local;
  rep = ExtractReport{};

  struct Group {
    char chain;
    int seq;
    char icode;
    std::string residue_name;
    std::vector<int> atom_indices;
  };
  std::vector<Group> groups;
  std::map<std::tuple<char, int, char>, size_t> index;
  for (size_t i = 0; i < atoms.size(); ++i) {
    const Atom& a = atoms[i];
    auto key = std::make_tuple(a.chain_id, a.residue_seq, a.insertion_code);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, groups.size());
      groups.push_back({a.chain_id, a.residue_seq, a.insertion_code, a.residue_name, {}});
      it = index.find(key);
    }
    groups[it->second].atom_indices.push_back(static_cast<int>(i));
  }

  std::vector<ResidueSite> sites;
  for (const Group& g : groups) {
    std::string name = g.residue_name;
    if (aa::class_index(name) < 0) {
      auto mapped = aa::map_nonstandard(name);
      if (!mapped) {
        ++rep.dropped_nonstandard;
        continue;
      }
      name = *mapped;
    }

    ResidueSite site;
    site.label = aa::class_index(name);
    site.chain_id = g.chain;
    site.residue_seq = g.seq;
    site.insertion_code = g.icode;

    bool has_n = false, has_ca = false, has_c = false;
    for (int ai : g.atom_indices) {
      const Atom& a = atoms[static_cast<size_t>(ai)];
      if (a.name == "N" && !has_n) {
        site.n = a.position;
        has_n = true;
      } else if (a.name == "CA" && !has_ca) {
        site.ca = a.position;
        has_ca = true;
      } else if (a.name == "C" && !has_c) {
        site.c = a.position;
        has_c = true;
      } else if (a.name == "O" && !site.o) {
        site.o = a.position;
      } else if (a.name == "CB" && !site.cbeta) {
        site.cbeta = a.position;
      }
      if (!aa::is_backbone_atom(a.name)) site.sidechain_atoms.push_back(ai);
    }

    if (!has_n || !has_ca || !has_c) {
      ++rep.skipped_incomplete;
      continue;
    }
    double d_nca = geom::distance(site.n, site.ca);
    double d_cac = geom::distance(site.ca, site.c);
    double d_nc = geom::distance(site.n, site.c);
    auto sane = [](double d) { return d > 0.5 && d < 3.0; };
    if (!sane(d_nca) || !sane(d_cac) || !sane(d_nc)) {
      ++rep.skipped_geometry;
      continue;
    }
    sites.push_back(std::move(site));
  }
  return sites;
}

std::vector<ResidueSite> sample_sites(const std::vector<ResidueSite>& sites, size_t threshold,
                                      size_t cap, uint64_t seed) {
  if (cap > threshold) throw ConfigError("sampling cap exceeds trigger threshold");
  if (sites.size() <= threshold) return sites;
  Rng rng(seed);
  std::vector<size_t> keep = rng.sample_indices(sites.size(), cap);
  std::vector<ResidueSite> out;
  out.reserve(keep.size());
  for (size_t i : keep) out.push_back(sites[i]);
  return out;
}

}  // namespace emocpd
