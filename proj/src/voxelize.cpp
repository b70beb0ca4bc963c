#include "emocpd/voxelize.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "emocpd/errors.hpp"
#include "binio.hpp"

namespace emocpd {

geom::Vec3 virtual_cbeta(const geom::Vec3& n, const geom::Vec3& ca, const geom::Vec3& c) {
  if (geom::norm(geom::cross(n - ca, c - ca)) < 1e-6)
    throw Error("collinear backbone, cannot place virtual CB");
  // Internal coordinates relative to C-N-Ca.
  return geom::place_from_internal(c, n, ca, 1.522, 110.4, -122.55);
}

LocalFrame local_frame(const ResidueSite& site) {
  geom::Vec3 cb = site.cbeta ? *site.cbeta : virtual_cbeta(site.n, site.ca, site.c);

  geom::Vec3 nca = site.n - site.ca;
  geom::Vec3 cca = site.c - site.ca;
  geom::Vec3 normal = geom::cross(nca, cca);
  if (geom::norm(normal) < 1e-6) throw Error("degenerate backbone plane");

  LocalFrame frame;
  frame.origin = cb;
  frame.x = geom::normalized(nca);
  geom::Vec3 nhat = geom::normalized(normal);
  double sign = geom::dot(nhat, cb - site.ca);
  if (std::fabs(sign) < 1e-9) throw Error("CB lies in the backbone plane, z sign undefined");
  frame.z = sign > 0 ? nhat : nhat * -1.0;
  frame.y = geom::cross(frame.z, frame.x);
  return frame;
}

std::string make_site_id(const std::string& source_id, const ResidueSite& site) {
  std::string id = source_id + "|" + std::string(1, site.chain_id) + "|" +
                   std::to_string(site.residue_seq);
  if (site.insertion_code != ' ') id.push_back(site.insertion_code);
  return id;
}

MicroEnvGrid build_grid(const ResidueSite& site, const FeatureMap& features,
                        const std::vector<Atom>& atoms, const std::string& source_id,
                        const GridSpec& spec) {
  if (features.size() != atoms.size()) throw ShapeError("feature map does not match atom count");
  LocalFrame frame = local_frame(site);

  std::unordered_set<int> masked(site.sidechain_atoms.begin(), site.sidechain_atoms.end());

  MicroEnvGrid grid;
  grid.values.assign(spec.value_count(), 0.0);
  grid.label = site.label;
  grid.site_id = make_site_id(source_id, site);

  const double half = spec.half_extent();
  const int n = spec.cells_per_side;
  for (size_t i = 0; i < atoms.size(); ++i) {
    if (!features[i]) continue;
    if (masked.count(static_cast<int>(i))) continue;
    geom::Vec3 rel = atoms[i].position - frame.origin;
    double px = geom::dot(rel, frame.x);
    double py = geom::dot(rel, frame.y);
    double pz = geom::dot(rel, frame.z);
    int ix = static_cast<int>(std::floor((px + half) / spec.cell_size));
    int iy = static_cast<int>(std::floor((py + half) / spec.cell_size));
    int iz = static_cast<int>(std::floor((pz + half) / spec.cell_size));
    if (ix < 0 || ix >= n || iy < 0 || iy >= n || iz < 0 || iz >= n) continue;
    auto vec = features[i]->as_vector();
    for (int c = 0; c < spec.channels; ++c) grid.at(spec, c, ix, iy, iz) += vec[static_cast<size_t>(c)];
  }
  return grid;
}

// ---------------------------------------------------------------------------
// EMOG container
// ---------------------------------------------------------------------------


void write_grid_stream(std::ostream& out, const std::vector<MicroEnvGrid>& grids,
                       const GridSpec& spec) {
  out.write("EMOG", 4);
  binio::put_u16(out, kGridFileVersion);
  binio::put_u64(out, grids.size());
  for (const MicroEnvGrid& g : grids) {
    if (g.values.size() != spec.value_count()) throw ShapeError("grid has wrong value count");
    if (g.label < 0 || g.label > 255) throw Error("grid label out of byte range");
    char label = static_cast<char>(g.label);
    out.write(&label, 1);
    binio::put_u32(out, static_cast<uint32_t>(g.site_id.size()));
    out.write(g.site_id.data(), static_cast<std::streamsize>(g.site_id.size()));
    for (double v : g.values) binio::put_f32(out, static_cast<float>(v));
  }
  if (!out) throw IoError("failed writing grid stream");
}

void write_grid_file(const std::string& path, const std::vector<MicroEnvGrid>& grids,
                     const GridSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_grid_stream(out, grids, spec);
}

std::vector<MicroEnvGrid> read_grid_stream(std::istream& in, const GridSpec& spec) {
  char magic[4];
  if (!binio::get_bytes(in, magic, 4) || std::memcmp(magic, "EMOG", 4) != 0)
    throw FormatError("not a grid file (bad magic)");
  uint16_t version = binio::get_u16(in);
  if (version != kGridFileVersion)
    throw FormatError("unsupported grid file version " + std::to_string(version));
  uint64_t count = binio::get_u64(in);

  std::vector<MicroEnvGrid> grids;
  grids.reserve(count);
  for (uint64_t s = 0; s < count; ++s) {
    MicroEnvGrid g;
    char label;
    if (!binio::get_bytes(in, &label, 1)) throw FormatError("truncated file");
    g.label = static_cast<unsigned char>(label);
    uint32_t id_len = binio::get_u32(in);
    g.site_id.resize(id_len);
    if (id_len && !binio::get_bytes(in, g.site_id.data(), id_len)) throw FormatError("truncated file");
    g.values.resize(spec.value_count());
    for (double& v : g.values) v = binio::get_f32(in);
    grids.push_back(std::move(g));
  }
  return grids;
}

std::vector<MicroEnvGrid> read_grid_file(const std::string& path, const GridSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_grid_stream(in, spec);
}

}  // namespace emocpd
