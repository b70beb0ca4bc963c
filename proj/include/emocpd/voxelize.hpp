#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "emocpd/featurize.hpp"
#include "emocpd/structure.hpp"

namespace emocpd {

// Residue-centered right-handed orthonormal frame: x along Ca->N, z normal to
// the N-Ca-C plane signed toward Cbeta, origin at Cbeta.
struct LocalFrame {
  geom::Vec3 origin;
  geom::Vec3 x, y, z;
};

struct GridSpec {
  int cells_per_side = 20;
  double cell_size = 1.0;  // Angstroms
  int channels = 7;

  double half_extent() const { return cells_per_side * cell_size / 2.0; }
  size_t value_count() const {
    return static_cast<size_t>(channels) * cells_per_side * cells_per_side * cells_per_side;
  }
};

// One microenvironment sample: channel-major [7][20][20][20] values plus the
// class label and where the site came from.
struct MicroEnvGrid {
  std::vector<double> values;
  int label = -1;
  std::string site_id;  // "<source>|<chain>|<seq>[icode]"

  double& at(const GridSpec& spec, int c, int ix, int iy, int iz) {
    return values[((static_cast<size_t>(c) * spec.cells_per_side + ix) * spec.cells_per_side + iy) *
                      spec.cells_per_side +
                  iz];
  }
  double at(const GridSpec& spec, int c, int ix, int iy, int iz) const {
    return values[((static_cast<size_t>(c) * spec.cells_per_side + ix) * spec.cells_per_side + iy) *
                      spec.cells_per_side +
                  iz];
  }
};

// Ideal-geometry Cbeta for residues that lack one (glycine): bond 1.522 A,
// angle N-Ca-Cb 110.4 deg, dihedral C-N-Ca-Cb -122.55 deg.
geom::Vec3 virtual_cbeta(const geom::Vec3& n, const geom::Vec3& ca, const geom::Vec3& c);

LocalFrame local_frame(const ResidueSite& site);

MicroEnvGrid build_grid(const ResidueSite& site, const FeatureMap& features,
                        const std::vector<Atom>& atoms, const std::string& source_id,
                        const GridSpec& spec = {});

std::string make_site_id(const std::string& source_id, const ResidueSite& site);

// Binary grid container ("EMOG"): magic, u16 version, u64 sample count, then
// per sample a label byte, a u32-length-prefixed site-id string and
// 7*20*20*20 little-endian f32 values.
inline constexpr uint16_t kGridFileVersion = 1;

void write_grid_file(const std::string& path, const std::vector<MicroEnvGrid>& grids,
                     const GridSpec& spec = {});
void write_grid_stream(std::ostream& out, const std::vector<MicroEnvGrid>& grids,
                       const GridSpec& spec = {});
std::vector<MicroEnvGrid> read_grid_file(const std::string& path, const GridSpec& spec = {});
std::vector<MicroEnvGrid> read_grid_stream(std::istream& in, const GridSpec& spec = {});

}  // namespace emocpd
