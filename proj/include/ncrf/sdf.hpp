#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "ncrf/geometry.hpp"

namespace ncrf {

// Dense signed-distance grid, negative inside, meters. Values are stored
// x-fastest to match the on-disk cache layout.
struct SdfGrid {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0;
  std::array<int, 3> resolution{0, 0, 0};
  std::vector<double> values;

  size_t index(int x, int y, int z) const {
    return (size_t(z) * resolution[1] + y) * resolution[0] + x;
  }
  Vec3 grid_point(int x, int y, int z) const { return origin + voxel_size * Vec3(x, y, z); }
  Aabb bounds() const {
    Aabb b;
    b.expand(origin);
    b.expand(origin + voxel_size *
                          Vec3(resolution[0] - 1, resolution[1] - 1, resolution[2] - 1));
    return b;
  }
};

// Trilinear interpolation; queries outside the grid are clamped to the
// boundary and offset by the clamp distance, which keeps the field continuous
// and positive away from the box.
double signed_distance(const Vec3& p, const SdfGrid& grid);

// d/dp of signed_distance at p (constant within each trilinear cell).
Vec3 signed_distance_gradient(const Vec3& p, const SdfGrid& grid);

// Samples an analytic SDF over the (already padded) bounds.
SdfGrid build_sdf_grid(const std::function<double(const Vec3&)>& sdf, const Aabb& bounds,
                       int resolution);

// Nearest-triangle distance signed by the winding number; bounds are the mesh
// box padded by 10% of its diagonal.
SdfGrid build_sdf_grid(const TriangleMesh& mesh, int resolution = 64);

// Binary cache: "NSDF", u32 version=1, origin 3xf64, voxel f64, resolution
// 3xu32, then f32 values in x-fastest order.
void save_sdf_grid(const std::string& path, const SdfGrid& grid);
SdfGrid load_sdf_grid(const std::string& path);

// Analytic capsule: segment from a to b with the given radius.
double capsule_sdf(const Vec3& p, const Vec3& a, const Vec3& b, double radius);

}  // namespace ncrf
