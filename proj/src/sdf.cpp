#include "ncrf/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ncrf {

namespace {

struct CellLookup {
  int ix, iy, iz;     // base corner
  double fx, fy, fz;  // fractions in [0,1]
  double clamp_distance;
};

CellLookup locate(const Vec3& p, const SdfGrid& grid) {
  Vec3 local = (p - grid.origin) / grid.voxel_size;
  Vec3 clamped = local;
  for (int k = 0; k < 3; ++k)
    clamped[k] = std::clamp(local[k], 0.0, double(grid.resolution[k] - 1));
  CellLookup c;
  c.clamp_distance = (local - clamped).norm() * grid.voxel_size;
  c.ix = std::min(int(clamped.x()), grid.resolution[0] - 2);
  c.iy = std::min(int(clamped.y()), grid.resolution[1] - 2);
  c.iz = std::min(int(clamped.z()), grid.resolution[2] - 2);
  c.ix = std::max(c.ix, 0);
  c.iy = std::max(c.iy, 0);
  c.iz = std::max(c.iz, 0);
  c.fx = clamped.x() - c.ix;
  c.fy = clamped.y() - c.iy;
  c.fz = clamped.z() - c.iz;
  return c;
}

}  // namespace

double signed_distance(const Vec3& p, const SdfGrid& grid) {
  CellLookup c = locate(p, grid);
  auto v = [&](int dx, int dy, int dz) { return grid.values[grid.index(c.ix + dx, c.iy + dy, c.iz + dz)]; };
  double c00 = v(0, 0, 0) * (1 - c.fx) + v(1, 0, 0) * c.fx;
  double c10 = v(0, 1, 0) * (1 - c.fx) + v(1, 1, 0) * c.fx;
  double c01 = v(0, 0, 1) * (1 - c.fx) + v(1, 0, 1) * c.fx;
  double c11 = v(0, 1, 1) * (1 - c.fx) + v(1, 1, 1) * c.fx;
  double c0 = c00 * (1 - c.fy) + c10 * c.fy;
  double c1 = c01 * (1 - c.fy) + c11 * c.fy;
  return c0 * (1 - c.fz) + c1 * c.fz + c.clamp_distance;
}

Vec3 signed_distance_gradient(const Vec3& p, const SdfGrid& grid) {
  CellLookup c = locate(p, grid);
  auto v = [&](int dx, int dy, int dz) { return grid.values[grid.index(c.ix + dx, c.iy + dy, c.iz + dz)]; };
  double fx = c.fx, fy = c.fy, fz = c.fz;
  double gx = ((v(1, 0, 0) - v(0, 0, 0)) * (1 - fy) + (v(1, 1, 0) - v(0, 1, 0)) * fy) * (1 - fz) +
              ((v(1, 0, 1) - v(0, 0, 1)) * (1 - fy) + (v(1, 1, 1) - v(0, 1, 1)) * fy) * fz;
  double gy = ((v(0, 1, 0) - v(0, 0, 0)) * (1 - fx) + (v(1, 1, 0) - v(1, 0, 0)) * fx) * (1 - fz) +
              ((v(0, 1, 1) - v(0, 0, 1)) * (1 - fx) + (v(1, 1, 1) - v(1, 0, 1)) * fx) * fz;
  double gz = ((v(0, 0, 1) - v(0, 0, 0)) * (1 - fx) + (v(1, 0, 1) - v(1, 0, 0)) * fx) * (1 - fy) +
              ((v(0, 1, 1) - v(0, 1, 0)) * (1 - fx) + (v(1, 1, 1) - v(1, 1, 0)) * fx) * fy;
  return Vec3(gx, gy, gz) / grid.voxel_size;
}

SdfGrid build_sdf_grid(const std::function<double(const Vec3&)>& sdf, const Aabb& bounds,
                       int resolution) {
  SdfGrid grid;
  grid.origin = bounds.lo;
  Vec3 extent = bounds.hi - bounds.lo;
  grid.voxel_size = extent.maxCoeff() / (resolution - 1);
  for (int k = 0; k < 3; ++k)
    grid.resolution[k] = std::max(2, int(std::ceil(extent[k] / grid.voxel_size)) + 1);
  grid.values.resize(size_t(grid.resolution[0]) * grid.resolution[1] * grid.resolution[2]);
  for (int z = 0; z < grid.resolution[2]; ++z)
    for (int y = 0; y < grid.resolution[1]; ++y)
      for (int x = 0; x < grid.resolution[0]; ++x)
        grid.values[grid.index(x, y, z)] = sdf(grid.grid_point(x, y, z));
  return grid;
}

SdfGrid build_sdf_grid(const TriangleMesh& mesh, int resolution) {
  AabbTree closest(mesh);
  WindingTree winding(mesh);
  Aabb box = mesh.bounds();
  double pad = 0.1 * (box.hi - box.lo).norm();
  auto sd = [&](const Vec3& p) {
    double d = closest.closest(p).distance;
    return winding.inside(p) ? -d : d;
  };
  return build_sdf_grid(sd, box.padded(pad), resolution);
}

void save_sdf_grid(const std::string& path, const SdfGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write SDF cache: " + path);
  out.write("NSDF", 4);
  uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  double origin[3] = {grid.origin.x(), grid.origin.y(), grid.origin.z()};
  out.write(reinterpret_cast<const char*>(origin), 24);
  out.write(reinterpret_cast<const char*>(&grid.voxel_size), 8);
  uint32_t res[3] = {uint32_t(grid.resolution[0]), uint32_t(grid.resolution[1]),
                     uint32_t(grid.resolution[2])};
  out.write(reinterpret_cast<const char*>(res), 12);
  for (double v : grid.values) {
    float f = float(v);
    out.write(reinterpret_cast<const char*>(&f), 4);
  }
}

SdfGrid load_sdf_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open SDF cache: " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "NSDF", 4) != 0) throw DataError("bad SDF cache magic: " + path);
  uint32_t version;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1) throw DataError("unsupported SDF cache version in " + path);
  SdfGrid grid;
  double origin[3];
  in.read(reinterpret_cast<char*>(origin), 24);
  grid.origin = Vec3(origin[0], origin[1], origin[2]);
  in.read(reinterpret_cast<char*>(&grid.voxel_size), 8);
  uint32_t res[3];
  in.read(reinterpret_cast<char*>(res), 12);
  for (int k = 0; k < 3; ++k) grid.resolution[k] = int(res[k]);
  size_t n = size_t(res[0]) * res[1] * res[2];
  grid.values.resize(n);
  for (size_t i = 0; i < n; ++i) {
    float f;
    in.read(reinterpret_cast<char*>(&f), 4);
    grid.values[i] = f;
  }
  if (!in) throw DataError("truncated SDF cache: " + path);
  return grid;
}

double capsule_sdf(const Vec3& p, const Vec3& a, const Vec3& b, double radius) {
  Vec3 ab = b - a;
  double t = ab.squaredNorm() > 0 ? std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm() - radius;
}

}  // namespace ncrf
