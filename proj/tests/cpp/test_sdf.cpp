#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ncrf/sdf.hpp"
#include "test_util.hpp"

using namespace ncrf;

TEST_CASE("sphere grid values and clamped queries") {
  TriangleMesh sphere = make_icosphere(0.05, 3);
  SdfGrid grid = build_sdf_grid(sphere, 64);
  double tol = 1.5 * grid.voxel_size;
  CHECK(std::abs(signed_distance(Vec3(0, 0, 0), grid) - (-0.05)) < tol);
  CHECK(std::abs(signed_distance(Vec3(0.10, 0, 0), grid) - 0.05) < tol);
  // far outside the grid the clamp keeps values positive and growing
  double near = signed_distance(Vec3(0.2, 0, 0), grid);
  double far = signed_distance(Vec3(0.5, 0, 0), grid);
  CHECK(near > 0);
  CHECK(far > near);
}

TEST_CASE("grid values match the brute-force nearest-triangle oracle") {
  TriangleMesh mesh = make_icosphere(0.04, 2, Vec3(0.005, -0.01, 0.002));
  SdfGrid grid = build_sdf_grid(mesh, 64);
  WindingTree winding(mesh);
  Rng rng(21);
  double tol = 1.5 * grid.voxel_size;
  Aabb box = mesh.bounds().padded(0.004);
  for (int i = 0; i < 1000; ++i) {
    Vec3 p(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
           rng.uniform(box.lo.z(), box.hi.z()));
    double brute = 1e30;
    for (const auto& f : mesh.faces) {
      Vec3 cp = closest_point_on_triangle(p, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                          mesh.vertices[f[2]]);
      brute = std::min(brute, (cp - p).norm());
    }
    if (point_in_mesh(p, winding) <= 0) brute = -brute;
    CHECK(std::abs(signed_distance(p, grid) - brute) <= tol);
  }
}

TEST_CASE("signed distance never exceeds distance to sampled surface points") {
  TriangleMesh mesh = make_icosphere(0.05, 2);
  SdfGrid grid = build_sdf_grid(mesh, 64);
  SurfaceSample surf = sample_surface_points(mesh, 200, 3);
  Rng rng(17);
  double tol = 1.5 * grid.voxel_size;
  for (int i = 0; i < 200; ++i) {
    Vec3 p(rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08));
    double sd = signed_distance(p, grid);
    for (int s = 0; s < 10; ++s)
      CHECK(sd <= (p - surf.points[(i * 10 + s) % 200]).norm() + tol);
  }
}

TEST_CASE("NSDF cache round trip") {
  namespace fs = std::filesystem;
  TriangleMesh mesh = make_icosphere(0.03, 1);
  SdfGrid grid = build_sdf_grid(mesh, 24);
  std::string path = (fs::temp_directory_path() / "ncrf_test.nsdf").string();
  save_sdf_grid(path, grid);
  SdfGrid back = load_sdf_grid(path);
  CHECK(back.resolution == grid.resolution);
  CHECK(back.voxel_size == doctest::Approx(grid.voxel_size));
  CHECK(back.origin.isApprox(grid.origin, 1e-12));
  for (size_t i = 0; i < grid.values.size(); ++i)
    CHECK(back.values[i] == doctest::Approx(grid.values[i]).epsilon(1e-6));
}

TEST_CASE("capsule sdf") {
  Vec3 a(0, 0, 0), b(0.1, 0, 0);
  CHECK(capsule_sdf(Vec3(0.05, 0.02, 0), a, b, 0.01) == doctest::Approx(0.01));
  CHECK(capsule_sdf(Vec3(0.05, 0, 0), a, b, 0.01) == doctest::Approx(-0.01));
  CHECK(capsule_sdf(Vec3(0.15, 0, 0), a, b, 0.01) == doctest::Approx(0.04));
}
