#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ncrf/geometry.hpp"
#include "test_util.hpp"

using namespace ncrf;

TEST_CASE("rigid transform composition and inverse") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    RigidTransform a(test::random_quat(rng), Vec3(rng.normal(), rng.normal(), rng.normal()));
    RigidTransform b(test::random_quat(rng), Vec3(rng.normal(), rng.normal(), rng.normal()));
    RigidTransform c(test::random_quat(rng), Vec3(rng.normal(), rng.normal(), rng.normal()));
    Vec3 p(rng.normal(), rng.normal(), rng.normal());
    CHECK(((a * b) * c).apply(p).isApprox((a * (b * c)).apply(p), 1e-9));
    CHECK((a.inverse() * a).apply(p).isApprox(p, 1e-9));
    CHECK(std::abs((a * b).rotation.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("point_in_mesh on the unit cube") {
  TriangleMesh cube = make_box(Vec3(0.5, 0.5, 0.5));
  cube.validate();
  CHECK(point_in_mesh(Vec3(0, 0, 0), cube) <= 0);
  CHECK(point_in_mesh(Vec3(2, 0, 0), cube) > 0);
}

TEST_CASE("winding tree agrees with brute-force winding") {
  TriangleMesh mesh = make_icosphere(0.05, 3, Vec3(0.01, -0.02, 0.03));
  WindingTree tree(mesh);
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    Vec3 p(rng.uniform(-0.08, 0.1), rng.uniform(-0.1, 0.08), rng.uniform(-0.05, 0.1));
    double fast = tree.winding_number(p);
    double exact = tree.winding_number_exact(p);
    CHECK(std::abs(fast - exact) < 0.01);
  }
}

TEST_CASE("point_in_mesh matches the multi-ray parity oracle") {
  TriangleMesh mesh = make_icosphere(0.4, 2);
  // perturb into a less symmetric shape
  Rng shape_rng(3);
  for (auto& v : mesh.vertices) v *= 1.0 + 0.2 * shape_rng.uniform();
  mesh.validate();
  WindingTree tree(mesh);
  Rng rng(1234);
  AabbTree closest(mesh);
  int checked = 0;
  for (int i = 0; i < 10000; ++i) {
    Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (closest.closest(p).distance < 1e-6) continue;
    ++checked;
    bool winding_says = point_in_mesh(p, tree) <= 0;
    bool parity_says = test::parity_inside(p, mesh, rng);
    CHECK(winding_says == parity_says);
  }
  CHECK(checked > 9900);
}

TEST_CASE("point_in_mesh sign survives joint rigid transforms") {
  TriangleMesh mesh = make_icosphere(0.3, 1);
  WindingTree tree(mesh);
  Rng rng(5);
  int flips = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 p(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    RigidTransform xf(test::random_quat(rng),
                      Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.2);
    TriangleMesh moved = mesh.transformed(xf);
    WindingTree moved_tree(moved);
    bool before = point_in_mesh(p, tree) <= 0;
    bool after = point_in_mesh(xf.apply(p), moved_tree) <= 0;
    if (before != after) ++flips;
  }
  CHECK(flips == 0);
}

TEST_CASE("surface sampling") {
  SUBCASE("single triangle stays inside the face") {
    TriangleMesh tri;
    tri.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    tri.faces = {{0, 1, 2}};
    SurfaceSample s = sample_surface_points(tri, 1, 42);
    const Vec3& p = s.points[0];
    CHECK(p.z() == doctest::Approx(0.0));
    CHECK(p.x() >= 0);
    CHECK(p.y() >= 0);
    CHECK(p.x() + p.y() <= 1.0 + 1e-12);
  }
  SUBCASE("unit cube face groups are area-proportional within 2%") {
    TriangleMesh cube = make_box(Vec3(0.5, 0.5, 0.5));
    SurfaceSample s = sample_surface_points(cube, 60000, 9);
    // 6 equal-area sides -> expect 10000 each
    std::array<int, 6> counts{};
    for (int f : s.face_ids) counts[f / 2] += 1;
    for (int side = 0; side < 6; ++side)
      CHECK(std::abs(counts[side] - 10000) < 0.02 * 60000);
  }
  SUBCASE("deterministic under the seed") {
    TriangleMesh cube = make_box(Vec3(0.5, 0.5, 0.5));
    SurfaceSample a = sample_surface_points(cube, 100, 7);
    SurfaceSample b = sample_surface_points(cube, 100, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.points[i] == b.points[i]);
  }
  SUBCASE("empty mesh is rejected") {
    TriangleMesh empty;
    CHECK_THROWS_AS(sample_surface_points(empty, 1, 0), DataError);
  }
}

TEST_CASE("intersection volume") {
  SUBCASE("disjoint cubes") {
    TriangleMesh a = make_box(Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 0));
    TriangleMesh b = make_box(Vec3(0.5, 0.5, 0.5), Vec3(2, 0, 0));
    CHECK(intersection_volume(a, b, 1e-2) == 0.0);
  }
  SUBCASE("1 cm cube inside a 10 cm cube") {
    TriangleMesh small = make_box(Vec3(0.005, 0.005, 0.005));
    TriangleMesh big = make_box(Vec3(0.05, 0.05, 0.05));
    double iv = intersection_volume(small, big, 1e-3);
    CHECK(iv == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("sphere-sphere lens matches the analytic volume") {
    double r = 0.02, d = 0.03;
    TriangleMesh a = make_icosphere(r, 3, Vec3(0, 0, 0));
    TriangleMesh b = make_icosphere(r, 3, Vec3(d, 0, 0));
    double analytic = M_PI * (4 * r + d) * (2 * r - d) * (2 * r - d) / 12.0 * 1e6;
    double iv = intersection_volume(a, b, 1e-3);
    CHECK(iv == doctest::Approx(analytic).epsilon(0.05));
  }
  SUBCASE("symmetric and monotone under separation") {
    TriangleMesh a = make_icosphere(0.02, 2, Vec3(0, 0, 0));
    double prev = 1e30;
    for (double d : {0.0, 0.01, 0.02, 0.03, 0.045}) {
      TriangleMesh b = make_icosphere(0.02, 2, Vec3(d, 0, 0));
      double ab = intersection_volume(a, b, 1e-3);
      double ba = intersection_volume(b, a, 1e-3);
      CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
      CHECK(ab <= prev + 1e-9);
      prev = ab;
    }
  }
}

TEST_CASE("mesh I/O round trips") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "ncrf_geom_test";
  fs::create_directories(dir);
  TriangleMesh mesh = make_icosphere(0.07, 1, Vec3(0.01, 0.02, 0.03));
  mesh.id = "object";

  SUBCASE("obj") {
    std::string path = (dir / "m.obj").string();
    save_obj(path, mesh);
    TriangleMesh back = load_obj(path);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    REQUIRE(back.faces.size() == mesh.faces.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i)
      CHECK(back.vertices[i].isApprox(mesh.vertices[i], 1e-9));
  }
  SUBCASE("ply with contact scalars") {
    std::string path = (dir / "m.ply").string();
    std::vector<double> contact(mesh.vertices.size());
    for (size_t i = 0; i < contact.size(); ++i) contact[i] = double(i % 100) / 100.0;
    save_ply(path, mesh, &contact);
    TriangleMesh back = load_ply(path);
    std::vector<double> c2 = load_ply_contact(path);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    CHECK(back.faces == mesh.faces);
    for (size_t i = 0; i < contact.size(); ++i) CHECK(c2[i] == doctest::Approx(contact[i]));
  }
  SUBCASE("validation rejects a non-watertight mesh") {
    TriangleMesh broken = mesh;
    broken.faces.pop_back();
    CHECK_THROWS_AS(broken.validate(), DataError);
  }
  SUBCASE("validation rejects inverted orientation") {
    TriangleMesh flipped = mesh;
    for (auto& f : flipped.faces) std::swap(f[1], f[2]);
    CHECK_THROWS_AS(flipped.validate(), DataError);
  }
}
