#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ncrf/common.hpp"
#include "ncrf/rng.hpp"

namespace ncrf {

// SE(3) element. The quaternion is renormalized on every construction and
// composition so downstream code can rely on |q| = 1 within 1e-9.
struct RigidTransform {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  RigidTransform() = default;
  RigidTransform(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    Quat qi = rotation.conjugate();
    return RigidTransform(qi, -(qi * translation));
  }

  // (a * b)(x) == a(b(x))
  friend RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
    return RigidTransform(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
  }
};

struct Aabb {
  Vec3 lo = Vec3::Constant(1e30);
  Vec3 hi = Vec3::Constant(-1e30);

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void expand(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Aabb padded(double pad) const {
    Aabb b;
    b.lo = lo - Vec3::Constant(pad);
    b.hi = hi + Vec3::Constant(pad);
    return b;
  }
  bool valid() const { return (hi.array() >= lo.array()).all(); }
};

std::optional<Aabb> aabb_intersection(const Aabb& a, const Aabb& b);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::string id;  // "hand" or "object"

  Aabb bounds() const;
  double face_area(int f) const;
  Vec3 face_normal(int f) const;  // unit
  double total_area() const;
  TriangleMesh transformed(const RigidTransform& xf) const;

  // Throws DataError unless watertight (every edge shared by exactly two
  // opposingly-oriented faces), outward oriented (signed volume > 0) and free
  // of degenerate faces (area > 1e-12).
  void validate() const;
};

// Mesh I/O: ASCII OBJ (v/f only) and binary little-endian PLY.
TriangleMesh load_obj(const std::string& path);
void save_obj(const std::string& path, const TriangleMesh& mesh);
TriangleMesh load_ply(const std::string& path);
void save_ply(const std::string& path, const TriangleMesh& mesh,
              const std::vector<double>* contact = nullptr);
// Reads the optional per-vertex "contact" property back, if present.
std::vector<double> load_ply_contact(const std::string& path);

TriangleMesh load_mesh(const std::string& path);  // dispatch on extension

// Primitive generators (all watertight, outward oriented, sizes in meters).
TriangleMesh make_icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero());
TriangleMesh make_box(const Vec3& half_extents, const Vec3& center = Vec3::Zero());
TriangleMesh make_cylinder(double radius, double height, int segments = 48,
                           const Vec3& center = Vec3::Zero());

// Hierarchy over triangles answering exact generalized winding numbers via a
// first-order dipole far field (exact solid angles near the query). Sign is
// exact for watertight meshes off the surface.
class WindingTree {
 public:
  explicit WindingTree(const TriangleMesh& mesh);

  double winding_number(const Vec3& q) const;
  bool inside(const Vec3& q) const { return winding_number(q) > 0.5; }

  // Brute-force sum over all triangles; validation only.
  double winding_number_exact(const Vec3& q) const;

 private:
  struct Node {
    Aabb box;
    Vec3 centroid = Vec3::Zero();   // area-weighted
    Vec3 dipole = Vec3::Zero();     // sum of area-weighted normals
    double radius = 0;              // max vertex distance from centroid
    int left = -1, right = -1;      // children, or
    int begin = 0, end = 0;         // triangle range when leaf
  };
  double query(int node, const Vec3& q) const;
  int build(int begin, int end);

  const TriangleMesh* mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

// Axis-aligned BVH for nearest-triangle queries.
class AabbTree {
 public:
  explicit AabbTree(const TriangleMesh& mesh);

  struct Hit {
    double distance = 0;
    int triangle = -1;
    Vec3 point = Vec3::Zero();  // closest point on the mesh
  };
  Hit closest(const Vec3& q) const;

 private:
  struct Node {
    Aabb box;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };
  int build(int begin, int end);
  void search(int node, const Vec3& q, Hit& best) const;

  const TriangleMesh* mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// <= 0 inside or on the surface, > 0 outside (0.5 - winding number).
double point_in_mesh(const Vec3& p, const WindingTree& tree);
double point_in_mesh(const Vec3& p, const TriangleMesh& mesh);

struct SurfaceSample {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<int> face_ids;
};

// Area-weighted uniform surface sampling, deterministic in the seed.
SurfaceSample sample_surface_points(const TriangleMesh& mesh, int n, uint64_t seed);

// Voxel-counting intersection volume in cm^3. voxel is the edge length in
// meters (default 1 mm).
double intersection_volume(const TriangleMesh& a, const TriangleMesh& b, double voxel = 1e-3);
double intersection_volume(const WindingTree& a, const Aabb& bounds_a, const WindingTree& b,
                           const Aabb& bounds_b, double voxel);

}  // namespace ncrf
