#include "ncrf/geometry.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace ncrf {

std::optional<Aabb> aabb_intersection(const Aabb& a, const Aabb& b) {
  Aabb r;
  r.lo = a.lo.cwiseMax(b.lo);
  r.hi = a.hi.cwiseMin(b.hi);
  if (!r.valid()) return std::nullopt;
  return r;
}

// ---------------------------------------------------------------------------
// TriangleMesh

Aabb TriangleMesh::bounds() const {
  Aabb b;
  for (const auto& v : vertices) b.expand(v);
  return b;
}

double TriangleMesh::face_area(int f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

Vec3 TriangleMesh::face_normal(int f) const {
  const auto& t = faces[f];
  Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
  double len = n.norm();
  return len > 0 ? Vec3(n / len) : Vec3(0, 0, 1);
}

double TriangleMesh::total_area() const {
  double a = 0;
  for (size_t f = 0; f < faces.size(); ++f) a += face_area(int(f));
  return a;
}

TriangleMesh TriangleMesh::transformed(const RigidTransform& xf) const {
  TriangleMesh out = *this;
  for (auto& v : out.vertices) v = xf.apply(v);
  return out;
}

void TriangleMesh::validate() const {
  if (vertices.empty() || faces.empty()) throw DataError("mesh '" + id + "' is empty");
  std::map<std::pair<int, int>, int> directed;
  double volume6 = 0;
  for (size_t f = 0; f < faces.size(); ++f) {
    const auto& t = faces[f];
    for (int k = 0; k < 3; ++k) {
      int a = t[k], b = t[(k + 1) % 3];
      if (a < 0 || b < 0 || a >= int(vertices.size()) || b >= int(vertices.size()))
        throw DataError("mesh '" + id + "': face index out of range");
      if (a == b) throw DataError("mesh '" + id + "': face with repeated vertex");
      directed[{a, b}]++;
    }
    if (face_area(int(f)) <= 1e-12)
      throw DataError("mesh '" + id + "': degenerate face " + std::to_string(f));
    volume6 += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
  }
  for (const auto& [edge, count] : directed) {
    auto rev = directed.find({edge.second, edge.first});
    if (count != 1 || rev == directed.end() || rev->second != 1)
      throw DataError("mesh '" + id + "' is not watertight");
  }
  if (volume6 <= 0) throw DataError("mesh '" + id + "': inward-facing orientation");
}

// ---------------------------------------------------------------------------
// I/O

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open OBJ: " + path);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) {
      std::istringstream ss(line.substr(2));
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      if (!ss) throw DataError("bad vertex line in " + path);
      mesh.vertices.push_back(v);
    } else if (line.rfind("f ", 0) == 0) {
      std::istringstream ss(line.substr(2));
      std::array<int, 3> f{};
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        ss >> tok;
        if (tok.empty()) throw DataError("bad face line in " + path);
        f[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write OBJ: " + path);
  out.precision(12);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
}

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_ply(const std::string& path, const TriangleMesh& mesh,
              const std::vector<double>* contact) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write PLY: " + path);
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (contact) out << "property double contact\n";
  out << "element face " << mesh.faces.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    write_raw(out, mesh.vertices[i].x());
    write_raw(out, mesh.vertices[i].y());
    write_raw(out, mesh.vertices[i].z());
    if (contact) write_raw(out, (*contact)[i]);
  }
  for (const auto& f : mesh.faces) {
    write_raw<uint8_t>(out, 3);
    write_raw<int32_t>(out, f[0]);
    write_raw<int32_t>(out, f[1]);
    write_raw<int32_t>(out, f[2]);
  }
}

namespace {

struct PlyLayout {
  size_t n_vertices = 0, n_faces = 0;
  int vertex_stride = 0;                  // bytes
  int xyz_offset = -1, contact_offset = -1;
  bool xyz_float = false, contact_float = false;
};

PlyLayout parse_ply_header(std::istream& in, const std::string& path) {
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw DataError("not a PLY file: " + path);
  std::getline(in, line);
  if (line.find("binary_little_endian") == std::string::npos)
    throw DataError("only binary little-endian PLY supported: " + path);
  PlyLayout lay;
  std::string element;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "comment") continue;
    if (tok == "element") {
      std::string name;
      size_t count;
      ss >> name >> count;
      element = name;
      if (name == "vertex") lay.n_vertices = count;
      if (name == "face") lay.n_faces = count;
    } else if (tok == "property" && element == "vertex") {
      std::string type, name;
      ss >> type >> name;
      int size = (type == "float" || type == "float32") ? 4
                 : (type == "double" || type == "float64") ? 8
                                                           : -1;
      if (size < 0) throw DataError("unsupported vertex property type in " + path);
      if (name == "x") {
        lay.xyz_offset = lay.vertex_stride;
        lay.xyz_float = size == 4;
      }
      if (name == "contact") {
        lay.contact_offset = lay.vertex_stride;
        lay.contact_float = size == 4;
      }
      lay.vertex_stride += size;
    }
  }
  if (lay.xyz_offset != 0 && lay.xyz_offset != -1)
    throw DataError("PLY xyz must be the leading properties: " + path);
  return lay;
}

}  // namespace

TriangleMesh load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open PLY: " + path);
  PlyLayout lay = parse_ply_header(in, path);
  TriangleMesh mesh;
  std::vector<char> buf(lay.vertex_stride);
  for (size_t i = 0; i < lay.n_vertices; ++i) {
    in.read(buf.data(), lay.vertex_stride);
    Vec3 v;
    if (lay.xyz_float) {
      float xyz[3];
      std::memcpy(xyz, buf.data(), 12);
      v = Vec3(xyz[0], xyz[1], xyz[2]);
    } else {
      double xyz[3];
      std::memcpy(xyz, buf.data(), 24);
      v = Vec3(xyz[0], xyz[1], xyz[2]);
    }
    mesh.vertices.push_back(v);
  }
  for (size_t i = 0; i < lay.n_faces; ++i) {
    uint8_t n = read_raw<uint8_t>(in);
    if (n != 3) throw DataError("non-triangular PLY face in " + path);
    std::array<int, 3> f{};
    for (int k = 0; k < 3; ++k) f[k] = read_raw<int32_t>(in);
    mesh.faces.push_back(f);
  }
  if (!in) throw DataError("truncated PLY: " + path);
  return mesh;
}

std::vector<double> load_ply_contact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open PLY: " + path);
  PlyLayout lay = parse_ply_header(in, path);
  if (lay.contact_offset < 0) throw DataError("PLY has no contact property: " + path);
  std::vector<double> contact(lay.n_vertices);
  std::vector<char> buf(lay.vertex_stride);
  for (size_t i = 0; i < lay.n_vertices; ++i) {
    in.read(buf.data(), lay.vertex_stride);
    if (lay.contact_float) {
      float c;
      std::memcpy(&c, buf.data() + lay.contact_offset, 4);
      contact[i] = c;
    } else {
      std::memcpy(&contact[i], buf.data() + lay.contact_offset, 8);
    }
  }
  return contact;
}

TriangleMesh load_mesh(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "obj") return load_obj(path);
  if (ext == "ply") return load_ply(path);
  throw DataError("unknown mesh extension: " + path);
}

// ---------------------------------------------------------------------------
// Primitives

TriangleMesh make_icosphere(double radius, int subdivisions, const Vec3& center) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t},   {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1},   {-t, 0, -1}, {-t, 0, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},   {9, 8, 1}};
  for (auto& v : verts) v.normalize();

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Vec3 m = (verts[a] + verts[b]).normalized();
      verts.push_back(m);
      int idx = int(verts.size()) - 1;
      midpoint[key] = idx;
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }

  TriangleMesh mesh;
  mesh.vertices.reserve(verts.size());
  for (const auto& v : verts) mesh.vertices.push_back(center + radius * v);
  mesh.faces = std::move(faces);
  return mesh;
}

TriangleMesh make_box(const Vec3& he, const Vec3& center) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i)
    mesh.vertices.push_back(center + Vec3((i & 1) ? he.x() : -he.x(), (i & 2) ? he.y() : -he.y(),
                                          (i & 4) ? he.z() : -he.z()));
  // quads as index pairs, outward oriented
  const int quads[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  for (const auto& q : quads) {
    mesh.faces.push_back({q[0], q[1], q[2]});
    mesh.faces.push_back({q[0], q[2], q[3]});
  }
  return mesh;
}

TriangleMesh make_cylinder(double radius, double height, int segments, const Vec3& center) {
  TriangleMesh mesh;
  const double h2 = height / 2;
  for (int i = 0; i < segments; ++i) {
    double a = 2.0 * M_PI * i / segments;
    Vec3 rim(radius * std::cos(a), radius * std::sin(a), 0);
    mesh.vertices.push_back(center + rim + Vec3(0, 0, -h2));
    mesh.vertices.push_back(center + rim + Vec3(0, 0, h2));
  }
  int bot_c = int(mesh.vertices.size());
  mesh.vertices.push_back(center + Vec3(0, 0, -h2));
  int top_c = int(mesh.vertices.size());
  mesh.vertices.push_back(center + Vec3(0, 0, h2));
  for (int i = 0; i < segments; ++i) {
    int j = (i + 1) % segments;
    int b0 = 2 * i, t0 = 2 * i + 1, b1 = 2 * j, t1 = 2 * j + 1;
    mesh.faces.push_back({b0, b1, t1});
    mesh.faces.push_back({b0, t1, t0});
    mesh.faces.push_back({bot_c, b1, b0});
    mesh.faces.push_back({top_c, t0, t1});
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// Winding numbers

namespace {

// van Oosterom & Strackee solid angle of triangle (a,b,c) seen from q.
inline double solid_angle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& q) {
  Vec3 va = a - q, vb = b - q, vc = c - q;
  double la = va.norm(), lb = vb.norm(), lc = vc.norm();
  double num = va.dot(vb.cross(vc));
  double den = la * lb * lc + va.dot(vb) * lc + vb.dot(vc) * la + vc.dot(va) * lb;
  return 2.0 * std::atan2(num, den);
}

constexpr double kFourPi = 4.0 * M_PI;
constexpr double kDipoleBeta = 2.3;  // open clusters closer than beta * radius
constexpr int kWindingLeaf = 16;

}  // namespace

WindingTree::WindingTree(const TriangleMesh& mesh) : mesh_(&mesh) {
  order_.resize(mesh.faces.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * mesh.faces.size() / kWindingLeaf + 4);
  if (!mesh.faces.empty()) build(0, int(mesh.faces.size()));
}

int WindingTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  double total_area = 0;
  Vec3 weighted = Vec3::Zero();
  for (int i = begin; i < end; ++i) {
    const auto& f = mesh_->faces[order_[i]];
    double area = mesh_->face_area(order_[i]);
    Vec3 c = (mesh_->vertices[f[0]] + mesh_->vertices[f[1]] + mesh_->vertices[f[2]]) / 3.0;
    node.dipole += area * mesh_->face_normal(order_[i]);
    weighted += area * c;
    total_area += area;
    for (int k = 0; k < 3; ++k) node.box.expand(mesh_->vertices[f[k]]);
  }
  node.centroid = total_area > 0 ? Vec3(weighted / total_area) : node.box.center();
  for (int i = begin; i < end; ++i) {
    const auto& f = mesh_->faces[order_[i]];
    for (int k = 0; k < 3; ++k)
      node.radius = std::max(node.radius, (mesh_->vertices[f[k]] - node.centroid).norm());
  }

  int index = int(nodes_.size());
  nodes_.push_back(node);
  if (end - begin > kWindingLeaf) {
    Vec3 extent = node.box.hi - node.box.lo;
    int axis = 0;
    if (extent.y() > extent.x()) axis = 1;
    if (extent.z() > extent[axis]) axis = 2;
    int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int fa, int fb) {
                       auto cen = [&](int f) {
                         const auto& t = mesh_->faces[f];
                         return (mesh_->vertices[t[0]][axis] + mesh_->vertices[t[1]][axis] +
                                 mesh_->vertices[t[2]][axis]) / 3.0;
                       };
                       return cen(fa) < cen(fb);
                     });
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[index].left = left;
    nodes_[index].right = right;
  }
  return index;
}

double WindingTree::query(int idx, const Vec3& q) const {
  const Node& node = nodes_[idx];
  Vec3 d = q - node.centroid;
  double dist = d.norm();
  if (dist > kDipoleBeta * node.radius && node.radius > 0) {
    return node.dipole.dot(d) / (kFourPi * dist * dist * dist);
  }
  if (node.left >= 0) return query(node.left, q) + query(node.right, q);
  double w = 0;
  for (int i = node.begin; i < node.end; ++i) {
    const auto& f = mesh_->faces[order_[i]];
    w += solid_angle(mesh_->vertices[f[0]], mesh_->vertices[f[1]], mesh_->vertices[f[2]], q);
  }
  return w / kFourPi;
}

double WindingTree::winding_number(const Vec3& q) const {
  if (nodes_.empty()) return 0;
  return query(0, q);
}

double WindingTree::winding_number_exact(const Vec3& q) const {
  double w = 0;
  for (const auto& f : mesh_->faces)
    w += solid_angle(mesh_->vertices[f[0]], mesh_->vertices[f[1]], mesh_->vertices[f[2]], q);
  return w / kFourPi;
}

double point_in_mesh(const Vec3& p, const WindingTree& tree) {
  return 0.5 - tree.winding_number(p);
}

double point_in_mesh(const Vec3& p, const TriangleMesh& mesh) {
  WindingTree tree(mesh);
  return point_in_mesh(p, tree);
}

// ---------------------------------------------------------------------------
// Nearest-triangle BVH

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  Vec3 bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  Vec3 cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

AabbTree::AabbTree(const TriangleMesh& mesh) : mesh_(&mesh) {
  order_.resize(mesh.faces.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!mesh.faces.empty()) build(0, int(mesh.faces.size()));
}

int AabbTree::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  for (int i = begin; i < end; ++i)
    for (int k = 0; k < 3; ++k) node.box.expand(mesh_->vertices[mesh_->faces[order_[i]][k]]);
  int index = int(nodes_.size());
  nodes_.push_back(node);
  if (end - begin > 8) {
    Vec3 extent = node.box.hi - node.box.lo;
    int axis = 0;
    if (extent.y() > extent.x()) axis = 1;
    if (extent.z() > extent[axis]) axis = 2;
    int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int fa, int fb) {
                       auto cen = [&](int f) {
                         const auto& t = mesh_->faces[f];
                         return (mesh_->vertices[t[0]][axis] + mesh_->vertices[t[1]][axis] +
                                 mesh_->vertices[t[2]][axis]) / 3.0;
                       };
                       return cen(fa) < cen(fb);
                     });
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[index].left = left;
    nodes_[index].right = right;
  }
  return index;
}

namespace {
double aabb_distance(const Aabb& box, const Vec3& q) {
  Vec3 d = (box.lo - q).cwiseMax(q - box.hi).cwiseMax(0.0);
  return d.norm();
}
}  // namespace

void AabbTree::search(int idx, const Vec3& q, Hit& best) const {
  const Node& node = nodes_[idx];
  if (aabb_distance(node.box, q) >= best.distance) return;
  if (node.left < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const auto& f = mesh_->faces[order_[i]];
      Vec3 cp = closest_point_on_triangle(q, mesh_->vertices[f[0]], mesh_->vertices[f[1]],
                                          mesh_->vertices[f[2]]);
      double d = (cp - q).norm();
      if (d < best.distance) {
        best.distance = d;
        best.triangle = order_[i];
        best.point = cp;
      }
    }
    return;
  }
  // visit the closer child first
  double dl = aabb_distance(nodes_[node.left].box, q);
  double dr = aabb_distance(nodes_[node.right].box, q);
  if (dl < dr) {
    search(node.left, q, best);
    search(node.right, q, best);
  } else {
    search(node.right, q, best);
    search(node.left, q, best);
  }
}

AabbTree::Hit AabbTree::closest(const Vec3& q) const {
  Hit best;
  best.distance = 1e30;
  if (!nodes_.empty()) search(0, q, best);
  return best;
}

// ---------------------------------------------------------------------------
// Surface sampling and intersection volume

SurfaceSample sample_surface_points(const TriangleMesh& mesh, int n, uint64_t seed) {
  if (mesh.faces.empty()) throw DataError("sample_surface_points: empty mesh");
  if (n < 1) throw DataError("sample_surface_points: n must be >= 1");
  std::vector<double> cumulative(mesh.faces.size());
  double acc = 0;
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    acc += mesh.face_area(int(f));
    cumulative[f] = acc;
  }
  Rng rng(seed);
  SurfaceSample out;
  out.points.reserve(n);
  out.normals.reserve(n);
  out.face_ids.reserve(n);
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform() * acc;
    int f = int(std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    f = std::min(f, int(mesh.faces.size()) - 1);
    double r1 = std::sqrt(rng.uniform());
    double r2 = rng.uniform();
    const auto& t = mesh.faces[f];
    Vec3 p = (1 - r1) * mesh.vertices[t[0]] + r1 * (1 - r2) * mesh.vertices[t[1]] +
             r1 * r2 * mesh.vertices[t[2]];
    out.points.push_back(p);
    out.normals.push_back(mesh.face_normal(f));
    out.face_ids.push_back(f);
  }
  return out;
}

double intersection_volume(const WindingTree& a, const Aabb& bounds_a, const WindingTree& b,
                           const Aabb& bounds_b, double voxel) {
  if (voxel <= 0) throw DataError("intersection_volume: voxel must be > 0");
  auto overlap = aabb_intersection(bounds_a, bounds_b);
  if (!overlap) return 0.0;
  Vec3 lo = overlap->lo, hi = overlap->hi;
  long count = 0;
  int nx = std::max(1, int(std::ceil((hi.x() - lo.x()) / voxel)));
  int ny = std::max(1, int(std::ceil((hi.y() - lo.y()) / voxel)));
  int nz = std::max(1, int(std::ceil((hi.z() - lo.z()) / voxel)));
  for (int iz = 0; iz < nz; ++iz)
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        Vec3 c = lo + voxel * Vec3(ix + 0.5, iy + 0.5, iz + 0.5);
        if (a.inside(c) && b.inside(c)) ++count;
      }
  return double(count) * voxel * voxel * voxel * 1e6;  // m^3 -> cm^3
}

double intersection_volume(const TriangleMesh& a, const TriangleMesh& b, double voxel) {
  WindingTree ta(a), tb(b);
  return intersection_volume(ta, a.bounds(), tb, b.bounds(), voxel);
}

}  // namespace ncrf
