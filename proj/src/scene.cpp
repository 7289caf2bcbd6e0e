#include "ncrf/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace ncrf {

namespace fs = std::filesystem;
using nlohmann::json;

void SceneSpec::validate() const {
  std::vector<std::string> bad;
  if (frames < 1) bad.push_back("frames");
  if (cameras < 1) bad.push_back("cameras");
  if (train_cameras < 1 || train_cameras > cameras) bad.push_back("train_cameras");
  if (image_size < 16) bad.push_back("image_size");
  if (focal_scale <= 0) bad.push_back("focal_scale");
  if (camera_distance <= 0) bad.push_back("camera_distance");
  if (capsule_radius <= 0) bad.push_back("capsule_radius");
  if (hand_march_resolution <= 0) bad.push_back("hand_march_resolution");
  if (object.primitive != "sphere" && object.primitive != "box" && object.primitive != "cylinder")
    bad.push_back("object.primitive");
  if (object.radius <= 0) bad.push_back("object.radius");
  if (object.height <= 0) bad.push_back("object.height");
  if ((object.half_extents.array() <= 0).any()) bad.push_back("object.half_extents");
  if (noise.joint_sigma < 0) bad.push_back("noise.joint_sigma");
  if (noise.translation_sigma < 0) bad.push_back("noise.translation_sigma");
  if (noise.rotation_sigma < 0) bad.push_back("noise.rotation_sigma");
  if (!bad.empty()) {
    std::string msg = "invalid scene spec fields:";
    for (const auto& f : bad) msg += " " + f;
    throw DataError(msg);
  }
}

std::string scene_spec_to_json(const SceneSpec& s) {
  json j;
  j["frames"] = s.frames;
  j["cameras"] = s.cameras;
  j["train_cameras"] = s.train_cameras;
  j["image_size"] = s.image_size;
  j["focal_scale"] = s.focal_scale;
  j["camera_distance"] = s.camera_distance;
  j["camera_elevation"] = s.camera_elevation;
  j["capsule_radius"] = s.capsule_radius;
  j["hand_march_resolution"] = s.hand_march_resolution;
  j["object"] = {{"primitive", s.object.primitive},
                 {"radius", s.object.radius},
                 {"height", s.object.height},
                 {"half_extents",
                  {s.object.half_extents.x(), s.object.half_extents.y(), s.object.half_extents.z()}},
                 {"center", {s.object.center.x(), s.object.center.y(), s.object.center.z()}}};
  j["noise"] = {{"joint_sigma", s.noise.joint_sigma},
                {"translation_sigma", s.noise.translation_sigma},
                {"rotation_sigma", s.noise.rotation_sigma}};
  j["bulge_amplitude"] = s.bulge_amplitude;
  j["bulge_width"] = s.bulge_width;
  j["touch_clearance"] = s.touch_clearance;
  return j.dump(2);
}

SceneSpec scene_spec_from_json(const std::string& text) {
  json j = json::parse(text);
  SceneSpec s;
  auto maybe = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  maybe("frames", s.frames);
  maybe("cameras", s.cameras);
  maybe("train_cameras", s.train_cameras);
  maybe("image_size", s.image_size);
  maybe("focal_scale", s.focal_scale);
  maybe("camera_distance", s.camera_distance);
  maybe("camera_elevation", s.camera_elevation);
  maybe("capsule_radius", s.capsule_radius);
  maybe("hand_march_resolution", s.hand_march_resolution);
  if (j.contains("object")) {
    const json& o = j.at("object");
    if (o.contains("primitive")) s.object.primitive = o.at("primitive");
    if (o.contains("radius")) s.object.radius = o.at("radius");
    if (o.contains("height")) s.object.height = o.at("height");
    if (o.contains("half_extents")) {
      auto& h = o.at("half_extents");
      s.object.half_extents = Vec3(h[0], h[1], h[2]);
    }
    if (o.contains("center")) {
      auto& c = o.at("center");
      s.object.center = Vec3(c[0], c[1], c[2]);
    }
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    if (n.contains("joint_sigma")) s.noise.joint_sigma = n.at("joint_sigma");
    if (n.contains("translation_sigma")) s.noise.translation_sigma = n.at("translation_sigma");
    if (n.contains("rotation_sigma")) s.noise.rotation_sigma = n.at("rotation_sigma");
  }
  maybe("bulge_amplitude", s.bulge_amplitude);
  maybe("bulge_width", s.bulge_width);
  maybe("touch_clearance", s.touch_clearance);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// hand skeleton

Skeleton make_hand_skeleton() {
  Skeleton skel;
  skel.bones.push_back({-1, Vec3::Zero(), Quat::Identity()});  // wrist
  const double spread[5] = {-0.85, -0.30, 0.0, 0.30, 0.62};    // rad about z
  const double palm_len[5] = {0.055, 0.085, 0.090, 0.085, 0.075};
  const double seg2[5] = {0.032, 0.040, 0.044, 0.040, 0.032};
  const double seg3[5] = {0.028, 0.030, 0.032, 0.030, 0.026};
  for (int f = 0; f < 5; ++f) {
    Quat rz(Eigen::AngleAxisd(spread[f], Vec3::UnitZ()));
    Vec3 dir = rz * Vec3::UnitX();
    Vec3 knuckle = palm_len[f] * dir;
    int base = skel.size();
    skel.bones.push_back({0, knuckle, rz});
    skel.bones.push_back({base, knuckle + seg2[f] * dir, rz});
    skel.bones.push_back({base + 1, knuckle + (seg2[f] + seg3[f]) * dir, rz});
  }
  return skel;
}

std::vector<double> hand_capsule_radii(const Skeleton& skel, double finger_radius) {
  std::vector<double> radii(skel.size(), finger_radius);
  radii[0] = 2.2 * finger_radius;  // palm stub
  for (int f = 0; f < 5; ++f) radii[1 + 3 * f] = 1.45 * finger_radius;  // metacarpal
  return radii;
}

double hand_sdf_posed(const Vec3& p, const Skeleton& skel, const std::vector<double>& radii,
                      const std::vector<RigidTransform>& world) {
  double best = 1e30;
  for (int i = 0; i < skel.size(); ++i) {
    auto [a, b] = skel.rest_segment(i);
    best = std::min(best, capsule_sdf(p, world[i].apply(a), world[i].apply(b), radii[i]));
  }
  return best;
}

double object_sdf_local(const Vec3& p, const ObjectSpec& obj) {
  if (obj.primitive == "sphere") return p.norm() - obj.radius;
  if (obj.primitive == "box") {
    Vec3 q = p.cwiseAbs() - obj.half_extents;
    double outside = q.cwiseMax(0.0).norm();
    double inside = std::min(q.maxCoeff(), 0.0);
    return outside + inside;
  }
  // cylinder along z
  double dr = std::hypot(p.x(), p.y()) - obj.radius;
  double dz = std::abs(p.z()) - 0.5 * obj.height;
  double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
  double inside = std::min(std::max(dr, dz), 0.0);
  return outside + inside;
}

TriangleMesh make_object_mesh(const ObjectSpec& obj) {
  TriangleMesh mesh;
  if (obj.primitive == "sphere") {
    mesh = make_icosphere(obj.radius, 3);
  } else if (obj.primitive == "box") {
    mesh = make_box(obj.half_extents);
  } else {
    mesh = make_cylinder(obj.radius, obj.height);
  }
  mesh.id = "object";
  return mesh;
}

// ---------------------------------------------------------------------------
// marching tetrahedra

namespace {

// Freudenthal decomposition around the 0-7 cube diagonal; every tet is
// positively oriented in the (x + 2y + 4z) corner coding.
constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 3, 2, 7}, {0, 2, 6, 7},
                             {0, 6, 4, 7}, {0, 4, 5, 7}, {0, 5, 1, 7}};

}  // namespace

TriangleMesh march_sdf(const std::function<double(const Vec3&)>& sdf, const Aabb& bounds,
                       double resolution, const std::string& id) {
  const Vec3 extent = bounds.hi - bounds.lo;
  const int nx = std::max(2, int(std::ceil(extent.x() / resolution)) + 1);
  const int ny = std::max(2, int(std::ceil(extent.y() / resolution)) + 1);
  const int nz = std::max(2, int(std::ceil(extent.z() / resolution)) + 1);
  auto grid_point = [&](int x, int y, int z) {
    return Vec3(bounds.lo.x() + x * resolution, bounds.lo.y() + y * resolution,
                bounds.lo.z() + z * resolution);
  };
  auto vid = [&](int x, int y, int z) { return (size_t(z) * ny + y) * nx + x; };

  std::vector<double> values(size_t(nx) * ny * nz);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        double v = sdf(grid_point(x, y, z));
        if (std::abs(v) < 1e-10) v = 1e-10;  // keep crossings strictly off grid points
        values[vid(x, y, z)] = v;
      }

  TriangleMesh mesh;
  mesh.id = id;
  std::map<std::pair<size_t, size_t>, int> edge_vertex;
  auto edge_point = [&](size_t a, size_t b, const Vec3& pa, const Vec3& pb) {
    auto key = std::minmax(a, b);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    double va = values[a], vb = values[b];
    double t = std::clamp(va / (va - vb), 0.01, 0.99);
    mesh.vertices.push_back(pa + t * (pb - pa));
    int idx = int(mesh.vertices.size()) - 1;
    edge_vertex[key] = idx;
    return idx;
  };

  for (int z = 0; z + 1 < nz; ++z)
    for (int y = 0; y + 1 < ny; ++y)
      for (int x = 0; x + 1 < nx; ++x) {
        size_t corner_id[8];
        Vec3 corner_pos[8];
        for (int c = 0; c < 8; ++c) {
          int cx = x + (c & 1), cy = y + ((c >> 1) & 1), cz = z + ((c >> 2) & 1);
          corner_id[c] = vid(cx, cy, cz);
          corner_pos[c] = grid_point(cx, cy, cz);
        }
        for (const auto& tet : kTets) {
          size_t tid[4];
          Vec3 tpos[4];
          bool neg[4];
          int n_neg = 0;
          for (int k = 0; k < 4; ++k) {
            tid[k] = corner_id[tet[k]];
            tpos[k] = corner_pos[tet[k]];
            neg[k] = values[tid[k]] < 0;
            n_neg += neg[k];
          }
          if (n_neg == 0 || n_neg == 4) continue;
          auto ep = [&](int i, int j) { return edge_point(tid[i], tid[j], tpos[i], tpos[j]); };
          auto emit = [&](int a, int b, int c) { mesh.faces.push_back({a, b, c}); };
          if (n_neg == 1 || n_neg == 3) {
            int lone = -1;
            for (int k = 0; k < 4; ++k)
              if (neg[k] == (n_neg == 1)) lone = k;
            // triangle fans oriented away from the lone inside vertex
            int tri[3][4][3] = {{{0, 0, 0}}};  // unused, kept for clarity
            (void)tri;
            int e0, e1, e2;
            switch (lone) {
              case 0: e0 = ep(0, 1); e1 = ep(0, 2); e2 = ep(0, 3); break;
              case 1: e0 = ep(1, 0); e1 = ep(1, 3); e2 = ep(1, 2); break;
              case 2: e0 = ep(2, 0); e1 = ep(2, 1); e2 = ep(2, 3); break;
              default: e0 = ep(3, 0); e1 = ep(3, 2); e2 = ep(3, 1); break;
            }
            if (n_neg == 1) emit(e0, e1, e2);
            else emit(e0, e2, e1);
          } else {
            // two inside vertices; (a,b | c,d) chosen as an even permutation
            int a, b, c, d;
            if (neg[0] && neg[1]) { a = 0; b = 1; c = 2; d = 3; }
            else if (neg[0] && neg[2]) { a = 0; b = 2; c = 3; d = 1; }
            else if (neg[0] && neg[3]) { a = 0; b = 3; c = 1; d = 2; }
            else if (neg[2] && neg[3]) { a = 2; b = 3; c = 0; d = 1; }
            else if (neg[1] && neg[3]) { a = 1; b = 3; c = 2; d = 0; }
            else { a = 1; b = 2; c = 0; d = 3; }
            int pac = ep(a, c), pad = ep(a, d), pbd = ep(b, d), pbc = ep(b, c);
            emit(pac, pad, pbd);
            emit(pac, pbd, pbc);
          }
        }
      }
  return mesh;
}

TriangleMesh pose_hand_mesh(const TriangleMesh& canonical, const Skeleton& skel,
                            const std::vector<double>& radii, const HandPose& pose) {
  std::vector<RigidTransform> world = forward_kinematics(skel, pose);
  TriangleMesh out = canonical;
  const double kappa = 4e-3;
  for (auto& v : out.vertices) {
    Eigen::VectorXd d(skel.size());
    for (int i = 0; i < skel.size(); ++i) {
      auto [a, b] = skel.rest_segment(i);
      d[i] = capsule_sdf(v, a, b, radii[i]);
    }
    Eigen::VectorXd w = ((-d.array() + d.minCoeff()) / kappa).exp();
    w /= w.sum();
    Vec3 posed = Vec3::Zero();
    for (int i = 0; i < skel.size(); ++i) posed += w[i] * world[i].apply(v);
    v = posed;
  }
  return out;
}

// ---------------------------------------------------------------------------
// trajectory + cameras

namespace {

Quat axis_angle_noise(Rng& rng, double sigma) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-12) axis = Vec3::UnitX();
  axis.normalize();
  double angle = sigma * rng.normal();
  return Quat(Eigen::AngleAxisd(angle, axis));
}

// flex profile per finger joint at full grasp (rad)
constexpr double kFlexProfile[3] = {0.35, 1.0, 0.9};

HandPose flexed_pose(const Skeleton& skel, const std::vector<double>& flex_scale) {
  std::vector<Quat> omega;
  for (int f = 0; f < 5; ++f)
    for (int j = 0; j < 3; ++j)
      omega.push_back(Quat(Eigen::AngleAxisd(flex_scale[f] * kFlexProfile[j], Vec3::UnitY())));
  return make_hand_pose(skel, std::move(omega), Quat::Identity(), Vec3::Zero());
}

// largest flex where every fingertip stays `clearance` away from the object
double solve_touch(const Skeleton& skel, const std::vector<double>& radii, int finger,
                   const ObjectSpec& obj, double clearance) {
  auto tip_gap = [&](double u) {
    std::vector<double> scale(5, 0.0);
    scale[finger] = u;
    HandPose pose = flexed_pose(skel, scale);
    auto world = forward_kinematics(skel, pose);
    double best = 1e30;
    for (int j = 1; j < 3; ++j) {  // distal two segments
      int bone = 1 + 3 * finger + j;
      auto [a, b] = skel.rest_segment(bone);
      Vec3 pa = world[bone].apply(a), pb = world[bone].apply(b);
      for (int s = 0; s <= 8; ++s) {
        Vec3 p = pa + (pb - pa) * (s / 8.0);
        best = std::min(best, object_sdf_local(p - obj.center, obj) - radii[bone]);
      }
    }
    return best;
  };
  if (tip_gap(1.0) > clearance) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 40; ++it) {
    double mid = 0.5 * (lo + hi);
    (tip_gap(mid) > clearance ? lo : hi) = mid;
  }
  return lo;
}

Camera make_ring_camera(const SceneSpec& spec, const Vec3& target, int index) {
  double phi = 2.0 * M_PI * index / spec.cameras + 0.7;
  double theta = spec.camera_elevation;
  Vec3 eye = target + spec.camera_distance *
                          Vec3(std::cos(phi) * std::cos(theta), std::sin(phi) * std::cos(theta),
                               std::sin(theta));
  Vec3 forward = (target - eye).normalized();
  Vec3 up = Vec3::UnitZ();
  Vec3 right = forward.cross(up).normalized();
  Vec3 down = forward.cross(right).normalized();
  Eigen::Matrix3d rot;
  rot.row(0) = right.transpose();
  rot.row(1) = down.transpose();
  rot.row(2) = forward.transpose();
  Camera cam;
  cam.width = cam.height = spec.image_size;
  cam.fx = cam.fy = spec.focal_scale * spec.image_size;
  cam.cx = (spec.image_size - 1) / 2.0;
  cam.cy = (spec.image_size - 1) / 2.0;
  cam.world_to_camera = RigidTransform(Quat(rot), -(rot * eye));
  return cam;
}

}  // namespace

SceneData make_scene_data(const SceneSpec& spec, uint64_t seed) {
  spec.validate();
  SceneData scene;
  scene.spec = spec;
  scene.skel = make_hand_skeleton();
  scene.radii = hand_capsule_radii(scene.skel, spec.capsule_radius);

  std::vector<double> touch(5);
  for (int f = 0; f < 5; ++f)
    touch[f] = solve_touch(scene.skel, scene.radii, f, spec.object, spec.touch_clearance);

  ObjectPose obj_gt{RigidTransform(Quat::Identity(), spec.object.center)};
  Rng rng(seed);
  for (int t = 0; t < spec.frames; ++t) {
    double u = spec.frames == 1 ? 1.0 : double(t) / (spec.frames - 1);
    std::vector<double> scale(5);
    for (int f = 0; f < 5; ++f) scale[f] = u * touch[f];
    FramePoses fp;
    fp.hand_gt = flexed_pose(scene.skel, scale);
    fp.object_gt = obj_gt;

    std::vector<Quat> noisy;
    for (const auto& q : fp.hand_gt.omega)
      noisy.push_back(axis_angle_noise(rng, spec.noise.joint_sigma) * q);
    fp.hand_init = make_hand_pose(scene.skel, std::move(noisy), fp.hand_gt.root_rot,
                                  fp.hand_gt.root_trans);
    Vec3 dt(rng.normal(), rng.normal(), rng.normal());
    Quat dr = axis_angle_noise(rng, spec.noise.rotation_sigma);
    fp.object_init = ObjectPose{RigidTransform(
        dr * obj_gt.transform.rotation,
        obj_gt.transform.translation + spec.noise.translation_sigma * dt)};
    scene.frames.push_back(std::move(fp));
  }

  Aabb box;
  for (const auto& fp : scene.frames)
    for (const auto& j : fp.hand_gt.joints) box.expand(j);
  box = box.padded(2.5 * spec.capsule_radius);
  TriangleMesh obj_mesh = make_object_mesh(spec.object);
  Aabb obj_box = obj_mesh.transformed(obj_gt.transform).bounds();
  box.expand(obj_box);
  scene.scene_box = box.padded(0.01);

  for (int c = 0; c < spec.cameras; ++c)
    scene.cameras.push_back(make_ring_camera(spec, scene.scene_box.center(), c));
  return scene;
}

// ---------------------------------------------------------------------------
// oracle renderer

namespace {

struct ObjectHit {
  double t = 1e30;
  Vec3 normal = Vec3::Zero();
};

std::optional<double> ray_sphere(const Vec3& o, const Vec3& d, double radius) {
  double b = o.dot(d);
  double c = o.squaredNorm() - radius * radius;
  double disc = b * b - c;
  if (disc < 0) return std::nullopt;
  double s = std::sqrt(disc);
  double t = -b - s;
  if (t < 1e-6) t = -b + s;
  if (t < 1e-6) return std::nullopt;
  return t;
}

std::optional<ObjectHit> intersect_object_local(const Vec3& o, const Vec3& d,
                                                const ObjectSpec& obj) {
  ObjectHit hit;
  if (obj.primitive == "sphere") {
    auto t = ray_sphere(o, d, obj.radius);
    if (!t) return std::nullopt;
    hit.t = *t;
    hit.normal = (o + *t * d).normalized();
    return hit;
  }
  if (obj.primitive == "box") {
    double t0 = 1e-6, t1 = 1e30;
    int axis = -1;
    for (int k = 0; k < 3; ++k) {
      if (std::abs(d[k]) < 1e-15) {
        if (std::abs(o[k]) > obj.half_extents[k]) return std::nullopt;
        continue;
      }
      double a = (-obj.half_extents[k] - o[k]) / d[k];
      double b = (obj.half_extents[k] - o[k]) / d[k];
      if (a > b) std::swap(a, b);
      if (a > t0) {
        t0 = a;
        axis = k;
      }
      t1 = std::min(t1, b);
    }
    if (t1 <= t0 || axis < 0) return std::nullopt;
    hit.t = t0;
    Vec3 p = o + t0 * d;
    hit.normal = Vec3::Zero();
    hit.normal[axis] = p[axis] > 0 ? 1.0 : -1.0;
    return hit;
  }
  // cylinder along z with caps
  double best = 1e30;
  Vec3 normal = Vec3::Zero();
  double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    double b = o.x() * d.x() + o.y() * d.y();
    double c = o.x() * o.x() + o.y() * o.y() - obj.radius * obj.radius;
    double disc = b * b - a * c;
    if (disc >= 0) {
      for (double t : {(-b - std::sqrt(disc)) / a, (-b + std::sqrt(disc)) / a}) {
        if (t < 1e-6 || t >= best) continue;
        Vec3 p = o + t * d;
        if (std::abs(p.z()) <= 0.5 * obj.height) {
          best = t;
          normal = Vec3(p.x(), p.y(), 0).normalized();
        }
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double zcap : {-0.5 * obj.height, 0.5 * obj.height}) {
      double t = (zcap - o.z()) / d.z();
      if (t < 1e-6 || t >= best) continue;
      Vec3 p = o + t * d;
      if (p.x() * p.x() + p.y() * p.y() <= obj.radius * obj.radius) {
        best = t;
        normal = Vec3(0, 0, zcap > 0 ? 1.0 : -1.0);
      }
    }
  }
  if (best >= 1e30) return std::nullopt;
  ObjectHit hit2;
  hit2.t = best;
  hit2.normal = normal;
  return hit2;
}

struct ShadingScene {
  const SceneData* scene;
  const std::vector<RigidTransform>* world;
  RigidTransform obj_inv;
  ObjectSpec obj;
  bool has_bulge;
  double amp, width;

  double hand_sdf(const Vec3& p) const {
    double d = hand_sdf_posed(p, scene->skel, scene->radii, *world);
    if (has_bulge) {
      double dobj = object_sdf_local(obj_inv.apply(p), obj);
      d -= amp * std::exp(-dobj * dobj / (2 * width * width));
    }
    return d;
  }
  int nearest_bone(const Vec3& p) const {
    int best = 0;
    double bd = 1e30;
    for (int i = 0; i < scene->skel.size(); ++i) {
      auto [a, b] = scene->skel.rest_segment(i);
      double d = capsule_sdf(p, (*world)[i].apply(a), (*world)[i].apply(b), scene->radii[i]);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  }
};

Vec3 shade_lambert(const Vec3& albedo, const Vec3& n) {
  const Vec3 l1 = Vec3(0.45, 0.35, 0.85).normalized();
  const Vec3 l2 = Vec3(-0.6, -0.25, 0.35).normalized();
  double diffuse = 0.85 * std::max(0.0, n.dot(l1)) + 0.35 * std::max(0.0, n.dot(l2));
  Vec3 c = albedo * (0.18 + diffuse);
  return c.cwiseMin(1.0).cwiseMax(0.0);
}

Vec3 bone_albedo(int bone) {
  // skin-like base with a deterministic per-bone tint
  double h = double((bone * 2654435761u) % 1000) / 1000.0;
  return Vec3(0.78 + 0.12 * h, 0.52 + 0.10 * (1 - h), 0.40 + 0.08 * h);
}

Image render_frame(const SceneData& scene, int camera, int frame, bool mask_only) {
  const SceneSpec& spec = scene.spec;
  const Camera& cam = scene.cameras.at(camera);
  const FramePoses& fp = scene.frames.at(frame);
  std::vector<RigidTransform> world = forward_kinematics(scene.skel, fp.hand_gt);

  ShadingScene ss;
  ss.scene = &scene;
  ss.world = &world;
  ss.obj_inv = fp.object_gt.transform.inverse();
  ss.obj = spec.object;
  ss.has_bulge = spec.bulge_amplitude > 0;
  ss.amp = spec.bulge_amplitude;
  ss.width = spec.bulge_width;

  const double lipschitz = 1.0 + (ss.has_bulge ? ss.amp / (ss.width * std::exp(0.5)) : 0.0);
  const Vec3 obj_albedo(0.25, 0.45, 0.85);

  Image img(cam.width, cam.height, mask_only ? 1 : 3);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Ray ray;
      ray.origin = cam.center();
      ray.direction = cam.pixel_direction(x, y);
      intersect_scene_box(ray, scene.scene_box);
      if (ray.degenerate) continue;

      // analytic object hit
      double t_obj = 1e30;
      Vec3 n_obj = Vec3::Zero();
      {
        Vec3 o_local = ss.obj_inv.apply(ray.origin);
        Vec3 d_local = ss.obj_inv.rotation * ray.direction;
        if (auto hit = intersect_object_local(o_local, d_local, spec.object)) {
          t_obj = hit->t;
          n_obj = fp.object_gt.transform.rotation * hit->normal;
        }
      }

      // sphere-traced hand hit
      double t_hand = 1e30;
      {
        double t = ray.near;
        for (int it = 0; it < 384 && t < ray.far && t < t_obj; ++it) {
          double d = ss.hand_sdf(ray.origin + t * ray.direction);
          if (d < 1e-5) {
            t_hand = t;
            break;
          }
          t += std::max(d / lipschitz, 2e-5);
        }
      }

      if (t_hand >= 1e30 && t_obj >= 1e30) continue;
      if (mask_only) {
        img.at(x, y, 0) = 1.0;
        continue;
      }
      Vec3 color;
      if (t_hand < t_obj) {
        Vec3 p = ray.origin + t_hand * ray.direction;
        const double h = 1e-4;
        Vec3 n(ss.hand_sdf(p + Vec3(h, 0, 0)) - ss.hand_sdf(p - Vec3(h, 0, 0)),
               ss.hand_sdf(p + Vec3(0, h, 0)) - ss.hand_sdf(p - Vec3(0, h, 0)),
               ss.hand_sdf(p + Vec3(0, 0, h)) - ss.hand_sdf(p - Vec3(0, 0, h)));
        n.normalize();
        color = shade_lambert(bone_albedo(ss.nearest_bone(p)), n);
      } else {
        color = shade_lambert(obj_albedo, n_obj);
      }
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[c];
    }
  return img;
}

}  // namespace

Image oracle_render(const SceneData& scene, int camera, int frame) {
  return render_frame(scene, camera, frame, false);
}

Image oracle_mask(const SceneData& scene, int camera, int frame) {
  return render_frame(scene, camera, frame, true);
}

// ---------------------------------------------------------------------------
// dataset I/O

void build_scene(const SceneSpec& spec, const std::string& out_dir, uint64_t seed) {
  SceneData scene = make_scene_data(spec, seed);
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");
  fs::create_directories(fs::path(out_dir) / "meshes");

  // canonical hand mesh marched from the rest capsules
  Aabb hand_box;
  for (int i = 0; i < scene.skel.size(); ++i) {
    auto [a, b] = scene.skel.rest_segment(i);
    hand_box.expand(a);
    hand_box.expand(b);
  }
  hand_box = hand_box.padded(3.5 * spec.capsule_radius);
  HandPose rest = make_hand_pose(scene.skel, std::vector<Quat>(scene.skel.size() - 1, Quat::Identity()),
                                 Quat::Identity(), Vec3::Zero());
  auto rest_world = forward_kinematics(scene.skel, rest);
  auto hand_sdf = [&](const Vec3& p) {
    return hand_sdf_posed(p, scene.skel, scene.radii, rest_world);
  };
  TriangleMesh hand_mesh = march_sdf(hand_sdf, hand_box, spec.hand_march_resolution, "hand");
  hand_mesh.validate();
  save_obj((fs::path(out_dir) / "meshes" / "hand.obj").string(), hand_mesh);

  TriangleMesh object_mesh = make_object_mesh(spec.object);
  object_mesh.validate();
  save_obj((fs::path(out_dir) / "meshes" / "object.obj").string(), object_mesh);

  json frames = json::array();
  for (int t = 0; t < spec.frames; ++t) {
    for (int c = 0; c < spec.cameras; ++c) {
      char name[64];
      std::snprintf(name, sizeof(name), "cam%d_f%d.png", c, t);
      Image img = oracle_render(scene, c, t);
      Image mask = oracle_mask(scene, c, t);
      bool any = false;
      for (double v : mask.data) any = any || v > 0.5;
      if (!any) throw DataError("build_scene: frame renders an empty mask");
      save_png((fs::path(out_dir) / "images" / name).string(), img);
      save_png((fs::path(out_dir) / "masks" / name).string(), mask);
    }
    const FramePoses& fp = scene.frames[t];
    frames.push_back({{"hand_gt", json::parse(hand_pose_to_json(fp.hand_gt))},
                      {"hand_init", json::parse(hand_pose_to_json(fp.hand_init))},
                      {"object_gt", json::parse(object_pose_to_json(fp.object_gt))},
                      {"object_init", json::parse(object_pose_to_json(fp.object_init))}});
  }

  json cams = json::array();
  for (const auto& cam : scene.cameras) cams.push_back(json::parse(camera_to_json(cam)));
  std::vector<int> train, eval;
  for (int c = 0; c < spec.cameras; ++c)
    (c < spec.train_cameras ? train : eval).push_back(c);

  json root;
  root["version"] = 1;
  root["spec"] = json::parse(scene_spec_to_json(spec));
  root["seed"] = seed;
  root["cameras"] = cams;
  root["train_cameras"] = train;
  root["eval_cameras"] = eval;
  root["frames"] = frames;
  root["meshes"] = {{"hand", "meshes/hand.obj"}, {"object", "meshes/object.obj"}};
  root["skeleton"] = json::parse(skeleton_to_json(scene.skel));
  root["capsule_radii"] = scene.radii;
  root["scene_box"] = {{"lo", {scene.scene_box.lo.x(), scene.scene_box.lo.y(), scene.scene_box.lo.z()}},
                       {"hi", {scene.scene_box.hi.x(), scene.scene_box.hi.y(), scene.scene_box.hi.z()}}};

  std::ofstream out(fs::path(out_dir) / "scene.json");
  out << root.dump(2) << "\n";
}

std::string Dataset::image_path(int camera, int frame) const {
  char name[64];
  std::snprintf(name, sizeof(name), "cam%d_f%d.png", camera, frame);
  return (fs::path(root) / "images" / name).string();
}

std::string Dataset::mask_path(int camera, int frame) const {
  char name[64];
  std::snprintf(name, sizeof(name), "cam%d_f%d.png", camera, frame);
  return (fs::path(root) / "masks" / name).string();
}

Image Dataset::load_image(int camera, int frame) const { return load_png(image_path(camera, frame)); }
Image Dataset::load_mask(int camera, int frame) const { return load_png(mask_path(camera, frame)); }

Dataset load_dataset(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "scene.json");
  if (!in) throw DataError("cannot open dataset: " + dir + "/scene.json");
  json root;
  in >> root;
  if (!root.contains("version") || root["version"].get<int>() != 1)
    throw DataError("unsupported scene.json version in " + dir);

  Dataset ds;
  ds.root = dir;
  ds.spec = scene_spec_from_json(root.at("spec").dump());
  ds.skel = skeleton_from_json(root.at("skeleton").dump());
  ds.radii = root.at("capsule_radii").get<std::vector<double>>();
  for (const auto& c : root.at("cameras")) ds.cameras.push_back(camera_from_json(c.dump()));
  ds.train_cameras = root.at("train_cameras").get<std::vector<int>>();
  ds.eval_cameras = root.at("eval_cameras").get<std::vector<int>>();
  for (const auto& f : root.at("frames")) {
    FramePoses fp;
    fp.hand_gt = hand_pose_from_json(f.at("hand_gt").dump());
    fp.hand_init = hand_pose_from_json(f.at("hand_init").dump());
    fp.object_gt = object_pose_from_json(f.at("object_gt").dump());
    fp.object_init = object_pose_from_json(f.at("object_init").dump());
    ds.frames.push_back(std::move(fp));
  }
  ds.hand_mesh = load_obj((fs::path(dir) / root.at("meshes").at("hand").get<std::string>()).string());
  ds.hand_mesh.id = "hand";
  ds.object_mesh =
      load_obj((fs::path(dir) / root.at("meshes").at("object").get<std::string>()).string());
  ds.object_mesh.id = "object";
  auto& box = root.at("scene_box");
  ds.scene_box.lo = Vec3(box.at("lo")[0], box.at("lo")[1], box.at("lo")[2]);
  ds.scene_box.hi = Vec3(box.at("hi")[0], box.at("hi")[1], box.at("hi")[2]);
  return ds;
}

}  // namespace ncrf
