#include "ncrf/kinematics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

#include "ncrf/sdf.hpp"

namespace ncrf {

using nlohmann::json;

void Skeleton::validate() const {
  if (bones.empty()) throw DataError("skeleton has no bones");
  int roots = 0;
  for (size_t i = 0; i < bones.size(); ++i) {
    if (bones[i].parent < 0) {
      ++roots;
    } else if (bones[i].parent >= int(i)) {
      throw DataError("skeleton bones must be topologically ordered");
    }
    if (std::abs(bones[i].rest_rot.norm() - 1.0) > kQuatNormTol)
      throw DataError("skeleton rest rotation is not unit");
  }
  if (roots != 1) throw DataError("skeleton must have exactly one root");
}

std::pair<Vec3, Vec3> Skeleton::rest_segment(int bone) const {
  const Bone& b = bones[bone];
  if (b.parent >= 0) return {bones[b.parent].rest_head, b.rest_head};
  Vec3 mean = Vec3::Zero();
  int count = 0;
  for (size_t i = 0; i < bones.size(); ++i)
    if (bones[i].parent == bone) {
      mean += bones[i].rest_head;
      ++count;
    }
  if (count == 0) return {b.rest_head, b.rest_head + Vec3(1e-4, 0, 0)};
  return {b.rest_head, mean / count};
}

std::vector<RigidTransform> forward_kinematics(const Skeleton& skel, const HandPose& pose) {
  const int k = skel.size();
  if (int(pose.omega.size()) != k - 1) throw DataError("forward_kinematics: omega size mismatch");
  std::vector<RigidTransform> world(k);
  for (int i = 0; i < k; ++i) {
    const Bone& bone = skel.bones[i];
    if (bone.parent < 0) {
      // global transform pivots about the root rest head
      Quat q = pose.root_rot.normalized();
      world[i] = RigidTransform(q, bone.rest_head + pose.root_trans - q * bone.rest_head);
    } else {
      Quat local = bone.rest_rot * pose.omega[i - 1].normalized() * bone.rest_rot.conjugate();
      const Vec3& pivot = skel.bones[bone.parent].rest_head;
      RigidTransform a(local, pivot - local * pivot);
      world[i] = world[bone.parent] * a;
    }
  }
  return world;
}

std::vector<Vec3> fk_joints(const Skeleton& skel, const std::vector<RigidTransform>& world) {
  std::vector<Vec3> joints(skel.size());
  for (int i = 0; i < skel.size(); ++i) joints[i] = world[i].apply(skel.bones[i].rest_head);
  return joints;
}

HandPose make_hand_pose(const Skeleton& skel, std::vector<Quat> omega, const Quat& root_rot,
                        const Vec3& root_trans) {
  HandPose pose;
  pose.omega = std::move(omega);
  for (auto& q : pose.omega) q.normalize();
  pose.root_rot = root_rot.normalized();
  pose.root_trans = root_trans;
  pose.joints = fk_joints(skel, forward_kinematics(skel, pose));
  return pose;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json quat_to_json(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }
Quat quat_from_json(const json& j) { return Quat(j[0], j[1], j[2], j[3]); }
json vec_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec_from_json(const json& j) { return Vec3(j[0], j[1], j[2]); }

}  // namespace

std::string skeleton_to_json(const Skeleton& skel) {
  json bones = json::array();
  for (const auto& b : skel.bones)
    bones.push_back({{"parent", b.parent},
                     {"head", vec_to_json(b.rest_head)},
                     {"rest_rotation", quat_to_json(b.rest_rot)}});
  return json{{"bones", bones}}.dump(2);
}

Skeleton skeleton_from_json(const std::string& text) {
  json j = json::parse(text);
  Skeleton skel;
  for (const auto& b : j.at("bones"))
    skel.bones.push_back(
        {b.at("parent"), vec_from_json(b.at("head")), quat_from_json(b.at("rest_rotation"))});
  skel.validate();
  return skel;
}

std::string hand_pose_to_json(const HandPose& pose) {
  json omega = json::array();
  for (const auto& q : pose.omega) omega.push_back(quat_to_json(q));
  json joints = json::array();
  for (const auto& p : pose.joints) joints.push_back(vec_to_json(p));
  return json{{"omega", omega},
              {"root_rotation", quat_to_json(pose.root_rot)},
              {"root_translation", vec_to_json(pose.root_trans)},
              {"joints", joints}}
      .dump(2);
}

HandPose hand_pose_from_json(const std::string& text) {
  json j = json::parse(text);
  HandPose pose;
  for (const auto& q : j.at("omega")) pose.omega.push_back(quat_from_json(q));
  pose.root_rot = quat_from_json(j.at("root_rotation"));
  pose.root_trans = vec_from_json(j.at("root_translation"));
  if (j.contains("joints"))
    for (const auto& p : j.at("joints")) pose.joints.push_back(vec_from_json(p));
  return pose;
}

std::string object_pose_to_json(const ObjectPose& pose) {
  return json{{"rotation", quat_to_json(pose.transform.rotation)},
              {"translation", vec_to_json(pose.transform.translation)}}
      .dump(2);
}

ObjectPose object_pose_from_json(const std::string& text) {
  json j = json::parse(text);
  return {RigidTransform(quat_from_json(j.at("rotation")), vec_from_json(j.at("translation")))};
}

// ---------------------------------------------------------------------------
// Blend weights

BlendWeightVolume make_blend_weight_volume(ParamStore& store, const Skeleton& skel,
                                           const std::vector<double>& radii, int resolution,
                                           double pad) {
  const int k = skel.size();
  Aabb box;
  for (int i = 0; i < k; ++i) {
    auto [a, b] = skel.rest_segment(i);
    double r = radii[i];
    box.expand(a + Vec3::Constant(r));
    box.expand(a - Vec3::Constant(r));
    box.expand(b + Vec3::Constant(r));
    box.expand(b - Vec3::Constant(r));
  }
  box = box.padded(pad);

  BlendWeightVolume wc;
  wc.meta.origin = box.lo;
  Vec3 extent = box.hi - box.lo;
  wc.meta.voxel = extent.maxCoeff() / (resolution - 1);
  for (int d = 0; d < 3; ++d)
    wc.meta.resolution[d] = std::max(4, int(std::ceil(extent[d] / wc.meta.voxel)) + 1);
  wc.meta.channels = k + 1;

  size_t voxels = size_t(wc.meta.resolution[0]) * wc.meta.resolution[1] * wc.meta.resolution[2];
  Mat logits = Mat::Zero(voxels, k + 1);
  for (int z = 0; z < wc.meta.resolution[2]; ++z)
    for (int y = 0; y < wc.meta.resolution[1]; ++y)
      for (int x = 0; x < wc.meta.resolution[0]; ++x) {
        Vec3 p = wc.meta.origin + wc.meta.voxel * Vec3(x, y, z);
        int nearest = 0;
        double best = 1e30;
        for (int i = 0; i < k; ++i) {
          auto [a, b] = skel.rest_segment(i);
          double d = capsule_sdf(p, a, b, radii[i]);
          if (d < best) {
            best = d;
            nearest = i;
          }
        }
        size_t row = (size_t(z) * wc.meta.resolution[1] + y) * wc.meta.resolution[0] + x;
        logits(row, nearest) = 2.0;
        logits(row, k) = -2.0;
      }
  wc.logits = store.add("wc.logits", std::move(logits));
  return wc;
}

namespace {

// Shared scalar-path helpers mirroring the ad:: grid ops.
double fade_scalar(const ad::GridMeta& meta, const Vec3& p, double band = 2.0) {
  Vec3 local = (p - meta.origin) / meta.voxel;
  double fade = 1.0;
  for (int k = 0; k < 3; ++k) {
    double border = std::min(local[k], meta.resolution[k] - 1 - local[k]);
    double t = std::clamp(border / band, 0.0, 1.0);
    fade *= t * t * (3 - 2 * t);
  }
  return fade;
}

Eigen::VectorXd sample_channels(const Mat& grid, const ad::GridMeta& meta, const Vec3& p) {
  Vec3 local = (p - meta.origin) / meta.voxel;
  int base[3];
  double frac[3];
  for (int k = 0; k < 3; ++k) {
    double c = std::clamp(local[k], 0.0, double(meta.resolution[k] - 1));
    int i = std::clamp(int(c), 0, meta.resolution[k] - 2);
    base[k] = i;
    frac[k] = c - i;
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(meta.channels);
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        double w = (dx ? frac[0] : 1 - frac[0]) * (dy ? frac[1] : 1 - frac[1]) *
                   (dz ? frac[2] : 1 - frac[2]);
        size_t row = (size_t(base[2] + dz) * meta.resolution[1] + base[1] + dy) * meta.resolution[0] +
                     base[0] + dx;
        out += w * grid.row(row).transpose();
      }
  return out;
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& v) {
  Eigen::VectorXd e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

ObservationWeights observation_weights(const Vec3& x, const std::vector<RigidTransform>& world,
                                       const BlendWeightVolume& wc) {
  const int k = int(world.size());
  ObservationWeights out;
  out.bones = Eigen::VectorXd::Zero(k);
  double bg_acc = 0;
  double prod_outside = 1.0;
  for (int i = 0; i < k; ++i) {
    Vec3 y = world[i].inverse().apply(x);
    double fade = fade_scalar(wc.meta, y);
    prod_outside *= 1.0 - fade;
    if (fade == 0.0) continue;
    Eigen::VectorXd s = softmax_vec(sample_channels(wc.logits->val, wc.meta, y));
    out.bones[i] = fade * s[i];
    bg_acc += fade * s[k];
  }
  double raw_bg = bg_acc / k + prod_outside;
  double denom = out.bones.sum() + raw_bg;
  out.bones /= denom;
  out.background = raw_bg / denom;
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable path

AdHandPose to_ad(const HandPose& pose, bool differentiable) {
  Mat omega(pose.omega.size(), 4);
  for (size_t i = 0; i < pose.omega.size(); ++i)
    omega.row(i) << pose.omega[i].w(), pose.omega[i].x(), pose.omega[i].y(), pose.omega[i].z();
  Mat rr(1, 4);
  rr << pose.root_rot.w(), pose.root_rot.x(), pose.root_rot.y(), pose.root_rot.z();
  Mat rt(1, 3);
  rt << pose.root_trans.x(), pose.root_trans.y(), pose.root_trans.z();
  AdHandPose out;
  out.omega = differentiable ? ad::leaf(omega) : ad::constant(omega);
  out.root_rot = differentiable ? ad::leaf(rr) : ad::constant(rr);
  out.root_trans = differentiable ? ad::leaf(rt) : ad::constant(rt);
  return out;
}

AdObjectPose to_ad(const ObjectPose& pose, bool differentiable) {
  Mat r(1, 4);
  const Quat& q = pose.transform.rotation;
  r << q.w(), q.x(), q.y(), q.z();
  Mat t(1, 3);
  t << pose.transform.translation.x(), pose.transform.translation.y(),
      pose.transform.translation.z();
  AdObjectPose out;
  out.rot = differentiable ? ad::leaf(r) : ad::constant(r);
  out.t = differentiable ? ad::leaf(t) : ad::constant(t);
  return out;
}

HandPose from_ad(const Skeleton& skel, const AdHandPose& pose) {
  std::vector<Quat> omega;
  for (int i = 0; i < pose.omega->val.rows(); ++i) {
    const auto& r = pose.omega->val.row(i);
    omega.emplace_back(r[0], r[1], r[2], r[3]);
  }
  const auto& rr = pose.root_rot->val.row(0);
  const auto& rt = pose.root_trans->val.row(0);
  return make_hand_pose(skel, std::move(omega), Quat(rr[0], rr[1], rr[2], rr[3]),
                        Vec3(rt[0], rt[1], rt[2]));
}

ObjectPose from_ad(const AdObjectPose& pose) {
  const auto& r = pose.rot->val.row(0);
  const auto& t = pose.t->val.row(0);
  return {RigidTransform(Quat(r[0], r[1], r[2], r[3]), Vec3(t[0], t[1], t[2]))};
}

namespace {

Mat quat_const(const Quat& q) {
  Mat m(1, 4);
  m << q.w(), q.x(), q.y(), q.z();
  return m;
}

Mat vec_const(const Vec3& v) {
  Mat m(1, 3);
  m << v.x(), v.y(), v.z();
  return m;
}

}  // namespace

AdFk ad_forward_kinematics(const Skeleton& skel, const AdHandPose& pose) {
  using namespace ad;
  const int k = skel.size();
  AdFk fk;
  fk.rot.resize(k);
  fk.trans.resize(k);
  Tensor omega_n = quat_normalize(pose.omega);
  for (int i = 0; i < k; ++i) {
    const Bone& bone = skel.bones[i];
    if (bone.parent < 0) {
      Tensor q = quat_normalize(pose.root_rot);
      Tensor head = constant(vec_const(bone.rest_head));
      fk.rot[i] = q;
      fk.trans[i] = sub(add(head, pose.root_trans), quat_rotate(q, head));
    } else {
      Tensor rest = constant(quat_const(bone.rest_rot));
      Tensor rest_conj = constant(quat_const(bone.rest_rot.conjugate()));
      Tensor local = quat_mul(quat_mul(rest, slice_rows(omega_n, i - 1, 1)), rest_conj);
      Tensor pivot = constant(vec_const(skel.bones[bone.parent].rest_head));
      Tensor a_t = sub(pivot, quat_rotate(local, pivot));
      fk.rot[i] = quat_mul(fk.rot[bone.parent], local);
      fk.trans[i] = add(quat_rotate(fk.rot[bone.parent], a_t), fk.trans[bone.parent]);
    }
  }
  return fk;
}

ad::Tensor ad_fk_joints(const Skeleton& skel, const AdFk& fk) {
  using namespace ad;
  std::vector<Tensor> rows;
  for (int i = 0; i < skel.size(); ++i) {
    Tensor head = constant(vec_const(skel.bones[i].rest_head));
    rows.push_back(add(quat_rotate(fk.rot[i], head), fk.trans[i]));
  }
  return vcat(rows);
}

ad::Tensor ad_bone_backmap(const AdFk& fk, int bone, const ad::Tensor& points) {
  using namespace ad;
  Tensor centered = add_rowvec(points, neg(fk.trans[bone]));
  return quat_rotate(quat_conjugate(fk.rot[bone]), centered);
}

HandWarp ad_deform_hand(const ad::Tensor& points, const AdFk& fk, const BlendWeightVolume& wc) {
  using namespace ad;
  const int k = int(fk.rot.size());
  const int m = int(points->val.rows());
  Tensor sum_raw, bg_acc, skel_acc;
  Tensor prod_outside = constant(Mat::Ones(m, 1));
  for (int i = 0; i < k; ++i) {
    Tensor y = ad_bone_backmap(fk, i, points);
    Tensor fade = grid_fade(wc.meta, y);
    prod_outside = mul(prod_outside, add_scalar(neg(fade), 1.0));
    Tensor s = softmax_rows(grid_sample(wc.logits, wc.meta, y));
    Tensor raw = mul(fade, slice_cols(s, i, 1));
    Tensor bg = mul(fade, slice_cols(s, k, 1));
    Tensor contrib = rowwise_scale(y, raw);
    sum_raw = i == 0 ? raw : add(sum_raw, raw);
    bg_acc = i == 0 ? bg : add(bg_acc, bg);
    skel_acc = i == 0 ? contrib : add(skel_acc, contrib);
  }
  Tensor raw_bg = add(scale(bg_acc, 1.0 / k), prod_outside);
  Tensor denom = recip(add(sum_raw, raw_bg));
  HandWarp warp;
  warp.background = mul(raw_bg, denom);
  // bone weights renormalized over bones only, guarded for all-background rows
  Tensor bone_denom = recip(add_scalar(sum_raw, 1e-12));
  warp.skel_points = rowwise_scale(skel_acc, bone_denom);
  return warp;
}

ad::Tensor ad_deform_object(const ad::Tensor& points, const AdObjectPose& pose) {
  using namespace ad;
  Tensor q = quat_normalize(pose.rot);
  Tensor centered = add_rowvec(points, neg(pose.t));
  return quat_rotate(quat_conjugate(q), centered);
}

// ---------------------------------------------------------------------------
// Non-rigid field

NonRigidField make_nonrigid_field(ParamStore& store, int n_joints, uint64_t seed,
                                  const std::vector<int>& hidden) {
  NonRigidField field;
  int in_dim = 3 + 6 * field.l_pos + 4 * (n_joints - 1);
  std::vector<int> dims = {in_dim};
  for (int h : hidden) dims.push_back(h);
  dims.push_back(3);
  field.mlp = Mlp::create(store, "nonrigid", dims, seed, Activation::kSilu,
                          /*zero_init_output=*/true);
  return field;
}

ad::Tensor nonrigid_gate(const NonRigidField& field, const ad::Tensor& sdf_values) {
  using namespace ad;
  return exp_f(scale(square(sdf_values), -1.0 / (2.0 * field.tau * field.tau)));
}

ad::Tensor nonrigid_offset(const NonRigidField& field, const ad::Tensor& skel_points,
                           const ad::Tensor& omega_flat, const ad::Tensor& gate) {
  using namespace ad;
  const int m = int(skel_points->val.rows());
  Tensor input = hcat({posenc(skel_points, field.l_pos), repeat_row(omega_flat, m)});
  Tensor raw = field.mlp.forward(input);
  // norm-bounded: dx = max_offset * tanh(|raw|) * raw / |raw|
  Tensor norm = rowwise_norm(raw);
  Tensor bounded = rowwise_scale(raw, scale(tanhc(norm), field.max_offset));
  return rowwise_scale(bounded, gate);
}

Vec3 deform_object(const Vec3& x, const ObjectPose& pose) {
  return pose.transform.inverse().apply(x);
}

}  // namespace ncrf
