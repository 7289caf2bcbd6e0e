#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ncrf/geometry.hpp"
#include "ncrf/mlp.hpp"

namespace ncrf {

struct Bone {
  int parent = -1;  // -1 for the root
  Vec3 rest_head = Vec3::Zero();
  Quat rest_rot = Quat::Identity();  // joint frame in which the local rotation acts
};

struct Skeleton {
  std::vector<Bone> bones;

  int size() const { return int(bones.size()); }
  // Throws unless topologically ordered (parent < child) with exactly one root.
  void validate() const;

  // Rest capsule axis of a bone: parent head -> own head. The root spans its
  // own head to the mean of its children's heads (a stub when childless).
  std::pair<Vec3, Vec3> rest_segment(int bone) const;
};

// Articulated pose: K-1 local joint rotations plus a global transform that
// pivots about the root's rest head. `joints` caches forward kinematics.
struct HandPose {
  std::vector<Quat> omega;  // size K-1, bone i uses omega[i-1]
  Quat root_rot = Quat::Identity();
  Vec3 root_trans = Vec3::Zero();
  std::vector<Vec3> joints;
};

struct ObjectPose {
  RigidTransform transform;
};

// World transform per bone (canonical -> observation); identity chain at rest.
std::vector<RigidTransform> forward_kinematics(const Skeleton& skel, const HandPose& pose);
std::vector<Vec3> fk_joints(const Skeleton& skel, const std::vector<RigidTransform>& world);
// Fills the joint cache via FK.
HandPose make_hand_pose(const Skeleton& skel, std::vector<Quat> omega, const Quat& root_rot,
                        const Vec3& root_trans);

// JSON round trips (quaternions serialized [w,x,y,z], positions [x,y,z]).
std::string skeleton_to_json(const Skeleton& skel);
Skeleton skeleton_from_json(const std::string& text);
std::string hand_pose_to_json(const HandPose& pose);
HandPose hand_pose_from_json(const std::string& text);
std::string object_pose_to_json(const ObjectPose& pose);
ObjectPose object_pose_from_json(const std::string& text);

// Learnable blend-weight logits on a canonical voxel grid; channel K is the
// background. Seeded from rest capsule distances: +2 nearest bone, 0 other
// bones, -2 background.
struct BlendWeightVolume {
  ad::GridMeta meta;
  ad::Tensor logits;  // (nx*ny*nz) x (K+1)
};

BlendWeightVolume make_blend_weight_volume(ParamStore& store, const Skeleton& skel,
                                           const std::vector<double>& capsule_radii,
                                           int resolution = 32, double pad = 0.03);

struct ObservationWeights {
  Eigen::VectorXd bones;  // K entries, >= 0
  double background = 0;  // together they sum to 1
};

// Back-maps x through each bone, reads the blend-weight field there and
// renormalizes over bones + background. Outside every back-mapped volume the
// background weight is 1.
ObservationWeights observation_weights(const Vec3& x, const std::vector<RigidTransform>& world,
                                       const BlendWeightVolume& wc);

// --- differentiable pose machinery ------------------------------------------

struct AdHandPose {
  ad::Tensor omega;      // (K-1) x 4, normalized inside FK
  ad::Tensor root_rot;   // 1 x 4
  ad::Tensor root_trans; // 1 x 3
};
struct AdObjectPose {
  ad::Tensor rot;  // 1 x 4
  ad::Tensor t;    // 1 x 3
};

AdHandPose to_ad(const HandPose& pose, bool differentiable);
AdObjectPose to_ad(const ObjectPose& pose, bool differentiable);
HandPose from_ad(const Skeleton& skel, const AdHandPose& pose);
ObjectPose from_ad(const AdObjectPose& pose);

struct AdFk {
  std::vector<ad::Tensor> rot;    // per bone 1x4, unit
  std::vector<ad::Tensor> trans;  // per bone 1x3
};

AdFk ad_forward_kinematics(const Skeleton& skel, const AdHandPose& pose);
ad::Tensor ad_fk_joints(const Skeleton& skel, const AdFk& fk);  // K x 3

// Inverse bone transform applied to points: R_i^-1 (x - t_i).
ad::Tensor ad_bone_backmap(const AdFk& fk, int bone, const ad::Tensor& points);

struct HandWarp {
  ad::Tensor skel_points;  // M x 3, canonical LBS result
  ad::Tensor background;   // M x 1
};

// LBS warp from observation to canonical space driven by the blend-weight
// field (Mx3 points).
HandWarp ad_deform_hand(const ad::Tensor& points, const AdFk& fk, const BlendWeightVolume& wc);

ad::Tensor ad_deform_object(const ad::Tensor& points, const AdObjectPose& pose);

// Contact-gated free-form offset head.
struct NonRigidField {
  Mlp mlp;
  int l_pos = 4;
  double tau = 5e-3;         // gate width (meters)
  double max_offset = 0.01;  // hard bound on |dx|
};

NonRigidField make_nonrigid_field(ParamStore& store, int n_joints, uint64_t seed,
                                  const std::vector<int>& hidden = {64, 64});

// gate = exp(-d^2 / (2 tau^2)) from squared distances to the object surface.
ad::Tensor nonrigid_gate(const NonRigidField& field, const ad::Tensor& sdf_values);
// Offset for skinned points; omega_flat is 1 x 4(K-1).
ad::Tensor nonrigid_offset(const NonRigidField& field, const ad::Tensor& skel_points,
                           const ad::Tensor& omega_flat, const ad::Tensor& gate);

// Plain convenience: single-point deformations used by tests and tools.
Vec3 deform_object(const Vec3& x, const ObjectPose& pose);

}  // namespace ncrf
