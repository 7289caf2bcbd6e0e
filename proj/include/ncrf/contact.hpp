#pragma once

#include "ncrf/config.hpp"
#include "ncrf/field.hpp"
#include "ncrf/kinematics.hpp"
#include "ncrf/sdf.hpp"

namespace ncrf {

// Per-surface-point contact probabilities in [0,1] with the points they
// attach to.
struct ContactField {
  Eigen::VectorXd hand;
  Eigen::VectorXd object;
};

// Differentiable articulated hand SDF: queries are soft-assigned to bones by
// posed capsule distance, back-mapped rigidly and read from the canonical
// grid.
struct HandSdf {
  const Skeleton* skel = nullptr;
  std::vector<std::pair<Vec3, Vec3>> rest_segments;
  std::vector<double> radii;
  ad::GridMeta meta;
  ad::Tensor values;        // canonical grid, constant
  double kappa = 4e-3;      // bone-assignment softness (meters)
};

HandSdf make_hand_sdf(const Skeleton& skel, const std::vector<double>& radii,
                      const SdfGrid& canonical_grid);

ad::Tensor hand_sdf_query(const HandSdf& ctx, const AdFk& fk, const ad::Tensor& points);

// Fixed per-point skinning weights (softmax of rest capsule distances) used
// to pose surface samples with the kinematic chain.
Mat rest_skinning_weights(const Skeleton& skel, const std::vector<double>& radii,
                          const std::vector<Vec3>& rest_points, double kappa = 4e-3);

ad::Tensor pose_hand_points(const ad::Tensor& rest_points, const Mat& weights, const AdFk& fk);
ad::Tensor pose_object_points(const ad::Tensor& local_points, const AdObjectPose& pose);

// Soft geometric contact: g = sigmoid((eps - d)/s) with d the signed distance
// to the opposing surface.
struct GeometricContactInputs {
  ad::Tensor hand_rest_points;    // N x 3 canonical
  Mat hand_weights;               // N x K
  ad::Tensor object_local_points; // N x 3 object frame
  ad::GridMeta object_sdf_meta;
  ad::Tensor object_sdf_values;
  const HandSdf* hand_sdf = nullptr;
};

struct AdContactField {
  ad::Tensor hand;    // N x 1
  ad::Tensor object;  // N x 1
  ad::Tensor hand_points_posed;
  ad::Tensor object_points_posed;
  ad::Tensor hand_distance;    // signed, to the object surface
  ad::Tensor object_distance;  // signed, to the hand surface (feeds L_pen)
};

AdContactField geometric_contact(const GeometricContactInputs& in, const AdFk& fk,
                                 const AdObjectPose& obj_pose, double eps, double sharpness);

// Plain mesh-level variant used by tests and the pose-metrics pipeline;
// builds SDF grids for both posed meshes.
ContactField geometric_contact_meshes(const TriangleMesh& hand_posed,
                                      const TriangleMesh& object_posed, int n_points,
                                      uint64_t seed, double eps = 2e-3, double sharpness = 2e-3,
                                      int sdf_resolution = 64);

// --- ContactNet --------------------------------------------------------------

struct ContactNet {
  Mlp point_mlp;       // (pos, normal, signed distance) -> feature_dim/2
  ad::Tensor attn_out_hand;    // D x D, zero init
  ad::Tensor attn_out_object;  // D x D, zero init
  Mlp head;            // feature_dim -> ... -> 1 logits
  int feature_dim = 128;
};

ContactNet make_contact_net(ParamStore& store, const Config& cfg, uint64_t seed);

// Shared per-point MLP + global max-pool concat; rows follow input order.
ad::Tensor extract_features(const ContactNet& net, const ad::Tensor& inputs);

// Residual single-head cross attention, both directions.
std::pair<ad::Tensor, ad::Tensor> cross_feature_augment(const ContactNet& net,
                                                        const ad::Tensor& f_hand,
                                                        const ad::Tensor& f_object);

ad::Tensor predict_contact_head(const ContactNet& net, const ad::Tensor& features);

// End to end: builds point features (positions centered on the hand-object
// midpoint, normals, signed distance to the other surface) and regresses
// contact for both sides.
struct ContactNetInputs {
  Mat hand_points, hand_normals;      // N x 3 posed
  Mat object_points, object_normals;  // N x 3 posed
  Eigen::VectorXd hand_distance;      // to object surface
  Eigen::VectorXd object_distance;    // to hand surface
};

ContactField predict_contact(const ContactNet& net, const ContactNetInputs& in);

// --- pose correction ---------------------------------------------------------

struct PoseCorrection {
  Mlp object_mlp;  // pose (7) + frame embedding -> 7 residual
  Mlp joint_mlp;   // flat omega + frame embedding -> 3(K-1) axis-angle
  ad::Tensor frame_embed;  // n_frames x embed_dim
  double delta_t_bound = 0.05;
  double delta_omega_bound = 0.5;
};

PoseCorrection make_pose_correction(ParamStore& store, const Config& cfg, int n_joints,
                                    int n_frames, uint64_t seed);

// P_obj = P_obj0 * [dR | dt], residual from the correction MLP.
AdObjectPose correct_object_pose(const PoseCorrection& pc, const AdObjectPose& initial,
                                 int frame);

// P_h = (J, dOmega * Omega, R_h, t_h) with per-joint bounded axis-angle
// residuals composed on the left.
AdHandPose correct_joint_rotation(const PoseCorrection& pc, const AdHandPose& pose, int frame);

// --- DiffOpt -----------------------------------------------------------------

struct DiffOptResult {
  HandPose pose;
  double initial_loss = 0;
  double final_loss = 0;
  std::vector<double> trace;
};

// Adam on (omega, R_h, t_h) minimizing contact mismatch + penetration against
// the target field. Returns the best iterate seen.
DiffOptResult diffopt_refine(const Skeleton& skel, const HandPose& init,
                             const ObjectPose& obj_pose, const GeometricContactInputs& geo,
                             const ContactField& target, const Config& cfg);

}  // namespace ncrf
