#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ncrf/contact.hpp"
#include "ncrf/field.hpp"
#include "ncrf/losses.hpp"
#include "ncrf/metrics.hpp"
#include "ncrf/scene.hpp"

namespace ncrf {

struct StepLosses {
  double nerf = 0, contact = 0, pen = 0, total = 0;
};

struct GradcheckGroup {
  std::string name;
  double max_rel_error = 0;
  int coords = 0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  double h = 1e-4;
  double max_rel_error = 0;
  std::string to_json() const;
};

// Owns the full model state and the three training phases: ContactNet
// pretraining on oracle labels, per-frame contact refinement, and the joint
// photometric + contact loop.
class Trainer {
 public:
  Trainer(Dataset dataset, const Config& config);

  // phase 1: supervised on soft geometric-contact labels at GT poses
  void pretrain_contactnet(std::vector<double>* losses = nullptr);
  // phase 2: object correction + ContactNet target + DiffOpt per frame
  void refine_all_frames();
  // phase 3
  StepLosses train_step();
  void train(int steps, const std::string& trace_csv_path = "");

  void save(const std::string& path) const;
  static Trainer load(const std::string& path, const Dataset& dataset);

  // current refined poses (base pose + learned corrections)
  HandPose refined_hand_pose(int frame) const;
  ObjectPose refined_object_pose(int frame) const;

  Image render(const Camera& cam, int frame, uint64_t seed = 0) const;
  MetricsReport evaluate(bool use_refined_poses = true, bool render_images = true) const;

  GradcheckReport gradcheck(int coords_per_group, double h, uint64_t seed);

  const Config& config() const { return cfg_; }
  const Dataset& dataset() const { return ds_; }
  ParamStore& params() { return store_; }
  int step() const { return step_; }

  // oracle contact labels at GT poses (exposed for tests)
  ContactField oracle_contact(int frame) const;
  ContactField contactnet_targets(const HandPose& hand, const ObjectPose& object) const;
  DiffOptResult run_diffopt(int frame, const HandPose& init, const ObjectPose& object,
                            const ContactField& target) const;

 private:
  struct StepBatch {
    SampleBatch batch;
    std::vector<Mat> gt_patches;
    int patch_count = 0, patch_size = 0;
  };
  struct FrameGraph {
    ad::Tensor loss_total, loss_nerf, loss_con, loss_pen;
    AdHandPose hand_base;
    AdObjectPose object_base;
  };
  // Sampling (patches, jitter, partition labels) is separated from graph
  // building so gradcheck can hold the discrete structure fixed while
  // perturbing parameters.
  StepBatch prepare_step_batch(int frame, int camera, uint64_t step_seed, int patch_count,
                               int patch_size, int samples_per_ray);
  FrameGraph build_losses(int frame, const StepBatch& sb, const AdHandPose* hand_override);
  GeometricContactInputs contact_inputs() const;
  DeformationContext make_context(const AdHandPose& hand, const AdObjectPose& object) const;
  ContactNetInputs contactnet_inputs(const HandPose& hand, const ObjectPose& object) const;

  Config cfg_;
  Dataset ds_;
  ParamStore store_;
  RadianceModel model_;
  BlendWeightVolume wc_;
  NonRigidField nonrigid_;
  ContactNet contact_net_;
  PoseCorrection correction_;

  SdfGrid object_sdf_;
  SdfGrid hand_sdf_grid_;
  HandSdf hand_sdf_;
  std::unique_ptr<WindingTree> object_tree_;
  Aabb object_bounds_local_;
  Aabb scene_box_;

  SurfaceSample hand_rest_samples_;
  Mat hand_skin_weights_;
  SurfaceSample object_local_samples_;
  ad::Tensor hand_rest_points_t_, object_local_points_t_;
  ad::Tensor object_sdf_values_t_;
  ad::GridMeta object_sdf_meta_;

  std::vector<HandPose> base_hand_;
  std::vector<ObjectPose> base_object_;
  std::vector<ContactField> targets_;
  std::vector<Image> images_, masks_;  // cam-major cache

  std::vector<int> active_train_cameras_;
  int step_ = 0;

  const Image& image(int camera, int frame) const;
  const Image& mask(int camera, int frame) const;
};

}  // namespace ncrf
