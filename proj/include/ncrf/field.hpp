#pragma once

#include "ncrf/config.hpp"
#include "ncrf/kinematics.hpp"
#include "ncrf/sampling.hpp"
#include "ncrf/sdf.hpp"

namespace ncrf {

// Canonical radiance field: one shared trunk for hand and object with a part
// indicator bit; density reads off the trunk, color additionally sees the
// encoded view direction and a per-frame appearance code.
struct RadianceModel {
  int l_pos = 10;
  int l_dir = 4;
  int psi_dim = 8;
  Mlp trunk;
  ad::Tensor sigma_w;  // width x 1, zero init
  ad::Tensor sigma_b;  // 1 x 1, init -1 => softplus(-1) density everywhere
  Mlp color;
  ad::Tensor psi;  // n_frames x psi_dim, zero init
};

RadianceModel make_radiance_model(ParamStore& store, const Config& cfg, int n_frames,
                                  uint64_t seed);

struct FieldOutput {
  ad::Tensor sigma;  // M x 1
  ad::Tensor rgb;    // M x 3
};

// part: Mx1 constant of 0 (hand) / 1 (object). dirs must be unit rows.
FieldOutput eval_canonical(const RadianceModel& model, const ad::Tensor& x_c,
                           const ad::Tensor& part, const ad::Tensor& dirs,
                           const ad::Tensor& psi_row);

// Everything the observation-space evaluation needs besides the sample batch.
struct DeformationContext {
  const Skeleton* skel = nullptr;
  AdFk fk;
  ad::Tensor omega_flat;  // 1 x 4(K-1)
  const BlendWeightVolume* wc = nullptr;
  const NonRigidField* nonrigid = nullptr;  // nullptr disables the offset
  AdObjectPose object_pose;
  // object SDF in object-local coordinates, shared const tensor
  ad::GridMeta object_sdf_meta;
  ad::Tensor object_sdf_values;
};

// Builds the per-frame context from plain poses (differentiable if the pose
// tensors are leaves).
DeformationContext make_deformation_context(const Skeleton& skel, const AdHandPose& hand,
                                            const AdObjectPose& object,
                                            const BlendWeightVolume& wc,
                                            const NonRigidField* nonrigid,
                                            const ad::Tensor& object_sdf_values,
                                            const ad::GridMeta& object_sdf_meta);

ad::GridMeta grid_meta_of(const SdfGrid& grid);
ad::Tensor sdf_values_tensor(const SdfGrid& grid);

// Warps samples into canonical space per their labels, evaluates the field
// and gates hand densities by (1 - background weight). Outputs keep the
// batch's sample order.
FieldOutput eval_observation(const RadianceModel& model, const DeformationContext& ctx,
                             const SampleBatch& batch, int frame);

// Alpha compositing over black; returns Rx4 [r,g,b,opacity] rows per ray.
ad::Tensor render_rays(const FieldOutput& out, const SampleBatch& batch);

using Partitioner = std::function<std::vector<PointLabel>(const std::vector<Vec3>&)>;

// Full-frame inference (no tape). Rays outside the scene box render black.
Image render_image(const RadianceModel& model, const DeformationContext& ctx, const Camera& cam,
                   const Aabb& scene_box, int frame, int samples_per_ray, uint64_t seed,
                   int chunk, const Partitioner& partitioner);

}  // namespace ncrf
