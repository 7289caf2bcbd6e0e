#include "ncrf/field.hpp"

#include <cmath>

namespace ncrf {

RadianceModel make_radiance_model(ParamStore& store, const Config& cfg, int n_frames,
                                  uint64_t seed) {
  RadianceModel model;
  model.l_pos = cfg.l_pos;
  model.l_dir = cfg.l_dir;
  model.psi_dim = cfg.psi_dim;
  const int pos_dim = 3 + 6 * cfg.l_pos + 1;  // + part indicator
  std::vector<int> trunk_dims = {pos_dim};
  for (int i = 0; i < cfg.trunk_depth; ++i) trunk_dims.push_back(cfg.trunk_width);
  model.trunk = Mlp::create(store, "trunk", trunk_dims, seed, Activation::kSilu,
                            /*zero_init_output=*/false, cfg.skip_layer);
  model.sigma_w = store.add("sigma.w", Mat::Zero(cfg.trunk_width, 1));
  model.sigma_b = store.add("sigma.b", Mat::Constant(1, 1, -1.0));
  const int dir_dim = 3 + 6 * cfg.l_dir;
  model.color = Mlp::create(store, "color",
                            {cfg.trunk_width + dir_dim + cfg.psi_dim, cfg.color_width, 3},
                            seed + 1, Activation::kSilu);
  model.psi = store.add("psi", Mat::Zero(n_frames, cfg.psi_dim));
  return model;
}

FieldOutput eval_canonical(const RadianceModel& model, const ad::Tensor& x_c,
                           const ad::Tensor& part, const ad::Tensor& dirs,
                           const ad::Tensor& psi_row) {
  using namespace ad;
  const int m = int(x_c->val.rows());
  Tensor trunk_in = hcat({posenc(x_c, model.l_pos), part});
  Tensor feat = model.trunk.forward(trunk_in);
  FieldOutput out;
  out.sigma = softplus(add_rowvec(matmul(feat, model.sigma_w), model.sigma_b));
  Tensor color_in = hcat({feat, posenc(dirs, model.l_dir), repeat_row(psi_row, m)});
  out.rgb = sigmoid(model.color.forward(color_in));
  return out;
}

ad::GridMeta grid_meta_of(const SdfGrid& grid) {
  ad::GridMeta meta;
  meta.origin = grid.origin;
  meta.voxel = grid.voxel_size;
  meta.resolution = grid.resolution;
  meta.channels = 1;
  return meta;
}

ad::Tensor sdf_values_tensor(const SdfGrid& grid) {
  Mat v(grid.values.size(), 1);
  for (size_t i = 0; i < grid.values.size(); ++i) v(i, 0) = grid.values[i];
  return ad::constant(std::move(v));
}

DeformationContext make_deformation_context(const Skeleton& skel, const AdHandPose& hand,
                                            const AdObjectPose& object,
                                            const BlendWeightVolume& wc,
                                            const NonRigidField* nonrigid,
                                            const ad::Tensor& object_sdf_values,
                                            const ad::GridMeta& object_sdf_meta) {
  DeformationContext ctx;
  ctx.skel = &skel;
  ctx.fk = ad_forward_kinematics(skel, hand);
  std::vector<ad::Tensor> rows;
  for (int i = 0; i + 1 < skel.size(); ++i) rows.push_back(ad::slice_rows(hand.omega, i, 1));
  std::vector<ad::Tensor> flat;
  for (auto& r : rows) flat.push_back(r);
  ctx.omega_flat = ad::hcat(flat);
  ctx.wc = &wc;
  ctx.nonrigid = nonrigid;
  ctx.object_pose = object;
  ctx.object_sdf_meta = object_sdf_meta;
  ctx.object_sdf_values = object_sdf_values;
  return ctx;
}

FieldOutput eval_observation(const RadianceModel& model, const DeformationContext& ctx,
                             const SampleBatch& batch, int frame) {
  using namespace ad;
  const int m = int(batch.positions.size());
  std::vector<int> hand_idx, obj_idx;
  for (int i = 0; i < m; ++i)
    (batch.labels[i] == PointLabel::kObject ? obj_idx : hand_idx).push_back(i);

  Mat pos(m, 3), dir(m, 3);
  for (int i = 0; i < m; ++i) {
    pos.row(i) = batch.positions[i].transpose();
    dir.row(i) = batch.directions[i / batch.samples_per_ray].transpose();
  }
  Tensor positions = constant(std::move(pos));
  Tensor dirs = constant(std::move(dir));
  Tensor psi_row = slice_rows(model.psi, frame, 1);

  std::vector<Tensor> xc_parts, part_parts, dir_parts, gate_parts;
  if (!hand_idx.empty()) {
    Tensor x_h = gather_rows(positions, hand_idx);
    HandWarp warp = ad_deform_hand(x_h, ctx.fk, *ctx.wc);
    Tensor x_c = warp.skel_points;
    if (ctx.nonrigid) {
      Tensor local = ad_deform_object(x_h, ctx.object_pose);
      Tensor sdf = grid_sample(ctx.object_sdf_values, ctx.object_sdf_meta, local, true);
      Tensor gate = nonrigid_gate(*ctx.nonrigid, sdf);
      x_c = add(x_c, nonrigid_offset(*ctx.nonrigid, warp.skel_points, ctx.omega_flat, gate));
    }
    xc_parts.push_back(x_c);
    part_parts.push_back(constant(Mat::Zero(int(hand_idx.size()), 1)));
    dir_parts.push_back(gather_rows(dirs, hand_idx));
    gate_parts.push_back(add_scalar(neg(warp.background), 1.0));  // 1 - bg
  }
  if (!obj_idx.empty()) {
    Tensor x_o = gather_rows(positions, obj_idx);
    xc_parts.push_back(ad_deform_object(x_o, ctx.object_pose));
    part_parts.push_back(constant(Mat::Ones(int(obj_idx.size()), 1)));
    dir_parts.push_back(gather_rows(dirs, obj_idx));
    gate_parts.push_back(constant(Mat::Ones(int(obj_idx.size()), 1)));
  }

  Tensor x_c = xc_parts.size() == 1 ? xc_parts[0] : vcat(xc_parts);
  Tensor part = part_parts.size() == 1 ? part_parts[0] : vcat(part_parts);
  Tensor d = dir_parts.size() == 1 ? dir_parts[0] : vcat(dir_parts);
  Tensor gate = gate_parts.size() == 1 ? gate_parts[0] : vcat(gate_parts);

  FieldOutput canonical = eval_canonical(model, x_c, part, d, psi_row);
  Tensor sigma = mul(canonical.sigma, gate);

  // restore the batch's sample order
  std::vector<int> restore(m);
  int row = 0;
  for (int i : hand_idx) restore[i] = row++;
  for (int i : obj_idx) restore[i] = row++;
  FieldOutput out;
  out.sigma = gather_rows(sigma, restore);
  out.rgb = gather_rows(canonical.rgb, restore);
  return out;
}

ad::Tensor render_rays(const FieldOutput& out, const SampleBatch& batch) {
  return ad::volume_render(out.sigma, out.rgb, batch.deltas, batch.samples_per_ray);
}

Image render_image(const RadianceModel& model, const DeformationContext& ctx, const Camera& cam,
                   const Aabb& scene_box, int frame, int samples_per_ray, uint64_t seed,
                   int chunk, const Partitioner& partitioner) {
  ad::NoGradGuard no_grad;
  Image img(cam.width, cam.height, 3);
  std::vector<Ray> all;
  all.reserve(size_t(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      Ray ray;
      ray.px = x;
      ray.py = y;
      ray.origin = cam.center();
      ray.direction = cam.pixel_direction(x, y);
      intersect_scene_box(ray, scene_box);
      all.push_back(ray);
    }
  Rng rng(seed);
  for (size_t start = 0; start < all.size(); start += chunk) {
    size_t count = std::min(size_t(chunk), all.size() - start);
    std::vector<Ray> rays(all.begin() + start, all.begin() + start + count);
    SampleBatch batch = make_sample_batch(rays, samples_per_ray, rng);
    batch.labels = partitioner(batch.positions);
    FieldOutput out = eval_observation(model, ctx, batch, frame);
    ad::Tensor rgba = render_rays(out, batch);
    for (size_t r = 0; r < count; ++r) {
      const Ray& ray = rays[r];
      for (int c = 0; c < 3; ++c) img.at(ray.px, ray.py, c) = rgba->val(r, c);
    }
  }
  return img;
}

}  // namespace ncrf
