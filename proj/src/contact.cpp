#include "ncrf/contact.hpp"

#include <algorithm>
#include <cmath>

namespace ncrf {

using ad::Tensor;

HandSdf make_hand_sdf(const Skeleton& skel, const std::vector<double>& radii,
                      const SdfGrid& canonical_grid) {
  HandSdf ctx;
  ctx.skel = &skel;
  ctx.radii = radii;
  for (int i = 0; i < skel.size(); ++i) ctx.rest_segments.push_back(skel.rest_segment(i));
  ctx.meta = grid_meta_of(canonical_grid);
  ctx.values = sdf_values_tensor(canonical_grid);
  return ctx;
}

ad::Tensor hand_sdf_query(const HandSdf& ctx, const AdFk& fk, const ad::Tensor& points) {
  using namespace ad;
  const int k = int(fk.rot.size());
  std::vector<Tensor> backmapped(k), dists(k);
  for (int i = 0; i < k; ++i) {
    backmapped[i] = ad_bone_backmap(fk, i, points);
    dists[i] = capsule_distance(backmapped[i], ctx.rest_segments[i].first,
                                ctx.rest_segments[i].second, ctx.radii[i]);
  }
  Tensor weights = softmax_rows(scale(hcat(dists), -1.0 / ctx.kappa));
  Tensor canonical;
  for (int i = 0; i < k; ++i) {
    Tensor term = rowwise_scale(backmapped[i], slice_cols(weights, i, 1));
    canonical = i == 0 ? term : add(canonical, term);
  }
  return grid_sample(ctx.values, ctx.meta, canonical, /*add_clamp_distance=*/true);
}

Mat rest_skinning_weights(const Skeleton& skel, const std::vector<double>& radii,
                          const std::vector<Vec3>& rest_points, double kappa) {
  const int k = skel.size();
  Mat w(rest_points.size(), k);
  for (size_t p = 0; p < rest_points.size(); ++p) {
    Eigen::VectorXd d(k);
    for (int i = 0; i < k; ++i) {
      auto [a, b] = skel.rest_segment(i);
      d[i] = capsule_sdf(rest_points[p], a, b, radii[i]);
    }
    Eigen::VectorXd e = ((-d.array() + d.minCoeff()) / kappa).exp();
    w.row(p) = (e / e.sum()).transpose();
  }
  return w;
}

ad::Tensor pose_hand_points(const ad::Tensor& rest_points, const Mat& weights, const AdFk& fk) {
  using namespace ad;
  const int k = int(fk.rot.size());
  Tensor acc;
  for (int i = 0; i < k; ++i) {
    Tensor posed = add_rowvec(quat_rotate(fk.rot[i], rest_points), fk.trans[i]);
    Tensor term = rowwise_scale(posed, constant(weights.col(i)));
    acc = i == 0 ? term : add(acc, term);
  }
  return acc;
}

ad::Tensor pose_object_points(const ad::Tensor& local_points, const AdObjectPose& pose) {
  using namespace ad;
  Tensor q = quat_normalize(pose.rot);
  return add_rowvec(quat_rotate(q, local_points), pose.t);
}

namespace {

Tensor soft_contact(const Tensor& signed_dist, double eps, double sharpness) {
  using namespace ad;
  return sigmoid(scale(add_scalar(neg(signed_dist), eps), 1.0 / sharpness));
}

}  // namespace

AdContactField geometric_contact(const GeometricContactInputs& in, const AdFk& fk,
                                 const AdObjectPose& obj_pose, double eps, double sharpness) {
  using namespace ad;
  AdContactField out;
  out.hand_points_posed = pose_hand_points(in.hand_rest_points, in.hand_weights, fk);
  out.object_points_posed = pose_object_points(in.object_local_points, obj_pose);

  // hand samples vs object surface: transform into the object frame
  Tensor q = quat_normalize(obj_pose.rot);
  Tensor local = quat_rotate(quat_conjugate(q), add_rowvec(out.hand_points_posed, neg(obj_pose.t)));
  out.hand_distance = grid_sample(in.object_sdf_values, in.object_sdf_meta, local, true);
  out.hand = soft_contact(out.hand_distance, eps, sharpness);

  // object samples vs articulated hand
  out.object_distance = hand_sdf_query(*in.hand_sdf, fk, out.object_points_posed);
  out.object = soft_contact(out.object_distance, eps, sharpness);
  return out;
}

ContactField geometric_contact_meshes(const TriangleMesh& hand_posed,
                                      const TriangleMesh& object_posed, int n_points,
                                      uint64_t seed, double eps, double sharpness,
                                      int sdf_resolution) {
  SurfaceSample hand_pts = sample_surface_points(hand_posed, n_points, seed);
  SurfaceSample obj_pts = sample_surface_points(object_posed, n_points, seed + 1);
  SdfGrid hand_grid = build_sdf_grid(hand_posed, sdf_resolution);
  SdfGrid obj_grid = build_sdf_grid(object_posed, sdf_resolution);
  ContactField field;
  field.hand.resize(n_points);
  field.object.resize(n_points);
  auto soft = [&](double d) { return 1.0 / (1.0 + std::exp(-(eps - d) / sharpness)); };
  for (int i = 0; i < n_points; ++i) {
    field.hand[i] = soft(signed_distance(hand_pts.points[i], obj_grid));
    field.object[i] = soft(signed_distance(obj_pts.points[i], hand_grid));
  }
  return field;
}

// ---------------------------------------------------------------------------
// ContactNet

ContactNet make_contact_net(ParamStore& store, const Config& cfg, uint64_t seed) {
  ContactNet net;
  net.feature_dim = cfg.feature_dim;
  const int half = cfg.feature_dim / 2;
  std::vector<int> dims = {7};
  for (int h : cfg.contact_hidden) dims.push_back(h);
  dims.push_back(half);
  net.point_mlp = Mlp::create(store, "contact.point", dims, seed);
  net.attn_out_hand = store.add("contact.attn_out_hand", Mat::Zero(cfg.feature_dim, cfg.feature_dim));
  net.attn_out_object =
      store.add("contact.attn_out_object", Mat::Zero(cfg.feature_dim, cfg.feature_dim));
  net.head = Mlp::create(store, "contact.head", {cfg.feature_dim, cfg.contact_hidden[0], 1},
                         seed + 7);
  return net;
}

ad::Tensor extract_features(const ContactNet& net, const ad::Tensor& inputs) {
  using namespace ad;
  Tensor per_point = net.point_mlp.forward(inputs);
  Tensor pooled = max_rows(per_point);
  return hcat({per_point, repeat_row(pooled, int(inputs->val.rows()))});
}

namespace {

Tensor attention(const Tensor& queries, const Tensor& keys_values) {
  using namespace ad;
  double scale_factor = 1.0 / std::sqrt(double(queries->val.cols()));
  // scores: Q K^T / sqrt(D)
  Tensor scores = scale(matmul(queries, transpose(keys_values)), scale_factor);
  return matmul(softmax_rows(scores), keys_values);
}

}  // namespace

std::pair<ad::Tensor, ad::Tensor> cross_feature_augment(const ContactNet& net,
                                                        const ad::Tensor& f_hand,
                                                        const ad::Tensor& f_object) {
  using namespace ad;
  Tensor hand_aug = add(f_hand, matmul(attention(f_hand, f_object), net.attn_out_hand));
  Tensor object_aug = add(f_object, matmul(attention(f_object, f_hand), net.attn_out_object));
  return {hand_aug, object_aug};
}

ad::Tensor predict_contact_head(const ContactNet& net, const ad::Tensor& features) {
  return ad::sigmoid(net.head.forward(features));
}

ContactField predict_contact(const ContactNet& net, const ContactNetInputs& in) {
  using namespace ad;
  const int nh = int(in.hand_points.rows());
  const int no = int(in.object_points.rows());
  Vec3 center =
      0.5 * (in.hand_points.colwise().mean() + in.object_points.colwise().mean()).transpose();
  auto pack = [&](const Mat& pts, const Mat& normals, const Eigen::VectorXd& dist) {
    Mat m(pts.rows(), 7);
    m.leftCols(3) = pts.rowwise() - center.transpose();
    m.middleCols(3, 3) = normals;
    m.col(6) = dist;
    return m;
  };
  Tensor f_h = extract_features(net, constant(pack(in.hand_points, in.hand_normals, in.hand_distance)));
  Tensor f_o =
      extract_features(net, constant(pack(in.object_points, in.object_normals, in.object_distance)));
  auto [ah, ao] = cross_feature_augment(net, f_h, f_o);
  Tensor gh = predict_contact_head(net, ah);
  Tensor go = predict_contact_head(net, ao);
  ContactField out;
  out.hand = gh->val.col(0);
  out.object = go->val.col(0);
  (void)nh;
  (void)no;
  return out;
}

// ---------------------------------------------------------------------------
// pose correction

PoseCorrection make_pose_correction(ParamStore& store, const Config& cfg, int n_joints,
                                    int n_frames, uint64_t seed) {
  PoseCorrection pc;
  pc.delta_t_bound = cfg.delta_t_bound;
  pc.delta_omega_bound = cfg.delta_omega_bound;
  Mat embed(n_frames, cfg.frame_embed_dim);
  Rng rng(seed);
  for (int r = 0; r < embed.rows(); ++r)
    for (int c = 0; c < embed.cols(); ++c) embed(r, c) = 0.1 * rng.normal();
  pc.frame_embed = store.add("correction.frame_embed", std::move(embed));
  pc.object_mlp = Mlp::create(store, "correction.object", {7 + cfg.frame_embed_dim, 64, 7},
                              seed + 1, Activation::kSilu, /*zero_init_output=*/true);
  pc.joint_mlp = Mlp::create(
      store, "correction.joint",
      {4 * (n_joints - 1) + cfg.frame_embed_dim, 64, 3 * (n_joints - 1)}, seed + 2,
      Activation::kSilu, /*zero_init_output=*/true);
  return pc;
}

AdObjectPose correct_object_pose(const PoseCorrection& pc, const AdObjectPose& initial,
                                 int frame) {
  using namespace ad;
  Tensor embed = slice_rows(pc.frame_embed, frame, 1);
  Tensor input = hcat({initial.rot, initial.t, embed});
  Tensor raw = pc.object_mlp.forward(input);
  // residual quaternion around identity; normalization absorbs the scale
  Tensor dq = quat_normalize(add(slice_cols(raw, 0, 4),
                                 constant((Mat(1, 4) << 1, 0, 0, 0).finished())));
  Tensor dt = scale(tanh_f(slice_cols(raw, 4, 3)), pc.delta_t_bound);
  AdObjectPose out;
  Tensor q0 = quat_normalize(initial.rot);
  out.rot = quat_mul(q0, dq);
  out.t = add(quat_rotate(q0, dt), initial.t);
  return out;
}

AdHandPose correct_joint_rotation(const PoseCorrection& pc, const AdHandPose& pose, int frame) {
  using namespace ad;
  const int joints = int(pose.omega->val.rows());
  Tensor embed = slice_rows(pc.frame_embed, frame, 1);
  std::vector<Tensor> omega_rows;
  for (int i = 0; i < joints; ++i) omega_rows.push_back(slice_rows(pose.omega, i, 1));
  Tensor input = hcat([&] {
    std::vector<Tensor> parts = omega_rows;
    parts.push_back(embed);
    return parts;
  }());
  Tensor raw = pc.joint_mlp.forward(input);  // 1 x 3J
  std::vector<Tensor> aa_rows;
  for (int i = 0; i < joints; ++i) aa_rows.push_back(slice_cols(raw, 3 * i, 3));
  Tensor aa = vcat(aa_rows);  // J x 3
  // per-joint norm bound, then exponential map
  Tensor norm = rowwise_norm(aa);
  Tensor bounded = rowwise_scale(aa, scale(tanhc(norm), pc.delta_omega_bound));
  Tensor theta = rowwise_norm(bounded);
  Tensor dq = hcat({cos_half(theta), rowwise_scale(bounded, sinc_half(theta))});
  AdHandPose out = pose;
  out.omega = quat_mul(dq, quat_normalize(pose.omega));
  return out;
}

// ---------------------------------------------------------------------------
// DiffOpt

DiffOptResult diffopt_refine(const Skeleton& skel, const HandPose& init,
                             const ObjectPose& obj_pose, const GeometricContactInputs& geo,
                             const ContactField& target, const Config& cfg) {
  using namespace ad;
  AdHandPose pose = to_ad(init, /*differentiable=*/true);
  AdObjectPose obj = to_ad(obj_pose, /*differentiable=*/false);
  Tensor target_h = constant(target.hand);
  Tensor target_o = constant(target.object);

  AdamState st_omega, st_rot, st_trans;
  AdamConfig adam;
  adam.lr = cfg.diffopt_lr;

  DiffOptResult result;
  double best = 0;
  Mat best_omega, best_rot, best_trans;
  for (int iter = 0; iter <= cfg.diffopt_iters; ++iter) {
    AdFk fk = ad_forward_kinematics(skel, pose);
    AdContactField field = geometric_contact(geo, fk, obj, cfg.contact_eps, cfg.contact_sharpness);
    Tensor l_con = add(l1(field.object, target_o), scale(l1(field.hand, target_h), cfg.lambda2));
    Tensor d_obj = hand_sdf_query(*geo.hand_sdf, fk, field.object_points_posed);
    Tensor l_pen = sum(relu(neg(d_obj)));
    Tensor loss = add(l_con, scale(l_pen, cfg.lambda_pen));
    double value = loss->val(0, 0);
    if (!std::isfinite(value))
      throw NumericalError("diffopt_refine: non-finite contact objective");
    result.trace.push_back(value);
    if (iter == 0) {
      result.initial_loss = value;
      best = value;
      best_omega = pose.omega->val;
      best_rot = pose.root_rot->val;
      best_trans = pose.root_trans->val;
    } else if (value < best) {
      best = value;
      best_omega = pose.omega->val;
      best_rot = pose.root_rot->val;
      best_trans = pose.root_trans->val;
    }
    if (iter == cfg.diffopt_iters) break;
    pose.omega->grad.resize(0, 0);
    pose.root_rot->grad.resize(0, 0);
    pose.root_trans->grad.resize(0, 0);
    backward(loss);
    adam_step(*pose.omega, st_omega, adam);
    adam_step(*pose.root_rot, st_rot, adam);
    adam_step(*pose.root_trans, st_trans, adam);
  }
  result.final_loss = best;
  pose.omega->val = best_omega;
  pose.root_rot->val = best_rot;
  pose.root_trans->val = best_trans;
  result.pose = from_ad(skel, pose);
  return result;
}

}  // namespace ncrf
