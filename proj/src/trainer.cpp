#include "ncrf/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace ncrf {

using ad::Tensor;
using nlohmann::json;

namespace {

Mat string_to_block(const std::string& s) {
  Mat m(1, s.size());
  for (size_t i = 0; i < s.size(); ++i) m(0, i) = double(uint8_t(s[i]));
  return m;
}

std::string block_to_string(const Mat& m) {
  std::string s(m.cols(), '\0');
  for (int i = 0; i < m.cols(); ++i) s[i] = char(uint8_t(m(0, i)));
  return s;
}

Mat hand_pose_to_row(const HandPose& pose) {
  Mat row(1, 4 * pose.omega.size() + 7);
  int c = 0;
  for (const auto& q : pose.omega) {
    row(0, c++) = q.w();
    row(0, c++) = q.x();
    row(0, c++) = q.y();
    row(0, c++) = q.z();
  }
  row(0, c++) = pose.root_rot.w();
  row(0, c++) = pose.root_rot.x();
  row(0, c++) = pose.root_rot.y();
  row(0, c++) = pose.root_rot.z();
  row(0, c++) = pose.root_trans.x();
  row(0, c++) = pose.root_trans.y();
  row(0, c++) = pose.root_trans.z();
  return row;
}

HandPose hand_pose_from_row(const Skeleton& skel, const Mat& row) {
  std::vector<Quat> omega;
  int c = 0;
  for (int i = 0; i + 1 < skel.size(); ++i) {
    omega.emplace_back(row(0, c), row(0, c + 1), row(0, c + 2), row(0, c + 3));
    c += 4;
  }
  Quat rr(row(0, c), row(0, c + 1), row(0, c + 2), row(0, c + 3));
  c += 4;
  Vec3 rt(row(0, c), row(0, c + 1), row(0, c + 2));
  return make_hand_pose(skel, std::move(omega), rr, rt);
}

Mat object_pose_to_row(const ObjectPose& pose) {
  Mat row(1, 7);
  const Quat& q = pose.transform.rotation;
  const Vec3& t = pose.transform.translation;
  row << q.w(), q.x(), q.y(), q.z(), t.x(), t.y(), t.z();
  return row;
}

ObjectPose object_pose_from_row(const Mat& row) {
  return {RigidTransform(Quat(row(0, 0), row(0, 1), row(0, 2), row(0, 3)),
                         Vec3(row(0, 4), row(0, 5), row(0, 6)))};
}

HandPose round_pose_f32(const Skeleton& skel, const HandPose& pose) {
  Mat row = hand_pose_to_row(pose);
  ad::round_to_f32(row);
  return hand_pose_from_row(skel, row);
}

ObjectPose round_pose_f32(const ObjectPose& pose) {
  Mat row = object_pose_to_row(pose);
  ad::round_to_f32(row);
  return object_pose_from_row(row);
}

Eigen::VectorXd round_vec_f32(Eigen::VectorXd v) {
  for (int i = 0; i < v.size(); ++i) v[i] = double(float(v[i]));
  return v;
}

}  // namespace

Trainer::Trainer(Dataset dataset, const Config& config) : cfg_(config), ds_(std::move(dataset)) {
  const uint64_t seed = cfg_.seed;
  model_ = make_radiance_model(store_, cfg_, ds_.spec.frames, seed * 31 + 11);
  wc_ = make_blend_weight_volume(store_, ds_.skel, ds_.radii, cfg_.wc_resolution, cfg_.wc_pad);
  nonrigid_ = make_nonrigid_field(store_, ds_.skel.size(), seed * 31 + 13, cfg_.nonrigid_hidden);
  nonrigid_.tau = cfg_.nonrigid_tau;
  nonrigid_.max_offset = cfg_.nonrigid_max_offset;
  nonrigid_.l_pos = cfg_.nonrigid_l_pos;
  contact_net_ = make_contact_net(store_, cfg_, seed * 31 + 17);
  correction_ = make_pose_correction(store_, cfg_, ds_.skel.size(), ds_.spec.frames, seed * 31 + 19);

  object_sdf_ = build_sdf_grid(ds_.object_mesh, cfg_.sdf_resolution);
  object_sdf_meta_ = grid_meta_of(object_sdf_);
  object_sdf_values_t_ = sdf_values_tensor(object_sdf_);
  object_tree_ = std::make_unique<WindingTree>(ds_.object_mesh);
  object_bounds_local_ = ds_.object_mesh.bounds();

  // canonical hand SDF from the rest capsules (analytic, watertight source)
  HandPose rest = make_hand_pose(ds_.skel, std::vector<Quat>(ds_.skel.size() - 1, Quat::Identity()),
                                 Quat::Identity(), Vec3::Zero());
  auto rest_world = forward_kinematics(ds_.skel, rest);
  Aabb hand_box = ds_.hand_mesh.bounds();
  double pad = 0.1 * (hand_box.hi - hand_box.lo).norm();
  hand_sdf_grid_ = build_sdf_grid(
      [&](const Vec3& p) { return hand_sdf_posed(p, ds_.skel, ds_.radii, rest_world); },
      hand_box.padded(pad), cfg_.sdf_resolution);
  hand_sdf_ = make_hand_sdf(ds_.skel, ds_.radii, hand_sdf_grid_);

  hand_rest_samples_ = sample_surface_points(ds_.hand_mesh, cfg_.contact_points, seed ^ 0xC0417ACFull);
  hand_skin_weights_ =
      rest_skinning_weights(ds_.skel, ds_.radii, hand_rest_samples_.points);
  object_local_samples_ =
      sample_surface_points(ds_.object_mesh, cfg_.contact_points, seed ^ 0x0B7EC7ull);

  Mat hp(cfg_.contact_points, 3), op(cfg_.contact_points, 3);
  for (int i = 0; i < cfg_.contact_points; ++i) {
    hp.row(i) = hand_rest_samples_.points[i].transpose();
    op.row(i) = object_local_samples_.points[i].transpose();
  }
  hand_rest_points_t_ = ad::constant(std::move(hp));
  object_local_points_t_ = ad::constant(std::move(op));

  scene_box_ = ds_.scene_box.padded(cfg_.scene_pad);

  for (int f = 0; f < ds_.spec.frames; ++f) {
    base_hand_.push_back(round_pose_f32(ds_.skel, ds_.frames[f].hand_init));
    base_object_.push_back(round_pose_f32(ds_.frames[f].object_init));
    targets_.push_back(ContactField{Eigen::VectorXd::Zero(cfg_.contact_points),
                                    Eigen::VectorXd::Zero(cfg_.contact_points)});
  }

  images_.resize(size_t(ds_.spec.cameras) * ds_.spec.frames);
  masks_.resize(images_.size());

  int n_train = std::min<int>(cfg_.views, int(ds_.train_cameras.size()));
  for (int i = 0; i < n_train; ++i) active_train_cameras_.push_back(ds_.train_cameras[i]);
}

const Image& Trainer::image(int camera, int frame) const {
  auto& slot = const_cast<Trainer*>(this)->images_[size_t(camera) * ds_.spec.frames + frame];
  if (slot.empty()) slot = ds_.load_image(camera, frame);
  return slot;
}

const Image& Trainer::mask(int camera, int frame) const {
  auto& slot = const_cast<Trainer*>(this)->masks_[size_t(camera) * ds_.spec.frames + frame];
  if (slot.empty()) slot = ds_.load_mask(camera, frame);
  return slot;
}

GeometricContactInputs Trainer::contact_inputs() const {
  GeometricContactInputs in;
  in.hand_rest_points = hand_rest_points_t_;
  in.hand_weights = hand_skin_weights_;
  in.object_local_points = object_local_points_t_;
  in.object_sdf_meta = object_sdf_meta_;
  in.object_sdf_values = object_sdf_values_t_;
  in.hand_sdf = &hand_sdf_;
  return in;
}

DeformationContext Trainer::make_context(const AdHandPose& hand, const AdObjectPose& object) const {
  return make_deformation_context(ds_.skel, hand, object, wc_,
                                  cfg_.nonrigid ? &nonrigid_ : nullptr, object_sdf_values_t_,
                                  object_sdf_meta_);
}

// ---------------------------------------------------------------------------
// ContactNet supervision

ContactField Trainer::oracle_contact(int frame) const {
  ad::NoGradGuard no_grad;
  AdHandPose hand = to_ad(ds_.frames[frame].hand_gt, false);
  AdObjectPose object = to_ad(ds_.frames[frame].object_gt, false);
  AdFk fk = ad_forward_kinematics(ds_.skel, hand);
  AdContactField f =
      geometric_contact(contact_inputs(), fk, object, cfg_.contact_eps, cfg_.contact_sharpness);
  return {f.hand->val.col(0), f.object->val.col(0)};
}

ContactNetInputs Trainer::contactnet_inputs(const HandPose& hand, const ObjectPose& object) const {
  ad::NoGradGuard no_grad;
  ContactNetInputs in;
  AdHandPose hand_t = to_ad(hand, false);
  AdObjectPose object_t = to_ad(object, false);
  AdFk fk = ad_forward_kinematics(ds_.skel, hand_t);
  Tensor hand_posed = pose_hand_points(hand_rest_points_t_, hand_skin_weights_, fk);
  Tensor object_posed = pose_object_points(object_local_points_t_, object_t);
  in.hand_points = hand_posed->val;
  in.object_points = object_posed->val;

  auto world = forward_kinematics(ds_.skel, hand);
  const int n = cfg_.contact_points;
  in.hand_normals.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    int bone = 0;
    hand_skin_weights_.row(i).maxCoeff(&bone);
    in.hand_normals.row(i) = (world[bone].rotation * hand_rest_samples_.normals[i]).transpose();
  }
  in.object_normals.resize(n, 3);
  for (int i = 0; i < n; ++i)
    in.object_normals.row(i) =
        (object.transform.rotation * object_local_samples_.normals[i]).transpose();

  in.hand_distance.resize(n);
  RigidTransform obj_inv = object.transform.inverse();
  for (int i = 0; i < n; ++i)
    in.hand_distance[i] = signed_distance(obj_inv.apply(Vec3(in.hand_points.row(i))), object_sdf_);
  Tensor d_obj = hand_sdf_query(hand_sdf_, fk, object_posed);
  in.object_distance = d_obj->val.col(0);
  return in;
}

ContactField Trainer::contactnet_targets(const HandPose& hand, const ObjectPose& object) const {
  ad::NoGradGuard no_grad;
  return predict_contact(contact_net_, contactnet_inputs(hand, object));
}

void Trainer::pretrain_contactnet(std::vector<double>* losses) {
  std::vector<ContactField> labels;
  for (int f = 0; f < ds_.spec.frames; ++f) labels.push_back(oracle_contact(f));

  ad::AdamConfig adam;
  adam.lr = 1e-3;
  adam.beta1 = cfg_.beta1;
  adam.beta2 = cfg_.beta2;
  Rng master(cfg_.seed ^ 0x5EED1CEull);
  for (int step = 0; step < cfg_.contactnet_steps; ++step) {
    Rng rng = master.fork(step);
    int frame = int(rng.uniform_index(ds_.spec.frames));
    // alternate the dataset's own noisy init with fresh noise draws
    HandPose hand;
    ObjectPose object;
    if (step % 2 == 0) {
      hand = ds_.frames[frame].hand_init;
      object = ds_.frames[frame].object_init;
    } else {
      const NoiseSpec& ns = ds_.spec.noise;
      std::vector<Quat> omega = ds_.frames[frame].hand_gt.omega;
      for (auto& q : omega) {
        Vec3 axis(rng.normal(), rng.normal(), rng.normal());
        if (axis.norm() < 1e-12) axis = Vec3::UnitX();
        q = Quat(Eigen::AngleAxisd(ns.joint_sigma * rng.normal(), axis.normalized())) * q;
      }
      hand = make_hand_pose(ds_.skel, std::move(omega), ds_.frames[frame].hand_gt.root_rot,
                            ds_.frames[frame].hand_gt.root_trans);
      Vec3 axis(rng.normal(), rng.normal(), rng.normal());
      axis = axis.norm() < 1e-12 ? Vec3::UnitX() : axis.normalized();
      Quat dr(Eigen::AngleAxisd(ns.rotation_sigma * rng.normal(), axis));
      Vec3 dt(rng.normal(), rng.normal(), rng.normal());
      const RigidTransform& gt = ds_.frames[frame].object_gt.transform;
      object = ObjectPose{RigidTransform(dr * gt.rotation,
                                         gt.translation + ns.translation_sigma * dt)};
    }

    ContactNetInputs in = contactnet_inputs(hand, object);
    Vec3 center =
        0.5 * (in.hand_points.colwise().mean() + in.object_points.colwise().mean()).transpose();
    auto pack = [&](const Mat& pts, const Mat& normals, const Eigen::VectorXd& dist) {
      Mat m(pts.rows(), 7);
      m.leftCols(3) = pts.rowwise() - center.transpose();
      m.middleCols(3, 3) = normals;
      m.col(6) = dist;
      return m;
    };
    Tensor f_h = extract_features(
        contact_net_, ad::constant(pack(in.hand_points, in.hand_normals, in.hand_distance)));
    Tensor f_o = extract_features(
        contact_net_, ad::constant(pack(in.object_points, in.object_normals, in.object_distance)));
    auto [ah, ao] = cross_feature_augment(contact_net_, f_h, f_o);
    Tensor pred_h = predict_contact_head(contact_net_, ah);
    Tensor pred_o = predict_contact_head(contact_net_, ao);
    Tensor loss = ad::add(ad::mse(pred_h, ad::constant(labels[frame].hand)),
                          ad::mse(pred_o, ad::constant(labels[frame].object)));
    if (!std::isfinite(loss->val(0, 0)))
      throw NumericalError("contactnet pretraining produced a non-finite loss");
    if (losses) losses->push_back(loss->val(0, 0));
    store_.zero_grads();
    ad::backward(loss);
    store_.adam_step(adam, {"contact."});
  }
}

DiffOptResult Trainer::run_diffopt(int frame, const HandPose& init, const ObjectPose& object,
                                   const ContactField& target) const {
  (void)frame;
  return diffopt_refine(ds_.skel, init, object, contact_inputs(), target, cfg_);
}

void Trainer::refine_all_frames() {
  if (!cfg_.contact_opt) return;
  for (int f = 0; f < ds_.spec.frames; ++f) {
    ObjectPose corrected = refined_object_pose(f);
    ContactField target = contactnet_targets(ds_.frames[f].hand_init, corrected);
    target.hand = round_vec_f32(target.hand);
    target.object = round_vec_f32(target.object);
    DiffOptResult result = run_diffopt(f, ds_.frames[f].hand_init, corrected, target);
    base_hand_[f] = round_pose_f32(ds_.skel, result.pose);
    targets_[f] = target;
  }
}

// ---------------------------------------------------------------------------
// joint training

Trainer::StepBatch Trainer::prepare_step_batch(int frame, int camera, uint64_t step_seed,
                                               int patch_count, int patch_size,
                                               int samples_per_ray) {
  StepBatch sb;
  sb.patch_count = patch_count;
  sb.patch_size = patch_size;
  PatchSpec spec;
  spec.patches = patch_count;
  spec.size = patch_size;
  spec.dilation = cfg_.mask_dilation;
  RayBatch rays = generate_rays(ds_.cameras[camera], mask(camera, frame), spec, scene_box_,
                                step_seed ^ 0xA11CE5ull);
  Rng jitter(step_seed ^ 0x17E55ull);
  sb.batch = make_sample_batch(rays.rays, samples_per_ray, jitter);
  sb.batch.frame = frame;

  RigidTransform obj_value = refined_object_pose(frame).transform;
  if (cfg_.mesh_guided) {
    RigidTransform inv = obj_value.inverse();
    std::vector<Vec3> local(sb.batch.positions.size());
    for (size_t i = 0; i < sb.batch.positions.size(); ++i)
      local[i] = inv.apply(sb.batch.positions[i]);
    sb.batch.labels = partition_points(local, *object_tree_, object_bounds_local_);
  } else {
    Aabb posed_box = ds_.object_mesh.transformed(obj_value).bounds();
    sb.batch.labels = partition_points_bbox(sb.batch.positions, posed_box);
  }

  for (auto [x0, y0] : rays.patch_origins)
    sb.gt_patches.push_back(image_patch(image(camera, frame), x0, y0, patch_size));
  return sb;
}

Trainer::FrameGraph Trainer::build_losses(int frame, const StepBatch& sb,
                                          const AdHandPose* hand_override) {
  FrameGraph g;
  g.hand_base = hand_override ? *hand_override : to_ad(base_hand_[frame], false);
  g.object_base = to_ad(base_object_[frame], false);

  AdHandPose hand = g.hand_base;
  AdObjectPose object = g.object_base;
  if (cfg_.contact_opt) {
    object = correct_object_pose(correction_, object, frame);
    hand = correct_joint_rotation(correction_, hand, frame);
  }

  DeformationContext ctx = make_context(hand, object);
  FieldOutput out = eval_observation(model_, ctx, sb.batch, frame);
  Tensor rgba = render_rays(out, sb.batch);
  std::vector<Tensor> pred = split_patches(rgba, sb.patch_count, sb.patch_size);
  g.loss_nerf = loss_nerf(pred, sb.gt_patches, sb.patch_size, cfg_.lambda1);

  if (cfg_.contact_opt) {
    AdContactField field = geometric_contact(contact_inputs(), ctx.fk, object, cfg_.contact_eps,
                                             cfg_.contact_sharpness);
    g.loss_con = loss_contact(field.hand, field.object, ad::constant(targets_[frame].hand),
                              ad::constant(targets_[frame].object), cfg_.lambda2);
    g.loss_pen = loss_pen(field.object_distance);
  } else {
    g.loss_con = ad::constant(Mat::Zero(1, 1));
    g.loss_pen = ad::constant(Mat::Zero(1, 1));
  }
  g.loss_total = total_loss(g.loss_nerf, g.loss_con, g.loss_pen, cfg_);
  return g;
}

StepLosses Trainer::train_step() {
  Rng rng = Rng(cfg_.seed ^ 0x57E9ull).fork(step_);
  int frame = int(rng.uniform_index(ds_.spec.frames));
  int camera = active_train_cameras_[rng.uniform_index(active_train_cameras_.size())];
  StepBatch sb = prepare_step_batch(frame, camera, rng.next_u64(), cfg_.patch_count,
                                    cfg_.patch_size, cfg_.samples_per_ray);
  FrameGraph g = build_losses(frame, sb, nullptr);
  StepLosses losses;
  losses.nerf = g.loss_nerf->val(0, 0);
  losses.contact = g.loss_con->val(0, 0);
  losses.pen = g.loss_pen->val(0, 0);
  losses.total = g.loss_total->val(0, 0);
  if (!std::isfinite(losses.total)) {
    std::string term = !std::isfinite(losses.nerf)   ? "loss_nerf"
                       : !std::isfinite(losses.contact) ? "loss_con"
                                                        : "loss_pen";
    throw NumericalError("train_step " + std::to_string(step_) + ": non-finite " + term);
  }
  store_.zero_grads();
  ad::backward(g.loss_total);
  ad::AdamConfig adam;
  adam.lr = cfg_.lr;
  adam.beta1 = cfg_.beta1;
  adam.beta2 = cfg_.beta2;
  // everything but the (frozen, pretrained) ContactNet
  store_.adam_step(adam, {"trunk", "sigma", "color", "psi", "wc.", "nonrigid", "correction"});
  step_ += 1;
  return losses;
}

void Trainer::train(int steps, const std::string& trace_csv_path) {
  std::ofstream csv;
  if (!trace_csv_path.empty()) {
    csv.open(trace_csv_path, step_ == 0 ? std::ios::trunc : std::ios::app);
    if (!csv) throw DataError("cannot write loss trace: " + trace_csv_path);
    if (step_ == 0) csv << "step,loss_nerf,loss_con,loss_pen,total\n";
    csv.precision(17);
  }
  for (int i = 0; i < steps; ++i) {
    int at = step_;
    StepLosses l = train_step();
    if (csv.is_open())
      csv << at << "," << l.nerf << "," << l.contact << "," << l.pen << "," << l.total << "\n";
  }
}

// ---------------------------------------------------------------------------
// pose extraction, rendering, metrics

HandPose Trainer::refined_hand_pose(int frame) const {
  if (!cfg_.contact_opt) return base_hand_[frame];
  ad::NoGradGuard no_grad;
  AdHandPose base = to_ad(base_hand_[frame], false);
  AdHandPose corrected = correct_joint_rotation(correction_, base, frame);
  return from_ad(ds_.skel, corrected);
}

ObjectPose Trainer::refined_object_pose(int frame) const {
  if (!cfg_.contact_opt) return base_object_[frame];
  ad::NoGradGuard no_grad;
  AdObjectPose base = to_ad(base_object_[frame], false);
  return from_ad(correct_object_pose(correction_, base, frame));
}

Image Trainer::render(const Camera& cam, int frame, uint64_t seed) const {
  ad::NoGradGuard no_grad;
  HandPose hand = refined_hand_pose(frame);
  ObjectPose object = refined_object_pose(frame);
  AdHandPose hand_t = to_ad(hand, false);
  AdObjectPose object_t = to_ad(object, false);
  DeformationContext ctx = make_context(hand_t, object_t);
  RigidTransform inv = object.transform.inverse();
  Partitioner partitioner = [&](const std::vector<Vec3>& pts) {
    if (cfg_.mesh_guided) {
      std::vector<Vec3> local(pts.size());
      for (size_t i = 0; i < pts.size(); ++i) local[i] = inv.apply(pts[i]);
      return partition_points(local, *object_tree_, object_bounds_local_);
    }
    Aabb posed_box = ds_.object_mesh.transformed(object.transform).bounds();
    return partition_points_bbox(pts, posed_box);
  };
  return render_image(model_, ctx, cam, scene_box_, frame, cfg_.samples_per_ray, seed,
                      cfg_.render_chunk, partitioner);
}

MetricsReport Trainer::evaluate(bool use_refined_poses, bool render_images) const {
  MetricsReport report;
  double diameter = mesh_diameter(ds_.object_mesh);
  for (int f = 0; f < ds_.spec.frames; ++f) {
    FrameMetrics fm;
    fm.frame = f;
    HandPose hand = use_refined_poses ? refined_hand_pose(f) : ds_.frames[f].hand_init;
    ObjectPose object = use_refined_poses ? refined_object_pose(f) : ds_.frames[f].object_init;
    fm.mpjpe_mm = mpjpe_mm(hand, ds_.frames[f].hand_gt);
    fm.add_pass = add_01d_pass(object, ds_.frames[f].object_gt, ds_.object_mesh, diameter);
    TriangleMesh hand_posed = pose_hand_mesh(ds_.hand_mesh, ds_.skel, ds_.radii, hand);
    TriangleMesh object_posed = ds_.object_mesh.transformed(object.transform);
    fm.iv_cm3 = intersection_volume(hand_posed, object_posed, cfg_.iv_voxel);
    if (render_images && !ds_.eval_cameras.empty()) {
      double p = 0, s = 0;
      for (int cam : ds_.eval_cameras) {
        Image rendered = render(ds_.cameras[cam], f, 0x9E01Dull + f);
        const Image& gt = image(cam, f);
        BBox2i box = foreground_bbox(mask(cam, f), 10);
        if (box.width() < 11 || box.height() < 11) box = BBox2i{0, 0, gt.width, gt.height};
        Image a = crop(rendered, box), b = crop(gt, box);
        p += psnr(a, b);
        s += ssim(a, b);
      }
      fm.psnr = p / ds_.eval_cameras.size();
      fm.ssim = s / ds_.eval_cameras.size();
    }
    report.frames.push_back(fm);
  }
  report.aggregate();
  return report;
}

// ---------------------------------------------------------------------------
// checkpointing

void Trainer::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.put("meta.config", string_to_block(config_to_json(cfg_)));
  Mat step(1, 1);
  step(0, 0) = step_;
  ckpt.put("state.step", step);
  store_to_checkpoint(store_, ckpt);
  for (int f = 0; f < ds_.spec.frames; ++f) {
    ckpt.put("pose.hand." + std::to_string(f), hand_pose_to_row(base_hand_[f]));
    ckpt.put("pose.object." + std::to_string(f), object_pose_to_row(base_object_[f]));
    ckpt.put("target.hand." + std::to_string(f), targets_[f].hand);
    ckpt.put("target.object." + std::to_string(f), targets_[f].object);
  }
  save_checkpoint(path, ckpt);
}

Trainer Trainer::load(const std::string& path, const Dataset& dataset) {
  Checkpoint ckpt = load_checkpoint(path);
  Config cfg = config_from_json(block_to_string(ckpt.require("meta.config")));
  Trainer t(dataset, cfg);
  store_from_checkpoint(t.store_, ckpt);
  t.step_ = int(ckpt.require("state.step")(0, 0));
  for (int f = 0; f < t.ds_.spec.frames; ++f) {
    t.base_hand_[f] = hand_pose_from_row(t.ds_.skel, ckpt.require("pose.hand." + std::to_string(f)));
    t.base_object_[f] = object_pose_from_row(ckpt.require("pose.object." + std::to_string(f)));
    t.targets_[f].hand = ckpt.require("target.hand." + std::to_string(f)).col(0);
    t.targets_[f].object = ckpt.require("target.object." + std::to_string(f)).col(0);
  }
  return t;
}

// ---------------------------------------------------------------------------
// gradient check

std::string GradcheckReport::to_json() const {
  json j;
  j["h"] = h;
  j["max_rel_error"] = max_rel_error;
  json groups_json = json::object();
  for (const auto& g : groups)
    groups_json[g.name] = {{"max_rel_error", g.max_rel_error}, {"coords", g.coords}};
  j["groups"] = groups_json;
  return j.dump(2);
}

GradcheckReport Trainer::gradcheck(int coords_per_group, double h, uint64_t seed) {
  const int frame = ds_.spec.frames - 1;  // strongest contact
  const int camera = active_train_cameras_.empty() ? 0 : active_train_cameras_[0];
  const uint64_t batch_seed = seed ^ 0x6D40Cull;
  const int patch_size = 8, samples = 12;

  StepBatch sb = prepare_step_batch(frame, camera, batch_seed, 1, patch_size, samples);
  AdHandPose pose_leaves = to_ad(base_hand_[frame], /*differentiable=*/true);
  FrameGraph g = build_losses(frame, sb, &pose_leaves);
  store_.zero_grads();
  ad::backward(g.loss_total);

  // collect analytic gradients per group
  struct Coord {
    ad::Tensor tensor;
    double analytic;
  };
  auto tensors_with_prefix = [&](std::initializer_list<const char*> prefixes) {
    std::vector<ad::Tensor> out;
    for (auto& e : store_.entries())
      for (const char* p : prefixes)
        if (e.name.rfind(p, 0) == 0) {
          out.push_back(e.tensor);
          break;
        }
    return out;
  };

  std::vector<std::pair<std::string, std::vector<ad::Tensor>>> groups;
  groups.push_back({"canonical_mlp", tensors_with_prefix({"trunk", "sigma", "color"})});
  groups.push_back({"wc", tensors_with_prefix({"wc."})});
  if (cfg_.nonrigid) groups.push_back({"nonrigid_mlp", tensors_with_prefix({"nonrigid"})});
  groups.push_back({"psi", tensors_with_prefix({"psi"})});
  if (cfg_.contact_opt) {
    groups.push_back({"correction_object", tensors_with_prefix({"correction.object"})});
    groups.push_back({"correction_joint", tensors_with_prefix({"correction.joint"})});
    groups.push_back({"frame_embedding", tensors_with_prefix({"correction.frame_embed"})});
  }
  groups.push_back(
      {"pose", {pose_leaves.omega, pose_leaves.root_rot, pose_leaves.root_trans}});

  // rebuilds share the cached batch and the same pose leaves, so the
  // discrete structure (patches, jitter, labels) is held fixed
  auto eval_loss = [&]() {
    ad::NoGradGuard no_grad;
    FrameGraph r = build_losses(frame, sb, &pose_leaves);
    return r.loss_total->val(0, 0);
  };

  GradcheckReport report;
  report.h = h;
  Rng rng(seed);
  for (auto& [name, tensors] : groups) {
    GradcheckGroup group;
    group.name = name;
    for (int c = 0; c < coords_per_group; ++c) {
      ad::Tensor t = tensors[rng.uniform_index(tensors.size())];
      int r = int(rng.uniform_index(t->val.rows()));
      int col = int(rng.uniform_index(t->val.cols()));
      double analytic = t->grad.size() > 0 ? t->grad(r, col) : 0.0;
      double saved = t->val(r, col);
      t->val(r, col) = saved + h;
      double plus = eval_loss();
      t->val(r, col) = saved - h;
      double minus = eval_loss();
      t->val(r, col) = saved;
      double fd = (plus - minus) / (2 * h);
      double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
      group.max_rel_error = std::max(group.max_rel_error, rel);
      ++group.coords;
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(group);
  }
  return report;
}

}  // namespace ncrf
