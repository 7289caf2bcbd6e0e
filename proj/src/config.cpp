#include "ncrf/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

#include "ncrf/common.hpp"

namespace ncrf {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Config config_from_json(const std::string& text) {
  json j = json::parse(text);
  Config c;
  maybe(j, "sdf_resolution", c.sdf_resolution);
  maybe(j, "iv_voxel", c.iv_voxel);
  maybe(j, "wc_resolution", c.wc_resolution);
  maybe(j, "wc_pad", c.wc_pad);
  maybe(j, "trunk_depth", c.trunk_depth);
  maybe(j, "trunk_width", c.trunk_width);
  maybe(j, "skip_layer", c.skip_layer);
  maybe(j, "color_width", c.color_width);
  maybe(j, "l_pos", c.l_pos);
  maybe(j, "l_dir", c.l_dir);
  maybe(j, "psi_dim", c.psi_dim);
  maybe(j, "nonrigid", c.nonrigid);
  maybe(j, "nonrigid_tau", c.nonrigid_tau);
  maybe(j, "nonrigid_max_offset", c.nonrigid_max_offset);
  maybe(j, "nonrigid_l_pos", c.nonrigid_l_pos);
  maybe(j, "nonrigid_hidden", c.nonrigid_hidden);
  maybe(j, "samples_per_ray", c.samples_per_ray);
  maybe(j, "patch_count", c.patch_count);
  maybe(j, "patch_size", c.patch_size);
  maybe(j, "mask_dilation", c.mask_dilation);
  maybe(j, "scene_pad", c.scene_pad);
  maybe(j, "mesh_guided", c.mesh_guided);
  maybe(j, "contact_opt", c.contact_opt);
  maybe(j, "contact_points", c.contact_points);
  maybe(j, "feature_dim", c.feature_dim);
  maybe(j, "contact_eps", c.contact_eps);
  maybe(j, "contact_sharpness", c.contact_sharpness);
  maybe(j, "delta_t_bound", c.delta_t_bound);
  maybe(j, "delta_omega_bound", c.delta_omega_bound);
  maybe(j, "frame_embed_dim", c.frame_embed_dim);
  maybe(j, "diffopt_iters", c.diffopt_iters);
  maybe(j, "diffopt_lr", c.diffopt_lr);
  maybe(j, "contactnet_steps", c.contactnet_steps);
  maybe(j, "contact_hidden", c.contact_hidden);
  maybe(j, "lambda1", c.lambda1);
  maybe(j, "lambda2", c.lambda2);
  maybe(j, "lambda_nerf", c.lambda_nerf);
  maybe(j, "lambda_con", c.lambda_con);
  maybe(j, "lambda_pen", c.lambda_pen);
  maybe(j, "lr", c.lr);
  maybe(j, "beta1", c.beta1);
  maybe(j, "beta2", c.beta2);
  maybe(j, "train_steps", c.train_steps);
  maybe(j, "views", c.views);
  maybe(j, "seed", c.seed);
  maybe(j, "checkpoint_every", c.checkpoint_every);
  maybe(j, "render_chunk", c.render_chunk);
  return c;
}

std::string config_to_json(const Config& c) {
  json j;
  j["sdf_resolution"] = c.sdf_resolution;
  j["iv_voxel"] = c.iv_voxel;
  j["wc_resolution"] = c.wc_resolution;
  j["wc_pad"] = c.wc_pad;
  j["trunk_depth"] = c.trunk_depth;
  j["trunk_width"] = c.trunk_width;
  j["skip_layer"] = c.skip_layer;
  j["color_width"] = c.color_width;
  j["l_pos"] = c.l_pos;
  j["l_dir"] = c.l_dir;
  j["psi_dim"] = c.psi_dim;
  j["nonrigid"] = c.nonrigid;
  j["nonrigid_tau"] = c.nonrigid_tau;
  j["nonrigid_max_offset"] = c.nonrigid_max_offset;
  j["nonrigid_l_pos"] = c.nonrigid_l_pos;
  j["nonrigid_hidden"] = c.nonrigid_hidden;
  j["samples_per_ray"] = c.samples_per_ray;
  j["patch_count"] = c.patch_count;
  j["patch_size"] = c.patch_size;
  j["mask_dilation"] = c.mask_dilation;
  j["scene_pad"] = c.scene_pad;
  j["mesh_guided"] = c.mesh_guided;
  j["contact_opt"] = c.contact_opt;
  j["contact_points"] = c.contact_points;
  j["feature_dim"] = c.feature_dim;
  j["contact_eps"] = c.contact_eps;
  j["contact_sharpness"] = c.contact_sharpness;
  j["delta_t_bound"] = c.delta_t_bound;
  j["delta_omega_bound"] = c.delta_omega_bound;
  j["frame_embed_dim"] = c.frame_embed_dim;
  j["diffopt_iters"] = c.diffopt_iters;
  j["diffopt_lr"] = c.diffopt_lr;
  j["contactnet_steps"] = c.contactnet_steps;
  j["contact_hidden"] = c.contact_hidden;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["lambda_nerf"] = c.lambda_nerf;
  j["lambda_con"] = c.lambda_con;
  j["lambda_pen"] = c.lambda_pen;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["train_steps"] = c.train_steps;
  j["views"] = c.views;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["render_chunk"] = c.render_chunk;
  return j.dump(2);
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace ncrf
