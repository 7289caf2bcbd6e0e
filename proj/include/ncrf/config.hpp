#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ncrf {

// Every tunable constant of the pipeline; the JSON config file may override
// any field. Defaults are the documented conventions.
struct Config {
  // geometry
  int sdf_resolution = 64;
  double iv_voxel = 1e-3;  // meters

  // canonical blend-weight grid
  int wc_resolution = 32;
  double wc_pad = 0.03;

  // radiance model
  int trunk_depth = 8;
  int trunk_width = 256;
  int skip_layer = 4;
  int color_width = 128;
  int l_pos = 10;
  int l_dir = 4;
  int psi_dim = 8;

  // non-rigid field
  bool nonrigid = true;
  double nonrigid_tau = 5e-3;
  double nonrigid_max_offset = 0.01;
  int nonrigid_l_pos = 4;
  std::vector<int> nonrigid_hidden = {64, 64};

  // ray sampling
  int samples_per_ray = 64;
  int patch_count = 4;
  int patch_size = 32;
  int mask_dilation = 16;
  double scene_pad = 0.05;  // meters around hand+object boxes
  bool mesh_guided = true;

  // contact optimization
  bool contact_opt = true;
  int contact_points = 1024;
  int feature_dim = 128;
  double contact_eps = 2e-3;
  double contact_sharpness = 2e-3;
  double delta_t_bound = 0.05;
  double delta_omega_bound = 0.5;
  int frame_embed_dim = 16;
  int diffopt_iters = 100;
  double diffopt_lr = 1e-2;
  int contactnet_steps = 5000;
  std::vector<int> contact_hidden = {64, 64};

  // losses (paper weights)
  double lambda1 = 0.2;
  double lambda2 = 3.0;
  double lambda_nerf = 1.0;
  double lambda_con = 0.5;
  double lambda_pen = 0.5;

  // training
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int train_steps = 30000;
  int views = 3;
  uint64_t seed = 1;
  int checkpoint_every = 0;  // 0 = only at the end
  int render_chunk = 1024;   // rays per inference chunk
};

Config config_from_json(const std::string& text);
std::string config_to_json(const Config& cfg);
Config load_config(const std::string& path);

}  // namespace ncrf
