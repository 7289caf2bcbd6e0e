#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ncrf/common.hpp"

namespace ncrf::ad {

// Reverse-mode tape over Eigen matrices. Ops build a DAG of shared nodes;
// backward() releases a topological sweep from the root. Matrix-level nodes
// keep the tape small (a training step is a few hundred nodes) while the
// heavy lifting stays inside Eigen kernels.

struct Node {
  Mat val;
  Mat grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;

  explicit Node(Mat v) : val(std::move(v)) {}
};

using Tensor = std::shared_ptr<Node>;

Tensor constant(Mat v);
Tensor leaf(Mat v);  // learnable / differentiable input

// While disabled, ops compute values but record no parents (inference mode).
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  bool saved;
};

void backward(const Tensor& root);  // root must be 1x1
void ensure_grad(Node& n);

// --- arithmetic -------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& v);     // v is 1xC
Tensor rowwise_scale(const Tensor& a, const Tensor& s);  // s is Mx1
Tensor repeat_row(const Tensor& v, int rows);            // v is 1xC

// --- elementwise functions ---------------------------------------------------
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor tanh_f(const Tensor& a);
Tensor exp_f(const Tensor& a);
Tensor abs_f(const Tensor& a);
Tensor square(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor recip(const Tensor& a);
// tanh(x)/x, extended smoothly through 0; used for norm-bounded outputs.
Tensor tanhc(const Tensor& a);
// cos(x/2) and sin(x/2)/x (smooth through 0): the axis-angle -> quaternion map.
Tensor cos_half(const Tensor& a);
Tensor sinc_half(const Tensor& a);

// --- shape ------------------------------------------------------------------
Tensor transpose(const Tensor& a);
Tensor hcat(const std::vector<Tensor>& parts);
Tensor vcat(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int c0, int n);
Tensor slice_rows(const Tensor& a, int r0, int n);
Tensor gather_rows(const Tensor& a, std::vector<int> rows);

// --- reductions -------------------------------------------------------------
Tensor sum(const Tensor& a);   // 1x1
Tensor mean(const Tensor& a);  // 1x1
Tensor sum_cols(const Tensor& a);  // Mx1, sums each row
Tensor softmax_rows(const Tensor& a);
Tensor max_rows(const Tensor& a);  // 1xC column-wise max over rows
// sqrt(|row|^2 + eps^2): smooth everywhere, Mx1.
Tensor rowwise_norm(const Tensor& a, double eps = 1e-12);

// --- losses -----------------------------------------------------------------
Tensor mse(const Tensor& a, const Tensor& b);
Tensor l1(const Tensor& a, const Tensor& b);

// --- geometry-flavored ops ----------------------------------------------------
// Quaternions are rows [w,x,y,z].
Tensor quat_normalize(const Tensor& q);
Tensor quat_conjugate(const Tensor& q);
// Hamilton product; either argument may have one row (broadcast).
Tensor quat_mul(const Tensor& a, const Tensor& b);
// Rotate points (Mx3) by quaternions (1x4 or Mx4). Quaternions must be unit.
Tensor quat_rotate(const Tensor& q, const Tensor& p);

// NeRF positional encoding: [p, sin(2^0 pi p), cos(2^0 pi p), ...], Mx(3+6L).
Tensor posenc(const Tensor& p, int frequencies);

// Metadata for grid-sampling ops.
struct GridMeta {
  Vec3 origin = Vec3::Zero();
  double voxel = 0;
  std::array<int, 3> resolution{0, 0, 0};
  int channels = 1;  // values laid out [x-fastest voxel index, channel]
};

// Trilinear sample of a (possibly learnable) voxel grid at M points.
// grid is (nx*ny*nz) x C, points Mx3; queries clamp to the box. When
// add_clamp_distance is set the clamp offset is added to every channel
// (signed-distance semantics outside the grid).
Tensor grid_sample(const Tensor& grid, const GridMeta& meta, const Tensor& points,
                   bool add_clamp_distance = false);

// C1 fade from 1 (interior) to 0 (boundary) over `band` voxels, Mx1.
Tensor grid_fade(const GridMeta& meta, const Tensor& points, double band = 2.0);

// Unsigned distance from points to a fixed capsule minus its radius, Mx1.
Tensor capsule_distance(const Tensor& points, const Vec3& a, const Vec3& b, double radius);

// Volume rendering of per-sample sigma (Sx1) and rgb (Sx3) with fixed segment
// lengths; rays are contiguous runs of `samples_per_ray`. Returns Rx4 as
// [r, g, b, opacity].
Tensor volume_render(const Tensor& sigma, const Tensor& rgb, const Eigen::VectorXd& delta,
                     int samples_per_ray);

// --- optimizer ----------------------------------------------------------------
struct AdamState {
  Mat m, v;
  int step = 0;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update; afterwards value and moments are rounded to f32 so that
// checkpoints (stored as f32) round-trip bitwise.
void adam_step(Node& param, AdamState& state, const AdamConfig& cfg);

void round_to_f32(Mat& m);

}  // namespace ncrf::ad
