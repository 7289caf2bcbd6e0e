#include "ncrf/losses.hpp"

#include <cmath>

namespace ncrf {

using ad::Tensor;

namespace {

struct GradIndices {
  std::vector<int> xa, xb, ya, yb;
};

GradIndices gradient_indices(int s) {
  GradIndices g;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x + 1 < s; ++x) {
      g.xa.push_back(y * s + x);
      g.xb.push_back(y * s + x + 1);
    }
  for (int y = 0; y + 1 < s; ++y)
    for (int x = 0; x < s; ++x) {
      g.ya.push_back(y * s + x);
      g.yb.push_back((y + 1) * s + x);
    }
  return g;
}

Tensor downsample_patch(const Tensor& patch, int s) {
  using namespace ad;
  const int h = s / 2;
  std::vector<int> i00, i10, i01, i11;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < h; ++x) {
      i00.push_back((2 * y) * s + 2 * x);
      i10.push_back((2 * y) * s + 2 * x + 1);
      i01.push_back((2 * y + 1) * s + 2 * x);
      i11.push_back((2 * y + 1) * s + 2 * x + 1);
    }
  Tensor sum = add(add(gather_rows(patch, i00), gather_rows(patch, i10)),
                   add(gather_rows(patch, i01), gather_rows(patch, i11)));
  return scale(sum, 0.25);
}

// mean L1 between the finite-difference gradients of two patches
Tensor gradient_l1(const Tensor& pred, const Tensor& gt, int s) {
  using namespace ad;
  GradIndices g = gradient_indices(s);
  Tensor dx_p = sub(gather_rows(pred, g.xb), gather_rows(pred, g.xa));
  Tensor dx_g = sub(gather_rows(gt, g.xb), gather_rows(gt, g.xa));
  Tensor dy_p = sub(gather_rows(pred, g.yb), gather_rows(pred, g.ya));
  Tensor dy_g = sub(gather_rows(gt, g.yb), gather_rows(gt, g.ya));
  return scale(add(l1(dx_p, dx_g), l1(dy_p, dy_g)), 0.5);
}

}  // namespace

ad::Tensor loss_nerf(const std::vector<ad::Tensor>& pred_patches,
                     const std::vector<Mat>& gt_patches, int patch_size, double lambda1) {
  using namespace ad;
  if (pred_patches.size() != gt_patches.size() || pred_patches.empty())
    throw DataError("loss_nerf: patch count mismatch");
  Tensor perc, mse_term;
  for (size_t p = 0; p < pred_patches.size(); ++p) {
    const Tensor& pred = pred_patches[p];
    if (pred->val.rows() != patch_size * patch_size || pred->val.cols() != 3 ||
        gt_patches[p].rows() != pred->val.rows())
      throw DataError("loss_nerf: patch shape mismatch");
    Tensor gt = constant(gt_patches[p]);
    // two pyramid scales: native and 2x downsampled
    Tensor scale0 = gradient_l1(pred, gt, patch_size);
    Tensor scale1 = gradient_l1(downsample_patch(pred, patch_size),
                                downsample_patch(gt, patch_size), patch_size / 2);
    Tensor patch_perc = scale(add(scale0, scale1), 0.5);
    Tensor patch_mse = mse(pred, gt);
    perc = p == 0 ? patch_perc : add(perc, patch_perc);
    mse_term = p == 0 ? patch_mse : add(mse_term, patch_mse);
  }
  double inv = 1.0 / double(pred_patches.size());
  return add(scale(perc, inv), scale(mse_term, lambda1 * inv));
}

ad::Tensor loss_contact(const ad::Tensor& g_hand, const ad::Tensor& g_object,
                        const ad::Tensor& target_hand, const ad::Tensor& target_object,
                        double lambda2) {
  using namespace ad;
  if (g_hand->val.rows() != target_hand->val.rows() ||
      g_object->val.rows() != target_object->val.rows())
    throw DataError("loss_contact: point count mismatch");
  return add(l1(g_object, target_object), scale(l1(g_hand, target_hand), lambda2));
}

ad::Tensor loss_pen(const ad::Tensor& sdf_values) {
  return ad::sum(ad::relu(ad::neg(sdf_values)));
}

double loss_pen(const std::vector<Vec3>& points, const SdfGrid& hand_grid) {
  double total = 0;
  for (const auto& p : points) total += std::max(0.0, -signed_distance(p, hand_grid));
  return total;
}

ad::Tensor total_loss(const ad::Tensor& nerf, const ad::Tensor& contact, const ad::Tensor& pen,
                      const Config& cfg) {
  using namespace ad;
  return add(add(scale(nerf, cfg.lambda_nerf), scale(contact, cfg.lambda_con)),
             scale(pen, cfg.lambda_pen));
}

std::vector<ad::Tensor> split_patches(const ad::Tensor& rgba, int n_patches, int patch_size) {
  using namespace ad;
  std::vector<Tensor> out;
  const int rows = patch_size * patch_size;
  for (int p = 0; p < n_patches; ++p)
    out.push_back(slice_cols(slice_rows(rgba, p * rows, rows), 0, 3));
  return out;
}

Mat image_patch(const Image& img, int x0, int y0, int size) {
  Mat out(size * size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) out(y * size + x, c) = img.at(x0 + x, y0 + y, c);
  return out;
}

}  // namespace ncrf
