#pragma once

#include <vector>

#include "ncrf/ad.hpp"
#include "ncrf/config.hpp"
#include "ncrf/image.hpp"
#include "ncrf/sdf.hpp"

namespace ncrf {

// Photometric loss over rendered patches: a gradient-pyramid L1 term (the
// documented perceptual stand-in) plus lambda1 * MSE. Patches are SxS
// row-major rgb rows.
ad::Tensor loss_nerf(const std::vector<ad::Tensor>& pred_patches,
                     const std::vector<Mat>& gt_patches, int patch_size, double lambda1);

// Per-side mean absolute error, hand side weighted by lambda2.
ad::Tensor loss_contact(const ad::Tensor& g_hand, const ad::Tensor& g_object,
                        const ad::Tensor& target_hand, const ad::Tensor& target_object,
                        double lambda2);

// Sum of penetration depths: relu(-sdf) summed over the sampled points.
ad::Tensor loss_pen(const ad::Tensor& sdf_values);

// Plain variant over a fixed grid (identity hand pose).
double loss_pen(const std::vector<Vec3>& points, const SdfGrid& hand_grid);

ad::Tensor total_loss(const ad::Tensor& nerf, const ad::Tensor& contact, const ad::Tensor& pen,
                      const Config& cfg);

// Extracts SxS rgb patch rows from a rendered ray block (Rx4, patch-major).
std::vector<ad::Tensor> split_patches(const ad::Tensor& rgba, int n_patches, int patch_size);

// Ground-truth patch pixels as S*S x 3 matrices.
Mat image_patch(const Image& img, int x0, int y0, int size);

}  // namespace ncrf
