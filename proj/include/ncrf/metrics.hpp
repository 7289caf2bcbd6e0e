#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ncrf/image.hpp"
#include "ncrf/kinematics.hpp"

namespace ncrf {

// 10*log10(1/MSE) for values in [0,1]; identical images cap at 99 dB.
double psnr(const Image& a, const Image& b);

// Mean local SSIM on Rec.601 luma, 11x11 Gaussian window sigma=1.5,
// C1=0.01^2, C2=0.03^2, valid-region convention.
double ssim(const Image& a, const Image& b);

// Mean per-joint position error in millimeters, no alignment.
double mpjpe_mm(const HandPose& pred, const HandPose& gt);

double mesh_diameter(const TriangleMesh& mesh);  // max pairwise vertex distance

// Mean object-vertex error under the two poses, compared to 0.1 * diameter
// (boundary passes).
bool add_01d_pass(const ObjectPose& pred, const ObjectPose& gt, const TriangleMesh& mesh,
                  double diameter);

struct FrameMetrics {
  int frame = 0;
  std::optional<double> psnr;
  std::optional<double> ssim;
  double mpjpe_mm = 0;
  double iv_cm3 = 0;
  bool add_pass = false;
};

struct MetricsReport {
  std::vector<FrameMetrics> frames;
  double mean_psnr = 0;
  double mean_ssim = 0;
  double mean_mpjpe_mm = 0;
  double mean_iv_cm3 = 0;
  double add_01d_percent = 0;

  void aggregate();
  std::string to_json() const;
  std::string to_csv() const;
};

}  // namespace ncrf
