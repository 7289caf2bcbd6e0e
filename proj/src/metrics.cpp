#include "ncrf/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

namespace ncrf {

using nlohmann::json;

double psnr(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw DataError("psnr: image shapes differ");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= double(a.data.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a_in, const Image& b_in) {
  if (a_in.width != b_in.width || a_in.height != b_in.height)
    throw DataError("ssim: image shapes differ");
  Image a = to_gray(a_in);
  Image b = to_gray(b_in);
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  if (a.width < kWin || a.height < kWin) throw DataError("ssim: image smaller than the window");

  double kernel[kWin][kWin];
  double total = 0;
  for (int y = 0; y < kWin; ++y)
    for (int x = 0; x < kWin; ++x) {
      double dx = x - kWin / 2, dy = y - kWin / 2;
      kernel[y][x] = std::exp(-(dx * dx + dy * dy) / (2 * kSigma * kSigma));
      total += kernel[y][x];
    }
  for (auto& row : kernel)
    for (double& w : row) w /= total;

  double acc = 0;
  long count = 0;
  for (int y = 0; y + kWin <= a.height; ++y)
    for (int x = 0; x + kWin <= a.width; ++x) {
      double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
      for (int wy = 0; wy < kWin; ++wy)
        for (int wx = 0; wx < kWin; ++wx) {
          double w = kernel[wy][wx];
          double va = a.at(x + wx, y + wy, 0);
          double vb = b.at(x + wx, y + wy, 0);
          mu_a += w * va;
          mu_b += w * vb;
          aa += w * va * va;
          bb += w * vb * vb;
          ab += w * va * vb;
        }
      double var_a = aa - mu_a * mu_a;
      double var_b = bb - mu_b * mu_b;
      double cov = ab - mu_a * mu_b;
      double v = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                 ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      acc += v;
      ++count;
    }
  return acc / count;
}

double mpjpe_mm(const HandPose& pred, const HandPose& gt) {
  if (pred.joints.size() != gt.joints.size() || pred.joints.empty())
    throw DataError("mpjpe: joint count mismatch");
  double acc = 0;
  for (size_t i = 0; i < pred.joints.size(); ++i) acc += (pred.joints[i] - gt.joints[i]).norm();
  return 1000.0 * acc / double(pred.joints.size());
}

double mesh_diameter(const TriangleMesh& mesh) {
  double best = 0;
  for (size_t i = 0; i < mesh.vertices.size(); ++i)
    for (size_t j = i + 1; j < mesh.vertices.size(); ++j)
      best = std::max(best, (mesh.vertices[i] - mesh.vertices[j]).squaredNorm());
  return std::sqrt(best);
}

bool add_01d_pass(const ObjectPose& pred, const ObjectPose& gt, const TriangleMesh& mesh,
                  double diameter) {
  double acc = 0;
  for (const auto& v : mesh.vertices)
    acc += (pred.transform.apply(v) - gt.transform.apply(v)).norm();
  acc /= double(mesh.vertices.size());
  return acc <= 0.1 * diameter;
}

void MetricsReport::aggregate() {
  mean_psnr = mean_ssim = mean_mpjpe_mm = mean_iv_cm3 = 0;
  int n_img = 0, n_add = 0;
  for (const auto& f : frames) {
    if (f.psnr) {
      mean_psnr += *f.psnr;
      mean_ssim += *f.ssim;
      ++n_img;
    }
    mean_mpjpe_mm += f.mpjpe_mm;
    mean_iv_cm3 += f.iv_cm3;
    n_add += f.add_pass ? 1 : 0;
  }
  if (n_img > 0) {
    mean_psnr /= n_img;
    mean_ssim /= n_img;
  }
  if (!frames.empty()) {
    mean_mpjpe_mm /= double(frames.size());
    mean_iv_cm3 /= double(frames.size());
    add_01d_percent = 100.0 * n_add / double(frames.size());
  }
}

std::string MetricsReport::to_json() const {
  json j;
  j["aggregate"] = {{"psnr", mean_psnr},
                    {"ssim", mean_ssim},
                    {"mpjpe_mm", mean_mpjpe_mm},
                    {"iv_cm3", mean_iv_cm3},
                    {"add_01d_percent", add_01d_percent}};
  json fl = json::array();
  for (const auto& f : frames) {
    json e;
    e["frame"] = f.frame;
    if (f.psnr) e["psnr"] = *f.psnr;
    if (f.ssim) e["ssim"] = *f.ssim;
    e["mpjpe_mm"] = f.mpjpe_mm;
    e["iv_cm3"] = f.iv_cm3;
    e["add_pass"] = f.add_pass;
    fl.push_back(e);
  }
  j["frames"] = fl;
  return j.dump(2);
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out << "frame,psnr,ssim,mpjpe_mm,iv_cm3,add_pass\n";
  for (const auto& f : frames) {
    out << f.frame << "," << (f.psnr ? std::to_string(*f.psnr) : "") << ","
        << (f.ssim ? std::to_string(*f.ssim) : "") << "," << f.mpjpe_mm << "," << f.iv_cm3 << ","
        << (f.add_pass ? 1 : 0) << "\n";
  }
  out << "aggregate," << mean_psnr << "," << mean_ssim << "," << mean_mpjpe_mm << ","
      << mean_iv_cm3 << "," << add_01d_percent << "\n";
  return out.str();
}

}  // namespace ncrf
