#include "ncrf/sampling.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace ncrf {

using nlohmann::json;

void Camera::validate() const {
  if (fx <= 0 || fy <= 0) throw DataError("camera: focal lengths must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw DataError("camera: principal point outside sensor");
}

Vec3 Camera::pixel_direction(double u, double v) const {
  Vec3 cam_dir((u - cx) / fx, (v - cy) / fy, 1.0);
  return (world_to_camera.rotation.conjugate() * cam_dir).normalized();
}

std::string camera_to_json(const Camera& cam) {
  const Quat& q = cam.world_to_camera.rotation;
  const Vec3& t = cam.world_to_camera.translation;
  return json{{"fx", cam.fx},
              {"fy", cam.fy},
              {"cx", cam.cx},
              {"cy", cam.cy},
              {"width", cam.width},
              {"height", cam.height},
              {"world_to_camera",
               {{"rotation", {q.w(), q.x(), q.y(), q.z()}},
                {"translation", {t.x(), t.y(), t.z()}}}}}
      .dump(2);
}

Camera camera_from_json(const std::string& text) {
  json j = json::parse(text);
  Camera cam;
  cam.fx = j.at("fx");
  cam.fy = j.at("fy");
  cam.cx = j.at("cx");
  cam.cy = j.at("cy");
  cam.width = j.at("width");
  cam.height = j.at("height");
  auto& w2c = j.at("world_to_camera");
  auto& r = w2c.at("rotation");
  auto& t = w2c.at("translation");
  cam.world_to_camera =
      RigidTransform(Quat(r[0], r[1], r[2], r[3]), Vec3(t[0], t[1], t[2]));
  cam.validate();
  return cam;
}

void intersect_scene_box(Ray& ray, const Aabb& box) {
  double t0 = 0, t1 = 1e30;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(ray.direction[k]) < 1e-15) {
      if (ray.origin[k] < box.lo[k] || ray.origin[k] > box.hi[k]) {
        ray.degenerate = true;
        return;
      }
      continue;
    }
    double inv = 1.0 / ray.direction[k];
    double a = (box.lo[k] - ray.origin[k]) * inv;
    double b = (box.hi[k] - ray.origin[k]) * inv;
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  if (t1 <= std::max(t0, 0.0)) {
    ray.degenerate = true;
    return;
  }
  ray.near = std::max(t0, 1e-6);
  ray.far = t1;
  ray.degenerate = false;
}

RayBatch generate_rays(const Camera& cam, const Image& mask, const PatchSpec& spec,
                       const Aabb& scene_box, uint64_t seed) {
  if (mask.width != cam.width || mask.height != cam.height)
    throw DataError("generate_rays: mask resolution differs from camera");
  bool any = false;
  for (double v : mask.data)
    if (v > 0.5) {
      any = true;
      break;
    }
  if (!any) throw DataError("no foreground");

  Image dilated = dilate(mask, spec.dilation);
  const int s = spec.size;
  const int half = s / 2;
  std::vector<std::pair<int, int>> candidates;
  for (int y = half; y + (s - half) <= mask.height; ++y)
    for (int x = half; x + (s - half) <= mask.width; ++x)
      if (dilated.at(x, y, 0) > 0.5) candidates.emplace_back(x, y);
  if (candidates.empty()) throw DataError("generate_rays: image too small for patch size");

  Rng rng(seed);
  RayBatch batch;
  batch.patch_size = s;
  Vec3 origin = cam.center();
  for (int p = 0; p < spec.patches; ++p) {
    auto [cx_pix, cy_pix] = candidates[rng.uniform_index(candidates.size())];
    int x0 = cx_pix - half;
    int y0 = cy_pix - half;
    batch.patch_origins.emplace_back(x0, y0);
    for (int dy = 0; dy < s; ++dy)
      for (int dx = 0; dx < s; ++dx) {
        Ray ray;
        ray.px = x0 + dx;
        ray.py = y0 + dy;
        ray.origin = origin;
        ray.direction = cam.pixel_direction(ray.px, ray.py);
        intersect_scene_box(ray, scene_box);
        batch.rays.push_back(ray);
      }
  }
  return batch;
}

StratifiedSamples stratified_samples(const Ray& ray, int n, Rng& rng) {
  if (n < 2) throw DataError("stratified_samples: n must be >= 2");
  StratifiedSamples out;
  out.t.resize(n);
  out.delta.resize(n);
  const double step = (ray.far - ray.near) / n;
  for (int i = 0; i < n; ++i) out.t[i] = ray.near + (i + rng.uniform()) * step;
  for (int i = 0; i + 1 < n; ++i) out.delta[i] = out.t[i + 1] - out.t[i];
  out.delta[n - 1] = ray.far - out.t[n - 1];
  return out;
}

StratifiedSamples stratified_samples(const Ray& ray, int n, uint64_t seed) {
  Rng rng(seed);
  return stratified_samples(ray, n, rng);
}

std::vector<PointLabel> partition_points(const std::vector<Vec3>& points,
                                         const WindingTree& object_tree,
                                         const Aabb& object_bounds) {
  std::vector<PointLabel> labels(points.size(), PointLabel::kHand);
  for (size_t i = 0; i < points.size(); ++i) {
    if (!object_bounds.contains(points[i])) continue;
    if (point_in_mesh(points[i], object_tree) <= 0) labels[i] = PointLabel::kObject;
  }
  return labels;
}

std::vector<PointLabel> partition_points_bbox(const std::vector<Vec3>& points,
                                              const Aabb& object_bounds) {
  std::vector<PointLabel> labels(points.size(), PointLabel::kHand);
  for (size_t i = 0; i < points.size(); ++i)
    if (object_bounds.contains(points[i])) labels[i] = PointLabel::kObject;
  return labels;
}

SampleBatch make_sample_batch(const std::vector<Ray>& rays, int samples_per_ray, Rng& rng) {
  SampleBatch batch;
  batch.samples_per_ray = samples_per_ray;
  batch.n_rays = int(rays.size());
  batch.positions.reserve(rays.size() * samples_per_ray);
  batch.deltas.resize(rays.size() * samples_per_ray);
  batch.directions.reserve(rays.size());
  for (size_t r = 0; r < rays.size(); ++r) {
    batch.directions.push_back(rays[r].direction);
    if (rays[r].degenerate) {
      // keep the layout rectangular; zero-length segments render to nothing
      for (int i = 0; i < samples_per_ray; ++i) {
        batch.positions.push_back(rays[r].origin);
        batch.deltas[r * samples_per_ray + i] = 0.0;
      }
      continue;
    }
    StratifiedSamples s = stratified_samples(rays[r], samples_per_ray, rng);
    for (int i = 0; i < samples_per_ray; ++i) {
      batch.positions.push_back(rays[r].origin + s.t[i] * rays[r].direction);
      batch.deltas[r * samples_per_ray + i] = s.delta[i];
    }
  }
  batch.labels.assign(batch.positions.size(), PointLabel::kHand);
  return batch;
}

}  // namespace ncrf
