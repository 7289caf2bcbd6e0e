#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncrf/geometry.hpp"
#include "ncrf/image.hpp"
#include "ncrf/rng.hpp"

namespace ncrf {

struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;  // pixels
  int width = 0, height = 0;
  RigidTransform world_to_camera;

  void validate() const;
  Vec3 center() const { return world_to_camera.inverse().translation; }
  // Continuous pixel coordinates; (cx, cy) maps to the optical axis.
  Vec3 pixel_direction(double u, double v) const;
};

std::string camera_to_json(const Camera& cam);
Camera camera_from_json(const std::string& text);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double near = 0, far = 0;
  int px = 0, py = 0;
  bool degenerate = false;  // misses the scene box
};

struct PatchSpec {
  int patches = 4;
  int size = 32;
  int dilation = 16;  // px, square structuring element
};

struct RayBatch {
  std::vector<Ray> rays;             // patch-major, row-major within a patch
  std::vector<std::pair<int, int>> patch_origins;  // top-left pixel per patch
  int patch_size = 0;
};

// Slab intersection against the scene box; flags the ray degenerate on miss.
void intersect_scene_box(Ray& ray, const Aabb& scene_box);

// Samples P SxS patches whose centers lie in the mask dilated by
// `spec.dilation`, then casts rays through all covered pixels.
RayBatch generate_rays(const Camera& cam, const Image& mask, const PatchSpec& spec,
                       const Aabb& scene_box, uint64_t seed);

// One uniform jitter per equal sub-interval of [near, far]. Returns n depths;
// deltas[i] = t[i+1] - t[i] with the last delta reaching `far`.
struct StratifiedSamples {
  std::vector<double> t;
  std::vector<double> delta;
};
StratifiedSamples stratified_samples(const Ray& ray, int n, Rng& rng);
StratifiedSamples stratified_samples(const Ray& ray, int n, uint64_t seed);

enum class PointLabel : uint8_t { kHand = 0, kObject = 1 };

// Eq.-style membership: object iff inside the posed object mesh; every other
// sample is a hand candidate.
std::vector<PointLabel> partition_points(const std::vector<Vec3>& points,
                                         const WindingTree& object_tree, const Aabb& object_bounds);

// Bounding-box fallback used by the mesh-guided-sampling ablation.
std::vector<PointLabel> partition_points_bbox(const std::vector<Vec3>& points,
                                              const Aabb& object_bounds);

// Per-ray stratified samples for a whole batch, flattened ray-major.
struct SampleBatch {
  std::vector<Vec3> positions;
  Eigen::VectorXd deltas;
  std::vector<PointLabel> labels;
  std::vector<Vec3> directions;  // per ray
  int samples_per_ray = 0;
  int n_rays = 0;
  int frame = 0;
};

// Labels default to hand; callers partition afterwards against the posed
// object mesh.
SampleBatch make_sample_batch(const std::vector<Ray>& rays, int samples_per_ray, Rng& rng);

}  // namespace ncrf
