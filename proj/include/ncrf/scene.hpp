#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ncrf/image.hpp"
#include "ncrf/kinematics.hpp"
#include "ncrf/sampling.hpp"
#include "ncrf/sdf.hpp"

namespace ncrf {

struct ObjectSpec {
  std::string primitive = "sphere";  // sphere | box | cylinder
  double radius = 0.03;              // sphere/cylinder
  double height = 0.06;              // cylinder
  Vec3 half_extents = Vec3(0.025, 0.025, 0.025);  // box
  Vec3 center = Vec3(0.115, 0.0, -0.045);         // world position (object pose translation)
};

struct NoiseSpec {
  double joint_sigma = 0.0;        // rad, per-joint axis-angle
  double translation_sigma = 0.0;  // m, object
  double rotation_sigma = 0.0;     // rad, object
};

struct SceneSpec {
  int frames = 20;
  int cameras = 4;
  int train_cameras = 3;  // the rest are held out
  int image_size = 128;
  double focal_scale = 1.3;       // fx = focal_scale * image_size
  double camera_distance = 0.4;   // m
  double camera_elevation = 0.45; // rad
  double capsule_radius = 0.008;
  double hand_march_resolution = 0.002;
  ObjectSpec object;
  NoiseSpec noise;
  // soft-tissue bulge near contact, included in rendered images
  double bulge_amplitude = 0.002;
  double bulge_width = 0.004;
  double touch_clearance = 5e-4;  // capsule-to-surface gap at full grasp

  void validate() const;  // throws DataError listing every bad field
};

std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const std::string& text);

// Stylized 16-bone hand: root + five 3-bone fingers, palm along +x, curling
// towards -z.
Skeleton make_hand_skeleton();
std::vector<double> hand_capsule_radii(const Skeleton& skel, double finger_radius);

// Analytic posed-hand SDF (union of capsules).
double hand_sdf_posed(const Vec3& p, const Skeleton& skel, const std::vector<double>& radii,
                      const std::vector<RigidTransform>& world);

double object_sdf_local(const Vec3& p_local, const ObjectSpec& obj);

TriangleMesh make_object_mesh(const ObjectSpec& obj);  // object-local frame

// Marching tetrahedra over an SDF; watertight, outward oriented.
TriangleMesh march_sdf(const std::function<double(const Vec3&)>& sdf, const Aabb& bounds,
                       double resolution, const std::string& id);

// LBS-posed copy of the canonical hand mesh (capsule-softmax skin weights).
TriangleMesh pose_hand_mesh(const TriangleMesh& canonical, const Skeleton& skel,
                            const std::vector<double>& radii, const HandPose& pose);

struct FramePoses {
  HandPose hand_gt, hand_init;
  ObjectPose object_gt, object_init;
};

struct SceneData {
  SceneSpec spec;
  Skeleton skel;
  std::vector<double> radii;
  std::vector<Camera> cameras;
  std::vector<FramePoses> frames;
  Aabb scene_box;  // hand+object bounds padded
};

// GT trajectory: fingers flex linearly from open until each touches the
// object, object static; deterministic in the seed (noise only).
SceneData make_scene_data(const SceneSpec& spec, uint64_t seed);

// Analytic ray-traced render of the posed scene; bitwise-stable.
Image oracle_render(const SceneData& scene, int camera, int frame);
Image oracle_mask(const SceneData& scene, int camera, int frame);

// Writes the on-disk dataset layout (scene.json, images/, masks/, meshes/).
void build_scene(const SceneSpec& spec, const std::string& out_dir, uint64_t seed);

struct Dataset {
  std::string root;
  SceneSpec spec;
  Skeleton skel;
  std::vector<double> radii;
  std::vector<Camera> cameras;
  std::vector<int> train_cameras, eval_cameras;
  std::vector<FramePoses> frames;
  TriangleMesh hand_mesh;    // canonical
  TriangleMesh object_mesh;  // object-local
  Aabb scene_box;

  Image load_image(int camera, int frame) const;
  Image load_mask(int camera, int frame) const;
  std::string image_path(int camera, int frame) const;
  std::string mask_path(int camera, int frame) const;
};

Dataset load_dataset(const std::string& dir);

}  // namespace ncrf
