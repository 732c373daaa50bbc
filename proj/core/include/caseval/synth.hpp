#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caseval/ego_flow.hpp"
#include "caseval/label_map.hpp"
#include "caseval/manifest.hpp"

namespace caseval {

struct SceneSpec {
  int width = 128;
  int height = 128;
  int min_objects = 2;
  int max_objects = 6;
  double moving_fraction = 0.6;
  // Prediction quality knobs. Targets are plain mask IoU.
  double min_target_iou = 0.55;
  double max_target_iou = 0.95;
  double low_target_fraction = 0.2;  // targets drawn from [0.15, 0.45] instead
  double drop_fraction = 0.1;        // gt objects with no prediction at all
  double spurious_fraction = 0.15;   // extra predictions with no gt object
  bool perfect = false;              // predictions byte-identical to gt
};

struct SynthObject {
  std::uint32_t panoptic_id = 0;
  std::uint32_t ca_id = 0;  // 0 for static objects (absent from CA maps)
  std::uint32_t category = 0;
  bool moving = false;
  bool spurious = false;  // present only in prediction maps
  bool dropped = false;   // present only in gt maps
  double motion_u = 0.0;
  double motion_v = 0.0;
  double depth = 0.0;
  double target_iou = 1.0;
  double achieved_iou = 0.0;  // plain mask IoU, gt vs painted prediction
};

// A fully consistent miniature scene: panoptic + class-agnostic label maps
// for gt and prediction, a depth map, and an observed flow field equal to
// the camera-induced flow plus each moving object's motion vector.
struct SynthScene {
  std::uint64_t seed = 0;
  LabelMap panoptic_gt;
  LabelMap panoptic_pred;
  LabelMap ca_gt;
  LabelMap ca_pred;
  DepthMap depth;
  FlowField flow;
  CameraIntrinsics intrinsics;
  PoseSE3 pose;
  CategoryTable categories;
  std::vector<SynthObject> objects;
};

// Deterministic per seed. Every non-dropped object's prediction mask is
// perturbed to reach its target IoU within +-0.02 (shift then per-pixel
// search). Throws std::runtime_error when a target is unachievable.
SynthScene generate_scene(std::uint64_t seed, const SceneSpec& spec);

// Writes the scene's six image files under dir with the frame id as prefix
// and returns the matching manifest frame record.
Frame write_scene(const std::string& dir, const std::string& frame_id,
                  const std::string& split, const SynthScene& scene);

}  // namespace caseval
