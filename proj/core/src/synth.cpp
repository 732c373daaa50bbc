#include "caseval/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace caseval {

namespace {

// Explicit draws keep scenes byte-identical across standard libraries.
std::uint64_t draw_int(std::mt19937_64& rng, std::uint64_t lo, std::uint64_t hi) {
  return lo + rng() % (hi - lo + 1);
}

double draw_real(std::mt19937_64& rng, double a, double b) {
  return a + (b - a) * ((rng() >> 11) * 0x1.0p-53);
}

bool draw_bool(std::mt19937_64& rng, double p_true) {
  return draw_real(rng, 0.0, 1.0) < p_true;
}

using PixelSet = std::vector<std::uint32_t>;  // sorted linear indices

PixelSet make_shape(bool ellipse, int x0, int y0, int w, int h, int canvas_w) {
  PixelSet px;
  const double cx = x0 + (w - 1) / 2.0;
  const double cy = y0 + (h - 1) / 2.0;
  const double rx = w / 2.0;
  const double ry = h / 2.0;
  for (int y = y0; y < y0 + h; ++y) {
    for (int x = x0; x < x0 + w; ++x) {
      if (ellipse) {
        const double dx = (x - cx) / rx;
        const double dy = (y - cy) / ry;
        if (dx * dx + dy * dy > 1.0) continue;
      }
      px.push_back(static_cast<std::uint32_t>(y) * canvas_w + x);
    }
  }
  return px;
}

double plain_iou(const PixelSet& a, const PixelSet& b) {
  // Both sorted.
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

PixelSet shift_set(const PixelSet& s, int dx, int dy, int canvas_w, int canvas_h) {
  PixelSet out;
  out.reserve(s.size());
  for (std::uint32_t idx : s) {
    const int x = static_cast<int>(idx % canvas_w) + dx;
    const int y = static_cast<int>(idx / canvas_w) + dy;
    if (x < 0 || y < 0 || x >= canvas_w || y >= canvas_h) continue;
    out.push_back(static_cast<std::uint32_t>(y) * canvas_w + x);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Perturbs a copy of was gt mask to reach the target plain IoU within
// +-0.015: an integer shift first, then single-pixel moves that keep the
// mask inside the shifted footprint plus the gt region.
PixelSet perturb_to_target(const PixelSet& gt, double target, std::mt19937_64& rng,
                           int canvas_w, int canvas_h) {
  constexpr double kTol = 0.015;
  if (gt.size() < 36) {
    throw std::runtime_error("perturb_to_target: object too small for target IoU");
  }
  if (target >= 0.995) return gt;

  // Largest displacement (up to 3 px) that still brackets the target from above.
  const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  const auto& dir = dirs[draw_int(rng, 0, 3)];
  PixelSet pred = gt;
  for (int mag = 3; mag >= 1; --mag) {
    PixelSet cand = shift_set(gt, dir[0] * mag, dir[1] * mag, canvas_w, canvas_h);
    if (plain_iou(cand, gt) >= target - kTol) {
      pred = std::move(cand);
      break;
    }
  }

  std::unordered_set<std::uint32_t> pred_set(pred.begin(), pred.end());
  std::unordered_set<std::uint32_t> gt_set(gt.begin(), gt.end());
  std::uint64_t inter = 0;
  for (std::uint32_t p : pred) inter += gt_set.count(p);

  auto iou_now = [&]() {
    const std::uint64_t uni = pred_set.size() + gt.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
  };

  // Move cursors over the deterministic pixel orders.
  std::size_t gt_cursor = 0;    // for re-adding gt pixels
  std::size_t rm_cursor = 0;    // for removing pred pixels
  PixelSet pred_order = pred;   // sorted snapshot for removal order

  for (std::size_t iter = 0; iter < 8 * gt.size() + 64; ++iter) {
    const double v = iou_now();
    if (std::abs(v - target) <= kTol) {
      PixelSet out(pred_set.begin(), pred_set.end());
      std::sort(out.begin(), out.end());
      return out;
    }
    if (v > target) {
      // Remove an intersection pixel: IoU falls, union unchanged.
      bool removed = false;
      while (rm_cursor < pred_order.size()) {
        const std::uint32_t p = pred_order[rm_cursor++];
        if (pred_set.count(p) && gt_set.count(p)) {
          if (pred_set.size() <= 1) break;
          pred_set.erase(p);
          --inter;
          removed = true;
          break;
        }
      }
      if (!removed) break;
    } else {
      // Raise IoU: drop a prediction-only pixel, else re-add a gt pixel.
      bool done = false;
      while (rm_cursor < pred_order.size()) {
        const std::uint32_t p = pred_order[rm_cursor++];
        if (pred_set.count(p) && !gt_set.count(p)) {
          pred_set.erase(p);
          done = true;
          break;
        }
      }
      if (!done) {
        while (gt_cursor < gt.size()) {
          const std::uint32_t p = gt[gt_cursor++];
          if (!pred_set.count(p)) {
            pred_set.insert(p);
            ++inter;
            done = true;
            break;
          }
        }
      }
      if (!done) break;
    }
  }
  throw std::runtime_error("perturb_to_target: could not reach target IoU " +
                           std::to_string(target));
}

void paint(LabelMap& m, const PixelSet& px, std::uint32_t id) {
  for (std::uint32_t idx : px) {
    if (m.ids[idx] != kVoidId && m.ids[idx] != id && m.ids[idx] >= kPanopticIdBase) {
      throw std::logic_error("synth: prediction masks collided while painting");
    }
    m.ids[idx] = id;
  }
}

PoseSE3 random_small_pose(std::mt19937_64& rng) {
  const double ax = draw_real(rng, -0.008, 0.008);
  const double ay = draw_real(rng, -0.008, 0.008);
  const double az = draw_real(rng, -0.008, 0.008);
  Eigen::Matrix3d rx, ry, rz;
  rx << 1, 0, 0, 0, std::cos(ax), -std::sin(ax), 0, std::sin(ax), std::cos(ax);
  ry << std::cos(ay), 0, std::sin(ay), 0, 1, 0, -std::sin(ay), 0, std::cos(ay);
  rz << std::cos(az), -std::sin(az), 0, std::sin(az), std::cos(az), 0, 0, 0, 1;
  PoseSE3 pose;
  pose.rotation = rz * ry * rx;
  pose.translation = Eigen::Vector3d(draw_real(rng, -0.3, 0.3),
                                     draw_real(rng, -0.2, 0.2),
                                     draw_real(rng, -0.3, 0.3));
  return pose;
}

constexpr std::uint32_t kSkyCategory = 1;
constexpr std::uint32_t kGroundCategory = 2;
const std::uint32_t kThingCategories[3] = {10, 11, 12};

}  // namespace

SynthScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  if (spec.width < 32 || spec.height < 32) {
    throw std::invalid_argument("generate_scene: canvas must be at least 32x32");
  }
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

  SynthScene scene;
  scene.seed = seed;
  scene.intrinsics = {0.8 * std::max(spec.width, spec.height),
                      0.8 * std::max(spec.width, spec.height),
                      spec.width / 2.0, spec.height / 2.0};
  scene.pose = random_small_pose(rng);
  scene.categories.entries = {
      {kSkyCategory, "sky", false},
      {kGroundCategory, "ground", false},
      {kThingCategories[0], "box", true},
      {kThingCategories[1], "disc", true},
      {kThingCategories[2], "blob", true},
  };

  const int w = spec.width, h = spec.height;
  scene.panoptic_gt = LabelMap(w, h);
  scene.panoptic_pred = LabelMap(w, h);
  scene.ca_gt = LabelMap(w, h);
  scene.ca_pred = LabelMap(w, h);
  scene.depth = DepthMap(w, h);

  // Stuff background: sky above the horizon, ground below.
  const int horizon = static_cast<int>(h * draw_real(rng, 0.3, 0.5));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      scene.panoptic_gt.at(x, y) = y < horizon ? kSkyCategory : kGroundCategory;
    }
  }
  int pred_horizon = horizon;
  if (!spec.perfect) {
    pred_horizon = std::clamp(horizon + static_cast<int>(draw_int(rng, 0, 4)) - 2,
                              1, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      scene.panoptic_pred.at(x, y) =
          y < pred_horizon ? kSkyCategory : kGroundCategory;
    }
  }

  const double background_depth = draw_real(rng, 20.0, 60.0);
  std::fill(scene.depth.z.begin(), scene.depth.z.end(), background_depth);
  std::fill(scene.depth.valid.begin(), scene.depth.valid.end(), std::uint8_t{1});

  // Jittered grid placement keeps masks (and their <=3 px shifts) disjoint.
  const int cell = std::clamp(std::min(w, h) / 4, 16, 96);
  const int nx = w / cell, ny = h / cell;
  std::vector<int> cells(static_cast<std::size_t>(nx) * ny);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
    std::swap(cells[i], cells[i + draw_int(rng, 0, cells.size() - 1 - i)]);
  }

  const int max_gt = std::min<int>(spec.max_objects, static_cast<int>(cells.size()));
  const int min_gt = std::min(spec.min_objects, max_gt);
  const int n_gt = static_cast<int>(draw_int(rng, min_gt, max_gt));
  int n_spurious = spec.perfect
                       ? 0
                       : std::min<int>(static_cast<int>(cells.size()) - n_gt,
                                       static_cast<int>(std::lround(
                                           spec.spurious_fraction * n_gt)));

  std::vector<PixelSet> gt_masks, pred_masks;
  std::uint32_t next_ca_id = 1;
  std::uint32_t next_pred_ca_id = 1;
  std::array<std::uint32_t, 3> instance_counter = {0, 0, 0};

  for (int i = 0; i < n_gt + n_spurious; ++i) {
    const int c = cells[i];
    const int cx0 = (c % nx) * cell, cy0 = (c / nx) * cell;
    const int ow = static_cast<int>(draw_int(rng, 7, cell - 6));
    const int oh = static_cast<int>(draw_int(rng, 7, cell - 6));
    const int slack_x = cell - 6 - ow, slack_y = cell - 6 - oh;
    const int x0 = cx0 + 3 + (slack_x > 0 ? static_cast<int>(draw_int(rng, 0, slack_x)) : 0);
    const int y0 = cy0 + 3 + (slack_y > 0 ? static_cast<int>(draw_int(rng, 0, slack_y)) : 0);
    const bool ellipse = draw_bool(rng, 0.5);
    PixelSet mask = make_shape(ellipse, x0, y0, ow, oh, w);
    if (mask.size() < 36) {
      // Ellipses can thin out; fall back to the full rectangle.
      mask = make_shape(false, x0, y0, ow, oh, w);
    }

    SynthObject obj;
    const int cat_pick = static_cast<int>(draw_int(rng, 0, 2));
    obj.category = kThingCategories[cat_pick];
    obj.spurious = i >= n_gt;
    obj.moving = obj.spurious ? true : draw_bool(rng, spec.moving_fraction);
    obj.depth = draw_real(rng, 5.0, 15.0);
    if (obj.moving) {
      const double mag_u = draw_real(rng, 2.0, 5.0);
      const double mag_v = draw_real(rng, 2.0, 5.0);
      obj.motion_u = draw_bool(rng, 0.5) ? mag_u : -mag_u;
      obj.motion_v = draw_bool(rng, 0.5) ? mag_v : -mag_v;
    }

    if (spec.perfect) {
      obj.target_iou = 1.0;
    } else if (!obj.spurious && draw_bool(rng, spec.drop_fraction)) {
      obj.dropped = true;
    } else if (draw_bool(rng, spec.low_target_fraction)) {
      obj.target_iou = draw_real(rng, 0.15, 0.45);
    } else {
      obj.target_iou = draw_real(rng, spec.min_target_iou, spec.max_target_iou);
    }

    if (obj.spurious) {
      // Prediction-only object: fresh ids, no gt footprint.
      obj.panoptic_id = make_panoptic_id(obj.category, 500 + instance_counter[cat_pick]++);
      obj.ca_id = next_pred_ca_id++;
      PixelSet pred = spec.perfect ? mask
                                   : perturb_to_target(mask, obj.target_iou, rng, w, h);
      paint(scene.panoptic_pred, pred, obj.panoptic_id);
      paint(scene.ca_pred, pred, obj.ca_id);
      gt_masks.push_back({});
      pred_masks.push_back(std::move(pred));
      scene.objects.push_back(obj);
      continue;
    }

    obj.panoptic_id = make_panoptic_id(obj.category, ++instance_counter[cat_pick]);
    paint(scene.panoptic_gt, mask, obj.panoptic_id);
    for (std::uint32_t idx : mask) scene.depth.z[idx] = obj.depth;
    if (obj.moving) {
      obj.ca_id = next_ca_id;
      ++next_ca_id;
      ++next_pred_ca_id;
      paint(scene.ca_gt, mask, obj.ca_id);
    }

    if (!obj.dropped) {
      PixelSet pred =
          spec.perfect ? mask : perturb_to_target(mask, obj.target_iou, rng, w, h);
      paint(scene.panoptic_pred, pred, obj.panoptic_id);
      if (obj.moving) paint(scene.ca_pred, pred, obj.ca_id);
      pred_masks.push_back(pred);
    } else {
      pred_masks.push_back({});
    }
    gt_masks.push_back(std::move(mask));
    scene.objects.push_back(obj);
  }

  // Observed flow: camera-induced flow plus object motion on moving pixels.
  scene.flow = compute_ego_flow(scene.depth, scene.intrinsics, scene.pose);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SynthObject& obj = scene.objects[i];
    if (obj.spurious || !obj.moving) continue;
    for (std::uint32_t idx : gt_masks[i]) {
      scene.flow.u[idx] += obj.motion_u;
      scene.flow.v[idx] += obj.motion_v;
    }
  }

  // Record achieved IoUs from the final painted masks.
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    SynthObject& obj = scene.objects[i];
    if (obj.spurious || obj.dropped) continue;
    obj.achieved_iou = plain_iou(gt_masks[i], pred_masks[i]);
    if (std::abs(obj.achieved_iou - obj.target_iou) > 0.02) {
      throw std::logic_error("generate_scene: achieved IoU drifted from target");
    }
  }
  return scene;
}

Frame write_scene(const std::string& dir, const std::string& frame_id,
                  const std::string& split, const SynthScene& scene) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto file = [&](const char* suffix) { return frame_id + std::string(suffix); };
  write_label_png((fs::path(dir) / file("_panoptic_gt.png")).string(), scene.panoptic_gt);
  write_label_png((fs::path(dir) / file("_panoptic_pred.png")).string(), scene.panoptic_pred);
  write_label_png((fs::path(dir) / file("_ca_gt.png")).string(), scene.ca_gt);
  write_label_png((fs::path(dir) / file("_ca_pred.png")).string(), scene.ca_pred);
  write_depth_png((fs::path(dir) / file("_depth.png")).string(), scene.depth);
  write_flow_png((fs::path(dir) / file("_flow.png")).string(), scene.flow);

  Frame frame;
  frame.id = frame_id;
  frame.split = split;
  frame.paths.panoptic_gt = file("_panoptic_gt.png");
  frame.paths.panoptic_pred = file("_panoptic_pred.png");
  frame.paths.ca_gt = file("_ca_gt.png");
  frame.paths.ca_pred = file("_ca_pred.png");
  frame.paths.depth = file("_depth.png");
  frame.paths.flow = file("_flow.png");
  frame.intrinsics = scene.intrinsics;
  frame.pose_to_next = scene.pose;
  std::map<std::uint32_t, bool> motion;
  for (const auto& obj : scene.objects) {
    if (!obj.spurious) motion[obj.panoptic_id] = obj.moving;
  }
  frame.motion = std::move(motion);
  return frame;
}

}  // namespace caseval
